//! Message envelope and error codes shared by every endpoint.

use serde::{Deserialize, Serialize};

use ringlab_core::Mac;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Kind {
    DeviceList,
    Dashboard,
    CalibReport,
    RenderFrame,
    HrUpdate,
    AnnotationAck,
    OfflineStatus,
    FileList,
    FetchProgress,
    Error,
    /// Session started, stopped or exported.
    Session,
    /// Unsolicited device event.
    Event,
}

impl Kind {
    /// Kinds a lagging client may lose. Each one is superseded by the next.
    pub fn droppable(self) -> bool {
        matches!(self, Kind::RenderFrame | Kind::FetchProgress)
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::DeviceList => "DeviceList",
            Kind::Dashboard => "Dashboard",
            Kind::CalibReport => "CalibReport",
            Kind::RenderFrame => "RenderFrame",
            Kind::HrUpdate => "HrUpdate",
            Kind::AnnotationAck => "AnnotationAck",
            Kind::OfflineStatus => "OfflineStatus",
            Kind::FileList => "FileList",
            Kind::FetchProgress => "FetchProgress",
            Kind::Error => "Error",
            Kind::Session => "Session",
            Kind::Event => "Event",
        }
    }
}

/// Everything the gateway says, on the stream and in responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiMessage {
    /// Server-wide, strictly increasing.
    pub seq: u64,
    /// Server wall clock, UNIX microseconds.
    pub server_time_us: u64,
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mac: Option<Mac>,
    pub body: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}
