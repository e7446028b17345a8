//! Host acquisition toolkit: discovery, dashboard, clock calibration,
//! online sessions, offline logging and verified retrieval.

mod calibrate;
mod export;
mod hreval;
mod offline;
mod session;

pub use calibrate::{CalibrationIteration, CalibrationReport, CALIB_MAX_ITERATIONS, CALIB_THRESHOLD_US};
pub use export::{export_session, import_session, ExportFormat, SessionMeta, SESSION_FORMAT};
pub use hreval::{
    hr_benchmark, hr_scenarios, pooled_mae, run_hr_trial, HrCondition, HrTrial, HR_EVAL_MAX_BPM, HR_EVAL_MIN_BPM,
    NOISY_SNR_DB,
};
pub use offline::{FetchedFile, OfflinePhase, OfflineSchedule, OfflineStatus, PartialDownload, TransferProgress};
pub use session::{Annotation, Gap, LiveMetrics, Session, SessionUpdate, HR_UPDATE_US};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::proto::{Command, ErrorCode, Message, Response, StatusReport};
use crate::transport::{Advertisement, Exchange, LinkError, Radio};
use crate::types::{Mac, Modality, RingMode, SIM_EPOCH_UNIX_US};

/// Battery level below which the dashboard warns.
pub const WARN_BATTERY_PCT: u8 = 20;

#[derive(Debug, Error)]
pub enum HostError {
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error("device error: {0:?}")]
    Device(ErrorCode),
    #[error("unexpected reply to {0}")]
    UnexpectedReply(&'static str),
    #[error("bad argument: {0}")]
    BadArgument(String),
    #[error("calibration did not converge after {} iterations", .0.iterations.len())]
    NotConverged(Box<CalibrationReport>),
    #[error("file {file_id}: crc mismatch (expected {expected:#010x}, got {actual:#010x})")]
    CrcMismatch { file_id: u16, expected: u32, actual: u32 },
    #[error("file {file_id}: link dropped after {} of {} bytes", .partial.bytes.len(), .partial.entry.size)]
    Interrupted { file_id: u16, partial: Box<PartialDownload> },
    #[error("malformed data: {0}")]
    Malformed(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl HostError {
    /// Stable name used on diagnostic lines and in API error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            HostError::Link(LinkError::UnknownDevice(_)) => "UnknownDevice",
            HostError::Link(LinkError::AlreadyConnected(_)) => "AlreadyConnected",
            HostError::Link(LinkError::NotConnected(_)) => "NotConnected",
            HostError::Link(LinkError::Timeout { .. }) => "Timeout",
            HostError::Link(LinkError::Disconnected { .. }) | HostError::Interrupted { .. } => "Disconnected",
            HostError::Link(LinkError::Rejected(c)) | HostError::Device(c) => match c {
                ErrorCode::InvalidTransition => "InvalidTransition",
                ErrorCode::BadArgument => "BadArgument",
                ErrorCode::NoSuchFile => "NoSuchFile",
                ErrorCode::FlashFull => "FlashFull",
            },
            HostError::Link(LinkError::UnexpectedReply(_)) | HostError::UnexpectedReply(_) => "UnexpectedReply",
            HostError::Link(LinkError::Codec(_)) => "Codec",
            HostError::BadArgument(_) => "BadArgument",
            HostError::NotConverged(_) => "NotConverged",
            HostError::CrcMismatch { .. } => "CrcMismatch",
            HostError::Malformed(_) => "Malformed",
            HostError::Io(_) => "Io",
        }
    }

    /// Corrupted or unparseable data, as opposed to a device or link failure.
    pub fn is_integrity(&self) -> bool {
        matches!(
            self,
            HostError::CrcMismatch { .. } | HostError::Malformed(_) | HostError::Link(LinkError::Codec(_))
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Health {
    Ok,
    Warn,
    Fault,
}

impl Health {
    pub fn from_status(fault_flags: u8, battery_pct: u8) -> Self {
        if fault_flags != 0 {
            Health::Fault
        } else if battery_pct < WARN_BATTERY_PCT {
            Health::Warn
        } else {
            Health::Ok
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorSummary {
    pub modality: Modality,
    pub enabled: bool,
    pub rate_hz: u16,
    pub fault: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dashboard {
    pub mac: Mac,
    pub mode: RingMode,
    pub sensors: Vec<SensorSummary>,
    pub led_codes: [u8; 3],
    pub flash_free: u32,
    pub flash_capacity: u32,
    pub file_count: u16,
    pub battery_pct: u8,
    pub fw_version: String,
    pub health: Health,
}

impl Dashboard {
    pub fn from_status(mac: Mac, s: &StatusReport) -> Self {
        let sensors = Modality::ALL
            .iter()
            .map(|&m| SensorSummary {
                modality: m,
                enabled: s.config.enabled(m),
                rate_hz: s.config.rate(m),
                fault: s.fault_flags & m.presence_bit() != 0,
            })
            .collect();
        Dashboard {
            mac,
            mode: s.mode,
            sensors,
            led_codes: s.config.ppg.led_codes,
            flash_free: s.flash_free(),
            flash_capacity: s.flash_capacity,
            file_count: s.file_count,
            battery_pct: s.battery_pct,
            fw_version: s.fw_version.clone(),
            health: Health::from_status(s.fault_flags, s.battery_pct),
        }
    }
}

/// The host: its radio plus what it has learned about each ring.
#[derive(Debug)]
pub struct Host {
    radio: Radio,
    calibrations: BTreeMap<Mac, CalibrationReport>,
    offline: BTreeMap<Mac, OfflineSchedule>,
}

impl Host {
    pub fn new(radio: Radio) -> Self {
        Host { radio, calibrations: BTreeMap::new(), offline: BTreeMap::new() }
    }

    pub fn radio(&self) -> &Radio {
        &self.radio
    }

    pub fn radio_mut(&mut self) -> &mut Radio {
        &mut self.radio
    }

    /// Host UNIX clock, microseconds. Exact by construction.
    pub fn now_epoch_us(&self) -> u64 {
        SIM_EPOCH_UNIX_US + self.radio.now_us()
    }

    pub fn calibration(&self, mac: Mac) -> Option<&CalibrationReport> {
        self.calibrations.get(&mac)
    }

    /// Nearby rings, strongest signal first. Equal RSSI keeps scan order.
    pub fn discover(&mut self, duration_us: u64) -> Vec<Advertisement> {
        let mut ads = self.radio.scan(duration_us);
        ads.sort_by_key(|a| std::cmp::Reverse(a.rssi));
        ads
    }

    pub fn connect(&mut self, mac: Mac) -> Result<(), HostError> {
        Ok(self.radio.connect(mac)?)
    }

    pub fn disconnect(&mut self, mac: Mac) -> Result<(), HostError> {
        Ok(self.radio.disconnect(mac)?)
    }

    /// One command exchange; device error responses become `HostError::Device`.
    pub fn command(&mut self, mac: Mac, cmd: &Command) -> Result<Exchange, HostError> {
        let ex = self.radio.request(mac, cmd)?;
        match ex.reply {
            Message::Response(Response::Error(code)) => Err(HostError::Device(code)),
            _ => Ok(ex),
        }
    }

    fn expect_ack(&mut self, mac: Mac, cmd: &Command) -> Result<Exchange, HostError> {
        let ex = self.command(mac, cmd)?;
        match ex.reply {
            Message::Response(Response::Ack) => Ok(ex),
            _ => Err(HostError::UnexpectedReply("command expecting an ack")),
        }
    }

    pub fn status(&mut self, mac: Mac) -> Result<StatusReport, HostError> {
        match self.command(mac, &Command::GetStatus)?.reply {
            Message::Response(Response::Status(s)) => Ok(s),
            _ => Err(HostError::UnexpectedReply("GetStatus")),
        }
    }

    pub fn device_info(&mut self, mac: Mac) -> Result<Dashboard, HostError> {
        let s = self.status(mac)?;
        Ok(Dashboard::from_status(mac, &s))
    }
}
