//! The virtual ring: firmware state machine, polling scheduler, synthetic
//! sensors, flash log, battery and RTC, all on a virtual microsecond clock.

pub mod battery;
pub mod flash;
mod ring;
pub mod rtc;
pub mod scenario;
pub mod sensors;

pub use battery::BatteryState;
pub use flash::{FlashError, FlashStore, LogSegment, FLASH_CAPACITY};
pub use ring::{transition_allowed, Emission, OfflinePlan, Ring, FW_VERSION, TICKS_PER_WINDOW};
pub use rtc::RtcState;
pub use scenario::{ImuTrace, Motion, Scenario, ScenarioError, ScenarioRow, TraceRow};
pub use sensors::{sample_all, Sampled, Sensors};

use thiserror::Error;

use crate::proto::{ErrorCode, Opcode};
use crate::types::RingMode;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RingError {
    #[error("{opcode:?} is not allowed in {mode} mode")]
    InvalidTransition { mode: RingMode, opcode: Opcode },
    #[error("bad argument: {0}")]
    BadArgument(&'static str),
    #[error("no such file {0}")]
    NoSuchFile(u16),
    #[error("device is powered off")]
    PoweredOff,
}

impl RingError {
    /// Code sent back to the host. A powered-off ring sends nothing.
    pub fn code(&self) -> Option<ErrorCode> {
        match self {
            RingError::InvalidTransition { .. } => Some(ErrorCode::InvalidTransition),
            RingError::BadArgument(_) => Some(ErrorCode::BadArgument),
            RingError::NoSuchFile(_) => Some(ErrorCode::NoSuchFile),
            RingError::PoweredOff => None,
        }
    }
}
