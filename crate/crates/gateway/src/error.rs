use axum::http::StatusCode;
use thiserror::Error;

use ringlab_core::hostkit::HostError;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error(transparent)]
    Host(#[from] HostError),
    #[error("client `{0}` does not hold the operator role")]
    NotOperator(String),
    #[error("operator role is held by `{0}`")]
    OperatorHeld(String),
    #[error("X-Client-Id header required")]
    MissingClientId,
    #[error("no session for {0}")]
    NoSession(String),
    #[error("a session is already running on {0}")]
    SessionActive(String),
    #[error("no offline schedule for {0}")]
    NoSchedule(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("internal: {0}")]
    Internal(String),
}

impl ApiError {
    pub fn code(&self) -> &'static str {
        match self {
            ApiError::Host(e) => e.code(),
            ApiError::NotOperator(_) => "NotOperator",
            ApiError::OperatorHeld(_) => "OperatorHeld",
            ApiError::MissingClientId => "MissingClientId",
            ApiError::NoSession(_) => "NoSession",
            ApiError::SessionActive(_) => "SessionActive",
            ApiError::NoSchedule(_) => "NoSchedule",
            ApiError::BadRequest(_) => "BadRequest",
            ApiError::Internal(_) => "Internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self.code() {
            "BadRequest" | "BadArgument" | "MissingClientId" => StatusCode::BAD_REQUEST,
            "NotOperator" => StatusCode::FORBIDDEN,
            "UnknownDevice" | "NoSuchFile" | "NoSession" | "NoSchedule" => StatusCode::NOT_FOUND,
            "OperatorHeld" | "SessionActive" | "AlreadyConnected" | "NotConnected" | "InvalidTransition"
            | "FlashFull" => StatusCode::CONFLICT,
            "CrcMismatch" | "Malformed" | "Codec" => StatusCode::UNPROCESSABLE_ENTITY,
            "Timeout" => StatusCode::GATEWAY_TIMEOUT,
            "Disconnected" | "UnexpectedReply" | "NotConverged" => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}
