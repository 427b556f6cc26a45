use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use ehrguard::edge::EdgeError;
use ehrguard::lang::ParseError;
use ehrguard::ledger::LedgerError;
use ehrguard::pdp::Decision;
use serde::Serialize;
use thiserror::Error;

/// Shown to a participant whose chain request was refused.
pub const NOT_ALLOWED: &str = "this request is not allowed";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("missing or unknown session")]
    Unauthenticated,
    #[error("{0}")]
    Forbidden(String),
    #[error("readings may only be submitted for your own record")]
    WrongPatient,
    #[error("{0}")]
    BadParameter(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("no pending readings to finalize")]
    EmptyDocument,
    #[error("policy rejected at {}:{}: {}", .0.line, .0.column, .0.message)]
    PolicyRejected(ParseError),
    #[error("{NOT_ALLOWED}")]
    NotAuthorized { event_id: Option<String> },
    #[error("participant {participant_id} is blacklisted")]
    Blacklisted {
        participant_id: String,
        event_id: Option<String>,
    },
    #[error("unknown patient {0:?}")]
    UnknownPatient(String),
    #[error("unknown participant {0:?}")]
    UnknownParticipant(String),
    #[error("patient {0:?} has no EHR on record")]
    NoRecord(String),
    #[error("{0}")]
    Conflict(String),
    #[error("this link is no longer valid")]
    TokenGone,
    #[error("access denied by the record's policy ({})", .0.value)]
    AccessDenied(Decision),
    #[error("stored payload is missing")]
    PayloadMissing,
    #[error("ledger: {0}")]
    Ledger(LedgerError),
    #[error("edge node: {0}")]
    Edge(EdgeError),
}

impl GatewayError {
    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::Unauthenticated => "Unauthenticated",
            GatewayError::Forbidden(_) => "Forbidden",
            GatewayError::WrongPatient => "WrongPatient",
            GatewayError::BadParameter(_) => "BadParameter",
            GatewayError::BadRequest(_) => "BadRequest",
            GatewayError::EmptyDocument => "EmptyDocument",
            GatewayError::PolicyRejected(_) => "PolicyRejected",
            GatewayError::NotAuthorized { .. } => "NotAuthorized",
            GatewayError::Blacklisted { .. } => "Blacklisted",
            GatewayError::UnknownPatient(_) => "UnknownPatient",
            GatewayError::UnknownParticipant(_) => "UnknownParticipant",
            GatewayError::NoRecord(_) => "NoRecord",
            GatewayError::Conflict(_) => "Conflict",
            GatewayError::TokenGone => "TokenGone",
            GatewayError::AccessDenied(_) => "AccessDenied",
            GatewayError::PayloadMissing => "PayloadMissing",
            GatewayError::Ledger(_) => "LedgerError",
            GatewayError::Edge(_) => "EdgeError",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            GatewayError::Unauthenticated => StatusCode::UNAUTHORIZED,
            GatewayError::Forbidden(_)
            | GatewayError::WrongPatient
            | GatewayError::NotAuthorized { .. }
            | GatewayError::Blacklisted { .. }
            | GatewayError::AccessDenied(_) => StatusCode::FORBIDDEN,
            GatewayError::BadParameter(_) | GatewayError::BadRequest(_) => StatusCode::BAD_REQUEST,
            GatewayError::PolicyRejected(_) => StatusCode::UNPROCESSABLE_ENTITY,
            GatewayError::EmptyDocument | GatewayError::Conflict(_) => StatusCode::CONFLICT,
            GatewayError::UnknownPatient(_) | GatewayError::UnknownParticipant(_) | GatewayError::NoRecord(_) => {
                StatusCode::NOT_FOUND
            }
            GatewayError::TokenGone => StatusCode::GONE,
            GatewayError::PayloadMissing | GatewayError::Ledger(_) | GatewayError::Edge(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        }
    }

    /// The chain event a refusal was logged under, if any.
    pub fn event_id(&self) -> Option<&str> {
        match self {
            GatewayError::NotAuthorized { event_id } | GatewayError::Blacklisted { event_id, .. } => {
                event_id.as_deref()
            }
            _ => None,
        }
    }

    pub fn body(&self) -> ErrorBody {
        let (line, column) = match self {
            GatewayError::PolicyRejected(e) => (Some(e.line), Some(e.column)),
            _ => (None, None),
        };
        ErrorBody {
            code: self.code().to_string(),
            message: self.to_string(),
            event_id: self.event_id().map(str::to_string),
            line,
            column,
        }
    }
}

/// `{code, message}` plus whatever location data the error carries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<u32>,
}

impl IntoResponse for GatewayError {
    fn into_response(self) -> Response {
        (self.status(), Json(self.body())).into_response()
    }
}

impl From<LedgerError> for GatewayError {
    fn from(e: LedgerError) -> Self {
        match e {
            LedgerError::NotAuthorized { event_id } => GatewayError::NotAuthorized { event_id },
            LedgerError::Blacklisted {
                participant_id,
                event_id,
            } => GatewayError::Blacklisted {
                participant_id,
                event_id,
            },
            LedgerError::UnknownPatient(p) => GatewayError::UnknownPatient(p),
            LedgerError::UnknownParticipant(p) => GatewayError::UnknownParticipant(p),
            LedgerError::NoAsset(p) => GatewayError::NoRecord(p),
            LedgerError::DuplicateId(_) | LedgerError::DuplicateCredential | LedgerError::DuplicateAsset(_) => {
                GatewayError::Conflict(e.to_string())
            }
            LedgerError::MissingField(_) | LedgerError::InvalidField(_) | LedgerError::NotADoctor(_) => {
                GatewayError::BadRequest(e.to_string())
            }
            other => GatewayError::Ledger(other),
        }
    }
}

impl From<EdgeError> for GatewayError {
    fn from(e: EdgeError) -> Self {
        match e {
            EdgeError::TokenGone => GatewayError::TokenGone,
            EdgeError::AccessDenied(d) => GatewayError::AccessDenied(d),
            EdgeError::PolicyRejected(p) => GatewayError::PolicyRejected(p),
            other => GatewayError::Edge(other),
        }
    }
}
