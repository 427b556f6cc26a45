//! HTTP/JSON gateway: sensor ingestion, record finalization, chain-checked
//! requests and one-time fetches.

pub mod config;
pub mod error;
pub mod http;
pub mod service;
pub mod vitals;

pub use config::Config;
pub use error::{ErrorBody, GatewayError};
pub use service::{Caller, Fetched, Finalized, Gateway, GatewayOptions, Granted, NewParticipant, Session};
pub use vitals::{SensorReading, VitalSign};
