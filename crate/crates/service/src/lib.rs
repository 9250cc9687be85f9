//! Scoring and decision-recording service for committee meetings.
//!
//! A meeting is a session: the committee fixes an adjustment rate, the
//! service scores every case once, and verdicts are appended to the
//! session's log as they are made. Agreement between committee and model is
//! computed from the decided cases on every read.

pub mod api;
pub mod error;
pub mod service;
pub mod session;
pub mod store;

pub use api::{router, serve};
pub use error::{ServiceError, ServiceResult};
pub use service::{Service, ServiceConfig};
