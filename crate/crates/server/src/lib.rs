//! HTTP service for elicitation sessions, pattern browsing and matching
//! feedback.

pub mod app;
pub mod error;
pub mod session;

pub use app::{router, serve, AppState, ServerConfig};
pub use error::ApiError;
pub use session::{Session, SessionState};
