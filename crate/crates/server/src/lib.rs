//! HTTP service and command-line tooling around the sparqlgen pipeline.

pub mod api;
pub mod config;
pub mod providers;
pub mod state;
pub mod turnlog;

pub use api::router;
pub use config::Config;
pub use state::AppState;
