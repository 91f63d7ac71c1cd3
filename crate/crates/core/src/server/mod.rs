//! HTTP service: session lifecycle, event streaming, the execute gate and
//! persistence.

mod config;
mod http;
mod runtime;
mod store;
mod view;

pub use config::{AppConfig, Budgets, ConfigError, KgConfig};
pub use http::{router, serve, start, ApiError, AppState, RunningServer};
pub use runtime::{kg_backend, slug, Runtime};
pub use store::{llm_turns, PersistedSession, SessionStore, StoreError, SCHEMA_VERSION};
pub use view::{Flags, SessionSnapshot};

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("binding {addr}: {message}")]
    Bind { addr: String, message: String },
    #[error("server: {0}")]
    Io(String),
}
