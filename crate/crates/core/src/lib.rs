//! Knowledge-graph question answering with a human in the loop.

pub mod eval;
pub mod kg;
pub mod llm;
pub mod protocol;
pub mod server;
pub mod sparql;

pub use eval::{AccuracyReport, Category, QuestionRecord, RunRecord};
pub use kg::{EntityRecord, KgBackend, KgError, SparqlResultTable};
pub use llm::{Cassette, CassetteMode, ChatMessage, LlmConfig, LlmError, LlmGateway};
pub use protocol::{Engine, ProtocolError, Session, StateEvent, SubState};
pub use server::{AppConfig, ConfigError, Runtime, SessionSnapshot};
pub use sparql::{ParsedQuery, QueryGraph};
