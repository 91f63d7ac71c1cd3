use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use super::config::{AppConfig, ConfigError, KgConfig};
use crate::kg::{
    FailingTransport, FixtureTransport, HttpTransport, KgBackend, StubBackend, Transport,
    WikidataBackend, WikidataEndpoints,
};
use crate::llm::{Cassette, CassetteMode, LlmError, LlmGateway};
use crate::protocol::{Clock, Engine};

/// Everything a session needs, built once from an [`AppConfig`].
pub struct Runtime {
    pub config: AppConfig,
    pub kg: Arc<dyn KgBackend>,
    pub llm: Arc<LlmGateway>,
    pub engine: Arc<Engine>,
}

/// File-name form of a question: lowercase words joined by `-`.
pub fn slug(question: &str) -> String {
    let words: Vec<String> = question
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect();
    let mut out = String::new();
    for w in words {
        if out.len() + w.len() + 1 > 80 {
            break;
        }
        if !out.is_empty() {
            out.push('-');
        }
        out.push_str(&w);
    }
    if out.is_empty() {
        out.push_str("question");
    }
    out
}

/// The knowledge graph a config points at, with fixture record/replay
/// applied for the Wikidata backend.
pub fn kg_backend(config: &AppConfig) -> Result<Arc<dyn KgBackend>, ConfigError> {
    let kg: Arc<dyn KgBackend> = match &config.kg {
        KgConfig::Stub { path } => Arc::new(
            StubBackend::load(path)
                .map_err(|e| ConfigError::Invalid(format!("stub graph: {e}")))?,
        ),
        KgConfig::Wikidata {
            endpoint_url,
            api_url,
        } => {
            let endpoints = WikidataEndpoints {
                api_url: api_url.clone(),
                sparql_url: endpoint_url.clone(),
                ..WikidataEndpoints::default()
            };
            let fixtures = config.fixture_dir.as_ref().map(|d| d.join("kg"));
            let transport: Arc<dyn Transport> = match (config.cassette_mode, fixtures) {
                (CassetteMode::Replay, Some(dir)) => Arc::new(FixtureTransport::replay(dir)),
                (CassetteMode::Record, Some(dir)) => Arc::new(FixtureTransport::record(
                    dir,
                    Arc::new(HttpTransport::new()),
                )),
                _ => Arc::new(HttpTransport::new()),
            };
            Arc::new(WikidataBackend::new(transport, endpoints))
        }
    };
    Ok(kg)
}

impl Runtime {
    pub fn from_config(config: AppConfig) -> Result<Self, ConfigError> {
        let llm_transport: Arc<dyn Transport> = match config.cassette_mode {
            CassetteMode::Replay => Arc::new(FailingTransport::new()),
            _ => Arc::new(HttpTransport::with_limits(4, Duration::from_secs(1))),
        };
        Self::with_llm_transport(config, llm_transport)
    }

    /// As [`Runtime::from_config`] with a caller-supplied chat transport.
    pub fn with_llm_transport(
        config: AppConfig,
        llm_transport: Arc<dyn Transport>,
    ) -> Result<Self, ConfigError> {
        config.validate()?;
        let kg = kg_backend(&config)?;
        let llm = Arc::new(
            LlmGateway::new(llm_transport, config.llm.clone())
                .map_err(|e| ConfigError::Invalid(e.to_string()))?,
        );
        let clock = match config.cassette_mode {
            CassetteMode::Replay => Clock::Logical { epoch_ms: 0 },
            _ => Clock::System,
        };
        let engine = Engine::new(kg.clone(), llm.clone(), config.protocol_config())
            .map_err(|e| ConfigError::Invalid(e.to_string()))?
            .with_clock(clock);
        Ok(Self {
            config,
            kg,
            llm,
            engine: Arc::new(engine),
        })
    }

    pub fn mode(&self) -> CassetteMode {
        self.config.cassette_mode
    }

    /// Where the conversation for `question` is recorded.
    pub fn cassette_path(&self, question: &str) -> Option<PathBuf> {
        self.config.fixture_dir.as_ref().map(|d| {
            d.join("cassettes")
                .join(format!("{}.ndjson", slug(question)))
        })
    }

    /// Directory of eval cassettes, `<fixture_dir>/eval`.
    pub fn eval_dir(&self) -> Option<PathBuf> {
        self.config.fixture_dir.as_ref().map(|d| d.join("eval"))
    }

    /// Cassette for a new session, or one resumed at `position`.
    pub fn open_cassette(&self, question: &str, position: usize) -> Result<Cassette, LlmError> {
        let path = self.cassette_path(question);
        match (self.mode(), path) {
            (CassetteMode::Live, _) | (_, None) => Ok(Cassette::live()),
            (CassetteMode::Record, Some(p)) if position == 0 => Cassette::record_to(p),
            (CassetteMode::Record, Some(p)) => Cassette::resume_recording(p),
            (CassetteMode::Replay, Some(p)) => {
                let mut c = Cassette::load(&p).map_err(|e| missing(&p, e))?;
                c.seek(position)?;
                Ok(c)
            }
        }
    }
}

fn missing(path: &Path, e: LlmError) -> LlmError {
    if path.exists() {
        e
    } else {
        LlmError::Cassette {
            digest: String::new(),
            message: format!(
                "no recorded conversation for this question ({})",
                path.display()
            ),
        }
    }
}
