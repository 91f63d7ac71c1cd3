use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::llm::{CassetteMode, LlmConfig};
use crate::protocol::ProtocolConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
    #[error("parsing {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "lowercase", deny_unknown_fields)]
pub enum KgConfig {
    Wikidata {
        #[serde(default = "default_sparql_url")]
        endpoint_url: String,
        #[serde(default = "default_api_url")]
        api_url: String,
    },
    Stub {
        path: PathBuf,
    },
}

fn default_sparql_url() -> String {
    crate::kg::WikidataEndpoints::default().sparql_url
}

fn default_api_url() -> String {
    crate::kg::WikidataEndpoints::default().api_url
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budgets {
    #[serde(default = "default_qr")]
    pub max_qr_turns: u32,
    #[serde(default = "default_kg")]
    pub max_kg_calls: u32,
}

fn default_qr() -> u32 {
    ProtocolConfig::default().max_qr_turns
}

fn default_kg() -> u32 {
    ProtocolConfig::default().max_kg_calls
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            max_qr_turns: default_qr(),
            max_kg_calls: default_kg(),
        }
    }
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_store() -> PathBuf {
    PathBuf::from("sessions")
}

fn default_mode() -> CassetteMode {
    CassetteMode::Live
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub kg: KgConfig,
    #[serde(default)]
    pub llm: LlmConfig,
    #[serde(default = "default_mode")]
    pub cassette_mode: CassetteMode,
    #[serde(default)]
    pub fixture_dir: Option<PathBuf>,
    #[serde(default = "default_store")]
    pub session_store_dir: PathBuf,
    #[serde(default = "default_listen")]
    pub listen_address: String,
    #[serde(default)]
    pub budgets: Budgets,
}

impl AppConfig {
    /// Parse TOML; relative paths are taken relative to `base`.
    pub fn from_toml(text: &str, base: &Path, origin: &str) -> Result<Self, ConfigError> {
        let mut config: AppConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base, &path.display().to_string())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let KgConfig::Stub { path } = &mut self.kg {
            fix(path);
        }
        if let Some(dir) = &mut self.fixture_dir {
            fix(dir);
        }
        fix(&mut self.session_store_dir);
    }

    /// Apply `KGQA_*` overrides. `lookup` is `std::env::var` in production.
    pub fn apply_env(
        &mut self,
        lookup: impl Fn(&str) -> Option<String>,
    ) -> Result<(), ConfigError> {
        if let Some(v) = lookup("KGQA_LISTEN_ADDRESS") {
            self.listen_address = v;
        }
        if let Some(v) = lookup("KGQA_CASSETTE_MODE") {
            self.cassette_mode = v.parse().map_err(ConfigError::Invalid)?;
        }
        if let Some(v) = lookup("KGQA_FIXTURE_DIR") {
            self.fixture_dir = Some(v.into());
        }
        if let Some(v) = lookup("KGQA_SESSION_STORE_DIR") {
            self.session_store_dir = v.into();
        }
        if let Some(v) = lookup("KGQA_LLM_BASE_URL") {
            self.llm.base_url = v;
        }
        if let Some(v) = lookup("KGQA_LLM_MODEL") {
            self.llm.model = v;
        }
        if let Some(v) = lookup("KGQA_LLM_API_KEY_ENV") {
            self.llm.api_key_env = v;
        }
        match lookup("KGQA_KG_BACKEND").as_deref() {
            None => {}
            Some("stub") => {
                let path = lookup("KGQA_KG_PATH").ok_or_else(|| {
                    ConfigError::Invalid("KGQA_KG_BACKEND=stub needs KGQA_KG_PATH".into())
                })?;
                self.kg = KgConfig::Stub { path: path.into() };
            }
            Some("wikidata") => {
                self.kg = KgConfig::Wikidata {
                    endpoint_url: default_sparql_url(),
                    api_url: default_api_url(),
                };
            }
            Some(other) => {
                return Err(ConfigError::Invalid(format!(
                    "unknown KG backend '{other}'"
                )))
            }
        }
        if let Some(v) = lookup("KGQA_KG_ENDPOINT_URL") {
            match &mut self.kg {
                KgConfig::Wikidata { endpoint_url, .. } => *endpoint_url = v,
                KgConfig::Stub { .. } => {
                    return Err(ConfigError::Invalid(
                        "KGQA_KG_ENDPOINT_URL only applies to the wikidata backend".into(),
                    ))
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.listen_address.parse::<SocketAddr>().map_err(|e| {
            ConfigError::Invalid(format!("listen_address '{}': {e}", self.listen_address))
        })?;
        if self.cassette_mode != CassetteMode::Live && self.fixture_dir.is_none() {
            return Err(ConfigError::Invalid(format!(
                "cassette_mode {:?} requires fixture_dir",
                self.cassette_mode
            )));
        }
        self.llm
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let KgConfig::Wikidata {
            endpoint_url,
            api_url,
        } = &self.kg
        {
            for u in [endpoint_url, api_url] {
                url::Url::parse(u).map_err(|e| ConfigError::Invalid(format!("'{u}': {e}")))?;
            }
        }
        if self.budgets.max_qr_turns == 0 || self.budgets.max_kg_calls == 0 {
            return Err(ConfigError::Invalid("budgets must be positive".into()));
        }
        Ok(())
    }

    pub fn protocol_config(&self) -> ProtocolConfig {
        ProtocolConfig {
            max_qr_turns: self.budgets.max_qr_turns,
            max_kg_calls: self.budgets.max_kg_calls,
            ..ProtocolConfig::default()
        }
    }
}
