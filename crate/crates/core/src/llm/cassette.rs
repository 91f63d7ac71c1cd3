use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::LlmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CassetteMode {
    Live,
    Record,
    Replay,
}

impl std::str::FromStr for CassetteMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(Self::Live),
            "record" => Ok(Self::Record),
            "replay" => Ok(Self::Replay),
            other => Err(format!("unknown cassette mode '{other}'")),
        }
    }
}

/// One line of a cassette file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub digest: String,
    /// The endpoint's response body, verbatim.
    pub response: String,
}

/// An ordered transcript of chat-completion exchanges.
///
/// Replay is strictly sequential: request *n* must carry the digest of entry
/// *n*. Recording appends to the backing file as it goes.
#[derive(Debug, Clone)]
pub struct Cassette {
    mode: CassetteMode,
    entries: Vec<CassetteEntry>,
    cursor: usize,
    path: Option<PathBuf>,
}

impl Cassette {
    pub fn live() -> Self {
        Self {
            mode: CassetteMode::Live,
            entries: Vec::new(),
            cursor: 0,
            path: None,
        }
    }

    pub fn replay(entries: Vec<CassetteEntry>) -> Self {
        Self {
            mode: CassetteMode::Replay,
            entries,
            cursor: 0,
            path: None,
        }
    }

    /// In-memory recorder, for tests and for callers that save explicitly.
    pub fn recorder() -> Self {
        Self {
            mode: CassetteMode::Record,
            ..Self::live()
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Cassette {
            digest: String::new(),
            message: format!("reading {}: {e}", path.display()),
        })?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: CassetteEntry =
                serde_json::from_str(line).map_err(|e| LlmError::Cassette {
                    digest: String::new(),
                    message: format!("{} line {}: {e}", path.display(), i + 1),
                })?;
            entries.push(entry);
        }
        Ok(Self {
            path: Some(path.to_path_buf()),
            ..Self::replay(entries)
        })
    }

    /// Start a fresh recording at `path`, truncating any existing file.
    pub fn record_to(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let io = |e: std::io::Error| LlmError::Cassette {
            digest: String::new(),
            message: format!("{}: {e}", path.display()),
        };
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        std::fs::write(path, "").map_err(io)?;
        Ok(Self {
            path: Some(path.to_path_buf()),
            ..Self::recorder()
        })
    }

    /// Keep recording onto an existing file, e.g. after a restart.
    pub fn resume_recording(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        if !path.exists() {
            return Self::record_to(path);
        }
        let loaded = Self::load(path)?;
        Ok(Self {
            mode: CassetteMode::Record,
            ..loaded
        })
    }

    pub fn mode(&self) -> CassetteMode {
        self.mode
    }

    pub fn entries(&self) -> &[CassetteEntry] {
        &self.entries
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Number of entries consumed (replay) or written (record).
    pub fn position(&self) -> usize {
        match self.mode {
            CassetteMode::Replay => self.cursor,
            _ => self.entries.len(),
        }
    }

    /// Resume a replay at `position`, e.g. after a restart.
    pub fn seek(&mut self, position: usize) -> Result<(), LlmError> {
        if position > self.entries.len() {
            return Err(LlmError::Cassette {
                digest: String::new(),
                message: format!(
                    "position {position} past end of cassette ({} entries)",
                    self.entries.len()
                ),
            });
        }
        self.cursor = position;
        Ok(())
    }

    pub fn next_response(&mut self, digest: &str) -> Result<String, LlmError> {
        let Some(entry) = self.entries.get(self.cursor) else {
            return Err(LlmError::Cassette {
                digest: digest.to_string(),
                message: format!("cassette exhausted after {} entries", self.entries.len()),
            });
        };
        if entry.digest != digest {
            return Err(LlmError::Cassette {
                digest: digest.to_string(),
                message: format!(
                    "entry {} was recorded for {}; the conversation diverged",
                    self.cursor, entry.digest
                ),
            });
        }
        self.cursor += 1;
        Ok(entry.response.clone())
    }

    pub fn record(&mut self, digest: &str, response: &str) -> Result<(), LlmError> {
        let entry = CassetteEntry {
            digest: digest.to_string(),
            response: response.to_string(),
        };
        if let Some(path) = &self.path {
            let line = serde_json::to_string(&entry).expect("entry serializes");
            std::fs::OpenOptions::new()
                .append(true)
                .create(true)
                .open(path)
                .and_then(|mut f| writeln!(f, "{line}"))
                .map_err(|e| LlmError::Cassette {
                    digest: digest.to_string(),
                    message: format!("{}: {e}", path.display()),
                })?;
        }
        self.entries.push(entry);
        Ok(())
    }

    /// Cassette file contents: one JSON entry per line.
    pub fn to_ndjson(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("entry serializes") + "\n")
            .collect()
    }
}
