use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::llm::Origin;
use crate::protocol::Session;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("session store {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid session id '{0}'")]
    InvalidId(String),
    #[error("no persisted session '{0}'")]
    NotFound(String),
    #[error("unsupported schema version {0}")]
    Version(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistedSession {
    pub schema_version: u32,
    pub session: Session,
    /// Cassette entries consumed so far, for resuming a replay.
    pub cassette_position: usize,
}

impl PersistedSession {
    pub fn new(session: Session) -> Self {
        let cassette_position = llm_turns(&session);
        Self {
            schema_version: SCHEMA_VERSION,
            session,
            cassette_position,
        }
    }
}

/// Completed LLM calls, which is how far a replay cassette has been read.
pub fn llm_turns(session: &Session) -> usize {
    session
        .history
        .iter()
        .filter(|m| m.origin == Origin::Llm)
        .count()
}

/// Append-only JSON lines, one file per session. The last parseable line
/// is the current state, so a torn final write falls back to the one before.
#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
}

impl SessionStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> Result<PathBuf, StoreError> {
        let ok = !id.is_empty()
            && id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        if !ok {
            return Err(StoreError::InvalidId(id.to_string()));
        }
        Ok(self.dir.join(format!("{id}.jsonl")))
    }

    pub fn save(&self, session: &Session) -> Result<(), StoreError> {
        let path = self.path(&session.id)?;
        let record = PersistedSession::new(session.clone());
        let mut line = serde_json::to_string(&record).expect("session serializes");
        line.push('\n');
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| io(&path, e))?;
        file.write_all(line.as_bytes()).map_err(|e| io(&path, e))?;
        file.flush().map_err(|e| io(&path, e))
    }

    pub fn load(&self, id: &str) -> Result<PersistedSession, StoreError> {
        let path = self.path(id)?;
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(StoreError::NotFound(id.to_string()))
            }
            Err(e) => return Err(io(&path, e)),
        };
        let record = text
            .lines()
            .rev()
            .find_map(|l| serde_json::from_str::<PersistedSession>(l).ok())
            .ok_or_else(|| StoreError::NotFound(id.to_string()))?;
        if record.schema_version != SCHEMA_VERSION {
            return Err(StoreError::Version(record.schema_version));
        }
        Ok(record)
    }

    /// Every saved state of a session, oldest first.
    pub fn history(&self, id: &str) -> Result<Vec<PersistedSession>, StoreError> {
        let path = self.path(id)?;
        let text = fs::read_to_string(&path).map_err(|e| io(&path, e))?;
        Ok(text
            .lines()
            .filter_map(|l| serde_json::from_str(l).ok())
            .collect())
    }

    pub fn ids(&self) -> Result<Vec<String>, StoreError> {
        let mut ids: Vec<String> = fs::read_dir(&self.dir)
            .map_err(|e| io(&self.dir, e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_suffix(".jsonl").map(str::to_string)
            })
            .collect();
        ids.sort();
        Ok(ids)
    }
}

fn io(path: &Path, e: std::io::Error) -> StoreError {
    StoreError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ChatMessage;
    use crate::protocol::{Counters, SubState};

    fn session(id: &str) -> Session {
        Session {
            id: id.into(),
            question: "q".into(),
            history: vec![ChatMessage::system("s"), ChatMessage::assistant("a")],
            stage: SubState::START,
            discovered: vec![],
            generated_query: None,
            entity_relation_table: vec![],
            results: None,
            summary: None,
            events: vec![],
            awaiting_user: false,
            error: None,
            counters: Counters::default(),
        }
    }

    #[test]
    fn last_valid_line_wins() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path()).unwrap();
        let mut s = session("abc");
        store.save(&s).unwrap();
        s.question = "second".into();
        store.save(&s).unwrap();
        let path = dir.path().join("abc.jsonl");
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"schema_version\":1,\"sess").unwrap();
        let loaded = store.load("abc").unwrap();
        assert_eq!(loaded.session, s);
        assert_eq!(loaded.cassette_position, 1);
        assert_eq!(store.history("abc").unwrap().len(), 2);
        assert_eq!(store.ids().unwrap(), vec!["abc".to_string()]);
    }

    #[test]
    fn rejects_bad_ids() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path()).unwrap();
        assert!(matches!(store.load("../x"), Err(StoreError::InvalidId(_))));
        assert!(matches!(store.load("nope"), Err(StoreError::NotFound(_))));
    }
}
