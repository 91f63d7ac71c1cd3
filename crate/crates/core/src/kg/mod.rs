//! Knowledge-graph backends.
//!
//! [`KgBackend`] is the seam every data source implements. Two backends ship:
//! [`WikidataBackend`] (public MediaWiki API plus the SPARQL endpoint) and
//! [`StubBackend`] (an in-memory graph loaded from a JSON file, used for
//! tests and as the template for plugging in other graphs).
//!
//! HTTP traffic goes through a [`Transport`]; wrapping it in a
//! [`FixtureTransport`] gives record/replay keyed by canonical request.

mod stub;
mod table;
mod transport;
mod wikidata;

use std::time::Duration;

use async_trait::async_trait;
use regex::Regex;
use serde::{Deserialize, Serialize};

pub use stub::{StubBackend, StubGraph, StubObject, StubTriple};
pub use table::{Cell, SparqlResultTable, TableError};
pub use transport::{
    FailingTransport, FixtureMode, FixtureTransport, HttpMethod, HttpRequest, HttpResponse,
    HttpTransport, Transport, TransportError,
};
pub use wikidata::{WikidataBackend, WikidataEndpoints};

#[derive(Debug, thiserror::Error)]
pub enum KgError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("transport error{}: {message}", status.map(|s| format!(" (status {s})")).unwrap_or_default())]
    Transport {
        status: Option<u16>,
        message: String,
    },
    #[error("query rejected by endpoint: {0}")]
    Query(String),
    #[error("query timed out after {0:?}")]
    Timeout(Duration),
    #[error("unexpected response from backend: {0}")]
    Decode(String),
    #[error("no fixture recorded for request {key} (expected {path})")]
    ReplayMiss { key: String, path: String },
}

impl From<TransportError> for KgError {
    fn from(err: TransportError) -> Self {
        match err {
            TransportError::Timeout(d) => KgError::Timeout(d),
            TransportError::ReplayMiss { key, path } => KgError::ReplayMiss { key, path },
            other => KgError::Transport {
                status: None,
                message: other.to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Entity,
    Relation,
}

/// Entity identifier, e.g. `Q102427` on Wikidata.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(String);

/// Relation identifier, e.g. `P57` on Wikidata.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationId(String);

impl EntityId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl RelationId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for EntityId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::fmt::Display for RelationId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Identifier syntax of a backend. Wikidata uses `Q123` / `P123`.
#[derive(Debug, Clone)]
pub struct IdSyntax {
    entity: Regex,
    relation: Regex,
    scan: Regex,
}

impl IdSyntax {
    /// `entity` and `relation` are unanchored patterns for one identifier.
    pub fn new(entity: &str, relation: &str) -> Result<Self, regex::Error> {
        Ok(Self {
            entity: Regex::new(&format!("^(?:{entity})$"))?,
            relation: Regex::new(&format!("^(?:{relation})$"))?,
            scan: Regex::new(&format!(r"\b(?:{entity}|{relation})\b"))?,
        })
    }

    pub fn wikidata() -> Self {
        Self::new("Q[1-9][0-9]*", "P[1-9][0-9]*").expect("static patterns")
    }

    pub fn classify(&self, id: &str) -> Option<RecordKind> {
        if self.entity.is_match(id) {
            Some(RecordKind::Entity)
        } else if self.relation.is_match(id) {
            Some(RecordKind::Relation)
        } else {
            None
        }
    }

    pub fn entity(&self, id: &str) -> Result<EntityId, KgError> {
        match self.classify(id.trim()) {
            Some(RecordKind::Entity) => Ok(EntityId(id.trim().to_string())),
            _ => Err(KgError::Validation(format!("'{id}' is not an entity id"))),
        }
    }

    pub fn relation(&self, id: &str) -> Result<RelationId, KgError> {
        match self.classify(id.trim()) {
            Some(RecordKind::Relation) => Ok(RelationId(id.trim().to_string())),
            _ => Err(KgError::Validation(format!("'{id}' is not a relation id"))),
        }
    }

    /// All identifiers mentioned anywhere in free text, in order, deduplicated.
    pub fn scan(&self, text: &str) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for m in self.scan.find_iter(text) {
            if !out.iter().any(|s| s == m.as_str()) {
                out.push(m.as_str().to_string());
            }
        }
        out
    }
}

/// A row of the Entity-Relation Table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub id: String,
    pub label: String,
    pub description: String,
    pub kind: RecordKind,
    /// False when the backend does not know the id (a hallucination signal).
    #[serde(default = "default_true")]
    pub resolved: bool,
}

fn default_true() -> bool {
    true
}

impl EntityRecord {
    pub fn new(
        id: impl Into<String>,
        label: impl Into<String>,
        description: impl Into<String>,
        kind: RecordKind,
    ) -> Self {
        Self {
            id: id.into(),
            label: label.into(),
            description: description.into(),
            kind,
            resolved: true,
        }
    }

    pub fn unresolvable(id: impl Into<String>, kind: RecordKind) -> Self {
        Self {
            id: id.into(),
            label: String::new(),
            description: String::new(),
            kind,
            resolved: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaSummary {
    pub backend_name: String,
    pub prose: String,
    pub example_entities: Vec<EntityRecord>,
    pub example_relations: Vec<EntityRecord>,
}

#[async_trait]
pub trait KgBackend: Send + Sync {
    fn name(&self) -> &str;

    fn id_syntax(&self) -> &IdSyntax;

    async fn fuzzy_search_entities(
        &self,
        term: &str,
        limit: usize,
    ) -> Result<Vec<EntityRecord>, KgError>;

    /// One record per input id, in input order. Unknown ids come back with
    /// `resolved == false` rather than failing the batch.
    async fn get_records(&self, ids: &[String]) -> Result<Vec<EntityRecord>, KgError>;

    async fn get_relations_for_entity(
        &self,
        id: &str,
        limit: usize,
    ) -> Result<Vec<EntityRecord>, KgError>;

    async fn traverse(
        &self,
        head: &str,
        relation: &str,
        limit: usize,
    ) -> Result<Vec<EntityRecord>, KgError>;

    async fn execute_sparql(
        &self,
        query: &str,
        timeout: Duration,
    ) -> Result<SparqlResultTable, KgError>;

    fn describe_schema(&self) -> SchemaSummary;
}

pub(crate) fn check_limit(limit: usize) -> Result<(), KgError> {
    if limit == 0 {
        Err(KgError::Validation(
            "limit must be a positive integer".into(),
        ))
    } else {
        Ok(())
    }
}

pub(crate) fn check_term(term: &str) -> Result<&str, KgError> {
    let trimmed = term.trim();
    if trimmed.is_empty() {
        Err(KgError::Validation("search term is empty".into()))
    } else {
        Ok(trimmed)
    }
}

pub(crate) fn validate_ids(
    syntax: &IdSyntax,
    ids: &[String],
) -> Result<Vec<(String, RecordKind)>, KgError> {
    if ids.is_empty() {
        return Err(KgError::Validation("id batch is empty".into()));
    }
    ids.iter()
        .map(|id| {
            let id = id.trim();
            syntax
                .classify(id)
                .map(|kind| (id.to_string(), kind))
                .ok_or_else(|| KgError::Validation(format!("malformed id '{id}'")))
        })
        .collect()
}

/// Keeps the first record per id.
pub(crate) fn dedup_records(records: Vec<EntityRecord>) -> Vec<EntityRecord> {
    let mut seen = std::collections::HashSet::new();
    records
        .into_iter()
        .filter(|r| seen.insert(r.id.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wikidata_syntax() {
        let s = IdSyntax::wikidata();
        assert_eq!(s.classify("Q102427"), Some(RecordKind::Entity));
        assert_eq!(s.classify("P57"), Some(RecordKind::Relation));
        assert_eq!(s.classify("Q0"), None);
        assert_eq!(s.classify("q5"), None);
        assert_eq!(s.classify("Q5x"), None);
    }

    #[test]
    fn scan_finds_ids_in_prose() {
        let s = IdSyntax::wikidata();
        assert_eq!(
            s.scan("found Q102427 (award), P57 and Q102427 again; not XQ5"),
            vec!["Q102427", "P57"]
        );
    }

    #[test]
    fn validate_rejects_empty_and_malformed() {
        let s = IdSyntax::wikidata();
        assert!(matches!(validate_ids(&s, &[]), Err(KgError::Validation(_))));
        assert!(matches!(
            validate_ids(&s, &["Q1".into(), "nope".into()]),
            Err(KgError::Validation(_))
        ));
    }
}
