//! SPARQL SELECT analysis.
//!
//! The parser accepts `SELECT` queries whose WHERE clause is a basic graph
//! pattern. Clauses outside that subset (`FILTER`, `OPTIONAL`, `BIND`,
//! `SERVICE`, property paths, ...) are accepted and carried verbatim in
//! [`ParsedQuery::unsupported_clauses`] so realistic LLM output still parses,
//! but they never reach the graph builders.
//!
//! From a [`ParsedQuery`] the builders in this module derive the inspectable
//! structures shown next to a query:
//!
//! - [`QueryGraph`]: one node per distinct subject/object term, one edge per
//!   triple. Variables are *unresolved*, IRIs and literals *resolved*.
//! - [`extract_ids`]: the Wikidata entity/relation identifiers in the query.
//! - [`build_entity_relation_table`]: labels and descriptions for those ids.
//! - [`ResultsGraph`]: the query graph with every projected variable node
//!   replaced by an embedded, row-aligned table of its results.

mod graph;
mod lexer;
mod parser;
mod serialize;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use graph::{
    build_entity_relation_table, build_query_graph, build_results_graph, extract_ids,
    mentioned_ids, EmbeddedTable, ExtractedIds, GraphEdge, GraphError, GraphNode, QueryGraph,
    ResultsGraph, ResultsNode, TableRow,
};
pub use parser::{inline_comments, parse_select, InlineComment};

pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
pub const XSD: &str = "http://www.w3.org/2001/XMLSchema#";

/// Prefixes available to every query without a `PREFIX` declaration.
pub const BUILTIN_PREFIXES: &[(&str, &str)] = &[
    ("bd", "http://www.bigdata.com/rdf#"),
    ("p", "http://www.wikidata.org/prop/"),
    ("pq", "http://www.wikidata.org/prop/qualifier/"),
    ("ps", "http://www.wikidata.org/prop/statement/"),
    ("rdf", "http://www.w3.org/1999/02/22-rdf-syntax-ns#"),
    ("rdfs", "http://www.w3.org/2000/01/rdf-schema#"),
    ("schema", "http://schema.org/"),
    ("wd", "http://www.wikidata.org/entity/"),
    ("wdt", "http://www.wikidata.org/prop/direct/"),
    ("wikibase", "http://wikiba.se/ontology#"),
    ("xsd", "http://www.w3.org/2001/XMLSchema#"),
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("query text is empty")]
    Empty,
    #[error("unsupported query form {0}: only SELECT is supported")]
    UnsupportedForm(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Literal {
    pub value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub datatype: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
}

impl Literal {
    pub fn plain(value: impl Into<String>) -> Self {
        Self {
            value: value.into(),
            datatype: None,
            language: None,
        }
    }

    pub fn typed(value: impl Into<String>, datatype: impl Into<String>) -> Self {
        Self {
            value: value.into(),
            datatype: Some(datatype.into()),
            language: None,
        }
    }
}

/// A triple-pattern term. IRIs are always stored expanded.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Term {
    Variable { name: String },
    Iri { iri: String },
    Literal(Literal),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Self {
        Term::Variable { name: name.into() }
    }

    pub fn iri(iri: impl Into<String>) -> Self {
        Term::Iri { iri: iri.into() }
    }

    pub fn is_variable(&self) -> bool {
        matches!(self, Term::Variable { .. })
    }

    pub fn variable_name(&self) -> Option<&str> {
        match self {
            Term::Variable { name } => Some(name),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriplePattern {
    pub subject: Term,
    pub predicate: Term,
    pub object: Term,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Projection {
    pub variable: String,
    /// Raw expression text for `(expr AS ?var)` projections.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expression: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Modifiers {
    pub distinct: bool,
    pub reduced: bool,
    pub limit: Option<u64>,
    pub offset: Option<u64>,
    pub order_by: Option<String>,
    pub group_by: Option<String>,
    pub having: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedQuery {
    /// Projected variables; for `SELECT *` the variables of the pattern in
    /// order of first appearance.
    pub projection: Vec<Projection>,
    pub wildcard: bool,
    pub triples: Vec<TriplePattern>,
    /// Prefixes declared in the query text (builtins are implicit).
    pub prefixes: BTreeMap<String, String>,
    pub modifiers: Modifiers,
    /// Clauses outside the basic-graph-pattern subset, as source text.
    pub unsupported_clauses: Vec<String>,
    /// Projected variables that occur in no triple.
    pub dangling: Vec<String>,
    /// Comment texts (without the leading `#`), in source order.
    pub comments: Vec<String>,
}

impl ParsedQuery {
    pub fn projected_variables(&self) -> impl Iterator<Item = &str> {
        self.projection.iter().map(|p| p.variable.as_str())
    }

    /// Builtin prefixes overlaid with the query's own declarations.
    pub fn prefix_table(&self) -> PrefixTable {
        PrefixTable::with_declared(&self.prefixes)
    }

    /// The canonical text of a term: variables as `?name`, IRIs compacted
    /// against [`Self::prefix_table`] when possible, literals in N-Triples
    /// style. Node keys in [`QueryGraph`] use this form.
    pub fn term_text(&self, term: &Term) -> String {
        serialize::term_text(term, &self.prefix_table())
    }

    /// Render back to SPARQL. Reparsing the output yields an equal value.
    pub fn to_sparql(&self) -> String {
        serialize::to_sparql(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefixTable {
    map: BTreeMap<String, String>,
}

impl PrefixTable {
    pub fn builtin() -> Self {
        Self::with_declared(&BTreeMap::new())
    }

    pub fn with_declared(declared: &BTreeMap<String, String>) -> Self {
        let mut map: BTreeMap<String, String> = BUILTIN_PREFIXES
            .iter()
            .map(|(p, iri)| (p.to_string(), iri.to_string()))
            .collect();
        map.extend(declared.iter().map(|(k, v)| (k.clone(), v.clone())));
        Self { map }
    }

    pub fn expand(&self, prefix: &str, local: &str) -> Option<String> {
        self.map.get(prefix).map(|ns| format!("{ns}{local}"))
    }

    /// Longest matching namespace wins; ties go to the alphabetically first
    /// prefix.
    pub fn compact(&self, iri: &str) -> Option<String> {
        let mut best: Option<(&str, &str)> = None;
        for (prefix, ns) in &self.map {
            if let Some(local) = iri.strip_prefix(ns.as_str()) {
                if !is_safe_local(local) {
                    continue;
                }
                match best {
                    Some((_, best_ns)) if best_ns.len() >= ns.len() => {}
                    _ => best = Some((prefix, ns)),
                }
            }
        }
        best.map(|(prefix, ns)| format!("{prefix}:{}", &iri[ns.len()..]))
    }
}

fn is_safe_local(local: &str) -> bool {
    let mut chars = local.chars();
    match chars.next() {
        None => true,
        Some(c) if c.is_alphanumeric() || c == '_' => {
            chars.all(|c| c.is_alphanumeric() || c == '_' || c == '-')
        }
        _ => false,
    }
}
