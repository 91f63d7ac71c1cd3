use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{ParsedQuery, Term};
use crate::kg::{Cell, EntityRecord, KgBackend, KgError, SparqlResultTable};

const WIKIDATA_NAMESPACES: &[&str] = &[
    "http://www.wikidata.org/entity/",
    "http://www.wikidata.org/prop/direct/",
    "http://www.wikidata.org/prop/statement/",
    "http://www.wikidata.org/prop/qualifier/",
    "http://www.wikidata.org/prop/",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("query has no triple patterns to graph")]
    EmptyGraph,
    #[error("results have no column for projected variable ?{variable}")]
    Join { variable: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub key: String,
    pub label: String,
    pub resolved: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub source: String,
    pub target: String,
    pub relation: String,
    pub label: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

impl QueryGraph {
    pub fn node(&self, key: &str) -> Option<&GraphNode> {
        self.nodes.iter().find(|n| n.key == key)
    }

    /// Replace node and edge labels of Wikidata terms with KG labels where a
    /// resolved record exists. Other labels keep the raw term text.
    pub fn apply_labels(&mut self, records: &[EntityRecord]) {
        let by_id: HashMap<&str, &str> = records
            .iter()
            .filter(|r| r.resolved && !r.label.is_empty())
            .map(|r| (r.id.as_str(), r.label.as_str()))
            .collect();
        let lookup = |key: &str| -> Option<String> {
            let id = key.rsplit(':').next()?;
            by_id.get(id).map(|l| l.to_string())
        };
        for node in &mut self.nodes {
            if node.resolved {
                if let Some(l) = lookup(&node.key) {
                    node.label = l;
                }
            }
        }
        for edge in &mut self.edges {
            if let Some(l) = lookup(&edge.relation) {
                edge.label = l;
            }
        }
    }
}

fn wikidata_id(iri: &str) -> Option<&str> {
    static ID: OnceLock<Regex> = OnceLock::new();
    let re = ID.get_or_init(|| Regex::new("^[QP][1-9][0-9]*$").expect("static"));
    WIKIDATA_NAMESPACES
        .iter()
        .find_map(|ns| iri.strip_prefix(ns))
        .filter(|local| re.is_match(local))
}

/// Nodes are the distinct subject/object terms in order of first
/// appearance; there is one edge per triple pattern.
pub fn build_query_graph(parsed: &ParsedQuery) -> Result<QueryGraph, GraphError> {
    if parsed.triples.is_empty() {
        return Err(GraphError::EmptyGraph);
    }
    let table = parsed.prefix_table();
    let text = |t: &Term| super::serialize::term_text(t, &table);
    let mut graph = QueryGraph::default();
    for triple in &parsed.triples {
        for term in [&triple.subject, &triple.object] {
            let key = text(term);
            if graph.node(&key).is_none() {
                graph.nodes.push(GraphNode {
                    label: key.clone(),
                    key,
                    resolved: !term.is_variable(),
                });
            }
        }
        let relation = text(&triple.predicate);
        graph.edges.push(GraphEdge {
            source: text(&triple.subject),
            target: text(&triple.object),
            label: relation.clone(),
            relation,
        });
    }
    Ok(graph)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedIds {
    /// Wikidata entity/relation ids in first-occurrence order.
    pub ids: Vec<String>,
    /// Concrete IRIs outside the Wikidata namespaces.
    pub skipped: Vec<String>,
}

pub fn extract_ids(parsed: &ParsedQuery) -> ExtractedIds {
    let mut out = ExtractedIds::default();
    for triple in &parsed.triples {
        for term in [&triple.subject, &triple.predicate, &triple.object] {
            let Term::Iri { iri } = term else { continue };
            match wikidata_id(iri) {
                Some(id) => {
                    if !out.ids.iter().any(|x| x == id) {
                        out.ids.push(id.to_string());
                    }
                }
                None => {
                    if !out.skipped.contains(iri) {
                        out.skipped.push(iri.clone());
                    }
                }
            }
        }
    }
    out
}

/// Ids from the triples plus those written inside carried clauses
/// (FILTER, OPTIONAL, ...). Used to check generated queries against the ids
/// the conversation has actually seen.
pub fn mentioned_ids(parsed: &ParsedQuery) -> Vec<String> {
    static IN_TEXT: OnceLock<Regex> = OnceLock::new();
    let re = IN_TEXT.get_or_init(|| {
        Regex::new(
            r"(?:\b(?:wd|wdt|p|ps|pq):|<http://www\.wikidata\.org/(?:entity|prop(?:/direct|/statement|/qualifier)?)/)([QP][1-9][0-9]*)\b",
        )
        .expect("static")
    });
    let mut ids = extract_ids(parsed).ids;
    for clause in &parsed.unsupported_clauses {
        for caps in re.captures_iter(clause) {
            let id = &caps[1];
            if !ids.iter().any(|x| x == id) {
                ids.push(id.to_string());
            }
        }
    }
    ids
}

/// One record per id, order preserved. Unknown ids come back flagged.
pub async fn build_entity_relation_table(
    ids: &[String],
    kg: &dyn KgBackend,
) -> Result<Vec<EntityRecord>, KgError> {
    if ids.is_empty() {
        return Ok(Vec::new());
    }
    kg.get_records(ids).await
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRow {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddedTable {
    pub key: String,
    pub variable: String,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ResultsNode {
    Node(GraphNode),
    Table(EmbeddedTable),
}

impl ResultsNode {
    pub fn key(&self) -> &str {
        match self {
            ResultsNode::Node(n) => &n.key,
            ResultsNode::Table(t) => &t.key,
        }
    }
}

/// The query graph with each projected variable node swapped for the
/// column of results bound to it. Edges keep their endpoint keys, which now
/// name tables where a variable was replaced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultsGraph {
    pub nodes: Vec<ResultsNode>,
    pub edges: Vec<GraphEdge>,
    pub row_count: usize,
}

impl ResultsGraph {
    pub fn tables(&self) -> impl Iterator<Item = &EmbeddedTable> {
        self.nodes.iter().filter_map(|n| match n {
            ResultsNode::Table(t) => Some(t),
            ResultsNode::Node(_) => None,
        })
    }
}

fn display_cell(cell: &Cell, label: Option<&Cell>) -> TableRow {
    let id = match cell {
        Cell::Iri { value } => wikidata_id(value).map(str::to_string),
        _ => None,
    };
    let text = match label {
        Some(l) if !matches!(l, Cell::Unbound) => l.text().to_string(),
        _ => id.clone().unwrap_or_else(|| cell.text().to_string()),
    };
    TableRow { text, id }
}

pub fn build_results_graph(
    graph: &QueryGraph,
    projected: &[String],
    results: &SparqlResultTable,
) -> Result<ResultsGraph, GraphError> {
    let mut nodes = Vec::with_capacity(graph.nodes.len());
    for node in &graph.nodes {
        let variable = node.key.strip_prefix('?').filter(|_| !node.resolved);
        let Some(variable) = variable.filter(|v| projected.iter().any(|p| p == v)) else {
            nodes.push(ResultsNode::Node(node.clone()));
            continue;
        };
        let col = results
            .column_index(variable)
            .ok_or_else(|| GraphError::Join {
                variable: variable.to_string(),
            })?;
        let label_col = results.column_index(&format!("{variable}Label"));
        let rows = results
            .rows
            .iter()
            .map(|row| display_cell(&row[col], label_col.map(|i| &row[i])))
            .collect();
        nodes.push(ResultsNode::Table(EmbeddedTable {
            key: node.key.clone(),
            variable: variable.to_string(),
            rows,
        }));
    }
    Ok(ResultsGraph {
        nodes,
        edges: graph.edges.clone(),
        row_count: results.rows.len(),
    })
}
