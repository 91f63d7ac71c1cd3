//! In-memory backend loaded from a JSON graph file.
//!
//! Besides serving canned query results it evaluates basic graph patterns
//! directly against its triples, which makes end-to-end protocol runs
//! possible without any network. The Wikidata label service
//! (`SERVICE wikibase:label`) and `rdfs:label` triples are emulated from the
//! record table; any other non-BGP clause is rejected as a query error.

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{
    check_limit, check_term, dedup_records, validate_ids, Cell, EntityRecord, IdSyntax, KgBackend,
    KgError, RecordKind, SchemaSummary, SparqlResultTable,
};
use crate::sparql::{parse_select, Literal, ParsedQuery, Term};

const RDFS_LABEL: &str = "http://www.w3.org/2000/01/rdf-schema#label";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StubObject {
    Entity(String),
    Literal {
        value: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        datatype: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        language: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubTriple(pub String, pub String, pub StubObject);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CannedQuery {
    pub sparql: String,
    #[serde(default)]
    pub result: Option<serde_json::Value>,
    #[serde(default)]
    pub error: Option<String>,
}

fn default_entity_pattern() -> String {
    "Q[1-9][0-9]*".into()
}

fn default_relation_pattern() -> String {
    "P[1-9][0-9]*".into()
}

fn default_entity_ns() -> String {
    super::wikidata::ENTITY_NS.into()
}

fn default_relation_ns() -> String {
    super::wikidata::DIRECT_NS.into()
}

/// On-disk shape of a stub graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StubGraph {
    pub name: String,
    pub prose: String,
    #[serde(default = "default_entity_pattern")]
    pub entity_pattern: String,
    #[serde(default = "default_relation_pattern")]
    pub relation_pattern: String,
    #[serde(default = "default_entity_ns")]
    pub entity_namespace: String,
    #[serde(default = "default_relation_ns")]
    pub relation_namespace: String,
    #[serde(default)]
    pub example_entities: Vec<String>,
    #[serde(default)]
    pub example_relations: Vec<String>,
    #[serde(default)]
    pub records: Vec<EntityRecord>,
    #[serde(default)]
    pub triples: Vec<StubTriple>,
    #[serde(default)]
    pub queries: Vec<CannedQuery>,
}

pub struct StubBackend {
    graph: StubGraph,
    syntax: IdSyntax,
    by_id: HashMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Value {
    Entity(String),
    Relation(String),
    Literal(Literal),
}

type Solution = HashMap<String, Value>;

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl StubBackend {
    pub fn new(graph: StubGraph) -> Result<Self, KgError> {
        let syntax = IdSyntax::new(&graph.entity_pattern, &graph.relation_pattern)
            .map_err(|e| KgError::Validation(format!("bad id pattern: {e}")))?;
        if graph.prose.trim().is_empty() {
            return Err(KgError::Validation("stub graph prose is empty".into()));
        }
        let mut by_id = HashMap::new();
        for (i, r) in graph.records.iter().enumerate() {
            if r.id.is_empty() {
                return Err(KgError::Validation(format!("record {i} has an empty id")));
            }
            by_id.entry(r.id.clone()).or_insert(i);
        }
        Ok(Self {
            graph,
            syntax,
            by_id,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KgError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| KgError::Transport {
            status: None,
            message: format!("reading {}: {e}", path.display()),
        })?;
        let graph: StubGraph = serde_json::from_str(&text)
            .map_err(|e| KgError::Decode(format!("{}: {e}", path.display())))?;
        Self::new(graph)
    }

    pub fn graph(&self) -> &StubGraph {
        &self.graph
    }

    fn record(&self, id: &str) -> Option<&EntityRecord> {
        self.by_id.get(id).map(|&i| &self.graph.records[i])
    }

    fn relation_record(&self, id: &str) -> EntityRecord {
        match self.record(id) {
            Some(r) => {
                let mut r = r.clone();
                r.kind = RecordKind::Relation;
                r
            }
            None => EntityRecord::new(id, id, "", RecordKind::Relation),
        }
    }

    fn entity_record(&self, id: &str) -> EntityRecord {
        self.record(id)
            .cloned()
            .unwrap_or_else(|| EntityRecord::new(id, id, "", RecordKind::Entity))
    }

    fn value_cell(&self, value: &Value) -> Cell {
        match value {
            Value::Entity(id) => Cell::iri(format!("{}{id}", self.graph.entity_namespace)),
            Value::Relation(id) => Cell::iri(format!("{}{id}", self.graph.relation_namespace)),
            Value::Literal(l) => Cell::Literal {
                value: l.value.clone(),
                datatype: l.datatype.clone(),
                language: l.language.clone(),
            },
        }
    }

    fn triple_values(&self) -> impl Iterator<Item = (Value, Value, Value)> + '_ {
        self.graph.triples.iter().map(|StubTriple(s, p, o)| {
            let object = match o {
                StubObject::Entity(id) => Value::Entity(id.clone()),
                StubObject::Literal {
                    value,
                    datatype,
                    language,
                } => Value::Literal(Literal {
                    value: value.clone(),
                    datatype: datatype.clone(),
                    language: language.clone(),
                }),
            };
            (Value::Entity(s.clone()), Value::Relation(p.clone()), object)
        })
    }

    fn label_triples(&self) -> impl Iterator<Item = (Value, Value, Value)> + '_ {
        self.graph
            .records
            .iter()
            .filter(|r| r.kind == RecordKind::Entity && r.resolved)
            .map(|r| {
                (
                    Value::Entity(r.id.clone()),
                    Value::Relation(String::new()),
                    Value::Literal(Literal {
                        value: r.label.clone(),
                        datatype: None,
                        language: Some("en".into()),
                    }),
                )
            })
    }

    fn term_value(&self, term: &Term, predicate: bool) -> Option<Value> {
        match term {
            Term::Variable { .. } => None,
            Term::Iri { iri } => {
                let ns = if predicate {
                    &self.graph.relation_namespace
                } else {
                    &self.graph.entity_namespace
                };
                let id = iri.strip_prefix(ns.as_str()).unwrap_or("");
                // unknown IRIs still need a value that matches nothing
                Some(if predicate {
                    Value::Relation(if id.is_empty() {
                        format!("<{iri}>")
                    } else {
                        id.into()
                    })
                } else {
                    Value::Entity(if id.is_empty() {
                        format!("<{iri}>")
                    } else {
                        id.into()
                    })
                })
            }
            Term::Literal(l) => Some(Value::Literal(l.clone())),
        }
    }

    fn evaluate(&self, parsed: &ParsedQuery) -> Result<SparqlResultTable, KgError> {
        for clause in &parsed.unsupported_clauses {
            if !normalize_ws(clause).starts_with("SERVICE wikibase:label") {
                return Err(KgError::Query(format!(
                    "stub backend evaluates basic graph patterns only; unsupported clause: {}",
                    normalize_ws(clause)
                )));
            }
        }
        if parsed.projection.iter().any(|p| p.expression.is_some())
            || parsed.modifiers.group_by.is_some()
            || parsed.modifiers.having.is_some()
        {
            return Err(KgError::Query(
                "stub backend does not evaluate aggregates or expressions".into(),
            ));
        }

        let mut solutions: Vec<Solution> = vec![HashMap::new()];
        for pattern in &parsed.triples {
            let is_label = matches!(&pattern.predicate, Term::Iri { iri } if iri == RDFS_LABEL);
            let candidates: Vec<(Value, Value, Value)> = if is_label {
                self.label_triples().collect()
            } else {
                self.triple_values().collect()
            };
            let mut next = Vec::new();
            for sol in &solutions {
                for (s, p, o) in &candidates {
                    let mut extended = sol.clone();
                    let ok = self.unify(&pattern.subject, s, false, &mut extended)
                        && (is_label || self.unify(&pattern.predicate, p, true, &mut extended))
                        && self.unify(&pattern.object, o, false, &mut extended);
                    if ok {
                        next.push(extended);
                    }
                }
            }
            solutions = next;
        }

        let columns: Vec<String> = parsed.projected_variables().map(str::to_string).collect();
        let mut rows: Vec<Vec<Cell>> = solutions
            .iter()
            .map(|sol| columns.iter().map(|c| self.project(sol, c)).collect())
            .collect();

        if let Some(order) = &parsed.modifiers.order_by {
            let keys = parse_order(order)?;
            let sols_rows: Vec<(Vec<Cell>, &Solution)> = rows.into_iter().zip(&solutions).collect();
            let mut sols_rows = sols_rows;
            sols_rows.sort_by(|(_, a), (_, b)| {
                for (var, desc) in &keys {
                    let ka = a.get(var).map(|v| self.value_cell(v).text().to_string());
                    let kb = b.get(var).map(|v| self.value_cell(v).text().to_string());
                    let ord = compare_keys(ka.as_deref(), kb.as_deref());
                    let ord = if *desc { ord.reverse() } else { ord };
                    if ord != std::cmp::Ordering::Equal {
                        return ord;
                    }
                }
                std::cmp::Ordering::Equal
            });
            rows = sols_rows.into_iter().map(|(r, _)| r).collect();
        }
        if parsed.modifiers.distinct || parsed.modifiers.reduced {
            let mut seen = std::collections::HashSet::new();
            rows.retain(|r| seen.insert(r.clone()));
        }
        let offset = parsed.modifiers.offset.unwrap_or(0) as usize;
        let rows: Vec<Vec<Cell>> = rows
            .into_iter()
            .skip(offset)
            .take(parsed.modifiers.limit.map_or(usize::MAX, |l| l as usize))
            .collect();
        SparqlResultTable::new(columns, rows).map_err(|e| KgError::Decode(e.to_string()))
    }

    fn unify(&self, term: &Term, value: &Value, predicate: bool, sol: &mut Solution) -> bool {
        match term {
            Term::Variable { name } => match sol.get(name) {
                Some(bound) => bound == value,
                None => {
                    sol.insert(name.clone(), value.clone());
                    true
                }
            },
            Term::Literal(pattern) => match value {
                Value::Literal(l) => {
                    l.value == pattern.value
                        && (pattern.language.is_none() || l.language == pattern.language)
                        && (pattern.datatype.is_none()
                            || l.datatype.is_none()
                            || l.datatype == pattern.datatype)
                }
                _ => false,
            },
            Term::Iri { .. } => self.term_value(term, predicate).as_ref() == Some(value),
        }
    }

    fn project(&self, sol: &Solution, column: &str) -> Cell {
        if let Some(v) = sol.get(column) {
            return self.value_cell(v);
        }
        for (suffix, describe) in [("Label", false), ("Description", true)] {
            if let Some(base) = column.strip_suffix(suffix) {
                match sol.get(base) {
                    Some(Value::Entity(id)) | Some(Value::Relation(id)) => {
                        return match self.record(id) {
                            Some(r) => Cell::Literal {
                                value: if describe {
                                    r.description.clone()
                                } else {
                                    r.label.clone()
                                },
                                datatype: None,
                                language: Some("en".into()),
                            },
                            None if !describe => Cell::literal(id.clone()),
                            None => Cell::Unbound,
                        };
                    }
                    Some(Value::Literal(l)) if !describe => return Cell::literal(l.value.clone()),
                    _ => {}
                }
            }
        }
        Cell::Unbound
    }
}

fn compare_keys(a: Option<&str>, b: Option<&str>) -> std::cmp::Ordering {
    match (a, b) {
        (Some(x), Some(y)) => match (x.parse::<f64>(), y.parse::<f64>()) {
            (Ok(fx), Ok(fy)) => fx.partial_cmp(&fy).unwrap_or(std::cmp::Ordering::Equal),
            _ => x.cmp(y),
        },
        (None, Some(_)) => std::cmp::Ordering::Less,
        (Some(_), None) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    }
}

fn parse_order(raw: &str) -> Result<Vec<(String, bool)>, KgError> {
    let re =
        regex::Regex::new(r"(?i)^(?:\?(\w+)|(ASC|DESC)\s*\(\s*\?(\w+)\s*\))\s*").expect("static");
    let mut rest = raw.trim();
    let mut keys = Vec::new();
    while !rest.is_empty() {
        let caps = re
            .captures(rest)
            .ok_or_else(|| KgError::Query(format!("stub backend cannot order by '{raw}'")))?;
        if let Some(v) = caps.get(1) {
            keys.push((v.as_str().to_string(), false));
        } else {
            let desc = caps[2].eq_ignore_ascii_case("DESC");
            keys.push((caps[3].to_string(), desc));
        }
        rest = &rest[caps.get(0).expect("whole match").end()..];
    }
    Ok(keys)
}

fn search_score(label: &str, term: &str) -> Option<u8> {
    let label = label.to_lowercase();
    let term = term.to_lowercase();
    if label == term {
        Some(0)
    } else if label.starts_with(&term) {
        Some(1)
    } else if label.contains(&term) {
        Some(2)
    } else if term.split_whitespace().all(|t| label.contains(t)) {
        Some(3)
    } else {
        None
    }
}

#[async_trait]
impl KgBackend for StubBackend {
    fn name(&self) -> &str {
        &self.graph.name
    }

    fn id_syntax(&self) -> &IdSyntax {
        &self.syntax
    }

    async fn fuzzy_search_entities(
        &self,
        term: &str,
        limit: usize,
    ) -> Result<Vec<EntityRecord>, KgError> {
        let term = check_term(term)?;
        check_limit(limit)?;
        let mut hits: Vec<(u8, usize, &EntityRecord)> = self
            .graph
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.kind == RecordKind::Entity && r.resolved)
            .filter_map(|(i, r)| search_score(&r.label, term).map(|s| (s, i, r)))
            .collect();
        hits.sort_by_key(|(score, idx, _)| (*score, *idx));
        Ok(dedup_records(
            hits.into_iter()
                .take(limit)
                .map(|(_, _, r)| r.clone())
                .collect(),
        ))
    }

    async fn get_records(&self, ids: &[String]) -> Result<Vec<EntityRecord>, KgError> {
        let validated = validate_ids(&self.syntax, ids)?;
        Ok(validated
            .into_iter()
            .map(|(id, kind)| match self.record(&id) {
                Some(r) => {
                    let mut r = r.clone();
                    r.kind = kind;
                    r
                }
                None => EntityRecord::unresolvable(id, kind),
            })
            .collect())
    }

    async fn get_relations_for_entity(
        &self,
        id: &str,
        limit: usize,
    ) -> Result<Vec<EntityRecord>, KgError> {
        let entity = self.syntax.entity(id)?;
        check_limit(limit)?;
        let mut pids: Vec<&str> = Vec::new();
        for StubTriple(s, p, _) in &self.graph.triples {
            if s == entity.as_str() && !pids.contains(&p.as_str()) {
                pids.push(p);
            }
        }
        Ok(pids
            .into_iter()
            .take(limit)
            .map(|p| self.relation_record(p))
            .collect())
    }

    async fn traverse(
        &self,
        head: &str,
        relation: &str,
        limit: usize,
    ) -> Result<Vec<EntityRecord>, KgError> {
        let head = self.syntax.entity(head)?;
        let relation = self.syntax.relation(relation)?;
        check_limit(limit)?;
        let records = self
            .graph
            .triples
            .iter()
            .filter(|StubTriple(s, p, _)| s == head.as_str() && p == relation.as_str())
            .filter_map(|StubTriple(_, _, o)| match o {
                StubObject::Entity(id) => Some(self.entity_record(id)),
                StubObject::Literal { .. } => None,
            })
            .collect();
        let mut records = dedup_records(records);
        records.truncate(limit);
        Ok(records)
    }

    async fn execute_sparql(
        &self,
        query: &str,
        _timeout: Duration,
    ) -> Result<SparqlResultTable, KgError> {
        if query.trim().is_empty() {
            return Err(KgError::Validation("query text is empty".into()));
        }
        let wanted = normalize_ws(query);
        if let Some(canned) = self
            .graph
            .queries
            .iter()
            .find(|c| normalize_ws(&c.sparql) == wanted)
        {
            if let Some(err) = &canned.error {
                return Err(KgError::Query(err.clone()));
            }
            let body = canned.result.clone().unwrap_or(serde_json::Value::Null);
            return SparqlResultTable::from_results_json(&body.to_string())
                .map_err(|e| KgError::Decode(e.to_string()));
        }
        let parsed = parse_select(query).map_err(|e| KgError::Query(e.to_string()))?;
        self.evaluate(&parsed)
    }

    fn describe_schema(&self) -> SchemaSummary {
        let lookup = |ids: &[String], kind: RecordKind| -> Vec<EntityRecord> {
            ids.iter()
                .map(|id| match self.record(id) {
                    Some(r) => {
                        let mut r = r.clone();
                        r.kind = kind;
                        r
                    }
                    None => EntityRecord::unresolvable(id.clone(), kind),
                })
                .collect()
        };
        SchemaSummary {
            backend_name: self.graph.name.clone(),
            prose: self.graph.prose.clone(),
            example_entities: lookup(&self.graph.example_entities, RecordKind::Entity),
            example_relations: lookup(&self.graph.example_relations, RecordKind::Relation),
        }
    }
}
