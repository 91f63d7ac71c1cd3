//! Wikidata backend.
//!
//! | operation                 | call                                                        |
//! |---------------------------|-------------------------------------------------------------|
//! | fuzzy entity search       | `GET api.php?action=wbsearchentities&type=item`             |
//! | labels / descriptions     | `GET api.php?action=wbgetentities&props=labels|descriptions` |
//! | relations of an entity    | SPARQL `SELECT DISTINCT ?p WHERE { wd:X ?p ?o }` on `wdt:`  |
//! | traversal                 | SPARQL `SELECT DISTINCT ?t WHERE { wd:X wdt:P ?t }`         |
//! | query execution           | `GET /sparql?query=...` with `Accept: application/sparql-results+json` |

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::Deserialize;

use super::{
    check_limit, check_term, dedup_records, validate_ids, Cell, EntityRecord, HttpRequest,
    IdSyntax, KgBackend, KgError, RecordKind, SchemaSummary, SparqlResultTable, Transport,
};

pub const ENTITY_NS: &str = "http://www.wikidata.org/entity/";
pub const DIRECT_NS: &str = "http://www.wikidata.org/prop/direct/";
const SPARQL_JSON: &str = "application/sparql-results+json";
const GETENTITIES_BATCH: usize = 50;
const INTERNAL_QUERY_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WikidataEndpoints {
    pub api_url: String,
    pub sparql_url: String,
    pub language: String,
}

impl Default for WikidataEndpoints {
    fn default() -> Self {
        Self {
            api_url: "https://www.wikidata.org/w/api.php".into(),
            sparql_url: "https://query.wikidata.org/sparql".into(),
            language: "en".into(),
        }
    }
}

pub struct WikidataBackend {
    transport: Arc<dyn Transport>,
    endpoints: WikidataEndpoints,
    syntax: IdSyntax,
}

impl WikidataBackend {
    pub fn new(transport: Arc<dyn Transport>, endpoints: WikidataEndpoints) -> Self {
        Self {
            transport,
            endpoints,
            syntax: IdSyntax::wikidata(),
        }
    }

    pub fn endpoints(&self) -> &WikidataEndpoints {
        &self.endpoints
    }

    pub fn search_request(&self, term: &str, limit: usize) -> HttpRequest {
        HttpRequest::get(&self.endpoints.api_url)
            .param("action", "wbsearchentities")
            .param("search", term)
            .param("language", &self.endpoints.language)
            .param("uselang", &self.endpoints.language)
            .param("type", "item")
            .param("limit", limit.min(50).to_string())
            .param("format", "json")
    }

    pub fn get_entities_request(&self, ids: &[&str]) -> HttpRequest {
        HttpRequest::get(&self.endpoints.api_url)
            .param("action", "wbgetentities")
            .param("ids", ids.join("|"))
            .param("props", "labels|descriptions")
            .param("languages", &self.endpoints.language)
            .param("format", "json")
    }

    pub fn sparql_request(&self, query: &str, timeout: Duration) -> HttpRequest {
        HttpRequest::get(&self.endpoints.sparql_url)
            .param("query", query)
            .header("Accept", SPARQL_JSON)
            .timeout(timeout)
    }

    pub fn relations_query(id: &str, limit: usize) -> String {
        format!(
            "SELECT DISTINCT ?p WHERE {{ wd:{id} ?p ?o . FILTER(STRSTARTS(STR(?p), \"{DIRECT_NS}\")) }} LIMIT {limit}"
        )
    }

    pub fn traverse_query(head: &str, relation: &str, limit: usize) -> String {
        format!("SELECT DISTINCT ?t WHERE {{ wd:{head} wdt:{relation} ?t . }} LIMIT {limit}")
    }

    async fn api_json<T: for<'de> Deserialize<'de>>(
        &self,
        request: HttpRequest,
    ) -> Result<T, KgError> {
        let response = self.transport.send(&request).await?;
        if !response.is_success() {
            return Err(KgError::Transport {
                status: Some(response.status),
                message: truncate(&response.body, 300),
            });
        }
        let value: serde_json::Value =
            serde_json::from_str(&response.body).map_err(|e| KgError::Decode(e.to_string()))?;
        if let Some(err) = value.get("error") {
            let info = err
                .get("info")
                .and_then(|i| i.as_str())
                .unwrap_or("unknown API error");
            return Err(KgError::Transport {
                status: Some(response.status),
                message: info.to_string(),
            });
        }
        serde_json::from_value(value).map_err(|e| KgError::Decode(e.to_string()))
    }

    fn ids_from_column(
        table: &SparqlResultTable,
        namespace: &str,
        syntax: &IdSyntax,
    ) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for row in &table.rows {
            if let Some(Cell::Iri { value }) = row.first() {
                if let Some(id) = value.strip_prefix(namespace) {
                    if syntax.classify(id).is_some() && !out.iter().any(|x| x == id) {
                        out.push(id.to_string());
                    }
                }
            }
        }
        out
    }
}

#[derive(Deserialize)]
struct SearchResponse {
    #[serde(default)]
    search: Vec<SearchHit>,
}

#[derive(Deserialize)]
struct SearchHit {
    id: String,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    description: Option<String>,
    #[serde(default)]
    display: Option<SearchDisplay>,
}

#[derive(Deserialize)]
struct SearchDisplay {
    label: Option<LangValue>,
    description: Option<LangValue>,
}

#[derive(Deserialize)]
struct GetEntitiesResponse {
    #[serde(default)]
    entities: HashMap<String, EntityDoc>,
}

#[derive(Deserialize)]
struct EntityDoc {
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    missing: Option<serde_json::Value>,
    #[serde(default)]
    labels: HashMap<String, LangValue>,
    #[serde(default)]
    descriptions: HashMap<String, LangValue>,
    #[serde(default)]
    redirects: Option<Redirect>,
}

#[derive(Deserialize)]
struct Redirect {
    from: String,
}

#[derive(Deserialize)]
struct LangValue {
    value: String,
}

fn truncate(s: &str, max: usize) -> String {
    let trimmed = s.trim();
    if trimmed.chars().count() <= max {
        trimmed.to_string()
    } else {
        let mut out: String = trimmed.chars().take(max).collect();
        out.push('…');
        out
    }
}

#[async_trait]
impl KgBackend for WikidataBackend {
    fn name(&self) -> &str {
        "wikidata"
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
        let response: SearchResponse = self.api_json(self.search_request(term, limit)).await?;
        let records = response
            .search
            .into_iter()
            .filter(|hit| self.syntax.classify(&hit.id).is_some())
            .map(|hit| {
                let (dl, dd) = match hit.display {
                    Some(d) => (d.label.map(|l| l.value), d.description.map(|l| l.value)),
                    None => (None, None),
                };
                let label = hit.label.or(dl).unwrap_or_else(|| hit.id.clone());
                let description = hit.description.or(dd).unwrap_or_default();
                let kind = self.syntax.classify(&hit.id).expect("filtered");
                EntityRecord::new(hit.id, label, description, kind)
            })
            .take(limit)
            .collect();
        Ok(dedup_records(records))
    }

    async fn get_records(&self, ids: &[String]) -> Result<Vec<EntityRecord>, KgError> {
        let validated = validate_ids(&self.syntax, ids)?;
        let mut unique: Vec<&str> = Vec::new();
        for (id, _) in &validated {
            if !unique.contains(&id.as_str()) {
                unique.push(id);
            }
        }
        let mut found: HashMap<String, EntityRecord> = HashMap::new();
        for chunk in unique.chunks(GETENTITIES_BATCH) {
            let response: GetEntitiesResponse =
                self.api_json(self.get_entities_request(chunk)).await?;
            let mut by_redirect: HashMap<String, &EntityDoc> = HashMap::new();
            for doc in response.entities.values() {
                if let Some(r) = &doc.redirects {
                    by_redirect.insert(r.from.clone(), doc);
                }
            }
            for &id in chunk {
                let kind = self.syntax.classify(id).expect("validated");
                let doc = response
                    .entities
                    .get(id)
                    .or_else(|| by_redirect.get(id).copied());
                let record = match doc {
                    Some(doc) if doc.missing.is_none() => {
                        let lang = &self.endpoints.language;
                        let label = doc
                            .labels
                            .get(lang)
                            .map(|l| l.value.clone())
                            .unwrap_or_else(|| doc.id.clone().unwrap_or_else(|| id.to_string()));
                        let description = doc
                            .descriptions
                            .get(lang)
                            .map(|d| d.value.clone())
                            .unwrap_or_default();
                        EntityRecord::new(id, label, description, kind)
                    }
                    _ => EntityRecord::unresolvable(id, kind),
                };
                found.insert(id.to_string(), record);
            }
        }
        Ok(validated
            .into_iter()
            .map(|(id, _)| found[&id].clone())
            .collect())
    }

    async fn get_relations_for_entity(
        &self,
        id: &str,
        limit: usize,
    ) -> Result<Vec<EntityRecord>, KgError> {
        let entity = self.syntax.entity(id)?;
        check_limit(limit)?;
        let query = Self::relations_query(entity.as_str(), limit);
        let table = self.execute_sparql(&query, INTERNAL_QUERY_TIMEOUT).await?;
        let mut pids = Self::ids_from_column(&table, DIRECT_NS, &self.syntax);
        pids.truncate(limit);
        if pids.is_empty() {
            return Ok(Vec::new());
        }
        let records = self.get_records(&pids).await?;
        Ok(records
            .into_iter()
            .map(|mut r| {
                r.kind = RecordKind::Relation;
                r
            })
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
        let query = Self::traverse_query(head.as_str(), relation.as_str(), limit);
        let table = self.execute_sparql(&query, INTERNAL_QUERY_TIMEOUT).await?;
        let mut qids = Self::ids_from_column(&table, ENTITY_NS, &self.syntax);
        qids.truncate(limit);
        if qids.is_empty() {
            return Ok(Vec::new());
        }
        self.get_records(&qids).await
    }

    async fn execute_sparql(
        &self,
        query: &str,
        timeout: Duration,
    ) -> Result<SparqlResultTable, KgError> {
        if query.trim().is_empty() {
            return Err(KgError::Validation("query text is empty".into()));
        }
        let response = self
            .transport
            .send(&self.sparql_request(query, timeout))
            .await?;
        match response.status {
            200..=299 => SparqlResultTable::from_results_json(&response.body)
                .map_err(|e| KgError::Decode(e.to_string())),
            400 => Err(KgError::Query(truncate(&response.body, 500))),
            500 if response.body.contains("TimeoutException") => Err(KgError::Timeout(timeout)),
            status => Err(KgError::Transport {
                status: Some(status),
                message: truncate(&response.body, 300),
            }),
        }
    }

    fn describe_schema(&self) -> SchemaSummary {
        SchemaSummary {
            backend_name: "wikidata".into(),
            prose: WIKIDATA_PROSE.into(),
            example_entities: vec![
                EntityRecord::new(
                    "Q5",
                    "human",
                    "common name of Homo sapiens",
                    RecordKind::Entity,
                ),
                EntityRecord::new(
                    "Q11424",
                    "film",
                    "sequence of images that give the impression of movement",
                    RecordKind::Entity,
                ),
            ],
            example_relations: vec![
                EntityRecord::new(
                    "P31",
                    "instance of",
                    "that class of which this subject is a particular example and member",
                    RecordKind::Relation,
                ),
                EntityRecord::new(
                    "P279",
                    "subclass of",
                    "this item is a subclass of that item",
                    RecordKind::Relation,
                ),
            ],
        }
    }
}

const WIKIDATA_PROSE: &str = "Wikidata is a general-purpose, collaboratively edited knowledge graph. \
Entities (items) have identifiers of the form Q followed by digits (for example Q5 is 'human'), and \
relations (properties) have identifiers of the form P followed by digits (for example P31 is \
'instance of'). In SPARQL, entities use the prefix wd: (wd:Q5) and direct relations between entities \
use the prefix wdt: (wdt:P31). Statement qualifiers are reachable through p:, ps: and pq:. \
Identifiers are opaque: never guess them, look them up.";
