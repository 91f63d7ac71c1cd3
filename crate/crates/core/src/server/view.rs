use serde::{Deserialize, Serialize};

use crate::kg::{EntityRecord, SparqlResultTable};
use crate::llm::ChatMessage;
use crate::protocol::{
    EventKind, GeneratedQuery, QgDetail, RsDetail, Session, StateEvent, SubState,
};
use crate::sparql::{
    build_query_graph, build_results_graph, parse_select, QueryGraph, ResultsGraph,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Flags {
    pub awaiting_user: bool,
    /// The execute endpoint will accept a request.
    pub can_execute: bool,
    pub hallucination: bool,
    pub empty_results: bool,
    /// Clauses kept in the query but not drawn in the graph.
    pub unsupported_clauses: Vec<String>,
    /// Why the query or results graph could not be drawn.
    pub graph_notice: Option<String>,
}

/// What `GET /api/sessions/{id}` returns. A pure function of the session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionSnapshot {
    pub id: String,
    pub question: String,
    pub sub_state: SubState,
    pub history: Vec<ChatMessage>,
    pub query: Option<GeneratedQuery>,
    pub entity_relation_table: Vec<EntityRecord>,
    pub query_graph: Option<QueryGraph>,
    pub results: Option<SparqlResultTable>,
    pub results_graph: Option<ResultsGraph>,
    pub summary: Option<ChatMessage>,
    pub events: Vec<StateEvent>,
    pub error: Option<String>,
    pub flags: Flags,
}

impl SessionSnapshot {
    pub fn of(session: &Session) -> Self {
        let mut notice = None;
        let mut unsupported = Vec::new();
        let mut query_graph = None;
        let mut results_graph = None;
        if let Some(q) = &session.generated_query {
            match parse_select(&q.sparql) {
                Ok(parsed) => {
                    unsupported = parsed.unsupported_clauses.clone();
                    match build_query_graph(&parsed) {
                        Ok(mut g) => {
                            g.apply_labels(&session.entity_relation_table);
                            if let Some(results) = &session.results {
                                let projected: Vec<String> = if parsed.wildcard {
                                    results.columns.clone()
                                } else {
                                    parsed.projected_variables().map(str::to_string).collect()
                                };
                                match build_results_graph(&g, &projected, results) {
                                    Ok(r) => results_graph = Some(r),
                                    Err(e) => notice = Some(e.to_string()),
                                }
                            }
                            query_graph = Some(g);
                        }
                        Err(e) => notice = Some(e.to_string()),
                    }
                }
                Err(e) => notice = Some(e.to_string()),
            }
        }
        let can_execute = session.generated_query.is_some()
            && matches!(
                session.stage,
                SubState::QueryGeneration(QgDetail::QueryEmitted)
                    | SubState::ResultsSummarization(RsDetail::Done)
            );
        Self {
            id: session.id.clone(),
            question: session.question.clone(),
            sub_state: session.stage,
            history: session.history.clone(),
            query: session.generated_query.clone(),
            entity_relation_table: session.entity_relation_table.clone(),
            query_graph,
            results: session.results.clone(),
            results_graph,
            summary: session.summary.clone(),
            events: session.events.clone(),
            error: session.error.clone(),
            flags: Flags {
                awaiting_user: session.awaiting_user,
                can_execute,
                hallucination: session.has_event(EventKind::Hallucination),
                empty_results: session.results.as_ref().is_some_and(|r| r.is_empty()),
                unsupported_clauses: unsupported,
                graph_notice: notice,
            },
        }
    }
}
