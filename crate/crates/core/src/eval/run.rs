use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use futures::stream::{self, StreamExt};

use super::{judge, Category, Judged, QuestionRecord, RunRecord};
use crate::kg::{Cell, SparqlResultTable};
use crate::llm::{Cassette, ChatMessage, LlmGateway};
use crate::protocol::Engine;

pub const BASELINE_PROMPT: &str = "Answer the question with the answer only: a name, a short list separated by semicolons, or yes/no. Do not explain.";

#[derive(Clone)]
pub enum Answerer {
    /// The full protocol, run headlessly.
    Protocol(Arc<Engine>),
    /// The bare question sent straight to the LLM.
    Baseline(Arc<LlmGateway>),
}

impl Answerer {
    pub fn name(&self) -> &'static str {
        match self {
            Answerer::Protocol(_) => "protocol",
            Answerer::Baseline(_) => "baseline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Live,
    Record,
    Replay,
}

/// Display text of the first answer column: `<var>Label` when present,
/// otherwise the Wikidata id or raw value. Yes/no questions answer by
/// whether any row came back.
pub fn answer_from_results(table: &SparqlResultTable, category: Category) -> String {
    if category == Category::YesNo {
        return if table.is_empty() { "no" } else { "yes" }.to_string();
    }
    let Some(col) = table.columns.iter().position(|c| !c.ends_with("Label")) else {
        return String::new();
    };
    let label = table.column_index(&format!("{}Label", table.columns[col]));
    let mut answers: Vec<String> = Vec::new();
    for row in &table.rows {
        let text = match label.map(|i| &row[i]) {
            Some(c @ Cell::Literal { .. }) => c.text().to_string(),
            _ => match &row[col] {
                Cell::Iri { value } => value.rsplit('/').next().unwrap_or(value).to_string(),
                other => other.text().to_string(),
            },
        };
        if !text.is_empty() && !answers.contains(&text) {
            answers.push(text);
        }
    }
    answers.join("; ")
}

fn cassette_path(dir: &Path, answerer: &str, id: &str) -> PathBuf {
    dir.join(answerer).join(format!("{id}.ndjson"))
}

fn open_cassette(mode: EvalMode, path: &Path) -> Result<Cassette, String> {
    match mode {
        EvalMode::Live => Ok(Cassette::live()),
        EvalMode::Record => Cassette::record_to(path).map_err(|e| e.to_string()),
        EvalMode::Replay => Cassette::load(path).map_err(|e| e.to_string()),
    }
}

async fn run_one(
    question: &QuestionRecord,
    answerer: &Answerer,
    cassette_dir: &Path,
    mode: EvalMode,
) -> RunRecord {
    let start = Instant::now();
    let name = answerer.name();
    let path = cassette_path(cassette_dir, name, &question.id);
    let outcome: Result<(Option<String>, String), String> = async {
        let mut cassette = open_cassette(mode, &path)?;
        match answerer {
            Answerer::Protocol(engine) => {
                let mut session = engine
                    .start_session_with_id(question.id.clone(), &question.text)
                    .map_err(|e| e.to_string())?;
                engine
                    .run_headless(&mut session, &mut cassette, |_| {})
                    .await
                    .map_err(|e| e.to_string())?;
                let query = session.generated_query.as_ref().map(|q| q.sparql.clone());
                let answer = session
                    .results
                    .as_ref()
                    .map(|t| answer_from_results(t, question.category))
                    .unwrap_or_default();
                Ok((query, answer))
            }
            Answerer::Baseline(llm) => {
                let messages = [
                    ChatMessage::system(BASELINE_PROMPT),
                    ChatMessage::user(question.text.clone()),
                ];
                let reply = llm
                    .chat_complete(&messages, &mut cassette)
                    .await
                    .map_err(|e| e.to_string())?;
                Ok((None, reply.content.trim().to_string()))
            }
        }
    }
    .await;
    let latency_ms = start.elapsed().as_millis() as u64;
    match outcome {
        Ok((produced_query, raw_answer)) => RunRecord {
            question_id: question.id.clone(),
            answerer: name.to_string(),
            judged: judge(&raw_answer, &question.gold, question.category),
            produced_query,
            raw_answer,
            latency_ms,
            error: None,
        },
        Err(e) => RunRecord {
            question_id: question.id.clone(),
            answerer: name.to_string(),
            produced_query: None,
            raw_answer: String::new(),
            judged: Judged::Error,
            latency_ms,
            error: Some(e),
        },
    }
}

/// One record per question, in input order. Failures are recorded as
/// `Judged::Error` and never stop the batch.
pub async fn run_batch(
    questions: &[QuestionRecord],
    answerer: &Answerer,
    cassette_dir: &Path,
    mode: EvalMode,
    parallelism: usize,
) -> Vec<RunRecord> {
    stream::iter(questions)
        .map(|q| run_one(q, answerer, cassette_dir, mode))
        .buffered(parallelism.max(1))
        .collect()
        .await
}
