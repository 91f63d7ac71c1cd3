use std::io::Read;
use std::path::Path;

use kgqa_core::eval::{
    load_questions, render_table, report, run_batch, Answerer, EvalMode, QuestionRecord,
};
use kgqa_core::llm::{CassetteMode, Role};
use kgqa_core::protocol::{PayloadRef, ProtocolError};
use kgqa_core::server::{kg_backend, AppConfig, ConfigError, Runtime, ServerError};
use kgqa_core::sparql::{
    build_entity_relation_table, build_query_graph, extract_ids, parse_select,
};
use kgqa_core::Session;

use crate::Which;

/// A failed command and the exit code it maps to.
pub enum Failure {
    /// Bad input file or I/O trouble.
    Input(String),
    Config(String),
    Protocol(String),
    Transport(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Config(_) => 2,
            Failure::Protocol(_) => 3,
            Failure::Transport(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Input(m)
            | Failure::Config(m)
            | Failure::Protocol(m)
            | Failure::Transport(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<ProtocolError> for Failure {
    fn from(e: ProtocolError) -> Self {
        if e.is_transport() {
            Failure::Transport(e.to_string())
        } else {
            Failure::Protocol(e.to_string())
        }
    }
}

impl From<ServerError> for Failure {
    fn from(e: ServerError) -> Self {
        match e {
            ServerError::Config(c) => c.into(),
            ServerError::Bind { .. } => Failure::Transport(e.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

fn load_config(path: &Path) -> Result<AppConfig, Failure> {
    let mut config = AppConfig::load(path)?;
    config.apply_env(|k| std::env::var(k).ok())?;
    Ok(config)
}

/// Prints messages and events that appeared since the last call.
#[derive(Default)]
struct Printer {
    messages: usize,
    events: usize,
}

impl Printer {
    fn show(&mut self, session: &Session) {
        for e in &session.events[self.events.min(session.events.len())..] {
            if let Some(PayloadRef::Message { index }) = e.payload_ref {
                self.messages_through(session, index + 1);
            }
            println!("{e}");
        }
        self.events = session.events.len();
        self.messages_through(session, session.history.len());
    }

    fn messages_through(&mut self, session: &Session, end: usize) {
        let end = end.min(session.history.len());
        for m in session.history.get(self.messages..end).unwrap_or_default() {
            match m.role {
                Role::User => println!("user> {}", m.content),
                Role::Assistant => println!("assistant> {}", m.content.trim()),
                Role::System => {}
            }
        }
        self.messages = self.messages.max(end);
    }
}

async fn run_question(runtime: &Runtime, question: &str) -> Result<(), Failure> {
    let engine = &runtime.engine;
    let mut cassette = runtime
        .open_cassette(question, 0)
        .map_err(|e| Failure::from(ProtocolError::Llm(e)))?;
    let mut session = engine.start_session(question)?;
    let mut printer = Printer::default();
    let result = engine
        .run_headless(&mut session, &mut cassette, |s| printer.show(s))
        .await;
    printer.show(&session);
    result?;
    if let Some(q) = &session.generated_query {
        println!("\nquery:\n{}", q.sparql.trim_end());
        println!("explanation: {}", q.explanation);
    }
    if let Some(t) = &session.results {
        println!(
            "\nresults ({} rows):\n{}",
            t.rows.len(),
            t.render_text().trim_end()
        );
    }
    if let Some(s) = &session.summary {
        println!("\nsummary (LLM-generated): {}", s.content.trim());
    }
    Ok(())
}

pub async fn ask(config: &Path, question: &str) -> Result<(), Failure> {
    let runtime = Runtime::from_config(load_config(config)?)?;
    run_question(&runtime, question).await
}

pub async fn serve(config: &Path) -> Result<(), Failure> {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .init();
    let runtime = Runtime::from_config(load_config(config)?)?;
    let server = kgqa_core::server::start(runtime).await?;
    println!("listening on http://{}", server.addr());
    tokio::signal::ctrl_c()
        .await
        .map_err(|e| Failure::Input(format!("waiting for ctrl-c: {e}")))?;
    server.shutdown().await?;
    Ok(())
}

pub async fn graph(config: &Path, file: &Path, labels: bool) -> Result<(), Failure> {
    let text = if file == Path::new("-") {
        let mut s = String::new();
        std::io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| Failure::Input(format!("reading standard input: {e}")))?;
        s
    } else {
        std::fs::read_to_string(file)
            .map_err(|e| Failure::Input(format!("reading {}: {e}", file.display())))?
    };
    let parsed = parse_select(&text).map_err(|e| Failure::Input(e.to_string()))?;
    let mut g = build_query_graph(&parsed).map_err(|e| Failure::Input(e.to_string()))?;
    if labels {
        let config = load_config(config)?;
        config.validate()?;
        let kg = kg_backend(&config)?;
        let rows = build_entity_relation_table(&extract_ids(&parsed).ids, kg.as_ref())
            .await
            .map_err(|e| Failure::Transport(e.to_string()))?;
        g.apply_labels(&rows);
    }
    let json = serde_json::to_string_pretty(&g).map_err(|e| Failure::Input(e.to_string()))?;
    println!("{json}");
    Ok(())
}

fn eval_mode(mode: CassetteMode) -> EvalMode {
    match mode {
        CassetteMode::Live => EvalMode::Live,
        CassetteMode::Record => EvalMode::Record,
        CassetteMode::Replay => EvalMode::Replay,
    }
}

fn answerers(runtime: &Runtime, which: Which) -> Vec<Answerer> {
    let protocol = Answerer::Protocol(runtime.engine.clone());
    let baseline = Answerer::Baseline(runtime.llm.clone());
    match which {
        Which::Protocol => vec![protocol],
        Which::Baseline => vec![baseline],
        Which::Both => vec![protocol, baseline],
    }
}

async fn score(
    runtime: &Runtime,
    bank: &[QuestionRecord],
    which: Which,
    out: Option<&Path>,
    parallelism: usize,
) -> Result<(), Failure> {
    let mode = eval_mode(runtime.mode());
    let cassettes = match (runtime.eval_dir(), out) {
        (Some(d), _) => d,
        (None, Some(o)) => o.join("cassettes"),
        (None, None) => return Err(Failure::Config("recording needs fixture_dir".into())),
    };
    let mut reports = Vec::new();
    for answerer in answerers(runtime, which) {
        let records = run_batch(bank, &answerer, &cassettes, mode, parallelism).await;
        let r =
            report(answerer.name(), &records, bank).map_err(|e| Failure::Input(e.to_string()))?;
        if let Some(out) = out {
            let io = |e: std::io::Error| Failure::Input(format!("{}: {e}", out.display()));
            std::fs::create_dir_all(out).map_err(io)?;
            let lines: String = records
                .iter()
                .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
                .collect();
            std::fs::write(
                out.join(format!("{}.records.ndjson", answerer.name())),
                lines,
            )
            .map_err(io)?;
            let json = serde_json::to_string_pretty(&r).expect("report serializes");
            std::fs::write(out.join(format!("{}.report.json", answerer.name())), json)
                .map_err(io)?;
        }
        let errors = records.iter().filter(|r| r.error.is_some()).count();
        if errors > 0 {
            eprintln!(
                "{}: {errors} question(s) failed; see the run records",
                answerer.name()
            );
        }
        reports.push(r);
    }
    print!("{}", render_table(&reports));
    Ok(())
}

pub async fn eval(
    config: &Path,
    bank: &Path,
    which: Which,
    out: &Path,
    parallelism: usize,
) -> Result<(), Failure> {
    let questions = load_questions(bank).map_err(|e| Failure::Input(e.to_string()))?;
    let runtime = Runtime::from_config(load_config(config)?)?;
    score(&runtime, &questions, which, Some(out), parallelism).await
}

pub async fn record(
    config: &Path,
    questions: &[String],
    bank: Option<&Path>,
) -> Result<(), Failure> {
    if questions.is_empty() && bank.is_none() {
        return Err(Failure::Input(
            "give at least one question or --bank".into(),
        ));
    }
    let mut config = load_config(config)?;
    config.cassette_mode = CassetteMode::Record;
    let runtime = Runtime::from_config(config)?;
    for q in questions {
        run_question(&runtime, q).await?;
        if let Some(p) = runtime.cassette_path(q) {
            println!("recorded {}", p.display());
        }
    }
    if let Some(bank) = bank {
        let questions = load_questions(bank).map_err(|e| Failure::Input(e.to_string()))?;
        score(&runtime, &questions, Which::Both, None, 1).await?;
    }
    Ok(())
}
