#![allow(dead_code)]

pub mod bgp;
pub mod http;
pub mod oracle;

use std::collections::{BTreeMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use serde::Deserialize;

use kgqa_core::kg::{HttpRequest, HttpResponse, KgBackend, StubBackend, Transport, TransportError};
use kgqa_core::llm::{completion_body, Cassette, LlmConfig, LlmGateway};
use kgqa_core::protocol::{
    ActionVerb, Clock, Engine, KeDetail, ProtocolConfig, QgDetail, Session, Stage, SubState,
};
use kgqa_core::server::{AppConfig, Budgets, KgConfig};

pub const SCRIPTED_KEY_ENV: &str = "KGQA_SCRIPTED_KEY";

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn demo_dir() -> PathBuf {
    fixtures().join("demo")
}

pub fn demo_graph() -> Arc<StubBackend> {
    Arc::new(StubBackend::load(demo_dir().join("graph.json")).expect("demo graph"))
}

/// Answers chat completions from a fixed list of assistant replies.
pub struct ScriptedTransport {
    model: String,
    replies: Mutex<VecDeque<String>>,
}

impl ScriptedTransport {
    pub fn new(model: &str, replies: &[String]) -> Self {
        Self {
            model: model.to_string(),
            replies: Mutex::new(replies.iter().cloned().collect()),
        }
    }

    pub fn remaining(&self) -> usize {
        self.replies.lock().unwrap().len()
    }
}

#[async_trait]
impl Transport for ScriptedTransport {
    async fn send(&self, _request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let next = self.replies.lock().unwrap().pop_front();
        match next {
            Some(content) => Ok(HttpResponse::ok(completion_body(&self.model, &content))),
            None => Err(TransportError::Disabled("script exhausted".into())),
        }
    }
}

pub fn scripted_gateway(replies: &[String]) -> (Arc<LlmGateway>, Arc<ScriptedTransport>) {
    std::env::set_var(SCRIPTED_KEY_ENV, "scripted");
    let config = LlmConfig {
        api_key_env: SCRIPTED_KEY_ENV.into(),
        ..LlmConfig::default()
    };
    let transport = Arc::new(ScriptedTransport::new(&config.model, replies));
    let gateway = LlmGateway::new(transport.clone(), config).expect("gateway");
    (Arc::new(gateway), transport)
}

/// A gateway that can only replay.
pub fn replay_gateway() -> Arc<LlmGateway> {
    Arc::new(
        LlmGateway::new(
            Arc::new(kgqa_core::kg::FailingTransport::new()),
            LlmConfig::default(),
        )
        .expect("gateway"),
    )
}

pub fn engine(kg: Arc<dyn KgBackend>, llm: Arc<LlmGateway>) -> Engine {
    Engine::new(kg, llm, ProtocolConfig::default())
        .expect("engine")
        .with_clock(Clock::Logical { epoch_ms: 0 })
}

#[derive(Debug, Clone, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub question: String,
    pub replies: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct EvalScripts {
    pub protocol: BTreeMap<String, Vec<String>>,
    pub baseline: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Scripts {
    pub scenarios: Vec<Scenario>,
    pub eval: EvalScripts,
}

pub fn scripts() -> Scripts {
    let text = std::fs::read_to_string(demo_dir().join("scripts.json")).expect("scripts");
    serde_json::from_str(&text).expect("scripts parse")
}

pub fn scenario(name: &str) -> Scenario {
    scripts()
        .scenarios
        .into_iter()
        .find(|s| s.name == name)
        .unwrap_or_else(|| panic!("no scenario {name}"))
}

/// Run a scripted conversation headlessly, recording it.
pub async fn record_headless(id: &str, question: &str, replies: &[String]) -> (Session, Cassette) {
    let (llm, transport) = scripted_gateway(replies);
    let engine = engine(demo_graph(), llm);
    let mut session = engine.start_session_with_id(id, question).expect("session");
    let mut cassette = Cassette::recorder();
    engine
        .run_headless(&mut session, &mut cassette, |_| {})
        .await
        .unwrap_or_else(|e| panic!("{question}: {e}"));
    assert_eq!(transport.remaining(), 0, "unused replies for {question}");
    (session, cassette)
}

/// Replay a checked-in scenario cassette headlessly.
pub async fn replay_headless(id: &str, question: &str, cassette_path: &Path) -> Session {
    let engine = engine(demo_graph(), replay_gateway());
    let mut session = engine.start_session_with_id(id, question).expect("session");
    let mut cassette = Cassette::load(cassette_path).expect("cassette");
    engine
        .run_headless(&mut session, &mut cassette, |_| {})
        .await
        .unwrap_or_else(|e| panic!("{question}: {e}"));
    session
}

pub fn cassette_file(question: &str) -> PathBuf {
    demo_dir()
        .join("cassettes")
        .join(format!("{}.ndjson", kgqa_core::server::slug(question)))
}

/// Replay config over the demo graph; sessions go to `store`.
pub fn demo_app_config(store: &Path) -> AppConfig {
    AppConfig {
        kg: KgConfig::Stub {
            path: demo_dir().join("graph.json"),
        },
        llm: LlmConfig::default(),
        cassette_mode: kgqa_core::llm::CassetteMode::Replay,
        fixture_dir: Some(demo_dir()),
        session_store_dir: store.to_path_buf(),
        listen_address: "127.0.0.1:0".into(),
        budgets: Budgets::default(),
    }
}

/// A minimal assistant turn ending in `verb`.
pub fn action_reply(verb: ActionVerb) -> String {
    let action = match verb {
        ActionVerb::Clarify => "CLARIFY \"Which one do you mean?\"".to_string(),
        ActionVerb::WellFormed => "WELLFORMED".to_string(),
        ActionVerb::Search => "SEARCH \"Titanic\"".to_string(),
        ActionVerb::Properties => "PROPERTIES \"Q44578\"".to_string(),
        ActionVerb::Traverse => "TRAVERSE \"Q102427\" \"P31\"".to_string(),
        ActionVerb::Stop => "STOP".to_string(),
        ActionVerb::BuildQuery => {
            return "Query.\n\n```sparql\nSELECT ?film WHERE { ?film wdt:P166 wd:Q102427 . }\n```\n\n```action\nBUILD_QUERY \"Films that won the award.\"\n```".to_string()
        }
    };
    format!("Next step.\n\n```action\n{action}\n```")
}

/// Replies that take a fresh session to the start of `stage`, and the
/// sub-state it is left in.
pub fn stage_prefix(stage: Stage) -> (Vec<String>, SubState) {
    match stage {
        Stage::QuestionRefinement => (vec![], SubState::START),
        Stage::KgExploration => (
            vec![action_reply(ActionVerb::WellFormed)],
            SubState::KgExploration(KeDetail::FuzzySearchEntity),
        ),
        Stage::QueryGeneration => (
            vec![
                action_reply(ActionVerb::WellFormed),
                action_reply(ActionVerb::Stop),
            ],
            SubState::QueryGeneration(QgDetail::FewShotPrompt),
        ),
        Stage::ResultsSummarization => unreachable!(),
    }
}

/// Feed `replies` and advance until the script runs out.
pub async fn drive_until_exhausted(replies: &[String]) -> Session {
    let (llm, _) = scripted_gateway(replies);
    let engine = engine(demo_graph(), llm);
    let mut session = engine
        .start_session_with_id("t", "Who directed Titanic?")
        .unwrap();
    let mut cassette = Cassette::recorder();
    let _ = engine.advance(&mut session, &mut cassette, |_| {}).await;
    session
}
