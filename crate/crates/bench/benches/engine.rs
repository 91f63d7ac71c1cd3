use std::sync::Arc;

use criterion::{black_box, criterion_group, criterion_main, Criterion};

use kgqa_bench::demo_dir;
use kgqa_core::kg::{FailingTransport, KgBackend, StubBackend};
use kgqa_core::llm::{request_digest, Cassette, ChatMessage, LlmConfig, LlmGateway};
use kgqa_core::protocol::{Clock, Engine, ProtocolConfig};
use kgqa_core::server::slug;

const QUESTION: &str = "Who won the 2019 Wimbledon men's singles?";

fn engine(c: &mut Criterion) {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let kg = Arc::new(StubBackend::load(demo_dir().join("graph.json")).unwrap());

    c.bench_function("stub_search", |b| {
        b.to_async(&rt).iter(|| async {
            kg.fuzzy_search_entities(black_box("Poseidon"), 10)
                .await
                .unwrap()
        })
    });

    let history: Vec<ChatMessage> = (0..40)
        .map(|i| ChatMessage::user(format!("message {i} with some text in it")))
        .collect();
    c.bench_function("request_digest_40", |b| {
        b.iter(|| request_digest(black_box("gpt-4"), black_box(&history)))
    });

    let llm =
        Arc::new(LlmGateway::new(Arc::new(FailingTransport::new()), LlmConfig::default()).unwrap());
    let engine = Engine::new(kg.clone(), llm, ProtocolConfig::default())
        .unwrap()
        .with_clock(Clock::Logical { epoch_ms: 0 });
    let cassette = Cassette::load(
        demo_dir()
            .join("cassettes")
            .join(format!("{}.ndjson", slug(QUESTION))),
    )
    .unwrap();
    c.bench_function("replay_wimbledon", |b| {
        b.to_async(&rt).iter(|| async {
            let mut session = engine.start_session_with_id("bench", QUESTION).unwrap();
            let mut tape = cassette.clone();
            engine
                .run_headless(&mut session, &mut tape, |_| {})
                .await
                .unwrap();
            session
        })
    });
}

criterion_group!(benches, engine);
criterion_main!(benches);
