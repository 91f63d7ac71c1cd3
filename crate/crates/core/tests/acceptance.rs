//! One PASS/FAIL line per acceptance criterion. Runs offline against the
//! checked-in fixtures.

mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use proptest::test_runner::{Config, TestRunner};
use serde_json::{json, Value};

use kgqa_core::eval::{report, Category, Judged, QuestionRecord, RunRecord};
use kgqa_core::kg::{
    Cell, FixtureTransport, SparqlResultTable, WikidataBackend, WikidataEndpoints,
};
use kgqa_core::protocol::{
    is_complete_trace, legal_verbs, stage_trace, ActionVerb, EventKind, Stage,
};
use kgqa_core::server::Runtime;
use kgqa_core::sparql::{
    build_entity_relation_table, build_query_graph, build_results_graph, parse_select, GraphError,
};

use common::http::{boot, read_events, snapshot, wait_for};
use common::*;

/// Analyzer oracle must finish within this many seconds.
const ORACLE_BUDGET_SECS: f64 = 5.0;
/// Random patterns per property.
const PROPERTY_CASES: u32 = 1000;
/// Accuracy comparisons, in percentage points.
const SCORE_TOLERANCE: f64 = 0.05;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn analyzer_oracle() -> Check {
    let start = Instant::now();
    let found = oracle::mismatches();
    let secs = start.elapsed().as_secs_f64();
    ensure(oracle::CASES.len() >= 30, "fewer than 30 queries")?;
    ensure(
        found.is_empty(),
        format!("{} mismatches: {found:?}", found.len()),
    )?;
    ensure(secs < ORACLE_BUDGET_SECS, format!("took {secs:.2}s"))?;
    Ok(format!(
        "{} queries, 0 mismatches, {secs:.2}s",
        oracle::CASES.len()
    ))
}

fn property_suite() -> Check {
    let mut runner = TestRunner::new(Config {
        cases: PROPERTY_CASES,
        failure_persistence: None,
        ..Config::default()
    });
    let strategy = (
        bgp::bgp(),
        proptest::bool::ANY,
        proptest::option::of(1u64..100),
    );
    runner
        .run(&strategy, |(triples, star, limit)| {
            bgp::check_graph(&triples, star)?;
            bgp::check_round_trip(&triples, star, limit)
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("{PROPERTY_CASES} patterns, 0 failures"))
}

async fn entity_relation_fixture() -> Check {
    let kg = WikidataBackend::new(
        Arc::new(FixtureTransport::replay(fixtures().join("wikidata/kg"))),
        WikidataEndpoints::default(),
    );
    let parsed =
        parse_select("SELECT ?x WHERE { wd:Q102427 wdt:P31 ?x }").map_err(|e| e.to_string())?;
    let ids = kgqa_core::sparql::extract_ids(&parsed).ids;
    let rows = build_entity_relation_table(&ids, &kg)
        .await
        .map_err(|e| e.to_string())?;
    let row = rows
        .iter()
        .find(|r| r.id == "Q102427")
        .ok_or("no row for Q102427")?;
    ensure(
        row.label == "Academy Award for Best Picture",
        format!("label {:?}", row.label),
    )?;
    ensure(
        row.description == "annual award from the Academy of Motion Picture Arts and Sciences",
        format!("description {:?}", row.description),
    )?;
    Ok(format!("{} | {}", row.label, row.description))
}

async fn protocol_trace() -> Check {
    let s = scenario("directors");
    let path = cassette_file(&s.question);
    let session = replay_headless("acceptance", &s.question, &path).await;
    let trace: Vec<&str> = stage_trace(&session.events)
        .iter()
        .map(|s| s.abbrev())
        .collect();
    ensure(
        is_complete_trace(&session.events),
        format!("trace {trace:?}"),
    )?;
    ensure(
        trace == ["QR", "KE", "QG", "RS"],
        format!("trace {trace:?}"),
    )?;

    let mut pairs = 0;
    for stage in [
        Stage::QuestionRefinement,
        Stage::KgExploration,
        Stage::QueryGeneration,
    ] {
        let legal = legal_verbs(stage);
        for verb in ActionVerb::ALL.into_iter().filter(|v| !legal.contains(v)) {
            let (mut replies, before) = stage_prefix(stage);
            replies.push(action_reply(verb));
            let s = drive_until_exhausted(&replies).await;
            let errors: Vec<_> = s
                .events
                .iter()
                .filter(|e| e.kind == EventKind::ProtocolError)
                .collect();
            ensure(
                errors.len() == 1 && errors[0].sub_state == before && s.stage == before,
                format!("{verb} during {}", stage.abbrev()),
            )?;
            pairs += 1;
        }
    }
    ensure(
        legal_verbs(Stage::ResultsSummarization).is_empty(),
        "results stage accepts actions",
    )?;

    let again = replay_headless("acceptance", &s.question, &path).await;
    let a = serde_json::to_string(&session).map_err(|e| e.to_string())?;
    let b = serde_json::to_string(&again).map_err(|e| e.to_string())?;
    ensure(a == b, "replays differ")?;
    Ok(format!(
        "trace {}, {pairs} illegal pairs rejected, replay deterministic ({} bytes)",
        trace.join(" "),
        a.len()
    ))
}

async fn hallucination_surfacing() -> Check {
    let s = scenario("doctored");
    let session = replay_headless("doctored", &s.question, &cassette_file(&s.question)).await;
    let flags: Vec<&str> = session
        .events
        .iter()
        .filter(|e| e.kind == EventKind::Hallucination)
        .map(|e| e.note.as_str())
        .collect();
    ensure(
        flags
            .iter()
            .any(|n| n.contains("never found") && n.contains("Q999999999999")),
        format!("no undiscovered-id flag in {flags:?}"),
    )?;
    let row = session
        .entity_relation_table
        .iter()
        .find(|r| r.id == "Q999999999999")
        .ok_or("no row for the doctored id")?;
    ensure(!row.resolved, "doctored id resolved")?;
    Ok(format!(
        "{} flag event(s), Q999999999999 unresolved",
        flags.len()
    ))
}

fn scoring_exactness() -> Check {
    const N: usize = 24;
    let bank: Vec<QuestionRecord> = Category::TABLE_ORDER
        .iter()
        .flat_map(|c| {
            (0..N).map(move |i| QuestionRecord {
                id: format!("{c:?}{i}"),
                text: String::new(),
                category: *c,
                gold: vec![],
            })
        })
        .collect();
    let columns: [([usize; 5], [f64; 5]); 2] = [
        ([22, 21, 19, 18, 13], [91.7, 87.5, 79.2, 75.0, 54.2]),
        ([5, 13, 8, 4, 3], [20.8, 54.2, 33.3, 16.7, 12.5]),
    ];
    let mut shown = Vec::new();
    for (counts, expected) in columns {
        let records: Vec<RunRecord> = Category::TABLE_ORDER
            .iter()
            .zip(counts)
            .flat_map(|(c, k)| {
                (0..N).map(move |i| RunRecord {
                    question_id: format!("{c:?}{i}"),
                    answerer: "x".into(),
                    produced_query: None,
                    raw_answer: String::new(),
                    judged: if i < k {
                        Judged::Correct
                    } else {
                        Judged::Incorrect
                    },
                    latency_ms: 0,
                    error: None,
                })
            })
            .collect();
        let r = report("x", &records, &bank).map_err(|e| e.to_string())?;
        let got: Vec<f64> = Category::TABLE_ORDER
            .iter()
            .map(|c| r.per_category[c].accuracy)
            .collect();
        for (g, e) in got.iter().zip(expected) {
            ensure(
                (g - e).abs() < SCORE_TOLERANCE,
                format!("{got:?} vs {expected:?}"),
            )?;
        }
        shown.push(format!("{got:?}"));
    }
    Ok(shown.join(" and "))
}

fn results_join() -> Check {
    let queries = [
        "SELECT ?v1 WHERE { ?v1 wdt:P31 wd:Q5 . }",
        "SELECT ?v1 ?v2 WHERE { ?v1 wdt:P57 ?v2 . }",
        "SELECT ?v1 ?v2 ?v3 WHERE { ?v1 wdt:P57 ?v2 . ?v2 wdt:P19 ?v3 . }",
    ];
    let id = |r: usize, v: usize| format!("Q{}", 1000 * v + r);
    let table = |vars: usize, rows: usize| {
        SparqlResultTable::new(
            (1..=vars).map(|v| format!("v{v}")).collect(),
            (0..rows)
                .map(|r| {
                    (1..=vars)
                        .map(|v| Cell::iri(format!("http://www.wikidata.org/entity/{}", id(r, v))))
                        .collect()
                })
                .collect(),
        )
        .expect("table")
    };
    let mut combos = 0;
    for rows in [0, 1, 5] {
        for vars in 1..=3 {
            let parsed = parse_select(queries[vars - 1]).map_err(|e| e.to_string())?;
            let graph = build_query_graph(&parsed).map_err(|e| e.to_string())?;
            let projected: Vec<String> = parsed.projected_variables().map(str::to_string).collect();
            let g = build_results_graph(&graph, &projected, &table(vars, rows))
                .map_err(|e| e.to_string())?;
            ensure(
                g.tables().count() == vars,
                format!("R={rows} V={vars}: table count"),
            )?;
            for t in g.tables() {
                let v: usize = t.variable[1..].parse().map_err(|_| "variable name")?;
                let identity = t.rows.len() == rows
                    && t.rows
                        .iter()
                        .enumerate()
                        .all(|(i, r)| r.id.as_deref() == Some(id(i, v).as_str()));
                ensure(
                    identity,
                    format!("R={rows} V={vars}: {} rows", t.rows.len()),
                )?;
            }
            combos += 1;
        }
    }
    let parsed = parse_select(queries[2]).map_err(|e| e.to_string())?;
    let graph = build_query_graph(&parsed).map_err(|e| e.to_string())?;
    let projected: Vec<String> = parsed.projected_variables().map(str::to_string).collect();
    match build_results_graph(&graph, &projected, &table(2, 3)) {
        Err(GraphError::Join { .. }) => {}
        other => return Err(format!("mismatched projection gave {other:?}")),
    }
    Ok(format!(
        "{combos} (R, V) combinations, mismatch raises a join error"
    ))
}

async fn service_round_trip() -> Check {
    let store = tempfile::tempdir().map_err(|e| e.to_string())?;
    let client = reqwest::Client::new();
    let s = scenario("directors");
    let (server, base) = boot(store.path()).await;

    let created: Value = client
        .post(format!("{base}/api/sessions"))
        .json(&json!({ "question": s.question }))
        .send()
        .await
        .map_err(|e| e.to_string())?
        .json()
        .await
        .map_err(|e| e.to_string())?;
    let id = created["sessionId"]
        .as_str()
        .ok_or("no session id")?
        .to_string();
    wait_for(&client, &base, &id, |v| v["flags"]["awaitingUser"] == true).await;
    let refused = client
        .post(format!("{base}/api/sessions/{id}/execute"))
        .send()
        .await
        .map_err(|e| e.to_string())?
        .status();
    ensure(
        refused == 409,
        format!("execute before a query gave {refused}"),
    )?;

    client
        .post(format!("{base}/api/sessions/{id}/message"))
        .json(&json!({ "text": kgqa_core::protocol::AUTO_REPLY }))
        .send()
        .await
        .map_err(|e| e.to_string())?;
    let events = read_events(&client, &base, &id, "queryEmitted").await;
    ensure(
        events.len() >= 3,
        format!("{} events streamed", events.len()),
    )?;
    let before = wait_for(&client, &base, &id, |v| v["flags"]["canExecute"] == true).await;
    server.shutdown().await.map_err(|e| e.to_string())?;

    let (server, base) = boot(store.path()).await;
    let after = snapshot(&client, &base, &id).await;
    server.shutdown().await.map_err(|e| e.to_string())?;
    ensure(before == after, "snapshot changed across restart")?;

    let mut no_fixtures = demo_app_config(store.path());
    no_fixtures.fixture_dir = None;
    ensure(
        Runtime::from_config(no_fixtures).is_err(),
        "replay without fixtures started",
    )?;
    Ok(format!(
        "{} events streamed, snapshot identical after restart, early execute 409",
        events.len()
    ))
}

fn line(name: &str, result: &Check) -> bool {
    match result {
        Ok(detail) => {
            println!("PASS {name}: {detail}");
            true
        }
        Err(why) => {
            println!("FAIL {name}: {why}");
            false
        }
    }
}

fn main() {
    let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
    let timeout = Duration::from_secs(60);
    let run = |f: std::pin::Pin<Box<dyn std::future::Future<Output = Check>>>| {
        rt.block_on(async {
            tokio::time::timeout(timeout, f)
                .await
                .unwrap_or_else(|_| Err("timed out".into()))
        })
    };
    let results = [
        ("analyzer oracle suite", analyzer_oracle()),
        ("property suite", property_suite()),
        (
            "entity-relation fixture",
            run(Box::pin(entity_relation_fixture())),
        ),
        ("protocol trace", run(Box::pin(protocol_trace()))),
        (
            "hallucination surfacing",
            run(Box::pin(hallucination_surfacing())),
        ),
        ("scoring exactness", scoring_exactness()),
        ("results-graph join", results_join()),
        ("service round-trip", run(Box::pin(service_round_trip()))),
    ];
    let passed = results.iter().filter(|(name, r)| line(name, r)).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
