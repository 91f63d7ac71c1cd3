//! Wikidata client against hand-authored response fixtures in
//! `fixtures/wikidata/kg`. `KGQA_REGEN=1` rewrites the fixture files from
//! the bodies below; otherwise they are checked for drift.

mod common;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};

use kgqa_core::kg::{
    FailingTransport, FixtureTransport, HttpRequest, HttpResponse, KgBackend, KgError, RecordKind,
    WikidataBackend, WikidataEndpoints,
};
use kgqa_core::sparql::{build_entity_relation_table, extract_ids, parse_select};

const BEST_PICTURE_DESCRIPTION: &str =
    "annual award from the Academy of Motion Picture Arts and Sciences";
const P31_QUERY: &str = "SELECT ?x WHERE { wd:Q102427 wdt:P31 ?x }";
const EMPTY_QUERY: &str = "SELECT ?x WHERE { wd:Q102427 wdt:P57 ?x }";
const MALFORMED_QUERY: &str = "SELECT ?x WHERE {";
const SLOW_QUERY: &str = "SELECT ?s WHERE { ?s ?p ?o }";

fn fixture_dir() -> PathBuf {
    common::fixtures().join("wikidata/kg")
}

fn probe() -> WikidataBackend {
    WikidataBackend::new(
        Arc::new(FailingTransport::new()),
        WikidataEndpoints::default(),
    )
}

fn backend() -> WikidataBackend {
    WikidataBackend::new(
        Arc::new(FixtureTransport::replay(fixture_dir())),
        WikidataEndpoints::default(),
    )
}

fn hit(id: &str, label: &str, description: &str) -> Value {
    json!({
        "id": id,
        "title": id,
        "concepturi": format!("http://www.wikidata.org/entity/{id}"),
        "repository": "wikidata",
        "url": format!("//www.wikidata.org/wiki/{id}"),
        "display": {
            "label": {"value": label, "language": "en"},
            "description": {"value": description, "language": "en"}
        },
        "label": label,
        "description": description,
        "match": {"type": "label", "language": "en", "text": label}
    })
}

fn search_body(term: &str, hits: Vec<Value>) -> String {
    json!({"searchinfo": {"search": term}, "search": hits, "success": 1}).to_string()
}

fn entity(id: &str, label: &str, description: &str) -> (String, Value) {
    let kind = if id.starts_with('P') {
        "property"
    } else {
        "item"
    };
    (
        id.to_string(),
        json!({
            "type": kind,
            "id": id,
            "labels": {"en": {"language": "en", "value": label}},
            "descriptions": {"en": {"language": "en", "value": description}}
        }),
    )
}

fn entities_body(docs: Vec<(String, Value)>) -> String {
    let map: serde_json::Map<String, Value> = docs.into_iter().collect();
    json!({"entities": map, "success": 1}).to_string()
}

fn bindings(var: &str, iris: &[String]) -> String {
    let rows: Vec<Value> = iris
        .iter()
        .map(|i| json!({ var: {"type": "uri", "value": i} }))
        .collect();
    json!({"head": {"vars": [var]}, "results": {"bindings": rows}}).to_string()
}

fn entity_iris(ids: &[&str]) -> Vec<String> {
    ids.iter()
        .map(|i| format!("http://www.wikidata.org/entity/{i}"))
        .collect()
}

fn prop_iris(ids: &[&str]) -> Vec<String> {
    ids.iter()
        .map(|i| format!("http://www.wikidata.org/prop/direct/{i}"))
        .collect()
}

fn p31() -> (String, Value) {
    entity(
        "P31",
        "instance of",
        "that class of which this subject is a particular example and member",
    )
}

fn q102427() -> (String, Value) {
    entity(
        "Q102427",
        "Academy Award for Best Picture",
        BEST_PICTURE_DESCRIPTION,
    )
}

/// Every response the tests rely on, keyed by the request that fetches it.
fn authored() -> Vec<(HttpRequest, HttpResponse)> {
    let b = probe();
    let sparql = |q: &str| b.sparql_request(q, Duration::from_secs(30));
    let relations_50 = ["P31", "P17", "P1027", "P361"];
    vec![
        (
            b.search_request("Academy Award for Best Picture", 5),
            HttpResponse::ok(search_body(
                "Academy Award for Best Picture",
                vec![
                    hit("Q102427", "Academy Award for Best Picture", BEST_PICTURE_DESCRIPTION),
                    hit("Q103360", "Academy Award for Best Director", "award presented annually by the Academy of Motion Picture Arts and Sciences"),
                ],
            )),
        ),
        (
            b.search_request("Poseidon", 10),
            HttpResponse::ok(search_body(
                "Poseidon",
                vec![
                    hit("Q41127", "Poseidon", "ancient Greek god of the sea"),
                    hit("Q1140578", "Poseidon", "2006 film directed by Wolfgang Petersen"),
                    hit("Q1124395", "The Poseidon Adventure", "1972 film directed by Ronald Neame"),
                    hit("Q7233589", "Poseidon", "album"),
                ],
            )),
        ),
        (
            b.get_entities_request(&["Q102427"]),
            HttpResponse::ok(entities_body(vec![q102427()])),
        ),
        (
            b.get_entities_request(&["P57"]),
            HttpResponse::ok(entities_body(vec![entity(
                "P57",
                "director",
                "director(s) of film, TV-series, stageplay, video game or similar",
            )])),
        ),
        (
            b.get_entities_request(&["Q999999999999"]),
            HttpResponse::ok(
                json!({"entities": {"Q999999999999": {"id": "Q999999999999", "missing": ""}}, "success": 1})
                    .to_string(),
            ),
        ),
        (
            b.get_entities_request(&["Q102427", "P31"]),
            HttpResponse::ok(entities_body(vec![q102427(), p31()])),
        ),
        (
            sparql(P31_QUERY),
            HttpResponse::ok(bindings("x", &entity_iris(&["Q4220917", "Q19020"]))),
        ),
        (
            sparql(&WikidataBackend::relations_query("Q102427", 50)),
            HttpResponse::ok(bindings("p", &prop_iris(&relations_50))),
        ),
        (
            b.get_entities_request(&relations_50),
            HttpResponse::ok(entities_body(vec![
                p31(),
                entity("P17", "country", "sovereign state that this item is in (not to be used for human beings)"),
                entity("P1027", "conferred by", "person or organization who grants an award, certification, or role"),
                entity("P361", "part of", "object of which the subject is a part"),
            ])),
        ),
        (
            sparql(&WikidataBackend::relations_query("Q102427", 1)),
            HttpResponse::ok(bindings("p", &prop_iris(&["P31"]))),
        ),
        (
            b.get_entities_request(&["P31"]),
            HttpResponse::ok(entities_body(vec![p31()])),
        ),
        (
            sparql(&WikidataBackend::relations_query("Q999999999999", 50)),
            HttpResponse::ok(bindings("p", &[])),
        ),
        (
            sparql(&WikidataBackend::traverse_query("Q102427", "P31", 20)),
            HttpResponse::ok(bindings("t", &entity_iris(&["Q4220917", "Q19020"]))),
        ),
        (
            b.get_entities_request(&["Q4220917", "Q19020"]),
            HttpResponse::ok(entities_body(vec![
                entity("Q4220917", "film award", "award for films or persons working in the film industry"),
                entity("Q19020", "Academy Awards", "American awards for cinematic achievements"),
            ])),
        ),
        (sparql(EMPTY_QUERY), HttpResponse::ok(bindings("x", &[]))),
        (
            sparql(MALFORMED_QUERY),
            HttpResponse {
                status: 400,
                body: "SPARQL-QUERY: queryStr=SELECT ?x WHERE {\njava.util.concurrent.ExecutionException: org.openrdf.query.MalformedQueryException: Encountered \"<EOF>\" at line 1, column 17.".into(),
            },
        ),
        (
            sparql(SLOW_QUERY),
            HttpResponse {
                status: 500,
                body: "SPARQL-QUERY: queryStr=SELECT ?s WHERE { ?s ?p ?o }\njava.util.concurrent.TimeoutException".into(),
            },
        ),
    ]
}

#[test]
fn fixtures_match_authored_bodies() {
    let dir = fixture_dir();
    let store = FixtureTransport::replay(&dir);
    let mut drift = Vec::new();
    for (req, resp) in authored() {
        let path = store.body_path(&req);
        if std::env::var_os("KGQA_REGEN").is_some() {
            store.store(&req, &resp).unwrap();
        } else if std::fs::read_to_string(&path).ok().as_deref() != Some(resp.body.as_str()) {
            drift.push(req.canonical_key());
        }
    }
    assert!(drift.is_empty(), "fixtures out of date: {drift:?}");
}

#[tokio::test]
async fn search_finds_best_picture() {
    let hits = backend()
        .fuzzy_search_entities("Academy Award for Best Picture", 5)
        .await
        .unwrap();
    let r = hits
        .iter()
        .find(|r| r.id == "Q102427")
        .expect("Q102427 present");
    assert_eq!(r.label, "Academy Award for Best Picture");
    assert_eq!(r.description, BEST_PICTURE_DESCRIPTION);
    assert_eq!(r.kind, RecordKind::Entity);
}

#[tokio::test]
async fn empty_search_term_is_rejected_without_io() {
    let transport = Arc::new(FailingTransport::new());
    let b = WikidataBackend::new(transport.clone(), WikidataEndpoints::default());
    assert!(matches!(
        b.fuzzy_search_entities("", 5).await,
        Err(KgError::Validation(_))
    ));
    assert_eq!(transport.calls(), 0);
}

#[tokio::test]
async fn poseidon_is_ambiguous() {
    let hits = backend()
        .fuzzy_search_entities("Poseidon", 10)
        .await
        .unwrap();
    assert!(hits.len() > 1);
    assert!(hits.iter().any(|r| r.description.contains("film")));
    assert!(hits.iter().any(|r| r.description.contains("god")));
}

#[tokio::test]
async fn records_by_id() {
    let b = backend();
    let r = b.get_records(&["Q102427".into()]).await.unwrap();
    assert_eq!(r.len(), 1);
    assert_eq!(r[0].label, "Academy Award for Best Picture");
    assert_eq!(r[0].description, BEST_PICTURE_DESCRIPTION);
    let p = b.get_records(&["P57".into()]).await.unwrap();
    assert_eq!(
        (p[0].label.as_str(), p[0].kind),
        ("director", RecordKind::Relation)
    );
    assert!(matches!(
        b.get_records(&[]).await,
        Err(KgError::Validation(_))
    ));
    assert!(matches!(
        b.get_records(&["Z12".into()]).await,
        Err(KgError::Validation(_))
    ));
}

#[tokio::test]
async fn relations_match_the_triples_fixture() {
    let b = backend();
    // Oracle: distinct direct-claim predicates in the stored SPARQL response.
    let body = std::fs::read_to_string(FixtureTransport::replay(fixture_dir()).body_path(
        &probe().sparql_request(
            &WikidataBackend::relations_query("Q102427", 50),
            Duration::ZERO,
        ),
    ))
    .unwrap();
    let v: Value = serde_json::from_str(&body).unwrap();
    let expected: BTreeSet<String> = v["results"]["bindings"]
        .as_array()
        .unwrap()
        .iter()
        .filter_map(|row| row["p"]["value"].as_str())
        .filter_map(|iri| iri.strip_prefix("http://www.wikidata.org/prop/direct/"))
        .map(str::to_string)
        .collect();
    let rels = b.get_relations_for_entity("Q102427", 50).await.unwrap();
    let got: BTreeSet<String> = rels.iter().map(|r| r.id.clone()).collect();
    assert_eq!(got, expected);
    let p31 = rels.iter().find(|r| r.id == "P31").unwrap();
    assert_eq!(p31.label, "instance of");
    assert!(rels.iter().all(|r| r.kind == RecordKind::Relation));

    assert_eq!(
        b.get_relations_for_entity("Q102427", 1)
            .await
            .unwrap()
            .len(),
        1
    );
    assert!(b
        .get_relations_for_entity("Q999999999999", 50)
        .await
        .unwrap()
        .is_empty());
}

#[tokio::test]
async fn traverse_returns_tails() {
    let tails = backend().traverse("Q102427", "P31", 20).await.unwrap();
    let ids: Vec<_> = tails.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, vec!["Q4220917", "Q19020"]);
    assert_eq!(tails[0].label, "film award");
}

#[tokio::test]
async fn sparql_outcomes() {
    let b = backend();
    let t = b
        .execute_sparql(P31_QUERY, Duration::from_secs(30))
        .await
        .unwrap();
    assert_eq!(t.columns, vec!["x"]);
    assert!(!t.rows.is_empty());
    let e = b
        .execute_sparql(EMPTY_QUERY, Duration::from_secs(30))
        .await
        .unwrap();
    assert_eq!(e.columns, vec!["x"]);
    assert!(e.rows.is_empty());
    match b
        .execute_sparql(MALFORMED_QUERY, Duration::from_secs(30))
        .await
    {
        Err(KgError::Query(msg)) => assert!(msg.contains("MalformedQueryException")),
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        b.execute_sparql(SLOW_QUERY, Duration::from_secs(30)).await,
        Err(KgError::Timeout(_))
    ));
}

#[tokio::test]
async fn replay_miss_names_the_request() {
    match backend().fuzzy_search_entities("never recorded", 5).await {
        Err(KgError::ReplayMiss { key, .. }) => assert!(key.contains("never+recorded")),
        other => panic!("{other:?}"),
    }
}

#[tokio::test]
async fn entity_relation_table_rows() {
    let b = backend();
    let rows = build_entity_relation_table(&["Q102427".into()], &b)
        .await
        .unwrap();
    assert_eq!(rows[0].label, "Academy Award for Best Picture");
    assert!(build_entity_relation_table(&[], &b)
        .await
        .unwrap()
        .is_empty());
    let rows = build_entity_relation_table(&["Q999999999999".into()], &b)
        .await
        .unwrap();
    assert!(!rows[0].resolved);
}

#[tokio::test]
async fn entity_relation_table_from_query() {
    let parsed = parse_select(P31_QUERY).unwrap();
    let ids = extract_ids(&parsed).ids;
    assert_eq!(ids, vec!["Q102427", "P31"]);
    let rows = build_entity_relation_table(&ids, &backend()).await.unwrap();
    assert_eq!(rows[0].label, "Academy Award for Best Picture");
    assert_eq!(rows[0].description, BEST_PICTURE_DESCRIPTION);
    assert_eq!(rows[1].label, "instance of");
}
