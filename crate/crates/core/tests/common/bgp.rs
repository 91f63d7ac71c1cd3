//! Random basic graph patterns and the invariants they must satisfy.

use std::collections::BTreeSet;

use proptest::prelude::*;

use kgqa_core::sparql::{build_query_graph, parse_select};

#[derive(Debug, Clone)]
pub enum G {
    Var(u8),
    /// Entity id, written prefixed or as a full IRI.
    Entity(u16, bool),
    Str(String),
    Lang(String, &'static str),
    Int(u16),
}

impl G {
    pub fn text(&self) -> String {
        match self {
            G::Var(n) => format!("?v{n}"),
            G::Entity(n, true) => format!("wd:Q{n}"),
            G::Entity(n, false) => format!("<http://www.wikidata.org/entity/Q{n}>"),
            G::Str(s) => quote(s),
            G::Lang(s, l) => format!("{}@{l}", quote(s)),
            G::Int(n) => n.to_string(),
        }
    }

    /// Identity independent of spelling.
    pub fn key(&self) -> String {
        match self {
            G::Var(n) => format!("?v{n}"),
            G::Entity(n, _) => format!("Q{n}"),
            G::Str(s) => format!("s:{s}"),
            G::Lang(s, l) => format!("l:{s}@{l}"),
            G::Int(n) => format!("i:{n}"),
        }
    }

    pub fn is_var(&self) -> bool {
        matches!(self, G::Var(_))
    }
}

pub fn quote(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

pub fn subject() -> impl Strategy<Value = G> {
    prop_oneof![
        (0u8..6).prop_map(G::Var),
        (1u16..60, any::<bool>()).prop_map(|(n, p)| G::Entity(n, p)),
    ]
}

pub fn object() -> impl Strategy<Value = G> {
    prop_oneof![
        3 => (0u8..6).prop_map(G::Var),
        3 => (1u16..60, any::<bool>()).prop_map(|(n, p)| G::Entity(n, p)),
        1 => "[a-z \"\\\\\n\té#{}.;]{0,8}".prop_map(G::Str),
        1 => ("[a-z ]{1,6}", prop_oneof![Just("en"), Just("fr"), Just("en-gb")])
            .prop_map(|(s, l)| G::Lang(s, l)),
        1 => (0u16..5000).prop_map(G::Int),
    ]
}

pub fn predicate() -> impl Strategy<Value = String> {
    prop_oneof![
        4 => (1u16..40).prop_map(|n| format!("wdt:P{n}")),
        1 => (0u8..6).prop_map(|n| format!("?v{n}")),
        1 => Just("a".to_string()),
        1 => Just("rdfs:label".to_string()),
    ]
}

pub fn bgp() -> impl Strategy<Value = Vec<(G, String, G)>> {
    prop::collection::vec((subject(), predicate(), object()), 1..12)
}

pub fn render(triples: &[(G, String, G)], star: bool) -> String {
    let body: Vec<String> = triples
        .iter()
        .map(|(s, p, o)| format!("{} {p} {} .", s.text(), o.text()))
        .collect();
    let projection = if star {
        "*".to_string()
    } else {
        let vars: BTreeSet<String> = triples
            .iter()
            .flat_map(|(s, _, o)| [s, o])
            .filter(|t| t.is_var())
            .map(|t| t.text())
            .collect();
        if vars.is_empty() {
            "*".to_string()
        } else {
            vars.into_iter().collect::<Vec<_>>().join(" ")
        }
    };
    format!("SELECT {projection} WHERE {{\n  {}\n}}", body.join("\n  "))
}

/// Graph shape invariants for one generated pattern.
pub fn check_graph(triples: &[(G, String, G)], star: bool) -> Result<(), TestCaseError> {
    let text = render(triples, star);
    let parsed = parse_select(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
    prop_assert_eq!(parsed.triples.len(), triples.len());

    let graph = build_query_graph(&parsed).unwrap();
    prop_assert_eq!(graph.edges.len(), triples.len());

    let distinct: BTreeSet<String> = triples
        .iter()
        .flat_map(|(s, _, o)| [s.key(), o.key()])
        .collect();
    prop_assert_eq!(graph.nodes.len(), distinct.len());

    for node in &graph.nodes {
        prop_assert_eq!(node.resolved, !node.key.starts_with('?'));
    }
    let vars: BTreeSet<String> = triples
        .iter()
        .flat_map(|(s, _, o)| [s, o])
        .filter(|t| t.is_var())
        .map(|t| t.key())
        .collect();
    prop_assert_eq!(
        graph.nodes.iter().filter(|n| !n.resolved).count(),
        vars.len()
    );

    let keys: BTreeSet<&str> = graph.nodes.iter().map(|n| n.key.as_str()).collect();
    prop_assert_eq!(keys.len(), graph.nodes.len());
    for e in &graph.edges {
        prop_assert!(keys.contains(e.source.as_str()) && keys.contains(e.target.as_str()));
    }
    Ok(())
}

/// parse, serialize, parse again: same query, same text.
pub fn check_round_trip(
    triples: &[(G, String, G)],
    star: bool,
    limit: Option<u64>,
) -> Result<(), TestCaseError> {
    let mut text = render(triples, star);
    if let Some(l) = limit {
        text.push_str(&format!(" LIMIT {l}"));
    }
    let first = parse_select(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
    let rendered = first.to_sparql();
    let second =
        parse_select(&rendered).map_err(|e| TestCaseError::fail(format!("{e}\n{rendered}")))?;
    prop_assert_eq!(&first, &second);
    prop_assert_eq!(rendered, second.to_sparql());
    Ok(())
}
