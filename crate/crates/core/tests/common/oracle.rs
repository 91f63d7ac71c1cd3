//! Brute-force oracle for query-structure analysis, with triple lists
//! cross-checked against spargebra.

use std::collections::BTreeMap;

use spargebra::algebra::GraphPattern;
use spargebra::term::{NamedNodePattern, TermPattern};

use kgqa_core::sparql::{
    build_query_graph, extract_ids, parse_select, Literal, ParsedQuery, Term, BUILTIN_PREFIXES,
};

const XSD_STRING: &str = "http://www.w3.org/2001/XMLSchema#string";
const LANG_STRING: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#langString";

/// (query, ids expected from extraction, worked out by hand)
pub const CASES: &[(&str, &[&str])] = &[
    ("SELECT ?director WHERE { ?film wdt:P31 wd:Q11424 . ?film wdt:P57 ?director . } LIMIT 10", &["P31", "Q11424", "P57"]),
    ("SELECT ?x WHERE { wd:Q102427 wdt:P31 ?x }", &["Q102427", "P31"]),
    ("SELECT ?film WHERE { ?film wdt:P166 wd:Q102427 }", &["P166", "Q102427"]),
    ("SELECT ?a ?b WHERE { ?a wdt:P26 ?b }", &["P26"]),
    ("SELECT * WHERE { ?s ?p ?o }", &[]),
    ("SELECT ?x WHERE { ?x wdt:P31 wd:Q5 . ?x wdt:P27 wd:Q142 . ?x wdt:P106 wd:Q82955 }", &["P31", "Q5", "P27", "Q142", "P106", "Q82955"]),
    ("SELECT ?x WHERE { ?x wdt:P31 wd:Q5 . ?y wdt:P31 wd:Q5 }", &["P31", "Q5"]),
    ("SELECT ?x ?l WHERE { ?x rdfs:label ?l . ?x wdt:P31 wd:Q515 }", &["P31", "Q515"]),
    ("SELECT ?x WHERE { ?x rdfs:label \"Paris\"@fr }", &[]),
    ("SELECT ?x WHERE { ?x wdt:P1082 10 }", &["P1082"]),
    ("SELECT ?x WHERE { ?x wdt:P577 \"1997\"^^xsd:gYear }", &["P577"]),
    ("SELECT ?x WHERE { ?x wdt:P2048 1.85 }", &["P2048"]),
    ("SELECT ?x WHERE { ?x wdt:P1 true }", &["P1"]),
    ("SELECT ?x WHERE { ?x a wd:Q5 }", &["Q5"]),
    ("SELECT ?x WHERE { ?x <http://www.wikidata.org/prop/direct/P31> <http://www.wikidata.org/entity/Q5> }", &["P31", "Q5"]),
    ("PREFIX ex: <http://example.org/> SELECT ?x WHERE { ?x ex:knows ex:alice }", &[]),
    ("PREFIX ex: <http://example.org/> SELECT ?x WHERE { ?x ex:knows ?y . ?y wdt:P31 wd:Q5 }", &["P31", "Q5"]),
    ("SELECT ?s WHERE { ?s p:P39 ?st . ?st ps:P39 wd:Q11696 . ?st pq:P580 ?start }", &["P39", "Q11696", "P580"]),
    ("SELECT ?x WHERE { ?x wdt:P31 wd:Q5 ; wdt:P19 wd:Q90 }", &["P31", "Q5", "P19", "Q90"]),
    ("SELECT ?x WHERE { ?x wdt:P161 wd:Q51103 , wd:Q192912 }", &["P161", "Q51103", "Q192912"]),
    ("SELECT ?x WHERE { ?x wdt:P31 wd:Q5 ; wdt:P106 wd:Q33999 , wd:Q177220 . }", &["P31", "Q5", "P106", "Q33999", "Q177220"]),
    ("SELECT DISTINCT ?x WHERE { ?x wdt:P31 wd:Q11424 }", &["P31", "Q11424"]),
    ("SELECT ?x WHERE { ?x wdt:P31 wd:Q11424 } ORDER BY ?x LIMIT 5 OFFSET 2", &["P31", "Q11424"]),
    ("SELECT ?winner WHERE { wd:Q56312927 wdt:P1346 ?winner }", &["Q56312927", "P1346"]),
    ("SELECT ?place WHERE { wd:Q56312927 wdt:P1346 ?w . ?w wdt:P19 ?place }", &["Q56312927", "P1346", "P19"]),
    ("SELECT ?p WHERE { wd:Q134541 wdt:P527 ?p . wd:Q1140578 wdt:P161 ?p }", &["Q134541", "P527", "Q1140578", "P161"]),
    ("SELECT ?x ?y ?z WHERE { ?x wdt:P1 ?y . ?y wdt:P2 ?z . ?z wdt:P3 ?x }", &["P1", "P2", "P3"]),
    ("SELECT ?x WHERE { ?x ?p wd:Q42 }", &["Q42"]),
    ("SELECT ?x WHERE { wd:Q42 ?p ?x . ?x ?q wd:Q42 }", &["Q42"]),
    ("SELECT ?x WHERE { ?x schema:description \"a film\"@en }", &[]),
    ("SELECT ?x WHERE { ?x wdt:P31 wd:Q5 . ?x wdt:P31 wd:Q5 }", &["P31", "Q5"]),
    ("SELECT ?b WHERE { wd:Q8337 wdt:P527 ?b . ?b wdt:P577 ?d } ORDER BY ?d", &["Q8337", "P527", "P577"]),
    ("SELECT ?x WHERE { ?x wdt:P2 \"say \\\"hi\\\"\" }", &["P2"]),
    ("SELECT ?x WHERE { <http://example.org/a> <http://example.org/b> ?x }", &[]),
];

fn prefixed(query: &str) -> String {
    let mut out: String = BUILTIN_PREFIXES
        .iter()
        .map(|(p, ns)| format!("PREFIX {p}: <{ns}>\n"))
        .collect();
    out.push_str(query);
    out
}

fn collect_bgp(p: &GraphPattern, out: &mut Vec<spargebra::term::TriplePattern>) {
    match p {
        GraphPattern::Bgp { patterns } => out.extend(patterns.iter().cloned()),
        GraphPattern::Project { inner, .. }
        | GraphPattern::Distinct { inner }
        | GraphPattern::Reduced { inner }
        | GraphPattern::Slice { inner, .. }
        | GraphPattern::OrderBy { inner, .. }
        | GraphPattern::Filter { inner, .. }
        | GraphPattern::Extend { inner, .. } => collect_bgp(inner, out),
        GraphPattern::Join { left, right } => {
            collect_bgp(left, out);
            collect_bgp(right, out);
        }
        other => panic!("unexpected pattern in oracle query: {other:?}"),
    }
}

fn from_term(t: &TermPattern) -> Term {
    match t {
        TermPattern::NamedNode(n) => Term::iri(n.as_str()),
        TermPattern::Variable(v) => Term::var(v.as_str()),
        TermPattern::Literal(l) => {
            let dt = l.datatype().as_str();
            Term::Literal(Literal {
                value: l.value().to_string(),
                datatype: (dt != XSD_STRING && dt != LANG_STRING).then(|| dt.to_string()),
                language: l.language().map(str::to_string),
            })
        }
        other => panic!("unexpected term {other:?}"),
    }
}

fn from_predicate(p: &NamedNodePattern) -> Term {
    match p {
        NamedNodePattern::NamedNode(n) => Term::iri(n.as_str()),
        NamedNodePattern::Variable(v) => Term::var(v.as_str()),
    }
}

/// Triples as the independent parser sees them.
pub fn reference_triples(query: &str) -> Vec<(Term, Term, Term)> {
    let q = spargebra::Query::parse(&prefixed(query), None).expect("reference parser accepts");
    let spargebra::Query::Select { pattern, .. } = q else {
        panic!("not a SELECT")
    };
    let mut triples = Vec::new();
    collect_bgp(&pattern, &mut triples);
    triples
        .iter()
        .map(|t| {
            (
                from_term(&t.subject),
                from_predicate(&t.predicate),
                from_term(&t.object),
            )
        })
        .collect()
}

pub fn sorted<T: Ord + Clone>(xs: &[T]) -> Vec<T> {
    let mut v = xs.to_vec();
    v.sort();
    v
}

pub struct Expected {
    pub nodes: BTreeMap<String, bool>,
    pub edges: Vec<(String, String, String)>,
}

/// Direct set computation over the triple list.
pub fn oracle(parsed: &ParsedQuery, triples: &[(Term, Term, Term)]) -> Expected {
    let key = |t: &Term| parsed.term_text(t);
    let mut nodes = BTreeMap::new();
    for (s, _, o) in triples {
        nodes.insert(key(s), !s.is_variable());
        nodes.insert(key(o), !o.is_variable());
    }
    let edges = triples
        .iter()
        .map(|(s, p, o)| (key(s), key(p), key(o)))
        .collect::<Vec<_>>();
    Expected {
        nodes,
        edges: sorted(&edges),
    }
}

/// Every disagreement between the analyzer and the oracle.
pub fn mismatches() -> Vec<String> {
    let mut mismatches = Vec::new();
    for (query, ids) in CASES {
        let parsed = parse_select(query).unwrap_or_else(|e| panic!("{query}: {e}"));
        let ours: Vec<(Term, Term, Term)> = parsed
            .triples
            .iter()
            .map(|t| (t.subject.clone(), t.predicate.clone(), t.object.clone()))
            .collect();
        let reference = reference_triples(query);
        if sorted(&ours) != sorted(&reference) {
            mismatches.push(format!("{query}: triples differ from reference parser"));
            continue;
        }

        let expected = oracle(&parsed, &reference);
        let graph = build_query_graph(&parsed).unwrap();
        let nodes: BTreeMap<String, bool> = graph
            .nodes
            .iter()
            .map(|n| (n.key.clone(), n.resolved))
            .collect();
        if graph.nodes.len() != nodes.len() {
            mismatches.push(format!("{query}: duplicate node keys"));
        }
        if nodes != expected.nodes {
            mismatches.push(format!("{query}: nodes {nodes:?} != {:?}", expected.nodes));
        }
        let edges: Vec<(String, String, String)> = graph
            .edges
            .iter()
            .map(|e| (e.source.clone(), e.relation.clone(), e.target.clone()))
            .collect();
        if sorted(&edges) != expected.edges {
            mismatches.push(format!("{query}: edges {edges:?}"));
        }
        let got = extract_ids(&parsed).ids;
        if got != *ids {
            mismatches.push(format!("{query}: ids {got:?} != {ids:?}"));
        }
    }
    mismatches
}
