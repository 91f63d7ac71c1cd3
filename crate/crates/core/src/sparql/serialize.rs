use std::fmt::Write;

use super::{Literal, ParsedQuery, PrefixTable, Term, XSD};

pub(crate) fn term_text(term: &Term, table: &PrefixTable) -> String {
    match term {
        Term::Variable { name } => format!("?{name}"),
        Term::Iri { iri } => iri_text(iri, table),
        Term::Literal(lit) => literal_text(lit, table),
    }
}

fn iri_text(iri: &str, table: &PrefixTable) -> String {
    table.compact(iri).unwrap_or_else(|| format!("<{iri}>"))
}

fn literal_text(lit: &Literal, table: &PrefixTable) -> String {
    if let Some(dt) = &lit.datatype {
        if let Some(kind) = dt.strip_prefix(XSD) {
            let bare = match kind {
                "integer" => is_integer(&lit.value),
                "decimal" => is_decimal(&lit.value),
                "boolean" => lit.value == "true" || lit.value == "false",
                _ => false,
            };
            if bare {
                return lit.value.clone();
            }
        }
    }
    let mut out = String::with_capacity(lit.value.len() + 2);
    out.push('"');
    for ch in lit.value.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    if let Some(lang) = &lit.language {
        out.push('@');
        out.push_str(lang);
    } else if let Some(dt) = &lit.datatype {
        out.push_str("^^");
        out.push_str(&iri_text(dt, table));
    }
    out
}

fn is_integer(s: &str) -> bool {
    let digits = s.strip_prefix('-').unwrap_or(s);
    !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
}

fn is_decimal(s: &str) -> bool {
    let body = s.strip_prefix('-').unwrap_or(s);
    match body.split_once('.') {
        Some((int, frac)) => {
            int.bytes().all(|b| b.is_ascii_digit())
                && !frac.is_empty()
                && frac.bytes().all(|b| b.is_ascii_digit())
        }
        None => false,
    }
}

pub(crate) fn to_sparql(q: &ParsedQuery) -> String {
    let table = q.prefix_table();
    let mut out = String::new();
    for c in &q.comments {
        let _ = writeln!(out, "#{c}");
    }
    for (prefix, iri) in &q.prefixes {
        let _ = writeln!(out, "PREFIX {prefix}: <{iri}>");
    }
    out.push_str("SELECT ");
    if q.modifiers.distinct {
        out.push_str("DISTINCT ");
    } else if q.modifiers.reduced {
        out.push_str("REDUCED ");
    }
    if q.wildcard {
        out.push('*');
    } else {
        let items: Vec<String> = q
            .projection
            .iter()
            .map(|p| match &p.expression {
                Some(expr) => format!("({expr} AS ?{})", p.variable),
                None => format!("?{}", p.variable),
            })
            .collect();
        out.push_str(&items.join(" "));
    }
    out.push_str(" WHERE {\n");
    for t in &q.triples {
        let _ = writeln!(
            out,
            "  {} {} {} .",
            term_text(&t.subject, &table),
            predicate_text(&t.predicate, &table),
            term_text(&t.object, &table)
        );
    }
    for clause in &q.unsupported_clauses {
        let _ = writeln!(out, "  {clause}");
    }
    out.push('}');
    if let Some(g) = &q.modifiers.group_by {
        let _ = write!(out, "\nGROUP BY {g}");
    }
    if let Some(h) = &q.modifiers.having {
        let _ = write!(out, "\nHAVING {h}");
    }
    if let Some(o) = &q.modifiers.order_by {
        let _ = write!(out, "\nORDER BY {o}");
    }
    if let Some(l) = q.modifiers.limit {
        let _ = write!(out, "\nLIMIT {l}");
    }
    if let Some(o) = q.modifiers.offset {
        let _ = write!(out, "\nOFFSET {o}");
    }
    out.push('\n');
    out
}

fn predicate_text(term: &Term, table: &PrefixTable) -> String {
    match term {
        Term::Iri { iri } if iri == super::RDF_TYPE && table.compact(iri).is_none() => {
            "a".to_string()
        }
        other => term_text(other, table),
    }
}
