use std::sync::OnceLock;

use regex::Regex;

use super::{Category, Judged};

/// Identifies the matching rules below; stored in every report.
pub const JUDGE_RULES: &str = "norm-v1";

/// Case-fold, turn punctuation into spaces, collapse whitespace.
pub fn normalize(s: &str) -> String {
    let folded: String = s
        .to_lowercase()
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c.is_whitespace() {
                c
            } else {
                ' '
            }
        })
        .collect();
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn entity_id(s: &str) -> Option<&str> {
    static ID: OnceLock<Regex> = OnceLock::new();
    let re = ID.get_or_init(|| {
        Regex::new(r"^(?:<?https?://www\.wikidata\.org/(?:entity|wiki)/)?([QP][1-9][0-9]*)>?$")
            .expect("static")
    });
    re.captures(s.trim())
        .map(|c| c.get(1).expect("group").as_str())
}

fn boolean(s: &str) -> Option<bool> {
    match normalize(s).split(' ').next()? {
        "yes" | "true" => Some(true),
        "no" | "false" => Some(false),
        _ => None,
    }
}

/// Correct when any candidate in the answer (the whole text, or any piece
/// split on `;` or newlines) matches any gold alternative.
pub fn judge(raw_answer: &str, gold: &[String], category: Category) -> Judged {
    let mut candidates: Vec<&str> = vec![raw_answer];
    candidates.extend(raw_answer.split([';', '\n']));
    let candidates: Vec<&str> = candidates
        .into_iter()
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .collect();

    if category == Category::YesNo {
        let wanted: Vec<bool> = gold.iter().filter_map(|g| boolean(g)).collect();
        if !wanted.is_empty() {
            let got = candidates.first().and_then(|c| boolean(c));
            return match got {
                Some(b) if wanted.contains(&b) => Judged::Correct,
                _ => Judged::Incorrect,
            };
        }
    }

    for c in &candidates {
        if let Some(id) = entity_id(c) {
            if gold.iter().any(|g| entity_id(g) == Some(id)) {
                return Judged::Correct;
            }
        }
        let n = normalize(c);
        if !n.is_empty() && gold.iter().any(|g| normalize(g) == n) {
            return Judged::Correct;
        }
    }
    Judged::Incorrect
}
