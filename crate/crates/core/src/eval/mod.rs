//! Batch evaluation over categorized question banks.

mod judge;
mod report;
mod run;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use judge::{judge, normalize, JUDGE_RULES};
pub use report::{render_table, report, AccuracyReport, CategoryScore};
pub use run::{answer_from_results, run_batch, Answerer, EvalMode, BASELINE_PROMPT};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
    #[error("question bank is empty")]
    EmptyBank,
    #[error("record {index}: {message}")]
    Record { index: usize, message: String },
    #[error("run record refers to unknown question '{0}'")]
    UnknownQuestion(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    MultiHop,
    Comparative,
    YesNo,
    Generic,
    Intersection,
}

impl Category {
    /// Row order of the accuracy table.
    pub const TABLE_ORDER: [Category; 5] = [
        Category::Comparative,
        Category::YesNo,
        Category::Generic,
        Category::MultiHop,
        Category::Intersection,
    ];

    pub fn display(self) -> &'static str {
        match self {
            Category::MultiHop => "Multi-Hop",
            Category::Comparative => "Comparative",
            Category::YesNo => "Yes/No",
            Category::Generic => "Generic",
            Category::Intersection => "Intersection",
        }
    }
}

impl std::str::FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_alphanumeric())
            .collect::<String>()
            .to_lowercase();
        match key.as_str() {
            "multihop" => Ok(Category::MultiHop),
            "comparative" => Ok(Category::Comparative),
            "yesno" => Ok(Category::YesNo),
            "generic" => Ok(Category::Generic),
            "intersection" => Ok(Category::Intersection),
            _ => Err(format!("unknown category '{s}'")),
        }
    }
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.display())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub text: String,
    pub category: Category,
    /// Accepted answers: strings and/or entity ids.
    pub gold: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuestion {
    id: String,
    category: String,
    text: String,
    gold: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Judged {
    Correct,
    Incorrect,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub question_id: String,
    pub answerer: String,
    pub produced_query: Option<String>,
    pub raw_answer: String,
    pub judged: Judged,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn parse_questions(text: &str) -> Result<Vec<QuestionRecord>, EvalError> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let index = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| EvalError::Record { index, message };
        let raw: RawQuestion = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let category = raw.category.parse::<Category>().map_err(err)?;
        if raw.id.trim().is_empty() {
            return Err(err("id is empty".into()));
        }
        if raw.text.trim().is_empty() {
            return Err(err("text is empty".into()));
        }
        if raw.gold.iter().all(|g| g.trim().is_empty()) {
            return Err(err("gold answer list is empty".into()));
        }
        if !ids.insert(raw.id.clone()) {
            return Err(err(format!("duplicate id '{}'", raw.id)));
        }
        out.push(QuestionRecord {
            id: raw.id,
            text: raw.text,
            category,
            gold: raw.gold,
        });
    }
    if out.is_empty() {
        return Err(EvalError::EmptyBank);
    }
    Ok(out)
}

pub fn load_questions(path: impl AsRef<Path>) -> Result<Vec<QuestionRecord>, EvalError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_questions(&text)
}

pub fn category_counts(questions: &[QuestionRecord]) -> BTreeMap<Category, usize> {
    let mut counts = BTreeMap::new();
    for q in questions {
        *counts.entry(q.category).or_insert(0) += 1;
    }
    counts
}
