use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{Category, EvalError, Judged, QuestionRecord, RunRecord, JUDGE_RULES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub n: usize,
    pub correct: usize,
    /// Percent, rounded half-up to one decimal.
    pub accuracy: f64,
}

impl CategoryScore {
    pub fn new(correct: usize, n: usize) -> Self {
        Self {
            n,
            correct,
            accuracy: accuracy_tenths(correct, n) as f64 / 10.0,
        }
    }
}

/// `round_half_up(1000 * correct / n)` in exact integer arithmetic.
pub(crate) fn accuracy_tenths(correct: usize, n: usize) -> u64 {
    if n == 0 {
        return 0;
    }
    let (c, n) = (correct as u64, n as u64);
    (2000 * c + n) / (2 * n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub answerer: String,
    pub rules: String,
    pub per_category: BTreeMap<Category, CategoryScore>,
    pub overall: CategoryScore,
    /// Categories with no records, left out of the table.
    pub omitted: Vec<Category>,
}

pub fn report(
    answerer: &str,
    records: &[RunRecord],
    bank: &[QuestionRecord],
) -> Result<AccuracyReport, EvalError> {
    let categories: HashMap<&str, Category> =
        bank.iter().map(|q| (q.id.as_str(), q.category)).collect();
    let mut tally: BTreeMap<Category, (usize, usize)> = BTreeMap::new();
    for r in records {
        let cat = *categories
            .get(r.question_id.as_str())
            .ok_or_else(|| EvalError::UnknownQuestion(r.question_id.clone()))?;
        let entry = tally.entry(cat).or_insert((0, 0));
        entry.1 += 1;
        if r.judged == Judged::Correct {
            entry.0 += 1;
        }
    }
    let per_category: BTreeMap<Category, CategoryScore> = tally
        .iter()
        .map(|(cat, (c, n))| (*cat, CategoryScore::new(*c, *n)))
        .collect();
    let (c, n) = tally
        .values()
        .fold((0, 0), |(c, n), (dc, dn)| (c + dc, n + dn));
    let omitted = Category::TABLE_ORDER
        .into_iter()
        .filter(|cat| !per_category.contains_key(cat))
        .collect();
    Ok(AccuracyReport {
        answerer: answerer.to_string(),
        rules: JUDGE_RULES.to_string(),
        per_category,
        overall: CategoryScore::new(c, n),
        omitted,
    })
}

/// Aligned text table with one accuracy column per report.
pub fn render_table(reports: &[AccuracyReport]) -> String {
    let mut header = vec!["Question Type".to_string()];
    header.extend(reports.iter().map(|r| format!("{} Accuracy", r.answerer)));
    let mut rows: Vec<Vec<String>> = vec![header];
    let cell = |s: Option<&CategoryScore>| match s {
        Some(s) => format!("{:.1}% ({}/{})", s.accuracy, s.correct, s.n),
        None => "-".to_string(),
    };
    for cat in Category::TABLE_ORDER {
        if reports.iter().all(|r| !r.per_category.contains_key(&cat)) {
            continue;
        }
        let mut row = vec![cat.display().to_string()];
        row.extend(reports.iter().map(|r| cell(r.per_category.get(&cat))));
        rows.push(row);
    }
    let mut overall = vec!["Overall".to_string()];
    overall.extend(reports.iter().map(|r| cell(Some(&r.overall))));
    rows.push(overall);

    let cols = rows[0].len();
    let widths: Vec<usize> = (0..cols)
        .map(|i| rows.iter().map(|r| r[i].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 || i == rows.len() - 2 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (cols - 1)));
            out.push('\n');
        }
    }
    for r in reports {
        for cat in &r.omitted {
            out.push_str(&format!(
                "note: {}: no {} questions were run\n",
                r.answerer,
                cat.display()
            ));
        }
    }
    out
}
