use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Cell {
    Iri {
        value: String,
    },
    Literal {
        value: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        datatype: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        language: Option<String>,
    },
    Unbound,
}

impl Cell {
    pub fn iri(value: impl Into<String>) -> Self {
        Cell::Iri {
            value: value.into(),
        }
    }

    pub fn literal(value: impl Into<String>) -> Self {
        Cell::Literal {
            value: value.into(),
            datatype: None,
            language: None,
        }
    }

    /// Raw value text; empty for unbound cells.
    pub fn text(&self) -> &str {
        match self {
            Cell::Iri { value } | Cell::Literal { value, .. } => value,
            Cell::Unbound => "",
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TableError {
    #[error("duplicate column '{0}'")]
    DuplicateColumn(String),
    #[error("row {row} has {got} cells, expected {expected}")]
    RowWidth {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("malformed SPARQL JSON results: {0}")]
    Json(String),
}

/// Query results: projected variables (without `?`) by rows of cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparqlResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl SparqlResultTable {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<Cell>>) -> Result<Self, TableError> {
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.as_str()) {
                return Err(TableError::DuplicateColumn(c.clone()));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(TableError::RowWidth {
                    row: i,
                    got: row.len(),
                    expected: columns.len(),
                });
            }
        }
        Ok(Self { columns, rows })
    }

    pub fn empty(columns: Vec<String>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Parse an `application/sparql-results+json` document.
    pub fn from_results_json(body: &str) -> Result<Self, TableError> {
        let doc: ResultsDoc =
            serde_json::from_str(body).map_err(|e| TableError::Json(e.to_string()))?;
        let columns = doc.head.vars;
        let rows = doc
            .results
            .bindings
            .into_iter()
            .map(|binding| {
                columns
                    .iter()
                    .map(|var| match binding.get(var) {
                        None => Cell::Unbound,
                        Some(b) => b.to_cell(),
                    })
                    .collect()
            })
            .collect();
        Self::new(columns, rows)
    }

    pub fn to_results_json(&self) -> serde_json::Value {
        let bindings: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut obj = serde_json::Map::new();
                for (col, cell) in self.columns.iter().zip(row) {
                    let value = match cell {
                        Cell::Unbound => continue,
                        Cell::Iri { value } => serde_json::json!({"type": "uri", "value": value}),
                        Cell::Literal {
                            value,
                            datatype,
                            language,
                        } => {
                            let mut b = serde_json::json!({"type": "literal", "value": value});
                            if let Some(dt) = datatype {
                                b["datatype"] = dt.clone().into();
                            }
                            if let Some(lang) = language {
                                b["xml:lang"] = lang.clone().into();
                            }
                            b
                        }
                    };
                    obj.insert(col.clone(), value);
                }
                serde_json::Value::Object(obj)
            })
            .collect();
        serde_json::json!({"head": {"vars": self.columns}, "results": {"bindings": bindings}})
    }

    /// Plain-text grid for terminals.
    pub fn render_text(&self) -> String {
        let mut widths: Vec<usize> = self.columns.iter().map(|c| c.chars().count()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.text().chars().count());
            }
        }
        let line = |cells: Vec<&str>| -> String {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join(" | ")
                .trim_end()
                .to_string()
        };
        let mut out = String::new();
        out.push_str(&line(self.columns.iter().map(String::as_str).collect()));
        out.push('\n');
        out.push_str(
            &widths
                .iter()
                .map(|w| "-".repeat(*w))
                .collect::<Vec<_>>()
                .join("-+-"),
        );
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row.iter().map(Cell::text).collect()));
            out.push('\n');
        }
        out
    }
}

#[derive(Deserialize)]
struct ResultsDoc {
    head: Head,
    #[serde(default)]
    results: Bindings,
}

#[derive(Deserialize)]
struct Head {
    #[serde(default)]
    vars: Vec<String>,
}

#[derive(Deserialize, Default)]
struct Bindings {
    #[serde(default)]
    bindings: Vec<BTreeMap<String, Binding>>,
}

#[derive(Deserialize)]
struct Binding {
    #[serde(rename = "type")]
    kind: String,
    value: String,
    datatype: Option<String>,
    #[serde(rename = "xml:lang")]
    lang: Option<String>,
}

impl Binding {
    fn to_cell(&self) -> Cell {
        match self.kind.as_str() {
            "uri" => Cell::iri(self.value.clone()),
            "bnode" => Cell::iri(format!("_:{}", self.value)),
            _ => Cell::Literal {
                value: self.value.clone(),
                datatype: self.datatype.clone(),
                language: self.lang.clone(),
            },
        }
    }
}
