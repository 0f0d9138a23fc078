//! Result tables and their CSV/JSON serializations.

use std::cmp::Ordering;

use serde::Serialize;
use serde_json::{json, Value};

use crate::formula::Formula;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Text,
    Int,
    Formula,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Cell {
    Text(String),
    Int(i64),
    Formula(Formula),
}

impl Cell {
    pub fn kind(&self) -> ColumnKind {
        match self {
            Cell::Text(_) => ColumnKind::Text,
            Cell::Int(_) => ColumnKind::Int,
            Cell::Formula(_) => ColumnKind::Formula,
        }
    }

    pub fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(i) => i.to_string(),
            Cell::Formula(f) => f.to_string(),
        }
    }

    fn compare(&self, other: &Cell) -> Ordering {
        match (self, other) {
            (Cell::Int(a), Cell::Int(b)) => a.cmp(b),
            (Cell::Text(a), Cell::Text(b)) => a.cmp(b),
            _ => self.render().cmp(&other.render()),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Int(i) => json!(i),
            other => json!(other.render()),
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_owned())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<Formula> for Cell {
    fn from(f: Formula) -> Self {
        Cell::Formula(f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResultTable {
    /// Component instance name, e.g. `FeatureEffects`.
    pub name: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
    /// Indices of the columns rows are ordered by.
    pub key: Vec<usize>,
}

impl ResultTable {
    pub fn new(name: &str, columns: &[(&str, ColumnKind)], key: &[usize]) -> Self {
        ResultTable {
            name: name.to_owned(),
            columns: columns.iter().map(|(n, k)| Column { name: (*n).to_owned(), kind: *k }).collect(),
            rows: Vec::new(),
            key: key.to_vec(),
        }
    }

    /// Append a row; panics when its shape does not match the columns.
    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row arity of table {}", self.name);
        for (cell, col) in row.iter().zip(&self.columns) {
            assert_eq!(cell.kind(), col.kind, "column {} of table {}", col.name, self.name);
        }
        self.rows.push(row);
    }

    /// Order rows by the key columns, then by the remaining cells.
    pub fn sort(&mut self) {
        let key = self.key.clone();
        self.rows.sort_by(|a, b| {
            key.iter()
                .map(|&i| a[i].compare(&b[i]))
                .chain(a.iter().zip(b).map(|(x, y)| x.compare(y)))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        });
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Header plus one record per row, LF-terminated; non-numeric cells are quoted.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .quote_style(csv::QuoteStyle::NonNumeric)
            .from_writer(Vec::new());
        let write = |w: &mut csv::Writer<Vec<u8>>| -> csv::Result<()> {
            w.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
            for row in &self.rows {
                w.write_record(row.iter().map(Cell::render))?;
            }
            w.flush()?;
            Ok(())
        };
        write(&mut w).expect("writing to memory");
        String::from_utf8(w.into_inner().expect("in-memory writer")).expect("cells are UTF-8")
    }

    /// `{"name", "columns", "rows"}`, pretty-printed with a trailing newline.
    pub fn to_json(&self) -> String {
        let rows: Vec<Value> = self.rows.iter().map(|r| Value::Array(r.iter().map(Cell::to_json).collect())).collect();
        let doc = json!({ "name": self.name, "columns": self.columns, "rows": rows });
        let mut out = serde_json::to_string_pretty(&doc).expect("json values serialize");
        out.push('\n');
        out
    }
}
