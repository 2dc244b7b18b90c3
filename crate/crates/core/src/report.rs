//! Plain-text artifacts: flat JSON records, CSV tables and verdict files.
//!
//! Numbers are written with 17 significant digits so they round-trip.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

/// A scalar in a flat JSON record.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(f64),
    Integer(i64),
    Bool(bool),
    Text(String),
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Number(v)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Integer(v as i64)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

pub fn format_number(v: f64) -> String {
    format!("{v:.16e}")
}

fn json_value(v: &Value) -> String {
    match v {
        // JSON has no infinities; those become strings
        Value::Number(x) if x.is_finite() => format_number(*x),
        Value::Number(x) => serde_json::to_string(&x.to_string()).expect("string serializes"),
        Value::Integer(i) => i.to_string(),
        Value::Bool(b) => b.to_string(),
        Value::Text(s) => serde_json::to_string(s).expect("string serializes"),
    }
}

/// `{"key": value, ...}` in the given order, one entry per line.
pub fn json_object(entries: &[(String, Value)]) -> String {
    let mut out = String::from("{\n");
    for (i, (k, v)) in entries.iter().enumerate() {
        let sep = if i + 1 < entries.len() { "," } else { "" };
        let key = serde_json::to_string(k).expect("string serializes");
        let _ = writeln!(out, "  {key}: {}{sep}", json_value(v));
    }
    out.push_str("}\n");
    out
}

/// A named numeric table. Missing cells are `NaN` and print empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|v| {
                    if v.is_nan() {
                        String::new()
                    } else {
                        format_number(*v)
                    }
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assertion {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// What an experiment or CLI command leaves behind.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentResult {
    pub name: String,
    pub params: Vec<(String, Value)>,
    pub tables: Vec<Table>,
    pub assertions: Vec<Assertion>,
    pub notes: Vec<String>,
}

impl ExperimentResult {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            ..Self::default()
        }
    }

    pub fn param(&mut self, key: &str, value: impl Into<Value>) {
        self.params.push((key.to_string(), value.into()));
    }

    pub fn check(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.assertions.push(Assertion {
            name: name.to_string(),
            pass,
            detail: detail.into(),
        });
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn assertion(&self, name: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.name == name)
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }

    /// One `PASS name: detail` line per assertion, then the overall verdict
    /// and the notes.
    pub fn verdict_text(&self) -> String {
        let mut out = String::new();
        for a in &self.assertions {
            let tag = if a.pass { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "{tag} {}: {}", a.name, a.detail);
        }
        let _ = writeln!(
            out,
            "verdict: {}",
            if self.passed() { "PASS" } else { "FAIL" }
        );
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }

    /// Writes `parameters.json`, `<table>.csv` and `verdict.txt` into `dir`.
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        let mut params = vec![("experiment".to_string(), Value::Text(self.name.clone()))];
        params.extend(self.params.iter().cloned());
        fs::write(dir.join("parameters.json"), json_object(&params))?;
        for t in &self.tables {
            fs::write(dir.join(format!("{}.csv", t.name)), t.to_csv())?;
        }
        fs::write(dir.join("verdict.txt"), self.verdict_text())
    }
}
