//! CSV and JSON writers with a fixed 17-significant-digit number format.

use std::fs;
use std::path::{Path, PathBuf};

use bifurcat_core::continuation::BifurcationEvent;
use serde_json::{Map, Number, Value};

use crate::Failure;

/// `x` with 17 significant digits; `NaN`, `inf` and `-inf` otherwise.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn json_num(x: f64) -> Value {
    if x.is_finite() {
        // arbitrary_precision keeps the literal digits
        Value::Number(fmt_num(x).parse::<Number>().expect("formatted float is valid JSON"))
    } else {
        Value::Null
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Missing,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Missing, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_owned())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => fmt_num(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) => json_num(*x),
            Cell::Int(i) => Value::from(*i),
            Cell::Text(s) => Value::from(s.as_str()),
            Cell::Missing => Value::Null,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::csv)).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("cells are UTF-8")
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let obj: Map<String, Value> = self.header.iter().cloned().zip(r.iter().map(Cell::json)).collect();
                Value::Object(obj)
            })
            .collect();
        pretty(&Value::Array(rows))
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

pub fn event_json(e: &BifurcationEvent) -> Value {
    let mut params = Map::new();
    for (n, v) in &e.location.params {
        params.insert(n.as_str().to_owned(), json_num(*v));
    }
    let s = e.location.state;
    let mut location = Map::new();
    location.insert("params".into(), Value::Object(params));
    location.insert("E1".into(), json_num(s.e1));
    location.insert("E2".into(), json_num(s.e2));
    location.insert("M".into(), json_num(s.m));
    let certificates: Map<String, Value> = e.certificates.iter().map(|(k, v)| (k.clone(), json_num(*v))).collect();
    let mut obj = Map::new();
    obj.insert("kind".into(), Value::from(e.kind.as_str()));
    obj.insert("location".into(), Value::Object(location));
    obj.insert("certificates".into(), Value::Object(certificates));
    Value::Object(obj)
}

pub fn events_json(events: &[BifurcationEvent]) -> String {
    pretty(&Value::Array(events.iter().map(event_json).collect()))
}

pub fn failure_json(message: &str, events: &[BifurcationEvent]) -> String {
    let mut obj = Map::new();
    obj.insert("error".into(), Value::from(message));
    obj.insert("events".into(), Value::Array(events.iter().map(event_json).collect()));
    pretty(&Value::Object(obj))
}

/// Writes files under one output directory.
pub struct Sink {
    dir: PathBuf,
}

impl Sink {
    pub fn new(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_owned() })
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf, Failure> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}
