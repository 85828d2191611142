//! Self-describing output files: CSV with a `#` header, JSON with a `run` block.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use super::config::RunConfig;

/// Nine significant digits.
pub fn sig(x: f64) -> String {
    format!("{x:.8e}")
}

/// Rounds every non-integer number in `v` to nine significant digits.
pub fn round_floats(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            sig(x).parse::<f64>().ok().and_then(serde_json::Number::from_f64).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_floats).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_floats(v))).collect()),
        other => other,
    }
}

fn without_nulls(v: Value) -> Value {
    match v {
        Value::Object(o) => Value::Object(o.into_iter().filter(|(_, v)| !v.is_null()).map(|(k, v)| (k, without_nulls(v))).collect()),
        Value::Array(a) => Value::Array(a.into_iter().map(without_nulls).collect()),
        other => other,
    }
}

/// Command name, its own parameters and the resolved configuration.
#[derive(Debug, Clone, Serialize)]
pub struct RunInfo<'a, P: Serialize> {
    pub program: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub params: &'a P,
    pub config: &'a RunConfig,
}

impl<'a, P: Serialize> RunInfo<'a, P> {
    pub fn new(command: &'static str, params: &'a P, config: &'a RunConfig) -> Self {
        RunInfo { program: env!("CARGO_PKG_NAME"), version: env!("CARGO_PKG_VERSION"), command, params, config }
    }

    fn value(&self) -> Value {
        round_floats(serde_json::to_value(self).unwrap_or(Value::Null))
    }

    /// `# key = value` lines.
    pub fn csv_header(&self) -> String {
        let body = toml::to_string(&without_nulls(self.value())).unwrap_or_default();
        body.lines().filter(|l| !l.is_empty()).map(|l| format!("# {l}\n")).collect()
    }

    /// `{"run": ..., <key>: <records>}`.
    pub fn json(&self, fields: Vec<(&str, Value)>) -> String {
        let mut obj = serde_json::Map::new();
        obj.insert("run".into(), self.value());
        for (k, v) in fields {
            obj.insert(k.into(), round_floats(v));
        }
        let mut s = serde_json::to_string_pretty(&Value::Object(obj)).unwrap_or_else(|_| json!(null).to_string());
        s.push('\n');
        s
    }
}

/// Writes `text` to `path`, or to stdout when there is no path.
pub fn emit(path: Option<&Path>, text: &str) -> io::Result<()> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            w.write_all(text.as_bytes())?;
            w.flush()
        }
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()
        }
    }
}
