//! Rendering of results as TSV or JSON.
//!
//! JSON floats are written in a fixed `{:.16e}` form so that repeated runs
//! produce byte-identical files; non-finite values become `null`.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use serde_json::{Number, Value};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Tsv,
    Json,
}

fn normalize(value: Value) -> Value {
    match value {
        Value::Number(n) if !(n.is_i64() || n.is_u64()) => match n.as_f64() {
            Some(x) if x.is_finite() => Value::Number(
                Number::from_str(&format!("{x:.16e}")).expect("formatted float is valid JSON"),
            ),
            _ => Value::Null,
        },
        Value::Array(items) => Value::Array(items.into_iter().map(normalize).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, normalize(v))).collect()),
        other => other,
    }
}

/// Pretty JSON with normalised floats and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let tree = serde_json::to_value(value).map_err(|e| CliError::Internal(format!("serialisation failed: {e}")))?;
    let mut text = serde_json::to_string_pretty(&normalize(tree))
        .map_err(|e| CliError::Internal(format!("serialisation failed: {e}")))?;
    text.push('\n');
    Ok(text)
}

/// `%g`-style rendering with six significant digits.
pub fn fmt_g(x: f64) -> String {
    if x.is_nan() {
        return "NA".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "Inf".into() } else { "-Inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        return format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// P-values in scientific notation so small values keep their precision.
pub fn fmt_p(p: f64) -> String {
    if p.is_finite() {
        format!("{p:.5e}")
    } else {
        "NA".into()
    }
}

/// Tab-separated table with a header row.
pub struct Table {
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            rows: vec![header.iter().map(|h| h.to_string()).collect()],
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.rows[0].len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&r.join("\t"));
            out.push('\n');
        }
        out
    }
}

/// Writes to `path`, or to stdout when no path is given.
pub fn emit(text: &str, path: Option<&Path>) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Internal(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::Internal(format!("cannot write output: {e}")))
        }
    }
}
