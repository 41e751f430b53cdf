//! The run report and its JSON, table and CSV renderings.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;

use crate::args::{Config, Format};
use crate::problem::ProblemFile;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProblemIdentity {
    pub name: String,
    /// `builtin` or the problem file path.
    pub source: String,
    pub definition: ProblemFile,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Timings {
    pub total_ms: f64,
    pub phases: Vec<(String, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemIdentity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<Config>,
    pub warnings: Vec<String>,
    /// Set when a solve did not converge or a required matrix was singular.
    pub failure: Option<String>,
    pub result: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

impl RunReport {
    /// The report without timings: identical across reruns with the same flags.
    pub fn payload(&self) -> RunReport {
        RunReport {
            timings: None,
            ..self.clone()
        }
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("reports serialize")
    }

    pub fn render(&self, format: Format) -> String {
        let value = self.to_value();
        match format {
            Format::Json => to_json(&value),
            Format::Table => to_table(&value),
            Format::Csv => to_csv(&value),
        }
    }
}

/// 17 significant digits for floats; integers verbatim.
pub fn format_number(n: &serde_json::Number) -> String {
    if n.is_f64() {
        format!("{:.16e}", n.as_f64().unwrap_or(f64::NAN))
    } else {
        n.to_string()
    }
}

fn is_scalar(v: &Value) -> bool {
    !matches!(v, Value::Array(_) | Value::Object(_))
}

fn scalar_json(v: &Value) -> String {
    match v {
        Value::Number(n) => format_number(n),
        other => other.to_string(),
    }
}

/// Pretty JSON with arrays of scalars kept on one line.
pub fn to_json(value: &Value) -> String {
    let mut out = String::new();
    write_json(value, 0, &mut out);
    out.push('\n');
    out
}

fn write_json(value: &Value, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent + 1);
    let close = "  ".repeat(indent);
    match value {
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        Value::Array(items) if items.iter().all(is_scalar) => {
            let parts: Vec<String> = items.iter().map(scalar_json).collect();
            let _ = write!(out, "[{}]", parts.join(", "));
        }
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                out.push_str(&pad);
                write_json(item, indent + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&close);
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            out.push_str("{\n");
            for (i, (k, v)) in map.iter().enumerate() {
                let _ = write!(out, "{pad}{}: ", Value::String(k.clone()));
                write_json(v, indent + 1, out);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            out.push_str(&close);
            out.push('}');
        }
        scalar => out.push_str(&scalar_json(scalar)),
    }
}

fn human(v: &Value) -> String {
    match v {
        Value::Null => "-".into(),
        Value::String(s) => s.clone(),
        Value::Number(n) if n.is_f64() => human_float(n.as_f64().unwrap_or(f64::NAN)),
        Value::Number(n) => n.to_string(),
        Value::Bool(b) => b.to_string(),
        Value::Array(items) if items.iter().all(is_scalar) => {
            format!("[{}]", items.iter().map(human).collect::<Vec<_>>().join(", "))
        }
        other => other.to_string(),
    }
}

fn human_float(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 {
        "0".into()
    } else if (1e-3..1e6).contains(&a) {
        let s = format!("{v:.6}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.6e}")
    }
}

fn is_matrix(v: &Value) -> bool {
    matches!(v, Value::Array(rows) if rows.iter().all(|r| matches!(r, Value::Array(c) if c.iter().all(is_scalar))))
}

/// Objects whose fields are scalars or scalar arrays render as table rows.
fn is_row(v: &Value) -> bool {
    match v {
        Value::Object(map) => map
            .values()
            .all(|f| is_scalar(f) || matches!(f, Value::Array(a) if a.iter().all(is_scalar))),
        _ => false,
    }
}

fn write_rows(rows: &[Value], pad: &str, out: &mut String) {
    let mut keys: Vec<String> = Vec::new();
    for row in rows {
        if let Value::Object(map) = row {
            for k in map.keys() {
                if !keys.contains(k) {
                    keys.push(k.clone());
                }
            }
        }
    }
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|row| keys.iter().map(|k| row.get(k).map_or("-".into(), human)).collect())
        .collect();
    let widths: Vec<usize> = keys
        .iter()
        .enumerate()
        .map(|(i, k)| cells.iter().map(|c| c[i].len()).max().unwrap_or(0).max(k.len()))
        .collect();
    let line = |items: Vec<&str>| -> String {
        items
            .iter()
            .zip(&widths)
            .map(|(s, w)| format!("{s:>w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    let _ = writeln!(out, "{pad}{}", line(keys.iter().map(String::as_str).collect()));
    for c in &cells {
        let _ = writeln!(out, "{pad}{}", line(c.iter().map(String::as_str).collect()));
    }
}

/// Indented key/value listing; histories and other record lists as tables,
/// matrices row by row.
pub fn to_table(value: &Value) -> String {
    let mut out = String::new();
    write_table(value, 0, &mut out);
    out
}

fn write_table(value: &Value, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    let Value::Object(map) = value else {
        match value {
            Value::Array(rows) if is_matrix(value) => {
                for row in rows {
                    let _ = writeln!(out, "{pad}{}", human(row));
                }
            }
            other => {
                let _ = writeln!(out, "{pad}{}", human(other));
            }
        }
        return;
    };
    for (k, v) in map {
        match v {
            v if is_scalar(v) => {
                let _ = writeln!(out, "{pad}{k}: {}", human(v));
            }
            Value::Array(items) if items.iter().all(is_scalar) => {
                let _ = writeln!(out, "{pad}{k}: {}", human(v));
            }
            v if is_matrix(v) => {
                let _ = writeln!(out, "{pad}{k}:");
                write_table(v, indent + 1, out);
            }
            Value::Array(items) if items.iter().all(is_row) => {
                let _ = writeln!(out, "{pad}{k}:");
                write_rows(items, &format!("{pad}  "), out);
            }
            Value::Array(items) => {
                for (i, item) in items.iter().enumerate() {
                    let _ = writeln!(out, "{pad}{k}[{i}]:");
                    write_table(item, indent + 1, out);
                }
            }
            Value::Object(_) => {
                let _ = writeln!(out, "{pad}{k}:");
                write_table(v, indent + 1, out);
            }
            _ => unreachable!(),
        }
    }
}

fn csv_cell(v: &Value) -> String {
    let s = match v {
        Value::Null => String::new(),
        Value::Number(n) => format_number(n),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s
    }
}

fn collect_histories<'a>(value: &'a Value, path: &str, out: &mut Vec<(String, &'a Vec<Value>)>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                match (k.as_str(), v) {
                    ("history", Value::Array(h)) => out.push((path.to_string(), h)),
                    _ => collect_histories(v, &join_path(path, k), out),
                }
            }
        }
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                collect_histories(item, &join_path(path, &i.to_string()), out);
            }
        }
        _ => {}
    }
}

fn join_path(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn flatten(value: &Value, path: &str, out: &mut Vec<(String, String)>) {
    match value {
        Value::Object(map) => map.iter().for_each(|(k, v)| flatten(v, &join_path(path, k), out)),
        Value::Array(items) => items
            .iter()
            .enumerate()
            .for_each(|(i, v)| flatten(v, &join_path(path, &i.to_string()), out)),
        scalar => out.push((path.to_string(), csv_cell(scalar))),
    }
}

/// One row per iterate of every solve history; reports without histories
/// flatten to `path,value` pairs.
pub fn to_csv(value: &Value) -> String {
    let mut histories = Vec::new();
    collect_histories(value, "", &mut histories);
    let mut out = String::new();
    if histories.is_empty() {
        let mut pairs = Vec::new();
        flatten(value, "", &mut pairs);
        out.push_str("path,value\n");
        for (p, v) in pairs {
            let _ = writeln!(out, "{p},{v}");
        }
        return out;
    }
    let dim = histories
        .iter()
        .flat_map(|(_, h)| h.iter())
        .filter_map(|r| r.get("x").and_then(Value::as_array).map(Vec::len))
        .max()
        .unwrap_or(0);
    let columns = ["index", "residual", "step_norm", "distance_to_root", "condition"];
    let mut header = vec!["run".to_string()];
    header.extend(columns.iter().map(|c| c.to_string()));
    header.extend((1..=dim).map(|i| format!("x{i}")));
    let _ = writeln!(out, "{}", header.join(","));
    for (run, history) in &histories {
        for record in history.iter() {
            let mut row = vec![run.clone()];
            row.extend(columns.iter().map(|c| record.get(*c).map_or(String::new(), csv_cell)));
            let xs = record.get("x").and_then(Value::as_array);
            row.extend((0..dim).map(|i| xs.and_then(|x| x.get(i)).map_or(String::new(), csv_cell)));
            let _ = writeln!(out, "{}", row.join(","));
        }
    }
    out
}
