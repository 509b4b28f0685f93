//! Rendering of command results. Every output is built as a JSON object
//! carrying the schema number and crate version, then printed as JSON, as a
//! single flattened CSV record, or as `key: value` lines.

use std::io::Write;

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

pub const SCHEMA: u32 = 1;
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Plain,
}

/// `{"schema", "version", "command", "config", ...body}`.
pub fn envelope<C: Serialize, B: Serialize>(command: &str, config: &C, body: &B) -> CliResult<Value> {
    let mut obj = Map::new();
    obj.insert("schema".into(), SCHEMA.into());
    obj.insert("version".into(), VERSION.into());
    obj.insert("command".into(), command.into());
    obj.insert("config".into(), to_value(config)?);
    match to_value(body)? {
        Value::Object(m) => obj.extend(m),
        other => {
            obj.insert("result".into(), other);
        }
    }
    Ok(Value::Object(obj))
}

pub fn to_value<T: Serialize>(v: &T) -> CliResult<Value> {
    serde_json::to_value(v).map_err(|e| CliError::Numerical(format!("cannot serialize output: {e}")))
}

/// Flattens nested objects into dotted keys; arrays become `;`-joined cells.
pub fn flatten(v: &Value) -> Vec<(String, String)> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
        match v {
            Value::Object(m) => {
                for (k, child) in m {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, child, out);
                }
            }
            Value::Array(items) => {
                let cells: Vec<String> = items.iter().map(scalar).collect();
                out.push((prefix.to_string(), cells.join(";")));
            }
            _ => out.push((prefix.to_string(), scalar(v))),
        }
    }
    fn scalar(v: &Value) -> String {
        match v {
            Value::Null => String::new(),
            Value::String(s) => s.clone(),
            _ => v.to_string(),
        }
    }
    let mut out = Vec::new();
    walk("", v, &mut out);
    out
}

pub fn render(v: &Value, format: Format, out: &mut dyn Write) -> CliResult<()> {
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, v).map_err(std::io::Error::from)?;
            writeln!(out)?;
        }
        Format::Csv => {
            let cells = flatten(v);
            let mut w = csv::Writer::from_writer(out);
            w.write_record(cells.iter().map(|c| c.0.as_str())).map_err(csv_error)?;
            w.write_record(cells.iter().map(|c| c.1.as_str())).map_err(csv_error)?;
            w.flush()?;
        }
        Format::Plain => {
            for (k, val) in flatten(v) {
                writeln!(out, "{k}: {val}")?;
            }
        }
    }
    Ok(())
}

pub fn csv_error(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e))
}

/// Row-per-record CSV preceded by one `#` line holding `meta` as JSON.
/// Rows are flattened like [`flatten`]; the first row fixes the header.
pub fn write_rows(meta: &Value, rows: &[Value], out: &mut dyn Write) -> CliResult<()> {
    writeln!(out, "# {meta}")?;
    let mut w = csv::Writer::from_writer(out);
    for (i, row) in rows.iter().enumerate() {
        let cells = flatten(row);
        if i == 0 {
            w.write_record(cells.iter().map(|c| c.0.as_str())).map_err(csv_error)?;
        }
        w.write_record(cells.iter().map(|c| c.1.as_str())).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn flatten_nests_keys() {
        let v = json!({"a": 1, "b": {"c": [1.5, 2], "d": null}, "e": "x"});
        let f = flatten(&v);
        assert_eq!(
            f,
            vec![
                ("a".into(), "1".into()),
                ("b.c".into(), "1.5;2".into()),
                ("b.d".into(), String::new()),
                ("e".into(), "x".into())
            ]
        );
    }

    #[test]
    fn envelope_has_schema_and_version() {
        let v = envelope("test", &json!({"seed": 3}), &json!({"p_value": 0.5})).unwrap();
        assert_eq!(v["schema"], 1);
        assert_eq!(v["version"], VERSION);
        assert_eq!(v["config"]["seed"], 3);
        assert_eq!(v["p_value"], 0.5);
    }
}
