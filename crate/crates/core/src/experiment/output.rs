//! CSV and JSON writers for experiment tables.

use std::io::Write;

use serde::Serialize;

use crate::ec_heuristic::EcApproximation;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Json,
}

impl TableFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            TableFormat::Csv => "csv",
            TableFormat::Json => "json",
        }
    }
}

impl std::str::FromStr for TableFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "json" => Ok(TableFormat::Json),
            other => Err(format!("unknown format `{other}`, expected csv or json")),
        }
    }
}

/// Rows as CSV (header from the field names, in declaration order) or as a JSON array.
pub fn write_table<T: Serialize, W: Write>(
    rows: &[T],
    format: TableFormat,
    out: W,
) -> anyhow::Result<()> {
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        TableFormat::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, rows)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

/// A single JSON value, pretty-printed with a trailing newline.
pub fn write_json<T: Serialize, W: Write>(value: &T, mut out: W) -> anyhow::Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

/// Columns `u, term_0..term_k, p_hat`.
pub fn write_approximation<W: Write>(
    rows: &[EcApproximation],
    format: TableFormat,
    out: W,
) -> anyhow::Result<()> {
    let k = rows.first().map_or(0, |r| r.terms.len());
    let mut header = vec!["u".to_string()];
    header.extend((0..k).map(|j| format!("term_{j}")));
    header.push("p_hat".into());
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(&header)?;
            for r in rows {
                let mut record = vec![r.level];
                record.extend(&r.terms);
                record.push(r.total);
                w.serialize(&record)?;
            }
            w.flush()?;
        }
        TableFormat::Json => {
            let objects: Vec<serde_json::Map<String, serde_json::Value>> = rows
                .iter()
                .map(|r| {
                    let values = std::iter::once(r.level)
                        .chain(r.terms.iter().copied())
                        .chain(std::iter::once(r.total));
                    header
                        .iter()
                        .cloned()
                        .zip(values.map(serde_json::Value::from))
                        .collect()
                })
                .collect();
            write_json(&objects, out)?;
        }
    }
    Ok(())
}

/// Whitespace-separated rows of reals; blank lines and `#` comments are skipped.
pub fn parse_grid_rows(text: &str) -> Result<Vec<Vec<f64>>, String> {
    text.lines()
        .enumerate()
        .map(|(i, line)| (i, line.split('#').next().unwrap_or("").trim()))
        .filter(|(_, line)| !line.is_empty())
        .map(|(i, line)| {
            line.split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .map_err(|e| format!("line {}: `{tok}`: {e}", i + 1))
                })
                .collect()
        })
        .collect()
}
