//! Iteration tables: CSV, JSON-lines records and their parser.
//!
//! `records.jsonl` holds one flat object per iteration with the keys
//! `k`, `rel_dy`, `rel_df`, `norm_y`, `norm_f`, `sqrt2E`, `lambda`.
//! Undefined entries (the increments of the first row, the step of the
//! last one) are `null`. Floats are written in shortest round-trip form, so
//! re-emitting a table from the records reproduces the CSV bytes.

use serde::{Deserialize, Serialize};

use crate::driver::IterationRecord;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "k,rel_dy,rel_df,norm_y,norm_f,sqrt2E,lambda";

#[derive(Debug, Serialize, Deserialize)]
struct Line {
    k: usize,
    rel_dy: Option<f64>,
    rel_df: Option<f64>,
    norm_y: f64,
    norm_f: f64,
    #[serde(rename = "sqrt2E")]
    sqrt2e: f64,
    lambda: Option<f64>,
}

impl From<&IterationRecord> for Line {
    fn from(r: &IterationRecord) -> Self {
        Self {
            k: r.k,
            rel_dy: r.rel_dy,
            rel_df: r.rel_df,
            norm_y: r.norm_y,
            norm_f: r.norm_f,
            sqrt2e: r.sqrt2e,
            lambda: r.lambda,
        }
    }
}

impl From<Line> for IterationRecord {
    fn from(l: Line) -> Self {
        Self {
            k: l.k,
            rel_dy: l.rel_dy,
            rel_df: l.rel_df,
            norm_y: l.norm_y,
            norm_f: l.norm_f,
            sqrt2e: l.sqrt2e,
            lambda: l.lambda,
        }
    }
}

fn sci(v: f64) -> String {
    format!("{v:.6e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(sci).unwrap_or_default()
}

/// CSV table with six-digit scientific notation; undefined cells are empty.
pub fn emit_table(records: &[IterationRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no iteration records to tabulate".into()));
    }
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.k,
            opt(r.rel_dy),
            opt(r.rel_df),
            sci(r.norm_y),
            sci(r.norm_f),
            sci(r.sqrt2e),
            opt(r.lambda)
        ));
    }
    Ok(out)
}

/// One JSON object per record, newline terminated.
pub fn emit_records(records: &[IterationRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(&Line::from(r)).expect("plain numeric record") + "\n")
        .collect()
}

/// Inverse of [`emit_records`]; blank lines are skipped.
pub fn parse_records(text: &str) -> Result<Vec<IterationRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str::<Line>(l)
                .map(IterationRecord::from)
                .map_err(|e| Error::Param(format!("records line {}: {e}", i + 1)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(k: usize, lambda: Option<f64>) -> IterationRecord {
        IterationRecord {
            k,
            rel_dy: (k > 0).then_some(0.1 / (k as f64 + 3.0)),
            rel_df: (k > 0).then_some(1.0 / 7.0),
            norm_y: 4.528,
            norm_f: 4.391,
            sqrt2e: 0.558 / (k as f64 + 1.0),
            lambda,
        }
    }

    #[test]
    fn zero_record_row() {
        let z = IterationRecord {
            k: 0,
            rel_dy: Some(0.0),
            rel_df: Some(0.0),
            norm_y: 0.0,
            norm_f: 0.0,
            sqrt2e: 0.0,
            lambda: Some(0.0),
        };
        let csv = emit_table(&[z]).unwrap();
        assert_eq!(
            csv,
            "k,rel_dy,rel_df,norm_y,norm_f,sqrt2E,lambda\n\
             0,0.000000e0,0.000000e0,0.000000e0,0.000000e0,0.000000e0,0.000000e0\n"
        );
    }

    #[test]
    fn undefined_cells_are_empty() {
        let csv = emit_table(&[rec(0, Some(0.961)), rec(1, None)]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], "0,,,4.528000e0,4.391000e0,5.580000e-1,9.610000e-1");
        assert!(lines[2].ends_with(','));
        assert!(csv.ends_with('\n'));
    }

    #[test]
    fn empty_table_is_an_error() {
        assert!(emit_table(&[]).is_err());
    }

    #[test]
    fn records_round_trip_exactly() {
        let recs = vec![rec(0, Some(0.961)), rec(1, Some(1.0)), rec(2, None)];
        let text = emit_records(&recs);
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().next().unwrap().contains("\"sqrt2E\""));
        let back = parse_records(&text).unwrap();
        assert_eq!(back, recs);
        assert_eq!(emit_table(&back).unwrap(), emit_table(&recs).unwrap());
    }

    #[test]
    fn malformed_record_reports_line() {
        let err = parse_records("{\"k\":0}\n").unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }
}
