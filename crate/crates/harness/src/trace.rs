//! Long-format CSV traces and JSON summaries.

use std::fmt::Write as _;
use std::path::Path;

use seqmargin_core::metrics::TraceRecord;

use crate::error::{HarnessError, Result};

pub const TRACE_HEADER: &str = "run_id,algorithm,stage,cycle,step,metric,value";

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Sorts by (stage, step, metric) and renders the CSV text.
pub fn render_trace(records: &[TraceRecord]) -> String {
    let mut rows: Vec<&TraceRecord> = records.iter().collect();
    rows.sort_by(|a, b| (a.stage, a.step, &a.metric).cmp(&(b.stage, b.step, &b.metric)));
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.run_id,
            r.algorithm,
            r.stage,
            r.cycle,
            r.step,
            r.metric,
            format_value(r.value)
        );
    }
    out
}

pub fn write_trace(records: &[TraceRecord], path: &Path) -> Result<()> {
    std::fs::write(path, render_trace(records)).map_err(|e| HarnessError::io(path, e))
}

pub fn write_summary(summary: &serde_json::Value, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(summary).expect("summary values are finite or null");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(stage: usize, step: usize, metric: &str, value: f64) -> TraceRecord {
        TraceRecord {
            run_id: "r".into(),
            algorithm: "seqgd".into(),
            stage,
            cycle: 0,
            step,
            metric: metric.into(),
            value,
        }
    }

    #[test]
    fn empty_trace_is_header_only() {
        assert_eq!(render_trace(&[]), format!("{TRACE_HEADER}\n"));
    }

    #[test]
    fn rows_are_ordered_and_full_precision() {
        let text = render_trace(&[rec(1, 0, "b", 1.0), rec(0, 1, "a", 0.1), rec(0, 1, "A", -2.5), rec(0, 0, "z", 3.0)]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "r,seqgd,0,0,0,z,3.0000000000000000e0");
        assert_eq!(lines[2], "r,seqgd,0,0,1,A,-2.5000000000000000e0");
        assert_eq!(lines[3], "r,seqgd,0,0,1,a,1.0000000000000001e-1");
        assert_eq!(lines[4], "r,seqgd,1,0,0,b,1.0000000000000000e0");
        let v: f64 = lines[3].rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(v, 0.1);
    }
}
