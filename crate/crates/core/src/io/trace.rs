use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::solver::TraceRecord;

pub const TRACE_HEADER: &str = "iter,time_s,pos_residual,rel_error,fsc";

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn format_trace_csv(trace: &[TraceRecord]) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for t in trace {
        let rel = t.relative_error.map(fmt).unwrap_or_default();
        s.push_str(&format!("{},{},{},{},{}\n", t.iter, fmt(t.elapsed_seconds), fmt(t.positive_residual), rel, fmt(t.fsc)));
    }
    s
}

/// Writes the trace with 17 significant digits, so that [`read_trace_csv`] restores it exactly.
pub fn write_trace_csv(trace: &[TraceRecord], path: &Path) -> Result<()> {
    fs::write(path, format_trace_csv(trace))?;
    Ok(())
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TRACE_HEADER => {}
        _ => return Err(Error::Parse { line: 1, msg: format!("expected header '{TRACE_HEADER}'") }),
    }
    let mut out = Vec::new();
    for (i, l) in lines {
        let line = i + 1;
        if l.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = l.split(',').collect();
        if cols.len() != 5 {
            return Err(Error::Parse { line, msg: format!("expected 5 columns, found {}", cols.len()) });
        }
        let num = |s: &str| -> Result<f64> {
            s.trim().parse().map_err(|_| Error::Parse { line, msg: format!("invalid number '{s}'") })
        };
        out.push(TraceRecord {
            iter: cols[0].trim().parse().map_err(|_| Error::Parse { line, msg: format!("invalid iteration '{}'", cols[0]) })?,
            elapsed_seconds: num(cols[1])?,
            positive_residual: num(cols[2])?,
            relative_error: if cols[3].trim().is_empty() { None } else { Some(num(cols[3])?) },
            fsc: num(cols[4])?,
        });
    }
    Ok(out)
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRecord>> {
    parse_trace_csv(&fs::read_to_string(path)?)
}
