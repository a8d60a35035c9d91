//! Latency CSV: header `source,architecture,n,trial,latency_ms`, latencies with six
//! decimals, rows sorted by `(source, architecture, n, trial)`.

use std::cmp::Ordering;
use std::fmt::Write as _;

use thiserror::Error;

pub const HEADER: &str = "source,architecture,n,trial,latency_ms";

/// Architecture labels a CSV may carry.
pub const ARCHITECTURES: [&str; 3] = ["microservice", "monolith", "three_layer"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("line {line}: {reason}")]
    Row { line: usize, reason: String },
    #[error("missing or malformed header; expected `{HEADER}`")]
    Header,
    #[error("no data rows")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Source {
    Analytic,
    Desim,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Analytic => "analytic",
            Source::Desim => "desim",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyRow {
    pub source: Source,
    pub architecture: String,
    pub n: u64,
    pub trial: u32,
    pub latency_ms: f64,
}

fn row_order(a: &LatencyRow, b: &LatencyRow) -> Ordering {
    a.source
        .as_str()
        .cmp(b.source.as_str())
        .then_with(|| a.architecture.cmp(&b.architecture))
        .then(a.n.cmp(&b.n))
        .then(a.trial.cmp(&b.trial))
}

pub fn sort_rows(rows: &mut [LatencyRow]) {
    rows.sort_by(row_order);
}

/// Renders rows in canonical order, whatever order they arrive in.
pub fn write_csv(rows: &[LatencyRow]) -> String {
    let mut sorted: Vec<&LatencyRow> = rows.iter().collect();
    sorted.sort_by(|a, b| row_order(a, b));
    let mut out = String::with_capacity(32 * (rows.len() + 1));
    out.push_str(HEADER);
    out.push('\n');
    for r in sorted {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6}",
            r.source.as_str(),
            r.architecture,
            r.n,
            r.trial,
            r.latency_ms
        );
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<LatencyRow>, SchemaError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == HEADER => {}
        _ => return Err(SchemaError::Header),
    }
    let mut rows = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.is_empty() {
            continue;
        }
        let bad = |reason: String| SchemaError::Row { line, reason };
        let fields: Vec<&str> = raw.split(',').collect();
        let [source, arch, n, trial, latency] = fields[..] else {
            return Err(bad(format!("expected 5 fields, found {}", fields.len())));
        };
        let source = match source {
            "analytic" => Source::Analytic,
            "desim" => Source::Desim,
            other => return Err(bad(format!("unknown source `{other}`"))),
        };
        if !ARCHITECTURES.contains(&arch) {
            return Err(bad(format!("unknown architecture `{arch}`")));
        }
        let n: u64 = n
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| bad(format!("n must be a positive integer, got `{n}`")))?;
        let trial: u32 = trial.parse().map_err(|_| {
            bad(format!(
                "trial must be a non-negative integer, got `{trial}`"
            ))
        })?;
        let latency_ms: f64 = latency
            .parse()
            .ok()
            .filter(|x: &f64| x.is_finite() && *x >= 0.0)
            .ok_or_else(|| {
                bad(format!(
                    "latency must be a finite non-negative number, got `{latency}`"
                ))
            })?;
        rows.push(LatencyRow {
            source,
            architecture: arch.to_owned(),
            n,
            trial,
            latency_ms,
        });
    }
    if rows.is_empty() {
        return Err(SchemaError::Empty);
    }
    Ok(rows)
}
