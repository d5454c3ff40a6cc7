//! Histogram and score tables summarizing a pipeline run.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::ReportSection;
use crate::pipeline::{ITERATIONS, MANIFEST, SHIFTS};

pub const SNR_HIST: &str = "snr_hist.tsv";
pub const CTC_SCORES: &str = "ctc_scores.tsv";
pub const VAD_SHIFT_HIST: &str = "vad_shift_hist.tsv";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no audiobook was processed")]
    NoData,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path} line {line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error("bin width must be positive and finite, got {0}")]
    BadBinWidth(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftKind {
    Start,
    End,
}

impl ShiftKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ShiftKind::Start => "start",
            ShiftKind::End => "end",
        }
    }
}

/// Values the reports are built from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportData {
    pub snr_db: Vec<f64>,
    /// (audiobook id, iteration, average score)
    pub iterations: Vec<(String, usize, f64)>,
    pub shifts: Vec<(ShiftKind, f64)>,
}

impl ReportData {
    pub fn is_empty(&self) -> bool {
        self.snr_db.is_empty() && self.iterations.is_empty() && self.shifts.is_empty()
    }

    /// Reads the tables a pipeline run left in `dir`.
    pub fn load(dir: &Path) -> Result<Self, ReportError> {
        let mut d = ReportData::default();
        for (line, cols) in table(&dir.join(MANIFEST), 5)? {
            if cols[1] != "NA" {
                d.snr_db.push(number(&dir.join(MANIFEST), line, &cols[1])?);
            }
        }
        let path = dir.join(ITERATIONS);
        for (line, cols) in table(&path, 3)? {
            let it = cols[1].parse().map_err(|_| malformed(&path, line, "bad iteration"))?;
            d.iterations.push((cols[0].clone(), it, number(&path, line, &cols[2])?));
        }
        let path = dir.join(SHIFTS);
        for (line, cols) in table(&path, 5)? {
            d.shifts.push((ShiftKind::Start, number(&path, line, &cols[2])?));
            d.shifts.push((ShiftKind::End, number(&path, line, &cols[3])?));
        }
        Ok(d)
    }
}

fn malformed(path: &Path, line: usize, message: &str) -> ReportError {
    ReportError::Malformed { path: path.into(), line, message: message.into() }
}

fn number(path: &Path, line: usize, s: &str) -> Result<f64, ReportError> {
    s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| malformed(path, line, &format!("bad number {s:?}")))
}

/// Data rows of a TSV file with a header line.
fn table(path: &Path, columns: usize) -> Result<Vec<(usize, Vec<String>)>, ReportError> {
    let text = std::fs::read_to_string(path).map_err(|source| ReportError::Io { path: path.into(), source })?;
    let mut rows = Vec::new();
    for (i, l) in text.lines().enumerate().skip(1) {
        if l.is_empty() {
            continue;
        }
        let cols: Vec<String> = l.split('\t').map(str::to_string).collect();
        if cols.len() != columns {
            return Err(malformed(path, i + 1, &format!("expected {columns} columns")));
        }
        rows.push((i + 1, cols));
    }
    Ok(rows)
}

/// Fixed-width bins `[k w, (k + 1) w)` from the lowest to the highest
/// occupied bin, empty bins included.
pub fn histogram(values: &[f64], width: f64) -> Result<Vec<(f64, f64, usize)>, ReportError> {
    if !(width.is_finite() && width > 0.0) {
        return Err(ReportError::BadBinWidth(width));
    }
    // the epsilon keeps values sitting on an edge (e.g. -0.2 / 0.05) in the upper bin
    let bins: Vec<i64> = values.iter().map(|v| (v / width + 1e-9).floor() as i64).collect();
    let (Some(&lo), Some(&hi)) = (bins.iter().min(), bins.iter().max()) else {
        return Ok(Vec::new());
    };
    let mut counts = vec![0usize; (hi - lo + 1) as usize];
    for b in bins {
        counts[(b - lo) as usize] += 1;
    }
    Ok(counts.into_iter().enumerate().map(|(i, c)| ((lo + i as i64) as f64 * width, (lo + i as i64 + 1) as f64 * width, c)).collect())
}

/// Short decimal for bin edges (`0.15`, not `0.15000000000000002`).
fn edge(x: f64) -> String {
    let s = format!("{x:.9}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Writes `snr_hist.tsv`, `ctc_scores.tsv` and `vad_shift_hist.tsv`.
pub fn emit_report(dir: &Path, data: &ReportData, bins: &ReportSection) -> Result<(), ReportError> {
    if data.is_empty() {
        return Err(ReportError::NoData);
    }
    let mut snr = String::from("bin_low\tbin_high\tcount\n");
    for (lo, hi, n) in histogram(&data.snr_db, bins.snr_bin_db)? {
        writeln!(snr, "{}\t{}\t{n}", edge(lo), edge(hi)).unwrap();
    }
    let mut ctc = String::from("audiobook_id\titeration\tavg_score\n");
    for (id, it, v) in &data.iterations {
        writeln!(ctc, "{id}\t{it}\t{v:.6}").unwrap();
    }
    let mut shift = String::from("boundary_kind\tbin_low_sec\tbin_high_sec\tcount\n");
    for kind in [ShiftKind::Start, ShiftKind::End] {
        let values: Vec<f64> = data.shifts.iter().filter(|(k, _)| *k == kind).map(|(_, v)| *v).collect();
        for (lo, hi, n) in histogram(&values, bins.shift_bin_sec)? {
            writeln!(shift, "{}\t{}\t{}\t{n}", kind.as_str(), edge(lo), edge(hi)).unwrap();
        }
    }
    for (name, body) in [(SNR_HIST, snr), (CTC_SCORES, ctc), (VAD_SHIFT_HIST, shift)] {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|source| ReportError::Io { path, source })?;
    }
    Ok(())
}
