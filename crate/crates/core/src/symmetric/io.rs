//! Signal files and histogram CSV.
//!
//! A signal file is a block of `#` header lines followed by one signal index
//! per line (0-based). The header carries `T=<size>` and optionally
//! `epsilon=<value>`; any other header lines are preserved verbatim. A CSV
//! body with a `signal` column is accepted on input as well.

use std::io::{BufRead, Write};

use super::SignalHistogram;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SignalFile {
    pub t: usize,
    pub epsilon: Option<f64>,
    pub extra_header: Vec<String>,
    pub signals: Vec<usize>,
}

pub fn write_signals<W: Write>(out: &mut W, file: &SignalFile) -> Result<()> {
    writeln!(out, "# lpht-signals v1")?;
    writeln!(out, "# T={}", file.t)?;
    if let Some(eps) = file.epsilon {
        writeln!(out, "# epsilon={eps}")?;
    }
    for line in &file.extra_header {
        writeln!(out, "# {line}")?;
    }
    for s in &file.signals {
        writeln!(out, "{s}")?;
    }
    Ok(())
}

pub fn read_signals<R: BufRead>(input: R) -> Result<SignalFile> {
    let mut t = None;
    let mut epsilon = None;
    let mut extra_header = Vec::new();
    let mut signals = Vec::new();
    let mut column: Option<usize> = None;
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(h) = line.strip_prefix('#') {
            let h = h.trim();
            if let Some(v) = h.strip_prefix("T=") {
                t = Some(v.parse().map_err(|_| Error::Parse(format!("bad T in header: {v}")))?);
            } else if let Some(v) = h.strip_prefix("epsilon=") {
                epsilon = Some(v.parse().map_err(|_| Error::Parse(format!("bad epsilon in header: {v}")))?);
            } else if h != "lpht-signals v1" {
                extra_header.push(h.to_string());
            }
            continue;
        }
        if column.is_none() && signals.is_empty() && line.chars().any(|c| c.is_ascii_alphabetic()) {
            column = Some(
                line.split(',')
                    .position(|c| c.trim() == "signal")
                    .ok_or_else(|| Error::Parse("CSV header has no `signal` column".into()))?,
            );
            continue;
        }
        let field = match column {
            Some(c) => line
                .split(',')
                .nth(c)
                .ok_or_else(|| Error::Parse(format!("line {}: missing signal column", lineno + 1)))?,
            None => line,
        };
        let s: usize = field
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: not a signal index: {field}", lineno + 1)))?;
        signals.push(s);
    }
    let t = match t {
        Some(t) => t,
        None => signals.iter().max().map(|m| m + 1).ok_or_else(|| {
            Error::Parse("signal file has neither a T= header nor any signals".into())
        })?,
    };
    if let Some(&bad) = signals.iter().find(|&&s| s >= t) {
        return Err(Error::OutOfRange { index: bad, size: t });
    }
    Ok(SignalFile {
        t,
        epsilon,
        extra_header,
        signals,
    })
}

pub fn write_histogram_csv<W: Write>(out: &mut W, hist: &SignalHistogram) -> Result<()> {
    writeln!(out, "signal,count")?;
    for (s, c) in hist.counts().iter().enumerate() {
        writeln!(out, "{s},{c}")?;
    }
    Ok(())
}

pub fn read_histogram_csv<R: BufRead>(input: R) -> Result<SignalHistogram> {
    let mut counts = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (lineno == 0 && line.starts_with("signal")) {
            continue;
        }
        let (s, c) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("line {}: expected signal,count", lineno + 1)))?;
        let s: usize = s.trim().parse().map_err(|_| Error::Parse(format!("bad signal {s}")))?;
        let c: u64 = c.trim().parse().map_err(|_| Error::Parse(format!("bad count {c}")))?;
        if s != counts.len() {
            return Err(Error::Parse(format!("histogram rows must be in signal order, got {s}")));
        }
        counts.push(c);
    }
    Ok(SignalHistogram::from_counts(counts))
}
