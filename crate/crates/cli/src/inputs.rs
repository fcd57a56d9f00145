//! Loading distribution, hypothesis, signal and cohort files.

use std::fs::{self, File};
use std::io::{BufReader, Read};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use lpht_core::nonsymmetric::io::{read_cohort, read_cohort_csv, MAGIC};
use lpht_core::nonsymmetric::{eta_for, Cohort};
use lpht_core::symmetric::histogram;
use lpht_core::symmetric::io::{read_histogram_csv, read_signals};
use lpht_core::{ProbVector, SignalHistogram, ThetaEstimator};
use serde::Deserialize;

/// `{"weights": [...]}` or a bare array.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Weights {
    Plain(Vec<f64>),
    Wrapped(ProbVector),
}

impl Weights {
    pub fn into_prob(self) -> Result<ProbVector> {
        match self {
            Weights::Plain(w) => Ok(ProbVector::new(w)?),
            Weights::Wrapped(p) => Ok(p),
        }
    }
}

pub fn read_distribution(path: &Path) -> Result<ProbVector> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let w: Weights = serde_json::from_str(&text).with_context(|| format!("malformed distribution file {}", path.display()))?;
    w.into_prob().with_context(|| format!("distribution in {}", path.display()))
}

#[derive(Debug, Clone, Deserialize)]
pub struct Hypothesis {
    pub p: Option<Weights>,
    pub alpha: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub feature_sizes: Option<Vec<usize>>,
}

pub fn read_hypothesis(path: &Path) -> Result<Hypothesis> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("malformed hypothesis file {}", path.display()))
}

/// Symmetric signals with the header fields they carried.
pub struct SymmetricInput {
    pub hist: SignalHistogram,
    pub epsilon: Option<f64>,
}

/// Reads a signal file or a `signal,count` histogram CSV.
pub fn read_symmetric(path: &Path) -> Result<SymmetricInput> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let first = text.lines().find(|l| !l.trim().is_empty() && !l.starts_with('#'));
    if first.is_some_and(|l| l.trim().starts_with("signal,count")) {
        return Ok(SymmetricInput {
            hist: read_histogram_csv(text.as_bytes())?,
            epsilon: None,
        });
    }
    let file = read_signals(text.as_bytes()).with_context(|| format!("parsing {}", path.display()))?;
    Ok(SymmetricInput {
        hist: histogram(&file.signals, file.t)?,
        epsilon: file.epsilon,
    })
}

pub enum NonSymmetricInput {
    Cohort(Cohort),
    Theta(ThetaEstimator),
}

/// Reads a binary cohort, a theta JSON, or (given `t` and epsilon) a cohort CSV.
pub fn read_nonsymmetric(path: &Path, t: Option<usize>, epsilon: Option<f64>) -> Result<NonSymmetricInput> {
    let mut head = Vec::new();
    File::open(path)
        .with_context(|| format!("opening {}", path.display()))?
        .take(MAGIC.len() as u64)
        .read_to_end(&mut head)?;
    if head.as_slice() == MAGIC {
        let f = BufReader::new(File::open(path)?);
        return Ok(NonSymmetricInput::Cohort(
            read_cohort(f).with_context(|| format!("parsing {}", path.display()))?,
        ));
    }
    if head.iter().find(|b| !b.is_ascii_whitespace()) == Some(&b'{') {
        let text = fs::read_to_string(path)?;
        let theta: ThetaEstimator =
            serde_json::from_str(&text).with_context(|| format!("malformed theta file {}", path.display()))?;
        return Ok(NonSymmetricInput::Theta(theta));
    }
    let t = t.ok_or_else(|| anyhow!("a CSV cohort needs the domain size"))?;
    let epsilon = epsilon.ok_or_else(|| anyhow!("a CSV cohort needs epsilon"))?;
    let f = BufReader::new(File::open(path)?);
    Ok(NonSymmetricInput::Cohort(read_cohort_csv(f, t, epsilon)?))
}

/// `theta` for a non-symmetric input, checked against the expected domain
/// size and privacy level.
pub fn theta_of(input: &NonSymmetricInput, t: usize, epsilon: f64) -> Result<ThetaEstimator> {
    let theta = match input {
        NonSymmetricInput::Cohort(c) => {
            if c.t != t {
                bail!("alphabet mismatch: hypothesis has T = {t}, cohort has T = {}", c.t);
            }
            if (c.epsilon - epsilon).abs() > 1e-12 {
                bail!("cohort was generated with epsilon = {}, hypothesis says {epsilon}", c.epsilon);
            }
            c.theta()?
        }
        NonSymmetricInput::Theta(th) => {
            if th.len() != t {
                bail!("alphabet mismatch: hypothesis has T = {t}, theta has length {}", th.len());
            }
            let eta = eta_for(epsilon);
            if (th.eta - eta).abs() > 1e-9 {
                bail!("theta was built with eta = {}, epsilon = {epsilon} gives {eta}", th.eta);
            }
            th.clone()
        }
    };
    Ok(theta)
}

pub fn check_epsilon(file: Option<f64>, expected: f64) -> Result<()> {
    match file {
        Some(e) if (e - expected).abs() > 1e-12 => {
            bail!("signals were generated with epsilon = {e}, hypothesis says {expected}")
        }
        _ => Ok(()),
    }
}
