//! Post-hoc checks evaluated on logged trajectories.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timegain::{gain_integral, GainFunction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub name: String,
    pub pass: bool,
    pub max_ratio: f64,
    pub first_violation_t: Option<f64>,
    /// Monitor-specific scalars such as fitted constants.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, f64>,
}

impl MonitorReport {
    pub fn new(name: impl Into<String>) -> Self {
        MonitorReport {
            name: name.into(),
            pass: true,
            max_ratio: 0.0,
            first_violation_t: None,
            details: BTreeMap::new(),
        }
    }

    pub fn with_detail(mut self, key: &str, value: f64) -> Self {
        self.details.insert(key.to_string(), value);
        self
    }

    /// Folds `ratio` at time `t` against the pass threshold `limit`.
    pub fn observe(&mut self, t: f64, ratio: f64, limit: f64) {
        if ratio > self.max_ratio || ratio.is_nan() {
            self.max_ratio = if ratio.is_nan() { f64::INFINITY } else { ratio };
        }
        if !(ratio <= limit) {
            self.pass = false;
            if self.first_violation_t.is_none() {
                self.first_violation_t = Some(t);
            }
        }
    }
}

/// `∫_{mus[0]}^{mus[k]} α(s)/s² ds` for every sample, accumulated segment by
/// segment.
pub fn cumulative_gain_integral(alpha: &GainFunction, mus: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(mus.len());
    let mut acc = 0.0;
    for (k, &mu) in mus.iter().enumerate() {
        if k > 0 {
            acc += gain_integral(alpha, mus[k - 1], mu)?;
        }
        out.push(acc);
    }
    Ok(out)
}

/// `exp(ι·∫α)` at every sample, starting from 1 at the first sample.
pub fn kappa_series(alpha: &GainFunction, iota: f64, mus: &[f64]) -> Result<Vec<f64>> {
    Ok(cumulative_gain_integral(alpha, mus)?
        .into_iter()
        .map(|i| (iota * i).exp())
        .collect())
}

pub(crate) fn require_nonempty(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::EmptyTrajectory)
    } else {
        Ok(())
    }
}

/// Ratio helper treating `0/0` as zero.
pub(crate) fn safe_ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}
