//! The Gaussian white noise model in sequence form,
//! `Y_i = f_{0,i} + Z_i / sqrt(n)`, with seeded noise.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng;
use crate::signals::SequenceSignal;

/// Default number of observed coordinates.
pub const DEFAULT_OBSERVED: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedSequence {
    pub y: Vec<f64>,
    pub n: f64,
    pub seed: u64,
    pub truth_label: String,
}

impl ObservedSequence {
    /// Wraps given observations (no truth attached).
    pub fn from_values(y: Vec<f64>, n: f64) -> Result<Self> {
        validate_n(n)?;
        if y.is_empty() {
            return Err(invalid("at least one observation is required"));
        }
        Ok(Self { y, n, seed: 0, truth_label: String::new() })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// `y_i` (1-based); unobserved coordinates read as zero.
    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.y.get(i - 1).copied().unwrap_or(0.0)
    }
}

fn validate_n(n: f64) -> Result<()> {
    if n > 0.0 && n.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("signal-to-noise n must be finite and positive, got {n}")))
    }
}

/// Draws `len` noisy coefficients of `truth` at signal-to-noise `n`.
///
/// Coefficients past the truth's stored range follow its tail descriptor
/// (positive roots), so the data and the distance computations see the
/// same sequence.
pub fn simulate(truth: &SequenceSignal, n: f64, len: usize, seed: u64) -> Result<ObservedSequence> {
    validate_n(n)?;
    if len < 1 {
        return Err(invalid("observation length must be at least 1"));
    }
    let mut g = rng::stream(seed);
    let scale = n.sqrt().recip();
    let y = (1..=len)
        .map(|i| {
            let z: f64 = g.sample(StandardNormal);
            truth.coefficient(i) + scale * z
        })
        .collect();
    Ok(ObservedSequence { y, n, seed, truth_label: truth.label.clone() })
}
