//! Correlation-driven adaptation of the constraint weights.
//!
//! Weights start uniform at 1/6. After the warm-up rounds, each family's
//! weight is multiplied by `exp(eta * corr_i)`, where `corr_i` is the Pearson
//! correlation between that family's scores and the validation rewards over
//! a sliding window; the result is renormalized and mixed with the uniform
//! prior by `alpha`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::constraints::{ConstraintVector, Family};

const SIMPLEX_TOL: f64 = 1e-9;

/// Positive weights over the six families that sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 6]", into = "[f64; 6]")]
pub struct WeightVector([f64; 6]);

impl WeightVector {
    pub fn new(w: [f64; 6]) -> Result<Self, AdaptError> {
        let sum: f64 = w.iter().sum();
        if w.iter().any(|x| !(*x > 0.0)) || (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(AdaptError::NotOnSimplex(w));
        }
        Ok(Self(w))
    }

    pub fn uniform() -> Self {
        Self([1.0 / 6.0; 6])
    }

    pub fn get(&self, f: Family) -> f64 {
        self.0[f.index()]
    }

    pub fn as_array(&self) -> [f64; 6] {
        self.0
    }
}

impl Default for WeightVector {
    fn default() -> Self {
        Self::uniform()
    }
}

impl TryFrom<[f64; 6]> for WeightVector {
    type Error = AdaptError;
    fn try_from(w: [f64; 6]) -> Result<Self, Self::Error> {
        Self::new(w)
    }
}

impl From<WeightVector> for [f64; 6] {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptationConfig {
    pub eta: f64,
    pub alpha: f64,
    pub warmup_rounds: usize,
    /// Sliding-window length K.
    pub window: usize,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        Self {
            eta: 0.1,
            alpha: 0.01,
            warmup_rounds: 5,
            window: 10,
        }
    }
}

impl AdaptationConfig {
    pub fn validate(&self) -> Result<(), AdaptError> {
        if !(self.eta >= 0.0) || !(0.0..=1.0).contains(&self.alpha) || self.window < 2 {
            return Err(AdaptError::Config(format!("{self:?}")));
        }
        Ok(())
    }
}

/// The last K (constraint vector, reward) observations, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationBuffer {
    capacity: usize,
    entries: VecDeque<(ConstraintVector, f64)>,
}

impl ObservationBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, scores: ConstraintVector, reward: f64) {
        if self.capacity == 0 {
            return;
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((scores, reward.clamp(0.0, 1.0)));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(ConstraintVector, f64)> {
        self.entries.iter()
    }

    /// Pearson correlation of each family's column against the rewards.
    pub fn correlations(&self) -> Result<[f64; 6], AdaptError> {
        let rewards: Vec<f64> = self.entries.iter().map(|(_, r)| *r).collect();
        let mut out = [0.0; 6];
        for f in Family::ALL {
            let col: Vec<f64> = self.entries.iter().map(|(c, _)| c.get(f)).collect();
            out[f.index()] = pearson_corr(&col, &rewards)?;
        }
        Ok(out)
    }
}

/// Pearson correlation coefficient; 0 when either sequence has zero variance.
pub fn pearson_corr(x: &[f64], y: &[f64]) -> Result<f64, AdaptError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(AdaptError::Input(format!("lengths {} and {}", x.len(), y.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Ok(0.0);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Result of one adaptation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightUpdate {
    pub weights: WeightVector,
    pub correlations: [f64; 6],
    /// `false` during warm-up or when the buffer holds fewer than two entries.
    pub applied: bool,
}

pub fn update_weights(
    w: &WeightVector,
    buffer: &ObservationBuffer,
    cfg: &AdaptationConfig,
    round_index: usize,
) -> WeightVector {
    adapt(w, buffer, cfg, round_index).weights
}

/// One correlation-driven update, keeping the correlations for logging.
pub fn adapt(w: &WeightVector, buffer: &ObservationBuffer, cfg: &AdaptationConfig, round_index: usize) -> WeightUpdate {
    let skipped = WeightUpdate {
        weights: *w,
        correlations: [0.0; 6],
        applied: false,
    };
    if round_index < cfg.warmup_rounds || buffer.len() < 2 {
        return skipped;
    }
    let Ok(corr) = buffer.correlations() else {
        return skipped;
    };
    WeightUpdate {
        weights: reweight(w, &corr, cfg),
        correlations: corr,
        applied: true,
    }
}

/// `(1 - alpha) * softmax-style reweighting + alpha * uniform`.
pub fn reweight(w: &WeightVector, corr: &[f64; 6], cfg: &AdaptationConfig) -> WeightVector {
    let prior = 1.0 / 6.0;
    let raw: Vec<f64> = w.0.iter().zip(corr).map(|(wi, c)| wi * (cfg.eta * c).exp()).collect();
    let z: f64 = raw.iter().sum();
    let mut out = [0.0; 6];
    for (o, r) in out.iter_mut().zip(&raw) {
        *o = (1.0 - cfg.alpha) * r / z + cfg.alpha * prior;
    }
    WeightVector(out)
}

#[derive(Debug, thiserror::Error)]
pub enum AdaptError {
    #[error("weights {0:?} are not on the simplex")]
    NotOnSimplex([f64; 6]),
    #[error("correlation input: {0}")]
    Input(String),
    #[error("invalid adaptation config: {0}")]
    Config(String),
}
