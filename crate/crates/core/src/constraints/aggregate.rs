//! Weighted geometric-mean aggregation and the depth-aware gate.

use crate::adaptive::WeightVector;

use super::{AggregationConfig, ConstraintError, ConstraintVector, Family, FamilySet, ThresholdSchedule};

/// `exp( sum_i w_i ln(c_i + eps) / sum_j w_j )`. The result lies in
/// `[eps, 1 + eps]`.
pub fn aggregate(c: &ConstraintVector, weights: &WeightVector, cfg: &AggregationConfig) -> Result<f64, ConstraintError> {
    aggregate_enabled(c, weights, &FamilySet::all(), cfg)
}

/// [`aggregate`] restricted to the enabled families; disabled families are
/// dropped from both sums.
pub fn aggregate_enabled(
    c: &ConstraintVector,
    weights: &WeightVector,
    enabled: &FamilySet,
    cfg: &AggregationConfig,
) -> Result<f64, ConstraintError> {
    let mut num = 0.0;
    let mut den = 0.0;
    for f in Family::ALL {
        let v = c.get(f);
        if !(0.0..=1.0).contains(&v) {
            return Err(ConstraintError::OutOfRange { family: f, value: v });
        }
        if !enabled.contains(f) {
            continue;
        }
        let w = weights.get(f);
        num += w * (v + cfg.epsilon).ln();
        den += w;
    }
    if !(den > 0.0) {
        return Err(ConstraintError::NoWeight);
    }
    Ok((num / den).exp())
}

/// `max(tau_min, tau0 - k * depth)`.
pub fn threshold(depth: usize, sched: &ThresholdSchedule) -> f64 {
    sched.tau_min.max(sched.tau0 - sched.decay_k * depth as f64)
}
