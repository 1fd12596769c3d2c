//! The six constraint families, their aggregation into a single compliance
//! value, and the depth-aware expansion threshold.

mod aggregate;
mod engine;
mod scores;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use aggregate::{aggregate, aggregate_enabled, threshold};
pub use engine::ConstraintEngine;
pub use scores::{
    score_depth, score_diversity, score_magnitude, score_magnitude_traces, score_types, score_units, NEUTRAL,
};

/// One of the six constraint families, in canonical order U, T, P, M, D, V.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Units,
    Types,
    Pattern,
    Magnitude,
    Depth,
    Diversity,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Units,
        Family::Types,
        Family::Pattern,
        Family::Magnitude,
        Family::Depth,
        Family::Diversity,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Units => "units",
            Family::Types => "types",
            Family::Pattern => "pattern",
            Family::Magnitude => "magnitude",
            Family::Depth => "depth",
            Family::Diversity => "diversity",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-family compliance scores, each in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintVector {
    pub units: f64,
    pub types: f64,
    pub pattern: f64,
    pub magnitude: f64,
    pub depth: f64,
    pub diversity: f64,
}

impl ConstraintVector {
    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            units: a[0],
            types: a[1],
            pattern: a[2],
            magnitude: a[3],
            depth: a[4],
            diversity: a[5],
        }
    }

    pub fn splat(v: f64) -> Self {
        Self::from_array([v; 6])
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.units, self.types, self.pattern, self.magnitude, self.depth, self.diversity]
    }

    pub fn get(&self, f: Family) -> f64 {
        self.to_array()[f.index()]
    }

    pub fn set(&mut self, f: Family, v: f64) {
        let mut a = self.to_array();
        a[f.index()] = v;
        *self = Self::from_array(a);
    }

    /// Families scoring below `cutoff`, weakest first.
    pub fn failing(&self, cutoff: f64) -> Vec<Family> {
        let mut out: Vec<Family> = Family::ALL.into_iter().filter(|f| self.get(*f) < cutoff).collect();
        out.sort_by(|a, b| self.get(*a).total_cmp(&self.get(*b)).then(a.cmp(b)));
        out
    }
}

/// Which families take part in aggregation. Disabled families are pinned to
/// the neutral 0.5 and carry no weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FamilySet {
    pub units: bool,
    pub types: bool,
    pub pattern: bool,
    pub magnitude: bool,
    pub depth: bool,
    pub diversity: bool,
}

impl Default for FamilySet {
    fn default() -> Self {
        Self::all()
    }
}

impl FamilySet {
    pub fn all() -> Self {
        Self::from_array([true; 6])
    }

    pub fn only(f: Family) -> Self {
        let mut a = [false; 6];
        a[f.index()] = true;
        Self::from_array(a)
    }

    pub fn from_array(a: [bool; 6]) -> Self {
        Self {
            units: a[0],
            types: a[1],
            pattern: a[2],
            magnitude: a[3],
            depth: a[4],
            diversity: a[5],
        }
    }

    pub fn to_array(&self) -> [bool; 6] {
        [self.units, self.types, self.pattern, self.magnitude, self.depth, self.diversity]
    }

    pub fn contains(&self, f: Family) -> bool {
        self.to_array()[f.index()]
    }

    pub fn is_empty(&self) -> bool {
        !self.to_array().iter().any(|b| *b)
    }

    /// Pins disabled families to the neutral score.
    pub fn apply(&self, c: ConstraintVector) -> ConstraintVector {
        let mut a = c.to_array();
        for (v, on) in a.iter_mut().zip(self.to_array()) {
            if !on {
                *v = NEUTRAL;
            }
        }
        ConstraintVector::from_array(a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregationConfig {
    pub epsilon: f64,
    pub lambda_shaping: f64,
    pub uct_c: f64,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            lambda_shaping: 0.5,
            uct_c: 1.414,
        }
    }
}

impl AggregationConfig {
    pub fn validate(&self) -> Result<(), ConstraintError> {
        if !(self.epsilon > 0.0) || !(self.lambda_shaping >= 0.0) || !(self.uct_c >= 0.0) {
            return Err(ConstraintError::Config(format!("aggregation: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdSchedule {
    pub tau0: f64,
    pub tau_min: f64,
    pub decay_k: f64,
}

impl Default for ThresholdSchedule {
    fn default() -> Self {
        Self {
            tau0: 0.6,
            tau_min: 0.3,
            decay_k: 0.05,
        }
    }
}

impl ThresholdSchedule {
    pub fn validate(&self) -> Result<(), ConstraintError> {
        let ok = 0.0 <= self.tau_min && self.tau_min <= self.tau0 && self.tau0 <= 1.0 && self.decay_k >= 0.0;
        if !ok {
            return Err(ConstraintError::Config(format!("threshold: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DepthDiversityConfig {
    pub d_max: usize,
    pub beta: f64,
}

impl Default for DepthDiversityConfig {
    fn default() -> Self {
        Self { d_max: 15, beta: 0.1 }
    }
}

impl DepthDiversityConfig {
    pub fn validate(&self) -> Result<(), ConstraintError> {
        if self.d_max < 1 || !(self.beta >= 0.0) {
            return Err(ConstraintError::Config(format!("depth: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MagnitudeConfig {
    pub gamma: i32,
    pub delta: f64,
}

impl Default for MagnitudeConfig {
    fn default() -> Self {
        Self { gamma: 2, delta: 0.5 }
    }
}

impl MagnitudeConfig {
    pub fn validate(&self) -> Result<(), ConstraintError> {
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(ConstraintError::Config(format!("magnitude: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConstraintError {
    #[error("constraint score for {family} is {value}, outside [0, 1]")]
    OutOfRange { family: Family, value: f64 },
    #[error("weight vector has no positive mass on enabled families")]
    NoWeight,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Workflow(#[from] crate::workflow::WorkflowError),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failing_orders_weakest_first() {
        let c = ConstraintVector::from_array([0.5, 0.1, 1.0, 1.0, 0.2, 1.0]);
        assert_eq!(c.failing(0.6), vec![Family::Types, Family::Depth, Family::Units]);
    }

    #[test]
    fn mask_pins_neutral() {
        let c = ConstraintVector::splat(0.9);
        let m = FamilySet::only(Family::Pattern).apply(c);
        assert_eq!(m.pattern, 0.9);
        assert_eq!(m.units, 0.5);
        assert_eq!(m.diversity, 0.5);
    }

    #[test]
    fn configs_validate() {
        assert!(AggregationConfig::default().validate().is_ok());
        assert!(AggregationConfig { epsilon: 0.0, ..Default::default() }.validate().is_err());
        assert!(ThresholdSchedule { tau_min: 0.7, ..Default::default() }.validate().is_err());
        assert!(DepthDiversityConfig { d_max: 0, beta: 0.1 }.validate().is_err());
        assert!(MagnitudeConfig { gamma: 2, delta: 1.5 }.validate().is_err());
    }
}
