use serde::{Deserialize, Serialize};

use crate::adaptive::WeightVector;
use crate::motif::{score_pattern, MotifLibrary};
use crate::workflow::{ExecutionTrace, OperatorRegistry, WorkflowProgram, WorkflowState};

use super::{
    aggregate_enabled, score_depth, score_diversity, score_magnitude_traces, score_types, score_units, threshold,
    AggregationConfig, ConstraintError, ConstraintVector, DepthDiversityConfig, FamilySet, MagnitudeConfig,
    ThresholdSchedule,
};

/// Scoring context shared by the search loop: registry, family constants
/// and the set of enabled families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintEngine {
    pub registry: OperatorRegistry,
    pub aggregation: AggregationConfig,
    pub threshold: ThresholdSchedule,
    pub depth: DepthDiversityConfig,
    pub magnitude: MagnitudeConfig,
    pub enabled: FamilySet,
}

impl ConstraintEngine {
    pub fn new(registry: OperatorRegistry) -> Self {
        Self {
            registry,
            aggregation: AggregationConfig::default(),
            threshold: ThresholdSchedule::default(),
            depth: DepthDiversityConfig::default(),
            magnitude: MagnitudeConfig::default(),
            enabled: FamilySet::all(),
        }
    }

    /// Raw scores of every family before masking. Magnitude is 1.0 because
    /// no trace exists yet.
    pub fn raw_static(
        &self,
        program: &WorkflowProgram,
        state: &WorkflowState,
        category: &str,
        library: &MotifLibrary,
    ) -> Result<ConstraintVector, ConstraintError> {
        Ok(ConstraintVector {
            units: score_units(program, &self.registry)?,
            types: score_types(program, &self.registry)?,
            pattern: score_pattern(state, category, library),
            magnitude: 1.0,
            depth: score_depth(state, &self.depth),
            diversity: score_diversity(state, self.registry.len()),
        })
    }

    /// Pre-execution scores with disabled families pinned to neutral.
    pub fn static_scores(
        &self,
        program: &WorkflowProgram,
        state: &WorkflowState,
        category: &str,
        library: &MotifLibrary,
    ) -> Result<ConstraintVector, ConstraintError> {
        Ok(self.enabled.apply(self.raw_static(program, state, category, library)?))
    }

    /// Folds the measured magnitude score into `scores`. With `pin` set the
    /// magnitude stays at 1.0.
    pub fn with_traces(&self, scores: &ConstraintVector, traces: &[ExecutionTrace], pin: bool) -> ConstraintVector {
        let mut out = *scores;
        out.magnitude = if pin {
            1.0
        } else {
            score_magnitude_traces(traces, &self.magnitude)
        };
        self.enabled.apply(out)
    }

    pub fn compliance(&self, scores: &ConstraintVector, weights: &WeightVector) -> Result<f64, ConstraintError> {
        aggregate_enabled(scores, weights, &self.enabled, &self.aggregation)
    }

    pub fn tau(&self, depth: usize) -> f64 {
        threshold(depth, &self.threshold)
    }

    pub fn validate(&self) -> Result<(), ConstraintError> {
        self.aggregation.validate()?;
        self.threshold.validate()?;
        self.depth.validate()?;
        self.magnitude.validate()?;
        if self.enabled.is_empty() {
            return Err(ConstraintError::Config("no constraint family enabled".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::Family;
    use crate::motif::{LibrarySettings, MotifLibrary};
    use crate::workflow::{derive_state, interpret, ProgramBuilder};
    use std::collections::BTreeMap;

    #[test]
    fn masking_leaves_other_raw_scores_alone() {
        let reg = OperatorRegistry::baseline();
        let mut b = ProgramBuilder::new();
        let x = b.input();
        let c = b.constant(-2.0);
        let m = b.op("mul", &[x, c]);
        let s = b.op("sqrt", &[c]);
        let out = b.op("add", &[m, s]);
        let p = b.build(out);
        let st = derive_state(&p, &reg, None).unwrap();
        let lib = MotifLibrary::empty(&reg, &["a".to_string()], LibrarySettings::default());
        let mut eng = ConstraintEngine::new(reg);
        let full = eng.static_scores(&p, &st, "a", &lib).unwrap();
        for f in Family::ALL {
            eng.enabled = FamilySet::only(f);
            let only = eng.static_scores(&p, &st, "a", &lib).unwrap();
            for g in Family::ALL {
                let expected = if g == f { full.get(g) } else { 0.5 };
                assert_eq!(only.get(g), expected, "{f} / {g}");
            }
        }
    }

    #[test]
    fn overflow_trace_lowers_compliance() {
        let reg = OperatorRegistry::baseline();
        let mut b = ProgramBuilder::new();
        let x = b.input();
        let sq = b.op("mul", &[x, x]);
        let m = b.op("mul", &[sq, sq]);
        let p = b.build(m);
        let eng = ConstraintEngine::new(reg.clone());
        let st = derive_state(&p, &reg, None).unwrap();
        let lib = MotifLibrary::empty(&reg, &["a".to_string()], LibrarySettings::default());
        let stat = eng.static_scores(&p, &st, "a", &lib).unwrap();
        let trace = interpret(&p, &reg, &BTreeMap::from([(x, 10.0)])).unwrap();
        let sim = eng.with_traces(&stat, &[trace], false);
        assert!(sim.magnitude < 1.0);
        let w = WeightVector::uniform();
        assert!(eng.compliance(&sim, &w).unwrap() < eng.compliance(&stat, &w).unwrap());
        assert_eq!(eng.with_traces(&stat, &[], true).magnitude, 1.0);
    }
}
