//! Per-family scoring functions. Every score lies in [0, 1].

use crate::workflow::{analyze, ExecutionTrace, OperatorRegistry, ProgramIndex, WorkflowError, WorkflowProgram, WorkflowState};

use super::{DepthDiversityConfig, MagnitudeConfig};

/// Score assigned when a family lacks the metadata to judge a workflow.
pub const NEUTRAL: f64 = 0.5;

pub fn score_depth(state: &WorkflowState, cfg: &DepthDiversityConfig) -> f64 {
    let excess = state.depth.saturating_sub(cfg.d_max) as f64;
    (1.0 - cfg.beta * excess).max(0.0)
}

/// Normalized Shannon entropy of the operator histogram, divided by
/// `ln(registry_size)`. An empty histogram scores 0.
pub fn score_diversity(state: &WorkflowState, registry_size: usize) -> f64 {
    let total: usize = state.operator_histogram.values().sum();
    if total == 0 || registry_size < 2 {
        return 0.0;
    }
    let total = total as f64;
    let entropy: f64 = state
        .operator_histogram
        .values()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum();
    (entropy / (registry_size as f64).ln()).clamp(0.0, 1.0)
}

/// Fraction of unit-consistent operations among those whose operands all
/// carry unit signatures; neutral when there are none.
pub fn score_units(program: &WorkflowProgram, registry: &OperatorRegistry) -> Result<f64, WorkflowError> {
    let index = ProgramIndex::new(program, registry)?;
    let facts = analyze(&index, registry);
    let checked: Vec<bool> = facts.iter().filter_map(|f| f.units_ok).collect();
    if checked.is_empty() {
        return Ok(NEUTRAL);
    }
    Ok(checked.iter().filter(|ok| **ok).count() as f64 / checked.len() as f64)
}

/// Fraction of operations that are both shape-compatible (when every operand
/// has a shape) and satisfy their domain rule given statically known signs.
/// Neutral for programs without operations.
pub fn score_types(program: &WorkflowProgram, registry: &OperatorRegistry) -> Result<f64, WorkflowError> {
    let index = ProgramIndex::new(program, registry)?;
    let facts = analyze(&index, registry);
    let ops: Vec<bool> = (0..index.len())
        .filter(|&i| !index.is_root(i))
        .map(|i| facts[i].shape_ok.unwrap_or(true) && facts[i].type_ok)
        .collect();
    if ops.is_empty() {
        return Ok(NEUTRAL);
    }
    Ok(ops.iter().filter(|ok| **ok).count() as f64 / ops.len() as f64)
}

/// Magnitude sanity of one trace against the bound
/// `theta = max|V_in| * 10^gamma`. Neutral when the bound is undefined
/// (no or all-zero inputs) or the trace recorded no values.
pub fn score_magnitude(trace: &ExecutionTrace, cfg: &MagnitudeConfig) -> f64 {
    let vmax = trace.input_constants.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let theta = vmax * 10f64.powi(cfg.gamma);
    if trace.values.is_empty() || !(theta > 0.0) || !theta.is_finite() {
        return NEUTRAL;
    }
    let xmax = trace.max_abs();
    if xmax <= theta {
        1.0
    } else {
        (1.0 - cfg.delta * (xmax - theta) / theta).max(0.0)
    }
}

/// Mean magnitude score over the traces that recorded values.
pub fn score_magnitude_traces(traces: &[ExecutionTrace], cfg: &MagnitudeConfig) -> f64 {
    let scores: Vec<f64> = traces
        .iter()
        .filter(|t| !t.values.is_empty())
        .map(|t| score_magnitude(t, cfg))
        .collect();
    if scores.is_empty() {
        NEUTRAL
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeMap, BTreeSet};

    use super::*;
    use crate::workflow::{ProgramBuilder, Shape, UnitSignature};

    fn state(depth: usize, hist: &[(&str, usize)]) -> WorkflowState {
        WorkflowState {
            depth,
            operator_histogram: hist.iter().map(|(k, v)| (k.to_string(), *v)).collect::<BTreeMap<_, _>>(),
            unit_tagged_ops: BTreeSet::new(),
            magnitude_summary: None,
        }
    }

    fn trace(values: &[f64], inputs: &[f64]) -> ExecutionTrace {
        ExecutionTrace {
            nodes: vec![],
            values: values.to_vec(),
            input_constants: inputs.to_vec(),
            success: true,
            output: values.last().copied(),
            violation: None,
        }
    }

    #[test]
    fn depth_examples() {
        let cfg = DepthDiversityConfig::default();
        assert_eq!(score_depth(&state(10, &[]), &cfg), 1.0);
        assert!((score_depth(&state(20, &[]), &cfg) - 0.5).abs() < 1e-12);
        assert_eq!(score_depth(&state(30, &[]), &cfg), 0.0);
    }

    #[test]
    fn diversity_examples() {
        let names = ["add", "sub", "mul", "div", "sqrt", "log", "pow", "neg"];
        let uniform: Vec<(&str, usize)> = names.iter().map(|n| (*n, 3)).collect();
        assert!((score_diversity(&state(1, &uniform), 8) - 1.0).abs() < 1e-12);
        assert_eq!(score_diversity(&state(1, &[("add", 5)]), 8), 0.0);
        let third = score_diversity(&state(1, &[("add", 2), ("mul", 2)]), 8);
        assert!((third - 2f64.ln() / 8f64.ln()).abs() < 1e-12);
        assert!((third - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(score_diversity(&state(0, &[]), 8), 0.0);
    }

    #[test]
    fn units_examples() {
        let reg = OperatorRegistry::baseline();
        let mut b = ProgramBuilder::new();
        let x = b.input();
        let y = b.input();
        let a = b.op("add", &[x, y]);
        assert_eq!(score_units(&b.build(a), &reg).unwrap(), 0.5);

        let mut b = ProgramBuilder::new();
        let l1 = b.input_with_unit(UnitSignature::base("length"));
        let l2 = b.input_with_unit(UnitSignature::base("length"));
        let t = b.input_with_unit(UnitSignature::base("time"));
        let good = b.op("add", &[l1, l2]);
        let bad = b.op("add", &[l1, t]);
        let both = b.op("mul", &[good, bad]);
        // `both` has an untagged operand (the failed add), so it is not unit-checked.
        assert_eq!(score_units(&b.build(both), &reg).unwrap(), 0.5);

        let mut b = ProgramBuilder::new();
        let l = b.input_with_unit(UnitSignature::base("length"));
        let m = b.op("mul", &[l, l]);
        assert_eq!(score_units(&b.build(m), &reg).unwrap(), 1.0);
    }

    #[test]
    fn types_examples() {
        let reg = OperatorRegistry::baseline();
        let mut b = ProgramBuilder::new();
        let c = b.constant(-3.0);
        let s = b.op("sqrt", &[c]);
        assert_eq!(score_types(&b.build(s), &reg).unwrap(), 0.0);

        let mut b = ProgramBuilder::new();
        let x = b.input();
        let y = b.input();
        b.tag_shape(x, Shape::Matrix(2, 3)).tag_shape(y, Shape::Matrix(3, 4));
        let m = b.op("mul", &[x, y]);
        assert_eq!(score_types(&b.build(m), &reg).unwrap(), 1.0);

        let mut b = ProgramBuilder::new();
        let x = b.input();
        let c = b.constant(-2.0);
        let n1 = b.op("neg", &[x]);
        let n2 = b.op("mul", &[n1, x]);
        let n3 = b.op("log", &[c]);
        let n4 = b.op("add", &[n2, n3]);
        assert_eq!(score_types(&b.build(n4), &reg).unwrap(), 0.75);

        let mut b = ProgramBuilder::new();
        let x = b.input();
        assert_eq!(score_types(&b.build(x), &reg).unwrap(), 0.5);
    }

    #[test]
    fn magnitude_examples() {
        let cfg = MagnitudeConfig::default();
        // theta = 3 * 100 = 300
        assert_eq!(score_magnitude(&trace(&[300.0, -5.0], &[3.0, -1.0]), &cfg), 1.0);
        assert!((score_magnitude(&trace(&[600.0], &[3.0]), &cfg) - 0.5).abs() < 1e-12);
        assert_eq!(score_magnitude(&trace(&[-1200.0], &[3.0]), &cfg), 0.0);
        assert_eq!(score_magnitude(&trace(&[1.0], &[]), &cfg), 0.5);
        assert_eq!(score_magnitude(&trace(&[1.0], &[0.0, 0.0]), &cfg), 0.5);
    }

    #[test]
    fn magnitude_over_traces_is_mean() {
        let cfg = MagnitudeConfig::default();
        let ts = [trace(&[1.0], &[1.0]), trace(&[200.0], &[1.0]), trace(&[], &[1.0])];
        assert!((score_magnitude_traces(&ts, &cfg) - 0.75).abs() < 1e-12);
        assert_eq!(score_magnitude_traces(&[], &cfg), 0.5);
    }
}
