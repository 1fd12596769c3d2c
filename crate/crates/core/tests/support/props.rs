//! Randomized invariants of the scoring, aggregation, threshold and
//! weighting math, shared by the property tests and the acceptance run.

use std::collections::{BTreeMap, BTreeSet};

use cgmcts_core::adaptive::{reweight, AdaptationConfig, WeightVector};
use cgmcts_core::constraints::{
    aggregate, score_depth, score_diversity, score_magnitude, threshold, AggregationConfig, ConstraintEngine,
    ConstraintVector, DepthDiversityConfig, MagnitudeConfig, ThresholdSchedule,
};
use cgmcts_core::motif::{init_templates, LibrarySettings};
use cgmcts_core::workflow::{
    derive_state, interpret, ExecutionTrace, NodeId, OperatorRegistry, ProgramBuilder, UnitSignature, WorkflowProgram,
    WorkflowState,
};
use proptest::prelude::*;
use proptest::test_runner::{RngAlgorithm, TestCaseError, TestRng, TestRunner};

pub const CASES: u32 = 10_000;

fn run<S: Strategy>(strategy: S, check: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let cfg = ProptestConfig {
        cases: CASES,
        failure_persistence: None,
        ..ProptestConfig::default()
    };
    let mut runner = TestRunner::new_with_rng(cfg, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, check).map_err(|e| e.to_string())
}

fn state_from(hist: &[usize], depth: usize) -> WorkflowState {
    let names = OperatorRegistry::baseline().names();
    WorkflowState {
        depth,
        operator_histogram: names
            .iter()
            .zip(hist)
            .filter(|(_, c)| **c > 0)
            .map(|(n, c)| (n.clone(), *c))
            .collect(),
        unit_tagged_ops: BTreeSet::new(),
        magnitude_summary: None,
    }
}

fn simplex(raw: &[f64]) -> WeightVector {
    let z: f64 = raw.iter().sum();
    let mut w = [0.0; 6];
    for (o, r) in w.iter_mut().zip(raw) {
        *o = r / z;
    }
    // absorb rounding so the constructor's tolerance always holds
    let drift: f64 = 1.0 - w.iter().sum::<f64>();
    w[0] += drift;
    WeightVector::new(w).expect("normalized positive weights")
}

fn dims() -> impl Strategy<Value = Option<UnitSignature>> {
    prop_oneof![
        Just(None),
        Just(Some(UnitSignature::dimensionless())),
        Just(Some(UnitSignature::base("length"))),
        Just(Some(UnitSignature::base("time"))),
    ]
}

/// A random program over the baseline registry: up to 3 tagged inputs, a
/// few constants of either sign, and up to 8 operators wired to earlier
/// nodes.
fn programs() -> impl Strategy<Value = (WorkflowProgram, Vec<f64>)> {
    (
        prop::collection::vec((dims(), -50.0f64..50.0), 1..=3),
        prop::collection::vec(-5.0f64..5.0, 0..=2),
        prop::collection::vec((0usize..8, any::<u32>(), any::<u32>()), 0..=8),
    )
        .prop_map(|(inputs, consts, ops)| {
            let reg = OperatorRegistry::baseline();
            let names = reg.names();
            let mut b = ProgramBuilder::new();
            let mut pool: Vec<NodeId> = Vec::new();
            let mut values = Vec::new();
            for (unit, v) in inputs {
                pool.push(match unit {
                    Some(u) => b.input_with_unit(u),
                    None => b.input(),
                });
                values.push(v);
            }
            for c in consts {
                pool.push(b.constant(c));
            }
            for (k, a, bb) in ops {
                let op = &names[k];
                let arity = reg.get(op).expect("baseline op").arity;
                let pick = |x: u32| pool[x as usize % pool.len()];
                let args: Vec<NodeId> = [a, bb].into_iter().take(arity).map(pick).collect();
                let id = b.op(op, &args);
                pool.push(id);
            }
            let out = *pool.last().expect("at least one input");
            (b.build(out), values)
        })
}


pub fn scores_in_unit_interval() -> Result<(), String> {
    run((programs(), 0u64..4), |((program, values), seed)| {
        let reg = OperatorRegistry::baseline();
        let engine = ConstraintEngine::new(reg.clone());
        let lib = init_templates(&reg, &["c".to_string()], LibrarySettings::default(), seed).unwrap();
        let inputs: BTreeMap<NodeId, f64> = program
            .roots
            .iter()
            .filter(|r| program.node(**r).is_some_and(|n| n.value.is_none()))
            .zip(&values)
            .map(|(r, v)| (*r, *v))
            .collect();
        let trace = interpret(&program, &reg, &inputs).unwrap();
        let state = derive_state(&program, &reg, Some(&trace)).unwrap();
        let c = engine.with_traces(&engine.raw_static(&program, &state, "c", &lib).unwrap(), &[trace], false);
        for v in c.to_array() {
            prop_assert!((0.0..=1.0).contains(&v), "{:?}", c);
        }
        Ok(())
    })
}

pub fn aggregate_bounded_and_monotone() -> Result<(), String> {
    let s = (
        prop::array::uniform6(0.0f64..=1.0),
        prop::array::uniform6(0.01f64..1.0),
        0usize..6,
        0.0f64..=1.0,
    );
    run(s, |(c, raw, k, bump)| {
        let a = AggregationConfig::default();
        let w = simplex(&raw);
        let v = aggregate(&ConstraintVector::from_array(c), &w, &a).unwrap();
        prop_assert!(v >= a.epsilon * (1.0 - 1e-12) && v <= (1.0 + a.epsilon) * (1.0 + 1e-12), "{v}");
        let mut up = c;
        up[k] = (up[k] + bump).min(1.0);
        let v2 = aggregate(&ConstraintVector::from_array(up), &w, &a).unwrap();
        prop_assert!(v2 >= v * (1.0 - 1e-12), "{v} -> {v2}");
        Ok(())
    })
}

pub fn weights_stay_on_simplex() -> Result<(), String> {
    let s = (
        prop::array::uniform6(0.01f64..1.0),
        prop::collection::vec(prop::array::uniform6(-1.0f64..=1.0), 1..40),
        0.0f64..2.0,
        0.0f64..=1.0,
    );
    run(s, |(start, steps, eta, alpha)| {
        let cfg = AdaptationConfig {
            eta,
            alpha,
            ..AdaptationConfig::default()
        };
        let mut w = simplex(&start);
        for corr in &steps {
            w = reweight(&w, corr, &cfg);
            let a = w.as_array();
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{a:?}");
            prop_assert!(a.iter().all(|x| *x > 0.0), "{a:?}");
        }
        Ok(())
    })
}

pub fn threshold_non_increasing_with_floor() -> Result<(), String> {
    run((0.0f64..0.5, 0.0f64..0.5, 0.0f64..0.3, 0usize..200), |(tau_min, span, decay, d)| {
        let s = ThresholdSchedule {
            tau0: tau_min + span,
            tau_min,
            decay_k: decay,
        };
        let (a, b) = (threshold(d, &s), threshold(d + 1, &s));
        prop_assert!(b <= a, "{a} -> {b}");
        prop_assert!(b >= tau_min && a <= s.tau0);
        prop_assert_eq!(threshold(0, &s), s.tau0);
        Ok(())
    })
}

pub fn diversity_scale_invariant() -> Result<(), String> {
    run((prop::array::uniform8(0usize..20), 1usize..50, 0usize..40), |(hist, k, depth)| {
        let scaled: Vec<usize> = hist.iter().map(|c| c * k).collect();
        let a = score_diversity(&state_from(&hist, depth), 8);
        let b = score_diversity(&state_from(&scaled, depth), 8);
        prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        let d = score_depth(&state_from(&hist, depth), &DepthDiversityConfig::default());
        prop_assert!((0.0..=1.0).contains(&d));
        Ok(())
    })
}

pub fn magnitude_scale_invariant() -> Result<(), String> {
    let s = (
        prop::collection::vec(-100.0f64..100.0, 1..4),
        prop::collection::vec(-1e6f64..1e6, 1..8),
        prop_oneof![1e-3f64..1.0, 1.0f64..1e3],
    );
    run(s, |(inputs, values, s)| {
        let cfg = MagnitudeConfig::default();
        let trace = |k: f64| ExecutionTrace {
            nodes: (0..values.len() as u32).map(NodeId).collect(),
            values: values.iter().map(|v| v * k).collect(),
            input_constants: inputs.iter().map(|v| v * k).collect(),
            success: true,
            output: values.last().map(|v| v * k),
            violation: None,
        };
        let a = score_magnitude(&trace(1.0), &cfg);
        let b = score_magnitude(&trace(s), &cfg);
        prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        prop_assert!((0.0..=1.0).contains(&a));
        Ok(())
    })
}

/// Every property, by name.
#[allow(dead_code)]
pub type Property = fn() -> Result<(), String>;

#[allow(dead_code)]
pub const ALL: [(&str, Property); 6] = [
    ("scores in [0,1]", scores_in_unit_interval),
    ("aggregate range and monotonicity", aggregate_bounded_and_monotone),
    ("weights on simplex", weights_stay_on_simplex),
    ("threshold non-increasing with floor", threshold_non_increasing_with_floor),
    ("diversity scale invariance", diversity_scale_invariant),
    ("magnitude scale invariance", magnitude_scale_invariant),
];
