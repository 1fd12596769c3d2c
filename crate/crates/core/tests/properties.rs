//! Randomized invariants; each property runs 10^4 cases.

mod support;

use support::props;

#[test]
fn every_family_score_in_unit_interval() {
    props::scores_in_unit_interval().unwrap();
}

#[test]
fn aggregate_bounded_and_monotone() {
    props::aggregate_bounded_and_monotone().unwrap();
}

#[test]
fn weights_stay_on_simplex() {
    props::weights_stay_on_simplex().unwrap();
}

#[test]
fn threshold_non_increasing_with_floor() {
    props::threshold_non_increasing_with_floor().unwrap();
}

#[test]
fn diversity_invariant_under_histogram_scaling() {
    props::diversity_scale_invariant().unwrap();
}

#[test]
fn magnitude_invariant_under_value_scaling() {
    props::magnitude_scale_invariant().unwrap();
}
