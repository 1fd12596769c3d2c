use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::constraints::{Family, FamilySet, NEUTRAL};
use crate::harness::{cost, tokens_per_problem, PriceMap};
use crate::mcts::{Event, LogRecord, RunLog, StageSwitches};

use super::RunError;

/// Metrics of one run, computed from its log alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    /// Mean simulated reward of each round, in order.
    pub round_scores: Vec<f64>,
    pub round_mean: f64,
    /// Population standard deviation of `round_scores`.
    pub round_std: f64,
    pub proposed: usize,
    pub pruned: usize,
    pub pruning_rate: f64,
    pub simulations: usize,
    pub best_reward: Option<f64>,
    pub tokens_per_problem: f64,
    pub cost: f64,
}

/// Mean and population standard deviation; both 0 for an empty slice.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn report_log(name: &str, log: &RunLog, n_problems: usize, prices: &PriceMap) -> Result<RunReport, RunError> {
    let round_scores = log.round_scores();
    let (round_mean, round_std) = mean_std(&round_scores);
    let (proposed, pruned) = log.pruning_counts();
    let records = log.token_records();
    let rewards = log.events(Event::Simulated).filter_map(|r| r.reward);
    Ok(RunReport {
        name: name.to_string(),
        round_mean,
        round_std,
        round_scores,
        proposed,
        pruned,
        pruning_rate: log.pruning_rate(),
        simulations: log.events(Event::Simulated).count(),
        best_reward: rewards.fold(None, |b: Option<f64>, x| Some(b.map_or(x, |b| b.max(x)))),
        tokens_per_problem: tokens_per_problem(&records, n_problems)?,
        cost: cost(&records, prices, n_problems)?,
    })
}

/// sigma_A / sigma_B. Two flat runs compare as 1; a flat B under a noisy A
/// gives infinity.
pub fn variance_ratio(a: &RunReport, b: &RunReport) -> f64 {
    if a.round_std == b.round_std {
        1.0
    } else {
        a.round_std / b.round_std
    }
}

/// Plain-text table, one row per run, then variance ratios of every run
/// against the first.
pub fn render_table(reports: &[RunReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<24} {:>7} {:>9} {:>9} {:>9} {:>8} {:>9} {:>12} {:>12}",
        "run", "rounds", "mean", "std", "pruned", "rate", "sims", "tok/problem", "cost"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<24} {:>7} {:>9.4} {:>9.4} {:>4}/{:<4} {:>8.4} {:>9} {:>12.2} {:>12.6}",
            r.name,
            r.round_scores.len(),
            r.round_mean,
            r.round_std,
            r.pruned,
            r.proposed,
            r.pruning_rate,
            r.simulations,
            r.tokens_per_problem,
            r.cost
        );
    }
    if let Some((base, rest)) = reports.split_first() {
        for r in rest {
            let _ = writeln!(out, "variance ratio {} / {} = {:.4}", r.name, base.name, variance_ratio(r, base));
        }
    }
    out
}

const CREDIT_TOL: f64 = 1e-12;

fn check_neutral(r: &LogRecord, i: usize, families: &FamilySet, out: &mut Vec<String>) {
    let Some(c) = r.c_vector else { return };
    for f in Family::ALL {
        if !families.contains(f) && c[f.index()] != NEUTRAL {
            out.push(format!("line {}: disabled {} scored {}", i + 1, f, c[f.index()]));
        }
    }
}

/// Checks a run log against the injection rules of its configuration and
/// returns one message per violation.
///
/// Rules: disabled families read exactly 0.5 everywhere; a pruned
/// candidate sits strictly under its gate and pruning only happens with the
/// expansion stage on; within one expansion the fallback fires exactly when
/// every candidate is under the gate and then keeps the most compliant one;
/// with the simulation stage off the magnitude score stays pinned; credit is
/// `R * C_total` with backprop shaping on and raw `R` otherwise.
pub fn audit(log: &RunLog, families: &FamilySet, stages: &StageSwitches) -> Vec<String> {
    let mut out = Vec::new();
    let recs = &log.records;
    let mut i = 0;
    while i < recs.len() {
        let r = &recs[i];
        check_neutral(r, i, families, &mut out);
        match r.event {
            Event::Simulated => {
                let (Some(reward), Some(credit), Some(c)) = (r.reward, r.credit, r.c_total) else {
                    out.push(format!("line {}: simulated record lacks reward, credit or C_total", i + 1));
                    i += 1;
                    continue;
                };
                let want = if stages.backprop { reward * c } else { reward };
                if (credit - want).abs() > CREDIT_TOL {
                    out.push(format!("line {}: credit {credit}, expected {want}", i + 1));
                }
                if !stages.simulation {
                    let pinned = if families.magnitude { 1.0 } else { NEUTRAL };
                    let m = r.c_vector.map(|c| c[Family::Magnitude.index()]);
                    if m != Some(pinned) {
                        out.push(format!("line {}: magnitude {m:?} with simulation shaping off", i + 1));
                    }
                }
                i += 1;
            }
            Event::Pruned | Event::Expanded => {
                let start = i;
                while i < recs.len()
                    && matches!(recs[i].event, Event::Pruned | Event::Expanded)
                    && recs[i].parent == r.parent
                    && recs[i].round == r.round
                {
                    if i > start {
                        check_neutral(&recs[i], i, families, &mut out);
                    }
                    i += 1;
                }
                audit_expansion(&recs[start..i], start, stages, &mut out);
            }
            _ => i += 1,
        }
    }
    out
}

fn audit_expansion(group: &[LogRecord], offset: usize, stages: &StageSwitches, out: &mut Vec<String>) {
    let mut under = Vec::with_capacity(group.len());
    for (k, r) in group.iter().enumerate() {
        let line = offset + k + 1;
        let (Some(c), Some(tau)) = (r.c_total, r.tau) else {
            out.push(format!("line {line}: candidate lacks C_total or tau"));
            return;
        };
        under.push(c < tau);
        if r.event == Event::Pruned {
            if !stages.expansion {
                out.push(format!("line {line}: pruned with the gate off"));
            }
            if c >= tau {
                out.push(format!("line {line}: pruned with C_total {c} >= tau {tau}"));
            }
        }
    }
    let all_under = under.iter().all(|u| *u);
    let fallbacks: Vec<usize> = (0..group.len())
        .filter(|&k| group[k].event == Event::Expanded && group[k].fallback == Some(true))
        .collect();
    let line = offset + 1;
    if stages.expansion && all_under {
        match fallbacks.as_slice() {
            [k] => {
                let kept = group[*k].c_total.unwrap_or(f64::NAN);
                if group.iter().any(|r| r.c_total.is_some_and(|c| c > kept)) {
                    out.push(format!("line {}: fallback kept a less compliant candidate", offset + k + 1));
                }
                if group.iter().filter(|r| r.event == Event::Expanded).count() != 1 {
                    out.push(format!("line {line}: fallback expansion kept more than one candidate"));
                }
            }
            _ => out.push(format!(
                "line {line}: every candidate under the gate but {} fallbacks",
                fallbacks.len()
            )),
        }
    } else if !fallbacks.is_empty() {
        out.push(format!("line {line}: fallback fired although the gate passed a candidate"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{Role, RolePrice};
    use crate::mcts::Stage;

    fn rec(event: Event, c: f64, tau: f64) -> LogRecord {
        let mut r = LogRecord::new(0, event);
        r.parent = Some(0);
        r.c_total = Some(c);
        r.tau = Some(tau);
        r.c_vector = Some([0.5; 6]);
        r
    }

    fn sim(round: usize, reward: f64) -> LogRecord {
        let mut r = LogRecord::new(round, Event::Simulated);
        r.reward = Some(reward);
        r.credit = Some(reward * 0.5);
        r.c_total = Some(0.5);
        r
    }

    fn prices() -> PriceMap {
        let p = RolePrice { input: 0.0, output: 0.0 };
        [(Role::Optimizer, p), (Role::Executor, p)].into_iter().collect()
    }

    #[test]
    fn hand_statistics() {
        let (m, s) = mean_std(&[0.5, 0.7, 0.9]);
        assert!((m - 0.7).abs() < 1e-15);
        // sqrt(0.08 / 3)
        assert!((s - 0.16329931618554522).abs() < 1e-12);
        assert_eq!(mean_std(&[]), (0.0, 0.0));
    }

    #[test]
    fn report_and_identical_ratio() {
        let mut log = RunLog::default();
        for (round, x) in [(0, 0.5), (1, 0.7), (2, 0.9)] {
            log.push(sim(round, x));
        }
        log.push(rec(Event::Expanded, 0.7, 0.6));
        log.push(rec(Event::Expanded, 0.7, 0.6));
        log.push(rec(Event::Pruned, 0.1, 0.6));
        let r = report_log("a", &log, 4, &prices()).unwrap();
        assert!((r.round_mean - 0.7).abs() < 1e-15);
        assert!((r.pruning_rate - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(variance_ratio(&r, &r.clone()), 1.0);
        assert!(render_table(&[r.clone(), r]).contains("variance ratio a / a = 1.0000"));
    }

    #[test]
    fn audit_accepts_gate_and_fallback() {
        let stages = StageSwitches::all();
        let fam = FamilySet::all();
        let mut log = RunLog::default();
        log.push(rec(Event::Expanded, 0.7, 0.6));
        log.push(rec(Event::Pruned, 0.2, 0.6));
        let mut fb = rec(Event::Expanded, 0.4, 0.6);
        fb.fallback = Some(true);
        fb.parent = Some(1);
        let mut lo = rec(Event::Pruned, 0.3, 0.6);
        lo.parent = Some(1);
        log.push(lo);
        log.push(fb);
        log.push(sim(0, 0.8));
        assert_eq!(audit(&log, &fam, &stages), Vec::<String>::new());
    }

    #[test]
    fn audit_flags_violations() {
        let fam = FamilySet::only(Family::Depth);
        let stages = StageSwitches::only(Stage::Selection);
        let mut log = RunLog::default();
        let mut bad = rec(Event::Pruned, 0.7, 0.6);
        bad.c_vector = Some([0.9, 0.5, 0.5, 0.5, 0.5, 0.5]);
        log.push(bad);
        log.push(sim(0, 0.8));
        let v = audit(&log, &fam, &stages);
        assert!(v.iter().any(|m| m.contains("disabled units")), "{v:?}");
        assert!(v.iter().any(|m| m.contains("gate off")), "{v:?}");
        assert!(v.iter().any(|m| m.contains(">= tau")), "{v:?}");
        assert!(v.iter().any(|m| m.contains("credit")), "{v:?}");
        assert!(v.iter().any(|m| m.contains("magnitude")), "{v:?}");
    }
}
