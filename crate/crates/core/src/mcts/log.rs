use std::fmt;

use serde::{Deserialize, Serialize};

use crate::harness::{Role, TokenRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    Selected,
    Expanded,
    Pruned,
    Simulated,
    WeightsUpdated,
    Refined,
}

/// One NDJSON line. The core fields are always present (possibly `null`);
/// the rest appear only on the events that use them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRecord {
    pub round: usize,
    pub event: Event,
    pub node_id: Option<usize>,
    #[serde(rename = "C_vector")]
    pub c_vector: Option<[f64; 6]>,
    #[serde(rename = "C_total")]
    pub c_total: Option<f64>,
    pub tau: Option<f64>,
    pub reward: Option<f64>,
    pub tokens_in: u64,
    pub tokens_out: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
    /// Node that was expanded, on `expanded` and `pruned` records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<usize>,
    /// Position of a candidate in the proposer's list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate: Option<usize>,
    /// Families below the gate, weakest first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failing: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<bool>,
    /// Value credited by backpropagation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credit: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<[f64; 6]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlations: Option<[f64; 6]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motifs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl LogRecord {
    pub fn new(round: usize, event: Event) -> Self {
        Self {
            round,
            event,
            node_id: None,
            c_vector: None,
            c_total: None,
            tau: None,
            reward: None,
            tokens_in: 0,
            tokens_out: 0,
            role: None,
            request_id: None,
            parent: None,
            candidate: None,
            failing: None,
            fallback: None,
            credit: None,
            weights: None,
            correlations: None,
            motifs: None,
            error: None,
        }
    }

    pub fn token_record(&self) -> Option<TokenRecord> {
        self.role.map(|role| TokenRecord {
            role,
            prompt_tokens: self.tokens_in,
            completion_tokens: self.tokens_out,
            request_id: self.request_id.clone().unwrap_or_default(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunLog {
    pub records: Vec<LogRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogParseError {
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LogParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for LogParseError {}

impl RunLog {
    pub fn push(&mut self, r: LogRecord) {
        self.records.push(r);
    }

    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Parses NDJSON; blank lines are skipped.
    pub fn from_ndjson(text: &str) -> Result<Self, LogParseError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r = serde_json::from_str(line).map_err(|e| LogParseError {
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push(r);
        }
        Ok(Self { records })
    }

    pub fn events(&self, e: Event) -> impl Iterator<Item = &LogRecord> {
        self.records.iter().filter(move |r| r.event == e)
    }

    /// One token record per proposer or evaluator call.
    pub fn token_records(&self) -> Vec<TokenRecord> {
        self.records.iter().filter_map(LogRecord::token_record).collect()
    }

    /// Mean simulated reward of each round that ran simulations, in round
    /// order.
    pub fn round_scores(&self) -> Vec<f64> {
        let mut per: Vec<(usize, f64, usize)> = Vec::new();
        for r in self.events(Event::Simulated) {
            let Some(x) = r.reward else { continue };
            match per.last_mut() {
                Some((round, sum, n)) if *round == r.round => {
                    *sum += x;
                    *n += 1;
                }
                _ => per.push((r.round, x, 1)),
            }
        }
        per.into_iter().map(|(_, s, n)| s / n as f64).collect()
    }

    /// (proposed, pruned) candidate counts.
    pub fn pruning_counts(&self) -> (usize, usize) {
        let pruned = self.events(Event::Pruned).count();
        (pruned + self.events(Event::Expanded).count(), pruned)
    }

    /// Pruned over proposed; 0 when nothing was proposed.
    pub fn pruning_rate(&self) -> f64 {
        match self.pruning_counts() {
            (0, _) => 0.0,
            (p, k) => k as f64 / p as f64,
        }
    }

    /// 1-based count of simulations up to the first reward of at least
    /// `target`.
    pub fn simulations_to_reach(&self, target: f64) -> Option<usize> {
        self.events(Event::Simulated)
            .position(|r| r.reward.is_some_and(|x| x >= target))
            .map(|i| i + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ndjson_round_trip_and_line_numbers() {
        let mut log = RunLog::default();
        let mut r = LogRecord::new(0, Event::Simulated);
        r.reward = Some(0.5);
        r.role = Some(Role::Executor);
        r.tokens_in = 10;
        log.push(r);
        log.push(LogRecord::new(1, Event::Pruned));
        let text = log.to_ndjson();
        assert_eq!(RunLog::from_ndjson(&text).unwrap(), log);
        let bad = format!("{text}{{\"round\": 2}}\n");
        assert_eq!(RunLog::from_ndjson(&bad).unwrap_err().line, 3);
    }

    #[test]
    fn pruning_rate_one_third() {
        let mut log = RunLog::default();
        log.push(LogRecord::new(0, Event::Expanded));
        log.push(LogRecord::new(0, Event::Expanded));
        log.push(LogRecord::new(0, Event::Pruned));
        assert!((log.pruning_rate() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(RunLog::default().pruning_rate(), 0.0);
    }
}
