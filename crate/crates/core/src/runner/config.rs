use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::adaptive::{AdaptationConfig, WeightVector};
use crate::constraints::{
    AggregationConfig, ConstraintEngine, DepthDiversityConfig, Family, FamilySet, MagnitudeConfig, ThresholdSchedule,
};
use crate::harness::{PriceMap, RolePrice, Role, SuiteSpec, Tolerance};
use crate::mcts::{SearchBudget, SearchConfig, Stage, StageSwitches};
use crate::motif::LibrarySettings;
use crate::parallel::Parallelism;
use crate::workflow::OperatorRegistry;

use super::RunError;

/// Who proposes edits and scores programs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ExecutorMode {
    #[default]
    Synthetic,
    /// `http://host:port/path` or `exec:PROGRAM ARGS...`.
    External(String),
}

impl FromStr for ExecutorMode {
    type Err = RunError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "synthetic" => Ok(Self::Synthetic),
            _ => match s.strip_prefix("external:") {
                Some(addr) if !addr.trim().is_empty() => Ok(Self::External(addr.to_string())),
                _ => Err(RunError::Config(format!(
                    "executor must be \"synthetic\" or \"external:ADDR\", got {s:?}"
                ))),
            },
        }
    }
}

impl fmt::Display for ExecutorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Synthetic => f.write_str("synthetic"),
            Self::External(a) => write!(f, "external:{a}"),
        }
    }
}

impl Serialize for ExecutorMode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ExecutorMode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightsMode {
    #[default]
    Adaptive,
    Fixed,
}

/// Shape of the generated problem suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub operators: Vec<String>,
    pub inputs: usize,
    pub max_ops: usize,
    pub target_edits: usize,
    pub input_range: [i32; 2],
    pub split_ratio: [u32; 2],
    pub n_problems: usize,
    pub categories: usize,
    /// Seed the proposer's candidate lists with constraint-violating edits.
    pub distractors: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        let s = SuiteSpec::default();
        Self {
            operators: s.operators,
            inputs: s.inputs,
            max_ops: s.max_ops,
            target_edits: s.target_edits,
            input_range: s.input_range,
            split_ratio: s.split_ratio,
            n_problems: 20,
            categories: 1,
            distractors: false,
        }
    }
}

impl SuiteConfig {
    pub fn spec(&self) -> SuiteSpec {
        SuiteSpec {
            operators: self.operators.clone(),
            inputs: self.inputs,
            max_ops: self.max_ops,
            target_edits: self.target_edits,
            input_range: self.input_range,
            split_ratio: self.split_ratio,
        }
    }
}

/// Every knob of one run. Unknown keys are rejected when parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub aggregation: AggregationConfig,
    pub threshold: ThresholdSchedule,
    pub depth_diversity: DepthDiversityConfig,
    pub magnitude: MagnitudeConfig,
    pub adaptation: AdaptationConfig,
    pub budget: SearchBudget,
    pub library: LibrarySettings,
    /// Keep the motif library fixed for the whole run.
    pub freeze_library: bool,
    pub prices: PriceMap,
    pub executor: ExecutorMode,
    pub families: FamilySet,
    pub stages: StageSwitches,
    pub weights: WeightsMode,
    pub initial_weights: Option<[f64; 6]>,
    pub suite: SuiteConfig,
    /// Problem set to use instead of the generated suite's.
    pub problems_file: Option<PathBuf>,
    /// Starting program to use instead of the generated suite's.
    pub initial_program_file: Option<PathBuf>,
    pub tolerance: Tolerance,
    pub parallelism: Parallelism,
}

impl Default for RunConfig {
    fn default() -> Self {
        let zero = RolePrice { input: 0.0, output: 0.0 };
        Self {
            aggregation: AggregationConfig::default(),
            threshold: ThresholdSchedule::default(),
            depth_diversity: DepthDiversityConfig::default(),
            magnitude: MagnitudeConfig::default(),
            adaptation: AdaptationConfig::default(),
            budget: SearchBudget::default(),
            library: LibrarySettings::default(),
            freeze_library: false,
            prices: [(Role::Optimizer, zero), (Role::Executor, zero)].into_iter().collect(),
            executor: ExecutorMode::Synthetic,
            families: FamilySet::all(),
            stages: StageSwitches::all(),
            weights: WeightsMode::Adaptive,
            initial_weights: None,
            suite: SuiteConfig::default(),
            problems_file: None,
            initial_program_file: None,
            tolerance: Tolerance::default(),
            parallelism: Parallelism::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn registry(&self) -> Result<OperatorRegistry, RunError> {
        Ok(OperatorRegistry::from_names(&self.suite.operators)?)
    }

    fn weight_vector(&self) -> Result<WeightVector, RunError> {
        match self.initial_weights {
            None => Ok(WeightVector::uniform()),
            Some(w) => Ok(WeightVector::new(w)?),
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if !self.stages.any() {
            return Err(RunError::Config("at least one injection stage must be enabled".into()));
        }
        if self.families.is_empty() {
            return Err(RunError::Config("at least one constraint family must be enabled".into()));
        }
        self.budget.validate()?;
        self.library.validate()?;
        self.weight_vector()?;
        self.registry()?;
        for (role, p) in &self.prices {
            if !(p.input >= 0.0 && p.output >= 0.0) {
                return Err(RunError::Config(format!("negative price for {role}")));
            }
        }
        if self.suite.split_ratio.contains(&0) {
            return Err(RunError::Config("split ratio entries must be positive".into()));
        }
        self.search_config("validate")?.validate()?;
        Ok(())
    }

    /// Search settings for `category`.
    pub fn search_config(&self, category: &str) -> Result<SearchConfig, RunError> {
        let mut engine = ConstraintEngine::new(self.registry()?);
        engine.aggregation = self.aggregation;
        engine.threshold = self.threshold;
        engine.depth = self.depth_diversity;
        engine.magnitude = self.magnitude;
        engine.enabled = self.families;
        Ok(SearchConfig {
            engine,
            adaptation: self.adaptation,
            stages: self.stages,
            adaptive_weights: self.weights == WeightsMode::Adaptive,
            initial_weights: self.weight_vector()?,
            budget: self.budget,
            category: category.to_string(),
            parallelism: self.parallelism,
        })
    }

    /// Number of validation problems the generated suite holds.
    pub fn validation_size(&self) -> usize {
        let [a, b] = self.suite.split_ratio;
        self.suite.n_problems * a as usize / (a + b).max(1) as usize
    }
}

/// One named cell of the ablation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationCell {
    pub name: String,
    pub config: RunConfig,
}

/// The full configuration, each family on its own, and each stage on its
/// own. Family-only cells keep every stage; stage-only cells keep every
/// family.
pub fn ablation_grid(base: &RunConfig) -> Vec<AblationCell> {
    let mut out = vec![AblationCell {
        name: "full".into(),
        config: base.clone(),
    }];
    for f in Family::ALL {
        let mut config = base.clone();
        config.families = FamilySet::only(f);
        out.push(AblationCell {
            name: format!("{}-only", f.name()),
            config,
        });
    }
    for s in Stage::ALL {
        let mut config = base.clone();
        config.stages = StageSwitches::only(s);
        out.push(AblationCell {
            name: format!("{}-only", s.name()),
            config,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_and_validates() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        assert_eq!(RunConfig::from_json("{}").unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_json(r#"{"budgett": {}}"#).unwrap_err();
        assert!(err.to_string().contains("budgett"), "{err}");
        assert!(RunConfig::from_json(r#"{"budget": {"round": 3}}"#).is_err());
    }

    #[test]
    fn all_stages_off_rejected() {
        let text = r#"{"stages": {"selection": false, "expansion": false, "simulation": false, "backprop": false}}"#;
        assert!(RunConfig::from_json(text).is_err());
    }

    #[test]
    fn executor_parsing() {
        assert_eq!("synthetic".parse::<ExecutorMode>().unwrap(), ExecutorMode::Synthetic);
        assert_eq!(
            "external:http://127.0.0.1:9/".parse::<ExecutorMode>().unwrap(),
            ExecutorMode::External("http://127.0.0.1:9/".into())
        );
        assert!("external:".parse::<ExecutorMode>().is_err());
        assert!("llm".parse::<ExecutorMode>().is_err());
        let cfg = RunConfig::from_json(r#"{"executor": "external:exec:server --stdio"}"#).unwrap();
        assert_eq!(cfg.executor.to_string(), "external:exec:server --stdio");
    }

    #[test]
    fn grid_has_eleven_cells() {
        let grid = ablation_grid(&RunConfig::default());
        assert_eq!(grid.len(), 11);
        assert_eq!(grid[0].name, "full");
        assert!(grid.iter().all(|c| c.config.validate().is_ok()));
        assert_eq!(grid[3].name, "pattern-only");
        assert_eq!(grid[3].config.families, FamilySet::only(Family::Pattern));
        assert_eq!(grid[7].config.stages, StageSwitches::only(Stage::Selection));
    }

    #[test]
    fn validation_size_follows_ratio() {
        assert_eq!(RunConfig::default().validation_size(), 4);
    }
}
