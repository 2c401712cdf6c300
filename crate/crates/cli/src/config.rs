//! Experiment configuration: strict key = value TOML with sections.
//!
//! Unknown keys are rejected, every validation failure names the offending
//! field, and a parsed config serializes back to an equivalent document.

use std::path::PathBuf;

use agglab_core::{enumeration_size, AggregationScheme, ClipConfig, TaskSpec, ENUMERATION_GUARD};
use agglab_core::{AdvantageMode, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Squared gradient deviations regressed on response length.
    VarianceLength,
    /// Closed-form CV ordering sweep over random length vectors.
    CvOrdering,
    /// Monte Carlo aggregate means against the enumerated gradient.
    Table1Check,
    /// Variance comparison at a fixed length multiset.
    OptimalityCheck,
    /// Matched-seed training runs across schemes.
    TrainCompare,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::VarianceLength => "variance-length",
            ExperimentKind::CvOrdering => "cv-ordering",
            ExperimentKind::Table1Check => "table1-check",
            ExperimentKind::OptimalityCheck => "optimality-check",
            ExperimentKind::TrainCompare => "train-compare",
        }
    }

    pub fn is_stats(&self) -> bool {
        !matches!(self, ExperimentKind::TrainCompare)
    }
}

/// One scheme entry; `m` defaults to the task's `max_len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    Grpo,
    Dapo,
    DrGrpo,
    DeltaL,
}

impl SchemeConfig {
    pub fn delta_l(alpha: f64) -> Self {
        SchemeConfig {
            kind: SchemeKind::DeltaL,
            alpha: Some(alpha),
            m: None,
        }
    }

    fn resolve(&self, index: usize, default_m: f64) -> Result<AggregationScheme, CliError> {
        let m = self.m.unwrap_or(default_m);
        let scheme = match self.kind {
            SchemeKind::Grpo => AggregationScheme::Grpo,
            SchemeKind::Dapo => AggregationScheme::Dapo,
            SchemeKind::DrGrpo => AggregationScheme::DrGrpo { m },
            SchemeKind::DeltaL => {
                let alpha = self.alpha.ok_or_else(|| {
                    CliError::ConfigInvalid(format!("schemes[{index}]: delta-l requires `alpha`"))
                })?;
                AggregationScheme::DeltaL { alpha, m }
            }
        };
        if let AggregationScheme::DeltaL { alpha, .. } = scheme {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(CliError::ConfigInvalid(format!(
                    "schemes[{index}].alpha = {alpha} outside the allowed interval [0, 1]"
                )));
            }
        }
        scheme
            .validate()
            .map_err(|e| CliError::ConfigInvalid(format!("schemes[{index}]: {e}")))?;
        Ok(scheme)
    }
}

/// Training knobs for `train-compare`; each defaults to the desk-scale run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub prompts_per_batch: usize,
    pub rollouts_per_prompt: usize,
    pub minibatches_per_batch: usize,
    pub learning_rate: f64,
    pub steps: usize,
    pub eval_every: usize,
    pub advantage_mode: AdvantageMode,
    pub clip: ClipConfig,
    pub dynamic_sampling: bool,
    pub overlong_filtering: bool,
    pub dapo_full_batch_lengths: bool,
    pub eval_prompts: usize,
    pub eval_k: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let d = TrainConfig::desk_default(AggregationScheme::Grpo, 0);
        TrainSettings {
            prompts_per_batch: d.prompts_per_batch,
            rollouts_per_prompt: d.rollouts_per_prompt,
            minibatches_per_batch: d.minibatches_per_batch,
            learning_rate: d.learning_rate,
            steps: d.steps,
            eval_every: d.eval_every,
            advantage_mode: d.advantage_mode,
            clip: d.clip,
            dynamic_sampling: d.dynamic_sampling,
            overlong_filtering: d.overlong_filtering,
            dapo_full_batch_lengths: d.dapo_full_batch_lengths,
            eval_prompts: d.eval_prompts,
            eval_k: d.eval_k,
        }
    }
}

impl TrainSettings {
    pub fn to_train_config(&self, scheme: AggregationScheme, seed: u64) -> TrainConfig {
        TrainConfig {
            scheme,
            advantage_mode: self.advantage_mode,
            clip: self.clip,
            prompts_per_batch: self.prompts_per_batch,
            rollouts_per_prompt: self.rollouts_per_prompt,
            minibatches_per_batch: self.minibatches_per_batch,
            learning_rate: self.learning_rate,
            steps: self.steps,
            eval_every: self.eval_every,
            dynamic_sampling: self.dynamic_sampling,
            overlong_filtering: self.overlong_filtering,
            dapo_full_batch_lengths: self.dapo_full_batch_lengths,
            eval_prompts: self.eval_prompts,
            eval_k: self.eval_k,
            seed,
        }
    }
}

/// Extra knobs for `optimality-check`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimalitySettings {
    /// Prescribed length multiset; the group size is its length.
    pub lengths: Vec<usize>,
}

/// Extra knobs for `table1-check`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Table1Settings {
    pub group_size: usize,
}

impl Default for Table1Settings {
    fn default() -> Self {
        Table1Settings { group_size: 8 }
    }
}

/// Extra knobs for `variance-length`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VarianceLengthSettings {
    /// Length bins with fewer samples are dropped from the regression.
    pub min_bin_count: usize,
}

impl Default for VarianceLengthSettings {
    fn default() -> Self {
        VarianceLengthSettings { min_bin_count: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Monte Carlo draws, random vectors, or training runs per seed,
    /// depending on the kind.
    pub samples: usize,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schemes: Vec<SchemeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimality: Option<OptimalitySettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table1: Option<Table1Settings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance_length: Option<VarianceLengthSettings>,
}

impl ExperimentConfig {
    /// Default normalizer for schemes that carry one.
    pub fn default_m(&self) -> f64 {
        self.task.as_ref().map(|t| t.max_len as f64).unwrap_or(1.0)
    }

    pub fn resolved_schemes(&self) -> Result<Vec<AggregationScheme>, CliError> {
        let m = self.default_m();
        self.schemes
            .iter()
            .enumerate()
            .map(|(i, s)| s.resolve(i, m))
            .collect()
    }

    /// Fill in kind-dependent defaults (the alpha grid for sweeps, the
    /// standard five-scheme set for training comparisons).
    pub fn populate_defaults(&mut self) {
        if self.schemes.is_empty() {
            match self.kind {
                ExperimentKind::CvOrdering
                | ExperimentKind::Table1Check
                | ExperimentKind::OptimalityCheck => {
                    self.schemes = [0.0, 0.25, 0.5, 0.75, 1.0]
                        .iter()
                        .map(|&a| SchemeConfig::delta_l(a))
                        .collect();
                    if matches!(
                        self.kind,
                        ExperimentKind::Table1Check | ExperimentKind::OptimalityCheck
                    ) {
                        self.schemes.push(SchemeConfig {
                            kind: SchemeKind::DrGrpo,
                            alpha: None,
                            m: None,
                        });
                    }
                }
                ExperimentKind::TrainCompare => {
                    self.schemes = vec![
                        SchemeConfig::delta_l(1.0),
                        SchemeConfig::delta_l(0.75),
                        SchemeConfig {
                            kind: SchemeKind::Grpo,
                            alpha: None,
                            m: None,
                        },
                        SchemeConfig {
                            kind: SchemeKind::Dapo,
                            alpha: None,
                            m: None,
                        },
                        SchemeConfig {
                            kind: SchemeKind::DrGrpo,
                            alpha: None,
                            m: None,
                        },
                    ];
                }
                ExperimentKind::VarianceLength => {}
            }
        }
        if matches!(self.kind, ExperimentKind::TrainCompare) && self.train.is_none() {
            self.train = Some(TrainSettings::default());
        }
        if matches!(self.kind, ExperimentKind::Table1Check) && self.table1.is_none() {
            self.table1 = Some(Table1Settings::default());
        }
        if matches!(self.kind, ExperimentKind::VarianceLength) && self.variance_length.is_none() {
            self.variance_length = Some(VarianceLengthSettings::default());
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(CliError::ConfigInvalid("seeds must be non-empty".into()));
        }
        if self.samples == 0 {
            return Err(CliError::ConfigInvalid("samples must be positive".into()));
        }
        if let Some(task) = &self.task {
            task.validate()
                .map_err(|e| CliError::ConfigInvalid(format!("task: {e}")))?;
        }
        let needs_task = !matches!(self.kind, ExperimentKind::CvOrdering);
        if needs_task && self.task.is_none() {
            return Err(CliError::ConfigInvalid(format!(
                "kind {} requires a [task] section",
                self.kind.name()
            )));
        }
        self.resolved_schemes()?;
        match self.kind {
            ExperimentKind::Table1Check | ExperimentKind::OptimalityCheck => {
                let task = self.task.as_ref().expect("checked above");
                let leaves = enumeration_size(task);
                if leaves > ENUMERATION_GUARD {
                    return Err(CliError::ConfigInvalid(format!(
                        "task: vocab_size^max_len = {leaves:.3e} exceeds the enumeration guard {ENUMERATION_GUARD:.0e}; {} needs an enumerable task",
                        self.kind.name()
                    )));
                }
            }
            _ => {}
        }
        if matches!(self.kind, ExperimentKind::OptimalityCheck) {
            let opt = self.optimality.as_ref().ok_or_else(|| {
                CliError::ConfigInvalid(
                    "optimality-check requires an [optimality] section with `lengths`".into(),
                )
            })?;
            let task = self.task.as_ref().expect("checked above");
            if opt.lengths.is_empty() {
                return Err(CliError::ConfigInvalid("optimality.lengths must be non-empty".into()));
            }
            for (i, &l) in opt.lengths.iter().enumerate() {
                if l < 1 || l > task.max_len {
                    return Err(CliError::ConfigInvalid(format!(
                        "optimality.lengths[{i}] = {l} outside 1..=max_len ({})",
                        task.max_len
                    )));
                }
            }
        }
        if matches!(self.kind, ExperimentKind::TrainCompare) {
            if let Some(t) = &self.train {
                // Reuse the trainer's own validation for field-level errors.
                t.to_train_config(AggregationScheme::Grpo, 0)
                    .validate()
                    .map_err(|e| CliError::ConfigInvalid(format!("train: {e}")))?;
            }
        }
        Ok(())
    }
}

/// Parse, fill defaults, and validate.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let mut config: ExperimentConfig = toml::from_str(text)
        .map_err(|e| CliError::ConfigInvalid(format!("parse error: {e}")))?;
    config.populate_defaults();
    config.validate()?;
    Ok(config)
}

pub fn serialize_config(config: &ExperimentConfig) -> Result<String, CliError> {
    toml::to_string(config).map_err(|e| CliError::ConfigInvalid(format!("serialize error: {e}")))
}

/// Hash of the parsed form, stable under key reordering in the source text.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let canonical = serde_json::to_string(config).expect("config serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    let mut out = String::with_capacity(16);
    for b in &digest[..8] {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Human-readable schema and defaults, shown by `config-reference`.
pub fn config_reference() -> String {
    let defaults = TrainSettings::default();
    format!(
        r#"Experiment config reference (TOML, unknown keys rejected)

Top level
  kind          one of: variance-length | cv-ordering | table1-check |
                optimality-check | train-compare            (required)
  samples       draws / random vectors / per-seed budget    (required)
  seeds         non-empty integer list                      (required)
  output_dir    report directory                            (default: out/<kind>)

[task]          required for every kind except cv-ordering
  vocab_size    tokens 0..vocab_size, token 0 is STOP
  max_len       response cap; also the default normalizer M
  target        success condition parameter
  reward_rule   "sum-equals-target" | "parity-of-length"

[[schemes]]     defaults: delta-l alpha grid {{0, 0.25, 0.5, 0.75, 1}} for
                sweeps (plus dr-grpo for mean/variance checks); the
                five-scheme set for train-compare
  kind          "grpo" | "dapo" | "dr-grpo" | "delta-l"
  alpha         required for delta-l, must lie in [0, 1]
  m             normalizer, defaults to task.max_len

[train]         train-compare only; field defaults:
  prompts_per_batch = {ppb}    rollouts_per_prompt = {rpp}
  minibatches_per_batch = {mb}  learning_rate = {lr}
  steps = {steps}   eval_every = {ee}   eval_prompts = {ep}   eval_k = {ek}
  advantage_mode = "mean-std"
  clip = {{ enabled = true, eps_low = 0.2, eps_high = 0.3 }}
  dynamic_sampling = false   overlong_filtering = false
  dapo_full_batch_lengths = true

[optimality]    optimality-check only
  lengths       prescribed length multiset (required)

[table1]        table1-check only
  group_size    rollouts per group (default 8)

[variance_length]
  min_bin_count length bins below this are dropped (default 100)
"#,
        ppb = defaults.prompts_per_batch,
        rpp = defaults.rollouts_per_prompt,
        mb = defaults.minibatches_per_batch,
        lr = defaults.learning_rate,
        steps = defaults.steps,
        ee = defaults.eval_every,
        ep = defaults.eval_prompts,
        ek = defaults.eval_k,
    )
}
