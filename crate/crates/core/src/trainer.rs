//! Seeded gradient-ascent training loops on the toy task.
//!
//! Plain gradient ascent, no adaptive optimizer: with per-coordinate
//! rescaling in the loop the aggregation schemes would no longer be the only
//! thing that differs between runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aggregation::{scheme_weights, AggregationScheme, AggregationError};
use crate::gradient::{
    compute_advantages, sample_gradient_with, AdvantageMode, ClipConfig, GradError, GradVector,
};
use crate::policy::PolicyParams;
use crate::task::{TaskError, TaskSpec};
use crate::trajectory::{sample_trajectory_from, Trajectory};

/// Resample attempts per degenerate group before giving up.
pub const DYNAMIC_SAMPLING_RETRY_CAP: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub scheme: AggregationScheme,
    pub advantage_mode: AdvantageMode,
    pub clip: ClipConfig,
    pub prompts_per_batch: usize,
    /// Rollouts per prompt (the group size G).
    pub rollouts_per_prompt: usize,
    pub minibatches_per_batch: usize,
    pub learning_rate: f64,
    pub steps: usize,
    pub eval_every: usize,
    /// Resample degenerate groups instead of consuming them.
    pub dynamic_sampling: bool,
    /// Drop truncated responses from the loss (not from the trace stats).
    pub overlong_filtering: bool,
    /// DAPO only: normalize by the summed lengths of the whole batch rather
    /// than of the minibatch being applied.
    pub dapo_full_batch_lengths: bool,
    /// Samples per evaluation point: `eval_prompts * eval_k` rollouts.
    pub eval_prompts: usize,
    pub eval_k: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Desk-scale defaults: 16 prompts x 8 rollouts, 500 steps, eval every
    /// 25 steps, asymmetric clipping on.
    pub fn desk_default(scheme: AggregationScheme, seed: u64) -> Self {
        TrainConfig {
            scheme,
            advantage_mode: AdvantageMode::MeanStd,
            clip: ClipConfig::clip_higher(),
            prompts_per_batch: 16,
            rollouts_per_prompt: 8,
            minibatches_per_batch: 2,
            learning_rate: 2.5,
            steps: 500,
            eval_every: 25,
            dynamic_sampling: false,
            overlong_filtering: false,
            dapo_full_batch_lengths: true,
            eval_prompts: 64,
            eval_k: 8,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.scheme.validate()?;
        self.clip.validate()?;
        if self.rollouts_per_prompt < 2 {
            return Err(TrainError::InvalidConfig(
                "rollouts_per_prompt must be at least 2".into(),
            ));
        }
        if self.prompts_per_batch == 0 || self.minibatches_per_batch == 0 {
            return Err(TrainError::InvalidConfig(
                "prompts_per_batch and minibatches_per_batch must be positive".into(),
            ));
        }
        if self.prompts_per_batch % self.minibatches_per_batch != 0 {
            return Err(TrainError::InvalidConfig(format!(
                "minibatches_per_batch ({}) must divide prompts_per_batch ({})",
                self.minibatches_per_batch, self.prompts_per_batch
            )));
        }
        if self.steps < 1 {
            return Err(TrainError::InvalidConfig("steps must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(TrainError::InvalidConfig("eval_every must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig(
                "learning_rate must be finite and non-negative".into(),
            ));
        }
        if self.eval_prompts == 0 || self.eval_k == 0 {
            return Err(TrainError::InvalidConfig(
                "eval_prompts and eval_k must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Gradient(#[from] GradError),
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
    #[error("correlation undefined: scores are constant")]
    UndefinedCorrelation,
    #[error("monotonicity score needs at least 2 values, got {0}")]
    TooFewScores(usize),
}

/// Per-step trace record. The CSV form keeps the six fixed columns; the
/// dynamic-sampling counters ride along in the JSON form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub mean_reward: f64,
    pub mean_length: f64,
    pub entropy: f64,
    pub grad_norm: f64,
    /// Sum of the effective mixing weights applied this step.
    pub scheme_scale: f64,
    /// Degenerate groups consumed after exhausting resampling.
    pub degenerate_groups_consumed: usize,
    /// Groups whose dynamic-sampling retry budget ran out.
    pub resample_exhausted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: usize,
    pub avg_at_k: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainTrace {
    pub steps: Vec<StepRecord>,
    pub evals: Vec<EvalRecord>,
}

fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 over a simple combination; independent streams per
    // (step, prompt) so prompts could be sampled concurrently.
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(b.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct SampledGroup {
    trajectories: Vec<Trajectory>,
    advantages: Vec<f64>,
    degenerate: bool,
    exhausted: bool,
}

/// Run the training loop; returns the final parameters and the trace.
pub fn train(
    config: &TrainConfig,
    task: &TaskSpec,
    init: &PolicyParams,
) -> Result<(PolicyParams, TrainTrace), TrainError> {
    config.validate()?;
    task.validate()?;
    let mut params = init.clone();
    let mut trace = TrainTrace::default();

    let eval_rng_seed = mix_seed(config.seed, u64::MAX, 0);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(eval_rng_seed);
    trace.evals.push(EvalRecord {
        step: 0,
        avg_at_k: evaluate_avg_at_k(&params, task, config.eval_k, config.eval_prompts, &mut eval_rng),
    });

    let groups_per_minibatch = config.prompts_per_batch / config.minibatches_per_batch;

    for step in 0..config.steps {
        // Rollouts come from a frozen snapshot; minibatch updates within the
        // step use clipping against it.
        let snapshot = params.clone();
        let table = snapshot.softmax_table();

        let mut groups = Vec::with_capacity(config.prompts_per_batch);
        let mut degenerate_consumed = 0usize;
        let mut exhausted = 0usize;
        for prompt in 0..config.prompts_per_batch {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, step as u64, prompt as u64));
            let group = sample_group(&table, task, config, &mut rng);
            if group.degenerate {
                degenerate_consumed += 1;
            }
            if group.exhausted {
                exhausted += 1;
            }
            groups.push(group);
        }

        // Trace statistics cover every sampled trajectory, including ones the
        // loss later filters out.
        let mut n_traj = 0usize;
        let mut reward_sum = 0.0;
        let mut length_sum = 0usize;
        let mut entropy_sum = 0.0;
        let mut token_count = 0usize;
        for g in &groups {
            for t in &g.trajectories {
                n_traj += 1;
                reward_sum += t.reward;
                length_sum += t.length();
                let mut state = 0usize;
                for &tok in &t.tokens {
                    entropy_sum += table.row_entropy(state);
                    token_count += 1;
                    state = tok;
                }
            }
        }

        // Full-batch DAPO denominator: summed lengths of everything that
        // participates in the loss.
        let batch_length_sum: f64 = groups
            .iter()
            .flat_map(|g| g.trajectories.iter())
            .filter(|t| !(config.overlong_filtering && t.truncated))
            .map(|t| t.length() as f64)
            .sum();

        let mut update_dir_sum = GradVector::zeros(params.dim());
        let mut scheme_scale_sum = 0.0;
        for mb in groups.chunks(groups_per_minibatch) {
            let cur_table = params.softmax_table();
            let mut update = GradVector::zeros(params.dim());
            let mut scale = 0.0;
            match config.scheme {
                AggregationScheme::Dapo => {
                    let denom = if config.dapo_full_batch_lengths {
                        batch_length_sum
                    } else {
                        mb.iter()
                            .flat_map(|g| g.trajectories.iter())
                            .filter(|t| !(config.overlong_filtering && t.truncated))
                            .map(|t| t.length() as f64)
                            .sum()
                    };
                    if denom > 0.0 {
                        let w = 1.0 / denom;
                        for g in mb {
                            for (t, &a) in g.trajectories.iter().zip(&g.advantages) {
                                if config.overlong_filtering && t.truncated {
                                    continue;
                                }
                                let grad = sample_gradient_with(&cur_table, t, a, &config.clip)?;
                                update.add_scaled(&grad, w);
                                scale += w;
                            }
                        }
                    }
                }
                _ => {
                    // Per-group weights, averaged across the minibatch's groups.
                    let inv_b = 1.0 / mb.len() as f64;
                    for g in mb {
                        let mut kept: Vec<(&Trajectory, f64)> = Vec::with_capacity(g.trajectories.len());
                        for (t, &a) in g.trajectories.iter().zip(&g.advantages) {
                            if config.overlong_filtering && t.truncated {
                                continue;
                            }
                            kept.push((t, a));
                        }
                        if kept.is_empty() {
                            continue;
                        }
                        let lengths: Vec<usize> = kept.iter().map(|(t, _)| t.length()).collect();
                        let weights = scheme_weights(&config.scheme, &lengths)?;
                        for ((t, a), &w) in kept.iter().zip(weights.as_slice()) {
                            let grad = sample_gradient_with(&cur_table, t, *a, &config.clip)?;
                            update.add_scaled(&grad, w * inv_b);
                            scale += w * inv_b;
                        }
                    }
                }
            }
            params.nudge(update.as_slice(), config.learning_rate);
            update_dir_sum.add_scaled(&update, 1.0);
            scheme_scale_sum += scale;
        }

        let n_mb = config.minibatches_per_batch as f64;
        update_dir_sum.scale(1.0 / n_mb);
        trace.steps.push(StepRecord {
            step,
            mean_reward: reward_sum / n_traj as f64,
            mean_length: length_sum as f64 / n_traj as f64,
            entropy: if token_count > 0 {
                entropy_sum / token_count as f64
            } else {
                0.0
            },
            grad_norm: update_dir_sum.norm(),
            scheme_scale: scheme_scale_sum / n_mb,
            degenerate_groups_consumed: degenerate_consumed,
            resample_exhausted: exhausted,
        });

        if (step + 1) % config.eval_every == 0 {
            trace.evals.push(EvalRecord {
                step: step + 1,
                avg_at_k: evaluate_avg_at_k(
                    &params,
                    task,
                    config.eval_k,
                    config.eval_prompts,
                    &mut eval_rng,
                ),
            });
        }
    }
    Ok((params, trace))
}

fn sample_group<R: Rng>(
    table: &crate::policy::SoftmaxTable,
    task: &TaskSpec,
    config: &TrainConfig,
    rng: &mut R,
) -> SampledGroup {
    let mut attempts = 0usize;
    loop {
        let trajectories: Vec<Trajectory> = (0..config.rollouts_per_prompt)
            .map(|_| sample_trajectory_from(table, task, rng))
            .collect();
        let rewards: Vec<f64> = trajectories.iter().map(|t| t.reward).collect();
        let (advantages, degenerate) =
            compute_advantages(&rewards, config.advantage_mode).expect("group size checked");
        if !degenerate || !config.dynamic_sampling {
            return SampledGroup {
                trajectories,
                advantages,
                degenerate,
                exhausted: false,
            };
        }
        if attempts == DYNAMIC_SAMPLING_RETRY_CAP {
            return SampledGroup {
                trajectories,
                advantages,
                degenerate,
                exhausted: true,
            };
        }
        attempts += 1;
    }
}

/// Mean reward over `k` samples per prompt across `n_prompts` prompts,
/// temperature 1.
pub fn evaluate_avg_at_k<R: Rng>(
    params: &PolicyParams,
    task: &TaskSpec,
    k: usize,
    n_prompts: usize,
    rng: &mut R,
) -> f64 {
    assert!(k >= 1 && n_prompts >= 1);
    let table = params.softmax_table();
    let mut total = 0.0;
    for _ in 0..n_prompts {
        for _ in 0..k {
            total += sample_trajectory_from(&table, task, rng).reward;
        }
    }
    total / (k * n_prompts) as f64
}

/// Monte Carlo estimate of the mean per-token next-token entropy.
pub fn policy_entropy<R: Rng>(
    params: &PolicyParams,
    task: &TaskSpec,
    n: usize,
    rng: &mut R,
) -> f64 {
    assert!(n >= 1);
    let table = params.softmax_table();
    let mut sum = 0.0;
    let mut tokens = 0usize;
    for _ in 0..n {
        let t = sample_trajectory_from(&table, task, rng);
        let mut state = 0usize;
        for &tok in &t.tokens {
            sum += table.row_entropy(state);
            tokens += 1;
            state = tok;
        }
    }
    sum / tokens as f64
}

/// Pearson correlation between the scores and their indices `0, 1, 2, ...`.
pub fn monotonicity_score(scores: &[f64]) -> Result<f64, TrainError> {
    if scores.len() < 2 {
        return Err(TrainError::TooFewScores(scores.len()));
    }
    if scores.windows(2).all(|w| w[0] == w[1]) {
        return Err(TrainError::UndefinedCorrelation);
    }
    let n = scores.len() as f64;
    let mean_x = (scores.len() - 1) as f64 / 2.0;
    let mean_y = scores.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (i, &y) in scores.iter().enumerate() {
        let dx = i as f64 - mean_x;
        let dy = y - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}
