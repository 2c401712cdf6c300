//! Per-sample policy gradients and group advantage estimation.
//!
//! `sample_gradient` produces the unnormalized sample-level gradient: the
//! advantage-weighted sum of score vectors over a response's tokens, before
//! any length normalization. Every aggregation scheme consumes these raw
//! vectors.

use serde::{Deserialize, Serialize};

use crate::policy::PolicyParams;
use crate::trajectory::Trajectory;

/// Flat gradient over the policy's logit table, indexed like the table.
#[derive(Debug, Clone, PartialEq)]
pub struct GradVector {
    values: Vec<f64>,
}

impl GradVector {
    pub fn zeros(dim: usize) -> Self {
        GradVector {
            values: vec![0.0; dim],
        }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        GradVector { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, other: &GradVector, c: f64) {
        assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn squared_distance(&self, other: &GradVector) -> f64 {
        assert_eq!(self.values.len(), other.values.len());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn dot(&self, other: &GradVector) -> f64 {
        assert_eq!(self.values.len(), other.values.len());
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Group-level advantage estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdvantageMode {
    /// `(r_i - mean) / std`, population standard deviation.
    MeanStd,
    /// `r_i - mean`.
    MeanOnly,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GradError {
    #[error("advantage group needs at least 2 rewards, got {0}")]
    GroupTooSmall(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Center (and optionally standardize) a group of rewards.
///
/// Returns the advantages plus a degeneracy flag. A degenerate group (all
/// rewards equal) yields all-zero advantages rather than a division by a
/// vanishing standard deviation; callers that want dynamic sampling resample
/// on that flag.
pub fn compute_advantages(rewards: &[f64], mode: AdvantageMode) -> Result<(Vec<f64>, bool), GradError> {
    if rewards.len() < 2 {
        return Err(GradError::GroupTooSmall(rewards.len()));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let degenerate = rewards.windows(2).all(|w| w[0] == w[1]);
    match mode {
        AdvantageMode::MeanOnly => {
            if degenerate {
                return Ok((vec![0.0; rewards.len()], true));
            }
            Ok((rewards.iter().map(|r| r - mean).collect(), false))
        }
        AdvantageMode::MeanStd => {
            let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
            let std = var.sqrt();
            if degenerate || std == 0.0 {
                return Ok((vec![0.0; rewards.len()], true));
            }
            Ok((rewards.iter().map(|r| (r - mean) / std).collect(), false))
        }
    }
}

/// PPO-style clipping window. Old log-probabilities come from the
/// trajectory itself, which stores them as sampled under the old snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipConfig {
    pub enabled: bool,
    pub eps_low: f64,
    pub eps_high: f64,
}

impl ClipConfig {
    pub const OFF: ClipConfig = ClipConfig {
        enabled: false,
        eps_low: 0.0,
        eps_high: 0.0,
    };

    /// Asymmetric window used for training runs: lower 0.2, upper 0.3.
    pub fn clip_higher() -> Self {
        ClipConfig {
            enabled: true,
            eps_low: 0.2,
            eps_high: 0.3,
        }
    }

    pub fn validate(&self) -> Result<(), GradError> {
        if self.enabled && !(0.0 < self.eps_low && self.eps_low <= self.eps_high && self.eps_high < 1.0) {
            return Err(GradError::DimensionMismatch(format!(
                "clip ratios must satisfy 0 < eps_low <= eps_high < 1, got ({}, {})",
                self.eps_low, self.eps_high
            )));
        }
        Ok(())
    }
}

/// Unnormalized sample-level gradient of one trajectory.
///
/// With clipping disabled this is the exact analytic
/// `A * sum_t grad log pi(o_t | s_t)` under `params`. With clipping enabled,
/// each token contributes `A * r_t * grad log pi` while the unclipped branch
/// of `min(r A, clip(r) A)` is active and exactly zero otherwise; the ratio
/// `r_t` compares `params` against the trajectory's stored log-probabilities.
pub fn sample_gradient(
    params: &PolicyParams,
    traj: &Trajectory,
    advantage: f64,
    clip: &ClipConfig,
) -> Result<GradVector, GradError> {
    sample_gradient_with(&params.softmax_table(), traj, advantage, clip)
}

/// [`sample_gradient`] against a precomputed softmax table; callers scoring
/// many trajectories under the same parameters should use this.
pub fn sample_gradient_with(
    table: &crate::policy::SoftmaxTable,
    traj: &Trajectory,
    advantage: f64,
    clip: &ClipConfig,
) -> Result<GradVector, GradError> {
    let vocab = table.vocab_size();
    if traj.tokens.iter().any(|&t| t >= vocab) {
        return Err(GradError::DimensionMismatch(format!(
            "trajectory token out of range for vocab {vocab}"
        )));
    }
    if traj.tokens.len() != traj.logprobs.len() {
        return Err(GradError::DimensionMismatch(
            "token / logprob count mismatch".into(),
        ));
    }
    if table.num_states() < vocab {
        return Err(GradError::DimensionMismatch(
            "chain policy needs one state per token".into(),
        ));
    }
    assert!(advantage.is_finite(), "advantage must be finite");
    let mut g = GradVector::zeros(table.num_states() * vocab);
    let mut state = 0usize;
    for (&tok, &old_lp) in traj.tokens.iter().zip(&traj.logprobs) {
        let mut token_weight = 1.0;
        if clip.enabled {
            let ratio = (table.logprob(state, tok) - old_lp).exp();
            // min(r*A, clip(r)*A): for A > 0 the constant branch wins only
            // above the upper edge, for A < 0 only below the lower edge.
            let active = if advantage >= 0.0 {
                ratio <= 1.0 + clip.eps_high
            } else {
                ratio >= 1.0 - clip.eps_low
            };
            if !active {
                state = tok;
                continue;
            }
            token_weight = ratio;
        }
        let base = state * vocab;
        let probs = table.prob_row(state);
        for (j, &p) in probs.iter().enumerate() {
            g.values[base + j] -= token_weight * p;
        }
        g.values[base + tok] += token_weight;
        state = tok;
    }
    g.scale(advantage);
    Ok(g)
}

/// `G` responses to one prompt with their group advantages.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    pub prompt_id: u64,
    pub trajectories: Vec<Trajectory>,
    pub advantages: Vec<f64>,
    /// All rewards equal; advantages are zero.
    pub degenerate: bool,
}

impl RolloutGroup {
    pub fn from_trajectories(
        prompt_id: u64,
        trajectories: Vec<Trajectory>,
        mode: AdvantageMode,
    ) -> Result<Self, GradError> {
        let rewards: Vec<f64> = trajectories.iter().map(|t| t.reward).collect();
        let (advantages, degenerate) = compute_advantages(&rewards, mode)?;
        Ok(RolloutGroup {
            prompt_id,
            trajectories,
            advantages,
            degenerate,
        })
    }

    pub fn group_size(&self) -> usize {
        self.trajectories.len()
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.trajectories.iter().map(|t| t.length()).collect()
    }
}

/// Per-trajectory gradients for a whole group, order preserved.
pub fn group_gradients(
    params: &PolicyParams,
    group: &RolloutGroup,
    clip: &ClipConfig,
) -> Result<Vec<GradVector>, GradError> {
    group
        .trajectories
        .iter()
        .zip(&group.advantages)
        .map(|(t, &a)| sample_gradient(params, t, a, clip))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{RewardRule, TaskSpec};
    use crate::trajectory::sample_trajectory;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_task(vocab: usize, max_len: usize) -> TaskSpec {
        TaskSpec {
            vocab_size: vocab,
            max_len,
            target: 3,
            reward_rule: RewardRule::SumEqualsTarget,
        }
    }

    #[test]
    fn advantages_mean_std() {
        let (a, d) = compute_advantages(&[1.0, 0.0, 0.0, 1.0], AdvantageMode::MeanStd).unwrap();
        assert!(!d);
        for (got, want) in a.iter().zip([1.0, -1.0, -1.0, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn advantages_degenerate_group() {
        for mode in [AdvantageMode::MeanStd, AdvantageMode::MeanOnly] {
            let (a, d) = compute_advantages(&[1.0, 1.0, 1.0], mode).unwrap();
            assert!(d);
            assert!(a.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn advantages_mean_only_centering() {
        let (a, d) = compute_advantages(&[1.0, 0.0], AdvantageMode::MeanOnly).unwrap();
        assert!(!d);
        assert_eq!(a, vec![0.5, -0.5]);
    }

    #[test]
    fn advantages_reject_tiny_groups() {
        assert_eq!(
            compute_advantages(&[1.0], AdvantageMode::MeanOnly),
            Err(GradError::GroupTooSmall(1))
        );
    }

    #[test]
    fn group_invariants_hold_for_random_groups() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = PolicyParams::random(4, 4, 0.7, &mut rng);
        let task = toy_task(4, 5);
        for mode in [AdvantageMode::MeanStd, AdvantageMode::MeanOnly] {
            for id in 0..40 {
                let trajs: Vec<_> = (0..6).map(|_| sample_trajectory(&params, &task, &mut rng)).collect();
                let g = RolloutGroup::from_trajectories(id, trajs, mode).unwrap();
                let n = g.group_size() as f64;
                let mean: f64 = g.advantages.iter().sum::<f64>() / n;
                assert!(mean.abs() < 1e-10);
                if !g.degenerate && mode == AdvantageMode::MeanStd {
                    let std = (g.advantages.iter().map(|a| a * a).sum::<f64>() / n).sqrt();
                    assert!((std - 1.0).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn zero_advantage_gives_zero_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = PolicyParams::random(3, 3, 1.0, &mut rng);
        let task = toy_task(3, 4);
        let t = sample_trajectory(&params, &task, &mut rng);
        let g = sample_gradient(&params, &t, 0.0, &ClipConfig::OFF).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn on_policy_clip_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = PolicyParams::random(4, 4, 1.2, &mut rng);
        let task = toy_task(4, 6);
        for _ in 0..30 {
            let t = sample_trajectory(&params, &task, &mut rng);
            let adv = rng.gen_range(-2.0..2.0);
            let plain = sample_gradient(&params, &t, adv, &ClipConfig::OFF).unwrap();
            let clipped = sample_gradient(&params, &t, adv, &ClipConfig::clip_higher()).unwrap();
            assert_eq!(plain, clipped);
        }
    }

    #[test]
    fn single_token_gradient_is_one_hot_minus_probs() {
        // 1-state slice of the chain: token 0 from the start row.
        let params = PolicyParams::from_table(2, 2, vec![0.3, -0.8, 0.0, 0.0]);
        let table = params.softmax_table();
        let t = Trajectory {
            tokens: vec![0],
            logprobs: vec![table.logprob(0, 0)],
            reward: 1.0,
            truncated: false,
        };
        let a = 1.7;
        let g = sample_gradient(&params, &t, a, &ClipConfig::OFF).unwrap();
        let p0 = table.prob(0, 0);
        assert!((g.as_slice()[0] - a * (1.0 - p0)).abs() < 1e-15);
        assert!((g.as_slice()[1] + a * (1.0 - p0)).abs() < 1e-15);
        assert_eq!(&g.as_slice()[2..], &[0.0, 0.0]);
    }

    #[test]
    fn linearity_in_the_advantage() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = PolicyParams::random(4, 4, 1.0, &mut rng);
        let task = toy_task(4, 5);
        for _ in 0..20 {
            let t = sample_trajectory(&params, &task, &mut rng);
            let a = rng.gen_range(-1.5..1.5);
            for c in [2.0, 0.5, -4.0] {
                // powers of two keep the scaling exact in floating point
                let g1 = sample_gradient(&params, &t, c * a, &ClipConfig::OFF).unwrap();
                let mut g2 = sample_gradient(&params, &t, a, &ClipConfig::OFF).unwrap();
                g2.scale(c);
                assert_eq!(g1, g2);
            }
        }
    }

    #[test]
    fn clipped_branch_zeroes_token_gradients() {
        let params = PolicyParams::from_table(2, 2, vec![2.0, -2.0, 0.0, 0.0]);
        let table = params.softmax_table();
        // Pretend the token was much less likely under the old policy, so the
        // ratio blows past 1 + eps_high and the positive-advantage branch clips.
        let t = Trajectory {
            tokens: vec![0],
            logprobs: vec![table.logprob(0, 0) - 1.0],
            reward: 1.0,
            truncated: false,
        };
        let clip = ClipConfig::clip_higher();
        let g = sample_gradient(&params, &t, 1.0, &clip).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
        // With a negative advantage the min picks the unclipped branch instead.
        let g = sample_gradient(&params, &t, -1.0, &clip).unwrap();
        assert!(g.as_slice().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn group_gradients_match_individual_calls() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let params = PolicyParams::random(4, 4, 0.8, &mut rng);
        let task = toy_task(4, 5);
        let trajs: Vec<_> = (0..2).map(|_| sample_trajectory(&params, &task, &mut rng)).collect();
        let group = RolloutGroup::from_trajectories(0, trajs, AdvantageMode::MeanOnly).unwrap();
        let batch = group_gradients(&params, &group, &ClipConfig::OFF).unwrap();
        for (i, g) in batch.iter().enumerate() {
            let single =
                sample_gradient(&params, &group.trajectories[i], group.advantages[i], &ClipConfig::OFF)
                    .unwrap();
            assert_eq!(*g, single);
        }
    }

    #[test]
    fn degenerate_group_gradients_are_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let params = PolicyParams::random(3, 3, 0.5, &mut rng);
        let task = toy_task(3, 4);
        let mut trajs = Vec::new();
        while trajs.len() < 4 {
            let t = sample_trajectory(&params, &task, &mut rng);
            if t.reward == 0.0 {
                trajs.push(t);
            }
        }
        let group = RolloutGroup::from_trajectories(0, trajs, AdvantageMode::MeanStd).unwrap();
        assert!(group.degenerate);
        for g in group_gradients(&params, &group, &ClipConfig::OFF).unwrap() {
            assert!(g.as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn permuting_a_group_permutes_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let params = PolicyParams::random(4, 4, 0.8, &mut rng);
        let task = toy_task(4, 5);
        let trajs: Vec<_> = (0..5).map(|_| sample_trajectory(&params, &task, &mut rng)).collect();
        let fwd = RolloutGroup::from_trajectories(0, trajs.clone(), AdvantageMode::MeanOnly).unwrap();
        let rev = RolloutGroup::from_trajectories(
            0,
            trajs.into_iter().rev().collect(),
            AdvantageMode::MeanOnly,
        )
        .unwrap();
        let a = group_gradients(&params, &fwd, &ClipConfig::OFF).unwrap();
        let mut b = group_gradients(&params, &rev, &ClipConfig::OFF).unwrap();
        b.reverse();
        assert_eq!(a, b);
    }

    #[test]
    fn clip_config_validation() {
        assert!(ClipConfig::clip_higher().validate().is_ok());
        assert!(ClipConfig::OFF.validate().is_ok());
        let bad = ClipConfig {
            enabled: true,
            eps_low: 0.5,
            eps_high: 0.2,
        };
        assert!(bad.validate().is_err());
    }
}
