//! Heavier Monte Carlo cross-checks between the samplers and the
//! enumeration oracle.

use agglab_core::{
    enumerate_exact_gradient, expected_reward, sample_gradient_with, stats::stats_of_draws,
    AdvantageMode, ClipConfig, PolicyParams, RewardRule, TaskSpec,
};
use agglab_core::trajectory::sample_trajectory_from;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn sample_gradient_with_exact_baseline_is_unbiased() {
    let mut rng = ChaCha8Rng::seed_from_u64(771);
    let params = PolicyParams::random(3, 3, 0.5, &mut rng);
    let task = TaskSpec {
        vocab_size: 3,
        max_len: 4,
        target: 3,
        reward_rule: RewardRule::SumEqualsTarget,
    };
    let exact = enumerate_exact_gradient(&params, &task, AdvantageMode::MeanOnly).unwrap();
    let j = expected_reward(&params, &task).unwrap();
    let table = params.softmax_table();
    let n = 150_000usize;
    let draws: Vec<_> = (0..n)
        .map(|_| {
            let t = sample_trajectory_from(&table, &task, &mut rng);
            sample_gradient_with(&table, &t, t.reward - j, &ClipConfig::OFF).unwrap()
        })
        .collect();
    let stats = stats_of_draws(&draws);
    for c in 0..exact.dim() {
        let se = stats.mean_standard_error(c);
        let dev = (stats.mean.as_slice()[c] - exact.as_slice()[c]).abs();
        assert!(
            dev <= 4.0 * se.max(1e-12),
            "component {c}: deviation {dev:.3e} vs 4se {:.3e}",
            4.0 * se
        );
    }
}

#[test]
fn monte_carlo_group_of_sample_gradients_matches_two_oracles() {
    // Enumeration agrees with finite differences of the enumerated E[r],
    // and a plain Monte Carlo mean agrees with both within noise.
    let mut rng = ChaCha8Rng::seed_from_u64(772);
    let params = PolicyParams::random(2, 2, 0.7, &mut rng);
    let task = TaskSpec {
        vocab_size: 2,
        max_len: 2,
        target: 0,
        reward_rule: RewardRule::SumEqualsTarget,
    };
    let exact = enumerate_exact_gradient(&params, &task, AdvantageMode::MeanOnly).unwrap();
    let fd = agglab_core::verify::finite_difference_gradient(
        &mut |p: &PolicyParams| expected_reward(p, &task).unwrap(),
        &params,
        1e-5,
    );
    for (a, b) in exact.as_slice().iter().zip(fd.as_slice()) {
        assert!((a - b).abs() < 1e-6);
    }

    let j = expected_reward(&params, &task).unwrap();
    let table = params.softmax_table();
    let n = 1_000_000usize;
    let draws: Vec<_> = (0..n)
        .map(|_| {
            let t = sample_trajectory_from(&table, &task, &mut rng);
            sample_gradient_with(&table, &t, t.reward - j, &ClipConfig::OFF).unwrap()
        })
        .collect();
    let stats = stats_of_draws(&draws);
    for c in 0..exact.dim() {
        let se = stats.mean_standard_error(c);
        let dev = (stats.mean.as_slice()[c] - exact.as_slice()[c]).abs();
        assert!(dev <= 3.0 * se.max(1e-12), "component {c}");
    }
}
