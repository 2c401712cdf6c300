//! Exact expectations by full enumeration of the trajectory space.
//!
//! The chain policy with a bounded response length has a finite trajectory
//! space: every response is either a content prefix followed by STOP or a
//! truncated all-content sequence of maximal length. Walking that space
//! yields the exact expected reward and the exact policy gradient, the
//! ground truth that Monte Carlo estimators are judged against.

use crate::gradient::{AdvantageMode, GradVector};
use crate::policy::{PolicyParams, SoftmaxTable, STOP_TOKEN};
use crate::task::TaskSpec;

/// Upper bound on `vocab_size ^ max_len` before enumeration is refused.
pub const ENUMERATION_GUARD: f64 = 1e7;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EnumerationError {
    #[error("enumeration too large: vocab^max_len = {leaves:.3e} exceeds the {guard:.0e} guard")]
    TooLarge { leaves: f64, guard: f64 },
}

/// `vocab_size ^ max_len`, the guard quantity.
pub fn enumeration_size(task: &TaskSpec) -> f64 {
    (task.vocab_size as f64).powi(task.max_len as i32)
}

fn check_guard(task: &TaskSpec) -> Result<(), EnumerationError> {
    let leaves = enumeration_size(task);
    if leaves > ENUMERATION_GUARD {
        return Err(EnumerationError::TooLarge {
            leaves,
            guard: ENUMERATION_GUARD,
        });
    }
    Ok(())
}

/// Visit every trajectory with its probability. The callback receives the
/// token sequence and `P(tau)`.
fn visit_all(table: &SoftmaxTable, task: &TaskSpec, f: &mut impl FnMut(&[usize], f64)) {
    let mut path = Vec::with_capacity(task.max_len);
    fn rec(
        table: &SoftmaxTable,
        task: &TaskSpec,
        state: usize,
        prob: f64,
        path: &mut Vec<usize>,
        f: &mut impl FnMut(&[usize], f64),
    ) {
        for tok in 0..task.vocab_size {
            let p = prob * table.prob(state, tok);
            path.push(tok);
            if tok == STOP_TOKEN || path.len() == task.max_len {
                f(path, p);
            } else {
                rec(table, task, tok, p, path, f);
            }
            path.pop();
        }
    }
    rec(table, task, 0, 1.0, &mut path, f);
}

/// Exact `E[r]` under the policy.
pub fn expected_reward(params: &PolicyParams, task: &TaskSpec) -> Result<f64, EnumerationError> {
    check_guard(task)?;
    let table = params.softmax_table();
    let mut j = 0.0;
    visit_all(&table, task, &mut |tokens, p| {
        j += p * task.reward(tokens);
    });
    Ok(j)
}

/// Exact population standard deviation of the binary reward.
pub fn reward_std(params: &PolicyParams, task: &TaskSpec) -> Result<f64, EnumerationError> {
    let j = expected_reward(params, task)?;
    Ok((j * (1.0 - j)).max(0.0).sqrt())
}

/// Exact policy gradient oracle.
///
/// Computes `sum_tau P(tau) * A(tau) * sum_t grad log pi(o_t | s_t)` with
/// the exact centered return `A = r - E[r]` (`MeanOnly`), additionally
/// divided by the exact reward standard deviation under `MeanStd`. The
/// centered form equals `grad E[r]` (possibly rescaled); a zero-information
/// task (reward constant over the whole space) gives the zero vector.
pub fn enumerate_exact_gradient(
    params: &PolicyParams,
    task: &TaskSpec,
    mode: AdvantageMode,
) -> Result<GradVector, EnumerationError> {
    check_guard(task)?;
    let j = expected_reward(params, task)?;
    let scale = match mode {
        AdvantageMode::MeanOnly => 1.0,
        AdvantageMode::MeanStd => {
            let std = (j * (1.0 - j)).max(0.0).sqrt();
            if std == 0.0 {
                return Ok(GradVector::zeros(params.dim()));
            }
            1.0 / std
        }
    };
    let table = params.softmax_table();
    let vocab = task.vocab_size;
    let mut g = vec![0.0; params.dim()];
    visit_all(&table, task, &mut |tokens, p| {
        let a = scale * (task.reward(tokens) - j);
        if a == 0.0 {
            return;
        }
        let w = p * a;
        let mut state = 0usize;
        for &tok in tokens {
            let base = state * vocab;
            let probs = table.prob_row(state);
            for (jj, &q) in probs.iter().enumerate() {
                g[base + jj] -= w * q;
            }
            g[base + tok] += w;
            state = tok;
        }
    });
    Ok(GradVector::from_values(g))
}

/// Length-conditional moments of the exact-baseline sample gradient.
#[derive(Debug, Clone)]
pub struct LengthStratum {
    pub length: usize,
    /// `P(L = length)`.
    pub prob: f64,
    /// `E[g | L = length]` with `g = (r - E[r]) * sum_t grad log pi`.
    pub mean_grad: GradVector,
    /// `E[r | L = length]`.
    pub mean_reward: f64,
    /// `E[||g||^2 | L = length]`.
    pub grad_second_moment: f64,
}

/// Exact per-length decomposition of the sample-gradient distribution.
///
/// Used to predict how length-weighted estimators behave: the conditional
/// means generally differ across lengths, which is exactly what couples
/// length-dependent weights to the gradient.
pub fn length_profile(
    params: &PolicyParams,
    task: &TaskSpec,
) -> Result<Vec<LengthStratum>, EnumerationError> {
    check_guard(task)?;
    let j = expected_reward(params, task)?;
    let table = params.softmax_table();
    let vocab = task.vocab_size;
    let dim = params.dim();
    let mut prob = vec![0.0; task.max_len + 1];
    let mut mean_r = vec![0.0; task.max_len + 1];
    let mut sums: Vec<Vec<f64>> = vec![vec![0.0; dim]; task.max_len + 1];
    let mut second = vec![0.0; task.max_len + 1];
    let mut scratch = vec![0.0; dim];
    visit_all(&table, task, &mut |tokens, p| {
        let len = tokens.len();
        prob[len] += p;
        mean_r[len] += p * task.reward(tokens);
        let a = task.reward(tokens) - j;
        for v in scratch.iter_mut() {
            *v = 0.0;
        }
        let mut state = 0usize;
        for &tok in tokens {
            let base = state * vocab;
            for (jj, &q) in table.prob_row(state).iter().enumerate() {
                scratch[base + jj] -= a * q;
            }
            scratch[base + tok] += a;
            state = tok;
        }
        let acc = &mut sums[len];
        let mut sq = 0.0;
        for (accv, &s) in acc.iter_mut().zip(scratch.iter()) {
            *accv += p * s;
            sq += s * s;
        }
        second[len] += p * sq;
    });
    let mut out = Vec::new();
    for len in 1..=task.max_len {
        if prob[len] <= 0.0 {
            continue;
        }
        let mut mean = sums[len].clone();
        for v in mean.iter_mut() {
            *v /= prob[len];
        }
        out.push(LengthStratum {
            length: len,
            prob: prob[len],
            mean_grad: GradVector::from_values(mean),
            mean_reward: mean_r[len] / prob[len],
            grad_second_moment: second[len] / prob[len],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::RewardRule;
    use crate::trajectory::sample_trajectory_from;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn task(vocab: usize, max_len: usize, target: i64) -> TaskSpec {
        TaskSpec {
            vocab_size: vocab,
            max_len,
            target,
            reward_rule: RewardRule::SumEqualsTarget,
        }
    }

    #[test]
    fn guard_rejects_large_spaces() {
        let t = task(10, 12, 5);
        assert!(matches!(
            enumerate_exact_gradient(&PolicyParams::zeros(10, 10), &t, AdvantageMode::MeanOnly),
            Err(EnumerationError::TooLarge { .. })
        ));
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = PolicyParams::random(3, 3, 1.0, &mut rng);
        let t = task(3, 5, 2);
        let table = p.softmax_table();
        let mut mass = 0.0;
        visit_all(&table, &t, &mut |_, pr| mass += pr);
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unreachable_target_gives_zero_gradient() {
        let p = PolicyParams::zeros(3, 3);
        let t = task(3, 4, 99);
        let g = enumerate_exact_gradient(&p, &t, AdvantageMode::MeanOnly).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn monte_carlo_expected_reward_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = PolicyParams::random(3, 3, 0.6, &mut rng);
        let t = task(3, 5, 3);
        let j = expected_reward(&p, &t).unwrap();
        let table = p.softmax_table();
        let n = 200_000usize;
        let mut hits = 0.0;
        for _ in 0..n {
            hits += sample_trajectory_from(&table, &t, &mut rng).reward;
        }
        let obs = hits / n as f64;
        let se = (j * (1.0 - j) / n as f64).sqrt();
        assert!((obs - j).abs() < 4.0 * se, "obs {obs} vs exact {j}");
    }

    #[test]
    fn gradient_matches_finite_differences_of_expected_reward() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = PolicyParams::random(2, 2, 0.8, &mut rng);
        let t = task(2, 2, 0);
        let g = enumerate_exact_gradient(&p, &t, AdvantageMode::MeanOnly).unwrap();
        let step = 1e-5;
        for s in 0..2 {
            for v in 0..2 {
                let mut hi = p.clone();
                hi.bump_logit(s, v, step);
                let mut lo = p.clone();
                lo.bump_logit(s, v, -step);
                let fd = (expected_reward(&hi, &t).unwrap() - expected_reward(&lo, &t).unwrap())
                    / (2.0 * step);
                let idx = s * 2 + v;
                assert!(
                    (fd - g.as_slice()[idx]).abs() < 1e-6,
                    "component ({s},{v}): fd {fd} vs exact {}",
                    g.as_slice()[idx]
                );
            }
        }
    }

    #[test]
    fn mean_std_mode_rescales_by_reward_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let p = PolicyParams::random(3, 3, 0.5, &mut rng);
        let t = task(3, 4, 2);
        let plain = enumerate_exact_gradient(&p, &t, AdvantageMode::MeanOnly).unwrap();
        let scaled = enumerate_exact_gradient(&p, &t, AdvantageMode::MeanStd).unwrap();
        let std = reward_std(&p, &t).unwrap();
        assert!(std > 0.0);
        for (a, b) in plain.as_slice().iter().zip(scaled.as_slice()) {
            assert!((a / std - b).abs() < 1e-12);
        }
    }

    #[test]
    fn length_profile_mixes_back_to_the_exact_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let p = PolicyParams::random(3, 3, 0.7, &mut rng);
        let t = task(3, 5, 3);
        let strata = length_profile(&p, &t).unwrap();
        let total_p: f64 = strata.iter().map(|s| s.prob).sum();
        assert!((total_p - 1.0).abs() < 1e-12);
        let mut mixed = GradVector::zeros(p.dim());
        for s in &strata {
            mixed.add_scaled(&s.mean_grad, s.prob);
        }
        let exact = enumerate_exact_gradient(&p, &t, AdvantageMode::MeanOnly).unwrap();
        assert!(mixed.squared_distance(&exact).sqrt() < 1e-12);
    }
}
