//! Autoregressive sampling of responses from the chain policy.

use rand::Rng;

use crate::policy::{PolicyParams, SoftmaxTable, STOP_TOKEN};
use crate::task::TaskSpec;

/// One sampled response with its per-token log-probabilities under the
/// sampling-time parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub tokens: Vec<usize>,
    pub logprobs: Vec<f64>,
    pub reward: f64,
    /// True iff `max_len` was reached without emitting STOP.
    pub truncated: bool,
}

impl Trajectory {
    /// Number of generated tokens, counting STOP when emitted.
    pub fn length(&self) -> usize {
        self.tokens.len()
    }
}

/// Draw one trajectory from the policy.
///
/// Generation walks the chain from the start state, stops on STOP or when
/// `max_len` tokens have been emitted, and scores the result with the task's
/// reward rule.
pub fn sample_trajectory<R: Rng>(params: &PolicyParams, task: &TaskSpec, rng: &mut R) -> Trajectory {
    sample_trajectory_from(&params.softmax_table(), task, rng)
}

/// Same as [`sample_trajectory`] but reusing a precomputed softmax table.
/// Callers drawing many trajectories from fixed parameters should use this.
pub fn sample_trajectory_from<R: Rng>(
    table: &SoftmaxTable,
    task: &TaskSpec,
    rng: &mut R,
) -> Trajectory {
    assert_eq!(
        table.vocab_size(),
        task.vocab_size,
        "policy vocabulary does not match the task"
    );
    assert!(
        table.num_states() >= task.vocab_size,
        "chain policy needs one state per token"
    );
    let mut tokens = Vec::with_capacity(task.max_len.min(16));
    let mut logprobs = Vec::with_capacity(task.max_len.min(16));
    let mut state = 0usize;
    let mut truncated = false;
    loop {
        let (tok, lp) = table.sample_token(state, rng);
        tokens.push(tok);
        logprobs.push(lp);
        if tok == STOP_TOKEN {
            break;
        }
        if tokens.len() == task.max_len {
            truncated = true;
            break;
        }
        state = tok;
    }
    let reward = task.reward(&tokens);
    Trajectory {
        tokens,
        logprobs,
        reward,
        truncated,
    }
}

/// Rejection-sample a trajectory with a prescribed length.
///
/// Used by the fixed-length measurement mode, where moment comparisons are
/// made conditional on a given length multiset. Returns `None` if the
/// attempt budget is exhausted, which signals a vanishing length probability
/// under the current parameters.
pub fn sample_trajectory_with_length<R: Rng>(
    table: &SoftmaxTable,
    task: &TaskSpec,
    length: usize,
    max_attempts: usize,
    rng: &mut R,
) -> Option<Trajectory> {
    assert!(length >= 1 && length <= task.max_len, "length out of range");
    for _ in 0..max_attempts {
        let t = sample_trajectory_from(table, task, rng);
        if t.length() == length {
            return Some(t);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::RewardRule;
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
    fn forced_stop_gives_length_one() {
        let mut p = PolicyParams::zeros(3, 3);
        for s in 0..3 {
            p.set_logit(s, STOP_TOKEN, 1e6);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = sample_trajectory(&p, &task(3, 4, 0), &mut rng);
        assert_eq!(t.tokens, vec![STOP_TOKEN]);
        assert_eq!(t.length(), 1);
        assert!(!t.truncated);
        assert_eq!(t.reward, 1.0);
    }

    #[test]
    fn length_distribution_is_geometric() {
        // Uniform policy over 3 tokens stops w.p. 1/3 each step, capped at 4.
        let p = PolicyParams::zeros(3, 3);
        let tk = task(3, 4, -1);
        let table = p.softmax_table();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 200_000usize;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            counts[sample_trajectory_from(&table, &tk, &mut rng).length()] += 1;
        }
        let expected = [
            1.0 / 3.0,
            (2.0 / 3.0) * (1.0 / 3.0),
            (2.0f64 / 3.0).powi(2) * (1.0 / 3.0),
            (2.0f64 / 3.0).powi(3),
        ];
        for (k, &e) in expected.iter().enumerate() {
            let obs = counts[k + 1] as f64 / n as f64;
            let se = (e * (1.0 - e) / n as f64).sqrt();
            assert!(
                (obs - e).abs() < 5.0 * se,
                "P(L={}): observed {obs:.5}, expected {e:.5}",
                k + 1
            );
        }
    }

    #[test]
    fn stored_logprobs_match_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = PolicyParams::random(5, 5, 1.0, &mut rng);
        let table = p.softmax_table();
        let tk = task(5, 6, 9);
        for _ in 0..50 {
            let t = sample_trajectory_from(&table, &tk, &mut rng);
            let mut state = 0usize;
            let mut total = 0.0;
            for (&tok, &lp) in t.tokens.iter().zip(&t.logprobs) {
                let expect = table.logprob(state, tok);
                assert!((lp - expect).abs() < 1e-12);
                assert!(lp <= 0.0);
                total += lp;
                state = tok;
            }
            let stored: f64 = t.logprobs.iter().sum();
            assert!((total - stored).abs() < 1e-12);
        }
    }

    #[test]
    fn truncated_iff_max_len_without_stop() {
        let mut p = PolicyParams::zeros(3, 3);
        for s in 0..3 {
            p.set_logit(s, STOP_TOKEN, -1e6);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = sample_trajectory(&p, &task(3, 4, 0), &mut rng);
        assert!(t.truncated);
        assert_eq!(t.length(), 4);
        assert!(t.tokens.iter().all(|&x| x != STOP_TOKEN));
    }

    #[test]
    fn fixed_length_rejection_hits_target() {
        let p = PolicyParams::zeros(3, 3);
        let table = p.softmax_table();
        let tk = task(3, 8, -1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for len in [1usize, 3, 8] {
            let t = sample_trajectory_with_length(&table, &tk, len, 100_000, &mut rng)
                .expect("rejection budget");
            assert_eq!(t.length(), len);
        }
    }
}
