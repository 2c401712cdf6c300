//! Verifiable-reward task definitions.
//!
//! Rewards are binary and rule-checkable from the raw token sequence alone.

use serde::{Deserialize, Serialize};

use crate::policy::STOP_TOKEN;

/// How a finished token sequence is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardRule {
    /// Reward 1 iff the content-token values sum to `target`.
    ///
    /// Content token `v` has value `v`; STOP contributes 0. This is the
    /// countdown-style default task.
    SumEqualsTarget,
    /// Reward 1 iff the response length has the same parity as `target`.
    ParityOfLength,
}

/// A toy task: vocabulary size, response-length cap, and success condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    /// Tokens are `0..vocab_size`, with token 0 the STOP token.
    pub vocab_size: usize,
    /// Hard cap on response length; hitting it truncates the response.
    pub max_len: usize,
    /// Success condition parameter, interpreted by `reward_rule`.
    pub target: i64,
    pub reward_rule: RewardRule,
}

impl TaskSpec {
    /// Default desk-scale task: digits 1..=9 plus STOP, sum to 15.
    pub fn default_sum_task() -> Self {
        TaskSpec {
            vocab_size: 10,
            max_len: 12,
            target: 15,
            reward_rule: RewardRule::SumEqualsTarget,
        }
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        if self.vocab_size < 2 {
            return Err(TaskError::VocabTooSmall(self.vocab_size));
        }
        if self.max_len < 1 {
            return Err(TaskError::MaxLenZero);
        }
        Ok(())
    }

    /// Binary reward for a finished token sequence.
    pub fn reward(&self, tokens: &[usize]) -> f64 {
        assert!(!tokens.is_empty(), "reward of an empty sequence is undefined");
        let hit = match self.reward_rule {
            RewardRule::SumEqualsTarget => {
                let sum: i64 = tokens
                    .iter()
                    .filter(|&&t| t != STOP_TOKEN)
                    .map(|&t| t as i64)
                    .sum();
                sum == self.target
            }
            RewardRule::ParityOfLength => (tokens.len() as i64 % 2) == self.target.rem_euclid(2),
        };
        if hit {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TaskError {
    #[error("vocab_size must be at least 2 (STOP plus one content token), got {0}")]
    VocabTooSmall(usize),
    #[error("max_len must be at least 1")]
    MaxLenZero,
}

/// Free-function form of [`TaskSpec::reward`].
pub fn reward(task: &TaskSpec, tokens: &[usize]) -> f64 {
    task.reward(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sum_task(target: i64) -> TaskSpec {
        TaskSpec {
            vocab_size: 10,
            max_len: 8,
            target,
            reward_rule: RewardRule::SumEqualsTarget,
        }
    }

    #[test]
    fn sum_rule_hits_and_misses() {
        let t = sum_task(5);
        assert_eq!(t.reward(&[2, 3, STOP_TOKEN]), 1.0);
        assert_eq!(t.reward(&[2, 2, STOP_TOKEN]), 0.0);
        assert_eq!(t.reward(&[5, STOP_TOKEN]), 1.0);
    }

    #[test]
    fn stop_only_sequence_sums_to_zero() {
        let t = sum_task(0);
        assert_eq!(t.reward(&[STOP_TOKEN]), 1.0);
    }

    #[test]
    fn parity_rule() {
        let t = TaskSpec {
            vocab_size: 4,
            max_len: 8,
            target: 0, // even lengths rewarded
            reward_rule: RewardRule::ParityOfLength,
        };
        assert_eq!(t.reward(&[1, 2, 3]), 0.0);
        assert_eq!(t.reward(&[1, STOP_TOKEN]), 1.0);
    }

    #[test]
    fn reward_is_deterministic() {
        let t = sum_task(7);
        let toks = [3, 4, STOP_TOKEN];
        assert_eq!(t.reward(&toks), t.reward(&toks));
    }

    #[test]
    fn validation_catches_bad_shapes() {
        let mut t = sum_task(1);
        t.vocab_size = 1;
        assert_eq!(t.validate(), Err(TaskError::VocabTooSmall(1)));
        let mut t = sum_task(1);
        t.max_len = 0;
        assert_eq!(t.validate(), Err(TaskError::MaxLenZero));
    }
}
