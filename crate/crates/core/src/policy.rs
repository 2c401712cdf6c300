//! Tabular softmax policy over a small token vocabulary.
//!
//! The policy is a first-order chain: the state is the last emitted token,
//! with state 0 reserved for the start of a response. Token 0 is the STOP
//! token; emitting it ends the response, so state 0 is never re-entered and
//! can double as the start state. Row `s` of the logit table parameterizes
//! the next-token distribution in state `s`.

/// Index of the STOP token (and of the start state).
pub const STOP_TOKEN: usize = 0;

/// Logit table of shape `num_states x vocab_size`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    num_states: usize,
    vocab_size: usize,
    table: Vec<f64>,
}

impl PolicyParams {
    /// Uniform policy: all logits zero.
    pub fn zeros(num_states: usize, vocab_size: usize) -> Self {
        assert!(num_states >= 1, "need at least one state");
        assert!(vocab_size >= 2, "need STOP plus at least one content token");
        Self {
            num_states,
            vocab_size,
            table: vec![0.0; num_states * vocab_size],
        }
    }

    /// Build from an explicit row-major table.
    pub fn from_table(num_states: usize, vocab_size: usize, table: Vec<f64>) -> Self {
        assert!(num_states >= 1, "need at least one state");
        assert!(vocab_size >= 2, "need STOP plus at least one content token");
        assert_eq!(table.len(), num_states * vocab_size, "table shape mismatch");
        assert!(table.iter().all(|v| v.is_finite()), "logits must be finite");
        Self {
            num_states,
            vocab_size,
            table,
        }
    }

    /// Gaussian-perturbed policy, logits i.i.d. `N(0, sigma^2)`.
    pub fn random<R: rand::Rng>(num_states: usize, vocab_size: usize, sigma: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(num_states, vocab_size);
        for v in p.table.iter_mut() {
            // Box-Muller keeps us off rand_distr for one sampler.
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen();
            *v = sigma * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
        p
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Number of parameters, which is also the gradient dimension.
    pub fn dim(&self) -> usize {
        self.table.len()
    }

    pub fn logit(&self, state: usize, token: usize) -> f64 {
        self.table[state * self.vocab_size + token]
    }

    pub fn set_logit(&mut self, state: usize, token: usize, value: f64) {
        assert!(value.is_finite());
        self.table[state * self.vocab_size + token] = value;
    }

    pub fn bump_logit(&mut self, state: usize, token: usize, delta: f64) {
        let v = &mut self.table[state * self.vocab_size + token];
        *v += delta;
        assert!(v.is_finite());
    }

    pub fn row(&self, state: usize) -> &[f64] {
        let o = state * self.vocab_size;
        &self.table[o..o + self.vocab_size]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.table
    }

    /// In-place `table += scale * direction`, used for gradient-ascent steps.
    pub fn nudge(&mut self, direction: &[f64], scale: f64) {
        assert_eq!(direction.len(), self.table.len(), "direction dimension mismatch");
        for (t, d) in self.table.iter_mut().zip(direction) {
            *t += scale * d;
        }
    }

    /// Softmax probability of `token` in `state`.
    pub fn prob(&self, state: usize, token: usize) -> f64 {
        self.softmax_table().prob(state, token)
    }

    /// Precompute per-row softmax probabilities and log-probabilities.
    ///
    /// Sampling, enumeration, and gradient evaluation all work from this
    /// table so that repeated queries against fixed parameters do not redo
    /// the exponentials.
    pub fn softmax_table(&self) -> SoftmaxTable {
        let v = self.vocab_size;
        let mut probs = vec![0.0; self.table.len()];
        let mut logprobs = vec![0.0; self.table.len()];
        for s in 0..self.num_states {
            let row = self.row(s);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (j, &z) in row.iter().enumerate() {
                let e = (z - max).exp();
                probs[s * v + j] = e;
                sum += e;
            }
            let log_sum = sum.ln();
            for j in 0..v {
                probs[s * v + j] /= sum;
                logprobs[s * v + j] = row[j] - max - log_sum;
            }
        }
        SoftmaxTable {
            num_states: self.num_states,
            vocab_size: v,
            probs,
            logprobs,
        }
    }
}

/// Cached softmax view of a [`PolicyParams`] snapshot.
#[derive(Debug, Clone)]
pub struct SoftmaxTable {
    num_states: usize,
    vocab_size: usize,
    probs: Vec<f64>,
    logprobs: Vec<f64>,
}

impl SoftmaxTable {
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn prob(&self, state: usize, token: usize) -> f64 {
        self.probs[state * self.vocab_size + token]
    }

    pub fn logprob(&self, state: usize, token: usize) -> f64 {
        self.logprobs[state * self.vocab_size + token]
    }

    pub fn prob_row(&self, state: usize) -> &[f64] {
        let o = state * self.vocab_size;
        &self.probs[o..o + self.vocab_size]
    }

    /// Entropy of the next-token distribution in `state`, in nats.
    pub fn row_entropy(&self, state: usize) -> f64 {
        let o = state * self.vocab_size;
        let mut h = 0.0;
        for j in 0..self.vocab_size {
            let p = self.probs[o + j];
            if p > 0.0 {
                h -= p * self.logprobs[o + j];
            }
        }
        h.max(0.0)
    }

    /// Inverse-CDF draw of a token in `state`. Returns `(token, logprob)`.
    pub fn sample_token<R: rand::Rng>(&self, state: usize, rng: &mut R) -> (usize, f64) {
        let row = self.prob_row(state);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return (j, self.logprob(state, j));
            }
        }
        // Rounding in the cumulative sum can leave u just above acc.
        let last = self.vocab_size - 1;
        (last, self.logprob(state, last))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn rows_normalize() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let p = PolicyParams::random(4, 4, 2.0, &mut rng);
        let t = p.softmax_table();
        for s in 0..4 {
            let sum: f64 = t.prob_row(s).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "row {s} sums to {sum}");
        }
    }

    #[test]
    fn extreme_logit_is_stable() {
        let mut p = PolicyParams::zeros(2, 3);
        p.set_logit(0, STOP_TOKEN, 1e6);
        let t = p.softmax_table();
        assert_eq!(t.prob(0, STOP_TOKEN), 1.0);
        assert_eq!(t.prob(0, 1), 0.0);
        assert!(t.logprob(0, STOP_TOKEN) == 0.0);
    }

    #[test]
    fn uniform_row_entropy_is_ln_v() {
        let p = PolicyParams::zeros(3, 5);
        let t = p.softmax_table();
        for s in 0..3 {
            assert!((t.row_entropy(s) - (5.0f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn near_deterministic_row_entropy_vanishes() {
        let mut p = PolicyParams::zeros(1, 4);
        p.set_logit(0, 2, 40.0);
        let t = p.softmax_table();
        assert!(t.row_entropy(0) < 1e-10);
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(logits in proptest::collection::vec(-30.0f64..30.0, 6)) {
            let p = PolicyParams::from_table(2, 3, logits);
            let t = p.softmax_table();
            for s in 0..2 {
                let sum: f64 = t.prob_row(s).iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn logprobs_match_probs(logits in proptest::collection::vec(-20.0f64..20.0, 8)) {
            let p = PolicyParams::from_table(2, 4, logits);
            let t = p.softmax_table();
            for s in 0..2 {
                for v in 0..4 {
                    prop_assert!((t.prob(s, v).ln() - t.logprob(s, v)).abs() < 1e-9);
                }
            }
        }
    }
}
