//! Loss-aggregation schemes as explicit weight rules over sample gradients.
//!
//! Every scheme reduces to a linear combination `sum_i x_i * g_i` of the
//! unnormalized sample gradients; the schemes differ only in how `x_i`
//! depends on the response lengths:
//!
//! * GRPO:     `x_i = 1 / (G * L_i)`
//! * DAPO:     `x_i = 1 / sum_j L_j`
//! * Dr. GRPO: `x_i = 1 / (G * M)`
//! * DeltaL:   `x_i = (1/M) * L_i^-alpha / sum_j L_j^-alpha`
//!
//! DeltaL with `alpha = 0` coincides with Dr. GRPO; with `alpha = 1` it is
//! the minimum-variance unbiased choice under variances proportional to
//! length, subject to the weights summing to `1/M`.

use serde::{Deserialize, Serialize};

use crate::gradient::GradVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AggregationScheme {
    Grpo,
    Dapo,
    DrGrpo { m: f64 },
    DeltaL { alpha: f64, m: f64 },
}

impl AggregationScheme {
    pub fn validate(&self) -> Result<(), AggregationError> {
        match *self {
            AggregationScheme::Grpo | AggregationScheme::Dapo => Ok(()),
            AggregationScheme::DrGrpo { m } => {
                if !(m > 0.0 && m.is_finite()) {
                    return Err(AggregationError::InvalidParameter(format!(
                        "normalizer M must be positive and finite, got {m}"
                    )));
                }
                Ok(())
            }
            AggregationScheme::DeltaL { alpha, m } => {
                if !(m > 0.0 && m.is_finite()) {
                    return Err(AggregationError::InvalidParameter(format!(
                        "normalizer M must be positive and finite, got {m}"
                    )));
                }
                if !(0.0..=1.0).contains(&alpha) {
                    return Err(AggregationError::InvalidParameter(format!(
                        "alpha must lie in [0, 1], got {alpha}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Short name for reports and CSV rows.
    pub fn label(&self) -> String {
        match *self {
            AggregationScheme::Grpo => "grpo".into(),
            AggregationScheme::Dapo => "dapo".into(),
            AggregationScheme::DrGrpo { .. } => "dr-grpo".into(),
            AggregationScheme::DeltaL { alpha, .. } => format!("delta-l(a={alpha})"),
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match *self {
            AggregationScheme::DeltaL { alpha, .. } => Some(alpha),
            _ => None,
        }
    }
}

/// Positive weights, one per sample gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    weights: Vec<f64>,
}

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self, AggregationError> {
        if weights.is_empty() {
            return Err(AggregationError::EmptyGroup);
        }
        if let Some(&w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(AggregationError::InvalidParameter(format!(
                "weights must be positive and finite, got {w}"
            )));
        }
        Ok(WeightVector { weights })
    }

    /// Skip the positivity check; test-only constructions use this to probe
    /// boundary behaviour of `aggregate`.
    pub fn from_raw(weights: Vec<f64>) -> Self {
        WeightVector { weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AggregationError {
    #[error("length at index {index} must be >= 1, got {length}")]
    InvalidLength { index: usize, length: usize },
    #[error("weight group must be non-empty")]
    EmptyGroup,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

fn check_lengths(lengths: &[usize]) -> Result<(), AggregationError> {
    if lengths.is_empty() {
        return Err(AggregationError::EmptyGroup);
    }
    for (index, &length) in lengths.iter().enumerate() {
        if length < 1 {
            return Err(AggregationError::InvalidLength { index, length });
        }
    }
    Ok(())
}

/// Weight rule of a scheme applied to a group's response lengths.
///
/// `L^-alpha` is evaluated as `exp(-alpha * ln L)` so the `alpha = 0` and
/// `alpha = 1` endpoints reduce bit-exactly to the Dr. GRPO and
/// inverse-length weightings.
pub fn scheme_weights(
    scheme: &AggregationScheme,
    lengths: &[usize],
) -> Result<WeightVector, AggregationError> {
    scheme.validate()?;
    check_lengths(lengths)?;
    let g = lengths.len() as f64;
    let weights = match *scheme {
        AggregationScheme::Grpo => lengths.iter().map(|&l| 1.0 / (g * l as f64)).collect(),
        AggregationScheme::Dapo => {
            let total: f64 = lengths.iter().map(|&l| l as f64).sum();
            vec![1.0 / total; lengths.len()]
        }
        AggregationScheme::DrGrpo { m } => vec![1.0 / (m * g); lengths.len()],
        AggregationScheme::DeltaL { alpha, m } => {
            let pows: Vec<f64> = lengths
                .iter()
                .map(|&l| (-alpha * (l as f64).ln()).exp())
                .collect();
            let sum: f64 = pows.iter().sum();
            pows.into_iter().map(|w| w / (m * sum)).collect()
        }
    };
    WeightVector::new(weights)
}

/// Closed-form minimizer of `sum_i L_i * x_i^2` subject to `sum_i x_i = 1/M`:
/// the inverse-length weights `x_i = (1/M) * L_i^-1 / sum_j L_j^-1`.
pub fn min_variance_weights(lengths: &[usize], m: f64) -> Result<WeightVector, AggregationError> {
    scheme_weights(&AggregationScheme::DeltaL { alpha: 1.0, m }, lengths)
}

/// Weighted sum of gradients in ascending index order.
pub fn aggregate(grads: &[GradVector], weights: &WeightVector) -> Result<GradVector, AggregationError> {
    if grads.len() != weights.len() {
        return Err(AggregationError::DimensionMismatch(format!(
            "{} gradients vs {} weights",
            grads.len(),
            weights.len()
        )));
    }
    if grads.is_empty() {
        return Err(AggregationError::EmptyGroup);
    }
    let dim = grads[0].dim();
    let mut out = GradVector::zeros(dim);
    for (g, &w) in grads.iter().zip(weights.as_slice()) {
        if g.dim() != dim {
            return Err(AggregationError::DimensionMismatch(format!(
                "gradient dimensions differ: {} vs {}",
                g.dim(),
                dim
            )));
        }
        out.add_scaled(g, w);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn delta_l_alpha_zero_is_dr_grpo_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let g = rng.gen_range(2usize..16);
            let lengths: Vec<usize> = (0..g).map(|_| rng.gen_range(1usize..512)).collect();
            let m = rng.gen_range(1.0..64.0);
            let a = scheme_weights(&AggregationScheme::DeltaL { alpha: 0.0, m }, &lengths).unwrap();
            let b = scheme_weights(&AggregationScheme::DrGrpo { m }, &lengths).unwrap();
            assert_eq!(a, b, "lengths {lengths:?} m {m}");
        }
    }

    #[test]
    fn delta_l_alpha_one_worked_example() {
        let w = scheme_weights(
            &AggregationScheme::DeltaL { alpha: 1.0, m: 10.0 },
            &[2, 8],
        )
        .unwrap();
        assert!((w.as_slice()[0] - 0.08).abs() < 1e-15);
        assert!((w.as_slice()[1] - 0.02).abs() < 1e-15);
        assert!((w.sum() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn equal_lengths_collapse_to_constant_weights() {
        for alpha in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let w = scheme_weights(
                &AggregationScheme::DeltaL { alpha, m: 7.0 },
                &[5, 5, 5, 5],
            )
            .unwrap();
            for &x in w.as_slice() {
                assert!((x - 1.0 / (4.0 * 7.0)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn grpo_and_dapo_scaling_factors() {
        let lengths = [1usize, 2, 4, 8];
        let g = lengths.len() as f64;
        let grpo = scheme_weights(&AggregationScheme::Grpo, &lengths).unwrap();
        let expect: f64 = lengths.iter().map(|&l| 1.0 / (g * l as f64)).sum();
        assert!((grpo.sum() - expect).abs() < 1e-15);
        let dapo = scheme_weights(&AggregationScheme::Dapo, &lengths).unwrap();
        assert!((dapo.sum() - g / 15.0).abs() < 1e-15);
    }

    #[test]
    fn min_variance_is_delta_l_alpha_one() {
        let lengths = [3usize, 9, 27];
        let a = min_variance_weights(&lengths, 5.0).unwrap();
        let b = scheme_weights(&AggregationScheme::DeltaL { alpha: 1.0, m: 5.0 }, &lengths).unwrap();
        assert_eq!(a, b);
        let sym = min_variance_weights(&[1, 1, 1], 1.0).unwrap();
        for &x in sym.as_slice() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn objective_optimality_against_random_projections() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let lengths = [2usize, 3, 5, 8, 13];
        let m = 8.0;
        let star = min_variance_weights(&lengths, m).unwrap();
        let objective = |w: &[f64]| -> f64 {
            w.iter()
                .zip(&lengths)
                .map(|(&x, &l)| l as f64 * x * x)
                .sum()
        };
        let best = objective(star.as_slice());
        for _ in 0..10_000 {
            let raw: Vec<f64> = (0..lengths.len()).map(|_| rng.gen_range(1e-3..1.0)).collect();
            let s: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.into_iter().map(|x| x / (m * s)).collect();
            assert!(objective(&w) >= best * (1.0 - 1e-12));
        }
    }

    #[test]
    fn rejects_zero_length() {
        let err = scheme_weights(&AggregationScheme::Grpo, &[3, 0, 2]).unwrap_err();
        assert_eq!(err, AggregationError::InvalidLength { index: 1, length: 0 });
    }

    #[test]
    fn rejects_alpha_outside_unit_interval() {
        for alpha in [-0.1, 1.5] {
            assert!(scheme_weights(
                &AggregationScheme::DeltaL { alpha, m: 4.0 },
                &[1, 2]
            )
            .is_err());
        }
    }

    #[test]
    fn aggregate_basics() {
        let g1 = GradVector::from_values(vec![1.0, -2.0]);
        let g2 = GradVector::from_values(vec![1.0, -2.0]);
        let zero = aggregate(&[g1.clone()], &WeightVector::from_raw(vec![0.0])).unwrap();
        assert!(zero.as_slice().iter().all(|&v| v == 0.0));
        let single = aggregate(&[g1.clone()], &WeightVector::from_raw(vec![0.25])).unwrap();
        assert_eq!(single.as_slice(), &[0.25, -0.5]);
        let pair = aggregate(&[g1, g2], &WeightVector::from_raw(vec![0.5, 0.25])).unwrap();
        assert!((pair.as_slice()[0] - 0.75).abs() < 1e-15);
        assert!((pair.as_slice()[1] + 1.5).abs() < 1e-15);
    }

    #[test]
    fn aggregate_rejects_mismatches() {
        let g = GradVector::zeros(2);
        assert!(aggregate(&[g.clone()], &WeightVector::from_raw(vec![0.1, 0.2])).is_err());
        let other = GradVector::zeros(3);
        assert!(aggregate(&[g, other], &WeightVector::from_raw(vec![0.1, 0.2])).is_err());
    }

    proptest! {
        #[test]
        fn unbiased_schemes_sum_to_one_over_m(
            lengths in proptest::collection::vec(1usize..8192, 2..32),
            m in 1.0f64..128.0,
            alpha_idx in 0usize..5,
        ) {
            let alpha = [0.0, 0.25, 0.5, 0.75, 1.0][alpha_idx];
            let w = scheme_weights(&AggregationScheme::DeltaL { alpha, m }, &lengths).unwrap();
            prop_assert!((w.sum() - 1.0 / m).abs() < 1e-12);
            let dr = scheme_weights(&AggregationScheme::DrGrpo { m }, &lengths).unwrap();
            prop_assert!((dr.sum() - 1.0 / m).abs() < 1e-12);
        }

        #[test]
        fn delta_l_scale_property(
            lengths in proptest::collection::vec(1usize..256, 2..12),
            alpha_idx in 0usize..5,
            m in 1.0f64..32.0,
            factor in 1.5f64..8.0,
        ) {
            let alpha = [0.0, 0.25, 0.5, 0.75, 1.0][alpha_idx];
            let m2 = m * factor;
            let a = scheme_weights(&AggregationScheme::DeltaL { alpha, m }, &lengths).unwrap();
            let b = scheme_weights(&AggregationScheme::DeltaL { alpha, m: m2 }, &lengths).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y * factor).abs() <= 1e-12 * x.abs().max(1e-300));
            }
        }

        #[test]
        fn grpo_weight_sum_identity(lengths in proptest::collection::vec(1usize..1024, 2..24)) {
            let g = lengths.len() as f64;
            let w = scheme_weights(&AggregationScheme::Grpo, &lengths).unwrap();
            let reference: f64 = lengths.iter().map(|&l| 1.0 / l as f64).sum::<f64>() / g;
            prop_assert!((w.sum() - reference).abs() < 1e-15 * reference.max(1.0));
        }
    }
}
