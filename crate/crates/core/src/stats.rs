//! Monte Carlo moment measurement and closed-form coefficient-of-variation
//! checks for the aggregation schemes.

use rand::Rng;

use crate::aggregation::{aggregate, scheme_weights, AggregationScheme, WeightVector};
use crate::enumeration::{enumerate_exact_gradient, expected_reward, EnumerationError};
use crate::gradient::{sample_gradient_with, ClipConfig, GradVector};
use crate::policy::PolicyParams;
use crate::task::TaskSpec;
use crate::trajectory::{sample_trajectory_from, sample_trajectory_with_length};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StatError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("degenerate design: regression needs at least 3 distinct lengths")]
    DegenerateDesign,
    #[error("length at index {index} must be >= 1")]
    InvalidLength { index: usize },
    #[error("coefficient-of-variation ordering violated for lengths {lengths:?}: {detail}")]
    OrderingViolation { lengths: Vec<usize>, detail: String },
    #[error(transparent)]
    Enumeration(#[from] EnumerationError),
    #[error("fixed-length rejection sampling exhausted its attempt budget at length {length}")]
    RejectionExhausted { length: usize },
}

/// Monte Carlo moments of a gradient-valued estimator.
///
/// `total_variance` is `E||g - E g||^2`, the trace of the covariance; `cv`
/// is `sqrt(total_variance) / ||E g||`.
#[derive(Debug, Clone)]
pub struct GradStats {
    pub mean: GradVector,
    pub total_variance: f64,
    pub mean_norm: f64,
    pub cv: f64,
    pub n_samples: usize,
    /// Standard error of `total_variance`, from the spread of the per-sample
    /// squared deviations (a fourth-central-moment quantity).
    pub standard_error_variance: f64,
    /// Per-component variances; they sum to `total_variance`.
    pub component_variance: Vec<f64>,
}

impl GradStats {
    /// Standard error of one mean component.
    pub fn mean_standard_error(&self, component: usize) -> f64 {
        (self.component_variance[component] / self.n_samples as f64).sqrt()
    }
}

/// Estimate moments from `n` draws of `sampler`.
///
/// Both passes run in ascending draw order, so results are reproducible and
/// independent of how the draws might later be rearranged.
pub fn monte_carlo_stats<R: Rng>(
    mut sampler: impl FnMut(&mut R) -> GradVector,
    n: usize,
    rng: &mut R,
) -> Result<GradStats, StatError> {
    if n < 2 {
        return Err(StatError::TooFewSamples { needed: 2, got: n });
    }
    let draws: Vec<GradVector> = (0..n).map(|_| sampler(rng)).collect();
    Ok(stats_of_draws(&draws))
}

/// Moments of an already-collected set of draws.
pub fn stats_of_draws(draws: &[GradVector]) -> GradStats {
    let n = draws.len();
    assert!(n >= 2, "need at least 2 draws");
    let dim = draws[0].dim();
    let mut mean = GradVector::zeros(dim);
    for d in draws {
        mean.add_scaled(d, 1.0);
    }
    mean.scale(1.0 / n as f64);

    let mut component_variance = vec![0.0; dim];
    let mut sqdevs = Vec::with_capacity(n);
    for d in draws {
        let mut sq = 0.0;
        for (c, (a, b)) in d.as_slice().iter().zip(mean.as_slice()).enumerate() {
            let diff = a - b;
            component_variance[c] += diff * diff;
            sq += diff * diff;
        }
        sqdevs.push(sq);
    }
    for v in component_variance.iter_mut() {
        *v /= n as f64;
    }
    let total_variance = sqdevs.iter().sum::<f64>() / n as f64;
    let var_of_sqdev =
        sqdevs.iter().map(|d| (d - total_variance) * (d - total_variance)).sum::<f64>() / n as f64;
    let standard_error_variance = (var_of_sqdev / n as f64).sqrt();
    let mean_norm = mean.norm();
    let cv = if mean_norm > 0.0 {
        total_variance.sqrt() / mean_norm
    } else if total_variance == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    GradStats {
        mean,
        total_variance,
        mean_norm,
        cv,
        n_samples: n,
        standard_error_variance,
        component_variance,
    }
}

/// Least-squares fit of squared deviation against response length.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthVarianceFit {
    /// Estimated token-level variance.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: Vec<(usize, f64)>,
}

/// Ordinary least squares of deviation on length.
pub fn variance_length_regression(points: &[(usize, f64)]) -> Result<LengthVarianceFit, StatError> {
    let mut distinct: Vec<usize> = points.iter().map(|p| p.0).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(StatError::DegenerateDesign);
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in points {
        let dx = x as f64 - mean_x;
        sxx += dx * dx;
        sxy += dx * (y - mean_y);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for &(x, y) in points {
        let e = y - (slope * x as f64 + intercept);
        ss_res += e * e;
        let d = y - mean_y;
        ss_tot += d * d;
    }
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(LengthVarianceFit {
        slope,
        intercept,
        r_squared,
        points: points.to_vec(),
    })
}

fn check_cv_lengths(lengths: &[usize]) -> Result<(), StatError> {
    for (index, &l) in lengths.iter().enumerate() {
        if l < 1 {
            return Err(StatError::InvalidLength { index });
        }
    }
    Ok(())
}

/// `ln sum_i L_i^t`, evaluated stably in log space.
fn log_sum_pow(lengths: &[usize], t: f64) -> f64 {
    let terms: Vec<f64> = lengths.iter().map(|&l| t * (l as f64).ln()).collect();
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Closed-form coefficient of variation of a scheme's aggregate under the
/// model `Var(g_i) = V * L_i`, `E[g_i] = grad J`:
///
/// * GRPO and DeltaL(1): `(sum 1/L_i)^-1/2 * sqrt(V)/||grad J||`
/// * DAPO and Dr. GRPO: `sqrt(sum L_i)/G * sqrt(V)/||grad J||`
/// * DeltaL(alpha):     `sqrt(sum L_i^(1-2a)) / sum L_i^-a * sqrt(V)/||grad J||`
///
/// All branches are computed in log space, which makes the algebraic
/// coincidences (alpha = 1 vs GRPO, alpha = 0 vs DAPO/Dr. GRPO) exact in
/// floating point as well.
pub fn closed_form_cv(
    scheme: &AggregationScheme,
    lengths: &[usize],
    token_variance: f64,
    grad_norm: f64,
) -> Result<f64, StatError> {
    assert!(token_variance > 0.0 && grad_norm > 0.0, "scale inputs must be positive");
    check_cv_lengths(lengths)?;
    if lengths.is_empty() {
        return Err(StatError::TooFewSamples { needed: 1, got: 0 });
    }
    let log_cv = match *scheme {
        AggregationScheme::Grpo => -0.5 * log_sum_pow(lengths, -1.0),
        AggregationScheme::Dapo | AggregationScheme::DrGrpo { .. } => {
            0.5 * log_sum_pow(lengths, 1.0) - (lengths.len() as f64).ln()
        }
        AggregationScheme::DeltaL { alpha, .. } => {
            0.5 * log_sum_pow(lengths, 1.0 - 2.0 * alpha) - log_sum_pow(lengths, -alpha)
        }
    };
    Ok(log_cv.exp() * token_variance.sqrt() / grad_norm)
}

/// Relative-or-absolute tolerance used by the ordering checks.
fn cv_tol(a: f64, b: f64) -> f64 {
    1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Closed-form CVs of all schemes on one length vector, with the ordering
/// assertions already evaluated.
#[derive(Debug, Clone)]
pub struct CvOrderingReport {
    pub lengths: Vec<usize>,
    pub grpo: f64,
    /// `(alpha, cv)` on the standard grid, alpha descending from 1 to 0.
    pub delta_l: Vec<(f64, f64)>,
    pub dapo: f64,
    pub dr_grpo: f64,
    pub all_lengths_equal: bool,
}

/// The alpha grid used by ordering sweeps.
pub const ALPHA_GRID: [f64; 5] = [1.0, 0.75, 0.5, 0.25, 0.0];

/// Evaluate every scheme's closed-form CV (with the scale factors set to 1,
/// which cancel in comparisons) and verify the magnitude ordering
///
/// `CV(GRPO) = CV(DeltaL 1) <= CV(DeltaL alpha) <= CV(DAPO) = CV(Dr. GRPO)`
///
/// together with monotonicity in alpha and the equality conditions: the
/// interior comparisons are equalities exactly when all lengths coincide.
pub fn cv_ordering_check(lengths: &[usize]) -> Result<CvOrderingReport, StatError> {
    if lengths.len() < 2 {
        return Err(StatError::TooFewSamples { needed: 2, got: lengths.len() });
    }
    check_cv_lengths(lengths)?;
    let m = lengths.iter().map(|&l| l as f64).sum::<f64>();
    let grpo = closed_form_cv(&AggregationScheme::Grpo, lengths, 1.0, 1.0)?;
    let dapo = closed_form_cv(&AggregationScheme::Dapo, lengths, 1.0, 1.0)?;
    let dr_grpo = closed_form_cv(&AggregationScheme::DrGrpo { m }, lengths, 1.0, 1.0)?;
    let delta_l: Vec<(f64, f64)> = ALPHA_GRID
        .iter()
        .map(|&alpha| {
            closed_form_cv(&AggregationScheme::DeltaL { alpha, m }, lengths, 1.0, 1.0)
                .map(|cv| (alpha, cv))
        })
        .collect::<Result<_, _>>()?;
    let all_equal = lengths.windows(2).all(|w| w[0] == w[1]);

    let fail = |detail: String| StatError::OrderingViolation {
        lengths: lengths.to_vec(),
        detail,
    };

    let d1 = delta_l[0].1;
    let d0 = delta_l.last().unwrap().1;
    if (grpo - d1).abs() > cv_tol(grpo, d1) {
        return Err(fail(format!("CV(GRPO)={grpo} != CV(DeltaL 1)={d1}")));
    }
    if (dapo - dr_grpo).abs() > cv_tol(dapo, dr_grpo) {
        return Err(fail(format!("CV(DAPO)={dapo} != CV(DrGRPO)={dr_grpo}")));
    }
    if (dapo - d0).abs() > cv_tol(dapo, d0) {
        return Err(fail(format!("CV(DAPO)={dapo} != CV(DeltaL 0)={d0}")));
    }
    for pair in delta_l.windows(2) {
        let (a_hi, cv_hi) = pair[0];
        let (a_lo, cv_lo) = pair[1];
        if cv_hi > cv_lo + cv_tol(cv_hi, cv_lo) {
            return Err(fail(format!(
                "CV nonincreasing in alpha violated: alpha {a_hi} -> {cv_hi} vs alpha {a_lo} -> {cv_lo}"
            )));
        }
    }
    for &(alpha, cv) in &delta_l {
        if alpha == 0.0 || alpha == 1.0 {
            continue;
        }
        let eq_lo = (cv - grpo).abs() <= cv_tol(cv, grpo);
        let eq_hi = (cv - dapo).abs() <= cv_tol(cv, dapo);
        if all_equal {
            if !(eq_lo && eq_hi) {
                return Err(fail(format!(
                    "equal lengths must equalize all CVs, alpha {alpha} gave {cv} vs ({grpo}, {dapo})"
                )));
            }
        } else {
            if cv < grpo - cv_tol(cv, grpo) || cv > dapo + cv_tol(cv, dapo) {
                return Err(fail(format!(
                    "CV(DeltaL {alpha})={cv} outside [CV(GRPO)={grpo}, CV(DAPO)={dapo}]"
                )));
            }
            if eq_lo || eq_hi {
                return Err(fail(format!(
                    "interior alpha {alpha} reached equality on unequal lengths: {cv} vs ({grpo}, {dapo})"
                )));
            }
        }
    }
    Ok(CvOrderingReport {
        lengths: lengths.to_vec(),
        grpo,
        delta_l,
        dapo,
        dr_grpo,
        all_lengths_equal: all_equal,
    })
}

/// An enumerable measurement setup: a policy, a task small enough for the
/// enumeration guard, and a rollout group size.
#[derive(Debug, Clone)]
pub struct CheckInstance {
    pub params: PolicyParams,
    pub task: TaskSpec,
    pub group_size: usize,
}

/// Verdict of a mean cross-check for one scheme.
#[derive(Debug, Clone)]
pub enum Table1Verdict {
    /// Constant-sum weight rules are compared strictly against
    /// `grad J / M`: the largest componentwise z-score must stay within 4.
    Unbiased { max_z: f64, pass: bool },
    /// Length-dependent rules are reported directionally: the empirical
    /// scaling of the mean against `grad J`, next to the mean of the
    /// per-draw predicted factor.
    Biased {
        empirical_factor: f64,
        mean_predicted_factor: f64,
    },
}

#[derive(Debug, Clone)]
pub struct Table1Report {
    pub scheme: AggregationScheme,
    pub n_groups: usize,
    pub stats: GradStats,
    pub exact_gradient: GradVector,
    pub normalizer: f64,
    pub verdict: Table1Verdict,
}

/// Monte Carlo cross-check of a scheme's aggregate mean against the exact
/// gradient.
///
/// Groups are sampled i.i.d. from the policy; each sample gradient uses the
/// exact enumerated baseline `A = r - E[r]`, which makes the raw sample
/// gradient an exactly unbiased estimate of `grad J`. Weight rules whose
/// sum is the constant `1/M` are then tested strictly; the length-dependent
/// rules are summarized by their empirical scaling factor.
pub fn table1_cross_check<R: Rng>(
    scheme: &AggregationScheme,
    instance: &CheckInstance,
    n_groups: usize,
    rng: &mut R,
) -> Result<Table1Report, StatError> {
    let exact = enumerate_exact_gradient(&instance.params, &instance.task, crate::gradient::AdvantageMode::MeanOnly)?;
    let j = expected_reward(&instance.params, &instance.task)?;
    let table = instance.params.softmax_table();
    let g = instance.group_size;
    let mut predicted_factor_sum = 0.0;
    let draws: Vec<GradVector> = (0..n_groups)
        .map(|_| {
            let trajs: Vec<_> = (0..g)
                .map(|_| sample_trajectory_from(&table, &instance.task, rng))
                .collect();
            let lengths: Vec<usize> = trajs.iter().map(|t| t.length()).collect();
            let grads: Vec<GradVector> = trajs
                .iter()
                .map(|t| {
                    sample_gradient_with(&table, t, t.reward - j, &ClipConfig::OFF)
                        .expect("consistent instance")
                })
                .collect();
            let weights = scheme_weights(scheme, &lengths).expect("valid lengths");
            match scheme {
                AggregationScheme::Grpo | AggregationScheme::Dapo => {
                    predicted_factor_sum += weights.sum();
                }
                _ => {}
            }
            aggregate(&grads, &weights).expect("consistent dimensions")
        })
        .collect();
    let stats = stats_of_draws(&draws);

    let normalizer = match *scheme {
        AggregationScheme::DrGrpo { m } | AggregationScheme::DeltaL { m, .. } => m,
        _ => 1.0,
    };
    let verdict = match scheme {
        AggregationScheme::DrGrpo { .. } | AggregationScheme::DeltaL { .. } => {
            let mut max_z: f64 = 0.0;
            for c in 0..exact.dim() {
                let se = stats.mean_standard_error(c) * normalizer;
                let dev = (stats.mean.as_slice()[c] * normalizer - exact.as_slice()[c]).abs();
                if se > 0.0 {
                    max_z = max_z.max(dev / se);
                } else if dev > 0.0 {
                    max_z = f64::INFINITY;
                }
            }
            Table1Verdict::Unbiased {
                max_z,
                pass: max_z <= 4.0,
            }
        }
        AggregationScheme::Grpo | AggregationScheme::Dapo => {
            let denom = exact.dot(&exact);
            let empirical_factor = if denom > 0.0 {
                stats.mean.dot(&exact) / denom
            } else {
                f64::NAN
            };
            Table1Verdict::Biased {
                empirical_factor,
                mean_predicted_factor: predicted_factor_sum / n_groups as f64,
            }
        }
    };
    Ok(Table1Report {
        scheme: *scheme,
        n_groups,
        stats,
        exact_gradient: exact,
        normalizer,
        verdict,
    })
}

/// One scheme's measured variance in the fixed-length comparison.
#[derive(Debug, Clone)]
pub struct SchemeVariance {
    pub scheme: AggregationScheme,
    /// Weights rescaled so they sum to `1/M`, making variances comparable.
    pub rescaled_weights: Vec<f64>,
    pub total_variance: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone)]
pub struct FixedLengthVarianceReport {
    pub lengths: Vec<usize>,
    pub n_draws: usize,
    pub per_scheme: Vec<SchemeVariance>,
    /// Index into `per_scheme` of the DeltaL(alpha=1) entry.
    pub reference_index: usize,
    /// True iff the reference variance is within 3 combined standard errors
    /// of being the smallest.
    pub reference_is_minimal: bool,
}

/// Variance comparison at a prescribed length multiset.
///
/// Every draw rejection-samples one trajectory per prescribed length, so the
/// group's lengths (and therefore every scheme's weights) are constants; all
/// schemes see the same draws. Each scheme's weights are rescaled to sum to
/// `1/M` before comparing variances, otherwise the differing means would
/// dominate the comparison.
pub fn fixed_length_variance_comparison<R: Rng>(
    instance: &CheckInstance,
    lengths: &[usize],
    schemes: &[AggregationScheme],
    n_draws: usize,
    rng: &mut R,
) -> Result<FixedLengthVarianceReport, StatError> {
    check_cv_lengths(lengths)?;
    let m = instance.task.max_len as f64;
    let j = expected_reward(&instance.params, &instance.task)?;
    let table = instance.params.softmax_table();

    let reference_index = schemes
        .iter()
        .position(|s| matches!(s, AggregationScheme::DeltaL { alpha, .. } if *alpha == 1.0))
        .expect("comparison needs a DeltaL(alpha=1) entry");

    let rescaled: Vec<Vec<f64>> = schemes
        .iter()
        .map(|s| {
            let w = scheme_weights(s, lengths).expect("valid lengths");
            let factor = (1.0 / m) / w.sum();
            w.as_slice().iter().map(|&x| x * factor).collect()
        })
        .collect();

    let mut per_scheme_draws: Vec<Vec<GradVector>> =
        schemes.iter().map(|_| Vec::with_capacity(n_draws)).collect();
    const REJECTION_BUDGET: usize = 1_000_000;
    for _ in 0..n_draws {
        let grads: Vec<GradVector> = lengths
            .iter()
            .map(|&len| {
                let t = sample_trajectory_with_length(&table, &instance.task, len, REJECTION_BUDGET, rng)
                    .ok_or(StatError::RejectionExhausted { length: len })?;
                Ok(sample_gradient_with(&table, &t, t.reward - j, &ClipConfig::OFF)
                    .expect("consistent instance"))
            })
            .collect::<Result<_, StatError>>()?;
        for (k, weights) in rescaled.iter().enumerate() {
            per_scheme_draws[k]
                .push(aggregate(&grads, &WeightVector::from_raw(weights.clone())).expect("dims"));
        }
    }

    let per_scheme: Vec<SchemeVariance> = schemes
        .iter()
        .zip(rescaled)
        .zip(per_scheme_draws)
        .map(|((scheme, rescaled_weights), draws)| {
            let st = stats_of_draws(&draws);
            SchemeVariance {
                scheme: *scheme,
                rescaled_weights,
                total_variance: st.total_variance,
                standard_error: st.standard_error_variance,
            }
        })
        .collect();

    let reference = &per_scheme[reference_index];
    let reference_is_minimal = per_scheme.iter().all(|s| {
        let slack =
            3.0 * (reference.standard_error.powi(2) + s.standard_error.powi(2)).sqrt();
        reference.total_variance <= s.total_variance + slack
    });

    Ok(FixedLengthVarianceReport {
        lengths: lengths.to_vec(),
        n_draws,
        per_scheme,
        reference_index,
        reference_is_minimal,
    })
}
