//! Executable acceptance checks, one per headline claim.
//!
//! Each check pins its own instance, sample budget, and tolerance, prints
//! the evidence, and reports pass/fail. The CLI `verify` subcommand and the
//! acceptance test suite both run these.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::aggregation::{min_variance_weights, scheme_weights, AggregationScheme};
use crate::enumeration::{enumerate_exact_gradient, length_profile, LengthStratum};
use crate::gradient::{sample_gradient_with, AdvantageMode, ClipConfig, GradVector};
use crate::policy::PolicyParams;
use crate::stats::{
    cv_ordering_check, fixed_length_variance_comparison, stats_of_draws, table1_cross_check,
    variance_length_regression, CheckInstance, Table1Verdict,
};
use crate::task::{RewardRule, TaskSpec};
use crate::trainer::{monotonicity_score, train, TrainConfig};
use crate::trajectory::sample_trajectory_from;

/// Master seed; each check derives its own stream from it.
pub const DEFAULT_VERIFY_SEED: u64 = 0x1ab_5eed;

/// Outcome of one acceptance check.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub id: &'static str,
    pub name: &'static str,
    pub passed: bool,
    /// Evidence lines, printed under the verdict.
    pub lines: Vec<String>,
}

impl CheckReport {
    pub fn summary_line(&self) -> String {
        format!(
            "{} {}: {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" }
        )
    }
}

fn derive(master: u64, salt: u64) -> u64 {
    let mut z = master ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A1: rescaled group aggregates of the constant-sum weight rules against
/// the enumerated gradient, four standard errors componentwise.
pub fn check_unbiasedness(seed: u64) -> CheckReport {
    let task = TaskSpec {
        vocab_size: 3,
        max_len: 5,
        target: 3,
        reward_rule: RewardRule::SumEqualsTarget,
    };
    let instance = CheckInstance {
        params: PolicyParams::zeros(3, 3),
        task,
        group_size: 8,
    };
    let m = instance.task.max_len as f64;
    let n_groups = 100_000;
    let schemes = [
        AggregationScheme::DeltaL { alpha: 0.0, m },
        AggregationScheme::DeltaL { alpha: 0.5, m },
        AggregationScheme::DeltaL { alpha: 1.0, m },
        AggregationScheme::DrGrpo { m },
    ];
    let strata = length_profile(&instance.params, &instance.task).expect("enumerable instance");
    let exact = enumerate_exact_gradient(&instance.params, &instance.task, AdvantageMode::MeanOnly)
        .expect("enumerable instance");

    let mut lines = Vec::new();
    let mut all_pass = true;
    for (i, scheme) in schemes.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, 0xa1_00 + i as u64));
        let report = table1_cross_check(scheme, &instance, n_groups, &mut rng).expect("enumerable");
        let (max_z, pass) = match report.verdict {
            Table1Verdict::Unbiased { max_z, pass } => (max_z, pass),
            _ => unreachable!("all schemes here have constant weight sums"),
        };
        all_pass &= pass;
        let mut line = format!(
            "{}: max componentwise z over {} groups = {:.2} (tolerance 4) -> {}",
            scheme.label(),
            n_groups,
            max_z,
            if pass { "ok" } else { "FAIL" }
        );
        if let AggregationScheme::DeltaL { alpha, .. } = scheme {
            if *alpha > 0.0 {
                let predicted = exact_self_normalized_mean(&strata, instance.group_size, *alpha);
                let mut pred_dev: f64 = 0.0;
                let mut meas_dev: f64 = 0.0;
                for c in 0..exact.dim() {
                    pred_dev = pred_dev.max((predicted.as_slice()[c] - exact.as_slice()[c]).abs());
                    meas_dev = meas_dev
                        .max((report.stats.mean.as_slice()[c] * m - exact.as_slice()[c]).abs());
                }
                line.push_str(&format!(
                    "; measured |E[g]*M - gradJ|_max {meas_dev:.3e}, enumerated prediction {pred_dev:.3e}"
                ));
            }
        }
        lines.push(line);
    }
    if !all_pass {
        lines.push(
            "note: with weights proportional to 1/L^alpha the weights and the per-draw \
             gradients share the sampled lengths, and the conditional mean gradient varies \
             with length; the measured deviation matches the enumerated prediction of that \
             coupling, so the gap is a property of self-normalized length weighting, not \
             sampling noise"
                .into(),
        );
    }
    CheckReport {
        id: "A1",
        name: "unbiasedness of constant-sum aggregation",
        passed: all_pass,
        lines,
    }
}

/// Exact `E[sum_i x_i g_i] * M` for the inverse-power weights, from the
/// length-conditional decomposition: mix `phi(l) * h(l)` over `P(l)`, where
/// `phi(l) = G * E[w_l / (w_l + S')]` and `S'` sums the weights of the other
/// `G - 1` lengths.
fn exact_self_normalized_mean(
    strata: &[LengthStratum],
    group_size: usize,
    alpha: f64,
) -> GradVector {
    let k = strata.len();
    let weights: Vec<f64> = strata
        .iter()
        .map(|s| (-alpha * (s.length as f64).ln()).exp())
        .collect();
    let probs: Vec<f64> = strata.iter().map(|s| s.prob).collect();
    let rest = group_size - 1;

    let mut phi = vec![0.0; k];
    // Enumerate multisets of the other G-1 lengths with multinomial mass.
    fn visit(
        probs: &[f64],
        weights: &[f64],
        idx: usize,
        remaining: usize,
        mass_over_factorials: f64,
        s_prime: f64,
        out: &mut impl FnMut(f64, f64),
    ) {
        if idx == probs.len() - 1 {
            let mut mass = mass_over_factorials * probs[idx].powi(remaining as i32);
            for d in 1..=remaining {
                mass /= d as f64;
            }
            out(mass, s_prime + remaining as f64 * weights[idx]);
            return;
        }
        for c in 0..=remaining {
            let mut mass = mass_over_factorials * probs[idx].powi(c as i32);
            for d in 1..=c {
                mass /= d as f64;
            }
            visit(
                probs,
                weights,
                idx + 1,
                remaining - c,
                mass,
                s_prime + c as f64 * weights[idx],
                out,
            );
        }
    }
    let factorial: f64 = (1..=rest).map(|d| d as f64).product();
    for (i, &w) in weights.iter().enumerate() {
        let mut acc = 0.0;
        visit(&probs, &weights, 0, rest, factorial, 0.0, &mut |mass, s_prime| {
            acc += mass * w / (w + s_prime);
        });
        phi[i] = group_size as f64 * acc;
    }

    let dim = strata[0].mean_grad.dim();
    let mut mixed = GradVector::zeros(dim);
    for (s, &ph) in strata.iter().zip(&phi) {
        mixed.add_scaled(&s.mean_grad, s.prob * ph);
    }
    mixed
}

/// The measurement policy for A2: the default task with the solution chain
/// `8 -> 7 -> STOP` partially reinforced, mirroring a mid-training
/// checkpoint where the policy has locked onto a path while still exploring.
pub fn semi_specialized_policy(task: &TaskSpec) -> PolicyParams {
    let mut p = PolicyParams::zeros(task.vocab_size, task.vocab_size);
    let boost = 2.8;
    p.bump_logit(0, 8, boost);
    p.bump_logit(8, 7, boost);
    p.bump_logit(7, 0, boost);
    p
}

/// A2: squared deviations of single-sample gradients regressed on length.
pub fn check_variance_grows_with_length(seed: u64) -> CheckReport {
    let task = TaskSpec::default_sum_task();
    let params = semi_specialized_policy(&task);
    let table = params.softmax_table();
    let n = 10_000usize;
    let min_bin = 100usize;
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, 0xa2));

    let trajs: Vec<_> = (0..n)
        .map(|_| sample_trajectory_from(&table, &task, &mut rng))
        .collect();
    let rewards: Vec<f64> = trajs.iter().map(|t| t.reward).collect();
    let mean_r = rewards.iter().sum::<f64>() / n as f64;
    let std_r =
        (rewards.iter().map(|r| (r - mean_r) * (r - mean_r)).sum::<f64>() / n as f64).sqrt();
    assert!(std_r > 0.0, "A2 instance must have mixed rewards");
    let grads: Vec<GradVector> = trajs
        .iter()
        .map(|t| {
            sample_gradient_with(&table, t, (t.reward - mean_r) / std_r, &ClipConfig::OFF)
                .expect("consistent instance")
        })
        .collect();
    let stats = stats_of_draws(&grads);

    // Mean squared deviation per length bin, thin bins dropped.
    let mut by_len: Vec<(f64, usize)> = vec![(0.0, 0); task.max_len + 1];
    for (t, g) in trajs.iter().zip(&grads) {
        let d = g.squared_distance(&stats.mean);
        let e = &mut by_len[t.length()];
        e.0 += d;
        e.1 += 1;
    }
    let points: Vec<(usize, f64)> = by_len
        .iter()
        .enumerate()
        .filter(|(_, (_, c))| *c >= min_bin)
        .map(|(l, (sum, c))| (l, sum / *c as f64))
        .collect();

    let fit = variance_length_regression(&points).expect("enough length bins");
    let min_len = points.iter().map(|p| p.0).min().unwrap() as f64;
    let band = 0.2 * fit.slope * min_len;
    let r2_ok = fit.r_squared > 0.9;
    let icpt_ok = fit.intercept.abs() <= band.abs();
    let passed = r2_ok && icpt_ok;
    CheckReport {
        id: "A2",
        name: "variance grows linearly with length",
        passed,
        lines: vec![
            format!(
                "{} samples, {} length bins (>= {} samples each), mean reward {:.3}",
                n,
                points.len(),
                min_bin,
                mean_r
            ),
            format!(
                "slope {:.4}, intercept {:.4}, r^2 {:.4} (needs > 0.9) -> {}",
                fit.slope,
                fit.intercept,
                fit.r_squared,
                if r2_ok { "ok" } else { "FAIL" }
            ),
            format!(
                "|intercept| {:.4} vs band 0.2*slope*min_len = {:.4} -> {}",
                fit.intercept.abs(),
                band.abs(),
                if icpt_ok { "ok" } else { "FAIL" }
            ),
        ],
    }
}

/// A3: the CV magnitude ordering over an exhaustive small grid plus a
/// randomized sweep, equalities included.
pub fn check_cv_ordering(seed: u64) -> CheckReport {
    let mut violations = 0usize;
    let mut checked = 0usize;
    let mut first_failure = None;
    let mut run = |lengths: &[usize]| {
        checked += 1;
        if let Err(e) = cv_ordering_check(lengths) {
            violations += 1;
            if first_failure.is_none() {
                first_failure = Some(e.to_string());
            }
        }
    };
    for l1 in 1..=16usize {
        for l2 in 1..=16usize {
            run(&[l1, l2]);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, 0xa3));
    let max_log = (8192f64).ln();
    for i in 0..10_000 {
        let g = rng.gen_range(2usize..=64);
        let lengths: Vec<usize> = if i % 50 == 0 {
            vec![rng.gen_range(1usize..=8192); g]
        } else {
            (0..g)
                .map(|_| (rng.gen_range(0.0..max_log).exp() as usize).clamp(1, 8192))
                .collect()
        };
        run(&lengths);
    }
    let mut lines = vec![format!(
        "violations: {violations} over {checked} length vectors (grid 16x16 plus randomized sweep)"
    )];
    if let Some(f) = first_failure {
        lines.push(format!("first violation: {f}"));
    }
    CheckReport {
        id: "A3",
        name: "coefficient-of-variation ordering",
        passed: violations == 0,
        lines,
    }
}

/// A4: minimum variance at a fixed length multiset, plus the closed-form
/// weights beating random constraint-satisfying weight vectors.
pub fn check_minimum_variance(seed: u64) -> CheckReport {
    let instance = CheckInstance {
        params: PolicyParams::zeros(3, 3),
        task: TaskSpec {
            vocab_size: 3,
            max_len: 8,
            target: 6,
            reward_rule: RewardRule::SumEqualsTarget,
        },
        group_size: 4,
    };
    let lengths = [2usize, 4, 6, 8];
    let m = instance.task.max_len as f64;
    let schemes = vec![
        AggregationScheme::DeltaL { alpha: 1.0, m },
        AggregationScheme::DeltaL { alpha: 0.75, m },
        AggregationScheme::DeltaL { alpha: 0.5, m },
        AggregationScheme::DeltaL { alpha: 0.25, m },
        AggregationScheme::DeltaL { alpha: 0.0, m },
        AggregationScheme::Grpo,
        AggregationScheme::Dapo,
        AggregationScheme::DrGrpo { m },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, 0xa4));
    let report = fixed_length_variance_comparison(&instance, &lengths, &schemes, 100_000, &mut rng)
        .expect("rejection sampling within budget");

    let mut lines = vec![format!(
        "fixed lengths {:?}, {} draws, gradients shared across schemes",
        report.lengths, report.n_draws
    )];
    let reference = &report.per_scheme[report.reference_index];
    for s in &report.per_scheme {
        lines.push(format!(
            "{}: rescaled variance {:.6e} (se {:.2e})",
            s.scheme.label(),
            s.total_variance,
            s.standard_error
        ));
    }
    lines.push(format!(
        "delta-l(a=1) minimal within 3 combined standard errors -> {}",
        if report.reference_is_minimal { "ok" } else { "FAIL" }
    ));

    // Closed-form objective optimality against random projected weights.
    let star = min_variance_weights(&lengths, m).expect("valid lengths");
    let objective = |w: &[f64]| -> f64 {
        w.iter().zip(&lengths).map(|(&x, &l)| l as f64 * x * x).sum()
    };
    let best = objective(star.as_slice());
    let mut exceptions = 0usize;
    for _ in 0..10_000 {
        let raw: Vec<f64> = (0..lengths.len()).map(|_| rng.gen_range(1e-6..1.0f64)).collect();
        let s: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.into_iter().map(|x| x / (m * s)).collect();
        if objective(&w) < best * (1.0 - 1e-12) {
            exceptions += 1;
        }
    }
    lines.push(format!(
        "closed-form weights vs 10000 random weight vectors on sum L_i x_i^2: {exceptions} exceptions"
    ));
    let _ = reference;
    CheckReport {
        id: "A4",
        name: "minimum variance at fixed lengths",
        passed: report.reference_is_minimal && exceptions == 0,
        lines,
    }
}

/// Outcome of one training run inside the A5 comparison.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub scheme: AggregationScheme,
    pub seed: u64,
    pub final_score: f64,
    pub monotonicity: f64,
}

/// Matched-seed training comparison used by A5 and by the train-compare
/// experiment. Returns one outcome per (scheme, seed).
pub fn run_training_comparison(
    schemes: &[AggregationScheme],
    seeds: &[u64],
    base: &TrainConfig,
    task: &TaskSpec,
) -> Vec<TrainOutcome> {
    let init = PolicyParams::zeros(task.vocab_size, task.vocab_size);
    let mut out = Vec::new();
    for &scheme in schemes {
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.scheme = scheme;
            cfg.seed = seed;
            let (_, trace) = train(&cfg, task, &init).expect("valid config");
            let scores: Vec<f64> = trace.evals.iter().map(|e| e.avg_at_k).collect();
            let final_score = *scores.last().expect("at least the initial eval");
            let monotonicity = monotonicity_score(&scores).unwrap_or(0.0);
            out.push(TrainOutcome {
                scheme,
                seed,
                final_score,
                monotonicity,
            });
        }
    }
    out
}

/// A5: matched-seed training comparison on the default task.
pub fn check_training_comparison(seed: u64) -> CheckReport {
    let task = TaskSpec::default_sum_task();
    let m = task.max_len as f64;
    let schemes = [
        AggregationScheme::DeltaL { alpha: 1.0, m },
        AggregationScheme::DeltaL { alpha: 0.75, m },
        AggregationScheme::Grpo,
        AggregationScheme::Dapo,
        AggregationScheme::DrGrpo { m },
    ];
    let seeds: Vec<u64> = (0..5).map(|i| derive(seed, 0xa5_00 + i)).collect();
    let base = TrainConfig::desk_default(schemes[0], 0);
    let outcomes = run_training_comparison(&schemes, &seeds, &base, &task);

    let mean_of = |scheme: &AggregationScheme, f: &dyn Fn(&TrainOutcome) -> f64| -> f64 {
        let vals: Vec<f64> = outcomes
            .iter()
            .filter(|o| o.scheme == *scheme)
            .map(|o| f(o))
            .collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    };

    let mut lines = Vec::new();
    for scheme in &schemes {
        let finals: Vec<String> = outcomes
            .iter()
            .filter(|o| o.scheme == *scheme)
            .map(|o| format!("{:.3}", o.final_score))
            .collect();
        lines.push(format!(
            "{}: final avg@8 per seed [{}], mean {:.3}, mean monotonicity {:.3}",
            scheme.label(),
            finals.join(", "),
            mean_of(scheme, &|o| o.final_score),
            mean_of(scheme, &|o| o.monotonicity),
        ));
    }

    let dl1 = schemes[0];
    let dl1_final = mean_of(&dl1, &|o| o.final_score);
    let dl1_mono = mean_of(&dl1, &|o| o.monotonicity);
    let dr_final = mean_of(&AggregationScheme::DrGrpo { m }, &|o| o.final_score);
    let dapo_final = mean_of(&AggregationScheme::Dapo, &|o| o.final_score);
    let final_ok = dl1_final >= dr_final && dl1_final >= dapo_final;
    let max_baseline_mono = schemes[1..]
        .iter()
        .map(|s| mean_of(s, &|o| o.monotonicity))
        .fold(f64::NEG_INFINITY, f64::max);
    let mono_ok = dl1_mono >= 0.8 && dl1_mono >= max_baseline_mono - 0.05;
    lines.push(format!(
        "(a) delta-l(a=1) mean final {:.3} >= dr-grpo {:.3} and dapo {:.3} -> {}",
        dl1_final,
        dr_final,
        dapo_final,
        if final_ok { "ok" } else { "FAIL" }
    ));
    lines.push(format!(
        "(b) delta-l(a=1) mean monotonicity {:.3} >= 0.8 and >= best baseline {:.3} - 0.05 -> {}",
        dl1_mono,
        max_baseline_mono,
        if mono_ok { "ok" } else { "FAIL" }
    ));
    let per_seed_wins = seeds
        .iter()
        .filter(|&&s| {
            let f = |sch: &AggregationScheme| {
                outcomes
                    .iter()
                    .find(|o| o.scheme == *sch && o.seed == s)
                    .map(|o| o.final_score)
                    .unwrap_or(0.0)
            };
            f(&dl1) >= f(&AggregationScheme::DrGrpo { m })
        })
        .count();
    lines.push(format!(
        "per-seed: delta-l(a=1) final >= dr-grpo final in {per_seed_wins} of {} seeds",
        seeds.len()
    ));
    CheckReport {
        id: "A5",
        name: "matched-seed training comparison",
        passed: final_ok && mono_ok,
        lines,
    }
}

/// A6: the endpoint identities must be exact in floating point.
pub fn check_identity_reductions(seed: u64) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, 0xa6));
    let mut weight_mismatches = 0usize;
    for _ in 0..1000 {
        let g = rng.gen_range(2usize..32);
        let lengths: Vec<usize> = (0..g).map(|_| rng.gen_range(1usize..2048)).collect();
        let m = rng.gen_range(1.0..128.0f64);
        let a = scheme_weights(&AggregationScheme::DeltaL { alpha: 0.0, m }, &lengths).unwrap();
        let b = scheme_weights(&AggregationScheme::DrGrpo { m }, &lengths).unwrap();
        let same = a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .all(|(x, y)| x.to_bits() == y.to_bits());
        if !same {
            weight_mismatches += 1;
        }
    }

    let mut cv_mismatches = 0usize;
    let mut cv_checked = 0usize;
    let mut check_cv = |lengths: &[usize], rng_m: f64| {
        cv_checked += 1;
        let grpo =
            crate::stats::closed_form_cv(&AggregationScheme::Grpo, lengths, 1.0, 1.0).unwrap();
        let d1 = crate::stats::closed_form_cv(
            &AggregationScheme::DeltaL { alpha: 1.0, m: rng_m },
            lengths,
            1.0,
            1.0,
        )
        .unwrap();
        if grpo.to_bits() != d1.to_bits() {
            cv_mismatches += 1;
        }
    };
    for l1 in 1..=16usize {
        for l2 in 1..=16usize {
            check_cv(&[l1, l2], 16.0);
        }
    }
    for _ in 0..1000 {
        let g = rng.gen_range(2usize..32);
        let lengths: Vec<usize> = (0..g).map(|_| rng.gen_range(1usize..8192)).collect();
        check_cv(&lengths, rng.gen_range(1.0..64.0));
    }

    CheckReport {
        id: "A6",
        name: "identity reductions at the alpha endpoints",
        passed: weight_mismatches == 0 && cv_mismatches == 0,
        lines: vec![
            format!(
                "delta-l(a=0) weights bit-identical to dr-grpo on 1000 random length vectors: {} mismatches",
                weight_mismatches
            ),
            format!(
                "delta-l(a=1) CV bit-identical to grpo CV on {cv_checked} length vectors: {cv_mismatches} mismatches"
            ),
        ],
    }
}

/// Central finite differences of `A * sum_t log pi(o_t | s_t)`.
pub fn finite_difference_gradient(
    f: &mut dyn FnMut(&PolicyParams) -> f64,
    params: &PolicyParams,
    step: f64,
) -> GradVector {
    let dim = params.dim();
    let vocab = params.vocab_size();
    let mut out = vec![0.0; dim];
    for i in 0..dim {
        let (s, v) = (i / vocab, i % vocab);
        let mut hi = params.clone();
        hi.bump_logit(s, v, step);
        let mut lo = params.clone();
        lo.bump_logit(s, v, -step);
        out[i] = (f(&hi) - f(&lo)) / (2.0 * step);
    }
    GradVector::from_values(out)
}

/// A7: analytic sample gradients against central finite differences.
pub fn check_gradient_correctness(seed: u64) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, 0xa7));
    let mut worst: f64 = 0.0;
    let n_cases = 100;
    for _ in 0..n_cases {
        let vocab = rng.gen_range(3usize..=6);
        let max_len = rng.gen_range(3usize..=8);
        let params = PolicyParams::random(vocab, vocab, 1.2, &mut rng);
        let task = TaskSpec {
            vocab_size: vocab,
            max_len,
            target: rng.gen_range(0..12),
            reward_rule: RewardRule::SumEqualsTarget,
        };
        let traj = sample_trajectory_from(&params.softmax_table(), &task, &mut rng);
        let advantage = rng.gen_range(-2.0..2.0f64);
        let analytic = sample_gradient_with(&params.softmax_table(), &traj, advantage, &ClipConfig::OFF)
            .expect("consistent case");
        let fd = finite_difference_gradient(
            &mut |p: &PolicyParams| {
                let table = p.softmax_table();
                let mut state = 0usize;
                let mut total = 0.0;
                for &tok in &traj.tokens {
                    total += table.logprob(state, tok);
                    state = tok;
                }
                advantage * total
            },
            &params,
            1e-5,
        );
        for (a, b) in analytic.as_slice().iter().zip(fd.as_slice()) {
            worst = worst.max((a - b).abs());
        }
    }
    let passed = worst < 1e-6;
    CheckReport {
        id: "A7",
        name: "analytic gradients vs finite differences",
        passed,
        lines: vec![format!(
            "{n_cases} random (params, trajectory, advantage) cases: max componentwise error {worst:.3e} (tolerance 1e-6)"
        )],
    }
}

/// Run all seven checks in order.
pub fn run_all_checks(seed: u64) -> Vec<CheckReport> {
    vec![
        check_unbiasedness(seed),
        check_variance_grows_with_length(seed),
        check_cv_ordering(seed),
        check_minimum_variance(seed),
        check_training_comparison(seed),
        check_identity_reductions(seed),
        check_gradient_correctness(seed),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_normalized_mean_with_alpha_zero_recovers_exact_gradient() {
        let params = PolicyParams::zeros(3, 3);
        let task = TaskSpec {
            vocab_size: 3,
            max_len: 4,
            target: 2,
            reward_rule: RewardRule::SumEqualsTarget,
        };
        let strata = length_profile(&params, &task).unwrap();
        let mixed = exact_self_normalized_mean(&strata, 6, 0.0);
        let exact = enumerate_exact_gradient(&params, &task, AdvantageMode::MeanOnly).unwrap();
        assert!(mixed.squared_distance(&exact).sqrt() < 1e-12);
    }

    #[test]
    fn self_normalized_mean_deviates_for_alpha_one() {
        let params = PolicyParams::zeros(3, 3);
        let task = TaskSpec {
            vocab_size: 3,
            max_len: 5,
            target: 3,
            reward_rule: RewardRule::SumEqualsTarget,
        };
        let strata = length_profile(&params, &task).unwrap();
        let mixed = exact_self_normalized_mean(&strata, 8, 1.0);
        let exact = enumerate_exact_gradient(&params, &task, AdvantageMode::MeanOnly).unwrap();
        assert!(mixed.squared_distance(&exact).sqrt() > 1e-3);
    }

    #[test]
    fn fd_helper_matches_a_known_derivative() {
        // f(theta) = logit(0,1): derivative is the unit vector.
        let params = PolicyParams::zeros(2, 2);
        let g = finite_difference_gradient(&mut |p| p.logit(0, 1), &params, 1e-5);
        assert!((g.as_slice()[1] - 1.0).abs() < 1e-9);
        assert!(g.as_slice()[0].abs() < 1e-9);
    }
}
