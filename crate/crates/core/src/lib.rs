//! A desk-scale laboratory for loss aggregation in verifiable-reward RL.
//!
//! The lab swaps the language model for an exactly enumerable chain policy
//! so that questions about gradient estimators become checkable: sample
//! gradients against the enumerated truth, measure how their variance grows
//! with response length, compare the aggregation rules (GRPO, DAPO,
//! Dr. GRPO, and inverse-length DeltaL weighting) on equal footing, and run
//! matched-seed training loops under each rule.
//!
//! Modules, roughly bottom-up:
//!
//! * [`policy`], [`task`], [`trajectory`]: the toy environment.
//! * [`enumeration`]: exact expectations over the full trajectory space.
//! * [`gradient`]: unnormalized per-sample gradients and group advantages.
//! * [`aggregation`]: the weight rules and the minimum-variance solver.
//! * [`stats`]: Monte Carlo moments and closed-form CV comparisons.
//! * [`trainer`]: seeded gradient-ascent loops with trace capture.
//! * [`verify`]: the executable acceptance checks, one per claim.

pub mod aggregation;
pub mod enumeration;
pub mod gradient;
pub mod policy;
pub mod stats;
pub mod task;
pub mod trainer;
pub mod trajectory;
pub mod verify;

pub use aggregation::{
    aggregate, min_variance_weights, scheme_weights, AggregationError, AggregationScheme,
    WeightVector,
};
pub use enumeration::{
    enumerate_exact_gradient, enumeration_size, expected_reward, length_profile, reward_std,
    EnumerationError, LengthStratum, ENUMERATION_GUARD,
};
pub use gradient::{
    compute_advantages, group_gradients, sample_gradient, sample_gradient_with, AdvantageMode,
    ClipConfig, GradError, GradVector, RolloutGroup,
};
pub use policy::{PolicyParams, SoftmaxTable, STOP_TOKEN};
pub use stats::{
    closed_form_cv, cv_ordering_check, fixed_length_variance_comparison, monte_carlo_stats,
    table1_cross_check, variance_length_regression, CheckInstance, CvOrderingReport,
    FixedLengthVarianceReport, GradStats, LengthVarianceFit, StatError, Table1Report,
    Table1Verdict, ALPHA_GRID,
};
pub use task::{reward, RewardRule, TaskError, TaskSpec};
pub use trainer::{
    evaluate_avg_at_k, monotonicity_score, policy_entropy, train, EvalRecord, StepRecord,
    TrainConfig, TrainError, TrainTrace, DYNAMIC_SAMPLING_RETRY_CAP,
};
pub use verify::{run_all_checks, CheckReport};
