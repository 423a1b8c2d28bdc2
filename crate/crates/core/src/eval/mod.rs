//! Metrics, cross-validation, baselines and scenario sweeps.

pub mod baselines;
pub mod cv;
pub mod metrics;
pub mod scenario;

pub use baselines::{baseline_krr, covariate_shift_weights, label_shift_weights, KrrModel};
pub use cv::{cross_validate, CvPlan, CvResult};
pub use metrics::{accuracy, auroc, mse, Metric};
pub use scenario::{run_scenario, Method, MethodSettings, ResultRow, RunSpec};
