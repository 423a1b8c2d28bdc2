//! Kernel bridge-function estimators for domain adaptation under latent shift.
//!
//! The source and target domains are assumed to differ only through the
//! marginal of an unobserved confounder `U`. An observed proxy `W` of `U`
//! makes it possible to learn a *bridge function* on the source domain that
//! stays valid on the target domain:
//!
//! * [`bridge::concept`] estimates the concept bridge `h0(w, c)` from source
//!   samples of `(W, C, X, Y)` and predicts on the target through the joint
//!   embedding of `(W, C)` given `X`.
//! * [`bridge::multidomain`] estimates the multi-domain bridge `m0(w, x)` from
//!   several source domains indexed by `Z` and predicts on the target through
//!   the embedding of `W` given `X`.
//!
//! Both estimators are closed-form two-stage kernel ridge regressions whose
//! stage-2 system lives in an `n2`-dimensional space; no `n1*n2` operator is
//! ever formed. [`discrete`] covers the finite-category identification
//! (pseudo-inverse bridge matrices) and the partial-identification bounds.
//! [`datagen`] reproduces the synthetic simulation designs and [`eval`] the
//! metrics, cross-validation and baseline comparators. The [`cli`] module
//! backs the `kbridge` binary.
//!
//! With the default `parallel` feature, Gram construction and experiment
//! sweeps run on rayon; results are bitwise identical to the sequential path.

pub mod bridge;
pub mod cli;
pub mod cme;
pub mod data;
pub mod datagen;
pub mod discrete;
pub mod error;
pub mod eval;
pub mod kernel;
pub mod linalg;
pub mod par;

pub use bridge::concept::{BridgeH0, LabelBridges};
pub use bridge::multidomain::{BridgeM0, DoubleCmeOperator};
pub use cme::{CmeEstimator, CmePattern};
pub use data::{SampleBatch, Var};
pub use error::{Error, Result};
pub use kernel::{KernelSet, KernelSpec};
pub use linalg::RidgeSolver;

/// Dense real matrix used throughout the crate.
pub type Mat = nalgebra::DMatrix<f64>;
/// Dense real column vector.
pub type Vector = nalgebra::DVector<f64>;
