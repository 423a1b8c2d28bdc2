//! Multi-domain bridge `m0(w, x)`, its predictor, and the double conditional
//! mean embedding used for partial adaptation.
//!
//! The estimator is the concept-bridge closed form with the concept `C`
//! replaced by the covariate `X` and the covariate replaced by the domain
//! variable `Z`:
//! `Gamma = (K_X3 (.) K_Z3 + lambda3 n3 I)^{-1} (K_X34 (.) K_Z34)` and
//! `Sigma = (Gamma^T K_W3 Gamma) (.) K_X4`.
//!
//! With a binary kernel on a categorical `Z` the stage-1 system is block
//! diagonal by domain, and [`DomainSolve::PerDomain`] solves one block per
//! domain instead of the pooled system.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use super::concept::{BridgeH0, LabelBridges};
use super::{argmax_rows, column_dots, KernelBridge, StageTwo};
use crate::cme::{CmeEstimator, CmePattern};
use crate::data::{classes_of, one_hot, SampleBatch, Var};
use crate::error::{Error, Result};
use crate::kernel::{gram, KernelSet, KernelSpec};
use crate::linalg::RidgeSolver;
use crate::{Mat, Vector};

/// Most domains for which the per-domain split is chosen automatically.
pub const MAX_SPLIT_DOMAINS: usize = 64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainSolve {
    /// Single solve with the `K_X (.) K_Z` conditioning Gram.
    Pooled,
    /// One solve per domain; requires a binary kernel on a scalar `Z`.
    PerDomain,
    /// Per-domain when applicable and at most 64 domains, otherwise pooled.
    #[default]
    Auto,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BridgeM0(pub KernelBridge);

impl Deref for BridgeM0 {
    type Target = KernelBridge;
    fn deref(&self) -> &KernelBridge {
        &self.0
    }
}

fn check_lambda(name: &str, l: f64) -> Result<()> {
    if l > 0.0 && l.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {l}")))
    }
}

fn pooled_gamma(stage1: &SampleBatch, stage2: &SampleBatch, kernels: &KernelSet, lambda3: f64) -> Result<Mat> {
    let (x3, z3) = (stage1.get(Var::X)?, stage1.get(Var::Z)?);
    let (x4, z4) = (stage2.get(Var::X)?, stage2.get(Var::Z)?);
    let k = gram(&kernels.x, x3, x3)?.component_mul(&gram(&kernels.z, z3, z3)?);
    let rhs = gram(&kernels.x, x3, x4)?.component_mul(&gram(&kernels.z, z3, z4)?);
    RidgeSolver::new(&k, lambda3 * stage1.n() as f64)?.solve(&rhs)
}

fn per_domain_gamma(stage1: &SampleBatch, stage2: &SampleBatch, kernels: &KernelSet, lambda3: f64) -> Result<Mat> {
    let (x3, x4) = (stage1.get(Var::X)?, stage2.get(Var::X)?);
    let groups1 = stage1.domain_groups()?;
    let groups2 = stage2.domain_groups()?;
    let reg = lambda3 * stage1.n() as f64;
    let mut gamma = Mat::zeros(stage1.n(), stage2.n());
    for (z, rows) in &groups1 {
        let Some(cols) = groups2.get(z) else { continue };
        let xr = x3.select_rows(rows);
        let k = gram(&kernels.x, &xr, &xr)?;
        let rhs = gram(&kernels.x, &xr, &x4.select_rows(cols))?;
        let block = RidgeSolver::new(&k, reg)?.solve(&rhs)?;
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                gamma[(i, j)] = block[(a, b)];
            }
        }
    }
    Ok(gamma)
}

fn resolve(solve: DomainSolve, stage1: &SampleBatch, kernels: &KernelSet) -> Result<DomainSolve> {
    let splittable = kernels.z == KernelSpec::Binary && stage1.get(Var::Z)?.ncols() == 1;
    Ok(match solve {
        DomainSolve::PerDomain if !splittable => {
            return Err(Error::InvalidParameter(
                "per-domain stage 1 needs a binary kernel on a scalar domain index".into(),
            ))
        }
        DomainSolve::Auto => {
            if splittable && stage1.domain_groups()?.len() <= MAX_SPLIT_DOMAINS {
                DomainSolve::PerDomain
            } else {
                DomainSolve::Pooled
            }
        }
        s => s,
    })
}

fn stage_two_m0(
    stage1: &SampleBatch,
    stage2: &SampleBatch,
    kernels: &KernelSet,
    lambda3: f64,
    lambda4: f64,
    solve: DomainSolve,
) -> Result<StageTwo> {
    check_lambda("lambda3", lambda3)?;
    check_lambda("lambda4", lambda4)?;
    stage1.require(&[Var::W, Var::X, Var::Z])?;
    stage2.require(&[Var::X, Var::Z])?;
    if stage1.is_empty() || stage2.is_empty() {
        return Err(Error::DegenerateBatch("empty multi-domain batch".into()));
    }
    let gamma = match resolve(solve, stage1, kernels)? {
        DomainSolve::PerDomain => per_domain_gamma(stage1, stage2, kernels, lambda3)?,
        _ => pooled_gamma(stage1, stage2, kernels, lambda3)?,
    };
    let w3 = stage1.get(Var::W)?;
    let x4 = stage2.get(Var::X)?;
    let k_w3 = gram(&kernels.w, w3, w3)?;
    let k_x4 = gram(&kernels.x, x4, x4)?;
    StageTwo::new(gamma, &k_w3, &k_x4, lambda4)
}

fn assemble(stage1: &SampleBatch, stage2: &SampleBatch, kernels: &KernelSet, lambdas: (f64, f64), u: Vector, alpha: Mat) -> Result<BridgeM0> {
    Ok(BridgeM0(KernelBridge {
        alpha,
        u,
        anchors_w: stage1.get(Var::W)?.clone(),
        anchors_other: stage2.get(Var::X)?.clone(),
        kernel_w: kernels.w.clone(),
        kernel_other: kernels.x.clone(),
        lambda1: lambdas.0,
        lambda2: lambdas.1,
    }))
}

/// Fits `m0` and returns the stage-2 system alongside.
pub fn fit_m0_system(
    stage1: &SampleBatch,
    stage2: &SampleBatch,
    kernels: &KernelSet,
    lambda3: f64,
    lambda4: f64,
    solve: DomainSolve,
) -> Result<(BridgeM0, StageTwo)> {
    let sys = stage_two_m0(stage1, stage2, kernels, lambda3, lambda4, solve)?;
    let (u, alpha) = sys.coefficients(&stage2.y()?)?;
    Ok((assemble(stage1, stage2, kernels, (lambda3, lambda4), u, alpha)?, sys))
}

/// Fits the multi-domain bridge from stage-1 `(W, X, Z)` and stage-2 `(X, Y, Z)`.
pub fn fit_m0(
    stage1: &SampleBatch,
    stage2: &SampleBatch,
    kernels: &KernelSet,
    lambda3: f64,
    lambda4: f64,
) -> Result<BridgeM0> {
    fit_m0_system(stage1, stage2, kernels, lambda3, lambda4, DomainSolve::Auto).map(|r| r.0)
}

pub fn fit_m0_multilabel(
    stage1: &SampleBatch,
    stage2: &SampleBatch,
    kernels: &KernelSet,
    lambda3: f64,
    lambda4: f64,
) -> Result<LabelBridges<BridgeM0>> {
    let y = stage2.y()?;
    let classes = classes_of(&y);
    if classes.len() < 2 {
        return Err(Error::DegenerateBatch(
            "classification needs at least two classes".into(),
        ));
    }
    let sys = stage_two_m0(stage1, stage2, kernels, lambda3, lambda4, DomainSolve::Auto)?;
    let bridges = one_hot(&y, &classes)
        .column_iter()
        .map(|col| {
            let (u, alpha) = sys.coefficients(&col.into_owned())?;
            assemble(stage1, stage2, kernels, (lambda3, lambda4), u, alpha)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabelBridges { classes, bridges })
}

fn check_target(bridge: &KernelBridge, target: &CmeEstimator) -> Result<()> {
    if target.pattern() != CmePattern::WGivenX {
        return Err(Error::InvalidParameter(
            "prediction needs the target W | x embedding".into(),
        ));
    }
    if target.kernels().w != bridge.kernel_w {
        return Err(Error::InvalidParameter(
            "target embedding proxy kernel differs from the bridge".into(),
        ));
    }
    Ok(())
}

impl BridgeM0 {
    /// `<m0, mu^q_{W | x} (x) phi(x)>` for each row of `x_new`.
    pub fn predict_multidomain(&self, target: &CmeEstimator, x_new: &Mat) -> Result<Vector> {
        check_target(self, target)?;
        let omega = target.weights(x_new, None)?;
        let proxy = gram(&self.kernel_w, &self.anchors_w, target.anchors_w())? * omega;
        let cov = &self.alpha * gram(&self.kernel_other, &self.anchors_other, x_new)?;
        Ok(column_dots(&proxy, &cov))
    }
}

pub fn predict_multidomain(bridge: &BridgeM0, target_cme: &CmeEstimator, x_new: &Mat) -> Result<Vector> {
    bridge.predict_multidomain(target_cme, x_new)
}

impl LabelBridges<BridgeM0> {
    pub fn scores_multidomain(&self, target: &CmeEstimator, x_new: &Mat) -> Result<Mat> {
        let mut out = Mat::zeros(x_new.nrows(), self.bridges.len());
        for (k, b) in self.bridges.iter().enumerate() {
            out.set_column(k, &b.predict_multidomain(target, x_new)?);
        }
        Ok(out)
    }
}

pub fn classify_multidomain(
    bridges: &LabelBridges<BridgeM0>,
    target_cme: &CmeEstimator,
    x_new: &Mat,
) -> Result<Vec<usize>> {
    if bridges.bridges.len() < 2 {
        return Err(Error::InvalidParameter("need at least two class bridges".into()));
    }
    Ok(argmax_rows(&bridges.scores_multidomain(target_cme, x_new)?))
}

/// Estimated operator mapping `mu_{W | x} (x) phi(x)` to the embedding of
/// `C` given `x`, fitted on source `(W3, X3)` and `(C4, X4)`.
#[derive(Clone, Debug)]
pub struct DoubleCmeOperator {
    kernels: KernelSet,
    anchors_w3: Mat,
    anchors_x4: Mat,
    anchors_c4: Mat,
    /// `D = (K_X3 + lambda3 n3 I)^{-1} K_X34`: stage-1 weights at the X4 rows.
    d: Mat,
    k_tilde: Mat,
    solver: RidgeSolver,
    lambda3: f64,
    lambda4: f64,
}

/// Fits the double embedding with
/// `K~ = K_X4 (.) (D^T K_W3 D)` and output weights `(K~ + lambda4 n4 I)^{-1} v`.
pub fn fit_double_cme(
    stage1: &SampleBatch,
    stage2: &SampleBatch,
    kernels: &KernelSet,
    lambda3: f64,
    lambda4: f64,
) -> Result<DoubleCmeOperator> {
    check_lambda("lambda3", lambda3)?;
    check_lambda("lambda4", lambda4)?;
    stage1.require(&[Var::W, Var::X])?;
    stage2.require(&[Var::C, Var::X])?;
    if stage1.is_empty() || stage2.is_empty() {
        return Err(Error::DegenerateBatch("empty double-embedding batch".into()));
    }
    let (w3, x3) = (stage1.get(Var::W)?, stage1.get(Var::X)?);
    let x4 = stage2.get(Var::X)?;
    let k_x3 = gram(&kernels.x, x3, x3)?;
    let d = RidgeSolver::new(&k_x3, lambda3 * stage1.n() as f64)?.solve(&gram(&kernels.x, x3, x4)?)?;
    let k_w3 = gram(&kernels.w, w3, w3)?;
    let k_tilde = gram(&kernels.x, x4, x4)?.component_mul(&(d.transpose() * k_w3 * &d));
    let solver = RidgeSolver::new(&k_tilde, lambda4 * stage2.n() as f64)?;
    Ok(DoubleCmeOperator {
        kernels: kernels.clone(),
        anchors_w3: w3.clone(),
        anchors_x4: x4.clone(),
        anchors_c4: stage2.get(Var::C)?.clone(),
        d,
        k_tilde,
        solver,
        lambda3,
        lambda4,
    })
}

impl DoubleCmeOperator {
    pub fn k_tilde(&self) -> &Mat {
        &self.k_tilde
    }

    pub fn stage1_weights(&self) -> &Mat {
        &self.d
    }

    pub fn anchors_c(&self) -> &Mat {
        &self.anchors_c4
    }

    pub fn lambdas(&self) -> (f64, f64) {
        (self.lambda3, self.lambda4)
    }

    /// Output embedding weights over the C4 anchors, one column per row of
    /// `x_new`, applied to `mu^q_{W | x} (x) phi(x)`.
    pub fn apply(&self, target: &CmeEstimator, x_new: &Mat) -> Result<Mat> {
        if target.kernels().w != self.kernels.w {
            return Err(Error::InvalidParameter(
                "target embedding proxy kernel differs from the operator".into(),
            ));
        }
        let omega = target.weights(x_new, None)?;
        let proxy = self.d.transpose() * gram(&self.kernels.w, &self.anchors_w3, target.anchors_w())? * omega;
        let v = gram(&self.kernels.x, &self.anchors_x4, x_new)?.component_mul(&proxy);
        self.solver.solve(&v)
    }
}

/// `<h0, A[mu^q_{W | x} (x) phi(x)] (x) mu^q_{W | x}>` for each row of `x_new`.
pub fn predict_partial_adaptation(
    bridge: &BridgeH0,
    op: &DoubleCmeOperator,
    target_cme: &CmeEstimator,
    x_new: &Mat,
) -> Result<Vector> {
    check_target(bridge, target_cme)?;
    if op.kernels.c != bridge.kernel_other {
        return Err(Error::InvalidParameter(
            "operator concept kernel differs from the bridge".into(),
        ));
    }
    let omega = target_cme.weights(x_new, None)?;
    let beta = op.apply(target_cme, x_new)?;
    let proxy = gram(&bridge.kernel_w, &bridge.anchors_w, target_cme.anchors_w())? * omega;
    let concept = &bridge.alpha * gram(&bridge.kernel_other, &bridge.anchors_other, &op.anchors_c4)? * beta;
    Ok(column_dots(&proxy, &concept))
}
