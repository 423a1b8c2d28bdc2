//! Concept bridge `h0(w, c)` and the full-adaptation predictor.
//!
//! Stage 1 embeds `W` given `(c, x)` on a source batch `(W1, C1, X1)`. Stage 2
//! regresses `Y2` on the plug-in feature `phi(c) (x) mu_{W | c, x}` over a second
//! source batch `(C2, X2, Y2)`. The fitted objective is
//! `1/(2 n2) sum (y - <h, phi(c) (x) mu>)^2 + lambda2/2 ||h||^2`.
//!
//! On the target domain the prediction at `x` is `<h0, mu^q_{WC | x}>`, the
//! target joint embedding being represented by CME weights over target
//! anchors `(w_t, c_t)`.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use super::{argmax_rows, column_dots, KernelBridge, StageTwo};
use crate::cme::{fit_cme_w_given_cx, CmeEstimator, CmePattern};
use crate::data::{classes_of, one_hot, SampleBatch, Var};
use crate::error::{Error, Result};
use crate::kernel::{gram, KernelSet};
use crate::{Mat, Vector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BridgeH0(pub KernelBridge);

impl Deref for BridgeH0 {
    type Target = KernelBridge;
    fn deref(&self) -> &KernelBridge {
        &self.0
    }
}

/// One bridge per class of a one-hot encoded label; `classes` is sorted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelBridges<B> {
    pub classes: Vec<f64>,
    pub bridges: Vec<B>,
}

fn stage_two_h0(
    cme: &CmeEstimator,
    stage2: &SampleBatch,
    kernels: &KernelSet,
    lambda2: f64,
) -> Result<StageTwo> {
    stage2.require(&[Var::C, Var::X])?;
    if stage2.is_empty() {
        return Err(Error::DegenerateBatch("empty stage-2 batch".into()));
    }
    let c2 = stage2.get(Var::C)?;
    let gamma = cme.weights(stage2.get(Var::X)?, Some(c2))?;
    let k_w1 = gram(&kernels.w, cme.anchors_w(), cme.anchors_w())?;
    let k_c2 = gram(&kernels.c, c2, c2)?;
    StageTwo::new(gamma, &k_w1, &k_c2, lambda2)
}

fn assemble(
    cme: &CmeEstimator,
    stage2: &SampleBatch,
    kernels: &KernelSet,
    lambdas: (f64, f64),
    u: Vector,
    alpha: Mat,
) -> Result<BridgeH0> {
    Ok(BridgeH0(KernelBridge {
        alpha,
        u,
        anchors_w: cme.anchors_w().clone(),
        anchors_other: stage2.get(Var::C)?.clone(),
        kernel_w: kernels.w.clone(),
        kernel_other: kernels.c.clone(),
        lambda1: lambdas.0,
        lambda2: lambdas.1,
    }))
}

/// Fits `h0` and also returns the stage-1 embedding and stage-2 system.
pub fn fit_h0_system(
    stage1: &SampleBatch,
    stage2: &SampleBatch,
    kernels: &KernelSet,
    lambda1: f64,
    lambda2: f64,
) -> Result<(BridgeH0, CmeEstimator, StageTwo)> {
    let cme = fit_cme_w_given_cx(stage1, kernels, lambda1)?;
    let sys = stage_two_h0(&cme, stage2, kernels, lambda2)?;
    let (u, alpha) = sys.coefficients(&stage2.y()?)?;
    let bridge = assemble(&cme, stage2, kernels, (lambda1, lambda2), u, alpha)?;
    Ok((bridge, cme, sys))
}

/// Fits the concept bridge from stage-1 `(W, C, X)` and stage-2 `(C, X, Y)`.
pub fn fit_h0(
    stage1: &SampleBatch,
    stage2: &SampleBatch,
    kernels: &KernelSet,
    lambda1: f64,
    lambda2: f64,
) -> Result<BridgeH0> {
    fit_h0_system(stage1, stage2, kernels, lambda1, lambda2).map(|(b, _, _)| b)
}

/// One bridge per class; stage 1 and the stage-2 factorization are shared.
pub fn fit_h0_multilabel(
    stage1: &SampleBatch,
    stage2: &SampleBatch,
    kernels: &KernelSet,
    lambda1: f64,
    lambda2: f64,
) -> Result<LabelBridges<BridgeH0>> {
    let y = stage2.y()?;
    let classes = classes_of(&y);
    if classes.len() < 2 {
        return Err(Error::DegenerateBatch(
            "classification needs at least two classes".into(),
        ));
    }
    let cme = fit_cme_w_given_cx(stage1, kernels, lambda1)?;
    let sys = stage_two_h0(&cme, stage2, kernels, lambda2)?;
    let targets = one_hot(&y, &classes);
    let bridges = targets
        .column_iter()
        .map(|col| {
            let (u, alpha) = sys.coefficients(&col.into_owned())?;
            assemble(&cme, stage2, kernels, (lambda1, lambda2), u, alpha)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabelBridges { classes, bridges })
}

fn check_compatible(bridge: &BridgeH0, cme: &CmeEstimator) -> Result<()> {
    if cme.anchors_w().nrows() != bridge.n_proxy() || cme.kernels().w != bridge.kernel_w {
        return Err(Error::InvalidParameter(
            "embedding and bridge use different proxy anchors or kernels".into(),
        ));
    }
    Ok(())
}

impl BridgeH0 {
    /// Source fitted values `<h0, phi(c) (x) mu_{W | c, x}>` for a batch of
    /// `(c, x)` rows, using the stage-1 embedding the bridge was fitted with.
    pub fn fitted_values(&self, stage1_cme: &CmeEstimator, c: &Mat, x: &Mat) -> Result<Vector> {
        check_compatible(self, stage1_cme)?;
        if stage1_cme.pattern() != CmePattern::WGivenCX {
            return Err(Error::InvalidParameter(
                "fitted values need the W | c, x embedding".into(),
            ));
        }
        let b = stage1_cme.weights(x, Some(c))?;
        let kw = gram(&self.kernel_w, &self.anchors_w, stage1_cme.anchors_w())?;
        let kc = gram(&self.kernel_other, &self.anchors_other, c)?;
        Ok(column_dots(&(kw * b), &(&self.alpha * kc)))
    }

    /// Values `h0(w_t, c_t)` at the target anchors, the only bridge
    /// evaluations the full-adaptation predictor needs.
    fn anchor_values(&self, target: &CmeEstimator) -> Result<Vector> {
        if target.pattern() != CmePattern::WCJointGivenX {
            return Err(Error::InvalidParameter(
                "full adaptation needs the target joint (W, C) | x embedding".into(),
            ));
        }
        if target.kernels().w != self.kernel_w || target.kernels().c != self.kernel_other {
            return Err(Error::InvalidParameter(
                "target embedding kernels differ from the bridge kernels".into(),
            ));
        }
        let c = target.anchors_c().expect("joint embedding stores concepts");
        self.eval(target.anchors_w(), c)
    }

    /// Full-adaptation predictions `<h0, mu^q_{WC | x}>` for each row of `x_new`.
    pub fn predict_full_adaptation(&self, target: &CmeEstimator, x_new: &Mat) -> Result<Vector> {
        let f = self.anchor_values(target)?;
        let omega = target.weights(x_new, None)?;
        Ok(omega.transpose() * f)
    }
}

/// `<h0, phi(c) (x) mu_{W | c, x}>` at a single point.
pub fn h0_inner_with_cme(
    bridge: &BridgeH0,
    c: &[f64],
    x: &[f64],
    stage1_cme: &CmeEstimator,
) -> Result<f64> {
    let cm = Mat::from_row_slice(1, c.len(), c);
    let xm = Mat::from_row_slice(1, x.len(), x);
    Ok(bridge.fitted_values(stage1_cme, &cm, &xm)?[0])
}

/// Full-adaptation prediction at each row of `x_new`.
pub fn predict_full_adaptation(
    bridge: &BridgeH0,
    target_cme: &CmeEstimator,
    x_new: &Mat,
) -> Result<Vector> {
    bridge.predict_full_adaptation(target_cme, x_new)
}

impl LabelBridges<BridgeH0> {
    /// Per-class scores, one row per query and one column per class.
    pub fn scores_full_adaptation(&self, target: &CmeEstimator, x_new: &Mat) -> Result<Mat> {
        let omega_t = target.weights(x_new, None)?.transpose();
        let mut out = Mat::zeros(x_new.nrows(), self.bridges.len());
        for (k, b) in self.bridges.iter().enumerate() {
            let f = b.anchor_values(target)?;
            out.set_column(k, &(&omega_t * f));
        }
        Ok(out)
    }
}

/// Predicted class label for each row of `x_new`: the class whose bridge
/// scores highest, ties resolved to the lowest class index.
pub fn classify(
    bridges: &LabelBridges<BridgeH0>,
    target_cme: &CmeEstimator,
    x_new: &Mat,
) -> Result<Vec<usize>> {
    if bridges.bridges.len() < 2 {
        return Err(Error::InvalidParameter("need at least two class bridges".into()));
    }
    Ok(argmax_rows(&bridges.scores_full_adaptation(target_cme, x_new)?))
}
