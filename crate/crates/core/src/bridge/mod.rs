//! Two-stage kernel bridge estimators.
//!
//! Both bridges share one closed form. With stage-1 weights
//! `Gamma = (K_cond1 + lambda1 n1 I)^{-1} K_cond12` (one column per stage-2
//! row), `Sigma = (Gamma^T K_W1 Gamma) (.) K_other2` and
//! `u = (lambda2 n2 I + Sigma)^{-1} y2`, the coefficients are
//! `alpha = Gamma diag(u)`, i.e. `vec(alpha) = (I kr Gamma) u`. The bridge is
//! `h(w, o) = sum_ij alpha_ij k(w_i, w) k(o_j, o)`.
//!
//! The only linear system solved in stage 2 is `n2 x n2`.

pub mod concept;
pub mod multidomain;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{gram, KernelSpec};
use crate::linalg::RidgeSolver;
use crate::{Mat, Vector};

/// The stage-2 system of a fitted bridge.
#[derive(Clone, Debug)]
pub struct StageTwo {
    /// `n1 x n2` stage-1 weights evaluated at the stage-2 rows.
    pub gamma: Mat,
    /// `n2 x n2` matrix `(Gamma^T K_W Gamma) (.) K_other`.
    pub sigma: Mat,
    solver: RidgeSolver,
}

impl StageTwo {
    pub(crate) fn new(gamma: Mat, k_w1: &Mat, k_other2: &Mat, lambda2: f64) -> Result<Self> {
        if !(lambda2 > 0.0 && lambda2.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "stage-2 ridge penalty must be positive, got {lambda2}"
            )));
        }
        let n2 = gamma.ncols();
        let sigma = (gamma.transpose() * k_w1 * &gamma).component_mul(k_other2);
        let solver = RidgeSolver::new(&sigma, lambda2 * n2 as f64)?;
        Ok(StageTwo {
            gamma,
            sigma,
            solver,
        })
    }

    /// Returns `(u, alpha)` for one label vector.
    pub fn coefficients(&self, y: &Vector) -> Result<(Vector, Mat)> {
        let u = self.solver.solve_vec(y)?;
        let mut alpha = self.gamma.clone();
        for (j, mut col) in alpha.column_iter_mut().enumerate() {
            col *= u[j];
        }
        Ok((u, alpha))
    }

    /// Diagonal jitter applied when factorizing the stage-2 system.
    pub fn jitter(&self) -> f64 {
        self.solver.jitter()
    }
}

/// Fitted coefficients and anchors of a bridge `h(w, o)`, where `o` is the
/// concept `C` for the concept bridge and the covariate `X` for the
/// multi-domain bridge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelBridge {
    pub alpha: Mat,
    pub u: Vector,
    pub anchors_w: Mat,
    pub anchors_other: Mat,
    pub kernel_w: KernelSpec,
    pub kernel_other: KernelSpec,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl KernelBridge {
    /// Evaluates `h(w_t, o_t)` row by row.
    pub fn eval(&self, w: &Mat, other: &Mat) -> Result<Vector> {
        if w.nrows() != other.nrows() {
            return Err(Error::dim("bridge evaluation rows", w.nrows(), other.nrows()));
        }
        let kw = gram(&self.kernel_w, &self.anchors_w, w)?;
        let ko = gram(&self.kernel_other, &self.anchors_other, other)?;
        Ok(column_dots(&kw, &(&self.alpha * ko)))
    }

    /// `||h||^2 = tr(alpha^T K_W alpha K_other)`.
    pub fn norm_sq(&self) -> Result<f64> {
        let kw = gram(&self.kernel_w, &self.anchors_w, &self.anchors_w)?;
        let ko = gram(&self.kernel_other, &self.anchors_other, &self.anchors_other)?;
        Ok((self.alpha.transpose() * kw * &self.alpha * ko).trace())
    }

    pub fn n_proxy(&self) -> usize {
        self.anchors_w.nrows()
    }

    pub fn n_other(&self) -> usize {
        self.anchors_other.nrows()
    }
}

/// `out[t] = sum_i a[i, t] * b[i, t]`.
pub(crate) fn column_dots(a: &Mat, b: &Mat) -> Vector {
    Vector::from_iterator(
        a.ncols(),
        a.column_iter().zip(b.column_iter()).map(|(p, q)| p.dot(&q)),
    )
}

/// Index of the largest score in each row; ties go to the lowest index.
pub fn argmax_rows(scores: &Mat) -> Vec<usize> {
    scores
        .row_iter()
        .map(|r| {
            let mut best = 0;
            for k in 1..r.len() {
                if r[k] > r[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}
