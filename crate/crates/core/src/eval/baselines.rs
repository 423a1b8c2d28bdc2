//! Kernel ridge regression and the importance weights of the shift baselines.

use crate::error::{Error, Result};
use crate::kernel::{gram, KernelSpec};
use crate::linalg::{median_heuristic, RidgeSolver};
use crate::{Mat, Vector};

/// Lower and upper clip of importance weights.
pub const WEIGHT_CLIP: (f64, f64) = (1e-3, 1e3);

const LOGISTIC_PENALTY: f64 = 1e-4;
const LOGISTIC_MAX_ITER: usize = 100;

/// `f(x) = sum_i beta_i k(x_i, x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KrrModel {
    pub anchors: Mat,
    pub beta: Vector,
    pub kernel: KernelSpec,
    pub lambda: f64,
    /// training responses, kept so the fit can be reweighted
    pub targets: Vector,
}

impl KrrModel {
    pub fn predict(&self, x: &Mat) -> Result<Vector> {
        Ok(gram(&self.kernel, x, &self.anchors)? * &self.beta)
    }
}

fn normalized_weights(weights: Option<&[f64]>, n: usize) -> Result<Option<Vector>> {
    let Some(w) = weights else { return Ok(None) };
    if w.len() != n {
        return Err(Error::dim("sample weights", n, w.len()));
    }
    if w.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter("sample weights must be finite and nonnegative".into()));
    }
    let mean = w.iter().sum::<f64>() / n as f64;
    if mean <= 0.0 {
        return Err(Error::InvalidParameter("all sample weights are zero".into()));
    }
    Ok(Some(Vector::from_iterator(n, w.iter().map(|v| v / mean))))
}

/// Weighted kernel ridge regression from a precomputed Gram matrix.
///
/// Minimizes `(1/n) sum_i w_i (y_i - f(x_i))^2 + lambda ||f||^2` with the
/// weights rescaled to mean one, through the symmetric system
/// `beta = W^{1/2} (W^{1/2} K W^{1/2} + lambda n I)^{-1} W^{1/2} y`.
pub fn krr_coefficients(k: &Mat, y: &Vector, lambda: f64, weights: Option<&[f64]>) -> Result<Vector> {
    let n = y.len();
    if k.shape() != (n, n) {
        return Err(Error::dim("KRR Gram rows", n, k.nrows()));
    }
    if n == 0 {
        return Err(Error::DegenerateBatch("empty regression batch".into()));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("ridge penalty must be positive, got {lambda}")));
    }
    let reg = lambda * n as f64;
    match normalized_weights(weights, n)? {
        None => RidgeSolver::new(k, reg)?.solve_vec(y),
        Some(w) => {
            let s = w.map(f64::sqrt);
            let kw = Mat::from_fn(n, n, |i, j| s[i] * k[(i, j)] * s[j]);
            let rhs = s.component_mul(y);
            Ok(s.component_mul(&RidgeSolver::new(&kw, reg)?.solve_vec(&rhs)?))
        }
    }
}

pub fn baseline_krr(x: &Mat, y: &Vector, kernel: &KernelSpec, lambda: f64, weights: Option<&[f64]>) -> Result<KrrModel> {
    if x.nrows() != y.len() {
        return Err(Error::dim("KRR rows", x.nrows(), y.len()));
    }
    let k = gram(kernel, x, x)?;
    Ok(KrrModel {
        anchors: x.clone(),
        beta: krr_coefficients(&k, y, lambda, weights)?,
        kernel: kernel.clone(),
        lambda,
        targets: y.clone(),
    })
}

fn clip(v: f64) -> f64 {
    v.clamp(WEIGHT_CLIP.0, WEIGHT_CLIP.1)
}

fn with_bias(x: &Mat) -> Mat {
    Mat::from_fn(x.nrows(), x.ncols() + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] })
}

/// L2-penalized logistic regression by iteratively reweighted least squares.
/// `features` should include a bias column; the bias is not penalized.
pub fn logistic_irls(features: &Mat, labels: &[f64]) -> Result<Vector> {
    let (n, d) = features.shape();
    if labels.len() != n {
        return Err(Error::dim("logistic labels", n, labels.len()));
    }
    let mut beta = Vector::zeros(d);
    let mut pen = Mat::identity(d, d) * LOGISTIC_PENALTY;
    pen[(0, 0)] = 0.0;
    for _ in 0..LOGISTIC_MAX_ITER {
        let eta = features * &beta;
        let p = eta.map(crate::datagen::rng::sigmoid);
        let s = p.map(|v| (v * (1.0 - v)).max(1e-12));
        let grad = features.transpose() * (Vector::from_column_slice(labels) - &p) - &pen * &beta;
        let mut h = &pen + Mat::identity(d, d) * 1e-12;
        for i in 0..n {
            let r = features.row(i);
            h += r.transpose() * r * s[i];
        }
        let step = h
            .cholesky()
            .ok_or(Error::Factorization { jitter: 0.0 })?
            .solve(&grad);
        beta += &step;
        if step.amax() <= 1e-10 * (1.0 + beta.amax()) {
            return Ok(beta);
        }
    }
    Err(Error::NoConvergence(format!(
        "logistic regression after {LOGISTIC_MAX_ITER} iterations"
    )))
}

/// Density-ratio weights `q(x) / p(x)` for the source rows from a logistic
/// domain classifier on raw features plus bias, clipped to `[1e-3, 1e3]`.
pub fn covariate_shift_weights(source_x: &Mat, target_x: &Mat) -> Result<Vec<f64>> {
    let (ns, nt) = (source_x.nrows(), target_x.nrows());
    if ns == 0 || nt == 0 {
        return Err(Error::DegenerateBatch("covariate shift needs both domains".into()));
    }
    if source_x.ncols() != target_x.ncols() {
        return Err(Error::dim("covariate columns", source_x.ncols(), target_x.ncols()));
    }
    let d = source_x.ncols();
    let mut all = Mat::zeros(ns + nt, d);
    all.rows_mut(0, ns).copy_from(source_x);
    all.rows_mut(ns, nt).copy_from(target_x);
    let features = with_bias(&all);
    let labels: Vec<f64> = (0..ns + nt).map(|i| (i >= ns) as u8 as f64).collect();
    let beta = logistic_irls(&features, &labels)?;
    let prior = ns as f64 / nt as f64;
    Ok((0..ns)
        .map(|i| clip((features.row(i) * &beta)[0].exp() * prior))
        .collect())
}

fn kde(at: f64, points: &[f64], bw: f64) -> f64 {
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * bw * points.len() as f64);
    points
        .iter()
        .map(|p| (-0.5 * ((at - p) / bw).powi(2)).exp())
        .sum::<f64>()
        * norm
}

fn bandwidth(v: &[f64]) -> Result<f64> {
    if v.len() < 2 {
        return Ok(1.0);
    }
    median_heuristic(&Mat::from_column_slice(v.len(), 1, v), 0)
}

/// Label-shift weights `q(y) / p(y)` at the source labels `source_eval`.
///
/// `p` is estimated from `source_ref` and `q` from `target`: by class
/// frequencies when `discrete`, otherwise by Gaussian kernel density
/// estimates with median-heuristic bandwidths. Weights are clipped to
/// `[1e-3, 1e3]`.
pub fn label_shift_weights(source_eval: &[f64], source_ref: &[f64], target: &[f64], discrete: bool) -> Result<Vec<f64>> {
    if source_ref.is_empty() || target.is_empty() {
        return Err(Error::DegenerateBatch("label shift needs source and target labels".into()));
    }
    if discrete {
        let freq = |v: &[f64], c: f64| v.iter().filter(|&&y| y == c).count() as f64 / v.len() as f64;
        source_eval
            .iter()
            .map(|&y| {
                let p = freq(source_ref, y);
                if p == 0.0 {
                    return Err(Error::Data(format!("class {y} has no source reference rows")));
                }
                Ok(clip(freq(target, y) / p))
            })
            .collect()
    } else {
        let (bp, bq) = (bandwidth(source_ref)?, bandwidth(target)?);
        Ok(source_eval
            .iter()
            .map(|&y| {
                let p = kde(y, source_ref, bp);
                let q = kde(y, target, bq);
                if p > 0.0 {
                    clip(q / p)
                } else {
                    WEIGHT_CLIP.1
                }
            })
            .collect())
    }
}
