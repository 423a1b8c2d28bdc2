//! Conditional mean embeddings fitted by kernel ridge regression.
//!
//! An embedding of `W` given a conditioning value `q` is represented by its
//! anchor weights `b(q) = (K_cond + lambda * n * I)^{-1} Phi_cond(q)`, so that
//! `mu(q) = sum_i b_i(q) phi(w_i)`. The joint embedding of `(W, C)` given `X`
//! uses the same weights over paired anchors `(w_i, c_i)` and is never
//! expanded into an explicit tensor feature.

use serde::{Deserialize, Serialize};

use crate::data::{SampleBatch, Var};
use crate::error::{Error, Result};
use crate::kernel::{gram, KernelSet};
use crate::linalg::RidgeSolver;
use crate::{Mat, Vector};

/// Default ridge penalty when none is cross-validated.
pub const DEFAULT_LAMBDA: f64 = 1e-3;

/// Decade-spaced cross-validation grid for ridge penalties.
pub const LAMBDA_GRID: [f64; 6] = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmePattern {
    /// `mu_{W | c, x}` with conditioning Gram `K_X (.) K_C`.
    WGivenCX,
    /// `mu_{W | x}`.
    WGivenX,
    /// `mu_{W | x, z = r}` fitted on the rows of domain `r` only.
    WGivenXDomain(usize),
    /// `mu_{WC | x}` over paired `(w, c)` anchors.
    WCJointGivenX,
}

#[derive(Clone, Debug)]
pub struct CmeEstimator {
    pattern: CmePattern,
    kernels: KernelSet,
    lambda: f64,
    anchors_x: Mat,
    /// conditioning concepts (pattern `WGivenCX`) or embedded concepts
    /// (pattern `WCJointGivenX`)
    anchors_c: Option<Mat>,
    anchors_w: Mat,
    solver: RidgeSolver,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "ridge penalty must be positive, got {lambda}"
        )))
    }
}

fn fit(
    pattern: CmePattern,
    batch: &SampleBatch,
    kernels: &KernelSet,
    lambda: f64,
) -> Result<CmeEstimator> {
    check_lambda(lambda)?;
    let n = batch.n();
    if n == 0 {
        return Err(Error::DegenerateBatch("empty stage-1 batch".into()));
    }
    let x = batch.get(Var::X)?.clone();
    let w = batch.get(Var::W)?.clone();
    let conditions_on_c = pattern == CmePattern::WGivenCX;
    let c = match pattern {
        CmePattern::WGivenCX | CmePattern::WCJointGivenX => Some(batch.get(Var::C)?.clone()),
        _ => None,
    };
    let mut k = gram(&kernels.x, &x, &x)?;
    if conditions_on_c {
        let cm = c.as_ref().expect("concepts present");
        k.component_mul_assign(&gram(&kernels.c, cm, cm)?);
    }
    let solver = RidgeSolver::new(&k, lambda * n as f64)?;
    Ok(CmeEstimator {
        pattern,
        kernels: kernels.clone(),
        lambda,
        anchors_x: x,
        anchors_c: c,
        anchors_w: w,
        solver,
    })
}

/// Embedding of `W` given `(c, x)`.
pub fn fit_cme_w_given_cx(batch: &SampleBatch, kernels: &KernelSet, lambda: f64) -> Result<CmeEstimator> {
    fit(CmePattern::WGivenCX, batch, kernels, lambda)
}

/// Embedding of `W` given `x`.
pub fn fit_cme_w_given_x(batch: &SampleBatch, kernels: &KernelSet, lambda: f64) -> Result<CmeEstimator> {
    fit(CmePattern::WGivenX, batch, kernels, lambda)
}

/// Joint embedding of `(W, C)` given `x`.
pub fn fit_cme_joint_wc_given_x(
    batch: &SampleBatch,
    kernels: &KernelSet,
    lambda: f64,
) -> Result<CmeEstimator> {
    fit(CmePattern::WCJointGivenX, batch, kernels, lambda)
}

/// One `W | x` embedding per domain batch; entry `r` uses only the rows of
/// domain `r`, with penalty `lambda * n_r`.
pub fn fit_cme_per_domain(
    batches: &[SampleBatch],
    kernels: &KernelSet,
    lambda: f64,
) -> Result<Vec<CmeEstimator>> {
    batches
        .iter()
        .enumerate()
        .map(|(r, b)| {
            if b.is_empty() {
                return Err(Error::DegenerateBatch(format!("domain {r} has no rows")));
            }
            fit(CmePattern::WGivenXDomain(r), b, kernels, lambda)
        })
        .collect()
}

impl CmeEstimator {
    pub fn pattern(&self) -> CmePattern {
        self.pattern
    }

    pub fn kernels(&self) -> &KernelSet {
        &self.kernels
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n_anchors(&self) -> usize {
        self.anchors_w.nrows()
    }

    pub fn anchors_x(&self) -> &Mat {
        &self.anchors_x
    }

    pub fn anchors_w(&self) -> &Mat {
        &self.anchors_w
    }

    pub fn anchors_c(&self) -> Option<&Mat> {
        self.anchors_c.as_ref()
    }

    /// Conditioning Gram matrix `K_cond` over the anchors.
    pub fn cond_gram(&self) -> Result<Mat> {
        self.cross_cond(&self.anchors_x, self.anchors_c.as_ref().filter(|_| self.conditions_on_c()))
    }

    fn conditions_on_c(&self) -> bool {
        self.pattern == CmePattern::WGivenCX
    }

    fn cross_cond(&self, x: &Mat, c: Option<&Mat>) -> Result<Mat> {
        let mut k = gram(&self.kernels.x, &self.anchors_x, x)?;
        if self.conditions_on_c() {
            let c = c.ok_or_else(|| Error::MissingColumn("C (conditioning query)".into()))?;
            if c.nrows() != x.nrows() {
                return Err(Error::dim("cme query rows", x.nrows(), c.nrows()));
            }
            let ac = self.anchors_c.as_ref().expect("concepts present");
            k.component_mul_assign(&gram(&self.kernels.c, ac, c)?);
        }
        Ok(k)
    }

    /// Weights for a batch of queries, one column per query row.
    ///
    /// `c` is required for the `WGivenCX` pattern and ignored otherwise.
    pub fn weights(&self, x: &Mat, c: Option<&Mat>) -> Result<Mat> {
        let rhs = self.cross_cond(x, c)?;
        self.solver.solve(&rhs)
    }

    /// Weight vector for a single query.
    pub fn weights_at(&self, x: &[f64], c: Option<&[f64]>) -> Result<Vector> {
        let xm = Mat::from_row_slice(1, x.len(), x);
        let cm = c.map(|c| Mat::from_row_slice(1, c.len(), c));
        let w = self.weights(&xm, cm.as_ref())?;
        Ok(w.column(0).into_owned())
    }

    /// `(K_cond + lambda n I)^{-1} rhs` with the stored factorization.
    pub fn solve(&self, rhs: &Mat) -> Result<Mat> {
        self.solver.solve(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;
    use approx::assert_relative_eq;

    fn kernels() -> KernelSet {
        KernelSet {
            x: KernelSpec::gaussian(0.8),
            w: KernelSpec::gaussian(1.0),
            c: KernelSpec::Binary,
            z: KernelSpec::Binary,
        }
    }

    fn batch(n: usize, seed: f64) -> SampleBatch {
        let x = Mat::from_fn(n, 2, |i, j| ((i * 2 + j) as f64 * 0.73 + seed).sin());
        let w = Mat::from_fn(n, 1, |i, _| ((i as f64) * 1.37 + seed).cos());
        let c = Mat::from_fn(n, 1, |i, _| (i % 2) as f64);
        SampleBatch::new()
            .with(Var::X, x)
            .unwrap()
            .with(Var::W, w)
            .unwrap()
            .with(Var::C, c)
            .unwrap()
    }

    #[test]
    fn scalar_case_is_one_half() {
        let b = batch(1, 0.0);
        let x = b.get(Var::X).unwrap().row(0).iter().copied().collect::<Vec<_>>();
        let c = b.get(Var::C).unwrap().row(0).iter().copied().collect::<Vec<_>>();
        for est in [
            fit_cme_w_given_cx(&b, &kernels(), 1.0).unwrap(),
            fit_cme_w_given_x(&b, &kernels(), 1.0).unwrap(),
            fit_cme_joint_wc_given_x(&b, &kernels(), 1.0).unwrap(),
        ] {
            let w = est.weights_at(&x, Some(&c)).unwrap();
            assert_relative_eq!(w[0], 0.5, max_relative = 1e-15);
        }
    }

    #[test]
    fn small_lambda_approaches_indicator() {
        let b = batch(5, 0.3);
        let est = fit_cme_w_given_cx(&b, &kernels(), 1e-8).unwrap();
        let x = b.get(Var::X).unwrap().rows(2, 1).into_owned();
        let c = b.get(Var::C).unwrap().rows(2, 1).into_owned();
        let w = est.weights(&x, Some(&c)).unwrap();
        for i in 0..5 {
            let want = if i == 2 { 1.0 } else { 0.0 };
            assert!((w[(i, 0)] - want).abs() < 1e-4, "{i}: {}", w[(i, 0)]);
        }
    }

    #[test]
    fn normal_equations_hold_at_anchors() {
        let b = batch(6, 1.1);
        for est in [
            fit_cme_w_given_cx(&b, &kernels(), 0.05).unwrap(),
            fit_cme_w_given_x(&b, &kernels(), 0.05).unwrap(),
            fit_cme_joint_wc_given_x(&b, &kernels(), 0.05).unwrap(),
        ] {
            let k = est.cond_gram().unwrap();
            let bw = est
                .weights(b.get(Var::X).unwrap(), Some(b.get(Var::C).unwrap()))
                .unwrap();
            let lhs = (&k + Mat::identity(6, 6) * (0.05 * 6.0)) * &bw;
            assert!((lhs - &k).norm() <= 1e-8 * k.norm());
        }
    }

    #[test]
    fn duplicate_anchors_get_equal_weights() {
        let x = Mat::from_row_slice(3, 1, &[0.2, 0.2, 1.0]);
        let w = Mat::from_row_slice(3, 1, &[1.0, -1.0, 0.0]);
        let b = SampleBatch::new().with(Var::X, x).unwrap().with(Var::W, w).unwrap();
        let est = fit_cme_w_given_x(&b, &kernels(), 0.1).unwrap();
        let v = est.weights_at(&[0.5], None).unwrap();
        assert_relative_eq!(v[0], v[1], max_relative = 1e-12);
    }

    #[test]
    fn joint_weights_equal_w_given_x_weights() {
        let b = batch(6, 0.4);
        let a = fit_cme_joint_wc_given_x(&b, &kernels(), 0.01).unwrap();
        let c = fit_cme_w_given_x(&b, &kernels(), 0.01).unwrap();
        let q = Mat::from_row_slice(2, 2, &[0.1, 0.2, -0.5, 0.9]);
        assert_eq!(a.weights(&q, None).unwrap(), c.weights(&q, None).unwrap());
    }

    #[test]
    fn permuting_anchors_permutes_weights() {
        let b = batch(6, 0.9);
        let perm = [3, 0, 5, 1, 4, 2];
        let est = fit_cme_w_given_cx(&b, &kernels(), 0.01).unwrap();
        let estp = fit_cme_w_given_cx(&b.select(&perm), &kernels(), 0.01).unwrap();
        let q = Mat::from_row_slice(1, 2, &[0.3, -0.2]);
        let qc = Mat::from_row_slice(1, 1, &[1.0]);
        let w = est.weights(&q, Some(&qc)).unwrap();
        let wp = estp.weights(&q, Some(&qc)).unwrap();
        for (k, &p) in perm.iter().enumerate() {
            assert_relative_eq!(wp[(k, 0)], w[(p, 0)], epsilon = 1e-10);
        }
    }

    #[test]
    fn weights_are_continuous_in_query() {
        let b = batch(6, 0.2);
        let est = fit_cme_w_given_x(&b, &kernels(), 0.01).unwrap();
        let w0 = est.weights_at(&[0.3, 0.4], None).unwrap();
        let w1 = est.weights_at(&[0.3 + 1e-9, 0.4], None).unwrap();
        assert!((w0 - w1).amax() <= 1e-6);
    }

    #[test]
    fn per_domain_identical_batches_agree() {
        let b = batch(5, 0.0);
        let ests = fit_cme_per_domain(&[b.clone(), b.clone()], &kernels(), 0.01).unwrap();
        assert_eq!(ests[1].pattern(), CmePattern::WGivenXDomain(1));
        let single = fit_cme_w_given_x(&b, &kernels(), 0.01).unwrap();
        for t in 0..10 {
            let q = [t as f64 * 0.2 - 1.0, 0.5];
            let a = ests[0].weights_at(&q, None).unwrap();
            assert_eq!(a, ests[1].weights_at(&q, None).unwrap());
            assert_eq!(a, single.weights_at(&q, None).unwrap());
        }
    }

    #[test]
    fn per_domain_equals_pooled_binary_kernel() {
        // pooled: conditioning on (x, z) via the CX pattern with Z as "C"
        let b0 = batch(4, 0.0);
        let b1 = batch(4, 2.0);
        let lambda = 0.02;
        let per = fit_cme_per_domain(&[b0.clone(), b1.clone()], &kernels(), lambda).unwrap();
        let tag = |b: &SampleBatch, r: f64| {
            let x = b.get(Var::X).unwrap().clone();
            let w = b.get(Var::W).unwrap().clone();
            SampleBatch::new()
                .with(Var::X, x)
                .unwrap()
                .with(Var::W, w)
                .unwrap()
                .with(Var::C, Mat::from_element(4, 1, r))
                .unwrap()
        };
        let pooled = SampleBatch::concat(&[tag(&b0, 0.0), tag(&b1, 1.0)]).unwrap();
        // equal domain sizes: lambda_pooled * 8 = lambda * 4
        let est = fit_cme_w_given_cx(&pooled, &kernels(), lambda * 4.0 / 8.0).unwrap();
        for r in 0..2 {
            let q = Mat::from_row_slice(1, 2, &[0.25, -0.4]);
            let qc = Mat::from_element(1, 1, r as f64);
            let wp = est.weights(&q, Some(&qc)).unwrap();
            let wd = per[r].weights(&q, None).unwrap();
            for i in 0..4 {
                assert_relative_eq!(wp[(4 * r + i, 0)], wd[(i, 0)], epsilon = 1e-8);
                assert!(wp[(4 * (1 - r) + i, 0)].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn errors() {
        let b = batch(3, 0.0);
        assert!(fit_cme_w_given_x(&b, &kernels(), 0.0).is_err());
        assert!(fit_cme_w_given_x(&SampleBatch::new(), &kernels(), 0.1).is_err());
        let no_c = b.project(&[Var::X, Var::W]);
        assert!(matches!(
            fit_cme_w_given_cx(&no_c, &kernels(), 0.1),
            Err(Error::MissingColumn(_))
        ));
        let est = fit_cme_w_given_x(&b, &kernels(), 0.1).unwrap();
        assert!(est.weights_at(&[0.0], None).is_err());
        assert!(fit_cme_per_domain(&[b, SampleBatch::new()], &kernels(), 0.1).is_err());
    }
}
