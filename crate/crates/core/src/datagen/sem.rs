//! Gaussian linear structural model with bilinear outcome
//! `Y = U^T A C + eps_y`.
//!
//! All variables are zero-mean jointly Gaussian given the independent inputs
//! `(U, eps_x, eps_w, eps_c)`, so conditional moments given `X = x` follow
//! from Gaussian conditioning.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rng::{normal, stream, Split, Stream};
use crate::data::{SampleBatch, Var};
use crate::error::{Error, Result};
use crate::{Mat, Vector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSem {
    /// `X = E U + eps_x`, `d_x x d_u`
    pub e: Mat,
    /// `W = D U + eps_w`, `d_u x d_u`, invertible
    pub d: Mat,
    /// `C = F X + G U + eps_c`
    pub f: Mat,
    pub g: Mat,
    /// `d_u x d_c`
    pub a: Mat,
    pub sigma_u: Mat,
    pub psi_x: Mat,
    pub psi_w: Mat,
    pub psi_c: Mat,
    pub psi_y: f64,
}

/// Moments of `(U, W, C)` given `X = x`.
#[derive(Clone, Debug, PartialEq)]
pub struct SemMoments {
    pub mu_u: Vector,
    pub mu_w: Vector,
    pub mu_c: Vector,
    pub sigma_w: Mat,
    pub sigma_c: Mat,
    /// `Cov(C, W | x)`, `d_c x d_w`
    pub sigma_cw: Mat,
    /// `Cov(U, C | x)`, `d_u x d_c`
    pub sigma_uc: Mat,
}

/// Samples with the latent kept alongside the observed batch.
#[derive(Clone, Debug, PartialEq)]
pub struct SemSample {
    pub u: Mat,
    pub batch: SampleBatch,
}

fn random_pd<R: Rng + ?Sized>(rng: &mut R, d: usize, floor: f64) -> Mat {
    let b = Mat::from_fn(d, d, |_, _| normal(rng));
    &b * b.transpose() / d as f64 + Mat::identity(d, d) * floor
}

fn check_pd(name: &str, m: &Mat, d: usize) -> Result<()> {
    if m.shape() != (d, d) {
        return Err(Error::Config(format!("{name} must be {d}x{d}, got {:?}", m.shape())));
    }
    if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
        return Err(Error::Config(format!("{name} is not symmetric")));
    }
    if m.clone().cholesky().is_none() {
        return Err(Error::Config(format!("{name} is not positive definite")));
    }
    Ok(())
}

impl GaussianSem {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.d.nrows(), self.e.nrows(), self.a.ncols())
    }

    /// A random well-conditioned model with `d_u = d_w`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, du: usize, dx: usize, dc: usize) -> Self {
        let mut d = Mat::from_fn(du, du, |_, _| 0.5 * normal(rng));
        d += Mat::identity(du, du) * 2.0;
        GaussianSem {
            e: Mat::from_fn(dx, du, |_, _| normal(rng)),
            d,
            f: Mat::from_fn(dc, dx, |_, _| 0.5 * normal(rng)),
            g: Mat::from_fn(dc, du, |_, _| normal(rng)),
            a: Mat::from_fn(du, dc, |_, _| normal(rng)),
            sigma_u: random_pd(rng, du, 0.5),
            psi_x: random_pd(rng, dx, 0.5),
            psi_w: random_pd(rng, du, 0.5),
            psi_c: random_pd(rng, dc, 0.5),
            psi_y: 0.25,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let du = self.sigma_u.nrows();
        let (dx, dc) = (self.e.nrows(), self.a.ncols());
        let shape = |name: &str, m: &Mat, r: usize, c: usize| {
            if m.shape() == (r, c) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be {r}x{c}, got {:?}", m.shape())))
            }
        };
        shape("E", &self.e, dx, du)?;
        shape("D", &self.d, du, du)?;
        shape("F", &self.f, dc, dx)?;
        shape("G", &self.g, dc, du)?;
        shape("A", &self.a, du, dc)?;
        check_pd("Sigma_U", &self.sigma_u, du)?;
        check_pd("Psi_X", &self.psi_x, dx)?;
        check_pd("Psi_W", &self.psi_w, du)?;
        check_pd("Psi_C", &self.psi_c, dc)?;
        if !(self.psi_y > 0.0 && self.psi_y.is_finite()) {
            return Err(Error::Config("Psi_Y must be positive".into()));
        }
        if self.d.clone().lu().try_inverse().is_none() {
            return Err(Error::Config("D must be invertible".into()));
        }
        Ok(())
    }

    /// `H = D^{-T} A`: with `E[W | U] = D U`, `E[W^T H c | U] = U^T A c`.
    pub fn bridge_matrix(&self) -> Result<Mat> {
        let inv = self
            .d
            .clone()
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::Config("D must be invertible".into()))?;
        Ok(inv.transpose() * &self.a)
    }

    /// Linear map from `(U, eps_x, eps_w, eps_c)` to `(U, X, W, C)` and the
    /// block-diagonal input covariance.
    fn joint(&self) -> (Mat, Mat) {
        let (du, dx, dc) = self.dims();
        let n_in = du + dx + du + dc;
        let mut l = Mat::zeros(n_in, n_in);
        let (ou, ox, ow, oc) = (0, du, du + dx, du + dx + du);
        l.view_mut((ou, 0), (du, du)).copy_from(&Mat::identity(du, du));
        l.view_mut((ox, 0), (dx, du)).copy_from(&self.e);
        l.view_mut((ox, ox), (dx, dx)).copy_from(&Mat::identity(dx, dx));
        l.view_mut((ow, 0), (du, du)).copy_from(&self.d);
        l.view_mut((ow, ow), (du, du)).copy_from(&Mat::identity(du, du));
        l.view_mut((oc, 0), (dc, du)).copy_from(&(&self.f * &self.e + &self.g));
        l.view_mut((oc, ox), (dc, dx)).copy_from(&self.f);
        l.view_mut((oc, oc), (dc, dc)).copy_from(&Mat::identity(dc, dc));
        let mut s = Mat::zeros(n_in, n_in);
        s.view_mut((ou, ou), (du, du)).copy_from(&self.sigma_u);
        s.view_mut((ox, ox), (dx, dx)).copy_from(&self.psi_x);
        s.view_mut((ow, ow), (du, du)).copy_from(&self.psi_w);
        s.view_mut((oc, oc), (dc, dc)).copy_from(&self.psi_c);
        (l, s)
    }

    pub fn conditional_moments(&self, x: &Vector) -> Result<SemMoments> {
        let (du, dx, dc) = self.dims();
        if x.len() != dx {
            return Err(Error::dim("SEM covariate", dx, x.len()));
        }
        let (l, s) = self.joint();
        let cov = &l * s * l.transpose();
        // reorder to (X | U, W, C)
        let rest: Vec<usize> = (0..du).chain(du + dx..du + dx + du + dc).collect();
        let xi: Vec<usize> = (du..du + dx).collect();
        let sxx = cov.select_rows(&xi).select_columns(&xi);
        let srx = cov.select_rows(&rest).select_columns(&xi);
        let srr = cov.select_rows(&rest).select_columns(&rest);
        let chol = sxx
            .cholesky()
            .ok_or_else(|| Error::Factorization { jitter: 0.0 })?;
        let mu = &srx * chol.solve(&Mat::from_column_slice(dx, 1, x.as_slice()));
        let cond = &srr - &srx * chol.solve(&srx.transpose());
        let mu = mu.column(0).into_owned();
        let (iu, iw, ic) = (0..du, du..2 * du, 2 * du..2 * du + dc);
        let block = |r: std::ops::Range<usize>, c: std::ops::Range<usize>| {
            cond.view((r.start, c.start), (r.len(), c.len())).into_owned()
        };
        Ok(SemMoments {
            mu_u: mu.rows(iu.start, du).into_owned(),
            mu_w: mu.rows(iw.start, du).into_owned(),
            mu_c: mu.rows(ic.start, dc).into_owned(),
            sigma_w: block(iw.clone(), iw.clone()),
            sigma_c: block(ic.clone(), ic.clone()),
            sigma_cw: block(ic.clone(), iw),
            sigma_uc: block(iu, ic),
        })
    }

    /// `E[Y | x] = mu_u^T A mu_c + sum_ij A_ij Cov(U_i, C_j | x)`.
    pub fn conditional_mean_y(&self, x: &Vector) -> Result<f64> {
        let m = self.conditional_moments(x)?;
        Ok(m.mu_u.dot(&(&self.a * &m.mu_c)) + self.a.component_mul(&m.sigma_uc).sum())
    }

    pub fn sample(&self, seed: u64, domain: u32, split: Split, n: usize) -> Result<SemSample> {
        self.validate()?;
        let (du, dx, dc) = self.dims();
        let chol = |m: &Mat| m.clone().cholesky().map(|c| c.l()).ok_or(Error::Factorization { jitter: 0.0 });
        let (lu, lx, lw, lc) = (chol(&self.sigma_u)?, chol(&self.psi_x)?, chol(&self.psi_w)?, chol(&self.psi_c)?);
        let draw = |var: Stream, l: &Mat, d: usize| {
            let mut r = stream(seed, domain, split, var);
            let z = Mat::from_fn(d, n, |_, _| normal(&mut r));
            l * z
        };
        let u = draw(Stream::U, &lu, du);
        let x = &self.e * &u + draw(Stream::X, &lx, dx);
        let w = &self.d * &u + draw(Stream::W, &lw, du);
        let c = &self.f * &x + &self.g * &u + draw(Stream::C, &lc, dc);
        let mut ry = stream(seed, domain, split, Stream::Y);
        let sy = self.psi_y.sqrt();
        let y = Vector::from_fn(n, |i, _| u.column(i).dot(&(&self.a * c.column(i))) + sy * normal(&mut ry));
        let batch = SampleBatch::new()
            .with(Var::X, x.transpose())?
            .with(Var::W, w.transpose())?
            .with(Var::C, c.transpose())?
            .with_y(y)?;
        Ok(SemSample {
            u: u.transpose(),
            batch,
        })
    }
}
