//! Finite-category identification and partial-identification bounds.
//!
//! Probability tables are column-stochastic: column `j` of `P(A | B)` is the
//! distribution of `A` given the `j`-th value of `B`. Bridge matrices solve
//! `P(Y | .) = M P(W | .)` by an SVD pseudo-inverse.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{pinv, sym_sqrt};
use crate::{Mat, Vector};

/// Relative singular-value cutoff of the pseudo-inverse.
pub const PINV_CUTOFF: f64 = 1e-10;

const STOCHASTIC_TOL: f64 = 1e-12;

/// Fails unless every column is a probability vector to within `1e-12`.
pub fn check_stochastic(name: &str, m: &Mat) -> Result<()> {
    for (j, col) in m.column_iter().enumerate() {
        if col.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "{name}: column {j} has a negative or non-finite entry"
            )));
        }
        let s = col.sum();
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidParameter(format!(
                "{name}: column {j} sums to {s}"
            )));
        }
    }
    Ok(())
}

/// A random column-stochastic `rows x cols` table with entries bounded away
/// from zero.
pub fn random_stochastic<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    let mut m = Mat::from_fn(rows, cols, |_, _| rng.random_range(0.05..1.0));
    for mut col in m.column_iter_mut() {
        let s = col.sum();
        col /= s;
    }
    m
}

/// Conditional probability tables of a fully discrete latent-shift model,
/// for a single covariate value `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteModel {
    /// `P(W | U)`, `k_W x k_U`.
    pub p_w_given_u: Mat,
    /// `P(Y | U, x)`, `k_Y x k_U`.
    pub p_y_given_u: Mat,
    /// `P(U | x, z_r)` for the source domains, `k_U x k_Z`.
    pub p_u_given_z: Mat,
}

impl DiscreteModel {
    pub fn new(p_w_given_u: Mat, p_y_given_u: Mat, p_u_given_z: Mat) -> Result<Self> {
        check_stochastic("P(W | U)", &p_w_given_u)?;
        check_stochastic("P(Y | U, x)", &p_y_given_u)?;
        check_stochastic("P(U | x, z)", &p_u_given_z)?;
        let k_u = p_w_given_u.ncols();
        if p_y_given_u.ncols() != k_u {
            return Err(Error::dim("P(Y | U, x) columns", k_u, p_y_given_u.ncols()));
        }
        if p_u_given_z.nrows() != k_u {
            return Err(Error::dim("P(U | x, z) rows", k_u, p_u_given_z.nrows()));
        }
        Ok(DiscreteModel {
            p_w_given_u,
            p_y_given_u,
            p_u_given_z,
        })
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, k_u: usize, k_w: usize, k_y: usize, k_z: usize) -> Self {
        DiscreteModel {
            p_w_given_u: random_stochastic(rng, k_w, k_u),
            p_y_given_u: random_stochastic(rng, k_y, k_u),
            p_u_given_z: random_stochastic(rng, k_u, k_z),
        }
    }

    pub fn k_u(&self) -> usize {
        self.p_w_given_u.ncols()
    }

    pub fn k_w(&self) -> usize {
        self.p_w_given_u.nrows()
    }

    pub fn k_y(&self) -> usize {
        self.p_y_given_u.nrows()
    }

    pub fn k_z(&self) -> usize {
        self.p_u_given_z.ncols()
    }

    /// `P_{1:k_Z}(W | x) = P(W | U) P_{1:k_Z}(U | x)`.
    pub fn p_w_given_z(&self) -> Mat {
        &self.p_w_given_u * &self.p_u_given_z
    }

    /// `P_{1:k_Z}(Y | x) = P(Y | U, x) P_{1:k_Z}(U | x)`.
    pub fn p_y_given_z(&self) -> Mat {
        &self.p_y_given_u * &self.p_u_given_z
    }

    /// `(P(W | x), P(Y | x))` in a domain with latent distribution `p_u`.
    pub fn domain_marginals(&self, p_u: &Vector) -> Result<(Vector, Vector)> {
        if p_u.len() != self.k_u() {
            return Err(Error::dim("latent distribution", self.k_u(), p_u.len()));
        }
        check_stochastic("P(U | x, z_new)", &Mat::from_column_slice(p_u.len(), 1, p_u.as_slice()))?;
        Ok((&self.p_w_given_u * p_u, &self.p_y_given_u * p_u))
    }

    /// Posterior `P(Y | W, x)` in source domain `r`: `P(Y | U, x) P(U | W, x, z_r)`.
    pub fn posterior_bridge(&self, r: usize) -> Result<Mat> {
        if r >= self.k_z() {
            return Err(Error::dim("domain index", self.k_z(), r));
        }
        let prior = self.p_u_given_z.column(r);
        let p_w = &self.p_w_given_u * prior;
        let mut p_u_given_w = Mat::zeros(self.k_u(), self.k_w());
        for w in 0..self.k_w() {
            for u in 0..self.k_u() {
                p_u_given_w[(u, w)] = self.p_w_given_u[(w, u)] * prior[u] / p_w[w];
            }
        }
        Ok(&self.p_y_given_u * p_u_given_w)
    }
}

/// A `k_Y x k_W` bridge matrix with the residual of its defining system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgeMatrix {
    pub values: Mat,
    /// `||P_Y - M P_W||_F` over the fitting columns.
    pub residual: f64,
    /// Numerical rank of the proxy table.
    pub rank: usize,
}

impl BridgeMatrix {
    pub fn apply(&self, p_w: &Vector) -> Result<Vector> {
        if p_w.len() != self.values.ncols() {
            return Err(Error::dim("bridge matrix input", self.values.ncols(), p_w.len()));
        }
        Ok(&self.values * p_w)
    }
}

fn solve_bridge(p_y: &Mat, p_w: &Mat) -> Result<BridgeMatrix> {
    if p_y.ncols() != p_w.ncols() {
        return Err(Error::dim("probability table columns", p_w.ncols(), p_y.ncols()));
    }
    if p_y.iter().chain(p_w.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("probability table"));
    }
    let (inv, rank) = pinv(p_w, PINV_CUTOFF)?;
    let values = p_y * inv;
    let residual = (p_y - &values * p_w).norm();
    Ok(BridgeMatrix {
        values,
        residual,
        rank,
    })
}

/// `H~0(Y, W, c) = P(Y | X, c) P(W | X, c)^+` for a fixed concept `c`; the
/// columns of both tables range over the values of `X`.
pub fn bridge_matrix_concept(p_y_given_x_c: &Mat, p_w_given_x_c: &Mat) -> Result<BridgeMatrix> {
    solve_bridge(p_y_given_x_c, p_w_given_x_c)
}

/// `M_{w,x} = P_{1:k_Z}(Y | x) P_{1:k_Z}(W | x)^+`; columns range over the
/// source domains.
pub fn bridge_matrix_multidomain(p_y_given_x_z: &Mat, p_w_given_x_z: &Mat) -> Result<BridgeMatrix> {
    solve_bridge(p_y_given_x_z, p_w_given_x_z)
}

/// `M~0(C, W, x) = P(C | U, x) P(W | U)^+` with `P(W | U)` supplied.
///
/// `p_w_given_x_c` holds `P(W | x, c)` for each concept value `c` and
/// `p_c_given_x` is `P(C | x)`. `P(C | U, x)` is recovered by inverting
/// `P(W | x, c) = P(W | U) P(U | x, c)` and applying Bayes' rule.
pub fn m_tilde_exact(p_w_given_x_c: &Mat, p_c_given_x: &Vector, p_w_given_u: &Mat) -> Result<BridgeMatrix> {
    let k_c = p_c_given_x.len();
    if p_w_given_x_c.ncols() != k_c {
        return Err(Error::dim("P(W | x, C) columns", k_c, p_w_given_x_c.ncols()));
    }
    if p_w_given_x_c.nrows() != p_w_given_u.nrows() {
        return Err(Error::dim("proxy categories", p_w_given_u.nrows(), p_w_given_x_c.nrows()));
    }
    let (inv_w, rank) = pinv(p_w_given_u, PINV_CUTOFF)?;
    if rank < p_w_given_u.ncols() {
        return Err(Error::NotApplicable(
            "columns of P(W | U) are linearly dependent".into(),
        ));
    }
    let p_u_given_xc = &inv_w * p_w_given_x_c;
    let p_u_given_x = &p_u_given_xc * p_c_given_x;
    let k_u = p_w_given_u.ncols();
    let p_c_given_u = Mat::from_fn(k_c, k_u, |c, u| {
        if p_u_given_x[u] > 0.0 {
            p_u_given_xc[(u, c)] * p_c_given_x[c] / p_u_given_x[u]
        } else {
            0.0
        }
    });
    let values = &p_c_given_u * &inv_w;
    let p_w_given_x = p_w_given_x_c * p_c_given_x;
    let residual = (p_c_given_x - &values * p_w_given_x).norm();
    Ok(BridgeMatrix {
        values,
        residual,
        rank,
    })
}

/// Interval on `E_q[Y | x]` for binary `W` and `C`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrechetBound {
    pub lower: f64,
    pub upper: f64,
    /// Admissible range of `q_{11 | x}`.
    pub q11_lower: f64,
    pub q11_upper: f64,
    /// `q11` values attaining `lower` and `upper`.
    pub q11_at_lower: f64,
    pub q11_at_upper: f64,
    /// `h(0,0) - h(0,1) - h(1,0) + h(1,1)`.
    pub interaction: f64,
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must lie in [0, 1], got {p}")))
    }
}

/// `E_q[Y | x]` as a function of `q11`; `h0[c][w]` indexes concept first,
/// matching the rows of the `(C, W)` probability table.
pub fn frechet_mean(h0: &[[f64; 2]; 2], pi_c: f64, pi_w: f64, q11: f64) -> f64 {
    h0[0][0] * (1.0 - pi_c - pi_w)
        + h0[0][1] * pi_w
        + h0[1][0] * pi_c
        + q11 * (h0[0][0] - h0[0][1] - h0[1][0] + h0[1][1])
}

/// Joint table `q[c][w]` with marginals `pi_c`, `pi_w` and `q[1][1] = q11`.
pub fn frechet_joint(pi_c: f64, pi_w: f64, q11: f64) -> [[f64; 2]; 2] {
    [[1.0 - pi_c - pi_w + q11, pi_w - q11], [pi_c - q11, q11]]
}

pub fn frechet_bound(h0: &[[f64; 2]; 2], pi_c: f64, pi_w: f64) -> Result<FrechetBound> {
    check_prob("pi_c", pi_c)?;
    check_prob("pi_w", pi_w)?;
    if h0.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("bridge table"));
    }
    let lo = (pi_c + pi_w - 1.0).max(0.0);
    let hi = pi_c.min(pi_w);
    let interaction = h0[0][0] - h0[0][1] - h0[1][0] + h0[1][1];
    let (at_lower, at_upper) = if interaction < 0.0 { (hi, lo) } else { (lo, hi) };
    Ok(FrechetBound {
        lower: frechet_mean(h0, pi_c, pi_w, at_lower),
        upper: frechet_mean(h0, pi_c, pi_w, at_upper),
        q11_lower: lo,
        q11_upper: hi,
        q11_at_lower: at_lower,
        q11_at_upper: at_upper,
        interaction,
    })
}

/// Interval `center +- rho * sum_i sigma_i(H~)` on `E[Y | x]` for a bilinear
/// bridge `w^T H c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianLinearBound {
    pub lower: f64,
    pub upper: f64,
    pub center: f64,
    pub half_width: f64,
    /// Singular values of `Sigma_w^{1/2} H Sigma_c^{1/2}`.
    pub singular_values: Vec<f64>,
}

impl GaussianLinearBound {
    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lower - tol && v <= self.upper + tol
    }
}

pub fn gaussian_linear_bound(
    h: &Mat,
    mu_w: &Vector,
    mu_c: &Vector,
    sigma_w: &Mat,
    sigma_c: &Mat,
    rho: f64,
) -> Result<GaussianLinearBound> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidParameter(format!("rho must lie in (0, 1], got {rho}")));
    }
    if mu_w.len() != h.nrows() {
        return Err(Error::dim("mu_w length", h.nrows(), mu_w.len()));
    }
    if mu_c.len() != h.ncols() {
        return Err(Error::dim("mu_c length", h.ncols(), mu_c.len()));
    }
    if sigma_w.nrows() != h.nrows() {
        return Err(Error::dim("Sigma_w size", h.nrows(), sigma_w.nrows()));
    }
    if sigma_c.nrows() != h.ncols() {
        return Err(Error::dim("Sigma_c size", h.ncols(), sigma_c.nrows()));
    }
    let h_tilde = sym_sqrt(sigma_w)? * h * sym_sqrt(sigma_c)?;
    let singular_values: Vec<f64> = h_tilde.singular_values().iter().copied().collect();
    let center = mu_w.dot(&(h * mu_c));
    let half_width = rho * singular_values.iter().sum::<f64>();
    Ok(GaussianLinearBound {
        lower: center - half_width,
        upper: center + half_width,
        center,
        half_width,
        singular_values,
    })
}

/// Column-normalized empirical frequency table `P(V | B)` from paired
/// category indices. Columns of unseen conditioning values are left zero.
pub fn frequency_table(values: &[usize], cond: &[usize], k_v: usize, k_b: usize) -> Result<Mat> {
    if values.len() != cond.len() {
        return Err(Error::dim("frequency table pairs", values.len(), cond.len()));
    }
    let mut m = Mat::zeros(k_v, k_b);
    for (&v, &b) in values.iter().zip(cond) {
        if v >= k_v || b >= k_b {
            return Err(Error::Data(format!("category ({v}, {b}) out of range")));
        }
        m[(v, b)] += 1.0;
    }
    for mut col in m.column_iter_mut() {
        let s = col.sum();
        if s > 0.0 {
            col /= s;
        }
    }
    Ok(m)
}
