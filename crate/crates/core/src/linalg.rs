//! Structured matrix products and regularized PSD solves.

use nalgebra::{Cholesky, Dyn};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::{Mat, Vector};

/// Elementwise (Schur) product.
pub fn hadamard(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.shape() != b.shape() {
        return Err(Error::dim(
            "hadamard shape",
            a.nrows() * a.ncols(),
            b.nrows() * b.ncols(),
        ));
    }
    Ok(a.component_mul(b))
}

/// Columnwise Khatri-Rao product: column `j` is `kron(a[:, j], b[:, j])`.
pub fn khatri_rao(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.ncols() != b.ncols() {
        return Err(Error::dim("khatri-rao columns", a.ncols(), b.ncols()));
    }
    let (na, nb) = (a.nrows(), b.nrows());
    Ok(Mat::from_fn(na * nb, a.ncols(), |r, j| {
        a[(r / nb, j)] * b[(r % nb, j)]
    }))
}

/// Kronecker product.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

/// Column-major vectorization.
pub fn vec_of(m: &Mat) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

/// Cholesky factorization of `matrix + reg * I`, with escalating diagonal
/// jitter when the factorization fails.
///
/// The jitter schedule starts at `1e-10 * trace(matrix) / n`, grows by 10x per
/// retry and gives up after three retries.
#[derive(Clone, Debug)]
pub struct RidgeSolver {
    chol: Cholesky<f64, Dyn>,
    reg: f64,
    jitter: f64,
}

const JITTER_RETRIES: usize = 3;

impl RidgeSolver {
    pub fn new(matrix: &Mat, reg: f64) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::dim("ridge solver square", matrix.nrows(), matrix.ncols()));
        }
        if !(reg >= 0.0 && reg.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "regularization must be nonnegative, got {reg}"
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ridge matrix"));
        }
        let n = matrix.nrows();
        let mut base = matrix.clone();
        // symmetrize to guard against round-off in products like G^T K G
        for i in 0..n {
            for j in 0..i {
                let s = 0.5 * (base[(i, j)] + base[(j, i)]);
                base[(i, j)] = s;
                base[(j, i)] = s;
            }
        }
        let scale = if n > 0 && matrix.trace() > 0.0 {
            matrix.trace() / n as f64
        } else {
            1.0
        };
        let mut jitter = 0.0;
        for attempt in 0..=JITTER_RETRIES {
            let mut m = base.clone();
            for i in 0..n {
                m[(i, i)] += reg + jitter;
            }
            if let Some(chol) = Cholesky::new(m) {
                if attempt > 0 {
                    log::debug!("ridge solve needed jitter {jitter:e}");
                }
                return Ok(RidgeSolver { chol, reg, jitter });
            }
            jitter = if attempt == 0 {
                1e-10 * scale
            } else {
                jitter * 10.0
            };
        }
        Err(Error::Factorization { jitter: jitter / 10.0 })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn reg(&self) -> f64 {
        self.reg
    }

    /// Diagonal jitter added on top of `reg` (0 when none was needed).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn solve(&self, rhs: &Mat) -> Result<Mat> {
        if rhs.nrows() != self.dim() {
            return Err(Error::dim("ridge solve rhs", self.dim(), rhs.nrows()));
        }
        Ok(self.chol.solve(rhs))
    }

    pub fn solve_vec(&self, rhs: &Vector) -> Result<Vector> {
        if rhs.len() != self.dim() {
            return Err(Error::dim("ridge solve rhs", self.dim(), rhs.len()));
        }
        Ok(self.chol.solve(rhs))
    }
}

/// Moore-Penrose pseudo-inverse via SVD; singular values below
/// `rel_cutoff * sigma_max` are treated as zero. Returns the inverse and the
/// numerical rank.
pub fn pinv(m: &Mat, rel_cutoff: f64) -> Result<(Mat, usize)> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pseudo-inverse input"));
    }
    if m.is_empty() {
        return Ok((Mat::zeros(m.ncols(), m.nrows()), 0));
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = rel_cutoff * smax;
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut out = Mat::zeros(m.ncols(), m.nrows());
    let mut rank = 0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > tol && s > 0.0 {
            rank += 1;
            out += (vt.row(k).transpose() * u.column(k).transpose()) / s;
        }
    }
    Ok((out, rank))
}

/// Symmetric square root of a symmetric positive-definite matrix.
pub fn sym_sqrt(m: &Mat) -> Result<Mat> {
    if !m.is_square() {
        return Err(Error::dim("sqrt square", m.nrows(), m.ncols()));
    }
    let eig = m.clone().symmetric_eigen();
    let smax = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if eig.eigenvalues.iter().any(|&l| l <= 1e-14 * smax.max(f64::MIN_POSITIVE)) {
        return Err(Error::InvalidParameter(
            "matrix is not positive definite".into(),
        ));
    }
    let d = Mat::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

const MEDIAN_CAP: usize = 1000;

/// Median of pairwise Euclidean distances between rows, over a seeded
/// subsample of at most 1000 rows. Falls back to 1.0 when all rows coincide.
pub fn median_heuristic(batch: &Mat, seed: u64) -> Result<f64> {
    let n = batch.nrows();
    if n < 2 {
        return Err(Error::DegenerateBatch(format!(
            "median heuristic needs at least 2 rows, got {n}"
        )));
    }
    let rows: Vec<usize> = if n > MEDIAN_CAP {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = index::sample(&mut rng, n, MEDIAN_CAP).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..n).collect()
    };
    let mut d = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
    for (a, &i) in rows.iter().enumerate() {
        for &j in &rows[a + 1..] {
            let sq: f64 = batch
                .row(i)
                .iter()
                .zip(batch.row(j).iter())
                .map(|(p, q)| (p - q) * (p - q))
                .sum();
            d.push(sq.sqrt());
        }
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    let med = if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    };
    if med > 0.0 && med.is_finite() {
        Ok(med)
    } else {
        Ok(1.0)
    }
}
