//! Reference implementations used by the integration tests. Nothing here
//! calls into the crate's numerical code: kernels are evaluated by hand and
//! every linear system goes through a dense LU solve.

#![allow(dead_code)]

use kbridge::{Mat, Vector};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn normal_mat<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gauss(a: &[f64], b: &[f64], ls: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
    (-d2 / (2.0 * ls * ls)).exp()
}

pub fn gram_naive(rows: &Mat, cols: &Mat, ls: f64) -> Mat {
    let r: Vec<Vec<f64>> = rows.row_iter().map(|v| v.iter().copied().collect()).collect();
    let c: Vec<Vec<f64>> = cols.row_iter().map(|v| v.iter().copied().collect()).collect();
    Mat::from_fn(r.len(), c.len(), |i, j| gauss(&r[i], &c[j], ls))
}

/// `[1{a_i == b_j}]` on scalar columns.
pub fn binary_gram(a: &[usize], b: &[usize]) -> Mat {
    Mat::from_fn(a.len(), b.len(), |i, j| f64::from(u8::from(a[i] == b[j])))
}

pub fn lu_solve(a: &Mat, b: &Mat) -> Mat {
    a.clone().lu().solve(b).expect("oracle system is singular")
}

/// Explicit Kronecker product by index arithmetic.
pub fn kron_naive(a: &Mat, b: &Mat) -> Mat {
    let (p, q) = b.shape();
    Mat::from_fn(a.nrows() * p, a.ncols() * q, |r, c| a[(r / p, c / q)] * b[(r % p, c % q)])
}

/// Columnwise Khatri-Rao product by index arithmetic.
pub fn khatri_rao_naive(a: &Mat, b: &Mat) -> Mat {
    let p = b.nrows();
    Mat::from_fn(a.nrows() * p, a.ncols(), |r, j| a[(r / p, j)] * b[(r % p, j)])
}

/// Column-major vectorization: entry `i + rows * j` is `m[(i, j)]`.
pub fn vec_col_major(m: &Mat) -> Vector {
    let n = m.nrows();
    Vector::from_fn(n * m.ncols(), |k, _| m[(k % n, k / n)])
}

pub fn rel_err(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Stage-2 coefficients by dense minimization over `vec(alpha)`.
///
/// `Gamma` solves `(K_cond1 + l1 n1 I) Gamma = K_cond12`. With
/// `D = K_other2 kr (K_W1 Gamma)` and `E = K_other2 (x) K_W1`, the minimizer of
/// `1/(2 n2) ||y - D^T v||^2 + l2/2 v^T E v` satisfies
/// `(D D^T + l2 n2 E) v = D y`. `E` receives a small diagonal jitter so the
/// system is positive definite. Returns `alpha` as an `n1 x n2` matrix.
pub struct DenseProblem<'a> {
    pub k_cond1: &'a Mat,
    pub k_cond12: &'a Mat,
    pub k_w1: &'a Mat,
    pub k_other2: &'a Mat,
    pub y: &'a Vector,
    pub lambda1: f64,
    pub lambda2: f64,
}

pub const E_JITTER: f64 = 1e-12;

pub fn dense_alpha(p: &DenseProblem) -> Mat {
    let n1 = p.k_cond1.nrows();
    let n2 = p.k_other2.nrows();
    let reg1 = p.k_cond1 + Mat::identity(n1, n1) * (p.lambda1 * n1 as f64);
    let gamma = lu_solve(&reg1, p.k_cond12);
    let d = khatri_rao_naive(p.k_other2, &(p.k_w1 * &gamma));
    let mut e = kron_naive(p.k_other2, p.k_w1);
    for i in 0..e.nrows() {
        e[(i, i)] += E_JITTER;
    }
    let lhs = &d * d.transpose() + e * (p.lambda2 * n2 as f64);
    let rhs = &d * Mat::from_column_slice(n2, 1, p.y.as_slice());
    let v = lu_solve(&lhs, &rhs);
    Mat::from_fn(n1, n2, |i, j| v[(i + n1 * j, 0)])
}

/// `vec(alpha)^T (K_other (x) K_W) vec(alpha)`.
pub fn kron_norm_sq(alpha: &Mat, k_w: &Mat, k_other: &Mat) -> f64 {
    let v = vec_col_major(alpha);
    v.dot(&(kron_naive(k_other, k_w) * &v))
}

/// Spectral norm from the eigenvalues of `m^T m`.
pub fn op_norm(m: &Mat) -> f64 {
    (m.transpose() * m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0f64, |a, &b| a.max(b))
        .sqrt()
}

/// Symmetric square root `V diag(sqrt(l)) V^T` of a PSD matrix.
pub fn psd_sqrt(m: &Mat) -> Mat {
    let e = m.clone().symmetric_eigen();
    let d = Mat::from_diagonal(&e.eigenvalues.map(|l| l.max(0.0).sqrt()));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

/// Rank correlation of two equal-length samples without ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        for (k, &i) in idx.iter().enumerate() {
            r[i] = k as f64;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let m = (n - 1.0) / 2.0;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - m) * (y - m)).sum();
    let var: f64 = ra.iter().map(|x| (x - m) * (x - m)).sum();
    cov / var
}
