//! Positive-semidefinite kernels and Gram matrices.
//!
//! The Gaussian kernel uses the convention
//! `k(x, x') = exp(-||x - x'||^2 / (2 l^2))`, so `k(v, v) = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{map_indexed, Execution};
use crate::Mat;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// Gaussian kernel on the whole row vector.
    Gaussian { length_scale: f64 },
    /// Delta kernel: 1 when the rows are identical, 0 otherwise.
    Binary,
    /// Product of one kernel per input column; factor `i` sees column `i` only.
    ColumnwiseProduct { factors: Vec<KernelSpec> },
}

impl KernelSpec {
    pub fn gaussian(length_scale: f64) -> Self {
        KernelSpec::Gaussian { length_scale }
    }

    /// Product of independent Gaussians, one length scale per column.
    pub fn columnwise_gaussian(length_scales: &[f64]) -> Self {
        KernelSpec::ColumnwiseProduct {
            factors: length_scales.iter().map(|&l| Self::gaussian(l)).collect(),
        }
    }

    /// Product of binary kernels over `dim` columns.
    pub fn columnwise_binary(dim: usize) -> Self {
        KernelSpec::ColumnwiseProduct {
            factors: vec![KernelSpec::Binary; dim],
        }
    }

    /// Checks parameters, and the input dimension when the kernel fixes one.
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            KernelSpec::Gaussian { length_scale } => {
                if !(length_scale.is_finite() && *length_scale > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "gaussian length scale must be positive, got {length_scale}"
                    )));
                }
                Ok(())
            }
            KernelSpec::Binary => Ok(()),
            KernelSpec::ColumnwiseProduct { factors } => {
                if factors.len() != dim {
                    return Err(Error::dim("columnwise kernel", factors.len(), dim));
                }
                factors.iter().try_for_each(|f| f.validate(1))
            }
        }
    }

    /// Evaluates the kernel on two rows of equal length.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            KernelSpec::Gaussian { length_scale } => {
                let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-sq / (2.0 * length_scale * length_scale)).exp()
            }
            KernelSpec::Binary => {
                if a == b {
                    1.0
                } else {
                    0.0
                }
            }
            KernelSpec::ColumnwiseProduct { factors } => factors
                .iter()
                .enumerate()
                .map(|(i, f)| f.eval(&a[i..i + 1], &b[i..i + 1]))
                .product(),
        }
    }
}

/// Kernel choices for every variable of the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSet {
    pub x: KernelSpec,
    pub w: KernelSpec,
    pub c: KernelSpec,
    pub z: KernelSpec,
}

impl Default for KernelSet {
    fn default() -> Self {
        KernelSet {
            x: KernelSpec::gaussian(1.0),
            w: KernelSpec::gaussian(1.0),
            c: KernelSpec::Binary,
            z: KernelSpec::Binary,
        }
    }
}

pub(crate) fn rows_of(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Gram matrix `[k(row_i, col_j)]` with the default execution policy.
pub fn gram(kernel: &KernelSpec, rows: &Mat, cols: &Mat) -> Result<Mat> {
    gram_with(Execution::default(), kernel, rows, cols)
}

/// Gram matrix with an explicit execution policy; work is split by output
/// column and each entry is computed identically on both paths.
pub fn gram_with(exec: Execution, kernel: &KernelSpec, rows: &Mat, cols: &Mat) -> Result<Mat> {
    if rows.ncols() != cols.ncols() {
        return Err(Error::dim("gram feature dimension", rows.ncols(), cols.ncols()));
    }
    kernel.validate(rows.ncols())?;
    if rows.iter().chain(cols.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gram input"));
    }
    let a = rows_of(rows);
    let b = rows_of(cols);
    let columns = map_indexed(exec, b.len(), |j| {
        a.iter().map(|ai| kernel.eval(ai, &b[j])).collect::<Vec<f64>>()
    });
    let data: Vec<f64> = columns.into_iter().flatten().collect();
    Ok(Mat::from_vec(a.len(), b.len(), data))
}

/// Self-Gram matrix of a batch.
pub fn gram_self(kernel: &KernelSpec, rows: &Mat) -> Result<Mat> {
    gram(kernel, rows, rows)
}

/// Feature-map evaluation `Phi_A(v) = [k(a_1, v), .., k(a_n, v)]` for one query row.
pub fn feature_map(kernel: &KernelSpec, anchors: &Mat, query: &[f64]) -> Result<Vec<f64>> {
    let q = Mat::from_row_slice(1, query.len(), query);
    Ok(gram(kernel, anchors, &q)?.as_slice().to_vec())
}
