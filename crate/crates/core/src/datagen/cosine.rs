//! Domain densities `p_r(u) = (1 + cos(r u)) / (2 pi)` on `[-pi, pi]` and
//! the residual `g(u) = cos((k_z + 1) u)`, which is orthogonal to the first
//! `k_z` domains but not to domain `k_z + 1`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::Mat;

pub const DEFAULT_GRID: usize = 4096;

#[derive(Clone, Debug, PartialEq)]
pub struct CosineTables {
    pub k_z: usize,
    /// uniform grid over `[-pi, pi]`, endpoints included
    pub grid: Vec<f64>,
    /// column `r - 1` holds `p_r` on the grid, `r = 1..=k_z + 1`
    pub densities: Mat,
    pub g: Vec<f64>,
}

/// Trapezoid rule on a uniform grid with spacing `h`.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (values[1..n - 1].iter().sum::<f64>() + 0.5 * (values[0] + values[n - 1])),
    }
}

impl CosineTables {
    pub fn new(k_z: usize, points: usize) -> Result<Self> {
        if k_z == 0 || points < 3 {
            return Err(Error::InvalidParameter(
                "cosine tables need k_z >= 1 and at least 3 grid points".into(),
            ));
        }
        let h = 2.0 * PI / (points - 1) as f64;
        let grid: Vec<f64> = (0..points).map(|i| -PI + h * i as f64).collect();
        let densities = Mat::from_fn(points, k_z + 1, |i, r| (1.0 + ((r + 1) as f64 * grid[i]).cos()) / (2.0 * PI));
        let g = grid.iter().map(|&u| ((k_z + 1) as f64 * u).cos()).collect();
        Ok(CosineTables {
            k_z,
            grid,
            densities,
            g,
        })
    }

    fn spacing(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    /// `int g(u) (1 + cos(r u)) du` by the trapezoid rule.
    pub fn orthogonality_integral(&self, r: usize) -> f64 {
        let v: Vec<f64> = self
            .grid
            .iter()
            .zip(&self.g)
            .map(|(&u, &g)| g * (1.0 + (r as f64 * u).cos()))
            .collect();
        trapezoid(&v, self.spacing())
    }

    /// `int p_r(u) du` for `r = 1..=k_z + 1`.
    pub fn density_mass(&self, r: usize) -> f64 {
        let col: Vec<f64> = self.densities.column(r - 1).iter().copied().collect();
        trapezoid(&col, self.spacing())
    }
}
