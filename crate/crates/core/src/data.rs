//! Sample batches: named real-valued column blocks over `{X, W, C, Y, Z}`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{Mat, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Var {
    X,
    W,
    C,
    Y,
    Z,
}

impl Var {
    pub const ALL: [Var; 5] = [Var::X, Var::W, Var::C, Var::Y, Var::Z];

    /// Column-name prefix in the CSV schema.
    pub fn prefix(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::W => "w",
            Var::C => "c",
            Var::Y => "y",
            Var::Z => "z",
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Var::X => "X",
            Var::W => "W",
            Var::C => "C",
            Var::Y => "Y",
            Var::Z => "Z",
        })
    }
}

/// A batch of i.i.d. rows. Every present block has the same number of rows;
/// `Y` and `Z` are single columns, and `Z` holds integer domain indices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleBatch {
    blocks: BTreeMap<Var, Mat>,
    n: usize,
}

impl SampleBatch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, var: Var, block: Mat) -> Result<Self> {
        self.insert(var, block)?;
        Ok(self)
    }

    pub fn insert(&mut self, var: Var, block: Mat) -> Result<()> {
        if matches!(var, Var::Y | Var::Z) && block.ncols() != 1 {
            return Err(Error::dim("single-column variable", 1, block.ncols()));
        }
        if !self.blocks.is_empty() && block.nrows() != self.n {
            return Err(Error::dim("batch rows", self.n, block.nrows()));
        }
        self.n = block.nrows();
        self.blocks.insert(var, block);
        Ok(())
    }

    pub fn with_y(self, y: Vector) -> Result<Self> {
        let m = Mat::from_column_slice(y.len(), 1, y.as_slice());
        self.with(Var::Y, m)
    }

    pub fn with_z(self, z: &[usize]) -> Result<Self> {
        let m = Mat::from_iterator(z.len(), 1, z.iter().map(|&v| v as f64));
        self.with(Var::Z, m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn has(&self, var: Var) -> bool {
        self.blocks.contains_key(&var)
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.blocks.keys().copied()
    }

    pub fn get(&self, var: Var) -> Result<&Mat> {
        self.blocks
            .get(&var)
            .ok_or_else(|| Error::MissingColumn(var.to_string()))
    }

    pub fn y(&self) -> Result<Vector> {
        let m = self.get(Var::Y)?;
        Ok(Vector::from_column_slice(m.as_slice()))
    }

    pub fn z(&self) -> Result<Vec<usize>> {
        Ok(self
            .get(Var::Z)?
            .iter()
            .map(|&v| v.round().max(0.0) as usize)
            .collect())
    }

    /// Fails unless every listed variable is present.
    pub fn require(&self, vars: &[Var]) -> Result<()> {
        for &v in vars {
            self.get(v)?;
        }
        Ok(())
    }

    /// Rows at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> SampleBatch {
        let blocks = self
            .blocks
            .iter()
            .map(|(&v, m)| (v, m.select_rows(idx)))
            .collect();
        SampleBatch {
            blocks,
            n: idx.len(),
        }
    }

    /// First `k` rows and the remainder.
    pub fn split_at(&self, k: usize) -> (SampleBatch, SampleBatch) {
        let k = k.min(self.n);
        let head: Vec<usize> = (0..k).collect();
        let tail: Vec<usize> = (k..self.n).collect();
        (self.select(&head), self.select(&tail))
    }

    /// Keeps only the listed variables.
    pub fn project(&self, vars: &[Var]) -> SampleBatch {
        let blocks = self
            .blocks
            .iter()
            .filter(|(v, _)| vars.contains(v))
            .map(|(&v, m)| (v, m.clone()))
            .collect();
        SampleBatch { blocks, n: self.n }
    }

    /// Row-wise concatenation; all batches must carry the same variables.
    pub fn concat(batches: &[SampleBatch]) -> Result<SampleBatch> {
        let Some(first) = batches.first() else {
            return Ok(SampleBatch::new());
        };
        let vars: Vec<Var> = first.vars().collect();
        let mut out = SampleBatch::new();
        for &v in &vars {
            let parts: Vec<&Mat> = batches.iter().map(|b| b.get(v)).collect::<Result<_>>()?;
            let cols = parts[0].ncols();
            let rows: usize = parts.iter().map(|m| m.nrows()).sum();
            let mut m = Mat::zeros(rows, cols);
            let mut r = 0;
            for p in parts {
                if p.ncols() != cols {
                    return Err(Error::dim("concat columns", cols, p.ncols()));
                }
                m.rows_mut(r, p.nrows()).copy_from(p);
                r += p.nrows();
            }
            out.insert(v, m)?;
        }
        Ok(out)
    }

    /// Row indices grouped by domain index, domains in ascending order.
    pub fn domain_groups(&self) -> Result<BTreeMap<usize, Vec<usize>>> {
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, z) in self.z()?.into_iter().enumerate() {
            groups.entry(z).or_default().push(i);
        }
        Ok(groups)
    }
}

/// Sorted distinct values of a label vector.
pub fn classes_of(y: &Vector) -> Vec<f64> {
    let mut c: Vec<f64> = y.iter().copied().collect();
    c.sort_by(f64::total_cmp);
    c.dedup();
    c
}

/// One indicator column per class, in the order of `classes`.
pub fn one_hot(y: &Vector, classes: &[f64]) -> Mat {
    Mat::from_fn(y.len(), classes.len(), |i, k| {
        if y[i] == classes[k] {
            1.0
        } else {
            0.0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch() -> SampleBatch {
        SampleBatch::new()
            .with(Var::X, Mat::from_row_slice(3, 2, &[1., 2., 3., 4., 5., 6.]))
            .unwrap()
            .with_y(Vector::from_vec(vec![0., 1., 0.]))
            .unwrap()
            .with_z(&[0, 1, 0])
            .unwrap()
    }

    #[test]
    fn row_count_enforced() {
        let b = batch();
        assert!(b.clone().with(Var::W, Mat::zeros(2, 1)).is_err());
        assert!(b.with(Var::Y, Mat::zeros(3, 2)).is_err());
    }

    #[test]
    fn select_and_groups() {
        let b = batch();
        let s = b.select(&[2, 0]);
        assert_eq!(s.get(Var::X).unwrap()[(0, 0)], 5.0);
        let g = b.domain_groups().unwrap();
        assert_eq!(g[&0], vec![0, 2]);
        assert_eq!(g[&1], vec![1]);
    }

    #[test]
    fn concat_roundtrip() {
        let b = batch();
        let (h, t) = b.split_at(1);
        assert_eq!(SampleBatch::concat(&[h, t]).unwrap(), b);
    }

    #[test]
    fn missing_column() {
        assert!(matches!(batch().get(Var::W), Err(Error::MissingColumn(_))));
    }

    #[test]
    fn one_hot_sorted() {
        let y = Vector::from_vec(vec![2., 0., 2.]);
        let c = classes_of(&y);
        assert_eq!(c, vec![0., 2.]);
        let o = one_hot(&y, &c);
        assert_eq!(o, Mat::from_row_slice(3, 2, &[0., 1., 1., 0., 0., 1.]));
    }
}
