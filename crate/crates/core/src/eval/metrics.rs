//! Scalar evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mse,
    Auroc,
    Accuracy,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::Auroc => "auroc",
            Metric::Accuracy => "accuracy",
        }
    }

    pub fn higher_is_better(self) -> bool {
        !matches!(self, Metric::Mse)
    }

    /// Score assigned to a failed fit.
    pub fn worst(self) -> f64 {
        if self.higher_is_better() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    }

    /// Whether `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        if self.higher_is_better() {
            a > b
        } else {
            a < b
        }
    }

    /// `preds` are real scores; accuracy thresholds them at 1/2.
    pub fn eval(self, preds: &[f64], targets: &[f64]) -> Result<f64> {
        match self {
            Metric::Mse => mse(preds, targets),
            Metric::Auroc => auroc(preds, targets),
            Metric::Accuracy => {
                let labels: Vec<f64> = preds.iter().map(|&p| (p >= 0.5) as u8 as f64).collect();
                accuracy(&labels, targets)
            }
        }
    }
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::dim("metric inputs", a, b));
    }
    if a == 0 {
        return Err(Error::DegenerateBatch("metric on empty input".into()));
    }
    Ok(())
}

pub fn mse(preds: &[f64], targets: &[f64]) -> Result<f64> {
    check_len(preds.len(), targets.len())?;
    Ok(preds.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / preds.len() as f64)
}

pub fn accuracy(preds: &[f64], targets: &[f64]) -> Result<f64> {
    check_len(preds.len(), targets.len())?;
    Ok(preds.iter().zip(targets).filter(|(p, t)| p == t).count() as f64 / preds.len() as f64)
}

/// Area under the ROC curve via the Mann-Whitney statistic with average
/// ranks for ties. Labels are `0` or `1`.
pub fn auroc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    check_len(scores.len(), labels.len())?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("AUROC scores"));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    let mut n_pos = 0usize;
    let mut rank_sum = 0.0;
    for (k, &l) in labels.iter().enumerate() {
        if l == 1.0 {
            n_pos += 1;
            rank_sum += ranks[k];
        } else if l != 0.0 {
            return Err(Error::Data(format!("AUROC label {l} is not 0 or 1")));
        }
    }
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateBatch("AUROC needs both classes".into()));
    }
    let np = n_pos as f64;
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}
