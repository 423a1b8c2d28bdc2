//! Versioned JSON model files.
//!
//! Layout (all matrices as nalgebra serializes them: column-major `data`
//! followed by `nrows`, `ncols`):
//!
//! ```text
//! format         "kbridge-model"
//! version        1
//! method         "proposed_concept" | "proposed_multidomain"
//! kernels        { x, w, c, z } kernel specs
//! lambda_stage1  stage-1 ridge penalty
//! lambda         stage-2 ridge penalty
//! classes        sorted class labels, or null for a regression bridge
//! bridges        one bridge per class: alpha, u, anchors_w, anchors_other,
//!                kernel_w, kernel_other, lambda1, lambda2
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use crate::bridge::concept::{fit_h0_multilabel, fit_h0_system, BridgeH0, LabelBridges};
use crate::bridge::multidomain::{fit_m0_multilabel, fit_m0_system, BridgeM0, DomainSolve};
use crate::bridge::KernelBridge;
use crate::cme::{fit_cme_joint_wc_given_x, fit_cme_w_given_x};
use crate::data::{SampleBatch, Var};
use crate::error::{Error, Result};
use crate::eval::scenario::{binary_scores, median_kernels, stage_batches, Method, MethodSettings};
use crate::kernel::KernelSet;
use crate::Vector;

pub const MODEL_FORMAT: &str = "kbridge-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub method: Method,
    pub kernels: KernelSet,
    pub lambda_stage1: f64,
    pub lambda: f64,
    pub classes: Option<Vec<f64>>,
    pub bridges: Vec<KernelBridge>,
}

/// Binary labels `{0, 1}` with both classes present.
pub fn looks_binary(y: &Vector) -> bool {
    y.iter().all(|&v| v == 0.0 || v == 1.0) && y.iter().any(|&v| v == 0.0) && y.iter().any(|&v| v == 1.0)
}

/// Fits a bridge on a pooled source training batch with fixed
/// hyperparameters. The method defaults to the concept bridge when `C` is
/// present; multi-domain stages are split within each domain.
pub fn fit_model(
    train: &SampleBatch,
    cfg: &ModelConfig,
    settings: &MethodSettings,
    classification: bool,
    seed: u64,
) -> Result<ModelFile> {
    let method = cfg.method.unwrap_or(if train.has(Var::C) {
        Method::ProposedConcept
    } else {
        Method::ProposedMultidomain
    });
    let concept = match method {
        Method::ProposedConcept => true,
        Method::ProposedMultidomain => false,
        m => return Err(Error::Config(format!("cannot fit method {} as a bridge", m.name()))),
    };
    if concept {
        train.require(&[Var::W, Var::C, Var::X, Var::Y])?;
    } else {
        train.require(&[Var::W, Var::X, Var::Y, Var::Z])?;
    }
    let (s1, s2) = stage_batches(train, settings.stage1_fraction, !concept)?;
    let kernels = median_kernels(&s1, &s2, cfg.scale, seed, concept)?;
    let (l1, l2) = (cfg.lambda_stage1, cfg.lambda);
    let (classes, bridges) = match (concept, classification) {
        (true, true) => {
            let b = fit_h0_multilabel(&s1, &s2, &kernels, l1, l2)?;
            (Some(b.classes), b.bridges.into_iter().map(|b| b.0).collect())
        }
        (true, false) => (None, vec![fit_h0_system(&s1, &s2, &kernels, l1, l2)?.0 .0]),
        (false, true) => {
            let b = fit_m0_multilabel(&s1, &s2, &kernels, l1, l2)?;
            (Some(b.classes), b.bridges.into_iter().map(|b| b.0).collect())
        }
        (false, false) => (
            None,
            vec![fit_m0_system(&s1, &s2, &kernels, l1, l2, DomainSolve::Auto)?.0 .0],
        ),
    };
    Ok(ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        method,
        kernels,
        lambda_stage1: l1,
        lambda: l2,
        classes,
        bridges,
    })
}

fn check_cols(what: &str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Data(format!(
            "{what} has {found} columns but the model was fitted with {expected}"
        )));
    }
    Ok(())
}

impl ModelFile {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: ModelFile = serde_json::from_str(text).map_err(|e| Error::Data(format!("model file: {e}")))?;
        if m.format != MODEL_FORMAT || m.version != MODEL_VERSION {
            return Err(Error::Data(format!(
                "unsupported model file {} version {}",
                m.format, m.version
            )));
        }
        if m.bridges.is_empty() {
            return Err(Error::Data("model file holds no bridges".into()));
        }
        if let Some(c) = &m.classes {
            if c.len() != m.bridges.len() {
                return Err(Error::Data("one bridge per class expected".into()));
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(p) = path.parent() {
            if !p.as_os_str().is_empty() {
                std::fs::create_dir_all(p)?;
            }
        }
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Adapts to the target batch (`W, C, X` for the concept bridge, `W, X`
    /// for the multi-domain bridge) and scores the query `X`. Two-class
    /// models return `1/2 + (s_1 - s_0) / 2`.
    pub fn predict(&self, target: &SampleBatch, query: &SampleBatch, target_lambda: f64) -> Result<Vector> {
        let concept = self.method == Method::ProposedConcept;
        if concept {
            target.require(&[Var::W, Var::C, Var::X])?;
        } else {
            target.require(&[Var::W, Var::X])?;
        }
        query.require(&[Var::X])?;
        let first = &self.bridges[0];
        check_cols("target W", first.anchors_w.ncols(), target.get(Var::W)?.ncols())?;
        self.kernels
            .w
            .validate(first.anchors_w.ncols())
            .map_err(|e| Error::Data(format!("proxy kernel: {e}")))?;
        let x_dims = query.get(Var::X)?.ncols();
        check_cols("target X", x_dims, target.get(Var::X)?.ncols())?;
        if concept {
            check_cols("target C", first.anchors_other.ncols(), target.get(Var::C)?.ncols())?;
            self.kernels
                .c
                .validate(first.anchors_other.ncols())
                .map_err(|e| Error::Data(format!("concept kernel: {e}")))?;
        } else {
            check_cols("query X", first.anchors_other.ncols(), x_dims)?;
        }
        let x = query.get(Var::X)?;
        if concept {
            let cme = fit_cme_joint_wc_given_x(target, &self.kernels, target_lambda)?;
            let bridges: Vec<BridgeH0> = self.bridges.iter().cloned().map(BridgeH0).collect();
            match &self.classes {
                Some(classes) => binary_or_argmax(
                    &LabelBridges {
                        classes: classes.clone(),
                        bridges,
                    }
                    .scores_full_adaptation(&cme, x)?,
                    classes,
                ),
                None => bridges[0].predict_full_adaptation(&cme, x),
            }
        } else {
            let cme = fit_cme_w_given_x(target, &self.kernels, target_lambda)?;
            let bridges: Vec<BridgeM0> = self.bridges.iter().cloned().map(BridgeM0).collect();
            match &self.classes {
                Some(classes) => binary_or_argmax(
                    &LabelBridges {
                        classes: classes.clone(),
                        bridges,
                    }
                    .scores_multidomain(&cme, x)?,
                    classes,
                ),
                None => bridges[0].predict_multidomain(&cme, x),
            }
        }
    }
}

/// Binary scores for two classes, otherwise the arg-max class label.
fn binary_or_argmax(scores: &crate::Mat, classes: &[f64]) -> Result<Vector> {
    if classes.len() == 2 {
        return binary_scores(scores);
    }
    let idx = crate::bridge::argmax_rows(scores);
    Ok(Vector::from_iterator(idx.len(), idx.into_iter().map(|k| classes[k])))
}
