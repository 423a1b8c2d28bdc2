//! Experiment configuration files (TOML).
//!
//! ```toml
//! seed = 7
//! replicates = 5
//! out = "results"
//! methods = ["proposed_concept", "erm"]
//! shifts = [0.1, 0.5, 0.9]
//!
//! [scenario]
//! kind = "concept_classification"
//! pi_u = 0.1
//! target_pi_u = 0.9
//!
//! [sizes.source]
//! train = 2000
//! test = 1000
//!
//! [cv]
//! folds = 5
//! metric = "auroc"
//! grid = { scale = [0.5, 1.0, 2.0], lambda = [1e-4, 1e-3, 1e-2] }
//!
//! [model]
//! method = "proposed_concept"
//! lambda = 1e-3
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::{Scenario, Sizes};
use crate::error::{Error, Result};
use crate::eval::cv::CvPlan;
use crate::eval::metrics::Metric;
use crate::eval::scenario::{is_classification, Method, MethodSettings, RunSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// worker threads, 0 for all cores
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub shifts: Vec<f64>,
    pub scenario: Scenario,
    #[serde(default)]
    pub sizes: SizesConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvPlan>,
    #[serde(default)]
    pub settings: MethodSettings,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsConfig>,
}

fn one() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Per-split row counts; absent values take the scenario defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizesConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<Sizes>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Sizes>,
}

/// Fixed hyperparameters of `fit`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// `proposed_concept` or `proposed_multidomain`; chosen from the data when absent
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    /// multiplier of the median-heuristic length scales
    #[serde(default = "unit")]
    pub scale: f64,
    #[serde(default = "small")]
    pub lambda_stage1: f64,
    #[serde(default = "small")]
    pub lambda: f64,
}

fn unit() -> f64 {
    1.0
}

fn small() -> f64 {
    1e-3
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            method: None,
            scale: 1.0,
            lambda_stage1: 1e-3,
            lambda: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundsConfig {
    /// Binary `(C, W)` with table `h0[c][w]` and marginals `P(C = 1)`, `P(W = 1)`.
    Frechet { h0: [[f64; 2]; 2], pi_c: f64, pi_w: f64 },
    /// Bounds of the `gaussian_linear_sem` scenario at each point of `x`.
    GaussianLinear { x: Vec<Vec<f64>>, rho: f64 },
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario) -> Self {
        ExperimentConfig {
            seed: 0,
            replicates: 1,
            out: default_out(),
            workers: 0,
            methods: Vec::new(),
            shifts: Vec::new(),
            scenario,
            sizes: SizesConfig::default(),
            cv: None,
            settings: MethodSettings::default(),
            model: ModelConfig::default(),
            bounds: None,
        }
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        apply_overrides(&mut table, overrides)?;
        let cfg: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if let Some(cv) = &self.cv {
            if cv.folds < 2 {
                return Err(Error::Config(format!("cv.folds must be at least 2, got {}", cv.folds)));
            }
        }
        if let Some(m) = self.model.method {
            if !matches!(m, Method::ProposedConcept | Method::ProposedMultidomain) {
                return Err(Error::Config(format!("model.method cannot be {}", m.name())));
            }
        }
        for (name, v) in [
            ("model.scale", self.model.scale),
            ("model.lambda_stage1", self.model.lambda_stage1),
            ("model.lambda", self.model.lambda),
            ("settings.target_lambda", self.settings.target_lambda),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn source_sizes(&self) -> Sizes {
        self.sizes.source.unwrap_or(self.scenario.default_sizes().0)
    }

    pub fn target_sizes(&self) -> Sizes {
        self.sizes.target.unwrap_or(self.scenario.default_sizes().1)
    }

    /// The configured CV plan, or five folds of the scenario's primary metric
    /// seeded with the experiment seed.
    pub fn cv_plan(&self) -> CvPlan {
        self.cv.clone().unwrap_or_else(|| {
            let metric = if is_classification(&self.scenario) {
                Metric::Auroc
            } else {
                Metric::Mse
            };
            CvPlan::new(metric, self.seed)
        })
    }

    pub fn run_spec(&self) -> RunSpec {
        RunSpec {
            scenario: self.scenario.clone(),
            shifts: self.shifts.clone(),
            methods: self.methods.clone(),
            replicates: self.replicates,
            seed: self.seed,
            source_sizes: self.source_sizes(),
            target_sizes: self.target_sizes(),
            plan: self.cv_plan(),
            settings: self.settings.clone(),
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// `KEY=VALUE` sets a field of the `[scenario]` table (values parse as TOML,
/// falling back to a string); a bare `NAME` replaces the scenario kind and
/// drops its other fields.
fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let entry = table
            .entry("scenario")
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        let toml::Value::Table(sc) = entry else {
            return Err(Error::Config("`scenario` must be a table".into()));
        };
        match o.split_once('=') {
            Some((k, v)) => {
                let k = k.trim();
                if k.is_empty() {
                    return Err(Error::Config(format!("bad scenario override `{o}`")));
                }
                sc.insert(k.to_string(), parse_value(v.trim()));
            }
            None => {
                sc.clear();
                sc.insert("kind".into(), toml::Value::String(o.trim().into()));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
seed = 3
replicates = 2
methods = ["proposed_concept", "erm"]
shifts = [0.1, 0.9]

[scenario]
kind = "concept_classification"
pi_u = 0.1
target_pi_u = 0.9

[sizes.source]
train = 100
test = 50

[cv]
metric = "auroc"
grid = { lambda = [0.001, 0.01] }

[bounds]
kind = "frechet"
h0 = [[0.0, 1.0], [1.0, 0.5]]
pi_c = 0.3
pi_w = 0.6
"#;

    #[test]
    fn round_trip() {
        let cfg = ExperimentConfig::parse(FULL, &[]).unwrap();
        assert_eq!(cfg.source_sizes(), Sizes::new(100, 0, 50));
        assert_eq!(cfg.cv_plan().folds, 5);
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::parse(&text, &[]).unwrap(), cfg);
        let minimal = ExperimentConfig::new(Scenario::RegressionBernoulli {
            source_a: vec![0.1, 0.9],
            target_a: 0.3,
        });
        assert_eq!(ExperimentConfig::parse(&minimal.to_toml().unwrap(), &[]).unwrap(), minimal);
    }

    #[test]
    fn sem_scenario_round_trip() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let sem = crate::datagen::GaussianSem::random(&mut rng, 2, 3, 2);
        let mut cfg = ExperimentConfig::new(Scenario::GaussianLinearSem(sem));
        cfg.bounds = Some(BoundsConfig::GaussianLinear {
            x: vec![vec![0.0, 1.0, -1.0]],
            rho: 0.5,
        });
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml().unwrap(), &[]).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = format!("{FULL}\nextra = 1\n");
        assert!(matches!(ExperimentConfig::parse(&bad, &[]), Err(Error::Config(_))));
        let bad = FULL.replace("pi_u = 0.1", "pi_u = 0.1\nzeta = 2");
        assert!(ExperimentConfig::parse(&bad, &[]).is_err());
    }

    #[test]
    fn scenario_overrides() {
        let cfg = ExperimentConfig::parse(FULL, &["target_pi_u=0.4".into()]).unwrap();
        assert_eq!(cfg.scenario.target_shift(), Some(0.4));
        let cfg = ExperimentConfig::parse(FULL, &["regression_bernoulli".into(), "target_a=0.2".into()]).unwrap();
        assert_eq!(cfg.scenario.name(), "regression_bernoulli");
        assert!(ExperimentConfig::parse(FULL, &["target_pi_u=2.0".into()]).is_err());
    }
}
