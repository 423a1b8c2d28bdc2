//! Synthetic data-generating processes of the simulation studies.
//!
//! All sample-based scenarios share one binary latent `U` (except the Beta
//! regression task) and are generated domain by domain. Source batches carry
//! their domain index in `Z`; the target domain gets the next index.

pub mod cosine;
pub mod rng;
pub mod sem;

use serde::{Deserialize, Serialize};

use crate::data::{SampleBatch, Var};
use crate::error::{Error, Result};
use crate::{Mat, Vector};
use rand_distr::{Beta, Distribution};
use rng::{bernoulli, normal, sigmoid, stream, Split, Stream, TARGET_STREAM};

pub use cosine::CosineTables;
pub use sem::{GaussianSem, SemMoments, SemSample};

/// Rows per split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sizes {
    pub train: usize,
    #[serde(default)]
    pub val: usize,
    #[serde(default)]
    pub test: usize,
}

impl Sizes {
    pub const fn new(train: usize, val: usize, test: usize) -> Self {
        Sizes { train, val, test }
    }

    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    /// One source domain with `P(U = 1) = pi_u` and a target with
    /// `Q(U = 1) = target_pi_u`.
    ConceptClassification {
        pi_u: f64,
        target_pi_u: f64,
        #[serde(default = "one")]
        a_w: f64,
    },
    /// Either a numbered task (1, 2 or 3) or explicit source `P(U = 0)` values
    /// and target `Q(U = 0)`.
    MultiDomainClassification {
        #[serde(default)]
        task: Option<u8>,
        #[serde(default)]
        source_p_u0: Option<Vec<f64>>,
        #[serde(default)]
        target_p_u0: Option<f64>,
        #[serde(default = "one")]
        a_w: f64,
    },
    /// `U ~ Ber(a)` per domain, `Y = (2U - 1) X`.
    RegressionBernoulli {
        #[serde(default = "default_bernoulli_sources")]
        source_a: Vec<f64>,
        target_a: f64,
    },
    /// `U ~ Beta(a, b)` per domain, `Y = (2U - 1) X`.
    RegressionBeta {
        #[serde(default = "default_beta_sources")]
        source_ab: Vec<[f64; 2]>,
        target_ab: [f64; 2],
    },
    GaussianLinearSem(GaussianSem),
    CosineCounterexample {
        k_z: usize,
        #[serde(default = "default_grid")]
        grid: usize,
    },
}

fn one() -> f64 {
    1.0
}

fn default_bernoulli_sources() -> Vec<f64> {
    vec![0.1, 0.9]
}

fn default_beta_sources() -> Vec<[f64; 2]> {
    vec![[2.0, 4.0], [4.0, 2.0]]
}

fn default_grid() -> usize {
    cosine::DEFAULT_GRID
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::ConceptClassification { .. } => "concept_classification",
            Scenario::MultiDomainClassification { .. } => "multi_domain_classification",
            Scenario::RegressionBernoulli { .. } => "regression_bernoulli",
            Scenario::RegressionBeta { .. } => "regression_beta",
            Scenario::GaussianLinearSem(_) => "gaussian_linear_sem",
            Scenario::CosineCounterexample { .. } => "cosine_counterexample",
        }
    }

    /// Default sample sizes of the simulation studies: `(source, target)`.
    pub fn default_sizes(&self) -> (Sizes, Sizes) {
        match self {
            Scenario::ConceptClassification { .. } => (Sizes::new(7000, 1000, 2000), Sizes::new(7000, 1000, 2000)),
            Scenario::MultiDomainClassification { .. } => (Sizes::new(3200, 0, 1000), Sizes::new(9600, 0, 1000)),
            _ => (Sizes::new(2000, 0, 1000), Sizes::new(2000, 0, 1000)),
        }
    }

    /// Replaces the target shift parameter; the value is `Q(U = 1)` for the
    /// concept task, `Q(U = 0)` for the multi-domain classification tasks,
    /// `a` for the Bernoulli regression and the first Beta parameter (with
    /// `b = 6 - a`) for the Beta regression.
    pub fn with_target_shift(&self, shift: f64) -> Result<Scenario> {
        let mut s = self.clone();
        match &mut s {
            Scenario::ConceptClassification { target_pi_u, .. } => *target_pi_u = shift,
            Scenario::MultiDomainClassification { target_p_u0, .. } => *target_p_u0 = Some(shift),
            Scenario::RegressionBernoulli { target_a, .. } => *target_a = shift,
            Scenario::RegressionBeta { target_ab, .. } => *target_ab = [shift, 6.0 - shift],
            _ => {
                return Err(Error::Config(format!(
                    "scenario {} has no target shift parameter",
                    self.name()
                )))
            }
        }
        s.validate()?;
        Ok(s)
    }

    pub fn target_shift(&self) -> Option<f64> {
        match self {
            Scenario::ConceptClassification { target_pi_u, .. } => Some(*target_pi_u),
            Scenario::MultiDomainClassification { .. } => self.multidomain_priors().ok().map(|p| p.1),
            Scenario::RegressionBernoulli { target_a, .. } => Some(*target_a),
            Scenario::RegressionBeta { target_ab, .. } => Some(target_ab[0]),
            _ => None,
        }
    }

    /// Source `P(U = 0)` values and target `Q(U = 0)` of a multi-domain task.
    pub fn multidomain_priors(&self) -> Result<(Vec<f64>, f64)> {
        let Scenario::MultiDomainClassification {
            task,
            source_p_u0,
            target_p_u0,
            ..
        } = self
        else {
            return Err(Error::Config("not a multi-domain classification scenario".into()));
        };
        let (src, tgt) = match task {
            Some(1) => (vec![0.1, 0.2, 0.3], 0.9),
            Some(2) => (vec![0.4, 0.5, 0.6], 0.9),
            Some(3) => (vec![0.7, 0.8, 0.9], 0.4),
            Some(t) => return Err(Error::Config(format!("unknown multi-domain task {t}"))),
            None => (
                source_p_u0
                    .clone()
                    .ok_or_else(|| Error::Config("multi-domain scenario needs a task or source_p_u0".into()))?,
                target_p_u0.ok_or_else(|| Error::Config("multi-domain scenario needs target_p_u0".into()))?,
            ),
        };
        let src = source_p_u0.clone().unwrap_or(src);
        Ok((src, target_p_u0.unwrap_or(tgt)))
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")))
            }
        };
        match self {
            Scenario::ConceptClassification { pi_u, target_pi_u, a_w } => {
                prob("pi_u", *pi_u)?;
                prob("target_pi_u", *target_pi_u)?;
                if !a_w.is_finite() {
                    return Err(Error::Config("a_w must be finite".into()));
                }
            }
            Scenario::MultiDomainClassification { .. } => {
                let (src, tgt) = self.multidomain_priors()?;
                if src.is_empty() {
                    return Err(Error::Config("no source domains".into()));
                }
                for p in src {
                    prob("source P(U = 0)", p)?;
                }
                prob("target Q(U = 0)", tgt)?;
            }
            Scenario::RegressionBernoulli { source_a, target_a } => {
                if source_a.is_empty() {
                    return Err(Error::Config("no source domains".into()));
                }
                for &a in source_a {
                    prob("source a", a)?;
                }
                prob("target a", *target_a)?;
            }
            Scenario::RegressionBeta { source_ab, target_ab } => {
                if source_ab.is_empty() {
                    return Err(Error::Config("no source domains".into()));
                }
                for ab in source_ab.iter().chain(std::iter::once(target_ab)) {
                    if !(ab[0] > 0.0 && ab[1] > 0.0 && ab[0].is_finite() && ab[1].is_finite()) {
                        return Err(Error::Config(format!("Beta parameters must be positive, got {ab:?}")));
                    }
                }
            }
            Scenario::GaussianLinearSem(sem) => sem.validate()?,
            Scenario::CosineCounterexample { k_z, grid } => {
                if *k_z == 0 || *grid < 3 {
                    return Err(Error::Config("cosine scenario needs k_z >= 1 and grid >= 3".into()));
                }
            }
        }
        Ok(())
    }
}

/// One generated domain.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainData {
    pub domain: usize,
    pub train: SampleBatch,
    pub val: SampleBatch,
    pub test: SampleBatch,
}

impl DomainData {
    pub fn split(&self, split: Split) -> &SampleBatch {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub sources: Vec<DomainData>,
    pub target: DomainData,
}

impl Dataset {
    /// Source rows of one split pooled across domains.
    pub fn pooled_sources(&self, split: Split) -> Result<SampleBatch> {
        let parts: Vec<SampleBatch> = self.sources.iter().map(|d| d.split(split).clone()).collect();
        SampleBatch::concat(&parts)
    }
}

/// Latent distribution of one domain.
#[derive(Clone, Copy, Debug)]
enum Latent {
    /// `P(U = 1)`
    Binary(f64),
    Beta(f64, f64),
}

const M_C_GIVEN_U: [[f64; 3]; 2] = [[-2.0, 2.0, 2.0], [-1.0, 1.0, 2.0]];
const M_C_GIVEN_XU: [[[f64; 3]; 2]; 2] = [
    [[-6.0, 6.0, -3.0], [3.0, -6.0, -9.0]],
    [[6.0, -6.0, 3.0], [-3.0, 6.0, 9.0]],
];
const M_Y_GIVEN_U: [f64; 2] = [2.0, 2.0];
const M_Y_GIVEN_CU: [[f64; 3]; 2] = [[3.0, -2.0, -1.0], [3.0, -1.0, -2.0]];
const M_W_GIVEN_U: [f64; 2] = [-1.0, 1.0];

fn draw_u(seed: u64, domain: u32, split: Split, n: usize, p_u1: f64) -> Vec<usize> {
    let mut r = stream(seed, domain, split, Stream::U);
    (0..n).map(|_| bernoulli(&mut r, p_u1) as usize).collect()
}

/// Rows of the concept classification process for one domain and split.
/// `with_concepts = false` drops `C` from the output.
fn classification_rows(
    seed: u64,
    domain: u32,
    split: Split,
    n: usize,
    p_u1: f64,
    a_w: f64,
    with_concepts: bool,
) -> Result<SampleBatch> {
    let u = draw_u(seed, domain, split, n, p_u1);
    let mut rw = stream(seed, domain, split, Stream::W);
    let mut rx = stream(seed, domain, split, Stream::X);
    let mut rc = stream(seed, domain, split, Stream::C);
    let mut ry = stream(seed, domain, split, Stream::Y);
    let mut w = Mat::zeros(n, 1);
    let mut x = Mat::zeros(n, 2);
    let mut c = Mat::zeros(n, 3);
    let mut y = Vector::zeros(n);
    for i in 0..n {
        let ui = u[i];
        w[(i, 0)] = M_W_GIVEN_U[ui] + normal(&mut rw);
        let sign = if ui == 0 { 1.0 } else { -1.0 };
        let mean_x = [-a_w * sign, a_w * sign];
        for (k, m) in mean_x.iter().enumerate() {
            x[(i, k)] = m + normal(&mut rx);
        }
        let mut logit_y = M_Y_GIVEN_U[ui];
        for j in 0..3 {
            let t = x[(i, 0)] * M_C_GIVEN_XU[ui][0][j] + x[(i, 1)] * M_C_GIVEN_XU[ui][1][j] + M_C_GIVEN_U[ui][j];
            let cj = bernoulli(&mut rc, sigmoid(t)) as u8 as f64;
            c[(i, j)] = cj;
            logit_y += cj * M_Y_GIVEN_CU[ui][j];
        }
        y[i] = bernoulli(&mut ry, sigmoid(logit_y)) as u8 as f64;
    }
    let mut b = SampleBatch::new().with(Var::X, x)?.with(Var::W, w)?.with_y(y)?;
    if with_concepts {
        b.insert(Var::C, c)?;
    }
    Ok(b)
}

fn regression_rows(seed: u64, domain: u32, split: Split, n: usize, latent: Latent) -> Result<SampleBatch> {
    let mut ru = stream(seed, domain, split, Stream::U);
    let u: Vec<f64> = match latent {
        Latent::Binary(p) => (0..n).map(|_| bernoulli(&mut ru, p) as u8 as f64).collect(),
        Latent::Beta(a, b) => {
            let d = Beta::new(a, b).map_err(|e| Error::Config(format!("Beta({a}, {b}): {e}")))?;
            (0..n).map(|_| d.sample(&mut ru)).collect()
        }
    };
    let mut rx = stream(seed, domain, split, Stream::X);
    let mut rw = stream(seed, domain, split, Stream::W);
    let x = Mat::from_fn(n, 1, |_, _| normal(&mut rx));
    let y = Vector::from_fn(n, |i, _| (2.0 * u[i] - 1.0) * x[(i, 0)]);
    // N(-1, 0.01) (1 - U) + N(1, 0.01) U, variance 0.01
    let w = Mat::from_fn(n, 1, |i, _| {
        let lo = -1.0 + 0.1 * normal(&mut rw);
        let hi = 1.0 + 0.1 * normal(&mut rw);
        lo * (1.0 - u[i]) + hi * u[i]
    });
    SampleBatch::new().with(Var::X, x)?.with(Var::W, w)?.with_y(y)
}

fn with_domain(b: SampleBatch, domain: usize) -> Result<SampleBatch> {
    let n = b.n();
    b.with_z(&vec![domain; n])
}

fn build_domain<F>(domain: usize, stream_id: u32, sizes: Sizes, mut rows: F) -> Result<DomainData>
where
    F: FnMut(u32, Split, usize) -> Result<SampleBatch>,
{
    let mut out = Vec::with_capacity(3);
    for split in Split::ALL {
        out.push(with_domain(rows(stream_id, split, sizes.get(split))?, domain)?);
    }
    let test = out.pop().unwrap_or_default();
    let val = out.pop().unwrap_or_default();
    let train = out.pop().unwrap_or_default();
    Ok(DomainData {
        domain,
        train,
        val,
        test,
    })
}

/// Samples a dataset of a sample-based scenario.
pub fn generate(scenario: &Scenario, seed: u64, source: Sizes, target: Sizes) -> Result<Dataset> {
    scenario.validate()?;
    let latents: (Vec<Latent>, Latent) = match scenario {
        Scenario::ConceptClassification { pi_u, target_pi_u, .. } => {
            (vec![Latent::Binary(*pi_u)], Latent::Binary(*target_pi_u))
        }
        Scenario::MultiDomainClassification { .. } => {
            let (src, tgt) = scenario.multidomain_priors()?;
            (src.iter().map(|p| Latent::Binary(1.0 - p)).collect(), Latent::Binary(1.0 - tgt))
        }
        Scenario::RegressionBernoulli { source_a, target_a } => {
            (source_a.iter().map(|&a| Latent::Binary(a)).collect(), Latent::Binary(*target_a))
        }
        Scenario::RegressionBeta { source_ab, target_ab } => (
            source_ab.iter().map(|ab| Latent::Beta(ab[0], ab[1])).collect(),
            Latent::Beta(target_ab[0], target_ab[1]),
        ),
        _ => {
            return Err(Error::Config(format!(
                "scenario {} does not produce sample batches",
                scenario.name()
            )))
        }
    };
    let rows = |latent: Latent| {
        move |sid: u32, split: Split, n: usize| -> Result<SampleBatch> {
            match (scenario, latent) {
                (Scenario::ConceptClassification { a_w, .. }, Latent::Binary(p)) => {
                    classification_rows(seed, sid, split, n, p, *a_w, true)
                }
                (Scenario::MultiDomainClassification { a_w, .. }, Latent::Binary(p)) => {
                    classification_rows(seed, sid, split, n, p, *a_w, false)
                }
                (_, l) => regression_rows(seed, sid, split, n, l),
            }
        }
    };
    let sources = latents
        .0
        .iter()
        .enumerate()
        .map(|(r, &l)| build_domain(r, r as u32, source, rows(l)))
        .collect::<Result<Vec<_>>>()?;
    let target = build_domain(sources.len(), TARGET_STREAM, target, rows(latents.1))?;
    Ok(Dataset { sources, target })
}
