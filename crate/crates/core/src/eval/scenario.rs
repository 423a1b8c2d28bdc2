//! Shift sweeps: every method is fitted on the source domains of a seeded
//! dataset and scored on the target test split for each target shift.

use serde::{Deserialize, Serialize};

use super::baselines::{covariate_shift_weights, krr_coefficients, label_shift_weights, KrrModel};
use super::cv::{cross_validate, Cell, CvPlan};
use super::metrics::Metric;
use crate::bridge::concept::{fit_h0_multilabel, fit_h0_system, BridgeH0, LabelBridges};
use crate::bridge::multidomain::{fit_m0_multilabel, fit_m0_system, BridgeM0, DomainSolve};
use crate::cme::{fit_cme_joint_wc_given_x, fit_cme_w_given_x};
use crate::data::{SampleBatch, Var};
use crate::datagen::rng::Split;
use crate::datagen::{generate, Dataset, Scenario, Sizes};
use crate::error::{Error, Result};
use crate::kernel::{gram, KernelSet, KernelSpec};
use crate::linalg::{median_heuristic, RidgeSolver};
use crate::par::{map_indexed, Execution};
use crate::{Mat, Vector};

pub const SCALE: &str = "scale";
pub const LAMBDA: &str = "lambda";
pub const LAMBDA_STAGE1: &str = "lambda_stage1";
const GRID_KEYS: [&str; 3] = [SCALE, LAMBDA, LAMBDA_STAGE1];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ProposedConcept,
    ProposedMultidomain,
    Erm,
    CatErm,
    AvgErm,
    Covars,
    Labels,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::ProposedConcept,
        Method::ProposedMultidomain,
        Method::Erm,
        Method::CatErm,
        Method::AvgErm,
        Method::Covars,
        Method::Labels,
        Method::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::ProposedConcept => "proposed_concept",
            Method::ProposedMultidomain => "proposed_multidomain",
            Method::Erm => "erm",
            Method::CatErm => "cat_erm",
            Method::AvgErm => "avg_erm",
            Method::Covars => "covars",
            Method::Labels => "labels",
            Method::Oracle => "oracle",
        }
    }

    pub fn parse(name: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown method `{name}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSettings {
    /// ridge penalty of the target embedding
    #[serde(default = "default_target_lambda")]
    pub target_lambda: f64,
    /// fraction of each source training split used for stage 1
    #[serde(default = "default_stage1_fraction")]
    pub stage1_fraction: f64,
}

fn default_target_lambda() -> f64 {
    1e-3
}

fn default_stage1_fraction() -> f64 {
    0.5
}

impl Default for MethodSettings {
    fn default() -> Self {
        MethodSettings {
            target_lambda: default_target_lambda(),
            stage1_fraction: default_stage1_fraction(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub scenario: Scenario,
    /// target shift values; empty means the scenario's own target only
    pub shifts: Vec<f64>,
    pub methods: Vec<Method>,
    pub replicates: usize,
    pub seed: u64,
    pub source_sizes: Sizes,
    pub target_sizes: Sizes,
    /// grid keys: `scale` (multiplier of the median heuristic), `lambda`
    /// (KRR and stage-2 penalty) and `lambda_stage1`
    pub plan: CvPlan,
    pub settings: MethodSettings,
}

impl RunSpec {
    pub fn new(scenario: Scenario, methods: Vec<Method>, plan: CvPlan) -> Self {
        let (source_sizes, target_sizes) = scenario.default_sizes();
        RunSpec {
            scenario,
            shifts: Vec::new(),
            methods,
            replicates: 1,
            seed: 0,
            source_sizes,
            target_sizes,
            plan,
            settings: MethodSettings::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub scenario: String,
    pub shift_param: f64,
    pub replicate: usize,
    pub metric_name: String,
    pub value: f64,
    pub seed: u64,
}

/// Metrics reported for a scenario.
pub fn scenario_metrics(scenario: &Scenario) -> &'static [Metric] {
    if is_classification(scenario) {
        &[Metric::Auroc, Metric::Accuracy]
    } else {
        &[Metric::Mse]
    }
}

pub fn is_classification(s: &Scenario) -> bool {
    matches!(
        s,
        Scenario::ConceptClassification { .. } | Scenario::MultiDomainClassification { .. }
    )
}

fn values(plan: &CvPlan, key: &str, default: f64) -> Vec<f64> {
    plan.grid.get(key).cloned().unwrap_or_else(|| vec![default])
}

fn default_for(key: &str) -> f64 {
    if key == SCALE {
        1.0
    } else {
        1e-3
    }
}

/// The plan restricted to `keys`, missing keys filled with defaults.
fn sub_plan(plan: &CvPlan, keys: &[&str]) -> CvPlan {
    let mut p = plan.clone();
    p.grid.clear();
    for &k in keys {
        p.grid.insert(k.to_string(), values(plan, k, default_for(k)));
    }
    p
}

fn position(vals: &[f64], v: f64) -> usize {
    vals.iter().position(|&a| a == v).unwrap_or(0)
}

fn block(m: &Mat, rows: &[usize], cols: &[usize]) -> Mat {
    Mat::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

fn pick(v: &Vector, idx: &[usize]) -> Vector {
    Vector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

fn scaled_gaussian(m: &Mat, scale: f64, seed: u64) -> Result<KernelSpec> {
    let base = if m.nrows() >= 2 { median_heuristic(m, seed)? } else { 1.0 };
    Ok(KernelSpec::gaussian(base * scale))
}

/// Cross-validated KRR hyperparameters on `(x, y)`.
pub fn select_krr(x: &Mat, y: &Vector, plan: &CvPlan, exec: Execution) -> Result<(KernelSpec, f64)> {
    let plan = sub_plan(plan, &[SCALE, LAMBDA]);
    let scales = plan.grid[SCALE].clone();
    let kernels = scales
        .iter()
        .map(|&s| scaled_gaussian(x, s, plan.seed))
        .collect::<Result<Vec<_>>>()?;
    let grams = kernels.iter().map(|k| gram(k, x, x)).collect::<Result<Vec<_>>>()?;
    let res = cross_validate(
        y,
        &plan,
        exec,
        |cell: &Cell, train: &[usize]| {
            let s = position(&scales, cell[SCALE]);
            let beta = krr_coefficients(&block(&grams[s], train, train), &pick(y, train), cell[LAMBDA], None)?;
            Ok((s, beta, train.to_vec()))
        },
        |(s, beta, train): &(usize, Vector, Vec<usize>), valid: &[usize]| Ok(block(&grams[*s], valid, train) * beta),
    )?;
    let s = position(&scales, res.best[SCALE]);
    Ok((kernels[s].clone(), res.best[LAMBDA]))
}

fn fit_krr(x: &Mat, y: &Vector, kernel: &KernelSpec, lambda: f64, weights: Option<&[f64]>) -> Result<KrrModel> {
    super::baselines::baseline_krr(x, y, kernel, lambda, weights)
}

fn cv_krr(x: &Mat, y: &Vector, plan: &CvPlan, exec: Execution) -> Result<KrrModel> {
    let (k, lambda) = select_krr(x, y, plan, exec)?;
    fit_krr(x, y, &k, lambda, None)
}

/// Selects `(scale, lambda_stage1, lambda)` of a two-stage bridge. For each
/// `(scale, lambda_stage1)` the stage-2 matrix `Sigma` is built once; folds
/// then only re-solve the stage-2 ridge system on the training rows.
fn select_bridge<S>(y2: &Vector, plan: &CvPlan, exec: Execution, sigma_of: S) -> Result<Cell>
where
    S: Fn(f64, f64) -> Result<Mat>,
{
    let plan = sub_plan(plan, &GRID_KEYS);
    let scales = plan.grid[SCALE].clone();
    let l1s = plan.grid[LAMBDA_STAGE1].clone();
    let mut sigmas = Vec::with_capacity(scales.len() * l1s.len());
    for &s in &scales {
        for &l1 in &l1s {
            sigmas.push(sigma_of(s, l1).map_err(|e| {
                log::debug!("stage-2 system at scale {s}, lambda_stage1 {l1} failed: {e}");
                e
            }));
        }
    }
    let res = cross_validate(
        y2,
        &plan,
        exec,
        |cell: &Cell, train: &[usize]| {
            let key = position(&scales, cell[SCALE]) * l1s.len() + position(&l1s, cell[LAMBDA_STAGE1]);
            let sigma = sigmas[key].as_ref().map_err(|e| Error::NotApplicable(e.to_string()))?;
            let reg = cell[LAMBDA] * train.len() as f64;
            let u = RidgeSolver::new(&block(sigma, train, train), reg)?.solve_vec(&pick(y2, train))?;
            Ok((key, u, train.to_vec()))
        },
        |(key, u, train): &(usize, Vector, Vec<usize>), valid: &[usize]| {
            let sigma = sigmas[*key].as_ref().map_err(|e| Error::NotApplicable(e.to_string()))?;
            Ok(block(sigma, valid, train) * u)
        },
    )?;
    Ok(res.best)
}

fn split_stages(batch: &SampleBatch, fraction: f64) -> (SampleBatch, SampleBatch) {
    let k = ((batch.n() as f64) * fraction).round() as usize;
    batch.split_at(k.min(batch.n()))
}

/// Stage-1 and stage-2 batches: the first `fraction` of the rows and the
/// rest, taken within each domain when `per_domain`.
pub fn stage_batches(train: &SampleBatch, fraction: f64, per_domain: bool) -> Result<(SampleBatch, SampleBatch)> {
    if !per_domain {
        return Ok(split_stages(train, fraction));
    }
    let mut p1 = Vec::new();
    let mut p2 = Vec::new();
    for idx in train.domain_groups()?.values() {
        let (a, b) = split_stages(&train.select(idx), fraction);
        p1.push(a);
        p2.push(b);
    }
    Ok((SampleBatch::concat(&p1)?, SampleBatch::concat(&p2)?))
}

enum Fitted<B> {
    Labels(LabelBridges<B>),
    Single(B),
}

/// Binary scores `1/2 + (s_1 - s_0) / 2`, which threshold at 1/2 exactly
/// where the class-1 bridge beats the class-0 bridge.
pub fn binary_scores(scores: &Mat) -> Result<Vector> {
    if scores.ncols() != 2 {
        return Err(Error::NotApplicable(format!(
            "binary metrics need two classes, got {}",
            scores.ncols()
        )));
    }
    Ok(Vector::from_fn(scores.nrows(), |i, _| 0.5 + 0.5 * (scores[(i, 1)] - scores[(i, 0)])))
}

struct ConceptModel {
    kernels: KernelSet,
    fit: Fitted<BridgeH0>,
}

/// Gaussian `X` and `W` kernels at `scale` times the median heuristic of the
/// stage-2 `X` and stage-1 `W`, plus a columnwise binary `C` kernel when
/// `with_c`.
pub fn median_kernels(s1: &SampleBatch, s2: &SampleBatch, scale: f64, seed: u64, with_c: bool) -> Result<KernelSet> {
    let mut k = KernelSet {
        x: scaled_gaussian(s2.get(Var::X)?, scale, seed)?,
        w: scaled_gaussian(s1.get(Var::W)?, scale, seed)?,
        ..KernelSet::default()
    };
    if with_c {
        k.c = KernelSpec::columnwise_binary(s2.get(Var::C)?.ncols());
    }
    Ok(k)
}

fn fit_concept(data: &Dataset, spec: &RunSpec, seed: u64, exec: Execution) -> Result<ConceptModel> {
    let train = data.pooled_sources(Split::Train)?;
    if !train.has(Var::C) {
        return Err(Error::NotApplicable(format!(
            "scenario {} has no concepts",
            spec.scenario.name()
        )));
    }
    let (s1, s2) = split_stages(&train, spec.settings.stage1_fraction);
    let y2 = s2.y()?;
    let mut plan = spec.plan.clone();
    plan.seed = seed;
    let best = select_bridge(&y2, &plan, exec, |scale, l1| {
        let k = median_kernels(&s1, &s2, scale, seed, true)?;
        let l2 = values(&plan, LAMBDA, 1e-3)[0];
        Ok(fit_h0_system(&s1, &s2, &k, l1, l2)?.2.sigma)
    })?;
    let kernels = median_kernels(&s1, &s2, best[SCALE], seed, true)?;
    let (l1, l2) = (best[LAMBDA_STAGE1], best[LAMBDA]);
    let fit = if is_classification(&spec.scenario) {
        Fitted::Labels(fit_h0_multilabel(&s1, &s2, &kernels, l1, l2)?)
    } else {
        Fitted::Single(fit_h0_system(&s1, &s2, &kernels, l1, l2)?.0)
    };
    Ok(ConceptModel { kernels, fit })
}

fn predict_concept(m: &ConceptModel, data: &Dataset, lambda: f64) -> Result<Vector> {
    let t = &data.target;
    let cme = fit_cme_joint_wc_given_x(&t.train, &m.kernels, lambda)?;
    let x = t.test.get(Var::X)?;
    match &m.fit {
        Fitted::Labels(b) => binary_scores(&b.scores_full_adaptation(&cme, x)?),
        Fitted::Single(b) => b.predict_full_adaptation(&cme, x),
    }
}

struct MultiModel {
    kernels: KernelSet,
    fit: Fitted<BridgeM0>,
}

fn fit_multi(data: &Dataset, spec: &RunSpec, seed: u64, exec: Execution) -> Result<MultiModel> {
    let (s1, s2) = stage_batches(&data.pooled_sources(Split::Train)?, spec.settings.stage1_fraction, true)?;
    let y2 = s2.y()?;
    let mut plan = spec.plan.clone();
    plan.seed = seed;
    let best = select_bridge(&y2, &plan, exec, |scale, l3| {
        let k = median_kernels(&s1, &s2, scale, seed, false)?;
        let l4 = values(&plan, LAMBDA, 1e-3)[0];
        Ok(fit_m0_system(&s1, &s2, &k, l3, l4, DomainSolve::Auto)?.1.sigma)
    })?;
    let kernels = median_kernels(&s1, &s2, best[SCALE], seed, false)?;
    let (l3, l4) = (best[LAMBDA_STAGE1], best[LAMBDA]);
    let fit = if is_classification(&spec.scenario) {
        Fitted::Labels(fit_m0_multilabel(&s1, &s2, &kernels, l3, l4)?)
    } else {
        Fitted::Single(fit_m0_system(&s1, &s2, &kernels, l3, l4, DomainSolve::Auto)?.0)
    };
    Ok(MultiModel { kernels, fit })
}

fn predict_multi(m: &MultiModel, data: &Dataset, lambda: f64) -> Result<Vector> {
    let t = &data.target;
    let cme = fit_cme_w_given_x(&t.train, &m.kernels, lambda)?;
    let x = t.test.get(Var::X)?;
    match &m.fit {
        Fitted::Labels(b) => binary_scores(&b.scores_multidomain(&cme, x)?),
        Fitted::Single(b) => b.predict_multidomain(&cme, x),
    }
}

/// Source-only fits shared by every shift of a replicate.
struct SourceFits {
    concept: Option<ConceptModel>,
    multi: Option<MultiModel>,
    erm: Option<KrrModel>,
    avg: Option<Vec<KrrModel>>,
}

fn wants(methods: &[Method], any: &[Method]) -> bool {
    methods.iter().any(|m| any.contains(m))
}

fn fit_sources(data: &Dataset, spec: &RunSpec, seed: u64, exec: Execution) -> Result<SourceFits> {
    let mut plan = spec.plan.clone();
    plan.seed = seed;
    let m = &spec.methods;
    let concept = if wants(m, &[Method::ProposedConcept]) {
        Some(fit_concept(data, spec, seed, exec)?)
    } else {
        None
    };
    let multi = if wants(m, &[Method::ProposedMultidomain]) {
        Some(fit_multi(data, spec, seed, exec)?)
    } else {
        None
    };
    let erm = if wants(m, &[Method::Erm, Method::CatErm, Method::Covars, Method::Labels]) {
        let train = data.pooled_sources(Split::Train)?;
        Some(cv_krr(train.get(Var::X)?, &train.y()?, &plan, exec)?)
    } else {
        None
    };
    let avg = if wants(m, &[Method::AvgErm]) {
        Some(
            data.sources
                .iter()
                .map(|d| cv_krr(d.train.get(Var::X)?, &d.train.y()?, &plan, exec))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    Ok(SourceFits {
        concept,
        multi,
        erm,
        avg,
    })
}

fn missing(what: &str) -> Error {
    Error::NotApplicable(format!("{what} was not fitted"))
}

/// Refits the ERM hyperparameters with importance weights.
fn weighted_erm(erm: &KrrModel, weights: &[f64]) -> Result<KrrModel> {
    let lambda = erm.lambda;
    fit_krr(&erm.anchors, &erm.targets, &erm.kernel, lambda, Some(weights))
}

fn predict_method(
    method: Method,
    fits: &SourceFits,
    data: &Dataset,
    spec: &RunSpec,
    seed: u64,
    exec: Execution,
) -> Result<Vector> {
    let x_test = data.target.test.get(Var::X)?;
    let lambda_t = spec.settings.target_lambda;
    match method {
        Method::ProposedConcept => predict_concept(fits.concept.as_ref().ok_or_else(|| missing("concept bridge"))?, data, lambda_t),
        Method::ProposedMultidomain => predict_multi(fits.multi.as_ref().ok_or_else(|| missing("multi-domain bridge"))?, data, lambda_t),
        Method::Erm | Method::CatErm => fits.erm.as_ref().ok_or_else(|| missing("ERM"))?.predict(x_test),
        Method::AvgErm => {
            let models = fits.avg.as_ref().ok_or_else(|| missing("Avg-ERM"))?;
            let mut acc = Vector::zeros(x_test.nrows());
            for m in models {
                acc += m.predict(x_test)?;
            }
            Ok(acc / models.len() as f64)
        }
        Method::Covars => {
            let erm = fits.erm.as_ref().ok_or_else(|| missing("ERM"))?;
            let w = covariate_shift_weights(&erm.anchors, data.target.train.get(Var::X)?)?;
            weighted_erm(erm, &w)?.predict(x_test)
        }
        Method::Labels => {
            let erm = fits.erm.as_ref().ok_or_else(|| missing("ERM"))?;
            let val = data.pooled_sources(Split::Val)?;
            let reference = if val.is_empty() { erm.targets.clone() } else { val.y()? };
            let w = label_shift_weights(
                erm.targets.as_slice(),
                reference.as_slice(),
                data.target.train.y()?.as_slice(),
                is_classification(&spec.scenario),
            )?;
            weighted_erm(erm, &w)?.predict(x_test)
        }
        Method::Oracle => {
            let mut plan = spec.plan.clone();
            plan.seed = seed;
            let t = &data.target.train;
            cv_krr(t.get(Var::X)?, &t.y()?, &plan, exec)?.predict(x_test)
        }
    }
}

fn run_replicate(spec: &RunSpec, shifts: &[f64], r: usize, exec: Execution) -> Result<Vec<Vec<Vec<(Metric, f64)>>>> {
    let seed = spec.seed.wrapping_add(r as u64);
    let metrics = scenario_metrics(&spec.scenario);
    let generate_at = |s: f64| -> Result<Dataset> {
        generate(&spec.scenario.with_target_shift(s)?, seed, spec.source_sizes, spec.target_sizes)
    };
    let first = generate_at(shifts[0])?;
    let fits = fit_sources(&first, spec, seed, exec)?;
    let mut out = Vec::with_capacity(shifts.len());
    for (i, &s) in shifts.iter().enumerate() {
        let data = if i == 0 { first.clone() } else { generate_at(s)? };
        let truth = data.target.test.y()?;
        let mut per_method = Vec::with_capacity(spec.methods.len());
        for &m in &spec.methods {
            let pred = predict_method(m, &fits, &data, spec, seed, exec)?;
            let scores = metrics
                .iter()
                .map(|&metric| Ok((metric, metric.eval(pred.as_slice(), truth.as_slice())?)))
                .collect::<Result<Vec<_>>>()?;
            per_method.push(scores);
        }
        out.push(per_method);
    }
    Ok(out)
}

/// Runs every method on every shift and replicate. Replicate `r` uses seed
/// `seed + r`; source data and source-only fits of a replicate are shared by
/// all shifts. Rows are ordered by shift, method, replicate, then metric.
pub fn run_scenario(spec: &RunSpec, exec: Execution) -> Result<Vec<ResultRow>> {
    for key in spec.plan.grid.keys() {
        if !GRID_KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!("unknown hyperparameter `{key}`")));
        }
    }
    let f = spec.settings.stage1_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::Config(format!("stage1_fraction must lie in (0, 1), got {f}")));
    }
    if spec.methods.is_empty() || spec.replicates == 0 {
        return Ok(Vec::new());
    }
    let shifts: Vec<f64> = if spec.shifts.is_empty() {
        vec![spec
            .scenario
            .target_shift()
            .ok_or_else(|| Error::Config(format!("scenario {} has no target shift", spec.scenario.name())))?]
    } else {
        spec.shifts.clone()
    };
    let per_rep = map_indexed(exec, spec.replicates, |r| run_replicate(spec, &shifts, r, exec))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (si, &s) in shifts.iter().enumerate() {
        for (mi, m) in spec.methods.iter().enumerate() {
            for (r, rep) in per_rep.iter().enumerate() {
                for &(metric, value) in &rep[si][mi] {
                    rows.push(ResultRow {
                        method: m.name().to_string(),
                        scenario: spec.scenario.name().to_string(),
                        shift_param: s,
                        replicate: r,
                        metric_name: metric.name().to_string(),
                        value,
                        seed: spec.seed.wrapping_add(r as u64),
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// Mean of `metric` per `(method, shift)` in first-appearance order.
pub fn mean_by_method_shift(rows: &[ResultRow], metric: Metric) -> Vec<(String, f64, f64)> {
    let mut out: Vec<(String, f64, f64, usize)> = Vec::new();
    for r in rows.iter().filter(|r| r.metric_name == metric.name()) {
        match out.iter_mut().find(|e| e.0 == r.method && e.1 == r.shift_param) {
            Some(e) => {
                e.2 += r.value;
                e.3 += 1;
            }
            None => out.push((r.method.clone(), r.shift_param, r.value, 1)),
        }
    }
    out.into_iter().map(|(m, s, v, n)| (m, s, v / n as f64)).collect()
}
