//! Command-line entry point: `gen`, `fit`, `adapt`, `eval`, `sweep`, `bounds`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! failure.

pub mod config;
pub mod io;
pub mod model;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::data::Var;
use crate::datagen::rng::Split;
use crate::datagen::{generate, CosineTables, Scenario};
use crate::discrete::{frechet_bound, gaussian_linear_bound};
use crate::error::{Error, Result};
use crate::eval::metrics::Metric;
use crate::eval::scenario::{is_classification, run_scenario, scenario_metrics, ResultRow};
use crate::par::{with_workers, Execution};
use crate::Vector;
use config::{BoundsConfig, ExperimentConfig};
use model::{fit_model, looks_binary, ModelFile};

#[derive(Debug, Parser)]
#[command(name = "kbridge", version, about = "Kernel bridge estimators for latent-shift adaptation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// experiment configuration (TOML)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// overrides the configured seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// output directory for `gen`, output file otherwise
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// worker threads, 0 for all cores
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// scenario override, `KEY=VALUE` or a scenario kind; repeatable
    #[arg(long = "scenario", global = true, value_name = "KEY=VALUE")]
    pub scenario: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write one CSV per domain and split.
    Gen,
    /// Fit a source bridge and write a model file.
    Fit {
        /// pooled source training CSV; generated from the config when absent
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Adapt a fitted bridge to a target domain and write predictions.
    Adapt {
        #[arg(long)]
        model: PathBuf,
        /// target batch with W, X (and C for concept bridges)
        #[arg(long)]
        target: Option<PathBuf>,
        /// rows to predict; the generated target test split when absent
        #[arg(long)]
        query: Option<PathBuf>,
    },
    /// Score a predictions file, or run the configured methods at the
    /// configured target.
    Eval {
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// method name recorded for a predictions file
        #[arg(long, default_value = "model")]
        method: String,
    },
    /// Run the configured methods over every configured shift.
    Sweep,
    /// Partial-identification bounds of the `[bounds]` section.
    Bounds,
}

/// Process exit code of an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidParameter(_) | Error::NotApplicable(_) => 2,
        Error::Data(_)
        | Error::Io(_)
        | Error::Csv(_)
        | Error::Json(_)
        | Error::MissingColumn(_)
        | Error::DimensionMismatch { .. }
        | Error::DegenerateBatch(_) => 3,
        Error::Factorization { .. } | Error::NonFinite(_) | Error::NoConvergence(_) => 4,
    }
}

/// Parses the arguments, runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

struct Ctx {
    cfg: Option<ExperimentConfig>,
    seed: u64,
    out: Option<PathBuf>,
}

impl Ctx {
    fn cfg(&self) -> Result<&ExperimentConfig> {
        self.cfg
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs --config".into()))
    }

    /// `--out`, or `file` inside the configured output directory.
    fn out_file(&self, file: &str) -> PathBuf {
        match (&self.out, &self.cfg) {
            (Some(p), _) => p.clone(),
            (None, Some(c)) => c.out.join(file),
            (None, None) => PathBuf::from(file),
        }
    }

    fn out_dir(&self) -> PathBuf {
        match (&self.out, &self.cfg) {
            (Some(p), _) => p.clone(),
            (None, Some(c)) => c.out.clone(),
            (None, None) => PathBuf::from("out"),
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => Some(ExperimentConfig::load(p, &cli.scenario)?),
        None if !cli.scenario.is_empty() => {
            return Err(Error::Config("--scenario overrides need --config".into()))
        }
        None => None,
    };
    if let Some(c) = cfg.as_mut() {
        if let Some(s) = cli.seed {
            c.seed = s;
        }
        if let Some(w) = cli.workers {
            c.workers = w;
        }
    }
    let workers = cli.workers.or(cfg.as_ref().map(|c| c.workers)).unwrap_or(0);
    let ctx = Ctx {
        seed: cfg.as_ref().map_or(cli.seed.unwrap_or(0), |c| c.seed),
        cfg,
        out: cli.out.clone(),
    };
    with_workers(workers, || match &cli.command {
        Command::Gen => cmd_gen(&ctx).map(|_| ()),
        Command::Fit { data } => cmd_fit(&ctx, data.as_deref()),
        Command::Adapt { model, target, query } => cmd_adapt(&ctx, model, target.as_deref(), query.as_deref()),
        Command::Eval { predictions, method } => cmd_eval(&ctx, predictions.as_deref(), method),
        Command::Sweep => cmd_sweep(&ctx),
        Command::Bounds => cmd_bounds(&ctx),
    })
}

fn generated(cfg: &ExperimentConfig, seed: u64) -> Result<crate::datagen::Dataset> {
    generate(&cfg.scenario, seed, cfg.source_sizes(), cfg.target_sizes())
}

/// Writes the CSV files of the configured scenario and returns their paths.
fn cmd_gen(ctx: &Ctx) -> Result<Vec<PathBuf>> {
    let cfg = ctx.cfg()?;
    let dir = ctx.out_dir();
    std::fs::create_dir_all(&dir)?;
    let mut written = Vec::new();
    match &cfg.scenario {
        Scenario::GaussianLinearSem(sem) => {
            let sizes = cfg.source_sizes();
            for split in Split::ALL {
                let s = sem.sample(ctx.seed, 0, split, sizes.get(split))?;
                let p = dir.join(format!("source0_{}.csv", split.name()));
                io::write_batch(&p, &s.batch)?;
                written.push(p);
            }
        }
        Scenario::CosineCounterexample { k_z, grid } => {
            let t = CosineTables::new(*k_z, *grid)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["u".to_string()];
            header.extend((1..=k_z + 1).map(|r| format!("p{r}")));
            header.push("g".into());
            w.write_record(&header)?;
            for i in 0..t.grid.len() {
                let mut rec = vec![io::fmt_f64(t.grid[i])];
                rec.extend(t.densities.row(i).iter().map(|&v| io::fmt_f64(v)));
                rec.push(io::fmt_f64(t.g[i]));
                w.write_record(&rec)?;
            }
            let p = dir.join("cosine_tables.csv");
            std::fs::write(&p, w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
            written.push(p);
        }
        _ => {
            let data = generated(cfg, ctx.seed)?;
            for d in &data.sources {
                for split in Split::ALL {
                    let p = dir.join(format!("source{}_{}.csv", d.domain, split.name()));
                    io::write_batch(&p, d.split(split))?;
                    written.push(p);
                }
            }
            for split in Split::ALL {
                let p = dir.join(format!("target_{}.csv", split.name()));
                io::write_batch(&p, data.target.split(split))?;
                written.push(p);
            }
        }
    }
    for p in &written {
        log::info!("wrote {}", p.display());
    }
    Ok(written)
}

fn cmd_fit(ctx: &Ctx, data: Option<&Path>) -> Result<()> {
    let train = match data {
        Some(p) => io::read_batch(p)?,
        None => generated(ctx.cfg()?, ctx.seed)?.pooled_sources(Split::Train)?,
    };
    let classification = match &ctx.cfg {
        Some(c) if data.is_none() => is_classification(&c.scenario),
        _ => looks_binary(&train.y()?),
    };
    let (mcfg, settings) = match &ctx.cfg {
        Some(c) => (c.model.clone(), c.settings.clone()),
        None => Default::default(),
    };
    let m = fit_model(&train, &mcfg, &settings, classification, ctx.seed)?;
    let out = ctx.out_file("model.json");
    m.save(&out)?;
    log::info!("wrote {}", out.display());
    Ok(())
}

fn cmd_adapt(ctx: &Ctx, model: &Path, target: Option<&Path>, query: Option<&Path>) -> Result<()> {
    let m = ModelFile::load(model)?;
    let data = match (target, query) {
        (Some(_), Some(_)) => None,
        _ => Some(generated(ctx.cfg()?, ctx.seed)?),
    };
    let target = match target {
        Some(p) => io::read_batch(p)?,
        None => data.as_ref().map(|d| d.target.train.clone()).unwrap_or_default(),
    };
    let query = match query {
        Some(p) => io::read_batch(p)?,
        None => data.as_ref().map(|d| d.target.test.clone()).unwrap_or_default(),
    };
    let lambda = ctx.cfg.as_ref().map_or(1e-3, |c| c.settings.target_lambda);
    let scores = m.predict(&target, &query, lambda)?;
    let y = if query.has(Var::Y) { Some(query.y()?) } else { None };
    let out = ctx.out_file("predictions.csv");
    io::write_predictions(&out, &scores, y.as_ref())?;
    log::info!("wrote {}", out.display());
    Ok(())
}

fn metrics_for(ctx: &Ctx, y: &Vector) -> Vec<Metric> {
    match &ctx.cfg {
        Some(c) => scenario_metrics(&c.scenario).to_vec(),
        None if looks_binary(y) => vec![Metric::Auroc, Metric::Accuracy],
        None => vec![Metric::Mse],
    }
}

fn cmd_eval(ctx: &Ctx, predictions: Option<&Path>, method: &str) -> Result<()> {
    let rows = match predictions {
        Some(p) => {
            let (scores, y) = io::read_predictions(p)?;
            let y = y.ok_or_else(|| Error::MissingColumn("y".into()))?;
            let (scenario, shift) = match &ctx.cfg {
                Some(c) => (c.scenario.name().to_string(), c.scenario.target_shift().unwrap_or(f64::NAN)),
                None => ("external".to_string(), f64::NAN),
            };
            metrics_for(ctx, &y)
                .into_iter()
                .map(|m| {
                    Ok(ResultRow {
                        method: method.to_string(),
                        scenario: scenario.clone(),
                        shift_param: shift,
                        replicate: 0,
                        metric_name: m.name().to_string(),
                        value: m.eval(scores.as_slice(), y.as_slice())?,
                        seed: ctx.seed,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        None => {
            let mut spec = ctx.cfg()?.run_spec();
            spec.shifts.clear();
            run_scenario(&spec, Execution::default())?
        }
    };
    let out = ctx.out_file("metrics.csv");
    io::write_results(&out, &rows)?;
    log::info!("wrote {}", out.display());
    Ok(())
}

fn cmd_sweep(ctx: &Ctx) -> Result<()> {
    let rows = run_scenario(&ctx.cfg()?.run_spec(), Execution::default())?;
    let out = ctx.out_file("sweep.csv");
    io::write_results(&out, &rows)?;
    log::info!("wrote {}", out.display());
    Ok(())
}

fn cmd_bounds(ctx: &Ctx) -> Result<()> {
    let cfg = ctx.cfg()?;
    let bounds = cfg
        .bounds
        .as_ref()
        .ok_or_else(|| Error::Config("bounds needs a [bounds] section".into()))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let f = io::fmt_f64;
    match bounds {
        BoundsConfig::Frechet { h0, pi_c, pi_w } => {
            let b = frechet_bound(h0, *pi_c, *pi_w)?;
            w.write_record(["lower", "upper", "q11_lower", "q11_upper", "q11_at_lower", "q11_at_upper", "interaction"])?;
            w.write_record([
                f(b.lower),
                f(b.upper),
                f(b.q11_lower),
                f(b.q11_upper),
                f(b.q11_at_lower),
                f(b.q11_at_upper),
                f(b.interaction),
            ])?;
        }
        BoundsConfig::GaussianLinear { x, rho } => {
            let Scenario::GaussianLinearSem(sem) = &cfg.scenario else {
                return Err(Error::Config("gaussian_linear bounds need a gaussian_linear_sem scenario".into()));
            };
            let h = sem.bridge_matrix()?;
            w.write_record(["point", "lower", "upper", "center", "half_width", "mean_y"])?;
            for (i, xi) in x.iter().enumerate() {
                let xv = Vector::from_column_slice(xi);
                let mo = sem.conditional_moments(&xv)?;
                let b = gaussian_linear_bound(&h, &mo.mu_w, &mo.mu_c, &mo.sigma_w, &mo.sigma_c, *rho)?;
                w.write_record([
                    i.to_string(),
                    f(b.lower),
                    f(b.upper),
                    f(b.center),
                    f(b.half_width),
                    f(sem.conditional_mean_y(&xv)?),
                ])?;
            }
        }
    }
    let out = ctx.out_file("bounds.csv");
    if let Some(p) = out.parent() {
        if !p.as_os_str().is_empty() {
            std::fs::create_dir_all(p)?;
        }
    }
    std::fs::write(&out, w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
    log::info!("wrote {}", out.display());
    Ok(())
}
