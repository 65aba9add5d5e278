//! The `pubbound` command line: `fit` and `bounds` subcommands.
//!
//! Failures print one line to standard error,
//! `error kind=<tag> message="<text>"`, and exit with status 1. A `bounds`
//! run in which some cells failed still writes every artifact, records the
//! failures per cell in `summary.json`, and exits with status 3.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bounds::{build_scores, draw_z, BoundProblem, SelectionKey};
use crate::error::{Error, Result};
use crate::linalg::Sym2;
use crate::model_fit::{
    fit_reitsma_ml, fit_univariate_ml, reitsma_with_omega, univariate_at_tau_sq,
};
use crate::numeric::two_sided_z;
use crate::report::{
    ensure_dir, write_band_csvs, write_dta_bounds_csv, write_dta_plots, write_json,
    write_scores_csv, write_sroc_curve_csv, write_univariate_bounds_csv, write_univariate_plot,
    DtaFitSummary, UnivariateFitSummary,
};
use crate::sensitivity::{
    parse_p_grid, run_dta_sensitivity, run_univariate_sensitivity, DtaReport, SweepConfig,
    UnivariateMethod, UnivariateReport,
};
use crate::sroc::{sauc_ci_delta, sop, SrocParams};
use crate::study_data::{
    ingest_dta_csv, ingest_univariate_csv, prepare_bivariate, BivariateObservation,
    UnivariateObservation,
};

pub const THREADS_ENV: &str = "PUBBOUND_THREADS";

/// Exit status when some sweep cells failed but artifacts were written.
pub const EXIT_PARTIAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "pubbound",
    version,
    about = "Worst-case publication bias bounds for meta-analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the random-effects model and write fit.json.
    Fit(FitArgs),
    /// Run the sensitivity sweep and write summary.json, bounds.csv and bands.
    Bounds(BoundsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Dta,
    Univariate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Simulation,
    CopasJackson,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "dta")]
    pub kind: Kind,
    #[arg(long)]
    pub out: PathBuf,
    /// Confidence level of reported intervals.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "dta")]
    pub kind: Kind,
    /// Comma-separated presets (d41, d42, d43) or custom weights `b1:b2`.
    #[arg(long, default_value = "d41,d42,d43")]
    pub scenario: String,
    /// `start:stop:step` or a comma-separated list.
    #[arg(long = "p-grid", default_value = "1.0:0.1:0.1")]
    pub p_grid: String,
    /// Monte Carlo sample size (even).
    #[arg(long = "K", default_value_t = 2000)]
    pub k: usize,
    #[arg(long, default_value_t = 10)]
    pub replicates: usize,
    #[arg(long, default_value_t = 20230401)]
    pub seed: u64,
    #[arg(long)]
    pub plots: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; defaults to the PUBBOUND_THREADS environment variable.
    #[arg(long, env = THREADS_ENV)]
    pub threads: Option<usize>,
    /// Univariate bound method.
    #[arg(long, value_enum, default_value = "simulation")]
    pub method: MethodArg,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Univariate heterogeneity override.
    #[arg(long = "tau-sq")]
    pub tau_sq: Option<f64>,
    /// Bivariate heterogeneity override (all three required together).
    #[arg(long = "tau1-sq")]
    pub tau1_sq: Option<f64>,
    #[arg(long)]
    pub tau12: Option<f64>,
    #[arg(long = "tau2-sq")]
    pub tau2_sq: Option<f64>,
    /// Write the replicate-0 score matrix of each scenario as CSV.
    #[arg(long = "dump-scores")]
    pub dump_scores: bool,
}

/// Validated configuration of a `bounds` run, echoed into `summary.json`.
/// The output directory and thread count are execution details and are not
/// echoed, so reruns produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: String,
    pub kind: Kind,
    pub scenario_spec: String,
    pub scenarios: Vec<SelectionKey>,
    pub p_grid_spec: String,
    pub p_grid: Vec<f64>,
    pub k: usize,
    pub replicates: usize,
    pub seed: u64,
    pub level: f64,
    pub plots: bool,
    pub method: Option<UnivariateMethod>,
    pub tau_sq_override: Option<f64>,
    pub omega_override: Option<Sym2>,
    #[serde(skip)]
    pub out: PathBuf,
}

impl RunConfig {
    pub fn from_args(a: &BoundsArgs) -> Result<Self> {
        let scenarios = a
            .scenario
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.parse::<SelectionKey>())
            .collect::<Result<Vec<_>>>()?;
        if scenarios.is_empty() {
            return Err(Error::InvalidInput("no scenarios given".into()));
        }
        let p_grid = parse_p_grid(&a.p_grid)?;
        let omega_override = match (a.tau1_sq, a.tau12, a.tau2_sq) {
            (None, None, None) => None,
            (Some(t1), Some(t12), Some(t2)) => {
                let o = Sym2::new(t1, t12, t2);
                if t1 < 0.0 || t2 < 0.0 || o.det() < 0.0 {
                    return Err(Error::InvalidInput(
                        "heterogeneity override is not positive semidefinite".into(),
                    ));
                }
                Some(o)
            }
            _ => {
                return Err(Error::InvalidInput(
                    "--tau1-sq, --tau12 and --tau2-sq must be given together".into(),
                ))
            }
        };
        if let Some(t) = a.tau_sq {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "--tau-sq {t} must be non-negative"
                )));
            }
        }
        match a.kind {
            Kind::Dta if a.tau_sq.is_some() => {
                return Err(Error::InvalidInput(
                    "--tau-sq applies to univariate data".into(),
                ))
            }
            Kind::Univariate if omega_override.is_some() => {
                return Err(Error::InvalidInput(
                    "--tau1-sq/--tau12/--tau2-sq apply to dta data".into(),
                ))
            }
            _ => {}
        }
        if a.threads == Some(0) {
            return Err(Error::InvalidInput("thread count must be positive".into()));
        }
        let cfg = RunConfig {
            input: a.input.display().to_string(),
            kind: a.kind,
            scenario_spec: a.scenario.clone(),
            scenarios,
            p_grid_spec: a.p_grid.clone(),
            p_grid,
            k: a.k,
            replicates: a.replicates,
            seed: a.seed,
            level: a.level,
            plots: a.plots,
            method: (a.kind == Kind::Univariate).then_some(match a.method {
                MethodArg::Simulation => UnivariateMethod::Simulation,
                MethodArg::CopasJackson => UnivariateMethod::CopasJackson,
            }),
            tau_sq_override: a.tau_sq,
            omega_override,
            out: a.out.clone(),
        };
        cfg.sweep().validate()?;
        Ok(cfg)
    }

    pub fn sweep(&self) -> SweepConfig {
        SweepConfig {
            p_grid: self.p_grid.clone(),
            k: self.k,
            replicates: self.replicates,
            base_seed: self.seed,
            level: self.level,
        }
    }
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
enum AnyReport<'a> {
    Dta(&'a DtaReport),
    Univariate(&'a UnivariateReport),
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    config: &'a RunConfig,
    failed_cells: usize,
    report: AnyReport<'a>,
}

/// Parses arguments, runs the command and returns the process exit status.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            1
        }
    }
}

/// One-line machine-parsable rendering of an error.
pub fn error_line(e: &Error) -> String {
    let msg = e
        .to_string()
        .replace('\\', "\\\\")
        .replace('"', "\\\"")
        .replace('\n', " ");
    format!("error kind={} message=\"{}\"", e.kind(), msg)
}

pub fn run(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a).map(|_| 0),
        Command::Bounds(a) => {
            let cfg = RunConfig::from_args(a)?;
            let failed = match a.threads {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?
                    .install(|| cmd_bounds(&cfg, a.dump_scores))?,
                None => cmd_bounds(&cfg, a.dump_scores)?,
            };
            if failed > 0 {
                eprintln!("error kind=partial_failure message=\"{failed} sweep cells failed; see summary.json\"");
                Ok(EXIT_PARTIAL)
            } else {
                Ok(0)
            }
        }
    }
}

fn load_dta(path: &Path) -> Result<(Vec<BivariateObservation>, usize)> {
    let studies = ingest_dta_csv(path)?;
    let corrected = studies.iter().filter(|s| s.has_zero_cell()).count();
    let obs = prepare_bivariate(&studies)?;
    Ok((obs, corrected))
}

fn load_univariate(path: &Path) -> Result<Vec<UnivariateObservation>> {
    ingest_univariate_csv(path)
}

/// `pubbound fit`: writes `fit.json`, plus `sroc_curve.csv` for dta data.
pub fn cmd_fit(a: &FitArgs) -> Result<()> {
    let z = two_sided_z(a.level)?;
    match a.kind {
        Kind::Dta => {
            let (obs, corrected) = load_dta(&a.input)?;
            let fit = fit_reitsma_ml(&obs)?;
            let params = SrocParams::from_fit(&fit)?;
            let ci = sauc_ci_delta(&fit, 0.0, a.level)?;
            ensure_dir(&a.out)?;
            let summary = DtaFitSummary::new(&fit, &ci, sop(&fit), params.contrast(), corrected);
            write_json(&a.out.join("fit.json"), &summary)?;
            write_sroc_curve_csv(&a.out.join("sroc_curve.csv"), &params)?;
        }
        Kind::Univariate => {
            let obs = load_univariate(&a.input)?;
            let fit = fit_univariate_ml(&obs)?;
            ensure_dir(&a.out)?;
            write_json(&a.out.join("fit.json"), &UnivariateFitSummary::new(&fit, z))?;
        }
    }
    Ok(())
}

/// `pubbound bounds`: returns the number of failed sweep cells.
pub fn cmd_bounds(cfg: &RunConfig, dump_scores: bool) -> Result<usize> {
    let input = Path::new(&cfg.input);
    let out = &cfg.out;
    let sweep = cfg.sweep();
    match cfg.kind {
        Kind::Dta => {
            let (obs, _) = load_dta(input)?;
            let fit = fit_reitsma_ml(&obs)?;
            let report =
                run_dta_sensitivity(&fit, &obs, &cfg.scenarios, &sweep, cfg.omega_override)?;
            ensure_dir(out)?;
            let failed = report.failed_cells();
            write_json(
                &out.join("summary.json"),
                &Summary {
                    config: cfg,
                    failed_cells: failed,
                    report: AnyReport::Dta(&report),
                },
            )?;
            write_dta_bounds_csv(&out.join("bounds.csv"), &report)?;
            write_band_csvs(out, &report)?;
            if cfg.plots {
                write_dta_plots(out, &report)?;
            }
            if dump_scores {
                let used = match cfg.omega_override {
                    Some(o) => reitsma_with_omega(&fit, &obs, o)?,
                    None => fit,
                };
                let problem = BoundProblem::bivariate(&used, &obs, report.contrast);
                let z = draw_z(cfg.k, 2, cfg.seed)?;
                for key in &cfg.scenarios {
                    let m = build_scores(&problem, &z, key)?;
                    write_scores_csv(&out.join(format!("scores_{}.csv", key.label)), &m)?;
                }
            }
            Ok(failed)
        }
        Kind::Univariate => {
            let obs = load_univariate(input)?;
            let fit = fit_univariate_ml(&obs)?;
            let method = cfg.method.unwrap_or(UnivariateMethod::Simulation);
            let report =
                run_univariate_sensitivity(&fit, &obs, &sweep, method, cfg.tau_sq_override)?;
            ensure_dir(out)?;
            let failed = report.failed_cells();
            write_json(
                &out.join("summary.json"),
                &Summary {
                    config: cfg,
                    failed_cells: failed,
                    report: AnyReport::Univariate(&report),
                },
            )?;
            write_univariate_bounds_csv(&out.join("bounds.csv"), &report)?;
            if cfg.plots {
                write_univariate_plot(out, &report)?;
            }
            if dump_scores {
                let used = match cfg.tau_sq_override {
                    Some(t) => univariate_at_tau_sq(&obs, t)?,
                    None => fit,
                };
                let problem = BoundProblem::univariate(&used, &obs);
                let m = build_scores(&problem, &draw_z(cfg.k, 1, cfg.seed)?, &SelectionKey::d41())?;
                write_scores_csv(&out.join("scores_univariate.csv"), &m)?;
            }
            Ok(failed)
        }
    }
}
