//! Sensitivity sweeps over the marginal selection probability `p`.
//!
//! Every `(scenario, replicate)` pair draws its own antithetic sample with
//! seed `base_seed + replicate` and solves both directions at every `p`.
//! Pairs run in parallel; results are collected in grid order, so reports
//! do not depend on scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::scenario::{validate_k, validate_p};
use crate::bounds::solver::combine_replicates;
use crate::bounds::{
    build_scores, copas_jackson_bound, draw_z, optimize_selection, BoundProblem, BoundSolution,
    Direction, SelectionKey,
};
use crate::error::{Error, Result};
use crate::linalg::Sym2;
use crate::model_fit::{reitsma_with_omega, univariate_at_tau_sq, ReitsmaFit, UnivariateFit};
use crate::numeric::{median, two_sided_z};
use crate::sroc::{
    sauc, sauc_ci_delta, sop, sroc_curve, SaucInterval, SrocParams, DEFAULT_CURVE_POINTS,
};
use crate::study_data::{BivariateObservation, UnivariateObservation};

/// Median of replicate estimates.
pub fn replicate_median(values: &[f64]) -> Result<f64> {
    median(values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Marginal selection probabilities, in report order.
    pub p_grid: Vec<f64>,
    pub k: usize,
    pub replicates: usize,
    pub base_seed: u64,
    /// Coverage of the confidence intervals.
    pub level: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            p_grid: default_p_grid(),
            k: 2000,
            replicates: 10,
            base_seed: 20230401,
            level: 0.95,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p_grid.is_empty() {
            return Err(Error::InvalidInput("empty p grid".into()));
        }
        for &p in &self.p_grid {
            validate_p(p)?;
        }
        validate_k(self.k)?;
        if self.replicates == 0 {
            return Err(Error::InvalidInput("replicates must be at least 1".into()));
        }
        two_sided_z(self.level)?;
        Ok(())
    }
}

/// `1.0, 0.9, …, 0.1`.
pub fn default_p_grid() -> Vec<f64> {
    (1..=10).rev().map(|j| j as f64 / 10.0).collect()
}

/// Parses `start:stop:step` (either direction) or a comma-separated list.
pub fn parse_p_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = |m: &str| Error::InvalidInput(format!("p grid '{spec}': {m}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("not a number"));
    let grid = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected start:stop:step"));
        }
        let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) {
            return Err(bad("step must be positive"));
        }
        let n = ((stop - start).abs() / step + 1e-9).floor() as usize;
        let dir = if stop >= start { 1.0 } else { -1.0 };
        (0..=n)
            .map(|i| ((start + dir * i as f64 * step) * 1e12).round() / 1e12)
            .collect()
    } else {
        spec.split(',').map(num).collect::<Result<Vec<f64>>>()?
    };
    if grid.is_empty() {
        return Err(bad("no values"));
    }
    for &p in &grid {
        validate_p(p)?;
    }
    Ok(grid)
}

/// Descriptive number of unpublished studies `N(1−p)/p` implied by `p ≈ N/S`.
pub fn implied_unpublished(n: usize, p: f64) -> f64 {
    n as f64 * (1.0 - p) / p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnpublishedCount {
    pub p: f64,
    pub s_minus_n: f64,
}

fn unpublished(n: usize, grid: &[f64]) -> Vec<UnpublishedCount> {
    grid.iter()
        .map(|&p| UnpublishedCount {
            p,
            s_minus_n: implied_unpublished(n, p),
        })
        .collect()
}

/// Solves every `(p, direction)` cell for one score sample.
fn solve_grid(
    problem: &BoundProblem,
    key: &SelectionKey,
    cfg: &SweepConfig,
    replicate: usize,
) -> Vec<(Direction, Vec<Result<BoundSolution>>)> {
    let seed = cfg.base_seed.wrapping_add(replicate as u64);
    let scores = draw_z(cfg.k, problem.dim(), seed).and_then(|z| build_scores(problem, &z, key));
    [Direction::Min, Direction::Max]
        .into_iter()
        .map(|dir| {
            let cells = cfg
                .p_grid
                .iter()
                .map(|&p| match &scores {
                    Ok(m) => optimize_selection(m, p, dir),
                    Err(e) => Err(Error::InvalidInput(format!(
                        "score construction failed: {e}"
                    ))),
                })
                .collect();
            (dir, cells)
        })
        .collect()
}

/// Runs all replicates of one scenario and pools each cell by its median.
/// Indexed `[direction][p]` with `Min` first.
fn scenario_cells(
    problem: &BoundProblem,
    key: &SelectionKey,
    cfg: &SweepConfig,
) -> Vec<(Direction, Vec<Result<BoundSolution>>)> {
    let per_rep: Vec<_> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| solve_grid(problem, key, cfg, r))
        .collect();
    [Direction::Min, Direction::Max]
        .into_iter()
        .enumerate()
        .map(|(d, dir)| {
            let cells = (0..cfg.p_grid.len())
                .map(|j| {
                    let mut sols = Vec::with_capacity(cfg.replicates);
                    for rep in &per_rep {
                        match &rep[d].1[j] {
                            Ok(s) => sols.push(s.clone()),
                            Err(e) => {
                                return Err(Error::InvalidInput(format!(
                                    "{} p={}: {e}",
                                    dir, cfg.p_grid[j]
                                )))
                            }
                        }
                    }
                    combine_replicates(&sols)
                })
                .collect();
            (dir, cells)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnivariateMethod {
    Simulation,
    CopasJackson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnivariateRow {
    pub p: f64,
    pub direction: Direction,
    /// Bias bound `b`; `None` when the cell failed.
    pub bound: Option<f64>,
    /// `θ̂ + b` with the no-bias confidence limits shifted by `b`.
    pub theta: Option<f64>,
    pub theta_lo: Option<f64>,
    pub theta_hi: Option<f64>,
    pub replicate_values: Vec<f64>,
    pub p_i: Vec<f64>,
    pub mean_constraint_active: Option<bool>,
    pub converged: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnivariateReport {
    pub fit: UnivariateFit,
    pub method: UnivariateMethod,
    pub study_ids: Vec<String>,
    pub sigmas: Vec<f64>,
    pub theta_ci: [f64; 2],
    pub rows: Vec<UnivariateRow>,
    pub unpublished: Vec<UnpublishedCount>,
}

impl UnivariateReport {
    pub fn failed_cells(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }
}

/// Univariate sweep. `tau_sq_override` replaces the fitted heterogeneity.
pub fn run_univariate_sensitivity(
    fit: &UnivariateFit,
    obs: &[UnivariateObservation],
    cfg: &SweepConfig,
    method: UnivariateMethod,
    tau_sq_override: Option<f64>,
) -> Result<UnivariateReport> {
    cfg.validate()?;
    let fit = match tau_sq_override {
        Some(t) => univariate_at_tau_sq(obs, t)?,
        None => fit.clone(),
    };
    let z = two_sided_z(cfg.level)?;
    let problem = BoundProblem::univariate(&fit, obs);
    let sigmas = fit.marginal_sds(obs);
    let half = z * fit.se_theta;

    let row = |p: f64, dir: Direction, cell: Result<BoundSolution>| -> UnivariateRow {
        match cell {
            Ok(s) => UnivariateRow {
                p,
                direction: dir,
                bound: Some(s.value),
                theta: Some(fit.theta + s.value),
                theta_lo: Some(fit.theta + s.value - half),
                theta_hi: Some(fit.theta + s.value + half),
                replicate_values: s.replicate_values,
                p_i: s.p_i,
                mean_constraint_active: Some(s.mean_constraint_active),
                converged: Some(s.converged),
                error: None,
            },
            Err(e) => UnivariateRow {
                p,
                direction: dir,
                bound: None,
                theta: None,
                theta_lo: None,
                theta_hi: None,
                replicate_values: Vec::new(),
                p_i: Vec::new(),
                mean_constraint_active: None,
                converged: None,
                error: Some(e.to_string()),
            },
        }
    };

    let mut rows = Vec::new();
    match method {
        UnivariateMethod::Simulation => {
            let cells = scenario_cells(&problem, &SelectionKey::d41(), cfg);
            for (dir, col) in cells {
                for (&p, cell) in cfg.p_grid.iter().zip(col) {
                    rows.push(row(p, dir, cell));
                }
            }
        }
        UnivariateMethod::CopasJackson => {
            for dir in [Direction::Min, Direction::Max] {
                for &p in &cfg.p_grid {
                    let cell = copas_jackson_bound(&sigmas, p).map(|b| {
                        let v = if dir == Direction::Max { b } else { -b };
                        BoundSolution {
                            p,
                            direction: dir,
                            value: v,
                            p_i: vec![p; sigmas.len()],
                            mean_constraint_active: true,
                            converged: true,
                            replicate_values: vec![v],
                            median: v,
                            multiplier: 0.0,
                            harmonic_mean: p,
                            arithmetic_mean: p,
                            iterations: 0,
                        }
                    });
                    rows.push(row(p, dir, cell));
                }
            }
        }
    }
    sort_rows(&mut rows, |r| (r.direction, r.p));
    Ok(UnivariateReport {
        theta_ci: [fit.theta - half, fit.theta + half],
        study_ids: obs.iter().map(|o| o.study_id.clone()).collect(),
        sigmas,
        method,
        rows,
        unpublished: unpublished(obs.len(), &cfg.p_grid),
        fit,
    })
}

/// Rows ordered by direction (`min` first), then by descending `p`.
fn sort_rows<T>(rows: &mut [T], key: impl Fn(&T) -> (Direction, f64)) {
    rows.sort_by(|a, b| {
        let (da, pa) = key(a);
        let (db, pb) = key(b);
        da.cmp(&db).reverse().then(pb.total_cmp(&pa))
    });
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtaRow {
    pub scenario: String,
    pub p: f64,
    pub direction: Direction,
    /// Median contrast bound `c̃ᵀb`.
    pub contrast_bound: Option<f64>,
    pub sauc: Option<f64>,
    pub sauc_lo: Option<f64>,
    pub sauc_hi: Option<f64>,
    pub replicate_values: Vec<f64>,
    pub p_i: Vec<f64>,
    pub mean_constraint_active: Option<bool>,
    pub converged: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    pub p: f64,
    pub fpr: f64,
    pub sroc: f64,
    pub sroc_lower: f64,
    pub sroc_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioBand {
    pub scenario: String,
    pub points: Vec<BandPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtaReport {
    pub fit: ReitsmaFit,
    pub omega_override: Option<Sym2>,
    pub contrast: [f64; 2],
    pub sop: [f64; 2],
    pub sauc: SaucInterval,
    pub study_ids: Vec<String>,
    pub scenarios: Vec<SelectionKey>,
    pub rows: Vec<DtaRow>,
    pub bands: Vec<ScenarioBand>,
    pub unpublished: Vec<UnpublishedCount>,
}

impl DtaReport {
    pub fn failed_cells(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn row(&self, scenario: &str, p: f64, direction: Direction) -> Option<&DtaRow> {
        self.rows
            .iter()
            .find(|r| r.scenario == scenario && r.p == p && r.direction == direction)
    }
}

/// SROC/SAUC sweep for diagnostic accuracy data with contrast
/// `c̃ = (1, −τ₁₂/τ₂²)`.
pub fn run_dta_sensitivity(
    fit: &ReitsmaFit,
    obs: &[BivariateObservation],
    scenarios: &[SelectionKey],
    cfg: &SweepConfig,
    omega_override: Option<Sym2>,
) -> Result<DtaReport> {
    cfg.validate()?;
    if scenarios.is_empty() {
        return Err(Error::InvalidInput("no scenarios".into()));
    }
    for s in scenarios {
        s.validate()?;
    }
    let fit = match omega_override {
        Some(o) => reitsma_with_omega(fit, obs, o)?,
        None => fit.clone(),
    };
    let params = SrocParams::from_fit(&fit)?;
    let contrast = params.contrast();
    let base = sauc_ci_delta(&fit, 0.0, cfg.level)?;
    let problem = BoundProblem::bivariate(&fit, obs, contrast);

    let per_scenario: Vec<_> = scenarios
        .par_iter()
        .map(|key| scenario_cells(&problem, key, cfg))
        .collect();

    let mut rows = Vec::new();
    let mut bands = Vec::new();
    for (key, cells) in scenarios.iter().zip(per_scenario) {
        let mut shifts: Vec<[Option<f64>; 2]> = vec![[None, None]; cfg.p_grid.len()];
        for (dir, col) in cells {
            for (j, cell) in col.into_iter().enumerate() {
                let p = cfg.p_grid[j];
                let r = match cell.and_then(|s| {
                    let ci = sauc_ci_delta(&fit, s.value, cfg.level)?;
                    Ok((s, ci))
                }) {
                    Ok((s, ci)) => {
                        shifts[j][(dir == Direction::Max) as usize] = Some(s.value);
                        DtaRow {
                            scenario: key.label.clone(),
                            p,
                            direction: dir,
                            contrast_bound: Some(s.value),
                            sauc: Some(ci.sauc),
                            sauc_lo: Some(ci.lower),
                            sauc_hi: Some(ci.upper),
                            replicate_values: s.replicate_values,
                            p_i: s.p_i,
                            mean_constraint_active: Some(s.mean_constraint_active),
                            converged: Some(s.converged),
                            error: None,
                        }
                    }
                    Err(e) => DtaRow {
                        scenario: key.label.clone(),
                        p,
                        direction: dir,
                        contrast_bound: None,
                        sauc: None,
                        sauc_lo: None,
                        sauc_hi: None,
                        replicate_values: Vec::new(),
                        p_i: Vec::new(),
                        mean_constraint_active: None,
                        converged: None,
                        error: Some(e.to_string()),
                    },
                };
                rows.push(r);
            }
        }
        let mut points = Vec::new();
        for (j, &p) in cfg.p_grid.iter().enumerate() {
            if let [Some(lo), Some(hi)] = shifts[j] {
                let mid = sroc_curve(&params, DEFAULT_CURVE_POINTS);
                let lower = sroc_curve(&params.with_shift(lo), DEFAULT_CURVE_POINTS);
                let upper = sroc_curve(&params.with_shift(hi), DEFAULT_CURVE_POINTS);
                for ((m, l), u) in mid.iter().zip(&lower).zip(&upper) {
                    points.push(BandPoint {
                        p,
                        fpr: m.0,
                        sroc: m.1,
                        sroc_lower: l.1,
                        sroc_upper: u.1,
                    });
                }
            }
        }
        bands.push(ScenarioBand {
            scenario: key.label.clone(),
            points,
        });
    }
    let order: Vec<&str> = scenarios.iter().map(|s| s.label.as_str()).collect();
    rows.sort_by(|a, b| {
        let ia = order.iter().position(|l| *l == a.scenario);
        let ib = order.iter().position(|l| *l == b.scenario);
        ia.cmp(&ib)
            .then(a.direction.cmp(&b.direction).reverse())
            .then(b.p.total_cmp(&a.p))
    });
    let (se, sp) = sop(&fit);
    debug_assert!((sauc(&params) - base.sauc).abs() < 1e-15);
    Ok(DtaReport {
        omega_override,
        contrast,
        sop: [se, sp],
        sauc: base,
        study_ids: obs.iter().map(|o| o.study_id.clone()).collect(),
        scenarios: scenarios.to_vec(),
        rows,
        bands,
        unpublished: unpublished(obs.len(), &cfg.p_grid),
        fit,
    })
}
