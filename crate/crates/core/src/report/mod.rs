//! Output files: JSON summaries, CSV tables and SVG figures.
//!
//! All writers are deterministic: floats use the shortest round-trip
//! representation and rows follow the report order.

pub mod svg;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::{Direction, ScoreMatrix};
use crate::error::{Error, Result};
use crate::model_fit::{ReitsmaFit, UnivariateFit};
use crate::sensitivity::{DtaReport, UnivariateReport};
use crate::sroc::{sroc_curve, SaucInterval, SrocParams, DEFAULT_CURVE_POINTS};
use svg::{Chart, Ribbon, Series, PALETTE};

pub const BOUNDS_HEADER: [&str; 7] = [
    "scenario",
    "p",
    "direction",
    "contrast_bound",
    "sauc",
    "sauc_lo",
    "sauc_hi",
];
pub const UNIVARIATE_BOUNDS_HEADER: [&str; 7] = [
    "scenario",
    "p",
    "direction",
    "contrast_bound",
    "theta",
    "theta_lo",
    "theta_hi",
];
pub const BAND_HEADER: [&str; 5] = ["p", "fpr", "sroc", "sroc_lower", "sroc_upper"];
pub const CURVE_HEADER: [&str; 2] = ["fpr", "sroc"];
pub const SCORES_HEADER: [&str; 5] = ["study_id", "key", "weight", "rank", "score"];

/// Contents of `fit.json` for diagnostic accuracy data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtaFitSummary {
    pub kind: String,
    pub n_studies: usize,
    pub n_continuity_corrected: usize,
    pub theta1: f64,
    pub theta2: f64,
    pub tau1_sq: f64,
    pub tau12: f64,
    pub tau2_sq: f64,
    pub sauc: f64,
    pub sauc_lo: f64,
    pub sauc_hi: f64,
    pub sauc_se: f64,
    pub sop_sensitivity: f64,
    pub sop_specificity: f64,
    pub contrast: [f64; 2],
    pub fit: ReitsmaFit,
}

/// Contents of `fit.json` for univariate data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnivariateFitSummary {
    pub kind: String,
    pub n_studies: usize,
    pub theta: f64,
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub tau_sq: f64,
    pub se_theta: f64,
    pub fit: UnivariateFit,
}

impl DtaFitSummary {
    pub fn new(
        fit: &ReitsmaFit,
        interval: &SaucInterval,
        sop: (f64, f64),
        contrast: [f64; 2],
        corrected: usize,
    ) -> Self {
        DtaFitSummary {
            kind: "dta".into(),
            n_studies: fit.n_studies,
            n_continuity_corrected: corrected,
            theta1: fit.theta1,
            theta2: fit.theta2,
            tau1_sq: fit.tau1_sq,
            tau12: fit.tau12,
            tau2_sq: fit.tau2_sq,
            sauc: interval.sauc,
            sauc_lo: interval.lower,
            sauc_hi: interval.upper,
            sauc_se: interval.se,
            sop_sensitivity: sop.0,
            sop_specificity: sop.1,
            contrast,
            fit: fit.clone(),
        }
    }
}

impl UnivariateFitSummary {
    pub fn new(fit: &UnivariateFit, z: f64) -> Self {
        UnivariateFitSummary {
            kind: "univariate".into(),
            n_studies: fit.n_studies,
            theta: fit.theta,
            theta_lo: fit.theta - z * fit.se_theta,
            theta_hi: fit.theta + z * fit.se_theta,
            tau_sq: fit.tau_sq,
            se_theta: fit.se_theta,
            fit: fit.clone(),
        }
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_sroc_curve_csv(path: &Path, params: &SrocParams) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(CURVE_HEADER)?;
    for (x, y) in sroc_curve(params, DEFAULT_CURVE_POINTS) {
        w.write_record([x.to_string(), y.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_dta_bounds_csv(path: &Path, report: &DtaReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(BOUNDS_HEADER)?;
    for r in &report.rows {
        w.write_record([
            r.scenario.clone(),
            r.p.to_string(),
            r.direction.to_string(),
            opt(r.contrast_bound),
            opt(r.sauc),
            opt(r.sauc_lo),
            opt(r.sauc_hi),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Univariate rows use the scenario label `univariate`.
pub fn write_univariate_bounds_csv(path: &Path, report: &UnivariateReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(UNIVARIATE_BOUNDS_HEADER)?;
    for r in &report.rows {
        w.write_record([
            "univariate".to_string(),
            r.p.to_string(),
            r.direction.to_string(),
            opt(r.bound),
            opt(r.theta),
            opt(r.theta_lo),
            opt(r.theta_hi),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn band_file_name(scenario: &str) -> String {
    format!("sroc_band_{scenario}.csv")
}

/// Writes one `sroc_band_<scenario>.csv` per scenario; returns the paths.
pub fn write_band_csvs(dir: &Path, report: &DtaReport) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for band in &report.bands {
        let path = dir.join(band_file_name(&band.scenario));
        let mut w = csv_writer(&path)?;
        w.write_record(BAND_HEADER)?;
        for pt in &band.points {
            w.write_record([
                pt.p.to_string(),
                pt.fpr.to_string(),
                pt.sroc.to_string(),
                pt.sroc_lower.to_string(),
                pt.sroc_upper.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}

/// Debug dump of a score matrix in long format.
pub fn write_scores_csv(path: &Path, m: &ScoreMatrix) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(SCORES_HEADER)?;
    for i in 0..m.n_studies() {
        for (rank, s) in m.scores[i].iter().enumerate() {
            w.write_record([
                m.study_ids[i].clone(),
                m.keys[i].to_string(),
                m.weights[i].to_string(),
                (rank + 1).to_string(),
                s.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `bound_vs_p.svg`: bounded estimate against `p` with CI ribbons.
pub fn univariate_plot(report: &UnivariateReport) -> String {
    let mut chart = Chart::new(
        "Worst-case bounds of the pooled estimate",
        "marginal selection probability p",
        "estimate",
    );
    for (i, dir) in [Direction::Max, Direction::Min].into_iter().enumerate() {
        let mut rows: Vec<_> = report
            .rows
            .iter()
            .filter(|r| r.direction == dir && r.theta.is_some())
            .collect();
        rows.sort_by(|a, b| a.p.total_cmp(&b.p));
        let color = PALETTE[i].to_string();
        chart.ribbons.push(Ribbon {
            color: color.clone(),
            points: rows
                .iter()
                .map(|r| {
                    (
                        r.p,
                        r.theta_lo.unwrap_or(f64::NAN),
                        r.theta_hi.unwrap_or(f64::NAN),
                    )
                })
                .collect(),
        });
        chart.series.push(Series {
            label: format!(
                "{} bound",
                if dir == Direction::Max {
                    "upper"
                } else {
                    "lower"
                }
            ),
            color,
            points: rows
                .iter()
                .map(|r| (r.p, r.theta.unwrap_or(f64::NAN)))
                .collect(),
            dashed: false,
        });
    }
    let ps: Vec<f64> = report.rows.iter().map(|r| r.p).collect();
    let (lo, hi) = min_max(&ps);
    chart.x_range = if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.05, hi + 0.05)
    };
    chart.series.push(Series {
        label: "no-bias estimate".into(),
        color: "#444".into(),
        points: vec![
            (chart.x_range.0, report.fit.theta),
            (chart.x_range.1, report.fit.theta),
        ],
        dashed: true,
    });
    chart.fit_y();
    chart.render()
}

/// `sauc_vs_p.svg`: SAUC lower and upper bounds against `p` per scenario.
pub fn sauc_plot(report: &DtaReport) -> String {
    let mut chart = Chart::new("SAUC bounds", "marginal selection probability p", "SAUC");
    for (i, key) in report.scenarios.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()].to_string();
        for dir in [Direction::Min, Direction::Max] {
            let mut rows: Vec<_> = report
                .rows
                .iter()
                .filter(|r| r.scenario == key.label && r.direction == dir && r.sauc.is_some())
                .collect();
            rows.sort_by(|a, b| a.p.total_cmp(&b.p));
            chart.ribbons.push(Ribbon {
                color: color.clone(),
                points: rows
                    .iter()
                    .map(|r| {
                        (
                            r.p,
                            r.sauc_lo.unwrap_or(f64::NAN),
                            r.sauc_hi.unwrap_or(f64::NAN),
                        )
                    })
                    .collect(),
            });
            chart.series.push(Series {
                label: if dir == Direction::Min {
                    key.label.clone()
                } else {
                    String::new()
                },
                color: color.clone(),
                points: rows
                    .iter()
                    .map(|r| (r.p, r.sauc.unwrap_or(f64::NAN)))
                    .collect(),
                dashed: dir == Direction::Max,
            });
        }
    }
    let ps: Vec<f64> = report.rows.iter().map(|r| r.p).collect();
    let (lo, hi) = min_max(&ps);
    chart.x_range = if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.05, hi + 0.05)
    };
    chart.fit_y();
    chart.render()
}

/// `sroc_band_<scenario>.svg`: the fitted SROC curve and its bands.
pub fn band_plot(report: &DtaReport, scenario: &str) -> Option<String> {
    let band = report.bands.iter().find(|b| b.scenario == scenario)?;
    let mut chart = Chart::new(
        &format!("SROC bands ({scenario})"),
        "false positive rate",
        "sensitivity",
    );
    chart.x_range = (0.0, 1.0);
    chart.y_range = (0.0, 1.0);
    let mut ps: Vec<f64> = band.points.iter().map(|b| b.p).collect();
    ps.dedup();
    for (i, p) in ps.iter().filter(|p| **p < 1.0).enumerate() {
        let color = PALETTE[(i + 1) % PALETTE.len()].to_string();
        let pts: Vec<_> = band.points.iter().filter(|b| b.p == *p).collect();
        chart.series.push(Series {
            label: format!("p = {p}"),
            color: color.clone(),
            points: pts.iter().map(|b| (b.fpr, b.sroc_lower)).collect(),
            dashed: true,
        });
        chart.series.push(Series {
            label: String::new(),
            color,
            points: pts.iter().map(|b| (b.fpr, b.sroc_upper)).collect(),
            dashed: true,
        });
    }
    let first_p = ps.first().copied();
    chart.series.push(Series {
        label: "fitted SROC".into(),
        color: PALETTE[0].into(),
        points: band
            .points
            .iter()
            .filter(|b| Some(b.p) == first_p)
            .map(|b| (b.fpr, b.sroc))
            .collect(),
        dashed: false,
    });
    Some(chart.render())
}

/// Writes every figure for a report; returns the paths.
pub fn write_dta_plots(dir: &Path, report: &DtaReport) -> Result<Vec<PathBuf>> {
    let mut paths = vec![dir.join("sauc_vs_p.svg")];
    write_text(&paths[0], &sauc_plot(report))?;
    for key in &report.scenarios {
        if let Some(svg) = band_plot(report, &key.label) {
            let path = dir.join(format!("sroc_band_{}.svg", key.label));
            write_text(&path, &svg)?;
            paths.push(path);
        }
    }
    Ok(paths)
}

pub fn write_univariate_plot(dir: &Path, report: &UnivariateReport) -> Result<PathBuf> {
    let path = dir.join("bound_vs_p.svg");
    write_text(&path, &univariate_plot(report))?;
    Ok(path)
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| {
            (a.min(*x), b.max(*x))
        })
}
