//! Ordinary maximum-likelihood fits of the univariate random-effects model
//! `y_i ~ N(θ, s_i² + τ²)` and the bivariate Reitsma model
//! `y_i ~ N(θ, S_i + Ω)`.
//!
//! Both fits profile the mean out in closed form (weighted / generalized
//! least squares given the heterogeneity) and search only over the
//! heterogeneity parameters. Observations are put into a canonical order
//! before any arithmetic, so permuting the input gives bit-identical fits.

use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Sym2, Vec2};
use crate::optim::{golden_section, nelder_mead, NelderMeadOptions};
use crate::study_data::{BivariateObservation, UnivariateObservation};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// log τ below this is reported as a zero variance component.
pub const LOG_TAU_BOUNDARY: f64 = -8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnivariateFit {
    pub theta: f64,
    pub tau_sq: f64,
    pub se_theta: f64,
    pub loglik: f64,
    pub at_boundary: bool,
    pub n_studies: usize,
}

impl UnivariateFit {
    /// Marginal standard deviations `sqrt(s_i² + τ²)`, in input order.
    pub fn marginal_sds(&self, obs: &[UnivariateObservation]) -> Vec<f64> {
        obs.iter()
            .map(|o| (o.se * o.se + self.tau_sq).sqrt())
            .collect()
    }
}

fn canonical_univariate(obs: &[UnivariateObservation]) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = obs.iter().map(|o| (o.y, o.se * o.se)).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    v
}

/// (θ̂, Σw, loglik) at a fixed τ².
fn univariate_profile(data: &[(f64, f64)], tau_sq: f64) -> (f64, f64, f64) {
    let mut sw = 0.0;
    let mut swy = 0.0;
    for &(y, v) in data {
        let w = 1.0 / (v + tau_sq);
        sw += w;
        swy += w * y;
    }
    let theta = swy / sw;
    let mut ll = 0.0;
    for &(y, v) in data {
        let var = v + tau_sq;
        ll -= 0.5 * (LN_2PI + var.ln() + (y - theta) * (y - theta) / var);
    }
    (theta, sw, ll)
}

/// Univariate fit with τ² held at a supplied value.
pub fn univariate_at_tau_sq(obs: &[UnivariateObservation], tau_sq: f64) -> Result<UnivariateFit> {
    if obs.is_empty() {
        return Err(Error::InvalidInput("no observations".into()));
    }
    if !(tau_sq >= 0.0) {
        return Err(Error::Domain(format!("tau_sq {tau_sq} must be >= 0")));
    }
    let data = canonical_univariate(obs);
    let (theta, sw, loglik) = univariate_profile(&data, tau_sq);
    Ok(UnivariateFit {
        theta,
        tau_sq,
        se_theta: sw.powf(-0.5),
        loglik,
        at_boundary: tau_sq == 0.0,
        n_studies: obs.len(),
    })
}

pub fn fit_univariate_ml(obs: &[UnivariateObservation]) -> Result<UnivariateFit> {
    if obs.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "univariate fit needs at least 2 studies, got {}",
            obs.len()
        )));
    }
    let data = canonical_univariate(obs);
    let (ymin, ymax) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(y, _)| {
            (a.min(y), b.max(y))
        });
    let vmax = data.iter().map(|d| d.1).fold(0.0, f64::max);
    let upper = 4.0 * (ymax - ymin).powi(2) + vmax + 1.0;
    let neg_ll = |t: f64| -univariate_profile(&data, t).2;

    // coarse scan over {0} ∪ log grid, then golden refinement between neighbours
    let mut grid = vec![0.0];
    let steps = 240;
    for j in 0..=steps {
        grid.push(upper * 10f64.powf(-10.0 + 10.0 * j as f64 / steps as f64));
    }
    let values: Vec<f64> = grid.iter().map(|&t| neg_ll(t)).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonConvergence(
            "non-finite likelihood in univariate fit".into(),
        ));
    }
    let best = (0..grid.len())
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    let lo = if best == 0 { 0.0 } else { grid[best - 1] };
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let (mut tau_sq, v) = golden_section(neg_ll, lo, hi, 1e-14);
    if neg_ll(0.0) <= v || tau_sq < 1e-14 {
        tau_sq = 0.0;
    }
    univariate_at_tau_sq(obs, tau_sq)
}

/// Fitted Reitsma model. Covariance ordering is
/// `(theta1, theta2, tau1_sq, tau12, tau2_sq)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReitsmaFit {
    pub theta1: f64,
    pub theta2: f64,
    pub tau1_sq: f64,
    pub tau12: f64,
    pub tau2_sq: f64,
    pub loglik: f64,
    pub cov: Option<[[f64; 5]; 5]>,
    /// Why `cov` is missing, when it is.
    pub cov_note: Option<String>,
    pub converged: bool,
    pub tau1_at_boundary: bool,
    pub tau2_at_boundary: bool,
    pub iterations: usize,
    pub n_studies: usize,
}

impl ReitsmaFit {
    pub fn theta(&self) -> Vec2 {
        [self.theta1, self.theta2]
    }

    pub fn omega(&self) -> Sym2 {
        Sym2::new(self.tau1_sq, self.tau12, self.tau2_sq)
    }

    pub fn rho(&self) -> f64 {
        let d = (self.tau1_sq * self.tau2_sq).sqrt();
        if d > 0.0 {
            self.tau12 / d
        } else {
            0.0
        }
    }

    pub fn params(&self) -> [f64; 5] {
        [
            self.theta1,
            self.theta2,
            self.tau1_sq,
            self.tau12,
            self.tau2_sq,
        ]
    }
}

/// Canonical (sorted) copy of the data as (y, S_i).
fn canonical_bivariate(obs: &[BivariateObservation]) -> Vec<(Vec2, Sym2)> {
    let mut v: Vec<(Vec2, Sym2)> = obs
        .iter()
        .map(|o| ([o.y1, o.y2], Sym2::diag(o.var1, o.var2)))
        .collect();
    v.sort_by(|a, b| {
        a.0[0]
            .total_cmp(&b.0[0])
            .then(a.0[1].total_cmp(&b.0[1]))
            .then(a.1.a.total_cmp(&b.1.a))
            .then(a.1.c.total_cmp(&b.1.c))
    });
    v
}

/// GLS estimate of θ given Ω, and the summed precision.
fn gls_theta(data: &[(Vec2, Sym2)], omega: &Sym2) -> Option<(Vec2, Sym2)> {
    let mut precision = Sym2::ZERO;
    let mut rhs = [0.0; 2];
    for (y, s) in data {
        let w = s.add(omega).inverse()?;
        precision = precision.add(&w);
        let wy = w.mul_vec(*y);
        rhs[0] += wy[0];
        rhs[1] += wy[1];
    }
    let theta = precision.inverse()?.mul_vec(rhs);
    Some((theta, precision))
}

fn reitsma_loglik(data: &[(Vec2, Sym2)], theta: Vec2, omega: &Sym2) -> Option<f64> {
    let mut ll = 0.0;
    for (y, s) in data {
        let sigma = s.add(omega);
        if !sigma.is_positive_definite() {
            return None;
        }
        let inv = sigma.inverse()?;
        let e = [y[0] - theta[0], y[1] - theta[1]];
        ll -= 0.5 * (2.0 * LN_2PI + sigma.det().ln() + inv.quad_form(e));
    }
    ll.is_finite().then_some(ll)
}

fn omega_from_free(x: &[f64]) -> Sym2 {
    let t1 = x[0].exp();
    let t2 = x[1].exp();
    let rho = x[2].tanh();
    Sym2::new(t1 * t1, rho * t1 * t2, t2 * t2)
}

fn profile_neg_loglik(data: &[(Vec2, Sym2)], x: &[f64]) -> f64 {
    let omega = omega_from_free(x);
    match gls_theta(data, &omega).and_then(|(th, _)| reitsma_loglik(data, th, &omega)) {
        Some(ll) => -ll,
        None => f64::INFINITY,
    }
}

fn sample_var(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0)
}

fn moment_start(data: &[(Vec2, Sym2)]) -> [f64; 3] {
    let y1: Vec<f64> = data.iter().map(|d| d.0[0]).collect();
    let y2: Vec<f64> = data.iter().map(|d| d.0[1]).collect();
    let n = data.len() as f64;
    let (v1, v2) = (sample_var(&y1), sample_var(&y2));
    let s1 = data.iter().map(|d| d.1.a).sum::<f64>() / n;
    let s2 = data.iter().map(|d| d.1.c).sum::<f64>() / n;
    let t1 = (v1 - s1).max(0.1 * v1).max(1e-3);
    let t2 = (v2 - s2).max(0.1 * v2).max(1e-3);
    let (m1, m2) = (y1.iter().sum::<f64>() / n, y2.iter().sum::<f64>() / n);
    let cov = y1
        .iter()
        .zip(&y2)
        .map(|(a, b)| (a - m1) * (b - m2))
        .sum::<f64>()
        / (n - 1.0).max(1.0);
    let denom = (v1 * v2).sqrt();
    let rho = if denom > 0.0 { cov / denom } else { 0.0 }.clamp(-0.9, 0.9);
    [0.5 * t1.ln(), 0.5 * t2.ln(), rho.atanh()]
}

/// Maximizes the Reitsma log-likelihood (ordinary ML).
pub fn fit_reitsma_ml(obs: &[BivariateObservation]) -> Result<ReitsmaFit> {
    if obs.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "Reitsma fit needs at least 3 studies, got {}",
            obs.len()
        )));
    }
    let data = canonical_bivariate(obs);
    let start = moment_start(&data);
    let jitter = [
        [0.0, 0.0, 0.0],
        [0.7, 0.7, 0.0],
        [-0.7, -0.7, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ];
    let opts = NelderMeadOptions::default();
    let objective = |x: &[f64]| profile_neg_loglik(&data, x);

    let mut best: Option<crate::optim::Minimum> = None;
    for j in &jitter {
        let x0: Vec<f64> = start.iter().zip(j).map(|(s, d)| s + d).collect();
        let m = nelder_mead(objective, &x0, &opts);
        if best.as_ref().is_none_or(|b| m.value < b.value) {
            best = Some(m);
        }
    }
    let first = best.expect("at least one start");
    // restart from the incumbent to guard against a collapsed simplex
    let polish = nelder_mead(
        objective,
        &first.x,
        &NelderMeadOptions {
            initial_step: 0.05,
            ..opts.clone()
        },
    );
    let m = if polish.value <= first.value {
        polish
    } else {
        first
    };
    if !m.value.is_finite() {
        return Err(Error::NonConvergence(
            "Reitsma likelihood not finite at any start".into(),
        ));
    }

    let mut x = m.x.clone();
    let tau1_at_boundary = x[0] < LOG_TAU_BOUNDARY;
    let tau2_at_boundary = x[1] < LOG_TAU_BOUNDARY;
    let mut omega = omega_from_free(&x);
    if tau1_at_boundary {
        omega.a = 0.0;
        omega.b = 0.0;
        x[0] = f64::NEG_INFINITY;
    }
    if tau2_at_boundary {
        omega.c = 0.0;
        omega.b = 0.0;
    }
    let (theta, _) = gls_theta(&data, &omega)
        .ok_or_else(|| Error::NonConvergence("singular GLS system at optimum".into()))?;
    let loglik = reitsma_loglik(&data, theta, &omega)
        .ok_or_else(|| Error::NonConvergence("likelihood undefined at optimum".into()))?;

    let params = [theta[0], theta[1], omega.a, omega.b, omega.c];
    let (cov, cov_note) = match observed_information_inverse(&data, &params) {
        Ok(c) => (Some(c), None),
        Err(e) => (None, Some(e.to_string())),
    };

    Ok(ReitsmaFit {
        theta1: theta[0],
        theta2: theta[1],
        tau1_sq: omega.a,
        tau12: omega.b,
        tau2_sq: omega.c,
        loglik,
        cov,
        cov_note,
        converged: m.converged,
        tau1_at_boundary,
        tau2_at_boundary,
        iterations: m.iterations,
        n_studies: obs.len(),
    })
}

/// Keeps a fit's covariance but replaces Ω and re-profiles θ under it.
pub fn reitsma_with_omega(
    fit: &ReitsmaFit,
    obs: &[BivariateObservation],
    omega: Sym2,
) -> Result<ReitsmaFit> {
    if omega.a < 0.0 || omega.c < 0.0 || omega.det() < -1e-12 {
        return Err(Error::Domain(
            "heterogeneity override is not positive semidefinite".into(),
        ));
    }
    let data = canonical_bivariate(obs);
    let (theta, _) = gls_theta(&data, &omega)
        .ok_or_else(|| Error::Domain("singular marginal covariance under override".into()))?;
    let loglik = reitsma_loglik(&data, theta, &omega)
        .ok_or_else(|| Error::Domain("likelihood undefined under override".into()))?;
    Ok(ReitsmaFit {
        theta1: theta[0],
        theta2: theta[1],
        tau1_sq: omega.a,
        tau12: omega.b,
        tau2_sq: omega.c,
        loglik,
        tau1_at_boundary: omega.a == 0.0,
        tau2_at_boundary: omega.c == 0.0,
        ..fit.clone()
    })
}

/// Full log-likelihood in the natural parameters
/// `(theta1, theta2, tau1_sq, tau12, tau2_sq)`.
pub fn reitsma_loglik_at(obs: &[BivariateObservation], params: &[f64; 5]) -> Option<f64> {
    let data = canonical_bivariate(obs);
    natural_loglik(&data, params)
}

fn natural_loglik(data: &[(Vec2, Sym2)], p: &[f64; 5]) -> Option<f64> {
    reitsma_loglik(data, [p[0], p[1]], &Sym2::new(p[2], p[3], p[4]))
}

/// Inverse of the central-difference observed information, step
/// `1e-4 * max(1, |param|)`.
fn observed_information_inverse(data: &[(Vec2, Sym2)], p: &[f64; 5]) -> Result<[[f64; 5]; 5]> {
    let h: Vec<f64> = p.iter().map(|v| 1e-4 * v.abs().max(1.0)).collect();
    let eval = |di: usize, si: f64, dj: usize, sj: f64| -> Result<f64> {
        let mut q = *p;
        q[di] += si * h[di];
        q[dj] += sj * h[dj];
        natural_loglik(data, &q).ok_or_else(|| {
            Error::CovarianceUnavailable("likelihood undefined near the optimum".into())
        })
    };
    let f0 = natural_loglik(data, p)
        .ok_or_else(|| Error::CovarianceUnavailable("likelihood undefined at optimum".into()))?;
    let mut hess = SMatrix::<f64, 5, 5>::zeros();
    for i in 0..5 {
        let fp = eval(i, 1.0, i, 0.0)?;
        let fm = eval(i, -1.0, i, 0.0)?;
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let fpp = eval(i, 1.0, j, 1.0)?;
            let fpm = eval(i, 1.0, j, -1.0)?;
            let fmp = eval(i, -1.0, j, 1.0)?;
            let fmm = eval(i, -1.0, j, -1.0)?;
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let info = -hess;
    let chol = info.cholesky().ok_or_else(|| {
        Error::CovarianceUnavailable("observed information is not positive definite".into())
    })?;
    let inv = chol.inverse();
    let mut out = [[0.0; 5]; 5];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = 0.5 * (inv[(i, j)] + inv[(j, i)]);
        }
    }
    Ok(out)
}
