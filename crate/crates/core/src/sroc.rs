//! SROC curve, SAUC, summary operating point and the delta-method CI.
//!
//! The SROC curve is `logit⁻¹[θ₁ − (τ₁₂/τ₂²)(logit x + θ₂) + shift]` where
//! `shift` is the contrast `c̃ᵀb` with `c̃ = (1, −τ₁₂/τ₂²)`, i.e. the bias
//! of the pooled estimate projected onto the curve.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_fit::ReitsmaFit;
use crate::numeric::{expit, logit, two_sided_z};
use crate::quadrature::LogitQuadrature;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrocParams {
    pub theta1: f64,
    pub theta2: f64,
    pub tau1_sq: f64,
    pub tau12: f64,
    pub tau2_sq: f64,
    pub shift: f64,
}

impl SrocParams {
    pub fn new(theta1: f64, theta2: f64, tau1_sq: f64, tau12: f64, tau2_sq: f64) -> Result<Self> {
        if !(tau2_sq > 0.0) {
            return Err(Error::Domain(format!(
                "SROC needs tau2_sq > 0, got {tau2_sq}"
            )));
        }
        Ok(SrocParams {
            theta1,
            theta2,
            tau1_sq,
            tau12,
            tau2_sq,
            shift: 0.0,
        })
    }

    pub fn from_fit(fit: &ReitsmaFit) -> Result<Self> {
        Self::new(fit.theta1, fit.theta2, fit.tau1_sq, fit.tau12, fit.tau2_sq)
    }

    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = shift;
        self
    }

    /// τ₁₂ / τ₂²
    pub fn slope(&self) -> f64 {
        self.tau12 / self.tau2_sq
    }

    /// The SROC contrast `c̃ = (1, −τ₁₂/τ₂²)`.
    pub fn contrast(&self) -> [f64; 2] {
        [1.0, -self.slope()]
    }

    /// Linear predictor at `t = logit(x)`.
    pub fn eta(&self, logit_x: f64) -> f64 {
        self.theta1 - self.slope() * (logit_x + self.theta2) + self.shift
    }
}

pub fn sroc_point(x: f64, params: &SrocParams) -> Result<f64> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::Domain(format!(
            "false-positive rate {x} not in (0,1)"
        )));
    }
    Ok(expit(params.eta(logit(x))))
}

pub fn sauc(params: &SrocParams) -> f64 {
    sauc_with(params, &LogitQuadrature::default())
}

pub fn sauc_with(params: &SrocParams, quad: &LogitQuadrature) -> f64 {
    quad.integrate(|_, t| expit(params.eta(t)))
}

/// Summary operating point `(logit⁻¹ θ̂₁, logit⁻¹ θ̂₂)`.
pub fn sop(fit: &ReitsmaFit) -> (f64, f64) {
    (expit(fit.theta1), expit(fit.theta2))
}

/// `∫ SROC(1−SROC) ∇η dx` with respect to
/// `(θ₁, θ₂, τ₁², τ₁₂, τ₂²)`, the fit's covariance ordering.
pub fn sauc_gradient(params: &SrocParams) -> [f64; 5] {
    let slope = params.slope();
    let t22 = params.tau2_sq;
    LogitQuadrature::default().integrate_vec(|_, t| {
        let s = expit(params.eta(t));
        let w = s * (1.0 - s);
        let l = t + params.theta2;
        [
            w,
            -w * slope,
            0.0,
            -w * l / t22,
            w * params.tau12 * l / (t22 * t22),
        ]
    })
}

/// Delta-method SE of SAUC at the fitted (no-bias) parameters.
pub fn sauc_se_no_bias(fit: &ReitsmaFit) -> Result<f64> {
    let cov = fit.cov.as_ref().ok_or_else(|| {
        Error::CovarianceUnavailable(
            fit.cov_note
                .clone()
                .unwrap_or_else(|| "fit has no covariance".into()),
        )
    })?;
    let d = sauc_gradient(&SrocParams::from_fit(fit)?);
    let mut v = 0.0;
    for i in 0..5 {
        for j in 0..5 {
            v += d[i] * cov[i][j] * d[j];
        }
    }
    Ok(v.max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaucInterval {
    pub sauc: f64,
    pub lower: f64,
    pub upper: f64,
    /// SE of SAUC on the natural scale (no-bias fit).
    pub se: f64,
}

/// CI for the SAUC of the curve shifted by `shift`, built on the logit
/// scale: `logit⁻¹{logit S ± z·SE₀ / (S(1−S))}`.
///
/// `SE₀` is the delta-method SE of the unshifted SAUC from the no-bias fit,
/// so the interval at shift 0 is the ordinary no-bias CI and a shifted
/// interval only moves the centre and the logit-scale Jacobian.
pub fn sauc_ci_delta(fit: &ReitsmaFit, shift: f64, level: f64) -> Result<SaucInterval> {
    let z = two_sided_z(level)?;
    let se = sauc_se_no_bias(fit)?;
    let s = sauc(&SrocParams::from_fit(fit)?.with_shift(shift));
    let half = z * se / (s * (1.0 - s));
    let centre = logit(s);
    Ok(SaucInterval {
        sauc: s,
        lower: expit(centre - half),
        upper: expit(centre + half),
        se,
    })
}

/// Samples `n` points of the curve on an even grid of `[0.005, 0.995]`.
pub fn sroc_curve(params: &SrocParams, n: usize) -> Vec<(f64, f64)> {
    let n = n.max(2);
    (0..n)
        .map(|i| {
            let x = 0.005 + 0.99 * i as f64 / (n - 1) as f64;
            (x, expit(params.eta(logit(x))))
        })
        .collect()
}

pub const DEFAULT_CURVE_POINTS: usize = 201;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::DEFAULT_PANELS;

    fn flat(theta1: f64) -> SrocParams {
        SrocParams::new(theta1, 0.3, 0.2, 0.0, 0.5).unwrap()
    }

    #[test]
    fn flat_curves() {
        for x in [0.01, 0.3, 0.99] {
            assert_eq!(sroc_point(x, &flat(0.0)).unwrap(), 0.5);
            assert!((sroc_point(x, &flat(logit(0.9))).unwrap() - 0.9).abs() < 1e-15);
        }
        assert!((sauc(&flat(0.0)) - 0.5).abs() < 1e-10);
        assert!((sauc(&flat(logit(0.9))) - 0.9).abs() < 1e-10);
    }

    #[test]
    fn point_formula() {
        let p = SrocParams::new(1.0, 1.0, 0.171, -0.283, 0.588).unwrap();
        let v = sroc_point(0.5, &p).unwrap();
        assert!((v - expit(1.0 + 0.283 / 0.588)).abs() < 1e-15);
        assert!((v - 0.8148).abs() < 1e-4);
    }

    #[test]
    fn domain_errors() {
        let p = flat(0.0);
        assert!(sroc_point(0.0, &p).is_err());
        assert!(sroc_point(1.0, &p).is_err());
        assert!(SrocParams::new(0.0, 0.0, 0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn monotone_in_x_by_covariance_sign() {
        let xs: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
        for (tau12, sign) in [(-0.3, 1.0), (0.3, -1.0)] {
            let p = SrocParams::new(0.5, 0.5, 0.4, tau12, 0.6).unwrap();
            let ys: Vec<f64> = xs.iter().map(|&x| sroc_point(x, &p).unwrap()).collect();
            assert!(ys.windows(2).all(|w| sign * (w[1] - w[0]) >= 0.0));
        }
    }

    #[test]
    fn sauc_increasing_in_shift() {
        let p = SrocParams::new(0.75, 0.75, 0.17, -0.28, 0.59).unwrap();
        let vals: Vec<f64> = (-20..=20)
            .map(|k| sauc(&p.with_shift(k as f64 * 0.1)))
            .collect();
        assert!(vals.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn sauc_refinement_and_reference() {
        // reference value from adaptive quadrature of the same integrand
        let p = SrocParams::new(
            0.7463629283443207,
            0.7464173787375206,
            0.17054546314372235,
            -0.2832294986224449,
            0.5879515343069239,
        )
        .unwrap();
        let base = sauc(&p);
        let fine = sauc_with(&p, &LogitQuadrature::new(2 * DEFAULT_PANELS, 16));
        assert!((base - fine).abs() < 1e-9);
        assert!((base - 0.7237097496510633).abs() < 1e-8);
        // steep curve
        let steep = SrocParams::new(0.2, -0.4, 1.0, -2.5, 0.5).unwrap();
        let a = sauc(&steep);
        let b = sauc_with(&steep, &LogitQuadrature::new(4 * DEFAULT_PANELS, 16));
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn curve_grid() {
        let c = sroc_curve(&flat(0.0), DEFAULT_CURVE_POINTS);
        assert_eq!(c.len(), 201);
        assert!((c[0].0 - 0.005).abs() < 1e-15 && (c[200].0 - 0.995).abs() < 1e-12);
    }
}
