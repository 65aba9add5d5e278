//! Scalar helpers: logit transforms, the standard normal, medians.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Inverse logit, evaluated without overflow for large |x|.
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn standard_normal() -> Normal {
    Normal::standard()
}

pub fn norm_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    standard_normal().pdf(x)
}

pub fn norm_cdf(x: f64) -> f64 {
    standard_normal().cdf(x)
}

/// Φ⁻¹(p); returns ±∞ at the endpoints.
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        standard_normal().inverse_cdf(p)
    }
}

/// Two-sided critical value z_{1-(1-level)/2}.
pub fn two_sided_z(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!(
            "coverage level {level} not in (0,1)"
        )));
    }
    Ok(norm_quantile(0.5 + level / 2.0))
}

/// Standard median; the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("median of an empty list".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expit_inverts_logit() {
        for &p in &[1e-9, 0.1, 0.5, 0.9, 1.0 - 1e-9] {
            assert!((expit(logit(p)) - p).abs() < 1e-12);
        }
        assert_eq!(expit(-800.0), 0.0);
        assert_eq!(expit(800.0), 1.0);
    }

    #[test]
    fn quantile_endpoints() {
        assert_eq!(norm_quantile(1.0), f64::INFINITY);
        assert_eq!(norm_pdf(norm_quantile(1.0)), 0.0);
        assert!((norm_quantile(0.975) - 1.959964).abs() < 1e-6);
    }

    #[test]
    fn median_odd_even_empty() {
        assert_eq!(median(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(median(&[1.0, 2.0, 3.0, 10.0]).unwrap(), 2.5);
        assert_eq!(median(&[3.0, 1.0, 2.0]).unwrap(), 2.0);
        assert!(median(&[]).is_err());
    }
}
