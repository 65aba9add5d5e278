//! Worst-case bias bounds under monotone selection.
//!
//! A selection function `P(published | y, Σ)` is only assumed to be
//! non-increasing in a study's variance key and to have marginal probability
//! `p`. With a Monte Carlo sample `z_1..z_K` the bias of the pooled estimate
//! becomes a finite program in the per-draw probabilities `p_{i,k}`. The
//! inner problem over `p_{i,k}` for a fixed study probability `p_i` is a
//! sorted-greedy envelope ([`envelope`]); the outer problem over `p_i` is
//! solved exactly in [`solver`]. [`brute`] and [`oracle`] are independent
//! checks used by the tests and the acceptance suite.

pub mod brute;
pub mod envelope;
pub mod oracle;
pub mod scenario;
pub mod scores;
pub mod solver;

pub use brute::brute_force_bound;
pub use envelope::inner_envelope;
pub use oracle::{oracle_bias_simulation, OracleBias, OraclePopulation};
pub use scenario::{Direction, SelectionKey, SelectionScenario};
pub use scores::{build_scores, draw_z, BoundProblem, ScoreMatrix, ZSample};
pub use solver::{optimize_selection, BoundSolution};

use crate::error::{Error, Result};
use crate::numeric::{norm_pdf, norm_quantile};

/// Closed-form bound `(Σσ⁻¹ / Σσ⁻²)·φ(Φ⁻¹(p))/p` on the absolute bias of
/// the inverse-variance weighted mean.
pub fn copas_jackson_bound(sigmas: &[f64], p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain(format!(
            "selection probability {p} not in (0,1]"
        )));
    }
    if sigmas.is_empty() {
        return Err(Error::InvalidInput("no standard deviations".into()));
    }
    if let Some(s) = sigmas.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidInput(format!(
            "standard deviation {s} is not positive"
        )));
    }
    if p == 1.0 {
        return Ok(0.0);
    }
    let s1: f64 = sigmas.iter().map(|s| 1.0 / s).sum();
    let s2: f64 = sigmas.iter().map(|s| 1.0 / (s * s)).sum();
    Ok(s1 / s2 * norm_pdf(norm_quantile(p)) / p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn copas_jackson_values() {
        let b = copas_jackson_bound(&[1.0, 1.0, 1.0], 0.5).unwrap();
        assert!((b - 0.797_884_560_8).abs() < 1e-9);
        assert_eq!(copas_jackson_bound(&[0.3, 2.0], 1.0).unwrap(), 0.0);
        // φ(Φ⁻¹(0.2)) by hand: Φ⁻¹(0.2) = -0.841621233572914
        let q: f64 = -0.841_621_233_572_914;
        let phi = (-0.5 * q * q).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let b = copas_jackson_bound(&[1.0], 0.2).unwrap();
        assert!((b - phi / 0.2).abs() < 1e-9);
        assert!((b - 1.399_81).abs() < 1e-5);
    }

    #[test]
    fn copas_jackson_errors() {
        assert!(matches!(
            copas_jackson_bound(&[1.0], 0.0),
            Err(Error::Domain(_))
        ));
        assert!(copas_jackson_bound(&[1.0], 1.5).is_err());
        assert!(copas_jackson_bound(&[0.0], 0.5).is_err());
        assert!(copas_jackson_bound(&[], 0.5).is_err());
    }

    #[test]
    fn copas_jackson_scale_equivariant() {
        let a = copas_jackson_bound(&[0.5, 1.0, 2.0], 0.3).unwrap();
        let b = copas_jackson_bound(&[1.0, 2.0, 4.0], 0.3).unwrap();
        assert!((2.0 * a - b).abs() < 1e-12);
    }
}
