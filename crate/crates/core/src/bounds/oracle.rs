//! Population simulation of the bias under an explicit selection rule.
//!
//! Study types are the observed studies. A population is drawn with type
//! frequencies proportional to `1/p_i`, so that after selecting type `i`
//! with probability `p_i` the published types are balanced like the
//! observed data. Within a type the rule is the extremal one: publish when
//! the study's score `wᵢᵀz` lies in its top (or bottom) `p_i` fraction. The
//! pooled estimate is then refitted on the published studies with the
//! heterogeneity held fixed, which makes the ML refit a GLS mean.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::scenario::Direction;
use super::scores::INV_SQRT_FLOOR;
use crate::error::{Error, Result};
use crate::linalg::{dot, Sym2, Vec2};
use crate::numeric::norm_quantile;

pub const MIN_POPULATION: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OraclePopulation {
    Univariate {
        theta: f64,
        /// Marginal standard deviations of the study types.
        sigmas: Vec<f64>,
    },
    Bivariate {
        theta: Vec2,
        /// Marginal covariances `S_i + Ω` of the study types.
        covs: Vec<Sym2>,
        contrast: Vec2,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleBias {
    /// Refitted estimate minus the truth (length 1 or 2).
    pub bias: Vec<f64>,
    /// Contrast of the bias (the bias itself for the univariate model).
    pub contrast_bias: f64,
    /// Monte Carlo standard error of `contrast_bias`.
    pub se: f64,
    pub population_size: usize,
    pub selected: usize,
}

/// Simulates the bias of the refitted estimate when type `i` is published
/// with probability `p_i` by the extremal rule for `direction`.
pub fn oracle_bias_simulation(
    population: &OraclePopulation,
    p_i: &[f64],
    direction: Direction,
    population_size: usize,
    seed: u64,
) -> Result<OracleBias> {
    if population_size < MIN_POPULATION {
        return Err(Error::Precondition(format!(
            "population size {population_size} below {MIN_POPULATION}"
        )));
    }
    let (theta, covs, contrast): (Vec2, Vec<Sym2>, Vec2) = match population {
        OraclePopulation::Univariate { theta, sigmas } => (
            [*theta, 0.0],
            sigmas.iter().map(|s| Sym2::diag(s * s, 1.0)).collect(),
            [1.0, 0.0],
        ),
        OraclePopulation::Bivariate {
            theta,
            covs,
            contrast,
        } => (*theta, covs.clone(), *contrast),
    };
    let dim = match population {
        OraclePopulation::Univariate { .. } => 1,
        OraclePopulation::Bivariate { .. } => 2,
    };
    if covs.is_empty() || covs.len() != p_i.len() {
        return Err(Error::InvalidInput(
            "one selection probability per study type is required".into(),
        ));
    }
    if let Some(q) = p_i.iter().find(|q| !(**q > 0.0 && **q <= 1.0)) {
        return Err(Error::Domain(format!(
            "selection probability {q} not in (0,1]"
        )));
    }
    let mut precisions = Vec::with_capacity(covs.len());
    for (i, c) in covs.iter().enumerate() {
        if !(c.min_eigenvalue() > INV_SQRT_FLOOR) {
            return Err(Error::SingularStudy {
                study: i.to_string(),
            });
        }
        precisions.push(c.inverse().ok_or(Error::SingularStudy {
            study: i.to_string(),
        })?);
    }
    let a = precisions
        .iter()
        .fold(Sym2::ZERO, |acc, s| acc.add(s))
        .inverse()
        .ok_or_else(|| Error::Domain("summed precision is singular".into()))?;
    let ac = a.mul_vec(contrast);

    let inv_sum: f64 = p_i.iter().map(|q| 1.0 / q).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sign = match direction {
        Direction::Max => 1.0,
        Direction::Min => -1.0,
    };

    let mut info = Sym2::ZERO;
    let mut weighted_sum = [0.0; 2];
    let mut selected_terms: Vec<(usize, Vec2)> = Vec::new();
    let mut drawn = 0usize;
    for (i, cov) in covs.iter().enumerate() {
        let count = ((population_size as f64) * (1.0 / p_i[i]) / inv_sum)
            .round()
            .max(1.0) as usize;
        drawn += count;
        let root = cov.sqrt();
        let w = cov.inv_sqrt(INV_SQRT_FLOOR).mul_vec(ac);
        let w_norm = dot(w, w).sqrt();
        let threshold = w_norm * norm_quantile(1.0 - p_i[i]);
        for _ in 0..count {
            let z: Vec2 = if dim == 1 {
                [StandardNormal.sample(&mut rng), 0.0]
            } else {
                [
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                ]
            };
            let keep = if p_i[i] >= 1.0 {
                true
            } else if w_norm > 0.0 {
                sign * dot(w, z) > threshold
            } else {
                rng.random::<f64>() < p_i[i]
            };
            if keep {
                let resid = root.mul_vec(z);
                let y = [theta[0] + resid[0], theta[1] + resid[1]];
                let wy = precisions[i].mul_vec(y);
                info = info.add(&precisions[i]);
                weighted_sum[0] += wy[0];
                weighted_sum[1] += wy[1];
                selected_terms.push((i, precisions[i].mul_vec(resid)));
            }
        }
    }
    let n_sel = selected_terms.len();
    if n_sel == 0 {
        return Err(Error::Domain("selection rule published no studies".into()));
    }
    let info_inv = if dim == 1 {
        Sym2::diag(1.0 / info.a, 0.0)
    } else {
        info.inverse().ok_or_else(|| {
            Error::Domain("information of the selected studies is singular".into())
        })?
    };
    let refit = info_inv.mul_vec(weighted_sum);
    let bias2 = [
        refit[0] - theta[0],
        if dim == 1 { 0.0 } else { refit[1] - theta[1] },
    ];
    let c = if dim == 1 { [1.0, 0.0] } else { contrast };
    let contrast_bias = dot(c, bias2);

    // linearized per-study contributions to the contrast
    let scaled = info_inv.scale(n_sel as f64);
    let contrib: Vec<f64> = selected_terms
        .iter()
        .map(|(_, d)| dot(c, scaled.mul_vec(*d)))
        .collect();
    let mean = contrib.iter().sum::<f64>() / n_sel as f64;
    let var = contrib.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n_sel.max(2) - 1) as f64;
    let se = (var / n_sel as f64).sqrt();

    let bias = if dim == 1 {
        vec![bias2[0]]
    } else {
        vec![bias2[0], bias2[1]]
    };
    Ok(OracleBias {
        bias,
        contrast_bias,
        se,
        population_size: drawn,
        selected: n_sel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::copas_jackson_bound;

    #[test]
    fn no_selection_no_bias() {
        let pop = OraclePopulation::Univariate {
            theta: 0.3,
            sigmas: vec![0.5, 1.0, 2.0],
        };
        let r = oracle_bias_simulation(&pop, &[1.0; 3], Direction::Max, 100_000, 1).unwrap();
        assert!(r.contrast_bias.abs() <= 4.0 * r.se, "{r:?}");
        assert_eq!(r.selected, r.population_size);
    }

    #[test]
    fn equal_sigma_step_rule_matches_closed_form() {
        let pop = OraclePopulation::Univariate {
            theta: 0.0,
            sigmas: vec![0.8; 5],
        };
        let r = oracle_bias_simulation(&pop, &[0.5; 5], Direction::Max, 200_000, 9).unwrap();
        let cj = copas_jackson_bound(&[0.8; 5], 0.5).unwrap();
        assert!(
            (r.contrast_bias - cj).abs() <= 3.0 * r.se,
            "{} vs {cj} (se {})",
            r.contrast_bias,
            r.se
        );
        let r = oracle_bias_simulation(&pop, &[0.5; 5], Direction::Min, 200_000, 9).unwrap();
        assert!((r.contrast_bias + cj).abs() <= 3.0 * r.se);
    }

    #[test]
    fn preconditions() {
        let pop = OraclePopulation::Univariate {
            theta: 0.0,
            sigmas: vec![1.0],
        };
        assert!(oracle_bias_simulation(&pop, &[0.5], Direction::Max, 10, 1).is_err());
        assert!(oracle_bias_simulation(&pop, &[0.0], Direction::Max, 100_000, 1).is_err());
        assert!(oracle_bias_simulation(&pop, &[0.5, 0.5], Direction::Max, 100_000, 1).is_err());
    }
}
