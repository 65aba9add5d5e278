//! Antithetic normal draws and per-study score lists.
//!
//! The bias of the pooled estimate under per-draw selection probabilities
//! `p_{i,k}` is `(1/K) Σ_i Σ_k a_i s_{i,k} p_{i,k} / p_i` where, for the
//! univariate model, `a_i = σ_i⁻¹ / Σσ⁻²` and `s_{i,k} = z_k`, and for the
//! bivariate model `a_i = 1` and `s_{i,k} = cᵀ A Σ_i^{-1/2} z_k` with
//! `A = (Σ Σ_i⁻¹)⁻¹`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::scenario::{validate_k, SelectionKey};
use crate::error::{Error, Result};
use crate::linalg::{dot, Sym2, Vec2};
use crate::model_fit::{ReitsmaFit, UnivariateFit};
use crate::study_data::{BivariateObservation, UnivariateObservation};

/// Eigenvalue floor of the symmetric inverse square root.
pub const INV_SQRT_FLOOR: f64 = 1e-12;

/// `K` draws of a `dim`-dimensional standard normal, stored row-major in
/// antithetic pairs `z₁, −z₁, z₂, −z₂, …`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZSample {
    pub k: usize,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl ZSample {
    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }
}

pub fn draw_z(k: usize, dim: usize, seed: u64) -> Result<ZSample> {
    validate_k(k)?;
    if !(1..=2).contains(&dim) {
        return Err(Error::InvalidInput(format!(
            "dimension {dim} is not 1 or 2"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(k * dim);
    let mut draw = vec![0.0; dim];
    for _ in 0..k / 2 {
        for d in draw.iter_mut() {
            *d = StandardNormal.sample(&mut rng);
        }
        values.extend_from_slice(&draw);
        values.extend(draw.iter().map(|d| -d));
    }
    Ok(ZSample { k, dim, values })
}

/// The quantities that determine the score lists, with heterogeneity fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BoundProblem {
    Univariate {
        study_ids: Vec<String>,
        /// Marginal standard deviations `sqrt(se² + τ²)`.
        sigmas: Vec<f64>,
    },
    Bivariate {
        study_ids: Vec<String>,
        /// Within-study covariances `S_i`.
        within: Vec<Sym2>,
        omega: Sym2,
        contrast: Vec2,
    },
}

impl BoundProblem {
    pub fn univariate(fit: &UnivariateFit, obs: &[UnivariateObservation]) -> Self {
        BoundProblem::Univariate {
            study_ids: obs.iter().map(|o| o.study_id.clone()).collect(),
            sigmas: fit.marginal_sds(obs),
        }
    }

    /// Bivariate problem with `Ω` from the fit and the given contrast.
    pub fn bivariate(fit: &ReitsmaFit, obs: &[BivariateObservation], contrast: Vec2) -> Self {
        Self::bivariate_with_omega(obs, fit.omega(), contrast)
    }

    pub fn bivariate_with_omega(obs: &[BivariateObservation], omega: Sym2, contrast: Vec2) -> Self {
        BoundProblem::Bivariate {
            study_ids: obs.iter().map(|o| o.study_id.clone()).collect(),
            within: obs.iter().map(|o| Sym2::diag(o.var1, o.var2)).collect(),
            omega,
            contrast,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            BoundProblem::Univariate { .. } => 1,
            BoundProblem::Bivariate { .. } => 2,
        }
    }

    pub fn n_studies(&self) -> usize {
        match self {
            BoundProblem::Univariate { study_ids, .. }
            | BoundProblem::Bivariate { study_ids, .. } => study_ids.len(),
        }
    }
}

/// Per-study score lists sorted in descending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub study_ids: Vec<String>,
    /// Ordering key κ_i; selection is non-increasing in κ.
    pub keys: Vec<f64>,
    /// Constant weights `a_i`.
    pub weights: Vec<f64>,
    pub scores: Vec<Vec<f64>>,
    pub k: usize,
    /// Standard error of the Monte Carlo mean of the unselected objective
    /// `(1/K) Σ_k Σ_i a_i s_{i,k}`.
    pub mc_se: f64,
}

impl ScoreMatrix {
    pub fn n_studies(&self) -> usize {
        self.scores.len()
    }

    /// Scores of the minimization problem: negated and re-sorted.
    pub fn negated(&self) -> ScoreMatrix {
        let mut out = self.clone();
        for s in out.scores.iter_mut() {
            s.reverse();
            s.iter_mut().for_each(|x| *x = -*x);
        }
        out
    }

    /// Builds a matrix directly from score lists (sorted internally).
    pub fn from_parts(
        study_ids: Vec<String>,
        keys: Vec<f64>,
        weights: Vec<f64>,
        scores: Vec<Vec<f64>>,
    ) -> Result<ScoreMatrix> {
        let n = scores.len();
        if n == 0 || keys.len() != n || weights.len() != n || study_ids.len() != n {
            return Err(Error::InvalidInput(
                "score matrix parts have mismatched lengths".into(),
            ));
        }
        let k = scores[0].len();
        if k == 0 || scores.iter().any(|s| s.len() != k) {
            return Err(Error::InvalidInput(
                "score lists must share a non-zero length".into(),
            ));
        }
        if scores
            .iter()
            .flatten()
            .chain(&weights)
            .chain(&keys)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput(
                "non-finite score, weight or key".into(),
            ));
        }
        let totals: Vec<f64> = (0..k)
            .map(|j| (0..n).map(|i| weights[i] * scores[i][j]).sum())
            .collect();
        let mc_se = standard_error(&totals);
        let scores = scores
            .into_iter()
            .map(|mut s| {
                s.sort_by(|a, b| b.total_cmp(a));
                s
            })
            .collect();
        Ok(ScoreMatrix {
            study_ids,
            keys,
            weights,
            scores,
            k,
            mc_se,
        })
    }
}

fn standard_error(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

/// Score matrix for `problem` under the ordering key `key`. The univariate
/// key is the marginal variance regardless of the β weights.
pub fn build_scores(
    problem: &BoundProblem,
    z: &ZSample,
    key: &SelectionKey,
) -> Result<ScoreMatrix> {
    if z.dim != problem.dim() {
        return Err(Error::InvalidInput(format!(
            "draws have dimension {} but the problem needs {}",
            z.dim,
            problem.dim()
        )));
    }
    match problem {
        BoundProblem::Univariate { study_ids, sigmas } => {
            if study_ids.len() != sigmas.len() || sigmas.is_empty() {
                return Err(Error::InvalidInput(
                    "univariate problem has no studies".into(),
                ));
            }
            if let Some(i) = sigmas.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
                return Err(Error::SingularStudy {
                    study: study_ids[i].clone(),
                });
            }
            let norm: f64 = sigmas.iter().map(|s| 1.0 / (s * s)).sum();
            let weights = sigmas.iter().map(|s| 1.0 / s / norm).collect();
            let keys = sigmas.iter().map(|s| s * s).collect();
            let scores = vec![z.values.clone(); sigmas.len()];
            ScoreMatrix::from_parts(study_ids.clone(), keys, weights, scores)
        }
        BoundProblem::Bivariate {
            study_ids,
            within,
            omega,
            contrast,
        } => {
            if study_ids.len() != within.len() || within.is_empty() {
                return Err(Error::InvalidInput(
                    "bivariate problem has no studies".into(),
                ));
            }
            key.validate()?;
            let marginal: Vec<Sym2> = within.iter().map(|s| s.add(omega)).collect();
            let mut precision_sum = Sym2::ZERO;
            let mut roots = Vec::with_capacity(marginal.len());
            for (sigma, id) in marginal.iter().zip(study_ids) {
                let singular = || Error::SingularStudy { study: id.clone() };
                if !(sigma.min_eigenvalue() > INV_SQRT_FLOOR) {
                    return Err(singular());
                }
                precision_sum = precision_sum.add(&sigma.inverse().ok_or_else(singular)?);
                roots.push(sigma.inv_sqrt(INV_SQRT_FLOOR));
            }
            let a = precision_sum
                .inverse()
                .ok_or_else(|| Error::Domain("summed precision is singular".into()))?;
            let ac = a.mul_vec(*contrast);
            let scores = roots
                .iter()
                .map(|root| {
                    let w = root.mul_vec(ac);
                    (0..z.k)
                        .map(|j| {
                            let r = z.row(j);
                            dot(w, [r[0], r[1]])
                        })
                        .collect()
                })
                .collect();
            let keys = within.iter().map(|s| key.key(s.a, s.c)).collect();
            ScoreMatrix::from_parts(study_ids.clone(), keys, vec![1.0; within.len()], scores)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn antithetic_pairs() {
        let z = draw_z(4, 1, 7).unwrap();
        assert_eq!(z.values[1], -z.values[0]);
        assert_eq!(z.values[3], -z.values[2]);
        assert_eq!(z.values.iter().sum::<f64>(), 0.0);
        assert!(draw_z(5, 1, 7).is_err());
        assert!(draw_z(4, 3, 7).is_err());
    }

    #[test]
    fn deterministic_and_variance() {
        let a = draw_z(2000, 2, 99).unwrap();
        let b = draw_z(2000, 2, 99).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, draw_z(2000, 2, 100).unwrap());
        let z = draw_z(2000, 1, 5).unwrap();
        let var = z.values.iter().map(|x| x * x).sum::<f64>() / 1999.0;
        assert!((0.9..=1.1).contains(&var), "variance {var}");
    }

    #[test]
    fn univariate_single_study() {
        let z = draw_z(6, 1, 1).unwrap();
        let p = BoundProblem::Univariate {
            study_ids: vec!["a".into()],
            sigmas: vec![1.0],
        };
        let m = build_scores(&p, &z, &SelectionKey::d41()).unwrap();
        assert_eq!(m.weights, vec![1.0]);
        let mut sorted = z.values.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        assert_eq!(m.scores[0], sorted);
    }

    #[test]
    fn diagonal_bivariate_by_hand() {
        // Ω = 0, S_i diagonal, c = (1,0): A is diagonal with
        // A₁₁ = 1/Σ(1/v1_i), so s_{i,k} = A₁₁ v1_i^{-1/2} z_{k,1}.
        let within = [(0.5, 2.0), (1.0, 0.3), (4.0, 1.0)];
        let obs: Vec<BivariateObservation> = within
            .iter()
            .enumerate()
            .map(|(i, &(v1, v2))| BivariateObservation {
                study_id: format!("s{i}"),
                y1: 0.0,
                y2: 0.0,
                var1: v1,
                var2: v2,
            })
            .collect();
        let prob = BoundProblem::bivariate_with_omega(&obs, Sym2::ZERO, [1.0, 0.0]);
        let z = draw_z(8, 2, 3).unwrap();
        let m = build_scores(&prob, &z, &SelectionKey::d43()).unwrap();
        let a11 = 1.0 / within.iter().map(|w| 1.0 / w.0).sum::<f64>();
        for (i, &(v1, _)) in within.iter().enumerate() {
            let mut expect: Vec<f64> = (0..8).map(|k| a11 / v1.sqrt() * z.row(k)[0]).collect();
            expect.sort_by(|a, b| b.total_cmp(a));
            for (x, y) in m.scores[i].iter().zip(&expect) {
                assert!((x - y).abs() < 1e-14);
            }
        }
        assert_eq!(m.keys, vec![2.5, 1.3, 5.0]);
    }

    #[test]
    fn zero_contrast_and_singular() {
        let obs = vec![
            BivariateObservation {
                study_id: "a".into(),
                y1: 0.0,
                y2: 0.0,
                var1: 1.0,
                var2: 1.0,
            },
            BivariateObservation {
                study_id: "bad".into(),
                y1: 0.0,
                y2: 0.0,
                var1: 0.0,
                var2: 1.0,
            },
        ];
        let z = draw_z(4, 2, 1).unwrap();
        let p = BoundProblem::bivariate_with_omega(&obs[..1], Sym2::ZERO, [0.0, 0.0]);
        let m = build_scores(&p, &z, &SelectionKey::d41()).unwrap();
        assert!(m.scores[0].iter().all(|s| *s == 0.0));
        let p = BoundProblem::bivariate_with_omega(&obs, Sym2::ZERO, [1.0, 0.0]);
        match build_scores(&p, &z, &SelectionKey::d41()) {
            Err(Error::SingularStudy { study }) => assert_eq!(study, "bad"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negated_is_sorted_mirror() {
        let z = draw_z(10, 1, 4).unwrap();
        let p = BoundProblem::Univariate {
            study_ids: vec!["a".into(), "b".into()],
            sigmas: vec![1.0, 2.0],
        };
        let m = build_scores(&p, &z, &SelectionKey::d41()).unwrap();
        // antithetic draws: the negated lists are identical
        assert_eq!(m.negated().scores, m.scores);
    }
}
