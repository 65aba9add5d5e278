//! Exact outer optimization over the study-level probabilities `p_i`.
//!
//! Writing `u_i = 1/p_i`, each study contributes
//! `F_i(u) = a_i · u · G_i(1/u)`, the perspective of the concave piecewise
//! linear envelope, so `F_i` is itself concave and piecewise linear with
//! breakpoints at `u = K/m`. On `u ∈ [K/(m+1), K/m]` its slope is
//! `a_i (P_m − m s_{m+1}) / K` where `P_m` is the sum of the top `m` scores;
//! beyond `u = K` it is constant.
//!
//! The marginal probability `p` of a population whose published studies are
//! the observed ones is the harmonic mean of the `p_i`, so the constraint is
//! `Σ u_i ≤ N/p`, together with `u_i ≥ 1` and the chain `u` non-increasing
//! in descending key order (ties share one value). The problem is a concave
//! separable program over a chain with one budget; it is solved by
//! bisection on the budget multiplier with pool-adjacent-violators for the
//! chain at each multiplier, then exact interpolation between the two
//! Lagrangian maximizers that bracket the budget.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use super::envelope::envelope_ratio;
use super::scenario::{validate_p, Direction};
use super::scores::ScoreMatrix;
use crate::error::{Error, Result};
use crate::numeric::median;

const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSolution {
    pub p: f64,
    pub direction: Direction,
    /// Extremal contrast of the bias (the median when replicates are pooled).
    pub value: f64,
    /// Optimal study-level selection probabilities, in study order.
    pub p_i: Vec<f64>,
    pub mean_constraint_active: bool,
    pub converged: bool,
    pub replicate_values: Vec<f64>,
    pub median: f64,
    /// Budget multiplier at the optimum.
    pub multiplier: f64,
    pub harmonic_mean: f64,
    pub arithmetic_mean: f64,
    pub iterations: usize,
}

/// Maximizes (or minimizes) `Σ a_i G_i(p_i)/p_i` over monotone `p_i` with
/// harmonic mean at least `p`.
pub fn optimize_selection(
    scores: &ScoreMatrix,
    p: f64,
    direction: Direction,
) -> Result<BoundSolution> {
    validate_p(p)?;
    if scores.n_studies() == 0 || scores.k == 0 {
        return Err(Error::InvalidInput("empty score matrix".into()));
    }
    let work: Cow<ScoreMatrix> = match direction {
        Direction::Max => Cow::Borrowed(scores),
        Direction::Min => Cow::Owned(scores.negated()),
    };
    let mut sol = ChainSolver::new(&work).solve(p)?;
    if direction == Direction::Min {
        sol.value = -sol.value;
    }
    sol.direction = direction;
    sol.median = sol.value;
    sol.replicate_values = vec![sol.value];
    Ok(sol)
}

/// Pools replicate solutions of one `(p, direction)` cell: the value is the
/// median and the reported `p_i` come from the replicate closest to it.
pub fn combine_replicates(solutions: &[BoundSolution]) -> Result<BoundSolution> {
    let first = solutions
        .first()
        .ok_or_else(|| Error::InvalidInput("no replicate solutions".into()))?;
    let values: Vec<f64> = solutions.iter().map(|s| s.value).collect();
    let med = median(&values)?;
    let closest = solutions
        .iter()
        .min_by(|a, b| (a.value - med).abs().total_cmp(&(b.value - med).abs()))
        .unwrap_or(first);
    Ok(BoundSolution {
        value: med,
        median: med,
        replicate_values: values,
        converged: solutions.iter().all(|s| s.converged),
        ..closest.clone()
    })
}

/// Evaluates the outer objective at given study probabilities.
pub fn objective(scores: &ScoreMatrix, p_i: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for ((s, a), &q) in scores.scores.iter().zip(&scores.weights).zip(p_i) {
        total += a * envelope_ratio(s, q)?;
    }
    Ok(total)
}

/// Study indices grouped by equal key, in descending key order.
pub(crate) fn chain_groups(keys: &[f64]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&i, &j| keys[j].total_cmp(&keys[i]).then(i.cmp(&j)));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if keys[g[0]] == keys[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

struct ChainSolver<'a> {
    scores: &'a ScoreMatrix,
    /// `slopes[i][m]` for `m = 0..K`, non-decreasing in `m`.
    slopes: Vec<Vec<f64>>,
    groups: Vec<Vec<usize>>,
}

struct Block {
    members: Vec<usize>,
    u: f64,
}

impl<'a> ChainSolver<'a> {
    fn new(scores: &'a ScoreMatrix) -> Self {
        let k = scores.k;
        let slopes = scores
            .scores
            .iter()
            .zip(&scores.weights)
            .map(|(s, a)| {
                // D_m = P_m − m s_{m+1}, accumulated with non-negative steps
                let mut d = 0.0;
                let mut out = Vec::with_capacity(k);
                out.push(0.0);
                for m in 1..k {
                    d += m as f64 * (s[m - 1] - s[m]);
                    out.push(a * d / k as f64);
                }
                out
            })
            .collect();
        ChainSolver {
            scores,
            slopes,
            groups: chain_groups(&scores.keys),
        }
    }

    /// Smallest maximizer of `Σ_{i∈B} F_i(u) − λ|B|u` on `[1, K]`: the left
    /// end of the first segment whose slope does not exceed `λ|B|`.
    fn block_u(&self, members: &[usize], lambda: f64) -> f64 {
        let k = self.scores.k;
        let target = lambda * members.len() as f64;
        let slope = |m: usize| members.iter().map(|&i| self.slopes[i][m]).sum::<f64>();
        let ok = |m: usize| slope(m) <= target;
        // number of m in 0..k satisfying `ok` (a prefix, slopes ascend in m)
        let (mut lo, mut hi) = (0usize, k);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if ok(mid) {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        if lo == 0 {
            k as f64
        } else {
            k as f64 / lo as f64
        }
    }

    fn pava(&self, lambda: f64) -> Vec<f64> {
        let mut stack: Vec<Block> = Vec::with_capacity(self.groups.len());
        for g in &self.groups {
            let mut block = Block {
                members: g.clone(),
                u: self.block_u(g, lambda),
            };
            while let Some(prev) = stack.last() {
                if block.u <= prev.u {
                    break;
                }
                let mut prev = stack.pop().expect("non-empty stack");
                prev.members.append(&mut block.members);
                let u = self.block_u(&prev.members, lambda);
                block = Block {
                    members: prev.members,
                    u,
                };
            }
            stack.push(block);
        }
        let mut u = vec![1.0; self.scores.n_studies()];
        for b in &stack {
            for &i in &b.members {
                u[i] = b.u;
            }
        }
        u
    }

    fn solve(&self, p: f64) -> Result<BoundSolution> {
        let n = self.scores.n_studies();
        let k = self.scores.k as f64;
        let budget = n as f64 / p;
        let total = |u: &[f64]| u.iter().sum::<f64>();

        let (u, multiplier, iterations, converged) = if p == 1.0 {
            (vec![1.0; n], 0.0, 0, true)
        } else {
            let u0 = self.pava(0.0);
            if total(&u0) <= budget * (1.0 + 1e-12) {
                (u0, 0.0, 0, true)
            } else {
                let max_slope = self
                    .slopes
                    .iter()
                    .map(|s| s[s.len() - 1])
                    .fold(0.0, f64::max);
                let (mut lo, mut hi) = (0.0, max_slope * (1.0 + 1e-9) + f64::MIN_POSITIVE);
                let mut it = 0;
                while it < MAX_BISECTIONS {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if total(&self.pava(mid)) <= budget {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                    it += 1;
                }
                let converged = hi - lo <= 1e-12 * hi.max(1e-300) || 0.5 * (lo + hi) <= lo;
                let u_hi = self.pava(hi);
                let u_lo = self.pava(lo);
                let (t_hi, t_lo) = (total(&u_hi), total(&u_lo));
                let u = if t_lo > t_hi {
                    let t = ((budget - t_hi) / (t_lo - t_hi)).clamp(0.0, 1.0);
                    let mixed: Vec<f64> = u_hi
                        .iter()
                        .zip(&u_lo)
                        .map(|(a, b)| (a + t * (b - a)).clamp(1.0, k))
                        .collect();
                    if total(&mixed) <= budget * (1.0 + 1e-12) {
                        mixed
                    } else {
                        u_hi
                    }
                } else {
                    u_hi
                };
                (u, hi, it, converged)
            }
        };

        let p_i: Vec<f64> = u.iter().map(|x| (1.0 / x).min(1.0)).collect();
        let value = objective(self.scores, &p_i)?;
        if !value.is_finite() {
            return Err(Error::NonConvergence(format!(
                "objective not finite at p = {p}"
            )));
        }
        let sum_u = total(&u);
        Ok(BoundSolution {
            p,
            direction: Direction::Max,
            value,
            mean_constraint_active: sum_u >= budget * (1.0 - 1e-9),
            converged,
            replicate_values: vec![value],
            median: value,
            multiplier,
            harmonic_mean: n as f64 / sum_u,
            arithmetic_mean: p_i.iter().sum::<f64>() / n as f64,
            iterations,
            p_i,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::copas_jackson_bound;
    use crate::bounds::scenario::SelectionKey;
    use crate::bounds::scores::{build_scores, draw_z, BoundProblem};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn univariate(sigmas: &[f64], k: usize, seed: u64) -> ScoreMatrix {
        let prob = BoundProblem::Univariate {
            study_ids: (0..sigmas.len()).map(|i| i.to_string()).collect(),
            sigmas: sigmas.to_vec(),
        };
        build_scores(&prob, &draw_z(k, 1, seed).unwrap(), &SelectionKey::d41()).unwrap()
    }

    fn random_bivariate(n: usize, k: usize, seed: u64) -> ScoreMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
        let scores: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let half: Vec<f64> = (0..k / 2).map(|_| rng.random_range(-2.0..2.0)).collect();
                half.iter().flat_map(|x| [*x, -*x]).collect()
            })
            .collect();
        let keys = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
        ScoreMatrix::from_parts(ids, keys, vec![1.0; n], scores).unwrap()
    }

    /// Random point of the feasible set: monotone in the key chain with
    /// harmonic mean at least `p`.
    fn random_feasible(m: &ScoreMatrix, p: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let groups = chain_groups(&m.keys);
        let n = m.n_studies() as f64;
        loop {
            let mut levels: Vec<f64> = (0..groups.len())
                .map(|_| rng.random_range(0.0..1.0f64))
                .collect();
            levels.sort_by(|a, b| a.total_cmp(b));
            let mut q = vec![0.0; m.n_studies()];
            for (g, l) in groups.iter().zip(&levels) {
                for &i in g {
                    q[i] = l.max(1e-6);
                }
            }
            let hm = n / q.iter().map(|x| 1.0 / x).sum::<f64>();
            if hm >= p {
                return q;
            }
            // pull toward one to make feasibility likely
            let s = rng.random_range(0.0..1.0f64);
            let q: Vec<f64> = q.iter().map(|x| x + s * (1.0 - x)).collect();
            let hm = n / q.iter().map(|x| 1.0 / x).sum::<f64>();
            if hm >= p {
                return q;
            }
        }
    }

    fn assert_feasible(m: &ScoreMatrix, sol: &BoundSolution) {
        let n = m.n_studies() as f64;
        let hm = n / sol.p_i.iter().map(|x| 1.0 / x).sum::<f64>();
        assert!(hm >= sol.p - 1e-9, "harmonic mean {hm} < {}", sol.p);
        assert!(sol.arithmetic_mean >= sol.p - 1e-9);
        assert!(sol.p_i.iter().all(|q| *q > 0.0 && *q <= 1.0));
        let groups = chain_groups(&m.keys);
        for w in groups.windows(2) {
            assert!(sol.p_i[w[0][0]] <= sol.p_i[w[1][0]] + 1e-9);
        }
        for g in &groups {
            assert!(g.iter().all(|&i| sol.p_i[i] == sol.p_i[g[0]]));
        }
    }

    #[test]
    fn p_one_pins_everything() {
        let m = univariate(&[0.3, 0.8, 1.5], 2000, 4);
        for dir in [Direction::Max, Direction::Min] {
            let sol = optimize_selection(&m, 1.0, dir).unwrap();
            assert!(sol.p_i.iter().all(|q| *q == 1.0));
            assert!(sol.value.abs() <= 3.0 * m.mc_se + 1e-12);
        }
    }

    #[test]
    fn antithetic_symmetry() {
        for seed in 0..5 {
            let m = random_bivariate(5, 40, seed);
            for p in [0.9, 0.5, 0.2] {
                let hi = optimize_selection(&m, p, Direction::Max).unwrap();
                let lo = optimize_selection(&m, p, Direction::Min).unwrap();
                assert!((hi.value + lo.value).abs() <= 1e-9);
                assert!(hi.value >= 0.0);
            }
        }
    }

    #[test]
    fn equal_sigma_matches_closed_form() {
        let sigmas = [0.7; 14];
        for p in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let avg: f64 = (0..10)
                .map(|s| {
                    optimize_selection(&univariate(&sigmas, 2000, 100 + s), p, Direction::Max)
                        .unwrap()
                        .value
                })
                .sum::<f64>()
                / 10.0;
            let cj = copas_jackson_bound(&sigmas, p).unwrap();
            assert!(((avg - cj) / cj).abs() < 0.02, "p={p}: {avg} vs {cj}");
        }
    }

    #[test]
    fn monotone_in_p() {
        let m = univariate(&[0.2, 0.5, 0.5, 0.9, 1.4, 2.0], 500, 8);
        let b = random_bivariate(6, 200, 3);
        for mat in [&m, &b] {
            let vals: Vec<f64> = (1..=10)
                .map(|j| {
                    optimize_selection(mat, j as f64 / 10.0, Direction::Max)
                        .unwrap()
                        .value
                })
                .collect();
            assert!(vals.windows(2).all(|w| w[1] <= w[0]), "{vals:?}");
        }
    }

    #[test]
    fn dominates_random_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..3 {
            let m = random_bivariate(4, 60, seed);
            for p in [0.8, 0.4] {
                let hi = optimize_selection(&m, p, Direction::Max).unwrap();
                let lo = optimize_selection(&m, p, Direction::Min).unwrap();
                assert_feasible(&m, &hi);
                assert_feasible(&m, &lo);
                for _ in 0..1000 {
                    let q = random_feasible(&m, p, &mut rng);
                    let v = objective(&m, &q).unwrap();
                    assert!(v <= hi.value + 1e-6 && v >= lo.value - 1e-6);
                }
            }
        }
    }

    #[test]
    fn ties_share_probability() {
        let m = univariate(&[1.0, 1.0, 2.0, 2.0, 3.0], 100, 1);
        let sol = optimize_selection(&m, 0.4, Direction::Max).unwrap();
        assert_feasible(&m, &sol);
        assert!(sol.mean_constraint_active);
    }

    #[test]
    fn zero_scores_give_zero() {
        let m = ScoreMatrix::from_parts(
            vec!["a".into(), "b".into()],
            vec![1.0, 2.0],
            vec![1.0, 1.0],
            vec![vec![0.0; 8], vec![0.0; 8]],
        )
        .unwrap();
        for p in [0.1, 0.5, 1.0] {
            assert_eq!(
                optimize_selection(&m, p, Direction::Max).unwrap().value,
                0.0
            );
        }
    }

    #[test]
    fn replicate_pooling() {
        let m = univariate(&[1.0, 2.0], 20, 1);
        let mut sols: Vec<BoundSolution> = (0..4)
            .map(|_| optimize_selection(&m, 0.5, Direction::Max).unwrap())
            .collect();
        for (i, s) in sols.iter_mut().enumerate() {
            s.value = [1.0, 2.0, 3.0, 10.0][i];
        }
        let c = combine_replicates(&sols).unwrap();
        assert_eq!(c.value, 2.5);
        assert_eq!(c.replicate_values, vec![1.0, 2.0, 3.0, 10.0]);
        assert!(combine_replicates(&[]).is_err());
    }
}
