//! Exhaustive search oracle for small instances.
//!
//! Enumerates monotone assignments of study probabilities drawn from the
//! grid `{0.02, 0.04, …, 1}` together with the envelope breakpoints
//! `{1/K, …, 1}`, plus assignments where one run of consecutive key groups
//! takes the level that exhausts the harmonic-mean budget exactly. The
//! inner problem is evaluated with [`inner_envelope`](super::inner_envelope).

use super::envelope::envelope_ratio;
use super::scenario::{validate_p, Direction};
use super::scores::ScoreMatrix;
use super::solver::chain_groups;
use crate::error::{Error, Result};

pub const MAX_STUDIES: usize = 4;
pub const MAX_DRAWS: usize = 16;

pub fn brute_force_bound(scores: &ScoreMatrix, p: f64, direction: Direction) -> Result<f64> {
    validate_p(p)?;
    let n = scores.n_studies();
    if n == 0 || n > MAX_STUDIES || scores.k > MAX_DRAWS {
        return Err(Error::TooLarge(format!(
            "N = {n}, K = {} (limits N ≤ {MAX_STUDIES}, K ≤ {MAX_DRAWS})",
            scores.k
        )));
    }
    let work = match direction {
        Direction::Max => scores.clone(),
        Direction::Min => scores.negated(),
    };
    let groups = chain_groups(&work.keys);
    let sizes: Vec<f64> = groups.iter().map(|g| g.len() as f64).collect();
    let budget = n as f64 / p;

    let mut grid: Vec<f64> = (1..=50).map(|j| j as f64 / 50.0).collect();
    grid.extend((1..=work.k).map(|m| m as f64 / work.k as f64));
    grid.sort_by(|a, b| a.total_cmp(b));
    grid.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let eval = |levels: &[f64]| -> f64 {
        groups
            .iter()
            .zip(levels)
            .map(|(g, &q)| {
                g.iter()
                    .map(|&i| {
                        work.weights[i] * envelope_ratio(&work.scores[i], q).unwrap_or(f64::NAN)
                    })
                    .sum::<f64>()
            })
            .sum()
    };
    let cost = |levels: &[f64]| -> f64 { sizes.iter().zip(levels).map(|(s, q)| s / q).sum() };

    let g = groups.len();
    let mut best = f64::NEG_INFINITY;
    let mut levels = vec![0.0; g];

    // grid points
    enumerate_monotone(&grid, g, &mut levels, 0, 0, &mut |lv| {
        if cost(lv) <= budget * (1.0 + 1e-12) {
            best = best.max(eval(lv));
        }
    });

    // one run [l, r] at the budget-completing level
    for l in 0..g {
        for r in l..g {
            let outside = g - (r - l + 1);
            let run_size: f64 = sizes[l..=r].iter().sum();
            let mut fixed = vec![0.0; outside];
            enumerate_monotone(&grid, outside, &mut fixed, 0, 0, &mut |fx| {
                let mut lv = vec![0.0; g];
                lv[..l].copy_from_slice(&fx[..l]);
                lv[r + 1..].copy_from_slice(&fx[l..]);
                let rest: f64 = (0..g)
                    .filter(|&j| j < l || j > r)
                    .map(|j| sizes[j] / lv[j])
                    .sum();
                let room = budget - rest;
                if room <= 0.0 {
                    return;
                }
                let v = run_size / room;
                if v > 1.0 + 1e-12 {
                    return;
                }
                let v = v.min(1.0);
                if (l > 0 && v < lv[l - 1]) || (r + 1 < g && v > lv[r + 1]) {
                    return;
                }
                lv[l..=r].iter_mut().for_each(|x| *x = v);
                best = best.max(eval(&lv));
            });
        }
    }

    if !best.is_finite() {
        return Err(Error::NonConvergence("no feasible grid point".into()));
    }
    Ok(match direction {
        Direction::Max => best,
        Direction::Min => -best,
    })
}

/// Calls `f` on every non-decreasing tuple of grid values of length `len`.
fn enumerate_monotone(
    grid: &[f64],
    len: usize,
    buf: &mut [f64],
    pos: usize,
    start: usize,
    f: &mut impl FnMut(&[f64]),
) {
    if pos == len {
        f(&buf[..len]);
        return;
    }
    for j in start..grid.len() {
        buf[pos] = grid[j];
        enumerate_monotone(grid, len, buf, pos + 1, j, f);
    }
}
