//! Exact inner maximization over the per-draw probabilities.
//!
//! For fixed `p_i`, maximizing `(1/K) Σ_k s_k p_k` subject to
//! `(1/K) Σ_k p_k = p_i` and `0 ≤ p_k ≤ 1` is a fractional knapsack: fill
//! the largest scores first.

use crate::error::{Error, Result};

/// `G(p_i) = (1/K)(s₁ + … + s_m + (K p_i − m) s_{m+1})`, `m = ⌊K p_i⌋`, for
/// scores sorted in descending order.
pub fn inner_envelope(sorted_scores: &[f64], p_i: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_i) {
        return Err(Error::Domain(format!(
            "study probability {p_i} not in [0,1]"
        )));
    }
    let k = sorted_scores.len();
    if k == 0 {
        return Err(Error::InvalidInput("empty score list".into()));
    }
    let mass = k as f64 * p_i;
    let m = (mass.floor() as usize).min(k);
    let top: f64 = sorted_scores[..m].iter().sum();
    let frac = if m < k {
        (mass - m as f64) * sorted_scores[m]
    } else {
        0.0
    };
    Ok((top + frac) / k as f64)
}

/// `G(p_i)/p_i`, extended by its limit (the top score) at `p_i = 0`.
pub fn envelope_ratio(sorted_scores: &[f64], p_i: f64) -> Result<f64> {
    if p_i == 0.0 {
        return sorted_scores
            .first()
            .copied()
            .ok_or_else(|| Error::InvalidInput("empty score list".into()));
    }
    Ok(inner_envelope(sorted_scores, p_i)? / p_i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Maximum of a linear objective over `{0 ≤ x ≤ 1, Σx = mass}` by
    /// enumerating the polytope's vertices: all coordinates at a bound except
    /// at most one.
    fn lp_vertex_oracle(scores: &[f64], p: f64) -> f64 {
        let k = scores.len();
        let mass = p * k as f64;
        let mut best = f64::NEG_INFINITY;
        for mask in 0u32..(1 << k) {
            let ones = mask.count_ones() as f64;
            for free in 0..=k {
                let mut x = vec![0.0; k];
                for (j, xj) in x.iter_mut().enumerate() {
                    if mask & (1 << j) != 0 {
                        *xj = 1.0;
                    }
                }
                if free < k {
                    if mask & (1 << free) != 0 {
                        continue;
                    }
                    x[free] = mass - ones;
                    if !(-1e-12..=1.0 + 1e-12).contains(&x[free]) {
                        continue;
                    }
                } else if (ones - mass).abs() > 1e-12 {
                    continue;
                }
                let v: f64 = x.iter().zip(scores).map(|(a, b)| a * b).sum::<f64>() / k as f64;
                best = best.max(v);
            }
        }
        best
    }

    #[test]
    fn examples() {
        let s = [3.0, 1.0, -1.0, -3.0];
        assert_eq!(inner_envelope(&s, 0.5).unwrap(), 1.0);
        assert_eq!(inner_envelope(&s, 1.0).unwrap(), 0.0);
        assert_eq!(inner_envelope(&s, 0.375).unwrap(), 0.875);
        assert!((lp_vertex_oracle(&s, 0.375) - 0.875).abs() < 1e-12);
        assert_eq!(inner_envelope(&s, 0.0).unwrap(), 0.0);
        assert_eq!(envelope_ratio(&s, 0.0).unwrap(), 3.0);
        assert!(inner_envelope(&s, 1.1).is_err());
        assert!(inner_envelope(&s, -0.1).is_err());
    }

    proptest! {
        #[test]
        fn matches_lp_oracle(
            mut scores in prop::collection::vec(-5.0f64..5.0, 1..8),
            p in 0.0f64..=1.0,
        ) {
            scores.sort_by(|a, b| b.total_cmp(a));
            let g = inner_envelope(&scores, p).unwrap();
            prop_assert!((g - lp_vertex_oracle(&scores, p)).abs() < 1e-9);
        }

        #[test]
        fn concave_in_p(
            mut scores in prop::collection::vec(-5.0f64..5.0, 2..30),
            a in 0.0f64..=1.0,
            b in 0.0f64..=1.0,
        ) {
            scores.sort_by(|x, y| y.total_cmp(x));
            let mid = inner_envelope(&scores, 0.5 * (a + b)).unwrap();
            let avg = 0.5 * (inner_envelope(&scores, a).unwrap() + inner_envelope(&scores, b).unwrap());
            prop_assert!(mid >= avg - 1e-9);
        }
    }
}
