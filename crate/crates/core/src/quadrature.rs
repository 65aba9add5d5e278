//! Integration over (0, 1) for integrands written in terms of `x` and
//! `logit(x)`.
//!
//! Substituting `x = logit⁻¹(t)` turns the endpoint power behaviour of
//! SROC-type integrands into an analytic, exponentially decaying integrand
//! on the real line, which composite Gauss–Legendre handles to ~1e-13.

use gauss_quad::GaussLegendre;

use crate::numeric::expit;

/// Composite Gauss–Legendre rule on `t ∈ [-half_width, half_width]`.
#[derive(Debug, Clone)]
pub struct LogitQuadrature {
    rule: GaussLegendre,
    panels: usize,
    half_width: f64,
}

pub const DEFAULT_NODES_PER_PANEL: usize = 16;
pub const DEFAULT_PANELS: usize = 40;
const HALF_WIDTH: f64 = 40.0;

impl Default for LogitQuadrature {
    fn default() -> Self {
        Self::new(DEFAULT_PANELS, DEFAULT_NODES_PER_PANEL)
    }
}

impl LogitQuadrature {
    pub fn new(panels: usize, nodes_per_panel: usize) -> Self {
        let rule = GaussLegendre::new(nodes_per_panel.max(2)).expect("degree is at least two");
        LogitQuadrature {
            rule,
            panels: panels.max(1),
            half_width: HALF_WIDTH,
        }
    }

    pub fn node_count(&self) -> usize {
        self.panels * self.rule.as_node_weight_pairs().len()
    }

    /// ∫₀¹ f(x, logit x) dx.
    pub fn integrate<F>(&self, f: F) -> f64
    where
        F: Fn(f64, f64) -> f64,
    {
        let width = 2.0 * self.half_width / self.panels as f64;
        (0..self.panels)
            .map(|p| {
                let a = -self.half_width + p as f64 * width;
                self.rule.integrate(a, a + width, |t| {
                    let x = expit(t);
                    let jac = x * expit(-t);
                    if jac == 0.0 {
                        0.0
                    } else {
                        f(x, t) * jac
                    }
                })
            })
            .sum()
    }

    /// Integrates several integrands sharing the same nodes.
    pub fn integrate_vec<const M: usize, F>(&self, f: F) -> [f64; M]
    where
        F: Fn(f64, f64) -> [f64; M],
    {
        let width = 2.0 * self.half_width / self.panels as f64;
        let mut acc = [0.0; M];
        for p in 0..self.panels {
            let a = -self.half_width + p as f64 * width;
            let scale = 0.5 * width;
            for &(node, weight) in self.rule.as_node_weight_pairs() {
                let t = a + scale * (node + 1.0);
                let x = expit(t);
                let jac = x * expit(-t);
                if jac == 0.0 {
                    continue;
                }
                let v = f(x, t);
                for (s, vi) in acc.iter_mut().zip(v) {
                    *s += scale * weight * vi * jac;
                }
            }
        }
        acc
    }
}
