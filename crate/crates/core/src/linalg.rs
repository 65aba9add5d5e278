//! Closed-form 2×2 symmetric matrix algebra for the bivariate model.

use serde::{Deserialize, Serialize};

/// Symmetric 2×2 matrix `[[a, b], [b, c]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sym2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

pub type Vec2 = [f64; 2];

impl Sym2 {
    pub const ZERO: Sym2 = Sym2 {
        a: 0.0,
        b: 0.0,
        c: 0.0,
    };

    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Sym2 { a, b, c }
    }

    pub fn diag(a: f64, c: f64) -> Self {
        Sym2 { a, b: 0.0, c }
    }

    pub fn det(&self) -> f64 {
        self.a * self.c - self.b * self.b
    }

    pub fn is_positive_definite(&self) -> bool {
        self.a > 0.0 && self.det() > 0.0
    }

    pub fn inverse(&self) -> Option<Sym2> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(Sym2::new(self.c / d, -self.b / d, self.a / d))
    }

    pub fn add(&self, o: &Sym2) -> Sym2 {
        Sym2::new(self.a + o.a, self.b + o.b, self.c + o.c)
    }

    pub fn scale(&self, s: f64) -> Sym2 {
        Sym2::new(self.a * s, self.b * s, self.c * s)
    }

    pub fn mul_vec(&self, v: Vec2) -> Vec2 {
        [self.a * v[0] + self.b * v[1], self.b * v[0] + self.c * v[1]]
    }

    /// vᵀ M v
    pub fn quad_form(&self, v: Vec2) -> f64 {
        let m = self.mul_vec(v);
        v[0] * m[0] + v[1] * m[1]
    }

    /// Eigenvalues (ascending) and the unit eigenvector of the larger one.
    fn eigen(&self) -> ([f64; 2], Vec2) {
        let mean = 0.5 * (self.a + self.c);
        let half_diff = 0.5 * (self.a - self.c);
        let r = half_diff.hypot(self.b);
        let l_hi = mean + r;
        let l_lo = mean - r;
        let v = if self.b == 0.0 {
            if self.a >= self.c {
                [1.0, 0.0]
            } else {
                [0.0, 1.0]
            }
        } else {
            let (x, y) = (l_hi - self.c, self.b);
            let n = x.hypot(y);
            [x / n, y / n]
        };
        ([l_lo, l_hi], v)
    }

    /// Applies `f` to the eigenvalues: `V diag(f(λ)) Vᵀ`.
    fn spectral_map(&self, f: impl Fn(f64) -> f64) -> Sym2 {
        let ([l_lo, l_hi], v) = self.eigen();
        let (f_hi, f_lo) = (f(l_hi), f(l_lo));
        // second eigenvector is v rotated by 90 degrees
        let w = [-v[1], v[0]];
        Sym2::new(
            f_hi * v[0] * v[0] + f_lo * w[0] * w[0],
            f_hi * v[0] * v[1] + f_lo * w[0] * w[1],
            f_hi * v[1] * v[1] + f_lo * w[1] * w[1],
        )
    }

    /// Symmetric inverse square root; eigenvalues are floored at `floor`.
    pub fn inv_sqrt(&self, floor: f64) -> Sym2 {
        self.spectral_map(|l| 1.0 / l.max(floor).sqrt())
    }

    /// Symmetric square root of a PSD matrix.
    pub fn sqrt(&self) -> Sym2 {
        self.spectral_map(|l| l.max(0.0).sqrt())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen().0[0]
    }
}

pub fn dot(u: Vec2, v: Vec2) -> f64 {
    u[0] * v[0] + u[1] * v[1]
}
