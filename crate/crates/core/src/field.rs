//! Two-component complex fields sampled on a [`SpatialGrid`] and the
//! trapezoidal `L²` geometry on them.
//!
//! The inner product is linear in the first argument:
//! `⟨a, b⟩ = ∫ (ah·conj(bh) + ac·conj(bc)) dx`.

use num_complex::Complex64;

use crate::error::{ObserverError, Result};
use crate::model::SpatialGrid;

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// Hot and cold components sampled at the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub zh: Vec<C64>,
    pub zc: Vec<C64>,
}

impl Field {
    pub fn zeros(n: usize) -> Self {
        Self {
            zh: vec![ZERO; n],
            zc: vec![ZERO; n],
        }
    }

    /// Samples real profiles `fh(x)`, `fc(x)` at the grid nodes.
    pub fn from_real_fn(
        grid: &SpatialGrid,
        fh: impl Fn(f64) -> f64,
        fc: impl Fn(f64) -> f64,
    ) -> Self {
        Self {
            zh: grid.x().iter().map(|&x| C64::new(fh(x), 0.0)).collect(),
            zc: grid.x().iter().map(|&x| C64::new(fc(x), 0.0)).collect(),
        }
    }

    /// Splits a stacked `[zh; zc]` vector of length `2n`.
    pub fn from_stacked(v: &[C64]) -> Self {
        let n = v.len() / 2;
        Self {
            zh: v[..n].to_vec(),
            zc: v[n..2 * n].to_vec(),
        }
    }

    pub fn stacked(&self) -> Vec<C64> {
        let mut v = Vec::with_capacity(2 * self.len());
        v.extend_from_slice(&self.zh);
        v.extend_from_slice(&self.zc);
        v
    }

    pub fn len(&self) -> usize {
        self.zh.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zh.is_empty()
    }

    pub fn check_grid(&self, grid: &SpatialGrid) -> Result<()> {
        if self.zh.len() != grid.n() || self.zc.len() != grid.n() {
            return Err(ObserverError::GridMismatch {
                expected: grid.n(),
                found: self.zh.len().max(self.zc.len()),
            });
        }
        Ok(())
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self {
            zh: self.zh.iter().map(|v| v * s).collect(),
            zc: self.zc.iter().map(|v| v * s).collect(),
        }
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: C64, other: &Field) {
        for (a, b) in self.zh.iter_mut().zip(&other.zh) {
            *a += s * b;
        }
        for (a, b) in self.zc.iter_mut().zip(&other.zc) {
            *a += s * b;
        }
    }

    pub fn sub(&self, other: &Field) -> Self {
        let mut out = self.clone();
        out.axpy(-ONE, other);
        out
    }

    pub fn real_part(&self) -> Self {
        Self {
            zh: self.zh.iter().map(|v| C64::new(v.re, 0.0)).collect(),
            zc: self.zc.iter().map(|v| C64::new(v.re, 0.0)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.zh
            .iter()
            .chain(&self.zc)
            .fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn satisfies_dirichlet(&self) -> bool {
        self.zh[0] == ZERO && self.zc[self.len() - 1] == ZERO
    }

    pub fn enforce_dirichlet(&mut self) {
        let n = self.len();
        self.zh[0] = ZERO;
        self.zc[n - 1] = ZERO;
    }
}

/// Trapezoidal `⟨a, b⟩`, linear in `a`, conjugate-linear in `b`.
pub fn inner(grid: &SpatialGrid, a: &Field, b: &Field) -> C64 {
    let w = grid.trapezoid_weights();
    inner_weighted(&w, a, b)
}

pub(crate) fn inner_weighted(w: &[f64], a: &Field, b: &Field) -> C64 {
    let mut acc = ZERO;
    for (i, &wi) in w.iter().enumerate() {
        acc += (a.zh[i] * b.zh[i].conj() + a.zc[i] * b.zc[i].conj()) * wi;
    }
    acc
}

pub fn norm(grid: &SpatialGrid, a: &Field) -> f64 {
    inner(grid, a, a).re.max(0.0).sqrt()
}

pub(crate) fn norm_weighted(w: &[f64], a: &Field) -> f64 {
    inner_weighted(w, a, a).re.max(0.0).sqrt()
}

/// Norm of the real part only.
pub fn norm_real(grid: &SpatialGrid, a: &Field) -> f64 {
    norm(grid, &a.real_part())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn initial_error_norm_matches_closed_form() {
        let grid = SpatialGrid::new(200).unwrap();
        let f = Field::from_real_fn(&grid, |x| 8.0 * (PI * x).sin(), |x| 6.0 * (PI * (1.0 - x)).sin());
        let exact = 50f64.sqrt();
        assert!((norm(&grid, &f) - exact).abs() / exact < 1e-4);
    }

    #[test]
    fn inner_is_linear_in_first_argument() {
        let grid = SpatialGrid::new(11).unwrap();
        let a = Field::from_real_fn(&grid, |x| x, |x| 1.0 - x);
        let b = Field::from_real_fn(&grid, |x| x * x, |_| 2.0);
        let s = C64::new(0.3, -1.2);
        let lhs = inner(&grid, &a.scaled(s), &b);
        let rhs = s * inner(&grid, &a, &b);
        assert!((lhs - rhs).norm() < 1e-14);
        let lhs2 = inner(&grid, &a, &b.scaled(s));
        assert!((lhs2 - s.conj() * inner(&grid, &a, &b)).norm() < 1e-14);
    }

    #[test]
    fn stacking_round_trips() {
        let grid = SpatialGrid::new(5).unwrap();
        let a = Field::from_real_fn(&grid, |x| x, |x| -x);
        assert_eq!(Field::from_stacked(&a.stacked()), a);
        assert!(a.check_grid(&grid).is_ok());
        assert!(a.check_grid(&SpatialGrid::new(6).unwrap()).is_err());
    }
}
