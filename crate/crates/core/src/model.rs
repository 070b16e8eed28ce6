//! Continuous model of the counter-flow exchanger.
//!
//! The hot stream travels left to right with speed `u1`, the cold stream
//! right to left with speed `u2`. In operator form the error dynamics are
//! `z_t = U z_x + M z` with `zh(0) = zc(1) = 0`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ObserverError, Result};

/// Physical constants of the two-stream transport model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExchangerParams {
    pub u1: f64,
    pub u2: f64,
    pub c1: f64,
    pub c2: f64,
}

impl ExchangerParams {
    /// Builds a validated parameter set; every entry must be finite and positive.
    pub fn new(u1: f64, u2: f64, c1: f64, c2: f64) -> Result<Self> {
        let p = Self { u1, u2, c1, c2 };
        p.validate()?;
        Ok(p)
    }

    /// The unit configuration used throughout the reference experiment.
    pub fn unit() -> Self {
        Self {
            u1: 1.0,
            u2: 1.0,
            c1: 1.0,
            c2: 1.0,
        }
    }

    /// Pure transport with no heat exchange between the streams.
    ///
    /// Not a valid exchanger (`validate` rejects it), but the discretization
    /// and the time stepper accept it; the characteristics then give exact
    /// extinction of any initial error after `max(1/u1, 1/u2)`.
    pub fn uncoupled(u1: f64, u2: f64) -> Result<Self> {
        let p = Self { u1, u2, c1: 0.0, c2: 0.0 };
        p.validate_transport()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("u1", self.u1),
            ("u2", self.u2),
            ("c1", self.c1),
            ("c2", self.c2),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ObserverError::InvalidParameter {
                    name,
                    reason: format!("must be finite and strictly positive, got {v}"),
                });
            }
        }
        Ok(())
    }

    /// Weaker check used by the discretization: positive speeds, nonnegative couplings.
    pub(crate) fn validate_transport(&self) -> Result<()> {
        for (name, v, strict) in [
            ("u1", self.u1, true),
            ("u2", self.u2, true),
            ("c1", self.c1, false),
            ("c2", self.c2, false),
        ] {
            let ok = v.is_finite() && if strict { v > 0.0 } else { v >= 0.0 };
            if !ok {
                return Err(ObserverError::InvalidParameter {
                    name,
                    reason: format!("out of range, got {v}"),
                });
            }
        }
        Ok(())
    }
}

impl Default for ExchangerParams {
    fn default() -> Self {
        Self::unit()
    }
}

/// Uniform grid on `[0, 1]` including both end points.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    n: usize,
    dx: f64,
    x: Vec<f64>,
}

impl SpatialGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(ObserverError::InvalidParameter {
                name: "n",
                reason: format!("grid needs at least 3 nodes, got {n}"),
            });
        }
        let dx = 1.0 / (n - 1) as f64;
        let mut x: Vec<f64> = (0..n).map(|i| i as f64 * dx).collect();
        x[n - 1] = 1.0;
        Ok(Self { n, dx, x })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Composite trapezoidal weights for a single component.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let mut w = vec![self.dx; self.n];
        w[0] *= 0.5;
        w[self.n - 1] *= 0.5;
        w
    }
}

/// Constant matrices of `A z = U z_x + M z`, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemMatrices {
    pub u: [[f64; 2]; 2],
    pub m: [[f64; 2]; 2],
}

pub fn system_matrices(params: &ExchangerParams) -> SystemMatrices {
    SystemMatrices {
        u: [[-params.u1, 0.0], [0.0, params.u2]],
        m: [[-params.c1, params.c1], [params.c2, -params.c2]],
    }
}

/// Largest singular value of the coupling matrix `M`.
///
/// Closed form for a real 2x2 matrix: the singular values are
/// `sqrt((s ± sqrt(s^2 - 4 det^2)) / 2)` with `s` the squared Frobenius norm.
pub fn spectral_norm_m(params: &ExchangerParams) -> f64 {
    coupling_norm(params.c1, params.c2)
}

pub(crate) fn coupling_norm(c1: f64, c2: f64) -> f64 {
    let m = [[-c1, c1], [c2, -c2]];
    let fro2 = m.iter().flatten().map(|v| v * v).sum::<f64>();
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0);
    ((fro2 + disc.sqrt()) / 2.0).sqrt()
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Inlet temperatures `gh(t)` (hot, at x = 0) and `gc(t)` (cold, at x = 1).
#[derive(Clone)]
pub struct BoundaryInput {
    gh: ScalarFn,
    gc: ScalarFn,
}

impl BoundaryInput {
    pub fn new<H, C>(gh: H, gc: C) -> Self
    where
        H: Fn(f64) -> f64 + Send + Sync + 'static,
        C: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            gh: Arc::new(gh),
            gc: Arc::new(gc),
        }
    }

    pub fn constant(gh: f64, gc: f64) -> Self {
        Self::new(move |_| gh, move |_| gc)
    }

    pub fn homogeneous() -> Self {
        Self::constant(0.0, 0.0)
    }

    pub fn hot(&self, t: f64) -> f64 {
        (self.gh)(t)
    }

    pub fn cold(&self, t: f64) -> f64 {
        (self.gc)(t)
    }
}

impl fmt::Debug for BoundaryInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundaryInput")
            .field("gh(0)", &self.hot(0.0))
            .field("gc(0)", &self.cold(0.0))
            .finish()
    }
}
