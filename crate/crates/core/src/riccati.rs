//! Filter algebraic Riccati equation
//!
//! `A P + P Aᴴ - P Cᴴ R⁻¹ C P + Q = 0`
//!
//! solved in complex arithmetic. An initial stabilizing solution comes from
//! the stable invariant subspace of the Hamiltonian
//! `[[Aᴴ, -Cᴴ R⁻¹ C], [-Q, -A]]`; Newton–Kleinman sweeps then polish it.

use crate::error::{ObserverError, Result};
use crate::field::{C64, ZERO};
use crate::linalg::{self, adjoint, frobenius, scale, CMat, LuSolver};

#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub p: CMat,
    /// Output-injection gain `P Cᴴ R⁻¹`.
    pub k: CMat,
    /// `‖A P + P Aᴴ - P Cᴴ R⁻¹ C P + Q‖_F / ‖Q‖_F`
    pub residual: f64,
    /// Eigenvalues of `A - K C`.
    pub closed_loop: Vec<C64>,
}

impl RiccatiSolution {
    pub fn closed_loop_abscissa(&self) -> f64 {
        self.closed_loop
            .iter()
            .map(|v| v.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn filter_residual(a: &CMat, c: &CMat, q: &CMat, r: f64, p: &CMat) -> f64 {
    let ah = adjoint(a);
    let ch = adjoint(c);
    let res = a * p + p * &ah - scale(&(&(p * &ch) * &(c * p)), C64::new(1.0 / r, 0.0)) + q;
    let scale = frobenius(q).max(f64::MIN_POSITIVE);
    frobenius(&res) / scale
}

fn hermitize(p: &CMat) -> CMat {
    CMat::from_fn(p.nrows(), p.ncols(), |i, j| (p[(i, j)] + p[(j, i)].conj()) * 0.5)
}

/// Solves `L X + X Lᴴ = -W` through the `q² × q²` Kronecker system.
pub fn solve_lyapunov(l: &CMat, w: &CMat) -> Result<CMat> {
    let q = l.nrows();
    let big = CMat::from_fn(q * q, q * q, |row, col| {
        let (i, j) = (row % q, row / q);
        let (k, m) = (col % q, col / q);
        let mut v = ZERO;
        if j == m {
            v += l[(i, k)];
        }
        if i == k {
            v += l[(j, m)].conj();
        }
        v
    });
    let rhs: Vec<C64> = (0..q * q).map(|idx| -w[(idx % q, idx / q)]).collect();
    let x = LuSolver::new(&big, "Lyapunov equation")?.solve(&rhs);
    Ok(CMat::from_fn(q, q, |i, j| x[i + j * q]))
}

fn hamiltonian_solution(a: &CMat, c: &CMat, q: &CMat, r: f64) -> Result<CMat> {
    let n = a.nrows();
    let ah = adjoint(a);
    let g = scale(&(adjoint(c) * c), C64::new(1.0 / r, 0.0));
    let h = CMat::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
        (true, true) => ah[(i, j)],
        (true, false) => -g[(i, j - n)],
        (false, true) => -q[(i - n, j)],
        (false, false) => -a[(i - n, j - n)],
    });
    let (vals, vecs) = linalg::eig(&h, "Riccati Hamiltonian")?;
    let stable: Vec<usize> = (0..2 * n).filter(|&k| vals[k].re < 0.0).collect();
    if stable.len() != n {
        return Err(ObserverError::Riccati {
            reason: format!(
                "Hamiltonian has {} stable eigenvalues, expected {n}",
                stable.len()
            ),
            residual: f64::INFINITY,
            abscissa: f64::NAN,
        });
    }
    let x1 = CMat::from_fn(n, n, |i, j| vecs[(i, stable[j])]);
    let x2 = CMat::from_fn(n, n, |i, j| vecs[(n + i, stable[j])]);
    let x1_inv = linalg::inverse(&x1, "Hamiltonian stable basis").map_err(|_| ObserverError::Riccati {
        reason: "stable subspace is not a graph (X1 singular)".into(),
        residual: f64::INFINITY,
        abscissa: f64::NAN,
    })?;
    Ok(hermitize(&(x2 * x1_inv)))
}

/// Solves the filter ARE with scalar output weight `r`.
pub fn solve_filter_are(a: &CMat, c: &CMat, q: &CMat, r: f64) -> Result<RiccatiSolution> {
    let n = a.nrows();
    if n == 0 {
        return Ok(RiccatiSolution {
            p: linalg::zeros(0, 0),
            k: linalg::zeros(0, 1),
            residual: 0.0,
            closed_loop: Vec::new(),
        });
    }
    let ch = adjoint(c);
    let inv_r = C64::new(1.0 / r, 0.0);
    let mut p = hamiltonian_solution(a, c, q, r)?;
    let mut best = filter_residual(a, c, q, r, &p);
    for _ in 0..8 {
        if best <= 1e-14 {
            break;
        }
        let k = scale(&(&p * &ch), inv_r);
        let ak = a - &k * c;
        let w = q + scale(&(&k * adjoint(&k)), C64::new(r, 0.0));
        let next = match solve_lyapunov(&ak, &w) {
            Ok(x) => hermitize(&x),
            Err(_) => break,
        };
        let res = filter_residual(a, c, q, r, &next);
        if res < best {
            p = next;
            best = res;
        } else {
            break;
        }
    }
    let k = scale(&(&p * &ch), inv_r);
    let closed_loop = linalg::eigvals(&(a - &k * c), "Riccati closed loop")?;
    let sol = RiccatiSolution {
        p,
        k,
        residual: best,
        closed_loop,
    };
    let abscissa = sol.closed_loop_abscissa();
    if !(abscissa < 0.0) {
        return Err(ObserverError::Riccati {
            reason: "closed loop A - K C is not Hurwitz".into(),
            residual: sol.residual,
            abscissa,
        });
    }
    let p_eigs = linalg::eigvals(&sol.p, "Riccati solution definiteness")?;
    let min_p = p_eigs.iter().map(|v| v.re).fold(f64::INFINITY, f64::min);
    if !(min_p > 0.0) {
        return Err(ObserverError::Riccati {
            reason: format!("solution is not positive definite (smallest eigenvalue {min_p:e})"),
            residual: sol.residual,
            abscissa,
        });
    }
    Ok(sol)
}
