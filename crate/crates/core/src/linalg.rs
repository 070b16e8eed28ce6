//! Dense complex linear algebra over `faer`.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::Mat;

use crate::error::{ObserverError, Result};
use crate::field::{C64, ONE, ZERO};

pub type CMat = Mat<C64>;

/// Runs every `faer` kernel on the calling thread so that results are
/// reproducible bit for bit.
pub(crate) fn sequential() {
    faer::set_global_parallelism(faer::Par::Seq);
}

pub fn identity(n: usize) -> CMat {
    CMat::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
}

pub fn zeros(r: usize, c: usize) -> CMat {
    CMat::from_fn(r, c, |_, _| ZERO)
}

pub fn adjoint(a: &CMat) -> CMat {
    CMat::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)].conj())
}

pub fn scale(a: &CMat, s: C64) -> CMat {
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    a * b
}

pub fn frobenius(a: &CMat) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

pub fn matvec(a: &CMat, x: &[C64]) -> Vec<C64> {
    let mut y = vec![ZERO; a.nrows()];
    for j in 0..a.ncols() {
        let xj = x[j];
        if xj == ZERO {
            continue;
        }
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += a[(i, j)] * xj;
        }
    }
    y
}

/// Eigenvalues and right eigenvectors (as columns).
pub fn eig(a: &CMat, context: &str) -> Result<(Vec<C64>, CMat)> {
    sequential();
    let evd = a.eigen().map_err(|_| ObserverError::EigenNonConvergence {
        size: a.nrows(),
        context: context.to_string(),
    })?;
    let s = evd.S();
    let values = (0..a.nrows()).map(|i| s[i]).collect();
    Ok((values, evd.U().to_owned()))
}

pub fn eigvals(a: &CMat, context: &str) -> Result<Vec<C64>> {
    sequential();
    a.eigenvalues().map_err(|_| ObserverError::EigenNonConvergence {
        size: a.nrows(),
        context: context.to_string(),
    })
}

/// Singular values in non-increasing order.
pub fn singular_values(a: &CMat) -> Result<Vec<f64>> {
    sequential();
    let mut s = a
        .singular_values()
        .map_err(|_| ObserverError::EigenNonConvergence {
            size: a.nrows().max(a.ncols()),
            context: "singular value decomposition".into(),
        })?;
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}

pub fn sigma_min(a: &CMat) -> Result<f64> {
    Ok(singular_values(a)?.last().copied().unwrap_or(0.0))
}

/// LU factorization with partial pivoting, reusable across right-hand sides.
pub struct LuSolver {
    lu: PartialPivLu<C64>,
    n: usize,
}

impl LuSolver {
    pub fn new(a: &CMat, context: &'static str) -> Result<Self> {
        sequential();
        let lu = a.partial_piv_lu();
        let u = lu.U();
        let mut max = 0.0f64;
        let mut min = f64::INFINITY;
        for i in 0..a.nrows() {
            let d = u[(i, i)].norm();
            max = max.max(d);
            min = min.min(d);
        }
        if !(min > max * 1e-14) || !min.is_finite() {
            return Err(ObserverError::SingularSystem { context });
        }
        Ok(Self { lu, n: a.nrows() })
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let mut rhs = CMat::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_in_place(rhs.as_mut());
        (0..self.n).map(|i| rhs[(i, 0)]).collect()
    }

    pub fn solve_mat(&self, b: &CMat) -> CMat {
        let mut rhs = b.clone();
        self.lu.solve_in_place(rhs.as_mut());
        rhs
    }
}

pub fn inverse(a: &CMat, context: &'static str) -> Result<CMat> {
    Ok(LuSolver::new(a, context)?.solve_mat(&identity(a.nrows())))
}

/// Greedy minimum-distance matching between two multisets of eigenvalues;
/// returns the largest matched distance.
pub fn match_multisets(a: &[C64], b: &[C64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(a.len() * b.len());
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            pairs.push(((x - y).norm(), i, j));
        }
    }
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut worst = 0.0f64;
    for (d, i, j) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            worst = worst.max(d);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eig_of_triangular() {
        let a = CMat::from_fn(3, 3, |i, j| {
            if i == j {
                C64::new(i as f64 + 1.0, 0.0)
            } else if j > i {
                C64::new(0.5, 0.25)
            } else {
                ZERO
            }
        });
        let (vals, vecs) = eig(&a, "test").unwrap();
        let mut re: Vec<f64> = vals.iter().map(|v| v.re).collect();
        re.sort_by(f64::total_cmp);
        for (r, e) in re.iter().zip([1.0, 2.0, 3.0]) {
            assert!((r - e).abs() < 1e-12);
        }
        for k in 0..3 {
            let v: Vec<C64> = (0..3).map(|i| vecs[(i, k)]).collect();
            let av = matvec(&a, &v);
            for i in 0..3 {
                assert!((av[i] - vals[k] * v[i]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn lu_detects_singular() {
        let a = CMat::from_fn(2, 2, |_, _| ONE);
        assert!(LuSolver::new(&a, "test").is_err());
        let b = identity(2);
        let s = LuSolver::new(&b, "test").unwrap();
        assert_eq!(s.solve(&[ONE, C64::new(2.0, 0.0)]), vec![ONE, C64::new(2.0, 0.0)]);
    }

    #[test]
    fn matching_is_permutation_invariant() {
        let a = [C64::new(1.0, 1.0), C64::new(1.0, -1.0), C64::new(-2.0, 0.0)];
        let b = [C64::new(-2.0, 1e-9), C64::new(1.0, -1.0), C64::new(1.0, 1.0)];
        assert!(match_multisets(&a, &b) < 2e-9);
        assert!(match_multisets(&a, &b[..2]).is_infinite());
    }
}
