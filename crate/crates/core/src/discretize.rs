//! First-order upwind discretization of the (shifted, output-injected)
//! generator and fixed-step implicit Euler time integration.
//!
//! The state vector is the stacked `[zh; zc]` of length `2n`. Hot node 0 and
//! cold node `n - 1` carry the Dirichlet conditions; their generator rows are
//! identically zero, so the implicit Euler matrix has identity rows there.

use crate::error::{ObserverError, Result};
use crate::field::{norm_weighted, Field, C64, ZERO};
use crate::linalg::{self, CMat, LuSolver};
use crate::model::{ExchangerParams, SpatialGrid};

#[derive(Debug, Clone)]
pub struct DiscreteGenerator {
    mat: CMat,
    shift: f64,
    has_injection: bool,
    grid: SpatialGrid,
    params: ExchangerParams,
}

/// Builds the upwind matrix of `A + shift·I - κ C`.
///
/// Hot rows use a backward difference, cold rows a forward difference. The
/// injection term couples every unconstrained row to the measured entry
/// `zc(0)` through a single dense column.
pub fn assemble_generator(
    params: &ExchangerParams,
    grid: &SpatialGrid,
    shift: f64,
    kappa: Option<&Field>,
) -> Result<DiscreteGenerator> {
    params.validate_transport()?;
    if let Some(k) = kappa {
        k.check_grid(grid)?;
    }
    let n = grid.n();
    let dx = grid.dx();
    let mut mat = linalg::zeros(2 * n, 2 * n);
    let c = |v: f64| C64::new(v, 0.0);

    for i in 1..n {
        mat[(i, i)] += c(-params.u1 / dx - params.c1 + shift);
        mat[(i, i - 1)] += c(params.u1 / dx);
        mat[(i, n + i)] += c(params.c1);
    }
    for i in 0..n - 1 {
        let r = n + i;
        mat[(r, r)] += c(-params.u2 / dx - params.c2 + shift);
        mat[(r, r + 1)] += c(params.u2 / dx);
        mat[(r, i)] += c(params.c2);
    }
    if let Some(k) = kappa {
        let measured = n;
        for i in 1..n {
            mat[(i, measured)] -= k.zh[i];
        }
        for i in 0..n - 1 {
            mat[(n + i, measured)] -= k.zc[i];
        }
    }
    Ok(DiscreteGenerator {
        mat,
        shift,
        has_injection: kappa.is_some(),
        grid: grid.clone(),
        params: *params,
    })
}

impl DiscreteGenerator {
    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn has_injection(&self) -> bool {
        self.has_injection
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn params(&self) -> &ExchangerParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    /// Stacked indices of the Dirichlet-constrained entries.
    pub fn constrained_indices(&self) -> [usize; 2] {
        [0, 2 * self.grid.n() - 1]
    }

    pub fn free_indices(&self) -> Vec<usize> {
        let [a, b] = self.constrained_indices();
        (0..self.dim()).filter(|&i| i != a && i != b).collect()
    }

    /// Restriction to the unconstrained entries.
    pub fn reduced_matrix(&self) -> CMat {
        let free = self.free_indices();
        CMat::from_fn(free.len(), free.len(), |i, j| self.mat[(free[i], free[j])])
    }

    pub fn apply(&self, z: &Field) -> Field {
        Field::from_stacked(&linalg::matvec(&self.mat, &z.stacked()))
    }

    /// `‖G v - λ v‖ / ‖v‖` in the trapezoidal norm.
    pub fn eigen_residual(&self, lambda: C64, v: &Field) -> f64 {
        let w = self.grid.trapezoid_weights();
        let mut r = self.apply(v);
        r.axpy(-lambda, v);
        let nv = norm_weighted(&w, v);
        if nv == 0.0 {
            return f64::INFINITY;
        }
        norm_weighted(&w, &r) / nv
    }
}

/// Factorization of `I - dt·G`, computed once and reused for every step.
pub struct ImplicitEuler {
    solver: LuSolver,
    dt: f64,
    n: usize,
}

impl ImplicitEuler {
    pub fn new(gen: &DiscreteGenerator, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(ObserverError::InvalidParameter {
                name: "dt",
                reason: format!("time step must be positive, got {dt}"),
            });
        }
        let dim = gen.dim();
        let mut m = linalg::identity(dim);
        for j in 0..dim {
            for i in 0..dim {
                let g = gen.mat[(i, j)];
                if g != ZERO {
                    m[(i, j)] -= g * dt;
                }
            }
        }
        let solver = LuSolver::new(&m, "implicit Euler system")?;
        Ok(Self {
            solver,
            dt,
            n: gen.grid.n(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// One homogeneous step; the Dirichlet entries of the result are exactly zero.
    pub fn step(&self, state: &Field) -> Field {
        let mut next = Field::from_stacked(&self.solver.solve(&state.stacked()));
        next.enforce_dirichlet();
        next
    }

    /// One step with prescribed boundary values and an additive forcing.
    ///
    /// Solves `(I - dt G) z⁺ = z + dt·forcing` on the free rows while the
    /// constrained rows pin `zh(0) = hot` and `zc(1) = cold`.
    pub fn step_with_boundary(
        &self,
        state: &Field,
        forcing: Option<&Field>,
        hot: C64,
        cold: C64,
    ) -> Field {
        let mut rhs = state.stacked();
        if let Some(f) = forcing {
            for (r, v) in rhs.iter_mut().zip(f.stacked()) {
                *r += v * self.dt;
            }
        }
        rhs[0] = hot;
        rhs[2 * self.n - 1] = cold;
        let mut next = Field::from_stacked(&self.solver.solve(&rhs));
        next.zh[0] = hot;
        next.zc[self.n - 1] = cold;
        next
    }

    /// `‖(I - dt G) z⁺ - z‖` in the Euclidean norm of the stacked vector.
    pub fn residual(&self, gen: &DiscreteGenerator, state: &Field, next: &Field) -> f64 {
        let gz = linalg::matvec(&gen.mat, &next.stacked());
        next.stacked()
            .iter()
            .zip(gz)
            .zip(state.stacked())
            .map(|((a, g), b)| (a - g * self.dt - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// Advances `state` by one implicit Euler step, factoring on demand unless a
/// cached stepper for the same `(gen, dt)` is supplied.
pub fn step_implicit_euler(
    state: &Field,
    gen: &DiscreteGenerator,
    dt: f64,
    cached: Option<&ImplicitEuler>,
) -> Result<Field> {
    state.check_grid(&gen.grid)?;
    match cached {
        Some(stepper) => Ok(stepper.step(state)),
        None => Ok(ImplicitEuler::new(gen, dt)?.step(state)),
    }
}

/// Uniformly sampled series starting at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries<T> {
    pub times: Vec<f64>,
    pub values: Vec<T>,
}

impl<T> TimeSeries<T> {
    pub fn new() -> Self {
        Self {
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, v: T) {
        self.times.push(t);
        self.values.push(v);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &T)> {
        self.times.iter().copied().zip(self.values.iter())
    }
}

impl<T> Default for TimeSeries<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Number of steps needed to reach `t_final`; tolerant to `t_final / dt`
/// landing a few ulps above an integer.
pub fn step_count(dt: f64, t_final: f64) -> usize {
    ((t_final / dt) * (1.0 - 1e-12)).ceil().max(0.0) as usize
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub norms: TimeSeries<f64>,
    pub snapshots: TimeSeries<Field>,
    pub final_state: Field,
}

/// Drives the integrator and hands every state (including the initial one) to `visit`.
pub fn integrate(
    gen: &DiscreteGenerator,
    init: &Field,
    dt: f64,
    t_final: f64,
    mut visit: impl FnMut(usize, f64, &Field),
) -> Result<Field> {
    if !(t_final > 0.0) {
        return Err(ObserverError::InvalidParameter {
            name: "t_final",
            reason: format!("horizon must be positive, got {t_final}"),
        });
    }
    init.check_grid(&gen.grid)?;
    let stepper = ImplicitEuler::new(gen, dt)?;
    let steps = step_count(dt, t_final);
    let mut z = init.clone();
    visit(0, 0.0, &z);
    for k in 1..=steps {
        z = stepper.step(&z);
        visit(k, k as f64 * dt, &z);
    }
    Ok(z)
}

pub fn simulate(
    gen: &DiscreteGenerator,
    init: &Field,
    dt: f64,
    t_final: f64,
    snapshot_every: usize,
) -> Result<Simulation> {
    let w = gen.grid.trapezoid_weights();
    let stride = snapshot_every.max(1);
    let mut norms = TimeSeries::new();
    let mut snapshots = TimeSeries::new();
    let final_state = integrate(gen, init, dt, t_final, |k, t, z| {
        norms.push(t, norm_weighted(&w, z));
        if k % stride == 0 {
            snapshots.push(t, z.clone());
        }
    })?;
    Ok(Simulation {
        norms,
        snapshots,
        final_state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::norm;
    use std::f64::consts::PI;

    fn grid(n: usize) -> SpatialGrid {
        SpatialGrid::new(n).unwrap()
    }

    #[test]
    fn three_node_stencil() {
        let g = grid(3);
        let gen = assemble_generator(&ExchangerParams::unit(), &g, 0.0, None).unwrap();
        let dx = g.dx();
        let row: Vec<f64> = (0..6).map(|j| gen.matrix()[(1, j)].re).collect();
        let expect = [1.0 / dx, -1.0 / dx - 1.0, 0.0, 0.0, 1.0, 0.0];
        for (a, b) in row.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14, "{row:?}");
        }
        for j in 0..6 {
            assert_eq!(gen.matrix()[(0, j)], ZERO);
            assert_eq!(gen.matrix()[(5, j)], ZERO);
        }
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(gen.matrix()[(i, j)].im, 0.0);
            }
        }
    }

    #[test]
    fn zero_kappa_matches_plain() {
        let g = grid(7);
        let p = ExchangerParams::unit();
        let a = assemble_generator(&p, &g, 0.5, None).unwrap();
        let b = assemble_generator(&p, &g, 0.5, Some(&Field::zeros(7))).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        assert!(assemble_generator(&p, &g, 0.0, Some(&Field::zeros(6))).is_err());
    }

    #[test]
    fn shift_translates_spectrum() {
        // Only the well-conditioned right part of the spectrum is compared; the
        // deep stable cluster of the upwind matrix moves by O(1e-5) under roundoff.
        let g = grid(40);
        let p = ExchangerParams::new(1.3, 0.7, 0.9, 1.1).unwrap();
        for s in [2.75, 3.0, 5.0] {
            let e0: Vec<C64> = linalg::eigvals(&assemble_generator(&p, &g, 0.0, None).unwrap().reduced_matrix(), "t")
                .unwrap()
                .into_iter()
                .filter(|v| v.re > -10.0)
                .collect();
            let e1 = linalg::eigvals(&assemble_generator(&p, &g, s, None).unwrap().reduced_matrix(), "t").unwrap();
            assert!(!e0.is_empty());
            for v in &e0 {
                let d = e1.iter().map(|w| (w - (v + s)).norm()).fold(f64::INFINITY, f64::min);
                assert!(d <= 1e-10, "{v} shifted by {s}: {d:e}");
            }
        }
    }

    #[test]
    fn zero_state_stays_zero() {
        let g = grid(20);
        let gen = assemble_generator(&ExchangerParams::unit(), &g, 0.0, None).unwrap();
        let z = step_implicit_euler(&Field::zeros(20), &gen, 1e-2, None).unwrap();
        assert_eq!(z, Field::zeros(20));
    }

    #[test]
    fn zero_generator_is_identity_step() {
        let g = grid(10);
        let mut gen = assemble_generator(&ExchangerParams::unit(), &g, 0.0, None).unwrap();
        gen.mat = linalg::zeros(20, 20);
        let mut z = Field::from_real_fn(&g, |x| x.sin(), |x| x.cos());
        z.enforce_dirichlet();
        let next = step_implicit_euler(&z, &gen, 0.1, None).unwrap();
        assert_eq!(next, z);
    }

    #[test]
    fn one_step_contracts_and_solves() {
        let g = grid(200);
        let gen = assemble_generator(&ExchangerParams::unit(), &g, 0.0, None).unwrap();
        let z = Field::from_real_fn(&g, |x| 8.0 * (PI * x).sin(), |x| 6.0 * (PI * (1.0 - x)).sin());
        let stepper = ImplicitEuler::new(&gen, 2.5e-3).unwrap();
        let next = step_implicit_euler(&z, &gen, 2.5e-3, Some(&stepper)).unwrap();
        assert!(norm(&g, &next) < norm(&g, &z));
        let euclid = z.stacked().iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        assert!(stepper.residual(&gen, &z, &next) <= 1e-10 * euclid);
        assert!(next.satisfies_dirichlet());
    }

    #[test]
    fn bad_time_step() {
        let g = grid(5);
        let gen = assemble_generator(&ExchangerParams::unit(), &g, 0.0, None).unwrap();
        assert!(ImplicitEuler::new(&gen, 0.0).is_err());
        assert!(simulate(&gen, &Field::zeros(5), 0.1, 0.0, 1).is_err());
    }

    #[test]
    fn step_counts() {
        assert_eq!(step_count(0.0025, 5.0), 2000);
        assert_eq!(step_count(0.00125, 1.0), 800);
        assert_eq!(step_count(0.4, 1.0), 3);
    }

    #[test]
    fn zero_initial_data() {
        let g = grid(30);
        let gen = assemble_generator(&ExchangerParams::unit(), &g, 0.0, None).unwrap();
        let sim = simulate(&gen, &Field::zeros(30), 0.01, 0.5, 5).unwrap();
        assert!(sim.norms.values.iter().all(|&v| v == 0.0));
        assert_eq!(sim.norms.len(), 51);
        assert_eq!(sim.snapshots.len(), 11);
    }
}
