//! Invariant suite run by `specobs validate`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, InitProfile};
use crate::design::{design_observer, ObserverDesign, ObserverGain};
use crate::discretize::assemble_generator;
use crate::error::Result;
use crate::field::{inner_weighted, norm_weighted, Field, C64};
use crate::linalg::{self, CMat};
use crate::model::{spectral_norm_m, ExchangerParams, SpatialGrid};
use crate::spectral::{
    characteristic_f, discrete_spectrum, eigenfunction, generator_eigenvalues, CharacteristicForm, Mode,
    SelectionOptions, UNSTABLE_GUARD,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub limit: f64,
    pub detail: String,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= limit,
            value,
            limit,
            detail: format!("{value:.3e} <= {limit:.3e}"),
        }
    }

    fn above(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            passed: value > limit,
            value,
            limit,
            detail: format!("{value:.3e} > {limit:.3e}"),
        }
    }

    fn failed(name: impl Into<String>, detail: String) -> Self {
        Self {
            name: name.into(),
            passed: false,
            value: f64::NAN,
            limit: f64::NAN,
            detail,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        let mut out = String::new();
        for c in &self.checks {
            let mark = if c.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!("{mark}  {:<width$}  {}\n", c.name, c.detail));
        }
        out
    }
}

/// Allowed `|f(λ)|` at a discrete eigenvalue; the upwind eigenvalues carry an O(dx) error.
pub fn oracle_tolerance(grid: &SpatialGrid) -> f64 {
    10.0 * grid.dx()
}

/// Allowed excess of the closed-loop abscissa over `-λ_o`: 0.5 at 200 nodes, scaled with dx.
pub fn closed_loop_slack(grid: &SpatialGrid) -> f64 {
    0.5 * grid.dx() * 199.0
}

/// Cross-check of one discrete eigenvalue against the characteristic function.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleMode {
    pub lambda: C64,
    pub f_abs: f64,
    /// Root of `f` reached from `lambda`.
    pub root: Option<C64>,
    /// `‖A_s v - λ v‖ / ‖v‖` with `v` the analytic eigenfunction at `root`
    /// and `λ` the discrete eigenvalue.
    pub residual: Option<f64>,
}

pub fn oracle_modes(
    params: &ExchangerParams,
    grid: &SpatialGrid,
    lambda_o: f64,
    modes: &[Mode],
) -> Result<Vec<OracleMode>> {
    let gen = assemble_generator(params, grid, lambda_o, None)?;
    Ok(modes
        .iter()
        .map(|m| {
            let discrete = m.lambda;
            let root = m.polished_lambda;
            let residual = root.map(|r| {
                let v = eigenfunction(r, params, lambda_o, grid, CharacteristicForm::Normalized);
                gen.eigen_residual(discrete, &v)
            });
            OracleMode {
                lambda: discrete,
                f_abs: characteristic_f(discrete, params, lambda_o, CharacteristicForm::Normalized).norm(),
                root,
                residual,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissipativityReport {
    pub samples: usize,
    pub violations: usize,
    /// Largest `(Re⟨z, Gz⟩ - bound) / ‖z‖²`; negative means every sample had slack.
    pub worst_excess: f64,
    /// `|M|₂ + ‖κ‖² / u2 + 10 dx`
    pub coefficient: f64,
}

fn random_field(rng: &mut ChaCha8Rng, grid: &SpatialGrid, smooth: bool) -> Field {
    let n = grid.n();
    let mut z = Field::zeros(n);
    let mut c = || C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    if smooth {
        // half-period sines vanish at the hot inlet x = 0 and the cold inlet x = 1
        for k in 1..=6 {
            let (a, b) = (c(), c());
            let kk = k as f64 * std::f64::consts::FRAC_PI_2;
            for (i, &x) in grid.x().iter().enumerate() {
                z.zh[i] += a * (kk * x).sin();
                z.zc[i] += b * (kk * (1.0 - x)).sin();
            }
        }
    } else {
        for i in 0..n {
            z.zh[i] = c();
            z.zc[i] = c();
        }
    }
    z.enforce_dirichlet();
    z
}

/// Samples `Re⟨z, (A - κC) z⟩` on seeded random fields with `zh(0) = zc(1) = 0`.
/// Even samples are smooth sine combinations, odd samples nodal noise.
pub fn dissipativity_sampling(
    params: &ExchangerParams,
    grid: &SpatialGrid,
    kappa: &Field,
    samples: usize,
    seed: u64,
) -> Result<DissipativityReport> {
    let gen = assemble_generator(params, grid, 0.0, Some(kappa))?;
    let w = grid.trapezoid_weights();
    let kn = norm_weighted(&w, kappa);
    let coefficient = spectral_norm_m(params) + kn * kn / params.u2 + 10.0 * grid.dx();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for s in 0..samples {
        let z = random_field(&mut rng, grid, s % 2 == 0);
        let nz2 = norm_weighted(&w, &z).powi(2);
        let lhs = inner_weighted(&w, &gen.apply(&z), &z).re;
        let excess = (lhs - coefficient * nz2) / nz2;
        worst = worst.max(excess);
        if excess > 0.0 {
            violations += 1;
        }
    }
    Ok(DissipativityReport {
        samples,
        violations,
        worst_excess: worst,
        coefficient,
    })
}

/// Gain support residual `‖(I - P)(κ s)‖ / (|s| ‖κ‖)`.
pub fn gain_support_residual(gain: &ObserverGain, s: C64) -> f64 {
    let w = gain.basis.grid.trapezoid_weights();
    let kn = norm_weighted(&w, &gain.kappa);
    if kn == 0.0 || s == C64::new(0.0, 0.0) {
        return 0.0;
    }
    let ks = gain.kappa.scaled(s);
    norm_weighted(&w, &gain.basis.complement(&ks)) / (s.norm() * kn)
}

fn mode_matrix_sigma_min(modes: &[Mode], grid: &SpatialGrid) -> Result<f64> {
    if modes.is_empty() {
        return Ok(f64::INFINITY);
    }
    let n = grid.n();
    let sw: Vec<f64> = grid.trapezoid_weights().iter().map(|v| v.sqrt()).collect();
    let m = CMat::from_fn(2 * n, modes.len(), |r, j| {
        let v = &modes[j].eigenfunction;
        if r < n {
            v.zh[r] * sw[r]
        } else {
            v.zc[r - n] * sw[r - n]
        }
    });
    linalg::sigma_min(&m)
}

fn design_checks(
    out: &mut Vec<Check>,
    config: &ExperimentConfig,
    grid: &SpatialGrid,
    lambda_o: f64,
    d: &ObserverDesign,
) -> Result<()> {
    let tag = |s: &str| format!("λo={lambda_o} {s}");
    let q = d.q();
    let basis = &d.gain.basis;
    out.push(Check {
        name: tag("unstable modes"),
        passed: true,
        value: q as f64,
        limit: f64::NAN,
        detail: format!("q = {q}"),
    });
    out.push(Check::above(tag("eigenvector rank"), mode_matrix_sigma_min(&d.selection.modes, grid)?, 1e-6));
    out.push(Check::at_most(tag("gram deviation"), basis.gram_deviation(), 1e-8));
    out.push(Check::at_most(tag("span residual"), basis.span_residual(), 1e-8));
    let eig_a = linalg::eigvals(&d.system.a, "projected matrix")?;
    let modes: Vec<C64> = d.selection.modes.iter().map(|m| m.lambda).collect();
    out.push(Check::at_most(tag("eig(A) vs modes"), linalg::match_multisets(&eig_a, &modes), 1e-6));
    let c_min = (0..q).map(|i| d.system.c[(0, i)].norm()).fold(f64::INFINITY, f64::min);
    out.push(Check::above(tag("min |C_i|"), if q == 0 { f64::INFINITY } else { c_min }, 0.0));
    out.push(Check::above(tag("hautus margin"), d.observability.worst_margin(), d.observability.tol));
    if let Some(r) = &d.system.riccati {
        out.push(Check::at_most(tag("riccati residual"), r.residual, 1e-8));
        if q > 0 {
            out.push(Check::at_most(tag("max Re eig(A-KC)"), r.closed_loop_abscissa(), -1e-12));
        }
    }
    out.push(Check::at_most(tag("kappa coefficients"), d.gain.coefficient_error(), 1e-8));
    out.push(Check::at_most(tag("kappa projection residual"), d.gain.projection_residual(), 1e-8));
    out.push(Check::at_most(tag("gain support"), gain_support_residual(&d.gain, C64::new(0.3, -1.7)), 1e-8));

    let cl = assemble_generator(&config.params, grid, 0.0, Some(&d.gain.kappa))?;
    let cl_eigs = generator_eigenvalues(&cl)?;
    let abscissa = cl_eigs.first().map_or(f64::NEG_INFINITY, |v| v.re);
    out.push(Check::at_most(tag("closed-loop abscissa + λo"), abscissa + lambda_o, closed_loop_slack(grid)));
    let shifted_back: Vec<C64> = d.closed_loop_eigenvalues().iter().map(|v| v - lambda_o).collect();
    let worst = shifted_back
        .iter()
        .map(|v| cl_eigs.iter().map(|w| (w - v).norm() / (1.0 + v.norm())).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    out.push(Check::at_most(tag("shift-back poles in closed loop"), worst, 1e-6));

    let diss = dissipativity_sampling(&config.params, grid, &d.gain.kappa, 100, config.seed)?;
    out.push(Check {
        name: tag("dissipativity"),
        passed: diss.violations == 0,
        value: diss.violations as f64,
        limit: 0.0,
        detail: format!(
            "{} of {} samples violate; worst excess {:.3e}",
            diss.violations, diss.samples, diss.worst_excess
        ),
    });

    let oracle = oracle_modes(&config.params, grid, lambda_o, &d.selection.modes)?;
    let f_worst = oracle.iter().map(|m| m.f_abs).fold(0.0, f64::max);
    out.push(Check::at_most(tag("oracle |f| at discrete eigenvalues"), f_worst, oracle_tolerance(grid)));
    let unpolished = oracle.iter().filter(|m| m.residual.is_none()).count();
    let r_worst = oracle.iter().filter_map(|m| m.residual).fold(0.0, f64::max);
    if unpolished > 0 {
        out.push(Check::failed(
            tag("oracle eigenfunction residual"),
            format!("{unpolished} mode(s) without a converged root of f"),
        ));
    } else {
        out.push(Check::at_most(tag("oracle eigenfunction residual"), r_worst, 5.0 * grid.dx()));
    }
    Ok(())
}

/// Runs every invariant for the configuration. Parameter errors surface as `Err`
/// before any computation.
pub fn validate_config(config: &ExperimentConfig) -> Result<ValidationReport> {
    config.validate()?;
    let grid = config.grid()?;
    let mut checks = Vec::new();

    let w = grid.trapezoid_weights();
    if let (InitProfile::Sine { amplitude: a }, InitProfile::SineReflected { amplitude: b }) =
        (config.init.hot, config.init.cold)
    {
        let exact = ((a * a + b * b) / 2.0).sqrt();
        let z = config.initial_error(&grid);
        let rel = if exact == 0.0 { 0.0 } else { (norm_weighted(&w, &z) - exact).abs() / exact };
        checks.push(Check::at_most("initial norm quadrature", rel, 1e-4));
    }

    let plain = discrete_spectrum(&assemble_generator(&config.params, &grid, 0.0, None)?)?;
    let values = plain.eigenvalues();
    checks.push(Check::at_most(
        "spectrum of A conjugate-closed",
        crate::spectral::conjugate_asymmetry(&values),
        1e-8,
    ));
    checks.push(Check::at_most("spectrum of A in closed left half-plane", plain.abscissa(), UNSTABLE_GUARD));

    for &lambda_o in &config.rates {
        match design_observer(&config.params, &grid, lambda_o, SelectionOptions::default()) {
            Ok(d) => design_checks(&mut checks, config, &grid, lambda_o, &d)?,
            Err(e) => checks.push(Check::failed(format!("λo={lambda_o} design"), e.to_string())),
        }
    }
    Ok(ValidationReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dissipativity_holds_without_gain() {
        let g = SpatialGrid::new(60).unwrap();
        let r = dissipativity_sampling(&ExchangerParams::unit(), &g, &Field::zeros(60), 40, 7).unwrap();
        assert_eq!(r.violations, 0);
        assert!((r.coefficient - (2.0 + 10.0 * g.dx())).abs() < 1e-14);
    }

    #[test]
    fn sampling_is_seeded() {
        let g = SpatialGrid::new(30).unwrap();
        let k = Field::from_real_fn(&g, |x| x, |x| 1.0 - x);
        let a = dissipativity_sampling(&ExchangerParams::unit(), &g, &k, 10, 3).unwrap();
        let b = dissipativity_sampling(&ExchangerParams::unit(), &g, &k, 10, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn random_fields_are_compatible() {
        let g = SpatialGrid::new(20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for smooth in [true, false] {
            assert!(random_field(&mut rng, &g, smooth).satisfies_dirichlet());
        }
    }

    #[test]
    fn coarse_grid_suite_passes() {
        let mut c = ExperimentConfig::default();
        c.grid.n = 25;
        let r = validate_config(&c).unwrap();
        assert!(r.all_passed(), "{}", r.table());
    }

    #[test]
    fn negative_coupling_is_rejected_up_front() {
        let mut c = ExperimentConfig::default();
        c.params.c1 = -1.0;
        assert!(validate_config(&c).is_err());
    }
}
