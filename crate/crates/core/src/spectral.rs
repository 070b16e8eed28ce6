//! Spectrum of the shifted generator `A_s = A + λ_o I`.
//!
//! Two independent routes are available. The discrete route eigensolves the
//! upwind matrix. The analytic route evaluates the characteristic function
//! `f(λ)` built from the eigenfunctions of `U v' = (λ - λ_o) v - M v` with
//! `vh(0) = 0`; `f(λ) = vc(1)`, so its roots are the eigenvalues.
//!
//! Writing `s = λ - λ_o`, the exponents `μ1, μ2` are the roots of
//! `μ² + θ1 μ + θ2 = 0` where `θ1 = ((u2 - u1) s + u2 c1 - u1 c2) / (u1 u2)`
//! and `θ2 = -(s² + s (c1 + c2)) / (u1 u2)`.

use serde::{Deserialize, Serialize};

use crate::discretize::{assemble_generator, DiscreteGenerator};
use crate::error::{ObserverError, Result};
use crate::field::{norm_weighted, Field, C64, ONE, ZERO};
use crate::linalg;
use crate::model::{ExchangerParams, SpatialGrid};

/// Band below the threshold still counted as unstable.
pub const UNSTABLE_GUARD: f64 = 1e-9;
/// Eigenvalues this close to the threshold are flagged in reports.
pub const THRESHOLD_WARNING_BAND: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicCoefficients {
    pub theta1: C64,
    pub theta2: C64,
    pub mu1: C64,
    pub mu2: C64,
}

/// How the eigenfunction and characteristic function are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CharacteristicForm {
    /// Exponents `μ1, μ2`, divided by `μ1 - μ2`. Continuous through double
    /// roots, where the `x e^{μx}` branch takes over.
    #[default]
    Normalized,
    /// Exponents `μ1, μ2` without normalization; vanishes identically at a
    /// double root.
    Unnormalized,
    /// Exponents taken literally as `θ1, θ2`. Kept for comparison only; its
    /// zeros do not track the discrete spectrum.
    Verbatim,
}

pub fn characteristic_coefficients(
    lambda: C64,
    params: &ExchangerParams,
    lambda_o: f64,
) -> CharacteristicCoefficients {
    let s = lambda - lambda_o;
    let uu = params.u1 * params.u2;
    let theta1 = (s * (params.u2 - params.u1) + (params.u2 * params.c1 - params.u1 * params.c2)) / uu;
    let theta2 = -(s * s + s * (params.c1 + params.c2)) / uu;
    let (mu1, mu2) = quadratic_roots(theta1, theta2);
    CharacteristicCoefficients {
        theta1,
        theta2,
        mu1,
        mu2,
    }
}

/// Roots of `μ² + b μ + c`, ordered by real part then imaginary part, descending.
fn quadratic_roots(b: C64, c: C64) -> (C64, C64) {
    let sq = (b * b - c * 4.0).sqrt();
    // pick the sign that avoids cancellation
    let sign = if (b.conj() * sq).re >= 0.0 { 1.0 } else { -1.0 };
    let q = -(b + sq * sign) * 0.5;
    let (r1, r2) = if q == ZERO { (ZERO, ZERO) } else { (q, c / q) };
    if (r1.re, r1.im) >= (r2.re, r2.im) {
        (r1, r2)
    } else {
        (r2, r1)
    }
}

/// `(e^z - 1) / z`, accurate near zero.
fn phi1(z: C64) -> C64 {
    if z == ZERO {
        return ONE;
    }
    let (a, b) = (z.re, z.im);
    let half = (b * 0.5).sin();
    let em1 = C64::new(a.exp_m1() * b.cos() - 2.0 * half * half, a.exp() * b.sin());
    em1 / z
}

/// Values of `(vh, vc)` at a single point `x` for the requested form.
fn eigen_pair(
    c: &CharacteristicCoefficients,
    s: C64,
    params: &ExchangerParams,
    form: CharacteristicForm,
    x: f64,
) -> (C64, C64) {
    let ratio = params.u1 / params.c1;
    let lin = (s + params.c1) / params.c1;
    match form {
        CharacteristicForm::Normalized => {
            let d = c.mu1 - c.mu2;
            let e2 = (c.mu2 * x).exp();
            let diff = e2 * phi1(d * x) * x;
            let dmu = c.mu1 * diff + e2;
            (diff, dmu * ratio + lin * diff)
        }
        CharacteristicForm::Unnormalized | CharacteristicForm::Verbatim => {
            let (a, b) = if form == CharacteristicForm::Verbatim {
                (c.theta1, c.theta2)
            } else {
                (c.mu1, c.mu2)
            };
            let (ea, eb) = ((a * x).exp(), (b * x).exp());
            let diff = ea - eb;
            (diff, (a * ea - b * eb) * ratio + lin * diff)
        }
    }
}

/// Characteristic function; its zeros are the eigenvalues of `A_s`.
pub fn characteristic_f(
    lambda: C64,
    params: &ExchangerParams,
    lambda_o: f64,
    form: CharacteristicForm,
) -> C64 {
    let c = characteristic_coefficients(lambda, params, lambda_o);
    eigen_pair(&c, lambda - lambda_o, params, form, 1.0).1
}

/// Samples the eigenfunction candidate for `lambda` on the grid.
pub fn eigenfunction(
    lambda: C64,
    params: &ExchangerParams,
    lambda_o: f64,
    grid: &SpatialGrid,
    form: CharacteristicForm,
) -> Field {
    let c = characteristic_coefficients(lambda, params, lambda_o);
    let s = lambda - lambda_o;
    let (zh, zc) = grid
        .x()
        .iter()
        .map(|&x| eigen_pair(&c, s, params, form, x))
        .unzip();
    Field { zh, zc }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSource {
    Discrete,
    Analytic,
    Polished,
}

#[derive(Debug, Clone)]
pub struct Mode {
    pub lambda: C64,
    pub eigenfunction: Field,
    /// `‖A_s v - λ v‖ / ‖v‖` against the discrete generator.
    pub residual: f64,
    pub source: ModeSource,
    /// Root of `f` reached by Newton iteration from `lambda`, if it converged.
    pub polished_lambda: Option<C64>,
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    pub modes: Vec<Mode>,
    pub grid: SpatialGrid,
    pub shift: f64,
}

impl Spectrum {
    pub fn eigenvalues(&self) -> Vec<C64> {
        self.modes.iter().map(|m| m.lambda).collect()
    }

    pub fn abscissa(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| m.lambda.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Unit norm, with the largest-modulus entry rotated onto the positive real axis.
pub(crate) fn normalize_mode(w: &[f64], v: &mut Field) -> f64 {
    let nv = norm_weighted(w, v);
    if nv == 0.0 {
        return 0.0;
    }
    let pivot = v
        .zh
        .iter()
        .chain(&v.zc)
        .copied()
        .fold(ZERO, |best, z| if z.norm() > best.norm() { z } else { best });
    let phase = pivot.conj() / pivot.norm();
    *v = v.scaled(phase / nv);
    nv
}

fn sort_by_real_desc(modes: &mut [Mode]) {
    modes.sort_by(|a, b| {
        b.lambda
            .re
            .total_cmp(&a.lambda.re)
            .then(b.lambda.im.total_cmp(&a.lambda.im))
    });
}

/// Dense eigendecomposition of the generator restricted to the unconstrained
/// entries. The two Dirichlet entries contribute no modes.
pub fn discrete_spectrum(gen: &DiscreteGenerator) -> Result<Spectrum> {
    if gen.has_injection() {
        return Err(ObserverError::InvalidParameter {
            name: "gen",
            reason: "spectral analysis expects the generator without output injection".into(),
        });
    }
    let free = gen.free_indices();
    let (values, vectors) = linalg::eig(
        &gen.reduced_matrix(),
        &format!(
            "shifted generator, n = {}, shift = {}, params = {:?}",
            gen.grid().n(),
            gen.shift(),
            gen.params()
        ),
    )?;
    let w = gen.grid().trapezoid_weights();
    let dim = gen.dim();
    let mut modes = Vec::with_capacity(values.len());
    for (k, &lambda) in values.iter().enumerate() {
        let mut stacked = vec![ZERO; dim];
        for (r, &idx) in free.iter().enumerate() {
            stacked[idx] = vectors[(r, k)];
        }
        let mut v = Field::from_stacked(&stacked);
        normalize_mode(&w, &mut v);
        let residual = gen.eigen_residual(lambda, &v);
        modes.push(Mode {
            lambda,
            eigenfunction: v,
            residual,
            source: ModeSource::Discrete,
            polished_lambda: None,
        });
    }
    sort_by_real_desc(&mut modes);
    Ok(Spectrum {
        modes,
        grid: gen.grid().clone(),
        shift: gen.shift(),
    })
}

/// Eigenvalues of an arbitrary generator (e.g. the closed loop `A - κC`)
/// restricted to its unconstrained entries.
pub fn generator_eigenvalues(gen: &DiscreteGenerator) -> Result<Vec<C64>> {
    let mut e = linalg::eigvals(&gen.reduced_matrix(), "generator eigenvalues")?;
    e.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    Ok(e)
}

/// Largest distance from an eigenvalue to the conjugate of its nearest partner.
pub fn conjugate_asymmetry(values: &[C64]) -> f64 {
    values
        .iter()
        .map(|v| {
            values
                .iter()
                .map(|w| (v.conj() - w).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub max_iter: usize,
    pub rel_step: f64,
    pub rel_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iter: 30,
            rel_step: 1e-7,
            rel_tol: 1e-12,
        }
    }
}

/// Newton iteration on the normalized characteristic function with a
/// central-difference derivative. Returns `None` when it fails to converge.
pub fn polish_root(
    lambda0: C64,
    params: &ExchangerParams,
    lambda_o: f64,
    opts: NewtonOptions,
) -> Option<C64> {
    let f = |l: C64| characteristic_f(l, params, lambda_o, CharacteristicForm::Normalized);
    let f0 = f(lambda0).norm();
    let tol = opts.rel_tol * (1.0 + f0);
    let mut z = lambda0;
    for _ in 0..opts.max_iter {
        let fz = f(z);
        if !fz.is_finite() {
            return None;
        }
        if fz.norm() <= tol {
            return Some(z);
        }
        let h = opts.rel_step * (1.0 + z.norm());
        let d = (f(z + h) - f(z - h)) / (2.0 * h);
        if d == ZERO || !d.is_finite() {
            return None;
        }
        z -= fz / d;
    }
    (f(z).norm() <= tol).then_some(z)
}

#[derive(Debug, Clone, Copy)]
pub struct SelectionOptions {
    pub re_threshold: f64,
    pub polish: bool,
    pub newton: NewtonOptions,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        Self {
            re_threshold: 0.0,
            polish: true,
            newton: NewtonOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct UnstableSelection {
    pub modes: Vec<Mode>,
    pub warnings: Vec<String>,
}

impl UnstableSelection {
    pub fn q(&self) -> usize {
        self.modes.len()
    }
}

/// Picks the modes with `Re λ ≥ threshold` (minus a small guard band).
///
/// With polishing on, each eigenvalue is refined as a root of `f`; the
/// analytic eigenfunction at the refined root replaces the discrete vector
/// only if it has the smaller residual against the discrete generator.
pub fn unstable_modes(
    spectrum: &Spectrum,
    params: &ExchangerParams,
    lambda_o: f64,
    opts: SelectionOptions,
) -> Result<UnstableSelection> {
    let mut out = UnstableSelection::default();
    let threshold = opts.re_threshold;
    let candidates: Vec<&Mode> = spectrum
        .modes
        .iter()
        .filter(|m| m.lambda.re >= threshold - UNSTABLE_GUARD)
        .collect();
    for m in &spectrum.modes {
        if (m.lambda.re - threshold).abs() <= THRESHOLD_WARNING_BAND {
            out.warnings.push(format!(
                "eigenvalue {:.6e}{:+.6e}i lies within {:e} of the threshold {threshold}; q is sensitive here",
                m.lambda.re, m.lambda.im, THRESHOLD_WARNING_BAND
            ));
        }
    }
    if candidates.is_empty() {
        return Ok(out);
    }
    let gen = opts
        .polish
        .then(|| assemble_generator(params, &spectrum.grid, spectrum.shift, None))
        .transpose()?;
    let w = spectrum.grid.trapezoid_weights();
    for m in candidates {
        let mut mode = m.clone();
        if let Some(gen) = &gen {
            mode.polished_lambda = polish_root(m.lambda, params, lambda_o, opts.newton);
            if let Some(root) = mode.polished_lambda {
                let mut v = eigenfunction(root, params, lambda_o, &spectrum.grid, CharacteristicForm::Normalized);
                if v.max_abs() > 0.0 && normalize_mode(&w, &mut v) > 1e-10 * v.max_abs() {
                    let r = gen.eigen_residual(root, &v);
                    if r < mode.residual {
                        mode = Mode {
                            lambda: root,
                            eigenfunction: v,
                            residual: r,
                            source: ModeSource::Polished,
                            polished_lambda: Some(root),
                        };
                    }
                } else {
                    out.warnings.push(format!(
                        "root {:.6e}{:+.6e}i has a null eigenfunction; kept the discrete mode",
                        root.re, root.im
                    ));
                }
            }
        }
        out.modes.push(mode);
    }
    sort_by_real_desc(&mut out.modes);
    Ok(out)
}

/// Convenience: assemble the shifted generator, eigensolve and select.
pub fn shifted_unstable_modes(
    params: &ExchangerParams,
    grid: &SpatialGrid,
    lambda_o: f64,
    opts: SelectionOptions,
) -> Result<(Spectrum, UnstableSelection)> {
    let gen = assemble_generator(params, grid, lambda_o, None)?;
    let spectrum = discrete_spectrum(&gen)?;
    let sel = unstable_modes(&spectrum, params, lambda_o, opts)?;
    Ok((spectrum, sel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> ExchangerParams {
        ExchangerParams::unit()
    }

    #[test]
    fn coefficients_at_the_shift() {
        let p = ExchangerParams::new(2.0, 0.5, 1.5, 0.3).unwrap();
        let c = characteristic_coefficients(C64::new(4.0, 0.0), &p, 4.0);
        assert_eq!(c.theta2, ZERO);
        let roots = [c.mu1, c.mu2];
        assert!(roots.iter().any(|r| r.norm() < 1e-15));
        assert!(roots.iter().any(|r| (r + c.theta1).norm() < 1e-15));

        let c = characteristic_coefficients(C64::new(3.0, 0.0), &unit(), 3.0);
        assert_eq!((c.theta1, c.theta2, c.mu1, c.mu2), (ZERO, ZERO, ZERO, ZERO));
    }

    #[test]
    fn unnormalized_form_vanishes_at_double_root() {
        // λ = λ_o with unit parameters: θ1 = θ2 = 0, μ1 = μ2 = 0.
        let f = characteristic_f(C64::new(3.0, 0.0), &unit(), 3.0, CharacteristicForm::Unnormalized);
        assert_eq!(f, ZERO);
        let g = SpatialGrid::new(50).unwrap();
        let v = eigenfunction(C64::new(3.0, 0.0), &unit(), 3.0, &g, CharacteristicForm::Unnormalized);
        assert_eq!(v.max_abs(), 0.0);
    }

    #[test]
    fn normalized_form_separates_double_roots() {
        // s = 0 is a double root but not an eigenvalue: vh = x, vc = 1 + x, vc(1) = 2.
        let f = characteristic_f(C64::new(3.0, 0.0), &unit(), 3.0, CharacteristicForm::Normalized);
        assert!((f - 2.0).norm() < 1e-14);
        // s = -2 is a double root and an eigenvalue: vh = x, vc = 1 - x.
        let f = characteristic_f(C64::new(1.0, 0.0), &unit(), 3.0, CharacteristicForm::Normalized);
        assert!(f.norm() < 1e-14);
        let g = SpatialGrid::new(11).unwrap();
        let v = eigenfunction(C64::new(1.0, 0.0), &unit(), 3.0, &g, CharacteristicForm::Normalized);
        for (i, &x) in g.x().iter().enumerate() {
            assert!((v.zh[i] - x).norm() < 1e-14);
            assert!((v.zc[i] - (1.0 - x)).norm() < 1e-14);
        }
    }

    #[test]
    fn normalized_is_scaled_unnormalized() {
        let p = ExchangerParams::new(1.2, 0.8, 0.7, 1.9).unwrap();
        let lam = C64::new(0.4, 2.3);
        let c = characteristic_coefficients(lam, &p, 1.5);
        let a = characteristic_f(lam, &p, 1.5, CharacteristicForm::Normalized);
        let b = characteristic_f(lam, &p, 1.5, CharacteristicForm::Unnormalized);
        assert!((a * (c.mu1 - c.mu2) - b).norm() < 1e-12 * (1.0 + b.norm()));
    }

    #[test]
    fn far_field_growth() {
        let lo = 3.0;
        let vals: Vec<f64> = [10.0, 20.0, 40.0]
            .iter()
            .map(|d| characteristic_f(C64::new(lo + d, 0.0), &unit(), lo, CharacteristicForm::Normalized).norm())
            .collect();
        assert!(vals[0] < vals[1] && vals[1] < vals[2], "{vals:?}");
    }

    #[test]
    fn hot_inlet_is_zero() {
        let g = SpatialGrid::new(17).unwrap();
        for form in [CharacteristicForm::Normalized, CharacteristicForm::Unnormalized, CharacteristicForm::Verbatim] {
            let v = eigenfunction(C64::new(0.3, 7.0), &unit(), 5.0, &g, form);
            assert_eq!(v.zh[0], ZERO);
        }
    }

    #[test]
    fn phi1_matches_series() {
        for z in [C64::new(1e-9, 0.0), C64::new(1e-5, -2e-5), C64::new(0.5, 0.25), C64::new(-3.0, 8.0)] {
            let direct = if z.norm() > 1e-3 { (z.exp() - 1.0) / z } else { ONE + z / 2.0 + z * z / 6.0 };
            assert!((phi1(z) - direct).norm() < 1e-12 * direct.norm());
        }
    }

    #[test]
    fn injected_generator_is_rejected() {
        let g = SpatialGrid::new(5).unwrap();
        let gen = assemble_generator(&unit(), &g, 0.0, Some(&Field::zeros(5))).unwrap();
        assert!(discrete_spectrum(&gen).is_err());
    }

    #[test]
    fn no_unstable_modes_for_small_shift() {
        let g = SpatialGrid::new(60).unwrap();
        let (_, sel) = shifted_unstable_modes(&unit(), &g, 0.5, SelectionOptions::default()).unwrap();
        assert_eq!(sel.q(), 0);
    }

    #[test]
    fn conjugate_closure_of_unshifted_spectrum() {
        let g = SpatialGrid::new(80).unwrap();
        let gen = assemble_generator(&unit(), &g, 0.0, None).unwrap();
        let s = discrete_spectrum(&gen).unwrap();
        assert!(conjugate_asymmetry(&s.eigenvalues()) <= 1e-8);
        assert!(s.abscissa() <= 1e-9);
        for m in &s.modes {
            assert!(m.residual < 1e-8);
            assert_eq!(m.eigenfunction.zh[0], ZERO);
        }
        for w in s.modes.windows(2) {
            assert!(w[0].lambda.re >= w[1].lambda.re);
        }
    }

    proptest! {
        #[test]
        fn vieta(re in -20.0f64..20.0, im in -40.0f64..40.0, u1 in 0.2f64..5.0, u2 in 0.2f64..5.0, c1 in 0.1f64..5.0, c2 in 0.1f64..5.0, lo in 0.0f64..10.0) {
            let p = ExchangerParams::new(u1, u2, c1, c2).unwrap();
            let c = characteristic_coefficients(C64::new(re, im), &p, lo);
            let scale1 = 1.0 + c.theta1.norm() + c.mu1.norm() + c.mu2.norm();
            let scale2 = 1.0 + c.theta2.norm() + c.mu1.norm() * c.mu2.norm();
            prop_assert!((c.mu1 + c.mu2 + c.theta1).norm() <= 1e-12 * scale1);
            prop_assert!((c.mu1 * c.mu2 - c.theta2).norm() <= 1e-12 * scale2);
            prop_assert!((c.mu1.re, c.mu1.im) >= (c.mu2.re, c.mu2.im));
        }
    }
}
