//! Gain synthesis on the unstable subspace of `A_s`.
//!
//! The unstable eigenfunctions are orthonormalized into `{w_i}`, the shifted
//! dynamics are projected onto their span (`𝖠`, `𝖢`), a finite gain `𝖪` is
//! chosen by a filter Riccati equation so that `𝖠 - 𝖪𝖢` is Hurwitz, and the
//! distributed injection profile is `κ = Σ K_i w_i`.

use crate::error::{ObserverError, Result};
use crate::field::{inner_weighted, norm_weighted, Field, C64, ONE, ZERO};
use crate::linalg::{self, CMat};
use crate::model::{ExchangerParams, SpatialGrid};
use crate::riccati::{solve_filter_are, RiccatiSolution};
use crate::spectral::{self, Mode, SelectionOptions, Spectrum, UnstableSelection};

/// Orthonormal basis of the unstable subspace.
#[derive(Debug, Clone)]
pub struct UnstableBasis {
    pub w: Vec<Field>,
    pub modes: Vec<Mode>,
    /// `w_i = Σ_j combo[(i, j)] v_j`
    pub combo: CMat,
    pub lambda_o: f64,
    pub grid: SpatialGrid,
}

impl UnstableBasis {
    pub fn q(&self) -> usize {
        self.w.len()
    }

    /// Coefficients `z_i = ⟨z, w_i⟩`.
    pub fn coefficients(&self, z: &Field) -> Vec<C64> {
        let wts = self.grid.trapezoid_weights();
        self.w.iter().map(|wi| inner_weighted(&wts, z, wi)).collect()
    }

    /// `P z = Σ ⟨z, w_i⟩ w_i`
    pub fn project(&self, z: &Field) -> Field {
        let mut out = Field::zeros(z.len());
        for (ci, wi) in self.coefficients(z).into_iter().zip(&self.w) {
            out.axpy(ci, wi);
        }
        out
    }

    /// `(I - P) z`
    pub fn complement(&self, z: &Field) -> Field {
        z.sub(&self.project(z))
    }

    /// Largest `|⟨w_i, w_j⟩ - δ_ij|`.
    pub fn gram_deviation(&self) -> f64 {
        let wts = self.grid.trapezoid_weights();
        let mut worst = 0.0f64;
        for (i, a) in self.w.iter().enumerate() {
            for (j, b) in self.w.iter().enumerate() {
                let target = if i == j { ONE } else { ZERO };
                worst = worst.max((inner_weighted(&wts, a, b) - target).norm());
            }
        }
        worst
    }

    /// Largest relative residual of reconstructing each source eigenfunction from `{w_i}`.
    pub fn span_residual(&self) -> f64 {
        let wts = self.grid.trapezoid_weights();
        self.modes
            .iter()
            .map(|m| {
                let v = &m.eigenfunction;
                norm_weighted(&wts, &self.complement(v)) / norm_weighted(&wts, v)
            })
            .fold(0.0, f64::max)
    }
}

fn weighted_sample_matrix(modes: &[Mode], grid: &SpatialGrid) -> CMat {
    let n = grid.n();
    let sw: Vec<f64> = grid.trapezoid_weights().iter().map(|w| w.sqrt()).collect();
    CMat::from_fn(2 * n, modes.len(), |r, j| {
        let v = &modes[j].eigenfunction;
        if r < n {
            v.zh[r] * sw[r]
        } else {
            v.zc[r - n] * sw[r - n]
        }
    })
}

/// Modified Gram–Schmidt with one reorthogonalization pass.
///
/// An empty mode list yields an empty basis (the `q = 0` case).
pub fn orthonormalize(modes: &[Mode], grid: &SpatialGrid, lambda_o: f64) -> Result<UnstableBasis> {
    let q = modes.len();
    for m in modes {
        m.eigenfunction.check_grid(grid)?;
    }
    let wts = grid.trapezoid_weights();
    let mut w: Vec<Field> = Vec::with_capacity(q);
    let mut combo = linalg::zeros(q, q);
    let mut weak = Vec::new();
    for i in 0..q {
        let v = &modes[i].eigenfunction;
        let v_norm = norm_weighted(&wts, v);
        let mut u = v.clone();
        let mut coeff = vec![ZERO; q];
        coeff[i] = ONE;
        for _pass in 0..2 {
            for k in 0..w.len() {
                let r = inner_weighted(&wts, &u, &w[k]);
                u.axpy(-r, &w[k]);
                for j in 0..q {
                    coeff[j] -= r * combo[(k, j)];
                }
            }
        }
        let nu = norm_weighted(&wts, &u);
        if !(nu > 1e-10 * v_norm) {
            weak.push(i);
            continue;
        }
        for j in 0..q {
            combo[(i, j)] = coeff[j] / nu;
        }
        w.push(u.scaled(C64::new(1.0 / nu, 0.0)));
    }
    let sigma_min = if q == 0 {
        f64::INFINITY
    } else {
        linalg::sigma_min(&weighted_sample_matrix(modes, grid))?
    };
    if !weak.is_empty() || !(sigma_min > 1e-10) {
        return Err(ObserverError::RankDeficient {
            indices: weak,
            sigma_min,
        });
    }
    Ok(UnstableBasis {
        w,
        modes: modes.to_vec(),
        combo,
        lambda_o,
        grid: grid.clone(),
    })
}

/// Projected error dynamics `Ż = (𝖠 - 𝖪𝖢) Z + 𝖪𝖳` on the unstable subspace.
#[derive(Debug, Clone)]
pub struct ProjectedSystem {
    /// `a[(k, i)] = ⟨A_s w_i, w_k⟩`
    pub a: CMat,
    /// `c[(0, i)] = w_iᶜ(0)`
    pub c: CMat,
    pub k: Option<CMat>,
    pub q_weight: CMat,
    pub r_weight: f64,
    pub lambda_o: f64,
    pub riccati: Option<RiccatiSolution>,
}

impl ProjectedSystem {
    pub fn q(&self) -> usize {
        self.a.nrows()
    }

    pub fn closed_loop(&self) -> Option<CMat> {
        self.k.as_ref().map(|k| &self.a - k * &self.c)
    }
}

/// Builds `𝖠` and `𝖢` on the basis span.
///
/// `A_s w_i` is evaluated exactly on the span as `Σ_j G_ij λ_j v_j`, so no
/// derivative of sampled data is taken.
pub fn project_system(basis: &UnstableBasis) -> ProjectedSystem {
    let q = basis.q();
    let n = basis.grid.n();
    let wts = basis.grid.trapezoid_weights();
    let images: Vec<Field> = (0..q)
        .map(|i| {
            let mut img = Field::zeros(n);
            for (j, m) in basis.modes.iter().enumerate() {
                img.axpy(basis.combo[(i, j)] * m.lambda, &m.eigenfunction);
            }
            img
        })
        .collect();
    let a = CMat::from_fn(q, q, |k, i| inner_weighted(&wts, &images[i], &basis.w[k]));
    let c = CMat::from_fn(1, q, |_, i| basis.w[i].zc[0]);
    let weight = (basis.lambda_o + 2.0).powi(2);
    ProjectedSystem {
        a,
        c,
        k: None,
        q_weight: linalg::scale(&linalg::identity(q), C64::new(weight, 0.0)),
        r_weight: 1.0,
        lambda_o: basis.lambda_o,
        riccati: None,
    }
}

#[derive(Debug, Clone)]
pub struct ObservabilityReport {
    /// `(λ, σ_min([λI - 𝖠; 𝖢]))` per eigenvalue of `𝖠`.
    pub margins: Vec<(C64, f64)>,
    pub tol: f64,
    pub passed: bool,
}

impl ObservabilityReport {
    pub fn worst_margin(&self) -> f64 {
        self.margins.iter().map(|m| m.1).fold(f64::INFINITY, f64::min)
    }
}

/// Popov–Belevitch–Hautus rank test.
pub fn hautus_check(sys: &ProjectedSystem, tol: f64) -> Result<ObservabilityReport> {
    let q = sys.q();
    let eigs = linalg::eigvals(&sys.a, "projected matrix")?;
    let mut margins = Vec::with_capacity(q);
    for lam in eigs {
        let stacked = CMat::from_fn(q + 1, q, |i, j| {
            if i < q {
                let d = if i == j { lam } else { ZERO };
                d - sys.a[(i, j)]
            } else {
                sys.c[(0, j)]
            }
        });
        margins.push((lam, linalg::sigma_min(&stacked)?));
    }
    let passed = margins.iter().all(|m| m.1 > tol);
    Ok(ObservabilityReport {
        margins,
        tol,
        passed,
    })
}

/// Fills `𝖪 = P 𝖢ᴴ R⁻¹` from the filter Riccati equation with weights `Q = (λ_o + 2)² I`, `R = 1`.
pub fn design_gain(sys: &ProjectedSystem) -> Result<ProjectedSystem> {
    let sol = solve_filter_are(&sys.a, &sys.c, &sys.q_weight, sys.r_weight)?;
    if sys.q() > 0 && !(sol.residual <= 1e-8) {
        return Err(ObserverError::Riccati {
            reason: "residual above 1e-8".into(),
            residual: sol.residual,
            abscissa: sol.closed_loop_abscissa(),
        });
    }
    let mut out = sys.clone();
    out.k = Some(sol.k.clone());
    out.riccati = Some(sol);
    Ok(out)
}

/// Distributed gain with its provenance.
#[derive(Debug, Clone)]
pub struct ObserverGain {
    pub kappa: Field,
    pub coefficients: Vec<C64>,
    pub basis: UnstableBasis,
}

impl ObserverGain {
    /// Zero gain on `grid`; the observer then reduces to the plant model.
    pub fn zero(grid: &SpatialGrid, lambda_o: f64) -> Self {
        Self {
            kappa: Field::zeros(grid.n()),
            coefficients: Vec::new(),
            basis: UnstableBasis {
                w: Vec::new(),
                modes: Vec::new(),
                combo: linalg::zeros(0, 0),
                lambda_o,
                grid: grid.clone(),
            },
        }
    }

    pub fn norm(&self) -> f64 {
        norm_weighted(&self.basis.grid.trapezoid_weights(), &self.kappa)
    }

    /// `max_i |⟨κ, w_i⟩ - K_i|`
    pub fn coefficient_error(&self) -> f64 {
        self.basis
            .coefficients(&self.kappa)
            .iter()
            .zip(&self.coefficients)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `‖(I - P) κ‖ / ‖κ‖` (zero for a zero gain).
    pub fn projection_residual(&self) -> f64 {
        let wts = self.basis.grid.trapezoid_weights();
        let nk = norm_weighted(&wts, &self.kappa);
        if nk == 0.0 {
            return 0.0;
        }
        norm_weighted(&wts, &self.basis.complement(&self.kappa)) / nk
    }
}

pub fn synthesize_kappa(sys: &ProjectedSystem, basis: &UnstableBasis) -> Result<ObserverGain> {
    let coefficients: Vec<C64> = match &sys.k {
        Some(k) => (0..k.nrows()).map(|i| k[(i, 0)]).collect(),
        None => {
            return Err(ObserverError::InvalidParameter {
                name: "sys",
                reason: "gain K has not been designed".into(),
            })
        }
    };
    if coefficients.len() != basis.q() {
        return Err(ObserverError::InvalidParameter {
            name: "basis",
            reason: format!("K has {} entries but the basis has {}", coefficients.len(), basis.q()),
        });
    }
    let mut kappa = Field::zeros(basis.grid.n());
    for (k, w) in coefficients.iter().zip(&basis.w) {
        kappa.axpy(*k, w);
    }
    Ok(ObserverGain {
        kappa,
        coefficients,
        basis: basis.clone(),
    })
}

/// Everything produced by one pass of the design pipeline.
#[derive(Debug, Clone)]
pub struct ObserverDesign {
    pub spectrum: Spectrum,
    pub selection: UnstableSelection,
    pub system: ProjectedSystem,
    pub observability: ObservabilityReport,
    pub gain: ObserverGain,
    pub notices: Vec<String>,
}

impl ObserverDesign {
    pub fn q(&self) -> usize {
        self.gain.basis.q()
    }

    /// Eigenvalues of `𝖠 - 𝖪𝖢`, in the shifted frame.
    pub fn closed_loop_eigenvalues(&self) -> Vec<C64> {
        self.system
            .riccati
            .as_ref()
            .map(|r| r.closed_loop.clone())
            .unwrap_or_default()
    }
}

pub const HAUTUS_TOL: f64 = 1e-8;

/// Spectrum → unstable modes → basis → projection → Hautus → Riccati → κ.
pub fn design_observer(
    params: &ExchangerParams,
    grid: &SpatialGrid,
    lambda_o: f64,
    selection: SelectionOptions,
) -> Result<ObserverDesign> {
    if !(lambda_o > 0.0 && lambda_o.is_finite()) {
        return Err(ObserverError::InvalidParameter {
            name: "lambda_o",
            reason: format!("prescribed rate must be positive, got {lambda_o}"),
        });
    }
    let (spectrum, selection) = spectral::shifted_unstable_modes(params, grid, lambda_o, selection)?;
    let mut notices = selection.warnings.clone();
    let basis = orthonormalize(&selection.modes, grid, lambda_o)?;
    let system = project_system(&basis);
    let observability = hautus_check(&system, HAUTUS_TOL)?;
    if !observability.passed {
        return Err(ObserverError::NotObservable {
            worst_margin: observability.worst_margin(),
        });
    }
    let system = design_gain(&system)?;
    let gain = synthesize_kappa(&system, &basis)?;
    if basis.q() == 0 {
        notices.push(format!(
            "no eigenvalue of A + {lambda_o} I has nonnegative real part; κ = 0 and the observer is the plant model"
        ));
    }
    Ok(ObserverDesign {
        spectrum,
        selection,
        system,
        observability,
        gain,
        notices,
    })
}
