//! Error-system simulations, the plant/observer co-simulation and the
//! post-hoc diagnostics on the stable complement.

use crate::config::{ExperimentConfig, FitWindow};
use crate::design::{ObserverGain, UnstableBasis};
use crate::discretize::{assemble_generator, integrate, step_count, ImplicitEuler, TimeSeries};
use crate::error::{ObserverError, Result};
use crate::field::{norm_weighted, Field, C64};
use crate::model::BoundaryInput;

/// Norm samples below `FIT_FLOOR · norm(0)` are treated as roundoff.
pub const FIT_FLOOR: f64 = 1e-14;

/// Log-linear least-squares fit `norm(t) ≈ exp(b - rate·t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub rate: f64,
    /// `exp(b) / norm(0)`
    pub intercept_m: f64,
    /// Window actually used, after any shrinking.
    pub window: (f64, f64),
    pub samples: usize,
    pub warnings: Vec<String>,
}

pub fn fit_decay_rate(norms: &TimeSeries<f64>, window: (f64, f64)) -> Result<DecayFit> {
    let norm0 = *norms
        .values
        .first()
        .ok_or_else(|| ObserverError::Fit("empty series".into()))?;
    if !(norm0 > 0.0) {
        return Err(ObserverError::Fit("initial norm is zero; decay rate undefined".into()));
    }
    let (start, end) = window;
    if !(end > start) {
        return Err(ObserverError::Fit(format!("empty window [{start}, {end}]")));
    }
    let floor = FIT_FLOOR * norm0;
    let mut warnings = Vec::new();
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for (t, &v) in norms.iter() {
        if t < start || t > end {
            continue;
        }
        if !(v > floor) {
            warnings.push(format!(
                "norm reaches the numerical floor at t = {t}; window shrunk to [{start}, {}]",
                pts.last().map_or(start, |p| p.0)
            ));
            break;
        }
        pts.push((t, v.ln()));
    }
    if pts.len() < 2 {
        return Err(ObserverError::Fit(format!(
            "fewer than two usable samples in [{start}, {end}]"
        )));
    }
    let m = pts.len() as f64;
    let tb = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let yb = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - tb) * (p.1 - yb)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - tb).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = yb - slope * tb;
    Ok(DecayFit {
        rate: -slope,
        intercept_m: intercept.exp() / norm0,
        window: (pts[0].0, pts[pts.len() - 1].0),
        samples: pts.len(),
        warnings,
    })
}

/// Turns a configured window into absolute times for a given series.
pub fn resolve_window(window: FitWindow, norms: &TimeSeries<f64>) -> (f64, f64) {
    let t_end = norms.times.last().copied().unwrap_or(0.0);
    match window {
        FitWindow::Tail { start_fraction } => (start_fraction * t_end, t_end),
        FitWindow::Time { start, end } => (start, end.min(t_end)),
        FitWindow::Level { lo, hi } => {
            let n0 = norms.values.first().copied().unwrap_or(0.0);
            let scaled = |v: f64| v / n0;
            let start = norms
                .iter()
                .find(|(_, &v)| scaled(v) <= hi)
                .map_or(t_end, |(t, _)| t);
            let end = norms
                .iter()
                .filter(|(_, &v)| scaled(v) >= lo)
                .last()
                .map_or(start, |(t, _)| t);
            (start, end)
        }
    }
}

/// `max_{t ≤ until} norm(t) e^{rate t} / norm(0)`: the smallest `M` for which
/// `M norm(0) e^{-rate t}` bounds the transient.
pub fn overshoot_constant(norms: &TimeSeries<f64>, rate: f64, until: f64) -> f64 {
    let n0 = norms.values.first().copied().unwrap_or(0.0);
    norms
        .iter()
        .filter(|(t, _)| *t <= until)
        .map(|(t, &v)| v * (rate * t).exp() / n0)
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub tag: String,
    /// Prescribed rate of the gain, `None` for the direct model.
    pub lambda_o: Option<f64>,
    pub q: usize,
    /// `‖z̃(t)‖` over the complex field.
    pub norms: TimeSeries<f64>,
    /// `‖Re z̃(t)‖`
    pub norms_real: TimeSeries<f64>,
    pub snapshots: TimeSeries<Field>,
    pub initial_norm: f64,
    pub fit: Option<DecayFit>,
    pub fitted_rate: Option<f64>,
    /// Transient overshoot constant at the fitted rate.
    pub fitted_m: Option<f64>,
    /// `‖(I - P) z̃(t)‖`, with `P` the projection onto the gain's basis.
    pub xi_norms: TimeSeries<f64>,
    /// `𝖳(t) = -((I - P) z̃)ᶜ(0)`
    pub t_series: TimeSeries<C64>,
    /// `∫₀ᵗ |𝖳|²` by the trapezoidal rule.
    pub t_l2_cumulative: TimeSeries<f64>,
    pub warnings: Vec<String>,
}

impl SimResult {
    pub fn scaled_real(&self) -> Vec<f64> {
        self.norms_real.values.iter().map(|v| v / self.initial_norm).collect()
    }

    /// First output time at which the scaled complex norm is at or below `level`.
    pub fn first_time_below(&self, level: f64) -> Option<f64> {
        self.norms
            .iter()
            .find(|(_, &v)| v <= level * self.initial_norm)
            .map(|(t, _)| t)
    }

    /// Linear interpolation of the complex norm at `t`.
    pub fn norm_at(&self, t: f64) -> f64 {
        interpolate(&self.norms, t)
    }

    pub fn real_norm_at(&self, t: f64) -> f64 {
        interpolate(&self.norms_real, t)
    }
}

fn interpolate(s: &TimeSeries<f64>, t: f64) -> f64 {
    let k = s.times.partition_point(|&x| x < t);
    if k == 0 {
        return s.values[0];
    }
    if k >= s.len() {
        return s.values[s.len() - 1];
    }
    let (t0, t1) = (s.times[k - 1], s.times[k]);
    let a = (t - t0) / (t1 - t0);
    s.values[k - 1] * (1.0 - a) + s.values[k] * a
}

struct Recorder<'a> {
    w: Vec<f64>,
    stride: usize,
    basis: Option<&'a UnstableBasis>,
    res: SimResult,
    prev_t: Option<(f64, f64)>,
}

impl<'a> Recorder<'a> {
    fn new(tag: String, lambda_o: Option<f64>, w: Vec<f64>, stride: usize, basis: Option<&'a UnstableBasis>) -> Self {
        Self {
            w,
            stride: stride.max(1),
            basis,
            res: SimResult {
                tag,
                lambda_o,
                q: basis.map_or(0, |b| b.q()),
                norms: TimeSeries::new(),
                norms_real: TimeSeries::new(),
                snapshots: TimeSeries::new(),
                initial_norm: 0.0,
                fit: None,
                fitted_rate: None,
                fitted_m: None,
                xi_norms: TimeSeries::new(),
                t_series: TimeSeries::new(),
                t_l2_cumulative: TimeSeries::new(),
                warnings: Vec::new(),
            },
            prev_t: None,
        }
    }

    fn record(&mut self, k: usize, t: f64, z: &Field) {
        let r = &mut self.res;
        r.norms.push(t, norm_weighted(&self.w, z));
        r.norms_real.push(t, norm_weighted(&self.w, &z.real_part()));
        if k.is_multiple_of(self.stride) {
            r.snapshots.push(t, z.clone());
        }
        let xi = match self.basis {
            Some(b) if b.q() > 0 => b.complement(z),
            _ => z.clone(),
        };
        let tt = -xi.zc[0];
        r.xi_norms.push(t, norm_weighted(&self.w, &xi));
        r.t_series.push(t, tt);
        let sq = tt.norm_sqr();
        let acc = match self.prev_t {
            None => 0.0,
            Some((t0, sq0)) => r.t_l2_cumulative.values.last().copied().unwrap_or(0.0) + 0.5 * (t - t0) * (sq + sq0),
        };
        r.t_l2_cumulative.push(t, acc);
        self.prev_t = Some((t, sq));
    }

    fn finish(mut self, window: FitWindow) -> SimResult {
        let r = &mut self.res;
        r.initial_norm = r.norms.values.first().copied().unwrap_or(0.0);
        if r.initial_norm > 0.0 {
            let win = resolve_window(window, &r.norms);
            match fit_decay_rate(&r.norms, win) {
                Ok(fit) => {
                    r.fitted_rate = Some(fit.rate);
                    r.fitted_m = Some(overshoot_constant(&r.norms, fit.rate, fit.window.0));
                    r.warnings.extend(fit.warnings.iter().cloned());
                    r.fit = Some(fit);
                }
                Err(e) => r.warnings.push(format!("decay fit failed: {e}")),
            }
        } else {
            r.warnings.push("initial error is zero; decay rate undefined".into());
        }
        self.res
    }
}

fn tag_for(gain: Option<&ObserverGain>) -> String {
    match gain {
        None => "direct".into(),
        Some(g) => format!("lambda_{}", g.basis.lambda_o),
    }
}

/// Simulates `ż = (A - κC) z` from the configured initial error; `gain = None`
/// is the direct model (`κ = 0`).
pub fn run_error_experiment(config: &ExperimentConfig, gain: Option<&ObserverGain>) -> Result<SimResult> {
    let grid = config.grid()?;
    let init = config.initial_error(&grid);
    run_error_from(config, gain, &init)
}

/// As [`run_error_experiment`] with an explicit initial error.
pub fn run_error_from(config: &ExperimentConfig, gain: Option<&ObserverGain>, init: &Field) -> Result<SimResult> {
    let grid = config.grid()?;
    if let Some(g) = gain {
        g.kappa.check_grid(&grid)?;
    }
    let gen = assemble_generator(&config.params, &grid, 0.0, gain.map(|g| &g.kappa))?;
    let mut rec = Recorder::new(
        tag_for(gain),
        gain.map(|g| g.basis.lambda_o),
        grid.trapezoid_weights(),
        config.output.snapshot_stride,
        gain.map(|g| &g.basis),
    );
    integrate(&gen, init, config.time.dt, config.time.t_final, |k, t, z| rec.record(k, t, z))?;
    Ok(rec.finish(config.output.fit_window))
}

/// Co-simulates the real plant and the complex observer with inlet data
/// `boundary`. The recorded error is `T̂ - T`; `norms_real` holds `‖Re T̂ - T‖`.
pub fn run_plant_observer_demo(
    config: &ExperimentConfig,
    gain: &ObserverGain,
    boundary: &BoundaryInput,
    plant_init: &Field,
    observer_init: &Field,
) -> Result<SimResult> {
    let grid = config.grid()?;
    gain.kappa.check_grid(&grid)?;
    plant_init.check_grid(&grid)?;
    observer_init.check_grid(&grid)?;
    let n = grid.n();
    let mut warnings = Vec::new();
    if plant_init.zh.iter().chain(&plant_init.zc).any(|v| v.im != 0.0) {
        return Err(ObserverError::InvalidParameter {
            name: "plant_init",
            reason: "plant state must be real".into(),
        });
    }
    let tol = 1e-12;
    let (gh0, gc0) = (boundary.hot(0.0), boundary.cold(0.0));
    for (what, f) in [("plant", plant_init), ("observer", observer_init)] {
        if (f.zh[0] - gh0).norm() > tol || (f.zc[n - 1] - gc0).norm() > tol {
            warnings.push(format!("{what} initial state violates the zeroth-order compatibility conditions"));
        }
    }
    let err0 = observer_init.sub(plant_init);
    if err0.zh[0].norm() > tol || err0.zc[n - 1].norm() > tol {
        warnings.push("initial error is nonzero at an inlet".into());
    }

    let (dt, t_final) = (config.time.dt, config.time.t_final);
    let plant = ImplicitEuler::new(&assemble_generator(&config.params, &grid, 0.0, None)?, dt)?;
    let observer = ImplicitEuler::new(&assemble_generator(&config.params, &grid, 0.0, Some(&gain.kappa))?, dt)?;
    let mut rec = Recorder::new(
        format!("demo_lambda_{}", gain.basis.lambda_o),
        Some(gain.basis.lambda_o),
        grid.trapezoid_weights(),
        config.output.snapshot_stride,
        Some(&gain.basis),
    );
    let w = grid.trapezoid_weights();
    let mut real_gap = TimeSeries::new();
    let mut t_state = plant_init.clone();
    let mut o_state = observer_init.clone();
    let mut record = |rec: &mut Recorder, k: usize, t: f64, p: &Field, o: &Field| {
        rec.record(k, t, &o.sub(p));
        real_gap.push(t, norm_weighted(&w, &o.real_part().sub(p)));
    };
    record(&mut rec, 0, 0.0, &t_state, &o_state);
    for k in 1..=step_count(dt, t_final) {
        let t = k as f64 * dt;
        let (gh, gc) = (C64::new(boundary.hot(t), 0.0), C64::new(boundary.cold(t), 0.0));
        t_state = plant.step_with_boundary(&t_state, None, gh, gc);
        let forcing = gain.kappa.scaled(t_state.zc[0]);
        o_state = observer.step_with_boundary(&o_state, Some(&forcing), gh, gc);
        record(&mut rec, k, t, &t_state, &o_state);
    }
    let mut res = rec.finish(config.output.fit_window);
    res.norms_real = real_gap;
    res.warnings.splice(0..0, warnings);
    Ok(res)
}

/// Projection diagnostics recomputed from the stored snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    pub q: usize,
    pub lambda_o: f64,
    pub snapshots_used: usize,
    /// Fitted decay rate of `‖ξ(t)‖`, `ξ = (I - P) z̃`.
    pub xi_rate: Option<f64>,
    /// Same for `e^{λ_o t} ‖ξ(t)‖`, the complement in the shifted frame.
    pub xi_rate_shifted: Option<f64>,
    pub t_l2_total: f64,
    /// Increase of `∫|𝖳|²` over the last 20% of the horizon, relative to the total.
    pub t_l2_tail_fraction: f64,
    pub t_l2_total_shifted: f64,
    pub t_l2_tail_fraction_shifted: f64,
    pub tail_start: f64,
}

fn cumulative_trapezoid(times: &[f64], vals: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0; vals.len()];
    for k in 1..vals.len() {
        acc[k] = acc[k - 1] + 0.5 * (times[k] - times[k - 1]) * (vals[k] + vals[k - 1]);
    }
    acc
}

fn tail_fraction(times: &[f64], cum: &[f64], tail_start: f64) -> f64 {
    let total = *cum.last().unwrap();
    if total == 0.0 {
        return 0.0;
    }
    let k = times.partition_point(|&t| t < tail_start);
    (total - cum[k.min(cum.len() - 1)]) / total
}

pub fn diagnostics(result: &SimResult, basis: &UnstableBasis) -> Result<DiagnosticsReport> {
    let snaps = &result.snapshots;
    if snaps.len() < 3 {
        return Err(ObserverError::InsufficientSnapshots(format!(
            "{} snapshots; need at least 3",
            snaps.len()
        )));
    }
    let w = basis.grid.trapezoid_weights();
    let lambda_o = basis.lambda_o;
    let mut xi = TimeSeries::new();
    let mut xi_shifted = TimeSeries::new();
    let mut tsq = Vec::with_capacity(snaps.len());
    let mut tsq_shifted = Vec::with_capacity(snaps.len());
    for (t, z) in snaps.iter() {
        z.check_grid(&basis.grid)?;
        let c = basis.complement(z);
        let nx = norm_weighted(&w, &c);
        let g = (lambda_o * t).exp();
        xi.push(t, nx);
        xi_shifted.push(t, nx * g);
        let s = c.zc[0].norm_sqr();
        tsq.push(s);
        tsq_shifted.push(s * g * g);
    }
    let t_end = *snaps.times.last().unwrap();
    let fit_win = (0.6 * t_end, t_end);
    let xi_rate = fit_decay_rate(&xi, fit_win).ok().map(|f| f.rate);
    let xi_rate_shifted = fit_decay_rate(&xi_shifted, fit_win).ok().map(|f| f.rate);
    let tail_start = 0.8 * t_end;
    let cum = cumulative_trapezoid(&snaps.times, &tsq);
    let cum_s = cumulative_trapezoid(&snaps.times, &tsq_shifted);
    Ok(DiagnosticsReport {
        q: basis.q(),
        lambda_o,
        snapshots_used: snaps.len(),
        xi_rate,
        xi_rate_shifted,
        t_l2_total: *cum.last().unwrap(),
        t_l2_tail_fraction: tail_fraction(&snaps.times, &cum, tail_start),
        t_l2_total_shifted: *cum_s.last().unwrap(),
        t_l2_tail_fraction_shifted: tail_fraction(&snaps.times, &cum_s, tail_start),
        tail_start,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::InitProfile;
    use crate::design::ObserverGain;

    fn series(f: impl Fn(f64) -> f64, dt: f64, steps: usize) -> TimeSeries<f64> {
        let mut s = TimeSeries::new();
        for k in 0..=steps {
            let t = k as f64 * dt;
            s.push(t, f(t));
        }
        s
    }

    #[test]
    fn fit_exact_exponentials() {
        let s = series(|t| (-3.0 * t).exp(), 0.01, 500);
        let f = fit_decay_rate(&s, (1.0, 4.0)).unwrap();
        assert!((f.rate - 3.0).abs() < 1e-12 && (f.intercept_m - 1.0).abs() < 1e-10);

        let s = series(|t| 2.0 * (-5.0 * t).exp(), 0.01, 500);
        let f = fit_decay_rate(&s, (0.5, 2.0)).unwrap();
        assert!((f.rate - 5.0).abs() < 1e-12);
        // norm(0) = 2 absorbs the prefactor
        assert!((f.intercept_m - 1.0).abs() < 1e-10);
        assert!((overshoot_constant(&s, 5.0, 2.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_shrinks_at_floor() {
        let s = series(|t| if t < 2.0 { (-5.0 * t).exp() } else { 0.0 }, 0.01, 500);
        let f = fit_decay_rate(&s, (1.0, 4.0)).unwrap();
        assert!(f.window.1 < 2.0);
        assert!(!f.warnings.is_empty());
        assert!((f.rate - 5.0).abs() < 1e-10);
        let z = series(|_| 0.0, 0.1, 10);
        assert!(fit_decay_rate(&z, (0.0, 1.0)).is_err());
    }

    #[test]
    fn level_window() {
        let s = series(|t| 4.0 * (-2.0 * t).exp(), 0.01, 1000);
        let (a, b) = resolve_window(FitWindow::Level { lo: 1e-6, hi: 1e-2 }, &s);
        assert!((a - (100f64).ln() / 2.0).abs() < 0.011);
        assert!((b - (1e6f64).ln() / 2.0).abs() < 0.011);
    }

    fn small_config() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.grid.n = 40;
        c.time.dt = 1e-2;
        c.time.t_final = 1.0;
        c.output.snapshot_stride = 5;
        c
    }

    #[test]
    fn zero_initial_error() {
        let mut c = small_config();
        c.init.hot = InitProfile::Zero;
        c.init.cold = InitProfile::Zero;
        let r = run_error_experiment(&c, None).unwrap();
        assert!(r.norms.values.iter().all(|&v| v == 0.0));
        assert!(r.fitted_rate.is_none());
        assert!(!r.warnings.is_empty());
        assert_eq!(r.norms.len(), 101);
        assert_eq!(r.snapshots.len(), 21);
    }

    #[test]
    fn direct_model_diagnostics_use_the_whole_state() {
        let c = small_config();
        let r = run_error_experiment(&c, None).unwrap();
        let g = c.grid().unwrap();
        let zero = ObserverGain::zero(&g, 3.0);
        assert_eq!(r.xi_norms.values, r.norms.values);
        for (k, (_, z)) in r.snapshots.iter().enumerate() {
            assert_eq!(r.t_series.values[k * 5], -z.zc[0]);
        }
        let d = diagnostics(&r, &zero.basis).unwrap();
        assert_eq!(d.q, 0);
        assert!(d.xi_rate.unwrap() > 0.0);
    }

    #[test]
    fn diagnostics_need_snapshots() {
        let mut c = small_config();
        c.output.snapshot_stride = 1000;
        let r = run_error_experiment(&c, None).unwrap();
        let g = c.grid().unwrap();
        assert!(matches!(
            diagnostics(&r, &ObserverGain::zero(&g, 3.0).basis),
            Err(ObserverError::InsufficientSnapshots(_))
        ));
    }

    #[test]
    fn demo_with_exact_initialization_has_no_error() {
        let c = small_config();
        let g = c.grid().unwrap();
        let gain = ObserverGain::zero(&g, 3.0);
        let mut p = Field::from_real_fn(&g, |x| 1.0 + x, |x| 2.0 - x);
        p.zh[0] = C64::new(1.0, 0.0);
        let b = BoundaryInput::constant(1.0, 1.0);
        let r = run_plant_observer_demo(&c, &gain, &b, &p, &p).unwrap();
        assert!(r.norms.values.iter().all(|&v| v == 0.0));
        assert!(r.norms_real.values.iter().all(|&v| v == 0.0));
    }
}
