use std::f64::consts::PI;

use specobs_core::config::{ExperimentConfig, InitProfile};
use specobs_core::design::design_observer;
use specobs_core::discretize::{assemble_generator, simulate};
use specobs_core::experiment::{run_error_experiment, run_error_from, run_plant_observer_demo};
use specobs_core::field::{norm, Field, C64};
use specobs_core::model::{BoundaryInput, ExchangerParams, SpatialGrid};
use specobs_core::report::norms_csv;
use specobs_core::spectral::SelectionOptions;

fn config(n: usize, dt: f64, t_final: f64) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.grid.n = n;
    c.time.dt = dt;
    c.time.t_final = t_final;
    c
}

#[test]
fn reference_row_count() {
    let c = ExperimentConfig::default();
    let r = run_error_experiment(&c, None).unwrap();
    assert_eq!(r.norms.len(), 2001);
    assert!((r.norms.times[2000] - 5.0).abs() < 1e-12);
    assert_eq!(r.snapshots.len(), 101);
}

#[test]
fn characteristics_oracle() {
    // c = 0: each stream is a pure shift, zh(x, t) = h0(x - t), zc(x, t) = c0(x + t)
    let h0 = |x: f64| if (0.0..=1.0).contains(&x) { (PI * x).sin().powi(2) } else { 0.0 };
    let c0 = |x: f64| if (0.0..=1.0).contains(&x) { (PI * x).sin().powi(2) * 0.5 } else { 0.0 };
    let p = ExchangerParams::uncoupled(1.0, 1.0).unwrap();
    let t = 0.3;
    let mut errors = Vec::new();
    for n in [101, 201, 401] {
        let g = SpatialGrid::new(n).unwrap();
        let init = Field::from_real_fn(&g, h0, c0);
        let dt = 0.2 * g.dx();
        let gen = assemble_generator(&p, &g, 0.0, None).unwrap();
        let sim = simulate(&gen, &init, dt, t, 1_000_000).unwrap();
        let exact = Field::from_real_fn(&g, |x| h0(x - t), |x| c0(x + t));
        errors.push(norm(&g, &sim.final_state.sub(&exact)) / norm(&g, &exact));
    }
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
    // first-order scheme: halving dx roughly halves the error
    assert!(errors[1] / errors[2] > 1.6, "{errors:?}");
    assert!(errors[2] < 0.05, "{errors:?}");
}

#[test]
fn richardson_time_step() {
    let at_one = |dt: f64| {
        let r = run_error_experiment(&config(100, dt, 1.0), None).unwrap();
        *r.norms.values.last().unwrap()
    };
    let (a, b, c) = (at_one(1e-2), at_one(5e-3), at_one(2.5e-3));
    let ratio = (a - b).abs() / (b - c).abs();
    assert!((1.6..2.4).contains(&ratio), "ratio {ratio}");
}

#[test]
fn linearity_in_initial_data() {
    let c = config(60, 1e-2, 2.0);
    let mut c2 = c.clone();
    c2.init.hot = c.init.hot.scaled(2.0);
    c2.init.cold = c.init.cold.scaled(2.0);
    let g = c.grid().unwrap();
    let d = design_observer(&c.params, &g, 5.0, SelectionOptions::default()).unwrap();
    let r1 = run_error_experiment(&c, Some(&d.gain)).unwrap();
    let r2 = run_error_experiment(&c2, Some(&d.gain)).unwrap();
    for (a, b) in r1.norms.values.iter().zip(&r2.norms.values) {
        assert!((2.0 * a - b).abs() <= 1e-10 * b.abs().max(1e-300), "{a} {b}");
    }
}

#[test]
fn runs_are_deterministic() {
    let c = config(80, 5e-3, 1.0);
    let g = c.grid().unwrap();
    let d = design_observer(&c.params, &g, 5.0, SelectionOptions::default()).unwrap();
    let a = norms_csv(&run_error_experiment(&c, Some(&d.gain)).unwrap());
    let d2 = design_observer(&c.params, &g, 5.0, SelectionOptions::default()).unwrap();
    let b = norms_csv(&run_error_experiment(&c, Some(&d2.gain)).unwrap());
    assert_eq!(a, b);
}

fn plant_state(g: &SpatialGrid, gh: f64, gc: f64) -> Field {
    // real profile satisfying the inlet values
    Field::from_real_fn(g, |x| gh + 2.0 * x * (1.0 - x), |x| gc + (1.0 - x) * 0.5)
}

#[test]
fn homogeneous_demo_equals_error_system() {
    let c = config(100, 5e-3, 2.0);
    let g = c.grid().unwrap();
    let d = design_observer(&c.params, &g, 3.0, SelectionOptions::default()).unwrap();
    let plant = plant_state(&g, 0.0, 0.0);
    let e0 = c.initial_error(&g);
    let mut observer = plant.clone();
    observer.axpy(C64::new(1.0, 0.0), &e0);
    let demo = run_plant_observer_demo(&c, &d.gain, &BoundaryInput::homogeneous(), &plant, &observer).unwrap();
    let err = run_error_experiment(&c, Some(&d.gain)).unwrap();
    let scale = err.initial_norm;
    for (a, b) in demo.norms.values.iter().zip(&err.norms.values) {
        assert!((a - b).abs() <= 1e-10 * scale);
    }
    assert!(demo.warnings.is_empty(), "{:?}", demo.warnings);
}

#[test]
fn inhomogeneous_demo_matches_error_rate() {
    let c = config(100, 5e-3, 5.0);
    let g = c.grid().unwrap();
    let d = design_observer(&c.params, &g, 3.0, SelectionOptions::default()).unwrap();
    let plant = plant_state(&g, 1.0, 1.0);
    let mut observer = Field::from_real_fn(&g, |x| 1.0 + 3.0 * (PI * x).sin(), |x| 1.0 - 2.0 * (PI * (1.0 - x)).sin());
    observer.zh[0] = C64::new(1.0, 0.0);
    observer.zc[g.n() - 1] = C64::new(1.0, 0.0);
    let b = BoundaryInput::constant(1.0, 1.0);
    let demo = run_plant_observer_demo(&c, &d.gain, &b, &plant, &observer).unwrap();
    assert!(demo.warnings.is_empty(), "{:?}", demo.warnings);
    let err = run_error_from(&c, Some(&d.gain), &observer.sub(&plant)).unwrap();
    let (r_demo, r_err) = (demo.fitted_rate.unwrap(), err.fitted_rate.unwrap());
    assert!((r_demo - r_err).abs() <= 0.05 * r_err, "{r_demo} vs {r_err}");
    // the real part of the observer is at least as close to the plant as the complex error
    for (gap, e) in demo.norms_real.values.iter().zip(&demo.norms.values) {
        assert!(*gap <= e * (1.0 + 1e-12) + 1e-300);
    }
}

#[test]
fn demo_flags_incompatible_initial_data() {
    let c = config(30, 1e-2, 0.1);
    let g = c.grid().unwrap();
    let d = design_observer(&c.params, &g, 3.0, SelectionOptions::default()).unwrap();
    let plant = plant_state(&g, 0.0, 0.0);
    let observer = Field::from_real_fn(&g, |_| 1.0, |_| 1.0);
    let r = run_plant_observer_demo(&c, &d.gain, &BoundaryInput::homogeneous(), &plant, &observer).unwrap();
    assert!(r.warnings.iter().any(|w| w.contains("compatibility")));
    let mut complex_plant = plant.clone();
    complex_plant.zh[3].im = 1.0;
    assert!(run_plant_observer_demo(&c, &d.gain, &BoundaryInput::homogeneous(), &complex_plant, &observer).is_err());
}

#[test]
fn zero_profile_config() {
    let mut c = config(20, 1e-2, 0.2);
    c.init.hot = InitProfile::Zero;
    let r = run_error_experiment(&c, None).unwrap();
    assert!((r.initial_norm - 18f64.sqrt()).abs() < 1e-12);
}
