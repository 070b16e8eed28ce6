//! CSV and JSON renderings of designs, spectra and simulation results.
//!
//! CSV floats use 17 significant digits; JSON numbers use the shortest
//! representation that round-trips. Non-finite values become `null` in JSON.

use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::design::{ObserverDesign, ObserverGain};
use crate::experiment::{DiagnosticsReport, SimResult};
use crate::field::C64;
use crate::model::{ExchangerParams, SpatialGrid};
use crate::spectral::Spectrum;

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn opt(v: Option<f64>) -> Value {
    v.map_or(Value::Null, num)
}

fn complex(z: C64) -> Value {
    json!({ "re": num(z.re), "im": num(z.im) })
}

fn complex_list(v: &[C64]) -> Value {
    Value::Array(v.iter().copied().map(complex).collect())
}

pub fn norms_csv(r: &SimResult) -> String {
    let mut out = String::from("t,norm_complex,norm_real,scaled_real\n");
    let scale = if r.initial_norm > 0.0 { r.initial_norm } else { 1.0 };
    for ((t, nc), nr) in r.norms.iter().zip(&r.norms_real.values) {
        out.push_str(&format!("{},{},{},{}\n", fmt_f64(t), fmt_f64(*nc), fmt_f64(*nr), fmt_f64(nr / scale)));
    }
    out
}

pub fn snapshots_csv(r: &SimResult, grid: &SpatialGrid) -> String {
    let mut out = String::from("t,x,re_h,im_h,re_c,im_c\n");
    for (t, z) in r.snapshots.iter() {
        for (i, &x) in grid.x().iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fmt_f64(t),
                fmt_f64(x),
                fmt_f64(z.zh[i].re),
                fmt_f64(z.zh[i].im),
                fmt_f64(z.zc[i].re),
                fmt_f64(z.zc[i].im)
            ));
        }
    }
    out
}

pub fn kappa_csv(gain: &ObserverGain) -> String {
    let mut out = String::from("x,re_h,im_h,re_c,im_c\n");
    let k = &gain.kappa;
    for (i, &x) in gain.basis.grid.x().iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(x),
            fmt_f64(k.zh[i].re),
            fmt_f64(k.zh[i].im),
            fmt_f64(k.zc[i].re),
            fmt_f64(k.zc[i].im)
        ));
    }
    out
}

fn params_json(p: &ExchangerParams) -> Value {
    json!({ "u1": p.u1, "u2": p.u2, "c1": p.c1, "c2": p.c2 })
}

pub fn spectrum_json(spectrum: &Spectrum, params: &ExchangerParams) -> Value {
    let eigenvalues: Vec<Value> = spectrum
        .modes
        .iter()
        .map(|m| {
            json!({
                "re": num(m.lambda.re),
                "im": num(m.lambda.im),
                "residual": num(m.residual),
                "source": m.source,
            })
        })
        .collect();
    json!({
        "params": params_json(params),
        "n": spectrum.grid.n(),
        "lambda_o": spectrum.shift,
        "eigenvalues": eigenvalues,
    })
}

pub fn design_json(d: &ObserverDesign, config: &ExperimentConfig) -> Value {
    let lambda_o = d.gain.basis.lambda_o;
    let after = d.closed_loop_eigenvalues();
    let poles: Vec<C64> = after.iter().map(|v| v - lambda_o).collect();
    let margins: Vec<Value> = d
        .observability
        .margins
        .iter()
        .map(|(l, s)| json!({ "eigenvalue": complex(*l), "sigma_min": num(*s) }))
        .collect();
    let modes: Vec<Value> = d
        .selection
        .modes
        .iter()
        .map(|m| {
            json!({
                "lambda": complex(m.lambda),
                "residual": num(m.residual),
                "source": m.source,
                "root_of_f": m.polished_lambda.map_or(Value::Null, complex),
            })
        })
        .collect();
    let ric = d.system.riccati.as_ref();
    json!({
        "lambda_o": lambda_o,
        "n": d.gain.basis.grid.n(),
        "q": d.q(),
        "unstable_modes": modes,
        "eigenvalues_before": complex_list(&d.selection.modes.iter().map(|m| m.lambda).collect::<Vec<_>>()),
        "eigenvalues_after": complex_list(&after),
        "observer_poles": complex_list(&poles),
        "hautus": { "tol": d.observability.tol, "passed": d.observability.passed, "margins": margins },
        "riccati_residual": num(ric.map_or(0.0, |r| r.residual)),
        "gain": complex_list(&d.gain.coefficients),
        "kappa_norm": num(d.gain.norm()),
        "gram_deviation": num(d.gain.basis.gram_deviation()),
        "kappa_projection_residual": num(d.gain.projection_residual()),
        "notices": d.notices,
        "config": config,
    })
}

pub fn diagnostics_json(d: &DiagnosticsReport) -> Value {
    json!({
        "q": d.q,
        "lambda_o": d.lambda_o,
        "snapshots_used": d.snapshots_used,
        "xi_rate": opt(d.xi_rate),
        "xi_rate_shifted": opt(d.xi_rate_shifted),
        "t_l2_total": num(d.t_l2_total),
        "t_l2_tail_fraction": num(d.t_l2_tail_fraction),
        "t_l2_total_shifted": num(d.t_l2_total_shifted),
        "t_l2_tail_fraction_shifted": num(d.t_l2_tail_fraction_shifted),
        "tail_start": num(d.tail_start),
    })
}

pub fn summary_json(
    r: &SimResult,
    design: Option<&ObserverDesign>,
    diagnostics: Option<&DiagnosticsReport>,
    config: &ExperimentConfig,
) -> Value {
    let fit = r.fit.as_ref().map_or(Value::Null, |f| {
        json!({
            "rate": num(f.rate),
            "intercept_m": num(f.intercept_m),
            "window": [num(f.window.0), num(f.window.1)],
            "samples": f.samples,
        })
    });
    let t_end = r.t_l2_cumulative.times.last().copied().unwrap_or(0.0);
    json!({
        "tag": r.tag,
        "lambda_o": opt(r.lambda_o),
        "q": r.q,
        "initial_norm": num(r.initial_norm),
        "final_norm": opt(r.norms.values.last().copied()),
        "fitted_rate": opt(r.fitted_rate),
        "fitted_m": opt(r.fitted_m),
        "fit": fit,
        "t_l2": { "t_end": num(t_end), "total": opt(r.t_l2_cumulative.values.last().copied()) },
        "eigenvalues_before": design.map_or(Value::Null, |d| complex_list(&d.selection.modes.iter().map(|m| m.lambda).collect::<Vec<_>>())),
        "eigenvalues_after": design.map_or(Value::Null, |d| complex_list(&d.closed_loop_eigenvalues())),
        "diagnostics": diagnostics.map_or(Value::Null, diagnostics_json),
        "warnings": r.warnings,
        "config": config,
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::run_error_experiment;

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
        assert_eq!(fmt_f64(-2.0), "-2.0000000000000000e0");
    }

    #[test]
    fn nonfinite_is_null() {
        assert_eq!(num(f64::NAN), Value::Null);
        assert_eq!(opt(None), Value::Null);
    }

    #[test]
    fn csv_shapes() {
        let mut c = ExperimentConfig::default();
        c.grid.n = 10;
        c.time.dt = 0.1;
        c.time.t_final = 0.5;
        c.output.snapshot_stride = 2;
        let r = run_error_experiment(&c, None).unwrap();
        let norms = norms_csv(&r);
        let lines: Vec<&str> = norms.lines().collect();
        assert_eq!(lines[0], "t,norm_complex,norm_real,scaled_real");
        assert_eq!(lines.len(), 7);
        assert!(lines[1].ends_with(",1.0000000000000000e0"));
        let snaps = snapshots_csv(&r, &c.grid().unwrap());
        assert_eq!(snaps.lines().count(), 1 + 3 * 10);
        assert!(!norms.contains('\r'));
        let s = summary_json(&r, None, None, &c);
        assert_eq!(s["tag"], "direct");
        assert_eq!(s["config"]["grid"]["n"], 10);
    }
}
