//! JSON run configuration. Every field has a default, so `{}` is the
//! reference experiment: unit parameters, 200 nodes, `dt = 2.5e-3`,
//! `t_final = 5`, rates 3 and 5, initial error `8 sin(πx)` / `6 sin(π(1-x))`.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ObserverError, Result};
use crate::field::Field;
use crate::model::{ExchangerParams, SpatialGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitProfile {
    /// `amplitude · sin(π x)`
    Sine { amplitude: f64 },
    /// `amplitude · sin(π (1 - x))`
    SineReflected { amplitude: f64 },
    Zero,
}

impl InitProfile {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            InitProfile::Sine { amplitude } => amplitude * (PI * x).sin(),
            InitProfile::SineReflected { amplitude } => amplitude * (PI * (1.0 - x)).sin(),
            InitProfile::Zero => 0.0,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        match *self {
            InitProfile::Sine { amplitude } => InitProfile::Sine { amplitude: amplitude * s },
            InitProfile::SineReflected { amplitude } => InitProfile::SineReflected { amplitude: amplitude * s },
            InitProfile::Zero => InitProfile::Zero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_final: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            dt: 2.5e-3,
            t_final: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub hot: InitProfile,
    pub cold: InitProfile,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            hot: InitProfile::Sine { amplitude: 8.0 },
            cold: InitProfile::SineReflected { amplitude: 6.0 },
        }
    }
}

/// Portion of the horizon used for the log-linear decay fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FitWindow {
    /// `[start_fraction · t_final, t_final]`
    Tail { start_fraction: f64 },
    /// Absolute times.
    Time { start: f64, end: f64 },
    /// Samples whose norm, scaled by the initial norm, lies in `[lo, hi]`.
    Level { lo: f64, hi: f64 },
}

impl Default for FitWindow {
    fn default() -> Self {
        FitWindow::Tail { start_fraction: 0.6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub snapshot_stride: usize,
    pub fit_window: FitWindow,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            snapshot_stride: 20,
            fit_window: FitWindow::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub params: ExchangerParams,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub rates: Vec<f64>,
    pub init: InitConfig,
    pub output: OutputConfig,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            params: ExchangerParams::unit(),
            grid: GridConfig::default(),
            time: TimeConfig::default(),
            rates: vec![3.0, 5.0],
            init: InitConfig::default(),
            output: OutputConfig::default(),
            seed: 20240917,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ObserverError::InvalidParameter {
            name: "config",
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ObserverError::InvalidParameter {
            name: "config",
            reason: format!("{}: {e}", path.display()),
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        SpatialGrid::new(self.grid.n)?;
        let TimeConfig { dt, t_final } = self.time;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("time.dt", format!("must be positive, got {dt}")));
        }
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(invalid("time.t_final", format!("must be positive, got {t_final}")));
        }
        if let Some(r) = self.rates.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return Err(invalid("rates", format!("every rate must be positive, got {r}")));
        }
        if self.output.snapshot_stride == 0 {
            return Err(invalid("output.snapshot_stride", "must be at least 1".into()));
        }
        match self.output.fit_window {
            FitWindow::Tail { start_fraction: f } if !(0.0..1.0).contains(&f) => {
                Err(invalid("output.fit_window", format!("start_fraction must lie in [0, 1), got {f}")))
            }
            FitWindow::Time { start, end } if !(start >= 0.0 && end > start) => {
                Err(invalid("output.fit_window", format!("empty time window [{start}, {end}]")))
            }
            FitWindow::Level { lo, hi } if !(lo > 0.0 && hi > lo) => {
                Err(invalid("output.fit_window", format!("empty level window [{lo}, {hi}]")))
            }
            _ => Ok(()),
        }
    }

    pub fn grid(&self) -> Result<SpatialGrid> {
        SpatialGrid::new(self.grid.n)
    }

    pub fn initial_error(&self, grid: &SpatialGrid) -> Field {
        let (h, c) = (self.init.hot, self.init.cold);
        let mut f = Field::from_real_fn(grid, |x| h.eval(x), |x| c.eval(x));
        // sin(π·1) and sin(π·0) are not exactly zero in floating point
        f.enforce_dirichlet();
        f
    }
}

fn invalid(name: &'static str, reason: String) -> ObserverError {
    ObserverError::InvalidParameter { name, reason }
}
