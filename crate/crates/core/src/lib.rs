//! Spectral output-injection observers for counter-flow heat-exchanger transport PDEs.

pub mod config;
pub mod design;
pub mod discretize;
pub mod error;
pub mod experiment;
pub mod field;
pub mod linalg;
pub mod model;
pub mod report;
pub mod riccati;
pub mod spectral;
pub mod validate;

pub use config::ExperimentConfig;
pub use design::{design_observer, ObserverDesign, ObserverGain};
pub use error::{ObserverError, Result};
pub use experiment::{run_error_experiment, SimResult};
pub use field::{Field, C64};
pub use model::{BoundaryInput, ExchangerParams, SpatialGrid, SystemMatrices};
