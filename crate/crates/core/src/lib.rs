//! Learning-curve extrapolation for data-requirement estimation.
//!
//! Fit one of four concave, monotone curve families to a handful of
//! `(training-set size, score)` observations, invert the fit to estimate how
//! much more data a target score needs, and replay the iterative
//! estimate → collect → re-fit loop against a piecewise-linear ground truth.

pub mod curves;
pub mod error;
pub mod estimator;
pub mod fit;
pub mod groundtruth;
pub mod io;
pub mod metrics;
pub mod simulate;

pub use curves::{CurveFamily, Params, Supremum};
pub use error::{Error, Result};
pub use estimator::{EnsembleConfig, Estimate, EstimateBundle, Schedule};
pub use fit::{FitConfig, FittedModel, RegressionSet};
pub use groundtruth::{CurveMode, GroundTruthCurve};
pub use simulate::{RoundRecord, SimConfig, SimulationTrace};
