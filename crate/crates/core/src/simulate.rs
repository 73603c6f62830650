//! Replay of the iterative data-collection loop against a ground-truth curve.
//!
//! Each round fits the chosen family to everything observed so far, asks it
//! how much data reaches `target + tau`, "collects" that much by reading the
//! ground truth, and stops once the uncorrected target is met or the round
//! budget runs out.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curves::CurveFamily;
use crate::error::{Error, Result};
use crate::estimator::{default_n_cap, estimate_requirement, Schedule};
use crate::fit::{fit, FitConfig, FittedModel};
use crate::groundtruth::GroundTruthCurve;

/// Number of targets in the default sweep grid.
pub const DEFAULT_GRID: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n0: u64,
    pub r: u64,
    /// Maximum number of collection rounds.
    pub rounds: u32,
    pub target: f64,
    pub tau: f64,
    pub family: CurveFamily,
    pub fit: FitConfig,
    /// Search cap on additional data; `None` means 1000 × the curve's full size.
    pub n_cap: Option<u64>,
    pub clamp_unreachable: bool,
}

impl SimConfig {
    pub fn new(family: CurveFamily, n0: u64, r: u64, rounds: u32, target: f64) -> Self {
        Self {
            n0,
            r,
            rounds,
            target,
            tau: 0.0,
            family,
            fit: FitConfig::default(),
            n_cap: None,
            clamp_unreachable: true,
        }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_target(mut self, target: f64) -> Self {
        self.target = target;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_index: u32,
    /// `None` when the fit failed this round.
    pub fitted: Option<FittedModel>,
    /// The model's estimate `n̂` of additional data, when it produced one.
    pub estimate: Option<u64>,
    pub requested_total: u64,
    pub achieved_score: f64,
    pub met_target: bool,
    pub clamped: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub config: SimConfig,
    pub rounds: Vec<RoundRecord>,
    pub final_total: u64,
    /// `n0 + n*`: the least total data whose true score meets the target.
    pub true_minimum: u64,
    pub ratio: f64,
    pub success: bool,
}

pub fn run(curve: &GroundTruthCurve, config: &SimConfig) -> Result<SimulationTrace> {
    if config.rounds == 0 {
        return Err(Error::InvalidInput("at least one round is required".into()));
    }
    if config.n0 > curve.full_size() {
        return Err(Error::InvalidInput(format!(
            "n0 = {} exceeds the curve's full size {}",
            config.n0,
            curve.full_size()
        )));
    }
    if !(config.tau.is_finite() && config.tau >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "tau {} must be >= 0",
            config.tau
        )));
    }
    config.fit.validate()?;
    let true_minimum = curve
        .min_required(config.target)
        .map_err(|_| Error::InvalidTarget(config.target))?
        .max(config.n0);
    let n0 = config.n0;
    let n_cap = config.n_cap.unwrap_or_else(|| default_n_cap(Some(curve)));
    let clamp_total = n0 + n_cap.min(default_n_cap(Some(curve)));

    let mut set = Schedule::new(n0, config.r)?.regression_set(curve)?;
    let mut rounds: Vec<RoundRecord> = Vec::new();
    let mut previous_total = n0;

    for round_index in 1..=config.rounds {
        let mut record = RoundRecord {
            round_index,
            fitted: None,
            estimate: None,
            requested_total: previous_total + 1,
            achieved_score: 0.0,
            met_target: false,
            clamped: false,
            error: None,
        };
        let mut collect = true;
        match fit(config.family, &set, &config.fit) {
            Err(e) => record.error = Some(e.to_string()),
            Ok(model) => {
                record.fitted = Some(model);
                match estimate_requirement(&model, n0, config.target, config.tau, n_cap) {
                    Ok(extra) => {
                        record.estimate = Some(extra);
                        record.requested_total = (n0 + extra).max(previous_total + 1);
                    }
                    Err(e @ Error::Unreachable { .. }) => {
                        record.error = Some(e.to_string());
                        if config.clamp_unreachable {
                            record.clamped = true;
                            record.requested_total = clamp_total.max(previous_total + 1);
                        } else {
                            collect = false;
                            record.requested_total = previous_total;
                        }
                    }
                    // Fail-safe: keep moving by the smallest possible step.
                    Err(e) => record.error = Some(e.to_string()),
                }
            }
        }

        record.achieved_score = curve.value(record.requested_total);
        record.met_target = record.achieved_score >= config.target;
        if collect {
            set.push(record.requested_total, record.achieved_score)?;
            previous_total = record.requested_total;
        }
        let done = record.met_target;
        rounds.push(record);
        if done {
            break;
        }
    }

    let last = rounds.last().expect("at least one round ran");
    let final_total = last.requested_total;
    let success = last.met_target;
    let mut config = config.clone();
    config.n_cap = Some(n_cap);
    Ok(SimulationTrace {
        config,
        final_total,
        true_minimum,
        ratio: final_total as f64 / true_minimum as f64,
        success,
        rounds,
    })
}

/// Independent runs of `base` for each target, in target order.
pub fn sweep(
    curve: &GroundTruthCurve,
    base: &SimConfig,
    targets: &[f64],
) -> Vec<Result<SimulationTrace>> {
    targets
        .par_iter()
        .map(|&t| run(curve, &base.clone().with_target(t)))
        .collect()
}

/// `count` evenly spaced targets strictly between `value(n0 + 1)` and the
/// curve's final score.
pub fn default_targets(curve: &GroundTruthCurve, n0: u64, count: usize) -> Vec<f64> {
    let lo = curve.value(n0 + 1);
    let hi = curve.final_score();
    (1..=count)
        .map(|i| lo + (hi - lo) * i as f64 / (count + 1) as f64)
        .collect()
}

pub fn min_ratio(traces: &[SimulationTrace]) -> Result<f64> {
    traces
        .iter()
        .map(|t| t.ratio)
        .reduce(f64::min)
        .ok_or(Error::EmptyInput)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub tau: f64,
    /// Minimum ratio of the verifying sweep at `tau`.
    pub min_ratio: f64,
    pub traces: Vec<SimulationTrace>,
}

/// Smallest `tau` on the grid `{0, step, 2·step, …} ≤ tau_max` for which the
/// policy meets every target.
///
/// A grid is scanned rather than bisected: with refitting across rounds,
/// success need not be monotone in `tau`.
pub fn calibrate_tau(
    reference: &GroundTruthCurve,
    base: &SimConfig,
    targets: &[f64],
    tau_max: f64,
    tau_step: f64,
) -> Result<Calibration> {
    if targets.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(tau_step.is_finite() && tau_step > 0.0) {
        return Err(Error::InvalidInput(format!(
            "tau step {tau_step} must be positive"
        )));
    }
    if !(tau_max.is_finite() && tau_max >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "tau max {tau_max} must be >= 0"
        )));
    }
    let steps = (tau_max / tau_step + 1e-9).floor() as u64;
    for k in 0..=steps {
        let tau = k as f64 * tau_step;
        let traces = sweep(reference, &base.clone().with_tau(tau), targets)
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        if traces.iter().all(|t| t.success) {
            return Ok(Calibration {
                tau,
                min_ratio: min_ratio(&traces)?,
                traces,
            });
        }
    }
    Err(Error::CalibrationFailed { tau_max })
}
