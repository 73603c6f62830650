//! Regression-set schedules, single-shot data-requirement estimates and the
//! best/worst-case bounds taken over the family ensemble.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::curves::{inverse_solve, CurveFamily};
use crate::error::{Error, Result};
use crate::fit::{fit_all, FitConfig, FittedModel, RegressionSet};
use crate::groundtruth::GroundTruthCurve;

/// Search cap used when no ground-truth size is known.
pub const UNBOUNDED_CAP: u64 = 1_000_000_000_000;
/// Multiple of the ground-truth size used as the default search cap.
pub const CAP_MULTIPLE: u64 = 1000;

pub fn default_n_cap(curve: Option<&GroundTruthCurve>) -> u64 {
    curve.map_or(UNBOUNDED_CAP, |c| {
        c.full_size().saturating_mul(CAP_MULTIPLE)
    })
}

/// Linear subset schedule over an initial data set of `n0` points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub n0: u64,
    pub r: u64,
}

impl Schedule {
    pub fn new(n0: u64, r: u64) -> Result<Self> {
        if n0 < 2 || r < 2 {
            return Err(Error::InvalidSchedule(format!(
                "need n0 >= 2 and r >= 2, got n0 = {n0}, r = {r}"
            )));
        }
        if r > n0 {
            return Err(Error::InvalidSchedule(format!(
                "cannot split {n0} points into {r} distinct subsets"
            )));
        }
        Ok(Self { n0, r })
    }

    /// Subset sizes `round(n0·(i+1)/r)`, rounded half-up and kept distinct.
    pub fn sizes(&self) -> Vec<u64> {
        let (n0, r) = (self.n0, self.r);
        let mut out: Vec<u64> = Vec::with_capacity(r as usize);
        for i in 0..r {
            // half-up: floor((2·n0·(i+1) + r) / 2r)
            let mut size = (2 * n0 * (i + 1) + r) / (2 * r);
            if let Some(&prev) = out.last() {
                if size <= prev {
                    size = prev + 1;
                }
            }
            out.push(size.max(1));
        }
        *out.last_mut().expect("r >= 2") = n0;
        out
    }

    /// Regression set of the schedule's sizes scored on `curve`.
    pub fn regression_set(&self, curve: &GroundTruthCurve) -> Result<RegressionSet> {
        RegressionSet::new(
            self.sizes()
                .into_iter()
                .map(|n| (n, curve.value(n)))
                .collect(),
        )
    }
}

pub fn schedule_sizes(schedule: &Schedule) -> Vec<u64> {
    schedule.sizes()
}

/// Additional points `n̂` needed beyond `n0` for the model to reach `target + tau`.
pub fn estimate_requirement(
    model: &FittedModel,
    n0: u64,
    target: f64,
    tau: f64,
    n_cap: u64,
) -> Result<u64> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "tau {tau} must be finite and >= 0"
        )));
    }
    if n_cap == 0 {
        return Err(Error::InvalidInput("n_cap must be positive".into()));
    }
    let total = inverse_solve(
        model.family,
        model.params,
        target + tau,
        n0,
        n0.saturating_add(n_cap),
    )?;
    Ok(total.saturating_sub(n0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimate {
    Finite(u64),
    Unreachable,
}

impl Estimate {
    pub fn finite(self) -> Option<u64> {
        match self {
            Estimate::Finite(n) => Some(n),
            Estimate::Unreachable => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateBundle {
    pub per_family: BTreeMap<CurveFamily, Estimate>,
    /// Best case: the smallest finite estimate.
    pub lower: u64,
    /// Worst case: the largest estimate, `None` when any family is unreachable.
    pub upper: Option<u64>,
    /// Families left out of the ensemble, with the reason.
    pub diagnostics: BTreeMap<CurveFamily, String>,
}

impl EstimateBundle {
    pub fn contains(&self, n: u64) -> bool {
        self.lower <= n && self.upper.is_none_or(|u| n <= u)
    }
}

pub fn bounds(
    models: &BTreeMap<CurveFamily, FittedModel>,
    n0: u64,
    target: f64,
    taus: &BTreeMap<CurveFamily, f64>,
    n_cap: u64,
) -> Result<EstimateBundle> {
    let mut per_family = BTreeMap::new();
    let mut diagnostics = BTreeMap::new();
    for (&family, model) in models {
        let tau = taus.get(&family).copied().unwrap_or(0.0);
        match estimate_requirement(model, n0, target, tau, n_cap) {
            Ok(n) => {
                per_family.insert(family, Estimate::Finite(n));
            }
            Err(Error::Unreachable { .. }) => {
                per_family.insert(family, Estimate::Unreachable);
            }
            Err(e) => {
                diagnostics.insert(family, e.to_string());
            }
        }
    }
    let finite: Vec<u64> = per_family.values().filter_map(|e| e.finite()).collect();
    let (Some(&lower), Some(&max)) = (finite.iter().min(), finite.iter().max()) else {
        return Err(Error::NoEstimates);
    };
    let upper = if per_family.values().any(|e| *e == Estimate::Unreachable) {
        None
    } else {
        Some(max)
    };
    Ok(EstimateBundle {
        per_family,
        lower,
        upper,
        diagnostics,
    })
}

/// Settings shared by every target in a coverage run.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub r: u64,
    pub fit: FitConfig,
    pub taus: BTreeMap<CurveFamily, f64>,
    /// Search cap; `None` uses [`default_n_cap`] for the curve.
    pub n_cap: Option<u64>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            r: 5,
            fit: FitConfig::default(),
            taus: BTreeMap::new(),
            n_cap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetCoverage {
    pub target: f64,
    /// True additional data `n*` beyond `n0`.
    pub needed: u64,
    pub bundle: EstimateBundle,
    pub hit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coverage {
    pub hit_fraction: f64,
    pub mean_lower_ratio: f64,
    /// Mean over targets whose upper bound is finite; `None` if there are none.
    pub mean_upper_ratio: Option<f64>,
    pub unbounded_uppers: usize,
    pub per_target: Vec<TargetCoverage>,
}

/// How often the ensemble's best/worst-case estimates bracket the true `n*`.
pub fn bound_coverage(
    curve: &GroundTruthCurve,
    n0: u64,
    targets: &[f64],
    config: &EnsembleConfig,
) -> Result<Coverage> {
    if targets.is_empty() {
        return Err(Error::EmptyInput);
    }
    if n0 > curve.full_size() {
        return Err(Error::InvalidInput(format!(
            "n0 = {n0} exceeds the curve's full size {}",
            curve.full_size()
        )));
    }
    let set = Schedule::new(n0, config.r)?.regression_set(curve)?;
    let models = fit_all(&set, &config.fit)?.models;
    let n_cap = config.n_cap.unwrap_or_else(|| default_n_cap(Some(curve)));

    let mut per_target = Vec::with_capacity(targets.len());
    for &target in targets {
        let needed = curve
            .min_required(target)
            .map_err(|_| Error::InvalidTarget(target))?
            .saturating_sub(n0);
        let bundle = bounds(&models, n0, target, &config.taus, n_cap)?;
        let hit = bundle.contains(needed);
        per_target.push(TargetCoverage {
            target,
            needed,
            bundle,
            hit,
        });
    }

    let count = per_target.len() as f64;
    let hits = per_target.iter().filter(|t| t.hit).count() as f64;
    let ratio = |extra: u64, needed: u64| (n0 + extra) as f64 / (n0 + needed) as f64;
    let mean_lower_ratio = per_target
        .iter()
        .map(|t| ratio(t.bundle.lower, t.needed))
        .sum::<f64>()
        / count;
    let uppers: Vec<f64> = per_target
        .iter()
        .filter_map(|t| t.bundle.upper.map(|u| ratio(u, t.needed)))
        .collect();
    let unbounded_uppers = per_target.len() - uppers.len();
    let mean_upper_ratio =
        (!uppers.is_empty()).then(|| uppers.iter().sum::<f64>() / uppers.len() as f64);

    Ok(Coverage {
        hit_fraction: hits / count,
        mean_lower_ratio,
        mean_upper_ratio,
        unbounded_uppers,
        per_target,
    })
}
