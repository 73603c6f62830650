//! JSON documents read and written by the CLI.
//!
//! Every document carries `"version": "datareq/1"` and a `"kind"`. Field order
//! follows the struct declarations, so output is stable across runs.

use datareq::estimator::{Estimate, EstimateBundle};
use datareq::{CurveFamily, FitConfig, FittedModel, Params, SimulationTrace};
use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

pub const VERSION: &str = "datareq/1";

fn check_version(version: &str, kind: &str, want: &str) -> anyhow::Result<()> {
    anyhow::ensure!(
        version == VERSION,
        "unsupported document version '{version}' (expected {VERSION})"
    );
    anyhow::ensure!(kind == want, "expected a '{want}' document, found '{kind}'");
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelRecord {
    pub family: CurveFamily,
    pub params: Params,
    pub residual_sse: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl From<&FittedModel> for ModelRecord {
    fn from(m: &FittedModel) -> Self {
        Self {
            family: m.family,
            params: m.params,
            residual_sse: m.residual_sse,
            converged: m.converged,
            iterations: m.iterations,
        }
    }
}

impl From<&ModelRecord> for FittedModel {
    fn from(r: &ModelRecord) -> Self {
        FittedModel {
            family: r.family,
            params: r.params,
            residual_sse: r.residual_sse,
            converged: r.converged,
            iterations: r.iterations,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailureRecord {
    pub family: CurveFamily,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelsDoc {
    pub version: String,
    pub kind: String,
    pub points: usize,
    pub max_n: u64,
    pub fit_config: FitConfig,
    pub models: Vec<ModelRecord>,
    pub failures: Vec<FailureRecord>,
}

impl ModelsDoc {
    pub const KIND: &'static str = "models";

    pub fn validate(&self) -> anyhow::Result<()> {
        check_version(&self.version, &self.kind, Self::KIND)
    }
}

/// A count, or a fixed marker string when there is no finite value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Count {
    Finite(u64),
    Marker(&'static str),
}

impl Serialize for Count {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Count::Finite(n) => s.serialize_u64(*n),
            Count::Marker(m) => s.serialize_str(m),
        }
    }
}

impl<'de> Deserialize<'de> for Count {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::Number(n) => n
                .as_u64()
                .map(Count::Finite)
                .ok_or_else(|| de::Error::custom("expected a non-negative integer")),
            serde_json::Value::String(s) if s == UNREACHABLE => Ok(Count::Marker(UNREACHABLE)),
            serde_json::Value::String(s) if s == UNBOUNDED => Ok(Count::Marker(UNBOUNDED)),
            other => Err(de::Error::custom(format!("unexpected value {other}"))),
        }
    }
}

pub const UNREACHABLE: &str = "unreachable";
pub const UNBOUNDED: &str = "unbounded";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub family: CurveFamily,
    pub tau: f64,
    pub estimate: Count,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OmittedRecord {
    pub family: CurveFamily,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateDoc {
    pub version: String,
    pub kind: String,
    pub n0: u64,
    pub target: f64,
    pub n_cap: u64,
    pub estimates: Vec<EstimateRecord>,
    pub lower: u64,
    pub upper: Count,
    pub omitted: Vec<OmittedRecord>,
}

impl EstimateDoc {
    pub const KIND: &'static str = "estimate";

    pub fn new(
        n0: u64,
        target: f64,
        n_cap: u64,
        taus: &dyn Fn(CurveFamily) -> f64,
        bundle: &EstimateBundle,
        mut omitted: Vec<OmittedRecord>,
    ) -> Self {
        let estimates = bundle
            .per_family
            .iter()
            .map(|(&family, e)| EstimateRecord {
                family,
                tau: taus(family),
                estimate: match e {
                    Estimate::Finite(n) => Count::Finite(*n),
                    Estimate::Unreachable => Count::Marker(UNREACHABLE),
                },
            })
            .collect();
        omitted.extend(
            bundle
                .diagnostics
                .iter()
                .map(|(&family, reason)| OmittedRecord {
                    family,
                    reason: reason.clone(),
                }),
        );
        omitted.sort_by_key(|o| o.family);
        Self {
            version: VERSION.into(),
            kind: Self::KIND.into(),
            n0,
            target,
            n_cap,
            estimates,
            lower: bundle.lower,
            upper: bundle.upper.map_or(Count::Marker(UNBOUNDED), Count::Finite),
            omitted,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveSummary {
    pub anchors: usize,
    pub full_size: u64,
    pub final_score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub family: CurveFamily,
    pub target: f64,
    pub trace: Option<SimulationTrace>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TracesDoc {
    pub version: String,
    pub kind: String,
    pub curve: CurveSummary,
    pub runs: Vec<RunRecord>,
}

impl TracesDoc {
    pub const KIND: &'static str = "traces";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauEntry {
    pub family: CurveFamily,
    pub rounds: u32,
    pub tau: f64,
    pub min_ratio: f64,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauProfile {
    pub version: String,
    pub kind: String,
    pub provenance: String,
    pub entries: Vec<TauEntry>,
}

impl TauProfile {
    pub const KIND: &'static str = "tau_profile";

    pub fn empty(provenance: &str) -> Self {
        Self {
            version: VERSION.into(),
            kind: Self::KIND.into(),
            provenance: provenance.into(),
            entries: Vec::new(),
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        check_version(&self.version, &self.kind, Self::KIND)?;
        for e in &self.entries {
            anyhow::ensure!(
                e.tau.is_finite() && e.tau >= 0.0,
                "profile entry ({}, T = {}) has invalid tau {}",
                e.family,
                e.rounds,
                e.tau
            );
        }
        Ok(())
    }

    pub fn lookup(&self, family: CurveFamily, rounds: u32) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.family == family && e.rounds == rounds)
            .map(|e| e.tau)
    }

    /// Insert or replace the `(family, rounds)` entry, keeping entries sorted.
    pub fn upsert(&mut self, entry: TauEntry) {
        self.entries
            .retain(|e| !(e.family == entry.family && e.rounds == entry.rounds));
        self.entries.push(entry);
        self.entries.sort_by_key(|e| (e.family, e.rounds));
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub version: String,
    pub kind: String,
    pub family: CurveFamily,
    pub rounds: u32,
    pub tau: f64,
    pub min_ratio: f64,
    pub targets: usize,
}

impl CalibrationReport {
    pub const KIND: &'static str = "calibration";
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricRecord {
    pub family: CurveFamily,
    pub params: Option<Params>,
    pub rmse: Option<f64>,
    pub mean_log_ratio: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsDoc {
    pub version: String,
    pub kind: String,
    pub fit_points: usize,
    pub holdout_points: usize,
    pub metrics: Vec<MetricRecord>,
}

impl MetricsDoc {
    pub const KIND: &'static str = "metrics";
}
