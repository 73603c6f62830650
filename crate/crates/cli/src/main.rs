//! `datareq`: fit learning curves, estimate data requirements, and simulate
//! multi-round data collection from CSV observation tables.
//!
//! Exit codes: 0 success, 2 input error, 3 estimation impossible,
//! 4 calibration failure.

mod doc;
mod svg;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use datareq::estimator::{bounds, default_n_cap, UNBOUNDED_CAP};
use datareq::fit::fit_all;
use datareq::metrics::{mean_log_ratio, rmse, HoldoutSet};
use datareq::simulate::{calibrate_tau, default_targets, sweep, DEFAULT_GRID};
use datareq::{
    io, CurveFamily, CurveMode, Error, FitConfig, FittedModel, GroundTruthCurve, RegressionSet,
    SimConfig,
};

use doc::{
    CalibrationReport, CurveSummary, EstimateDoc, FailureRecord, MetricRecord, MetricsDoc,
    ModelRecord, ModelsDoc, OmittedRecord, RunRecord, TauEntry, TauProfile, TracesDoc, VERSION,
};

#[derive(Debug)]
enum Failure {
    Input(anyhow::Error),
    Estimation(anyhow::Error),
    Calibration(anyhow::Error),
    Internal(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Estimation(_) => 3,
            Failure::Calibration(_) => 4,
            Failure::Internal(_) => 1,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Input(e)
            | Failure::Estimation(e)
            | Failure::Calibration(e)
            | Failure::Internal(e) => e,
        }
    }
}

type CmdResult = Result<(), Failure>;

fn input<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Input(e.into())
}

#[derive(Parser)]
#[command(
    name = "datareq",
    version,
    about = "Estimate how much training data a target score needs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit all four curve families to an `n,score` table.
    Fit(FitArgs),
    /// Estimate additional data from fitted models, with best/worst-case bounds.
    Estimate(EstimateArgs),
    /// Replay the iterative collection loop against a ground-truth curve.
    Simulate(SimulateArgs),
    /// Find the smallest correction factor that meets every target on a reference curve.
    Calibrate(CalibrateArgs),
    /// Extrapolation RMSE and mean log ratio of each family on a holdout table.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct OutArg {
    /// Write the JSON document here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Observation table with header `n,score`.
    input: PathBuf,
    /// JSON file overriding fit settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct EstimateArgs {
    /// Models document produced by `datareq fit`.
    models: PathBuf,
    #[arg(long)]
    n0: u64,
    #[arg(long)]
    target: f64,
    /// Correction added to the target for every family (fallback when a profile lacks an entry).
    #[arg(long)]
    tau: Option<f64>,
    /// Per-family correction factors produced by `datareq calibrate`.
    #[arg(long)]
    tau_profile: Option<PathBuf>,
    /// Round budget used to select profile entries.
    #[arg(long = "rounds", visible_alias = "T", default_value_t = 1)]
    rounds: u32,
    /// Largest additional amount of data to search.
    #[arg(long, default_value_t = UNBOUNDED_CAP)]
    cap: u64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct CurveArgs {
    /// Ground-truth curve table with header `n,score`.
    curve: PathBuf,
    /// Initial data size, as a count or a percentage of the curve's full size (e.g. `10%`).
    #[arg(long)]
    n0: String,
    /// Number of regression subsets drawn from the initial data.
    #[arg(long, default_value_t = 5)]
    r: u64,
    /// Maximum number of collection rounds.
    #[arg(long = "rounds", visible_alias = "T", default_value_t = 1)]
    rounds: u32,
    /// Targets as `lo:hi:k` (k evenly spaced, inclusive) or a comma list.
    #[arg(long)]
    targets: Option<String>,
    /// Accept curves whose scores decrease somewhere.
    #[arg(long)]
    non_monotone: bool,
    /// Largest additional amount of data to search (default 1000 × full size).
    #[arg(long)]
    cap: Option<u64>,
    /// JSON file overriding fit settings.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    curve: CurveArgs,
    /// Families to simulate: comma list or `all`.
    #[arg(long, default_value = "all")]
    family: String,
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    /// Request nothing (instead of the search cap) when a fit cannot reach the target.
    #[arg(long)]
    no_clamp: bool,
    /// Also write an SVG chart of ratio against target.
    #[arg(long)]
    plot: Option<PathBuf>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    curve: CurveArgs,
    #[arg(long)]
    family: CurveFamily,
    #[arg(long, default_value_t = 20.0)]
    tau_max: f64,
    #[arg(long, default_value_t = 0.25)]
    tau_step: f64,
    /// Profile to create or update.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Table the families are fit to.
    fit: PathBuf,
    /// Holdout table; every size must exceed the fit table's largest size.
    holdout: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    out: OutArg,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(input)
}

fn read_table(path: &Path) -> Result<Vec<(u64, f64)>, Failure> {
    let text = read_text(path)?;
    io::parse_points(&text)
        .with_context(|| format!("{}", path.display()))
        .map_err(input)
}

fn read_fit_config(path: Option<&Path>) -> Result<FitConfig, Failure> {
    let Some(path) = path else {
        return Ok(FitConfig::default());
    };
    let cfg: FitConfig = serde_json::from_str(&read_text(path)?)
        .with_context(|| format!("parsing fit config {}", path.display()))
        .map_err(input)?;
    cfg.validate().map_err(input)?;
    Ok(cfg)
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Failure::Internal(e.into()))?;
    s.push('\n');
    Ok(s)
}

/// Write via a temporary file in the target directory, then rename into place.
fn write_atomic(path: &Path, contents: &str) -> Result<(), Failure> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    let write = || -> anyhow::Result<()> {
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(contents.as_bytes())?;
        tmp.as_file().sync_all()?;
        tmp.persist(path)?;
        Ok(())
    };
    write()
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::Internal)
}

fn emit(out: &OutArg, contents: &str) -> CmdResult {
    match &out.out {
        Some(path) => write_atomic(path, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn cmd_fit(args: FitArgs) -> CmdResult {
    let config = read_fit_config(args.config.as_deref())?;
    let set = RegressionSet::new(read_table(&args.input)?).map_err(input)?;
    let all = match fit_all(&set, &config) {
        Ok(all) => all,
        Err(Error::AllFailed) => {
            return Err(Failure::Estimation(anyhow!(
                "every curve family failed to fit"
            )))
        }
        Err(e) => return Err(input(e)),
    };
    let doc = ModelsDoc {
        version: VERSION.into(),
        kind: ModelsDoc::KIND.into(),
        points: set.len(),
        max_n: set.max_n(),
        fit_config: config,
        models: all.models.values().map(ModelRecord::from).collect(),
        failures: all
            .failures
            .iter()
            .map(|(&family, e)| FailureRecord {
                family,
                error: e.to_string(),
            })
            .collect(),
    };
    emit(&args.out, &to_json(&doc)?)
}

fn read_profile(path: &Path) -> Result<TauProfile, Failure> {
    let profile: TauProfile = serde_json::from_str(&read_text(path)?)
        .with_context(|| format!("parsing tau profile {}", path.display()))
        .map_err(input)?;
    profile.validate().map_err(input)?;
    Ok(profile)
}

fn cmd_estimate(args: EstimateArgs) -> CmdResult {
    let doc: ModelsDoc = serde_json::from_str(&read_text(&args.models)?)
        .with_context(|| format!("parsing models {}", args.models.display()))
        .map_err(input)?;
    doc.validate().map_err(input)?;
    if let Some(tau) = args.tau {
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(input(anyhow!("--tau must be finite and >= 0")));
        }
    }
    if !args.target.is_finite() {
        return Err(input(anyhow!("--target must be finite")));
    }
    let profile = args.tau_profile.as_deref().map(read_profile).transpose()?;

    let models: BTreeMap<CurveFamily, FittedModel> = doc
        .models
        .iter()
        .map(|r| (r.family, FittedModel::from(r)))
        .collect();
    let mut taus = BTreeMap::new();
    for &family in models.keys() {
        let tau = match (&profile, args.tau) {
            (Some(p), fallback) => p.lookup(family, args.rounds).or(fallback).ok_or_else(|| {
                input(anyhow!(
                    "tau profile has no entry for ({family}, T = {}) and no --tau fallback was given",
                    args.rounds
                ))
            })?,
            (None, tau) => tau.unwrap_or(0.0),
        };
        taus.insert(family, tau);
    }

    let bundle = bounds(&models, args.n0, args.target, &taus, args.cap).map_err(|e| match e {
        Error::NoEstimates => Failure::Estimation(anyhow!("no family yields a finite estimate")),
        other => input(other),
    })?;
    let omitted = doc
        .failures
        .iter()
        .map(|f| OmittedRecord {
            family: f.family,
            reason: format!("fit failed: {}", f.error),
        })
        .collect();
    let out = EstimateDoc::new(
        args.n0,
        args.target,
        args.cap,
        &|f| taus.get(&f).copied().unwrap_or(0.0),
        &bundle,
        omitted,
    );
    emit(&args.out, &to_json(&out)?)
}

/// `lo:hi:k` gives k evenly spaced values from lo to hi inclusive; otherwise a comma list.
fn parse_targets(spec: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let targets = match parts.as_slice() {
        [lo, hi, k] => {
            let lo: f64 = lo.trim().parse().context("target grid lower end")?;
            let hi: f64 = hi.trim().parse().context("target grid upper end")?;
            let k: usize = k.trim().parse().context("target grid count")?;
            anyhow::ensure!(k >= 1, "target grid needs at least one value");
            if k == 1 {
                vec![lo]
            } else {
                (0..k)
                    .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
                    .collect()
            }
        }
        [list] => list
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .with_context(|| format!("target '{t}'"))
            })
            .collect::<anyhow::Result<_>>()?,
        _ => anyhow::bail!("targets must be 'lo:hi:k' or a comma list"),
    };
    anyhow::ensure!(
        targets.iter().all(|t| t.is_finite()),
        "targets must be finite"
    );
    Ok(targets)
}

/// A count, or a percentage of `full_size` rounded half-up.
fn parse_size(spec: &str, full_size: u64) -> anyhow::Result<u64> {
    let spec = spec.trim();
    if let Some(pct) = spec.strip_suffix('%') {
        let pct: f64 = pct
            .trim()
            .parse()
            .with_context(|| format!("percentage '{spec}'"))?;
        anyhow::ensure!(pct > 0.0 && pct <= 100.0, "percentage must be in (0, 100]");
        Ok((pct / 100.0 * full_size as f64 + 0.5).floor() as u64)
    } else {
        spec.parse().with_context(|| format!("size '{spec}'"))
    }
}

fn parse_families(spec: &str) -> anyhow::Result<Vec<CurveFamily>> {
    if spec.trim() == "all" {
        return Ok(CurveFamily::ALL.to_vec());
    }
    let mut families = Vec::new();
    for part in spec.split(',') {
        let f: CurveFamily = part.parse()?;
        if !families.contains(&f) {
            families.push(f);
        }
    }
    Ok(families)
}

struct Prepared {
    curve: GroundTruthCurve,
    base: SimConfig,
    targets: Vec<f64>,
}

fn prepare(args: &CurveArgs, family: CurveFamily) -> Result<Prepared, Failure> {
    let mode = if args.non_monotone {
        CurveMode::NonMonotone
    } else {
        CurveMode::Monotone
    };
    let curve = GroundTruthCurve::new(read_table(&args.curve)?, mode)
        .with_context(|| format!("{}", args.curve.display()))
        .map_err(input)?;
    let n0 = parse_size(&args.n0, curve.full_size()).map_err(input)?;
    if n0 < 2 || n0 > curve.full_size() {
        return Err(input(anyhow!(
            "n0 = {n0} must lie in [2, {}]",
            curve.full_size()
        )));
    }
    let targets = match &args.targets {
        Some(spec) => parse_targets(spec).map_err(input)?,
        None => default_targets(&curve, n0, DEFAULT_GRID),
    };
    let mut base = SimConfig::new(family, n0, args.r, args.rounds, 0.0);
    base.fit = read_fit_config(args.config.as_deref())?;
    base.n_cap = Some(args.cap.unwrap_or_else(|| default_n_cap(Some(&curve))));
    Ok(Prepared {
        curve,
        base,
        targets,
    })
}

fn cmd_simulate(args: SimulateArgs) -> CmdResult {
    let families = parse_families(&args.family).map_err(input)?;
    let prep = prepare(&args.curve, families[0])?;
    if !(args.tau.is_finite() && args.tau >= 0.0) {
        return Err(input(anyhow!("--tau must be finite and >= 0")));
    }
    let mut runs = Vec::new();
    let mut chart = Vec::new();
    for &family in &families {
        let mut base = prep.base.clone().with_tau(args.tau);
        base.family = family;
        base.clamp_unreachable = !args.no_clamp;
        let results = sweep(&prep.curve, &base, &prep.targets);
        let mut points = Vec::new();
        for (&target, result) in prep.targets.iter().zip(results) {
            match result {
                Ok(trace) => {
                    points.push((target, trace.ratio));
                    runs.push(RunRecord {
                        family,
                        target,
                        trace: Some(trace),
                        error: None,
                    });
                }
                Err(e) => runs.push(RunRecord {
                    family,
                    target,
                    trace: None,
                    error: Some(e.to_string()),
                }),
            }
        }
        chart.push(svg::Series {
            label: family.to_string(),
            points,
        });
    }
    if !runs.iter().any(|r| r.trace.is_some()) {
        let first = runs
            .iter()
            .find_map(|r| r.error.clone())
            .unwrap_or_default();
        return Err(input(anyhow!("no simulation could run: {first}")));
    }
    let doc = TracesDoc {
        version: VERSION.into(),
        kind: TracesDoc::KIND.into(),
        curve: CurveSummary {
            anchors: prep.curve.anchors().len(),
            full_size: prep.curve.full_size(),
            final_score: prep.curve.final_score(),
        },
        runs,
    };
    if let Some(path) = &args.plot {
        let title = format!(
            "n0 = {}, T = {}, tau = {}",
            prep.base.n0, prep.base.rounds, args.tau
        );
        write_atomic(path, &svg::ratio_chart(&title, &chart))?;
    }
    emit(&args.out, &to_json(&doc)?)
}

fn cmd_calibrate(args: CalibrateArgs) -> CmdResult {
    let prep = prepare(&args.curve, args.family)?;
    let calibration = calibrate_tau(
        &prep.curve,
        &prep.base,
        &prep.targets,
        args.tau_max,
        args.tau_step,
    )
    .map_err(|e| match e {
        Error::CalibrationFailed { .. } => Failure::Calibration(e.into()),
        other => input(other),
    })?;

    let source = format!(
        "reference={} n0={} r={} targets={} tau_step={}",
        args.curve.curve.file_name().map_or_else(
            || args.curve.curve.display().to_string(),
            |n| n.to_string_lossy().into_owned()
        ),
        prep.base.n0,
        prep.base.r,
        prep.targets.len(),
        args.tau_step
    );
    let mut profile = if args.out.exists() {
        read_profile(&args.out)?
    } else {
        TauProfile::empty("datareq calibrate")
    };
    profile.upsert(TauEntry {
        family: args.family,
        rounds: prep.base.rounds,
        tau: calibration.tau,
        min_ratio: calibration.min_ratio,
        source,
    });
    write_atomic(&args.out, &to_json(&profile)?)?;

    let report = CalibrationReport {
        version: VERSION.into(),
        kind: CalibrationReport::KIND.into(),
        family: args.family,
        rounds: prep.base.rounds,
        tau: calibration.tau,
        min_ratio: calibration.min_ratio,
        targets: prep.targets.len(),
    };
    print!("{}", to_json(&report)?);
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> CmdResult {
    let config = read_fit_config(args.config.as_deref())?;
    let set = RegressionSet::new(read_table(&args.fit)?).map_err(input)?;
    let holdout = HoldoutSet::new(read_table(&args.holdout)?, set.max_n())
        .with_context(|| format!("{}", args.holdout.display()))
        .map_err(input)?;
    let all = fit_all(&set, &config).map_err(|e| Failure::Estimation(e.into()))?;

    let metrics = CurveFamily::ALL
        .iter()
        .map(|family| match all.models.get(family) {
            Some(model) => {
                let r = rmse(model, &holdout);
                let l = mean_log_ratio(model, &holdout);
                let error = [r.as_ref().err(), l.as_ref().err()]
                    .into_iter()
                    .flatten()
                    .map(ToString::to_string)
                    .next();
                MetricRecord {
                    family: *family,
                    params: Some(model.params),
                    rmse: r.ok(),
                    mean_log_ratio: l.ok(),
                    error,
                }
            }
            None => MetricRecord {
                family: *family,
                params: None,
                rmse: None,
                mean_log_ratio: None,
                error: all.failures.get(family).map(ToString::to_string),
            },
        })
        .collect();
    let doc = MetricsDoc {
        version: VERSION.into(),
        kind: MetricsDoc::KIND.into(),
        fit_points: set.len(),
        holdout_points: holdout.points().len(),
        metrics,
    };
    emit(&args.out, &to_json(&doc)?)
}
