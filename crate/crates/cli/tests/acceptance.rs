//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Runs as a plain binary (`harness = false`) so the report is always printed.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use datareq::curves::{evaluate, inverse_solve, is_monotone_on};
use datareq::estimator::{
    bound_coverage, bounds, estimate_requirement, EnsembleConfig, Estimate, Schedule,
};
use datareq::fit::{fit, fit_all, weights};
use datareq::groundtruth::synthesize;
use datareq::metrics::{rmse, HoldoutSet};
use datareq::simulate::{calibrate_tau, default_targets, min_ratio, sweep, SimulationTrace};
use datareq::{
    CurveFamily, CurveMode, Error, FitConfig, FittedModel, GroundTruthCurve, Params, RegressionSet,
    SimConfig,
};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! check {
    ($cond:expr, $($arg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($arg)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn pick_family(rng: &mut ChaCha8Rng) -> CurveFamily {
    CurveFamily::ALL[rng.random_range(0..CurveFamily::ALL.len())]
}

/// Parameters that are non-decreasing on all of `n >= 1`.
fn increasing_params(rng: &mut ChaCha8Rng, family: CurveFamily) -> Params {
    match family {
        CurveFamily::PowerLaw if rng.random_bool(0.5) => Params::new(
            -rng.random_range(10.0..200.0),
            -rng.random_range(0.1..1.0),
            rng.random_range(60.0..100.0),
        ),
        CurveFamily::PowerLaw => Params::new(
            rng.random_range(0.1..5.0),
            rng.random_range(0.1..0.9),
            rng.random_range(0.0..10.0),
        ),
        CurveFamily::Arctan => Params::new(
            10f64.powf(rng.random_range(-5.0..-1.0)),
            rng.random_range(-2.0..2.0),
            rng.random_range(-20.0..20.0),
        ),
        CurveFamily::Logarithmic => Params::new(
            rng.random_range(0.5..10.0),
            rng.random_range(0.5..50.0),
            rng.random_range(-10.0..10.0),
        ),
        CurveFamily::AlgebraicRoot => Params::new(
            10f64.powf(rng.random_range(-3.0..0.0)),
            rng.random_range(0.2..5.0),
            rng.random_range(-10.0..10.0),
        ),
    }
}

fn scan_first(family: CurveFamily, params: Params, target: f64, lo: u64, hi: u64) -> Option<u64> {
    (lo..=hi).find(|&n| evaluate(family, params, n as f64).unwrap() >= target)
}

fn c1_inverse_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = rng(1);
    let (mut reachable, mut unreachable) = (0, 0);
    for case in 0..500 {
        let family = pick_family(&mut rng);
        let params = increasing_params(&mut rng, family);
        let lo = rng.random_range(1..1000u64);
        let hi = rng.random_range(lo + 1..=100_000);
        check!(
            is_monotone_on(family, params, lo as f64, hi as f64).unwrap(),
            "case {case}: generator produced a non-monotone {family} {params:?}"
        );
        let (v_lo, v_hi) = (
            evaluate(family, params, lo as f64).unwrap(),
            evaluate(family, params, hi as f64).unwrap(),
        );
        let u: f64 = rng.random();
        let target = match case % 10 {
            0 => v_hi + 1.0 + u,
            1 => v_lo - 1.0 - u,
            _ => v_lo + u * (v_hi - v_lo),
        };
        let got = inverse_solve(family, params, target, lo, hi);
        let want = scan_first(family, params, target, lo, hi);
        match (&got, want) {
            (Ok(n), Some(m)) if *n == m => reachable += 1,
            (Err(Error::Unreachable { .. }), None) => unreachable += 1,
            _ => {
                return Err(format!(
                    "case {case}: {family} {params:?} target {target} on [{lo}, {hi}]: got {got:?}, scan {want:?}"
                ))
            }
        }
    }
    let elapsed = start.elapsed();
    check!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!(
        "500/500 match ({reachable} reachable, {unreachable} unreachable) in {elapsed:.2?}"
    ))
}

fn random_curve(rng: &mut ChaCha8Rng) -> GroundTruthCurve {
    let full_size = rng.random_range(10..=100_000u64);
    let k = rng.random_range(1..=30usize).min(full_size as usize);
    let mut sizes: Vec<u64> = index::sample(rng, full_size as usize - 1, k - 1)
        .into_iter()
        .map(|i| i as u64 + 1)
        .collect();
    sizes.push(full_size);
    sizes.sort_unstable();
    let mut scores: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..100.0)).collect();
    scores.sort_by(f64::total_cmp);
    for i in 1..k {
        if rng.random_bool(0.15) {
            scores[i] = scores[i - 1];
        }
    }
    GroundTruthCurve::monotone(sizes.into_iter().zip(scores).collect()).unwrap()
}

fn c2_groundtruth_oracle() -> Outcome {
    let mut rng = rng(2);
    let mut checked = 0;
    for case in 0..200 {
        let curve = random_curve(&mut rng);
        for &(n, s) in curve.anchors() {
            check!(
                curve.value(n) == s,
                "case {case}: value({n}) = {} but anchor is {s}",
                curve.value(n)
            );
        }
        let values: Vec<f64> = (0..=curve.full_size()).map(|n| curve.value(n)).collect();
        let mut targets: Vec<f64> = curve.anchors().iter().map(|a| a.1).collect();
        targets.extend((0..10).map(|_| rng.random_range(0.0..=curve.final_score())));
        targets.extend([curve.final_score() + 0.5, 0.0, -3.0]);
        for target in targets {
            let want = values.iter().position(|&v| v >= target).map(|i| i as u64);
            let got = curve.min_required(target).ok();
            check!(
                got == want,
                "case {case}: target {target}: got {got:?}, scan {want:?}"
            );
            checked += 1;
        }
    }
    Ok(format!(
        "200 curves, {checked} targets match the scan; anchors reproduced exactly"
    ))
}

fn c3_fit_recovery() -> Outcome {
    let start = Instant::now();
    let config = FitConfig::default();
    let mut rng = rng(3);
    let mut summary = Vec::new();
    let mut worst_family = 100;
    for family in CurveFamily::ALL {
        let mut recovered = 0;
        let mut trials = 0;
        while trials < 100 {
            let params = Params::new(
                10f64.powf(rng.random_range(-1.0..=1.0)),
                10f64.powf(rng.random_range(-1.0..=1.0)),
                0.0,
            );
            let points: Vec<(u64, f64)> = (1..=10)
                .map(|n| (n, evaluate(family, params, n as f64).unwrap()))
                .collect();
            if points.iter().any(|p| !(0.0..=100.0).contains(&p.1)) {
                continue;
            }
            trials += 1;
            let model = fit(family, &RegressionSet::new(points).unwrap(), &config).unwrap();
            let ok = (11..=20).all(|n| {
                let truth = evaluate(family, params, n as f64).unwrap();
                model
                    .evaluate(n as f64)
                    .is_ok_and(|p| ((p - truth) / truth).abs() < 1e-3)
            });
            recovered += ok as usize;
        }
        worst_family = worst_family.min(recovered);
        summary.push(format!("{family} {recovered}/100"));
    }
    let elapsed = start.elapsed();
    let detail = format!("{} in {elapsed:.2?}", summary.join(", "));
    check!(worst_family >= 95, "{detail}");
    check!(elapsed < Duration::from_secs(120), "{detail}");
    Ok(detail)
}

fn c4_weights() -> Outcome {
    for r in 2..=30u32 {
        let set = RegressionSet::new((1..=r as u64).map(|n| (n, 50.0)).collect()).unwrap();
        let want: Vec<f64> = (0..r).map(|i| 2f64.powi(i as i32)).collect();
        let got = weights(&set, FitConfig::default().weight_base);
        check!(got == want, "r = {r}: {got:?}");
    }
    Ok("weights are exactly 1, 2, ..., 2^(r-1) for r = 2..30".into())
}

fn c5_schedule() -> Outcome {
    let sizes = Schedule::new(5000, 5).unwrap().sizes();
    check!(sizes == [1000, 2000, 3000, 4000, 5000], "got {sizes:?}");
    Ok(format!("{sizes:?}"))
}

/// Noiseless generators on dense integer anchors `1..=2000`.
fn self_family_curves() -> Vec<(CurveFamily, GroundTruthCurve)> {
    let generators = [
        (CurveFamily::PowerLaw, Params::new(5.0, 0.3, 0.0)),
        (CurveFamily::Arctan, Params::new(0.001, 0.0, 0.0)),
        (CurveFamily::Logarithmic, Params::new(10.0, 5.0, 0.0)),
        (CurveFamily::AlgebraicRoot, Params::new(1.5, 0.3, 0.0)),
    ];
    let sizes: Vec<u64> = (1..=2000).collect();
    generators
        .into_iter()
        .map(|(f, p)| {
            (
                f,
                synthesize(f, p, &sizes, 0.0, 0, CurveMode::Monotone).unwrap(),
            )
        })
        .collect()
}

fn traces(results: Vec<datareq::Result<SimulationTrace>>) -> Result<Vec<SimulationTrace>, String> {
    results
        .into_iter()
        .map(|r| r.map_err(|e| e.to_string()))
        .collect()
}

fn c6_self_consistency() -> Outcome {
    let start = Instant::now();
    let mut summary = Vec::new();
    for (family, curve) in self_family_curves() {
        let targets = default_targets(&curve, 200, 20);
        let runs = traces(sweep(
            &curve,
            &SimConfig::new(family, 200, 5, 1, 0.0),
            &targets,
        ))?;
        let (lo, hi) = runs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
                (lo.min(t.ratio), hi.max(t.ratio))
            });
        check!(
            (0.98..=1.02).contains(&lo) && (0.98..=1.02).contains(&hi),
            "{family}: ratios span [{lo}, {hi}]"
        );
        summary.push(format!("{family} [{lo:.4}, {hi:.4}]"));
    }
    let elapsed = start.elapsed();
    check!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!("{} in {elapsed:.2?}", summary.join(", ")))
}

/// Saturating power law with Gaussian noise, sampled densely up to 400 then every 400 up to 4000.
fn noisy_curve(seed: u64) -> GroundTruthCurve {
    let sizes: Vec<u64> = (1..=10)
        .map(|i| i * 40)
        .chain((2..=10).map(|i| i * 400))
        .collect();
    synthesize(
        CurveFamily::PowerLaw,
        Params::new(-120.0, -0.35, 92.0),
        &sizes,
        0.8,
        seed,
        CurveMode::Monotone,
    )
    .unwrap()
}

fn c7_round_dominance() -> Outcome {
    let mut compared = 0;
    for seed in 0..50 {
        let curve = noisy_curve(seed);
        let targets = default_targets(&curve, 400, 8);
        for family in CurveFamily::ALL {
            let base = SimConfig::new(family, 400, 5, 1, 0.0);
            let one = traces(sweep(&curve, &base, &targets))?;
            let five = traces(sweep(&curve, &SimConfig { rounds: 5, ..base }, &targets))?;
            for (a, b) in one.iter().zip(&five) {
                check!(
                    b.ratio >= a.ratio && b.final_total >= a.final_total,
                    "seed {seed} {family} target {}: T=1 ({}, {}) vs T=5 ({}, {})",
                    a.config.target,
                    a.final_total,
                    a.ratio,
                    b.final_total,
                    b.ratio
                );
                compared += 1;
            }
        }
    }
    Ok(format!(
        "{compared} (curve, family, target) triples: T=5 never collects less than T=1"
    ))
}

fn c8_calibration() -> Outcome {
    const TRANSFER_TRIALS: u64 = 25;
    let reference = noisy_curve(1000);
    let targets = default_targets(&reference, 400, 10);
    let mut summary = Vec::new();
    for family in CurveFamily::ALL {
        let base = SimConfig::new(family, 400, 5, 1, 0.0);
        let cal = calibrate_tau(&reference, &base, &targets, 20.0, 0.25)
            .map_err(|e| format!("{family}: {e}"))?;
        let rerun = traces(sweep(&reference, &base.clone().with_tau(cal.tau), &targets))?;
        let verified = min_ratio(&rerun).unwrap();
        check!(
            verified >= 1.0,
            "{family}: tau {} re-runs to min ratio {verified}",
            cal.tau
        );

        let mut held = 0;
        for seed in 0..TRANSFER_TRIALS {
            let other = noisy_curve(seed);
            let other_targets = default_targets(&other, 400, 10);
            let runs = traces(sweep(
                &other,
                &base.clone().with_tau(cal.tau),
                &other_targets,
            ))?;
            held += (min_ratio(&runs).unwrap() >= 0.9) as u64;
        }
        let soft = if held * 5 >= TRANSFER_TRIALS * 4 {
            "met"
        } else {
            "missed"
        };
        summary.push(format!(
            "{family} tau={} min_ratio={verified:.3} transfer {held}/{TRANSFER_TRIALS} ({soft})",
            cal.tau
        ));
    }
    Ok(format!(
        "{}; transfer is logged, not asserted",
        summary.join("; ")
    ))
}

fn c9_bounds() -> Outcome {
    let mut rng = rng(9);
    let mut bundles = 0;
    for case in 0..200 {
        let mut models = BTreeMap::new();
        let mut taus = BTreeMap::new();
        for family in CurveFamily::ALL {
            if rng.random_bool(0.75) {
                let params = increasing_params(&mut rng, family);
                models.insert(
                    family,
                    FittedModel {
                        family,
                        params,
                        residual_sse: 0.0,
                        converged: true,
                        iterations: 1,
                    },
                );
                taus.insert(family, rng.random_range(0.0..3.0));
            }
        }
        if models.is_empty() {
            continue;
        }
        let n0 = rng.random_range(10..5000u64);
        let target = rng.random_range(0.0..100.0);
        let cap = rng.random_range(1000..1_000_000u64);
        let bundle = match bounds(&models, n0, target, &taus, cap) {
            Ok(b) => b,
            Err(Error::NoEstimates) => continue,
            Err(e) => return Err(format!("case {case}: {e}")),
        };
        bundles += 1;
        let finite: Vec<u64> = bundle
            .per_family
            .values()
            .filter_map(|e| e.finite())
            .collect();
        let any_unreachable = bundle
            .per_family
            .values()
            .any(|e| *e == Estimate::Unreachable);
        check!(
            finite.iter().all(|&n| bundle.contains(n)),
            "case {case}: {bundle:?} does not bracket {finite:?}"
        );
        check!(
            finite.contains(&bundle.lower),
            "case {case}: lower {} is not an estimate",
            bundle.lower
        );
        check!(
            bundle.upper.is_none() == any_unreachable,
            "case {case}: upper {:?} with unreachable = {any_unreachable}",
            bundle.upper
        );
    }
    check!(
        bundles >= 100,
        "only {bundles} of 200 cases produced a bundle"
    );

    let mut coverage = Vec::new();
    for (family, curve) in self_family_curves() {
        let targets: Vec<f64> = (0..20)
            .map(|i| {
                let m = 250 + i * 80;
                0.5 * (curve.value(m - 1) + curve.value(m))
            })
            .collect();
        let cov = bound_coverage(&curve, 200, &targets, &EnsembleConfig::default())
            .map_err(|e| e.to_string())?;
        check!(
            cov.hit_fraction == 1.0,
            "{family}: hit fraction {}",
            cov.hit_fraction
        );
        coverage.push(format!("{family} 1.0"));
    }
    Ok(format!(
        "{bundles} bundles bracket every finite estimate; coverage {}",
        coverage.join(", ")
    ))
}

fn c10_sensitivity() -> Outcome {
    let mut rng = rng(10);
    let sizes: Vec<u64> = (1..=400).map(|i| i * 50).collect();
    let n0 = 1000;
    let mut cases = 0;
    let mut largest = (0.0, 0.0);
    for _ in 0..50 {
        let params = Params::new(
            -rng.random_range(50.0..150.0),
            -rng.random_range(0.2..0.6),
            rng.random_range(85.0..98.0),
        );
        let curve = synthesize(
            CurveFamily::PowerLaw,
            params,
            &sizes,
            0.0,
            0,
            CurveMode::Monotone,
        )
        .unwrap();
        let set = Schedule::new(n0, 5)
            .unwrap()
            .regression_set(&curve)
            .unwrap();
        let holdout = HoldoutSet::new(
            (1..=10)
                .map(|i| (i * 2000, curve.value(i * 2000)))
                .collect(),
            n0,
        )
        .unwrap();
        let target = curve.value(10_000);
        let needed = curve.min_required(target).unwrap() - n0;
        for model in fit_all(&set, &FitConfig::default())
            .unwrap()
            .models
            .values()
        {
            let Ok(err) = rmse(model, &holdout) else {
                continue;
            };
            let Ok(est) = estimate_requirement(model, n0, target, 0.0, 1_000_000) else {
                continue;
            };
            let rel = (est as f64 - needed as f64).abs() / needed as f64;
            if err < 6.0 && rel > 0.1 {
                cases += 1;
                if rel > largest.1 {
                    largest = (err, rel);
                }
            }
        }
    }
    check!(
        cases >= 1,
        "no model with RMSE < 6 mis-estimated the requirement by more than 10%"
    );
    Ok(format!(
        "{cases} fitted models with RMSE < 6 miss n* by > 10% (worst: RMSE {:.2}, off by {:.0}%)",
        largest.0,
        largest.1 * 100.0
    ))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
}

fn datareq(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_datareq"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    check!(
        out.status.success(),
        "datareq {} exited with {}: {}",
        args.join(" "),
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(())
}

const OUTPUTS: [&str; 4] = ["models.json", "estimate.json", "traces.json", "ratio.svg"];

fn round_trip(dir: &Path) -> Result<Vec<Vec<u8>>, String> {
    let (initial, curve) = (data("initial.csv"), data("curve.csv"));
    datareq(
        dir,
        &["fit", initial.to_str().unwrap(), "--out", "models.json"],
    )?;
    datareq(
        dir,
        &[
            "estimate",
            "models.json",
            "--n0",
            "2000",
            "--target",
            "70",
            "--out",
            "estimate.json",
        ],
    )?;
    datareq(
        dir,
        &[
            "simulate",
            curve.to_str().unwrap(),
            "--n0",
            "10%",
            "--rounds",
            "5",
            "--targets",
            "60:78:7",
            "--plot",
            "ratio.svg",
            "--out",
            "traces.json",
        ],
    )?;
    OUTPUTS
        .iter()
        .map(|f| std::fs::read(dir.join(f)).map_err(|e| format!("{f}: {e}")))
        .collect()
}

fn c11_cli_round_trip() -> Outcome {
    let schema: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(
            Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/datareq.schema.json"),
        )
        .unwrap(),
    )
    .unwrap();
    let validator = jsonschema::validator_for(&schema).map_err(|e| e.to_string())?;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = round_trip(a.path())?;
    let second = round_trip(b.path())?;
    for ((name, x), y) in OUTPUTS.iter().zip(&first).zip(&second) {
        check!(x == y, "{name} differs between runs");
        if name.ends_with(".json") {
            let doc: serde_json::Value =
                serde_json::from_slice(x).map_err(|e| format!("{name}: {e}"))?;
            let errors: Vec<String> = validator
                .iter_errors(&doc)
                .map(|e| format!("{} at {}", e, e.instance_path()))
                .collect();
            check!(errors.is_empty(), "{name}: {}", errors.join("; "));
        }
    }
    let svg = String::from_utf8(first[3].clone()).unwrap();
    roxmltree::Document::parse(&svg).map_err(|e| format!("ratio.svg: {e}"))?;
    Ok(
        "fit, estimate, simulate exit 0; outputs schema-valid and byte-identical across runs"
            .into(),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("inverse solve matches integer scan", c1_inverse_oracle),
        ("ground truth matches integer scan", c2_groundtruth_oracle),
        ("noiseless fits extrapolate", c3_fit_recovery),
        ("doubling weights", c4_weights),
        ("regression schedule", c5_schedule),
        ("self-family simulation ratio", c6_self_consistency),
        ("more rounds never collect less", c7_round_dominance),
        ("calibrated tau meets every target", c8_calibration),
        ("bounds bracket estimates; coverage", c9_bounds),
        ("small score error, large data error", c10_sensitivity),
        ("CLI round trip", c11_cli_round_trip),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    println!("\nrunning {} acceptance criteria", criteria.len());
    for (i, (name, criterion)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(criterion)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed\n",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
