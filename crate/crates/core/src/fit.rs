//! Weighted least-squares fitting of a curve family with Levenberg–Marquardt.
//!
//! Residuals are scaled by `sqrt(w_i)` with `w_i = weight_base^i`, so later
//! (larger) observations dominate. The Jacobian is taken by central finite
//! differences, and points where the model is undefined contribute a fixed
//! penalty residual instead of aborting the fit.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::curves::{evaluate, initial_params, CurveFamily, Params};
use crate::error::{Error, Result};

/// Residual assigned to a point where the model is undefined.
pub const DOMAIN_PENALTY: f64 = 1e6;
const DAMPING_CEILING: f64 = 1e12;
const DAMPING_FLOOR: f64 = 1e-15;
const GEODESIC_STEP: f64 = 0.1;
const GEODESIC_RATIO: f64 = 0.75;

/// Observations `(n, score)` with strictly increasing sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSet {
    points: Vec<(u64, f64)>,
}

impl RegressionSet {
    pub fn new(points: Vec<(u64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "a regression set needs at least 2 points, got {}",
                points.len()
            )));
        }
        for (i, &(n, score)) in points.iter().enumerate() {
            check_point(n, score)?;
            if i > 0 && n <= points[i - 1].0 {
                return Err(Error::InvalidInput(format!(
                    "sizes must be strictly increasing: {} follows {}",
                    n,
                    points[i - 1].0
                )));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(u64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn max_n(&self) -> u64 {
        self.points[self.points.len() - 1].0
    }

    /// Append an observation larger than every size already present.
    pub fn push(&mut self, n: u64, score: f64) -> Result<()> {
        check_point(n, score)?;
        if n <= self.max_n() {
            return Err(Error::InvalidInput(format!(
                "appended size {n} does not exceed {}",
                self.max_n()
            )));
        }
        self.points.push((n, score));
        Ok(())
    }
}

fn check_point(n: u64, score: f64) -> Result<()> {
    if n < 1 {
        return Err(Error::InvalidInput("sizes must be >= 1".into()));
    }
    if !score.is_finite() || !(0.0..=100.0).contains(&score) {
        return Err(Error::InvalidInput(format!(
            "score {score} at n = {n} is outside [0, 100]"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    /// Relative change in SSE below which an accepted step ends the fit.
    pub convergence_tol: f64,
    pub weight_base: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            initial_damping: 1e-3,
            damping_up: 10.0,
            damping_down: 0.1,
            convergence_tol: 1e-10,
            weight_base: 2.0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("initial_damping", self.initial_damping),
            ("damping_up", self.damping_up),
            ("damping_down", self.damping_down),
            ("convergence_tol", self.convergence_tol),
            ("weight_base", self.weight_base),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput(
                "max_iterations must be positive".into(),
            ));
        }
        if self.weight_base < 1.0 {
            return Err(Error::InvalidInput("weight_base must be >= 1".into()));
        }
        // The damping schedule must actually grow on rejection and shrink on acceptance.
        if self.damping_up <= 1.0 || self.damping_down >= 1.0 {
            return Err(Error::InvalidInput(
                "damping_up must exceed 1 and damping_down must be below 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub family: CurveFamily,
    pub params: Params,
    pub residual_sse: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl FittedModel {
    pub fn evaluate(&self, n: f64) -> Result<f64> {
        evaluate(self.family, self.params, n)
    }
}

/// Unnormalized geometric weights `weight_base^i` in increasing-size order.
pub fn weights(set: &RegressionSet, weight_base: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(set.len());
    let mut w = 1.0;
    for _ in 0..set.len() {
        out.push(w);
        w *= weight_base;
    }
    out
}

/// Weighted SSE of a parameter vector on a set, with domain penalties applied.
pub fn weighted_sse(
    family: CurveFamily,
    params: Params,
    set: &RegressionSet,
    weight_base: f64,
) -> f64 {
    let w = weights(set, weight_base);
    set.points()
        .iter()
        .zip(&w)
        .map(|(&(n, y), &wi)| {
            let r = residual(family, params, n, y);
            wi * r * r
        })
        .sum()
}

fn residual(family: CurveFamily, params: Params, n: u64, y: f64) -> f64 {
    match evaluate(family, params, n as f64) {
        Ok(v) => y - v,
        Err(_) => DOMAIN_PENALTY,
    }
}

struct Problem<'a> {
    family: CurveFamily,
    set: &'a RegressionSet,
    sqrt_w: Vec<f64>,
}

impl Problem<'_> {
    fn residuals(&self, theta: &[f64; 3]) -> Vec<Option<f64>> {
        let params = Params::from_array(*theta);
        self.set
            .points()
            .iter()
            .zip(&self.sqrt_w)
            .map(|(&(n, y), &sw)| {
                evaluate(self.family, params, n as f64)
                    .ok()
                    .map(|v| sw * (y - v))
            })
            .collect()
    }

    fn sse(&self, residuals: &[Option<f64>]) -> f64 {
        residuals
            .iter()
            .zip(&self.sqrt_w)
            .map(|(r, &sw)| {
                let r = r.unwrap_or(sw * DOMAIN_PENALTY);
                r * r
            })
            .sum()
    }

    /// Returns `J`, `J^T J` and `J^T r` for the residual vector `r`.
    fn linearize(
        &self,
        theta: &[f64; 3],
        r: &[Option<f64>],
    ) -> (Vec<[f64; 3]>, Matrix3<f64>, Vector3<f64>) {
        let m = r.len();
        let mut jac = vec![[0.0f64; 3]; m];
        for k in 0..3 {
            let h = (1e-6 * theta[k].abs()).max(1e-6);
            let mut plus = *theta;
            let mut minus = *theta;
            plus[k] += h;
            minus[k] -= h;
            let rp = self.residuals(&plus);
            let rm = self.residuals(&minus);
            for i in 0..m {
                jac[i][k] = match (r[i], rp[i], rm[i]) {
                    (Some(_), Some(a), Some(b)) => (a - b) / (2.0 * h),
                    (Some(c), Some(a), None) => (a - c) / h,
                    (Some(c), None, Some(b)) => (c - b) / h,
                    // Penalized points are flat in every direction.
                    _ => 0.0,
                };
            }
        }
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (row, ri) in jac.iter().zip(r) {
            let ri = ri.unwrap_or(0.0);
            for a in 0..3 {
                jtr[a] += row[a] * ri;
                for b in 0..3 {
                    jtj[(a, b)] += row[a] * row[b];
                }
            }
        }
        (jac, jtj, jtr)
    }

    /// Second directional derivative of the residuals along `v`, by finite
    /// differences against the linear prediction.
    fn second_directional(
        &self,
        theta: &[f64; 3],
        r: &[Option<f64>],
        jac: &[[f64; 3]],
        v: &Vector3<f64>,
    ) -> Option<Vec<f64>> {
        let probe = [
            theta[0] + GEODESIC_STEP * v[0],
            theta[1] + GEODESIC_STEP * v[1],
            theta[2] + GEODESIC_STEP * v[2],
        ];
        let rp = self.residuals(&probe);
        r.iter()
            .zip(&rp)
            .zip(jac)
            .map(|((&ri, &pi), row)| {
                let (ri, pi) = (ri?, pi?);
                let jv = row[0] * v[0] + row[1] * v[1] + row[2] * v[2];
                Some(2.0 / GEODESIC_STEP * ((pi - ri) / GEODESIC_STEP - jv))
            })
            .collect()
    }
}

fn damped_matrix(jtj: &Matrix3<f64>, scale: &Vector3<f64>, damping: f64) -> Matrix3<f64> {
    let mut a = *jtj;
    for k in 0..3 {
        a[(k, k)] += damping * scale[k];
    }
    a
}

fn solve3(a: &Matrix3<f64>, rhs: &Vector3<f64>) -> Option<Vector3<f64>> {
    let x = match a.cholesky() {
        Some(chol) => chol.solve(rhs),
        None => a.lu().solve(rhs)?,
    };
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Half the geodesic acceleration when it is small relative to the velocity,
/// otherwise zero.
fn geodesic_correction(
    problem: &Problem<'_>,
    theta: &[f64; 3],
    r: &[Option<f64>],
    jac: &[[f64; 3]],
    a: &Matrix3<f64>,
    scale: &Vector3<f64>,
    velocity: &Vector3<f64>,
) -> Vector3<f64> {
    let none = Vector3::zeros();
    let Some(rvv) = problem.second_directional(theta, r, jac, velocity) else {
        return none;
    };
    let mut jt_rvv = Vector3::zeros();
    for (row, v) in jac.iter().zip(&rvv) {
        for k in 0..3 {
            jt_rvv[k] += row[k] * v;
        }
    }
    let Some(accel) = solve3(a, &-jt_rvv) else {
        return none;
    };
    let norm = |x: &Vector3<f64>| (0..3).map(|k| scale[k] * x[k] * x[k]).sum::<f64>().sqrt();
    let (vn, an) = (norm(velocity), norm(&accel));
    if vn > 0.0 && 2.0 * an <= GEODESIC_RATIO * vn {
        accel * 0.5
    } else {
        none
    }
}

/// Fit `family` to `set`, starting from [`initial_params`].
pub fn fit(family: CurveFamily, set: &RegressionSet, config: &FitConfig) -> Result<FittedModel> {
    fit_traced(family, set, config).map(|(model, _)| model)
}

/// Like [`fit`], also returning the weighted SSE after each accepted step
/// (the first entry is the SSE of the initial parameters).
pub fn fit_traced(
    family: CurveFamily,
    set: &RegressionSet,
    config: &FitConfig,
) -> Result<(FittedModel, Vec<f64>)> {
    config.validate()?;
    let problem = Problem {
        family,
        set,
        sqrt_w: weights(set, config.weight_base)
            .iter()
            .map(|w| w.sqrt())
            .collect(),
    };

    let mut theta = initial_params(family).to_array();
    let mut r = problem.residuals(&theta);
    if r.iter().all(Option::is_none) {
        return Err(Error::Fit(format!(
            "initial {family} model is undefined at every point"
        )));
    }
    let mut sse = problem.sse(&r);
    if !sse.is_finite() {
        return Err(Error::Fit(format!("initial {family} SSE is not finite")));
    }

    let mut history = vec![sse];
    let mut damping = config.initial_damping;

    let mut converged = false;
    let mut iterations = 0;

    'outer: while iterations < config.max_iterations {
        if sse == 0.0 {
            converged = true;
            break;
        }
        iterations += 1;
        let (jac, jtj, jtr) = problem.linearize(&theta, &r);
        let floor = (jtj.diagonal().max() * 1e-12).max(1e-300);
        let scale = jtj.diagonal().map(|d| d.max(floor));
        loop {
            let a = damped_matrix(&jtj, &scale, damping);
            // r = y - f, so J_r = -J_f and the Gauss-Newton step solves A·v = -J^T r.
            let candidate = solve3(&a, &-jtr).map(|velocity| {
                let step = velocity
                    + geodesic_correction(&problem, &theta, &r, &jac, &a, &scale, &velocity);
                [theta[0] + step[0], theta[1] + step[1], theta[2] + step[2]]
            });
            if let Some(next) = candidate.filter(|t| t.iter().all(|v| v.is_finite())) {
                let next_r = problem.residuals(&next);
                let next_sse = problem.sse(&next_r);
                if next_sse.is_finite() && next_sse < sse {
                    let relative = (sse - next_sse) / sse;
                    theta = next;
                    r = next_r;
                    sse = next_sse;
                    history.push(sse);
                    damping = (damping * config.damping_down).max(DAMPING_FLOOR);
                    if relative < config.convergence_tol {
                        converged = true;
                        break 'outer;
                    }
                    break;
                }
            }
            damping *= config.damping_up;
            if damping > DAMPING_CEILING {
                // No descent direction left at working precision.
                converged = true;
                break 'outer;
            }
        }
    }

    let params = Params::from_array(theta);
    Ok((
        FittedModel {
            family,
            params,
            residual_sse: weighted_sse(family, params, set, config.weight_base),
            converged,
            iterations,
        },
        history,
    ))
}

/// Outcome of fitting every family to one set.
#[derive(Debug, Clone)]
pub struct FitAll {
    pub models: BTreeMap<CurveFamily, FittedModel>,
    pub failures: BTreeMap<CurveFamily, Error>,
}

pub fn fit_all(set: &RegressionSet, config: &FitConfig) -> Result<FitAll> {
    config.validate()?;
    let mut models = BTreeMap::new();
    let mut failures = BTreeMap::new();
    for family in CurveFamily::ALL {
        match fit(family, set, config) {
            Ok(model) => {
                models.insert(family, model);
            }
            Err(e) => {
                failures.insert(family, e);
            }
        }
    }
    if models.is_empty() {
        return Err(Error::AllFailed);
    }
    Ok(FitAll { models, failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sampled(
        family: CurveFamily,
        p: Params,
        sizes: impl IntoIterator<Item = u64>,
    ) -> RegressionSet {
        let pts = sizes
            .into_iter()
            .map(|n| (n, evaluate(family, p, n as f64).unwrap()))
            .collect();
        RegressionSet::new(pts).unwrap()
    }

    #[test]
    fn weights_examples() {
        let set4 = RegressionSet::new(vec![(1, 1.0), (2, 2.0), (3, 3.0), (4, 4.0)]).unwrap();
        assert_eq!(weights(&set4, 2.0), vec![1.0, 2.0, 4.0, 8.0]);
        assert_eq!(weights(&set4, 1.0), vec![1.0; 4]);
        let set3 = RegressionSet::new(vec![(1, 1.0), (2, 2.0), (3, 3.0)]).unwrap();
        assert_eq!(weights(&set3, 2.0), vec![1.0, 2.0, 4.0]);
    }

    #[test]
    fn regression_set_validation() {
        assert!(RegressionSet::new(vec![(1, 1.0)]).is_err());
        assert!(RegressionSet::new(vec![(2, 1.0), (2, 2.0)]).is_err());
        assert!(RegressionSet::new(vec![(0, 1.0), (2, 2.0)]).is_err());
        assert!(RegressionSet::new(vec![(1, 1.0), (2, 101.0)]).is_err());
        assert!(RegressionSet::new(vec![(1, f64::NAN), (2, 1.0)]).is_err());
        let mut s = RegressionSet::new(vec![(1, 1.0), (2, 2.0)]).unwrap();
        assert!(s.push(2, 3.0).is_err());
        s.push(5, 3.0).unwrap();
        assert_eq!(s.max_n(), 5);
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig::default().validate().is_ok());
        let bad = FitConfig {
            weight_base: 0.5,
            ..FitConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = FitConfig {
            damping_up: 1.0,
            ..FitConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn recovers_power_law_predictions() {
        let truth = Params::new(3.0, 0.4, 2.0);
        let set = sampled(CurveFamily::PowerLaw, truth, (1..=10).map(|i| i * 10));
        let model = fit(CurveFamily::PowerLaw, &set, &FitConfig::default()).unwrap();
        assert!(model.residual_sse < 1e-6, "sse {}", model.residual_sse);
        for n in [200.0, 500.0] {
            let want = evaluate(CurveFamily::PowerLaw, truth, n).unwrap();
            assert!((model.evaluate(n).unwrap() - want).abs() < 1e-3);
        }
    }

    #[test]
    fn constant_pair_fits_arctan() {
        let set = RegressionSet::new(vec![(1, 10.0), (2, 10.0)]).unwrap();
        let model = fit(CurveFamily::Arctan, &set, &FitConfig::default()).unwrap();
        for n in [1.0, 2.0] {
            assert!(
                (model.evaluate(n).unwrap() - 10.0).abs() < 1e-3,
                "{model:?}"
            );
        }
    }

    #[test]
    fn recovers_logarithmic() {
        let truth = Params::new(10.0, 1.0, 5.0);
        let set = sampled(CurveFamily::Logarithmic, truth, (1..=10).map(|i| i * 5));
        let model = fit(CurveFamily::Logarithmic, &set, &FitConfig::default()).unwrap();
        assert!(model.residual_sse < 1e-6, "{model:?}");
    }

    #[test]
    fn accepted_steps_never_increase_sse() {
        let truth = Params::new(0.01, 0.5, -10.0);
        let set = sampled(CurveFamily::Arctan, truth, (1..=8).map(|i| i * 100));
        let (_, history) = fit_traced(CurveFamily::Arctan, &set, &FitConfig::default()).unwrap();
        assert!(history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn residual_sse_is_recomputable() {
        let set =
            RegressionSet::new(vec![(100, 20.0), (200, 31.0), (300, 37.5), (400, 41.0)]).unwrap();
        let cfg = FitConfig::default();
        for family in CurveFamily::ALL {
            let m = fit(family, &set, &cfg).unwrap();
            let again = weighted_sse(family, m.params, &set, cfg.weight_base);
            let scale = again.abs().max(1e-300);
            assert!((m.residual_sse - again).abs() / scale <= 1e-9);
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let set =
            RegressionSet::new(vec![(100, 20.0), (200, 31.0), (300, 37.5), (400, 41.0)]).unwrap();
        for family in CurveFamily::ALL {
            let a = fit(family, &set, &FitConfig::default()).unwrap();
            let b = fit(family, &set, &FitConfig::default()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn fit_all_covers_every_family() {
        let set = sampled(
            CurveFamily::PowerLaw,
            Params::new(3.0, 0.4, 2.0),
            (1..=10).map(|i| i * 10),
        );
        let all = fit_all(&set, &FitConfig::default()).unwrap();
        assert_eq!(all.models.len(), 4);
        let best = all
            .models
            .values()
            .map(|m| m.residual_sse)
            .fold(f64::INFINITY, f64::min);
        assert!(all.models[&CurveFamily::PowerLaw].residual_sse <= best + 1e-6);

        let tiny = RegressionSet::new(vec![(1, 10.0), (2, 12.0)]).unwrap();
        assert!(!fit_all(&tiny, &FitConfig::default())
            .unwrap()
            .models
            .is_empty());
    }
}
