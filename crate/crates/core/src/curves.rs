//! The four concave, monotone learning-curve families and the operations
//! built on them: evaluation, limits, monotonicity checks and the integer
//! inverse used to turn a target score into a data size.
//!
//! | family          | v(n; θ)                                         |
//! |-----------------|-------------------------------------------------|
//! | `PowerLaw`      | θ1·n^θ2 + θ3                                    |
//! | `Arctan`        | (200/π)·atan(θ1·(π/2)·n + θ2) + θ3              |
//! | `Logarithmic`   | θ1·ln(n + θ2) + θ3                              |
//! | `AlgebraicRoot` | 100·n / (1 + \|θ1·n\|^θ2)^(1/θ2) + θ3           |

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of probe points used when no closed-form monotonicity rule applies.
pub const MONOTONE_PROBES: usize = 64;
const MONOTONE_SLACK: f64 = -1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveFamily {
    PowerLaw,
    Arctan,
    Logarithmic,
    AlgebraicRoot,
}

impl CurveFamily {
    pub const ALL: [CurveFamily; 4] = [
        CurveFamily::PowerLaw,
        CurveFamily::Arctan,
        CurveFamily::Logarithmic,
        CurveFamily::AlgebraicRoot,
    ];

    /// Stable machine name, as used in CSV/JSON files and on the command line.
    pub fn as_str(self) -> &'static str {
        match self {
            CurveFamily::PowerLaw => "power_law",
            CurveFamily::Arctan => "arctan",
            CurveFamily::Logarithmic => "logarithmic",
            CurveFamily::AlgebraicRoot => "algebraic_root",
        }
    }

    /// Saturating families converge to a finite score as n grows.
    pub fn saturates(self) -> bool {
        matches!(self, CurveFamily::Arctan | CurveFamily::AlgebraicRoot)
    }
}

impl fmt::Display for CurveFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CurveFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        match key.as_str() {
            "power_law" | "powerlaw" | "power" => Ok(CurveFamily::PowerLaw),
            "arctan" => Ok(CurveFamily::Arctan),
            "logarithmic" | "log" => Ok(CurveFamily::Logarithmic),
            "algebraic_root" | "algebraicroot" | "root" => Ok(CurveFamily::AlgebraicRoot),
            _ => Err(Error::InvalidInput(format!("unknown curve family '{s}'"))),
        }
    }
}

/// Curve parameters: scale, shape and a score offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
}

impl Params {
    pub const fn new(theta1: f64, theta2: f64, theta3: f64) -> Self {
        Self {
            theta1,
            theta2,
            theta3,
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.theta1, self.theta2, self.theta3]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn is_finite(&self) -> bool {
        self.theta1.is_finite() && self.theta2.is_finite() && self.theta3.is_finite()
    }
}

/// Limit of a curve as n → ∞.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Supremum {
    Finite(f64),
    Unbounded,
}

/// Starting point for the fitter: product and shape terms at 1, the bias at 0.
///
/// The logarithmic shift sits inside `ln(n + θ2)`; starting it at 1 keeps the
/// initial model defined at n = 0.
pub fn initial_params(family: CurveFamily) -> Params {
    match family {
        CurveFamily::PowerLaw
        | CurveFamily::Arctan
        | CurveFamily::Logarithmic
        | CurveFamily::AlgebraicRoot => Params::new(1.0, 1.0, 0.0),
    }
}

pub fn evaluate(family: CurveFamily, params: Params, n: f64) -> Result<f64> {
    if !n.is_finite() || n < 0.0 {
        return Err(Error::Domain(format!(
            "size must be finite and >= 0, got {n}"
        )));
    }
    if !params.is_finite() {
        return Err(Error::Domain(format!("non-finite parameters {params:?}")));
    }
    let Params {
        theta1: t1,
        theta2: t2,
        theta3: t3,
    } = params;
    let value = match family {
        CurveFamily::PowerLaw => {
            if n < 0.0 && t2.fract() != 0.0 {
                return Err(Error::Domain(format!(
                    "power law with non-integer exponent {t2} at n = {n}"
                )));
            }
            t1 * n.powf(t2) + t3
        }
        CurveFamily::Arctan => (200.0 / PI) * (t1 * FRAC_PI_2 * n + t2).atan() + t3,
        CurveFamily::Logarithmic => {
            if n + t2 <= 0.0 {
                return Err(Error::Domain(format!(
                    "logarithm of non-positive argument n + theta2 = {}",
                    n + t2
                )));
            }
            t1 * (n + t2).ln() + t3
        }
        CurveFamily::AlgebraicRoot => {
            if t2 == 0.0 {
                return Err(Error::Domain("algebraic root with theta2 = 0".into()));
            }
            let base = 1.0 + (t1 * n).abs().powf(t2);
            100.0 * n / base.powf(1.0 / t2) + t3
        }
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain(format!(
            "{family} with {params:?} is not finite at n = {n}"
        )))
    }
}

/// Limit of `evaluate` as n → ∞ for a model that is non-decreasing there.
pub fn supremum(family: CurveFamily, params: Params) -> Result<Supremum> {
    let Params {
        theta1: t1,
        theta2: t2,
        theta3: t3,
    } = params;
    let decreasing = || {
        Err(Error::Domain(format!(
            "{family} with {params:?} decreases without bound"
        )))
    };
    match family {
        CurveFamily::PowerLaw => {
            if t1 == 0.0 || t2 < 0.0 {
                Ok(Supremum::Finite(t3))
            } else if t2 == 0.0 {
                Ok(Supremum::Finite(t1 + t3))
            } else if t1 > 0.0 {
                Ok(Supremum::Unbounded)
            } else {
                decreasing()
            }
        }
        CurveFamily::Arctan => {
            if t1 > 0.0 {
                Ok(Supremum::Finite(100.0 + t3))
            } else if t1 == 0.0 {
                Ok(Supremum::Finite((200.0 / PI) * t2.atan() + t3))
            } else {
                Ok(Supremum::Finite(-100.0 + t3))
            }
        }
        CurveFamily::Logarithmic => {
            if t1 > 0.0 {
                Ok(Supremum::Unbounded)
            } else if t1 == 0.0 {
                Ok(Supremum::Finite(t3))
            } else {
                decreasing()
            }
        }
        CurveFamily::AlgebraicRoot => {
            if t1 == 0.0 || t2 == 0.0 {
                Err(Error::Domain(format!(
                    "algebraic root with {params:?} has no limit"
                )))
            } else if t2 > 0.0 {
                Ok(Supremum::Finite(100.0 / t1.abs() + t3))
            } else {
                Ok(Supremum::Unbounded)
            }
        }
    }
}

/// Whether the model is non-decreasing on `[n_lo, n_hi]`.
///
/// Closed-form sign rules are used where they are exact; otherwise the curve
/// is probed on a geometric grid over `[max(n_lo, 1), n_hi]`.
pub fn is_monotone_on(family: CurveFamily, params: Params, n_lo: f64, n_hi: f64) -> Result<bool> {
    if n_lo.partial_cmp(&n_hi) != Some(std::cmp::Ordering::Less) {
        return Err(Error::InvalidInput(format!(
            "monotonicity range [{n_lo}, {n_hi}] is empty"
        )));
    }
    // Domain problems surface at the range ends for every family.
    evaluate(family, params, n_lo.max(0.0))?;
    evaluate(family, params, n_hi)?;
    match family {
        CurveFamily::PowerLaw => {
            if params.theta1 == 0.0 || params.theta2 == 0.0 {
                Ok(true)
            } else {
                Ok(params.theta1.signum() == params.theta2.signum())
            }
        }
        CurveFamily::Arctan => Ok(params.theta1 >= 0.0),
        CurveFamily::Logarithmic => Ok(params.theta1 >= 0.0),
        CurveFamily::AlgebraicRoot => probe_monotone(family, params, n_lo, n_hi),
    }
}

/// Grid check: every step between consecutive probes must be ≥ −1e-9.
pub fn probe_monotone(family: CurveFamily, params: Params, n_lo: f64, n_hi: f64) -> Result<bool> {
    let lo = n_lo.max(1.0);
    if lo >= n_hi {
        let a = evaluate(family, params, n_lo.max(0.0))?;
        let b = evaluate(family, params, n_hi)?;
        return Ok(b - a >= MONOTONE_SLACK);
    }
    let ratio = (n_hi / lo).ln() / (MONOTONE_PROBES - 1) as f64;
    let mut prev = evaluate(family, params, lo)?;
    for i in 1..MONOTONE_PROBES {
        let n = if i == MONOTONE_PROBES - 1 {
            n_hi
        } else {
            lo * (ratio * i as f64).exp()
        };
        let next = evaluate(family, params, n)?;
        if next - prev < MONOTONE_SLACK {
            return Ok(false);
        }
        prev = next;
    }
    Ok(true)
}

/// Smallest integer `n` in `[n_lo, n_hi]` with `evaluate(n) >= target`.
///
/// Bisection over the integer range; exact for models that are non-decreasing
/// there, which is checked first.
pub fn inverse_solve(
    family: CurveFamily,
    params: Params,
    target: f64,
    n_lo: u64,
    n_hi: u64,
) -> Result<u64> {
    if n_lo >= n_hi {
        return Err(Error::InvalidInput(format!(
            "inverse range [{n_lo}, {n_hi}] is empty"
        )));
    }
    if !target.is_finite() {
        return Err(Error::InvalidInput(format!(
            "target {target} is not finite"
        )));
    }
    if !is_monotone_on(family, params, n_lo as f64, n_hi as f64)? {
        return Err(Error::NotMonotone {
            family,
            n_lo: n_lo as f64,
            n_hi: n_hi as f64,
        });
    }
    let at = |n: u64| evaluate(family, params, n as f64);
    let best = at(n_hi)?;
    if best < target {
        return Err(Error::Unreachable { target, best, n_hi });
    }
    if at(n_lo)? >= target {
        return Ok(n_lo);
    }
    // invariant: at(lo) < target <= at(hi)
    let (mut lo, mut hi) = (n_lo, n_hi);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if at(mid)? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
