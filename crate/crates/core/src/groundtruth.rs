//! Piecewise-linear score curve through observed `(size, score)` anchors.
//!
//! Below the first anchor the curve is the segment through the origin, between
//! anchors it interpolates linearly, and past the last anchor it stays at the
//! last score. It serves as the oracle the simulator queries instead of
//! training a model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::curves::{evaluate, is_monotone_on, CurveFamily, Params};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveMode {
    /// Scores must be non-decreasing.
    #[default]
    Monotone,
    /// Any scores are accepted; inverse queries return the first crossing.
    NonMonotone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthCurve {
    anchors: Vec<(u64, f64)>,
    mode: CurveMode,
}

impl GroundTruthCurve {
    pub fn new(anchors: Vec<(u64, f64)>, mode: CurveMode) -> Result<Self> {
        if anchors.is_empty() {
            return Err(Error::InvalidInput(
                "a ground-truth curve needs anchors".into(),
            ));
        }
        for (i, &(n, score)) in anchors.iter().enumerate() {
            if n < 1 {
                return Err(Error::InvalidInput("anchor sizes must be >= 1".into()));
            }
            if !score.is_finite() || !(0.0..=100.0).contains(&score) {
                return Err(Error::InvalidInput(format!(
                    "anchor score {score} at n = {n} is outside [0, 100]"
                )));
            }
            if i > 0 {
                let (pn, ps) = anchors[i - 1];
                if n <= pn {
                    return Err(Error::InvalidInput(format!(
                        "anchor sizes must be strictly increasing: {n} follows {pn}"
                    )));
                }
                if mode == CurveMode::Monotone && score < ps {
                    return Err(Error::InvalidInput(format!(
                        "score drops from {ps} to {score} at n = {n}; use non-monotone mode"
                    )));
                }
            }
        }
        Ok(Self { anchors, mode })
    }

    pub fn monotone(anchors: Vec<(u64, f64)>) -> Result<Self> {
        Self::new(anchors, CurveMode::Monotone)
    }

    pub fn anchors(&self) -> &[(u64, f64)] {
        &self.anchors
    }

    pub fn mode(&self) -> CurveMode {
        self.mode
    }

    pub fn full_size(&self) -> u64 {
        self.anchors[self.anchors.len() - 1].0
    }

    pub fn final_score(&self) -> f64 {
        self.anchors[self.anchors.len() - 1].1
    }

    pub fn value(&self, n: u64) -> f64 {
        let (n0, v0) = self.anchors[0];
        if n <= n0 {
            return if n == n0 {
                v0
            } else {
                v0 / n0 as f64 * n as f64
            };
        }
        if n >= self.full_size() {
            return self.final_score();
        }
        let idx = self.anchors.partition_point(|&(m, _)| m < n);
        let (ni, vi) = self.anchors[idx];
        if ni == n {
            return vi;
        }
        let (np, vp) = self.anchors[idx - 1];
        let slope = (vi - vp) / (ni - np) as f64;
        slope * (n as f64 - ni as f64) + vi
    }

    /// Smallest total size `n` with `value(n) >= target`.
    pub fn min_required(&self, target: f64) -> Result<u64> {
        if !target.is_finite() {
            return Err(Error::InvalidInput(format!(
                "target {target} is not finite"
            )));
        }
        if target <= 0.0 {
            return Ok(0);
        }
        let hit = match self.mode {
            CurveMode::Monotone => {
                let j = self.anchors.partition_point(|&(_, s)| s < target);
                (j < self.anchors.len()).then_some(j)
            }
            CurveMode::NonMonotone => self.anchors.iter().position(|&(_, s)| s >= target),
        };
        let Some(j) = hit else {
            return Err(Error::Unreachable {
                target,
                best: self.anchors.iter().map(|a| a.1).fold(f64::MIN, f64::max),
                n_hi: self.full_size(),
            });
        };
        // The crossing lies on the segment ending at anchor j, whose start is below target.
        let (lo_n, lo_v) = if j == 0 {
            (0, 0.0)
        } else {
            self.anchors[j - 1]
        };
        let (hi_n, hi_v) = self.anchors[j];
        let x = lo_n as f64 + (target - lo_v) * (hi_n - lo_n) as f64 / (hi_v - lo_v);
        let mut k = (x.ceil().max(lo_n as f64) as u64).clamp(lo_n, hi_n);
        // Settle rounding against value() itself so the first-crossing property is exact.
        while k > lo_n && self.value(k - 1) >= target {
            k -= 1;
        }
        while self.value(k) < target {
            k += 1;
        }
        Ok(k)
    }
}

/// Build a curve by sampling a parametric model, optionally with seeded noise.
///
/// Scores are clamped to `[0, 100]`; in monotone mode noisy scores are
/// replaced by their running maximum.
pub fn synthesize(
    family: CurveFamily,
    params: Params,
    sizes: &[u64],
    noise_sd: f64,
    seed: u64,
    mode: CurveMode,
) -> Result<GroundTruthCurve> {
    if !(noise_sd.is_finite() && noise_sd >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "noise sd {noise_sd} must be >= 0"
        )));
    }
    if sizes.len() >= 2 {
        let (lo, hi) = (sizes[0] as f64, sizes[sizes.len() - 1] as f64);
        if lo < hi && !is_monotone_on(family, params, lo, hi)? {
            return Err(Error::NotMonotone {
                family,
                n_lo: lo,
                n_hi: hi,
            });
        }
    }
    let noise = Normal::new(0.0, noise_sd).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut anchors = Vec::with_capacity(sizes.len());
    let mut running = f64::MIN;
    for &n in sizes {
        let mut score = evaluate(family, params, n as f64)?;
        if noise_sd > 0.0 {
            score += noise.sample(&mut rng);
        }
        score = score.clamp(0.0, 100.0);
        if mode == CurveMode::Monotone {
            running = running.max(score);
            score = running;
        }
        anchors.push((n, score));
    }
    GroundTruthCurve::new(anchors, mode)
}
