//! Extrapolation error of a fitted curve on held-out larger sizes.

use crate::error::{Error, Result};
use crate::fit::FittedModel;

/// Observations strictly beyond the fitting range.
#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutSet {
    points: Vec<(u64, f64)>,
}

impl HoldoutSet {
    /// `fit_max_n` is the largest size used for fitting; every holdout size must exceed it.
    pub fn new(points: Vec<(u64, f64)>, fit_max_n: u64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(&(n, _)) = points.iter().find(|&&(n, _)| n <= fit_max_n) {
            return Err(Error::InvalidInput(format!(
                "holdout size {n} overlaps the fitting range (max {fit_max_n})"
            )));
        }
        if let Some(&(n, s)) = points.iter().find(|p| !p.1.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "holdout score {s} at n = {n} is not finite"
            )));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(u64, f64)] {
        &self.points
    }
}

pub fn rmse(model: &FittedModel, holdout: &HoldoutSet) -> Result<f64> {
    let mut sum = 0.0;
    for &(n, score) in holdout.points() {
        let e = score - model.evaluate(n as f64)?;
        sum += e * e;
    }
    Ok((sum / holdout.points().len() as f64).sqrt())
}

/// Mean of `ln(prediction) − ln(score)`; negative values mean the model is pessimistic.
pub fn mean_log_ratio(model: &FittedModel, holdout: &HoldoutSet) -> Result<f64> {
    let mut sum = 0.0;
    for &(n, score) in holdout.points() {
        let predicted = model.evaluate(n as f64)?;
        if predicted <= 0.0 || score <= 0.0 {
            return Err(Error::Domain(format!(
                "log ratio needs positive values, got prediction {predicted} and score {score} at n = {n}"
            )));
        }
        sum += predicted.ln() - score.ln();
    }
    Ok(sum / holdout.points().len() as f64)
}

/// Mean and sample standard deviation (n − 1 denominator; 0 for one value).
pub fn aggregate(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let count = values.len() as f64;
    let mean = values.iter().sum::<f64>() / count;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0);
    Ok((mean, var.sqrt()))
}
