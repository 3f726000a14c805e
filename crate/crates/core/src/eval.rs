//! Depth map error metrics against ground truth.

use crate::error::{Error, Result};
use crate::grid::{is_valid_depth, DepthGrid, Grid};

/// Fractions of evaluated pixels whose error is strictly below each
/// threshold. Pixels with invalid ground truth are skipped; invalid
/// estimates count as depth 0.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthErrorReport {
    pub thresholds: Vec<f64>,
    pub fractions: Vec<f64>,
    pub mean_abs_error: f64,
    pub evaluated: usize,
    pub relative: bool,
}

impl DepthErrorReport {
    pub fn fraction_at(&self, threshold: f64) -> Option<f64> {
        self.thresholds
            .iter()
            .position(|&t| t == threshold)
            .map(|i| self.fractions[i])
    }

    /// `key = value` lines.
    pub fn to_key_value(&self) -> String {
        let mut s = format!(
            "metric = {}\nevaluated = {}\nmean_abs_error = {}\n",
            if self.relative { "relative" } else { "absolute" },
            self.evaluated,
            self.mean_abs_error
        );
        for (t, f) in self.thresholds.iter().zip(&self.fractions) {
            s += &format!("fraction_below_{t} = {f}\n");
        }
        s
    }

    /// CSV rows `threshold,fraction`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,fraction\n");
        for (t, f) in self.thresholds.iter().zip(&self.fractions) {
            s += &format!("{t},{f}\n");
        }
        s
    }
}

fn evaluate(
    estimated: &DepthGrid,
    gt: &DepthGrid,
    mask: Option<&Grid<bool>>,
    thresholds: &[f64],
    relative: bool,
) -> Result<DepthErrorReport> {
    estimated.ensure_dims(gt.dims())?;
    if let Some(m) = mask {
        m.ensure_dims(gt.dims())?;
    }
    if thresholds.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::InvalidParameter("thresholds must be positive".into()));
    }
    let mut counts = vec![0usize; thresholds.len()];
    let mut evaluated = 0usize;
    let mut sum = 0.0;
    for (i, (&e, &g)) in estimated.data().iter().zip(gt.data()).enumerate() {
        if !is_valid_depth(g) || mask.is_some_and(|m| !m.data()[i]) {
            continue;
        }
        let e = if e.is_finite() { e } else { 0.0 };
        let abs = (e - g).abs();
        let err = if relative { abs / g } else { abs };
        evaluated += 1;
        sum += abs;
        for (c, &t) in counts.iter_mut().zip(thresholds) {
            if err < t {
                *c += 1;
            }
        }
    }
    let denom = evaluated.max(1) as f64;
    Ok(DepthErrorReport {
        thresholds: thresholds.to_vec(),
        fractions: counts.iter().map(|&c| c as f64 / denom).collect(),
        mean_abs_error: sum / denom,
        evaluated,
        relative,
    })
}

/// Absolute depth error report.
pub fn depth_error(estimated: &DepthGrid, gt: &DepthGrid, thresholds: &[f64]) -> Result<DepthErrorReport> {
    evaluate(estimated, gt, None, thresholds, false)
}

/// Absolute depth error restricted to `mask`.
pub fn depth_error_masked(
    estimated: &DepthGrid,
    gt: &DepthGrid,
    mask: &Grid<bool>,
    thresholds: &[f64],
) -> Result<DepthErrorReport> {
    evaluate(estimated, gt, Some(mask), thresholds, false)
}

/// Relative error `|d - d_gt| / d_gt`, optionally restricted to `mask`.
pub fn relative_depth_error(
    estimated: &DepthGrid,
    gt: &DepthGrid,
    mask: Option<&Grid<bool>>,
    thresholds: &[f64],
) -> Result<DepthErrorReport> {
    evaluate(estimated, gt, mask, thresholds, true)
}
