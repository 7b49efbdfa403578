//! Rate-coding feasibility analysis: how many simulation timesteps a
//! firing-rate code needs before it can represent a trained action-value
//! range at a required resolution. Tracks the observed value range, maps
//! values onto the rate grid, and computes the minimum timestep budget.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SdnError};
use crate::tensor::Tensor;

/// Observed action-value range plus the resolution the code must preserve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueRange {
    pub x_min: f64,
    pub x_max: f64,
    /// Required value resolution.
    pub acc_x: f64,
}

impl ValueRange {
    pub fn new(x_min: f64, x_max: f64, acc_x: f64) -> Result<Self> {
        if !(acc_x > 0.0) {
            return Err(SdnError::parameter("acc_x", format!("must be > 0, got {acc_x}")));
        }
        if x_min > x_max || !x_min.is_finite() || !x_max.is_finite() {
            return Err(SdnError::parameter(
                "range",
                format!("invalid range [{x_min}, {x_max}]"),
            ));
        }
        Ok(Self { x_min, x_max, acc_x })
    }

    /// Starts an empty running range that widens as values arrive.
    pub fn empty(acc_x: f64) -> Result<Self> {
        if !(acc_x > 0.0) {
            return Err(SdnError::parameter("acc_x", format!("must be > 0, got {acc_x}")));
        }
        Ok(Self { x_min: f64::INFINITY, x_max: f64::NEG_INFINITY, acc_x })
    }

    pub fn observe(&mut self, x: f64) {
        self.x_min = self.x_min.min(x);
        self.x_max = self.x_max.max(x);
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn is_empty(&self) -> bool {
        self.x_min > self.x_max
    }
}

/// Exact running extrema over a non-empty stream of value tensors.
pub fn track_range(stream: &[Tensor], acc_x: f64) -> Result<ValueRange> {
    let mut range = ValueRange::empty(acc_x)?;
    let mut saw_value = false;
    for tensor in stream {
        for &v in tensor.data() {
            range.observe(v);
            saw_value = true;
        }
    }
    if !saw_value {
        return Err(SdnError::Contract("track_range over an empty stream".into()));
    }
    Ok(range)
}

/// Maps `x` onto the firing-rate grid with `acc_fr` levels so that
/// `x_min` lands at 0: both the value and the offset are rounded to the
/// grid, and the offset is subtracted.
pub fn affine_map(x: f64, range: &ValueRange, acc_fr: u64) -> Result<f64> {
    if acc_fr == 0 {
        return Err(SdnError::parameter("acc_fr", "must be >= 1"));
    }
    let w = range.width();
    if !(w > 0.0) {
        return Err(SdnError::Contract(
            "degenerate value range carries no information; the map is undefined".into(),
        ));
    }
    let acc = acc_fr as f64;
    let z = (range.x_min / w * acc).round() / acc;
    Ok((x / w * acc).round() / acc - z)
}

/// Everything Eq-7-style feasibility reporting needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodingReport {
    /// Rate-grid denominator; equals the timestep budget.
    pub acc_fr: u64,
    /// Resolution ratio `acc_x / (x_max - x_min)`.
    pub step: f64,
    /// Minimal window length for a lossless mapping.
    pub required_timesteps: u64,
    /// `step * acc_fr` evaluated at the chosen budget; 1 when the ratio
    /// divides evenly, slightly above 1 otherwise.
    pub lossless_product: f64,
}

/// Minimum timesteps for the rate code to resolve the range at `acc_x`:
/// `ceil(width / acc_x)`, with a relative guard so ratios that are whole
/// numbers up to floating-point noise are not rounded up twice.
pub fn required_timesteps(range: &ValueRange) -> Result<CodingReport> {
    if !(range.acc_x > 0.0) {
        return Err(SdnError::parameter("acc_x", "must be > 0"));
    }
    let w = range.width();
    if !(w > 0.0) {
        return Ok(CodingReport { acc_fr: 1, step: 1.0, required_timesteps: 1, lossless_product: 1.0 });
    }
    let ratio = w / range.acc_x;
    let nearest = ratio.round();
    let required = if (ratio - nearest).abs() <= 1e-9 * ratio.max(1.0) {
        nearest as u64
    } else {
        ratio.ceil() as u64
    }
    .max(1);
    let step = range.acc_x / w;
    Ok(CodingReport {
        acc_fr: required,
        step,
        required_timesteps: required,
        lossless_product: step * required as f64,
    })
}
