//! Flow quality metrics.
//!
//! The interpolation error needs no ground truth: frame one is transported
//! by the flow and compared against frame two. Endpoint and angular errors
//! compare against a known field. All reductions are compensated so the
//! pixel order does not matter.

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::imaging::{check_dims, warp_grid, Frame, Mask};
use crate::math::{self, CompensatedSum};

/// Pixels a metric is averaged over.
#[derive(Debug, Clone, Copy)]
pub enum Region<'a> {
    Full,
    Mask(&'a Mask),
}

impl Region<'_> {
    fn contains(&self, i: usize) -> bool {
        match self {
            Region::Full => true,
            Region::Mask(m) => m.as_slice()[i],
        }
    }

    fn check(&self, dims: (usize, usize)) -> Result<()> {
        if let Region::Mask(m) = self {
            check_dims(dims, m.dims())?;
            if m.is_all_false() {
                return Err(Error::EmptyRegion);
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Region::Full => "full",
            Region::Mask(_) => "mask",
        }
    }
}

/// Prediction of frame two: frame one transported along `v`, approximated
/// by backward sampling with the negated field, `f1(x - v(x))`.
pub fn predict_second_frame(f1: &Frame, v: &FlowField) -> Result<Frame> {
    check_dims(f1.dims(), v.dims())?;
    Ok(Frame::from_grid_clamped(warp_grid(f1, v, -1.0)))
}

/// Root-mean-square intensity difference between the predicted and the real
/// second frame over `region`, on the `[0, 1]` scale.
pub fn interpolation_error(f1: &Frame, f2: &Frame, v: &FlowField, region: Region<'_>) -> Result<f64> {
    check_dims(f1.dims(), f2.dims())?;
    region.check(f1.dims())?;
    let predicted = predict_second_frame(f1, v)?;
    let mut acc = CompensatedSum::default();
    let mut n = 0usize;
    for (i, (&p, &t)) in predicted.as_slice().iter().zip(f2.as_slice()).enumerate() {
        if region.contains(i) {
            acc.add((p - t) * (p - t));
            n += 1;
        }
    }
    Ok(math::sqrt(acc.total() / n as f64))
}

/// Mean and maximum of `|v - gt|` over `region`.
pub fn endpoint_error(v: &FlowField, gt: &FlowField, region: Region<'_>) -> Result<(f64, f64)> {
    check_dims(v.dims(), gt.dims())?;
    region.check(v.dims())?;
    let mut acc = CompensatedSum::default();
    let mut max = 0.0_f64;
    let mut n = 0usize;
    for (i, (a, b)) in v.iter().zip(gt.iter()).enumerate() {
        if region.contains(i) {
            let e = (a - b).norm();
            acc.add(e);
            max = max.max(e);
            n += 1;
        }
    }
    Ok((acc.total() / n as f64, max))
}

/// Mean angle in radians between the space-time vectors `(u, v, 1)`,
/// `acos(((u, v, 1) . (u', v', 1)) / (|(u, v, 1)| |(u', v', 1)|))`. It is
/// evaluated through `atan2(|a x b|, a . b)`, which stays accurate for
/// nearly parallel vectors.
pub fn angular_error(v: &FlowField, gt: &FlowField, region: Region<'_>) -> Result<f64> {
    check_dims(v.dims(), gt.dims())?;
    region.check(v.dims())?;
    let mut acc = CompensatedSum::default();
    let mut n = 0usize;
    for (i, (a, b)) in v.iter().zip(gt.iter()).enumerate() {
        if region.contains(i) {
            let dot = a.x * b.x + a.y * b.y + 1.0;
            let cx = a.y - b.y;
            let cy = b.x - a.x;
            let cz = a.x * b.y - a.y * b.x;
            let cross = math::sqrt(cx * cx + cy * cy + cz * cz);
            acc.add(math::atan2(cross, dot));
            n += 1;
        }
    }
    Ok(acc.total() / n as f64)
}

/// Metrics of one flow estimate. Ground-truth terms are `None` without a
/// reference field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub ie: Option<f64>,
    pub ee_mean: Option<f64>,
    pub ee_max: Option<f64>,
    pub ae_mean: Option<f64>,
    pub region: &'static str,
}

/// Evaluates whatever the inputs allow: IE needs both frames, EE and AE
/// need the ground truth.
pub fn evaluate(
    v: &FlowField,
    frames: Option<(&Frame, &Frame)>,
    gt: Option<&FlowField>,
    region: Region<'_>,
) -> Result<MetricReport> {
    let ie = frames
        .map(|(f1, f2)| interpolation_error(f1, f2, v, region))
        .transpose()?;
    let ee = gt.map(|g| endpoint_error(v, g, region)).transpose()?;
    let ae = gt.map(|g| angular_error(v, g, region)).transpose()?;
    Ok(MetricReport {
        ie,
        ee_mean: ee.map(|e| e.0),
        ee_max: ee.map(|e| e.1),
        ae_mean: ae,
        region: region.name(),
    })
}
