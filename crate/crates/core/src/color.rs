//! Optical-flow colour coding on the standard 55-entry colour wheel.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::flow::FlowField;
use crate::imaging::{Frame, Grid};
use crate::math;

const SEGMENTS: [usize; 6] = [15, 6, 4, 11, 13, 6];

/// The wheel as RGB triples in `0..=255`, starting at red.
pub fn color_wheel() -> Vec<[f64; 3]> {
    let mut wheel = Vec::with_capacity(SEGMENTS.iter().sum());
    let ramp = |i: usize, n: usize| math::floor(255.0 * i as f64 / n as f64);
    let [ry, yg, gc, cb, bm, mr] = SEGMENTS;
    for i in 0..ry {
        wheel.push([255.0, ramp(i, ry), 0.0]);
    }
    for i in 0..yg {
        wheel.push([255.0 - ramp(i, yg), 255.0, 0.0]);
    }
    for i in 0..gc {
        wheel.push([0.0, 255.0, ramp(i, gc)]);
    }
    for i in 0..cb {
        wheel.push([0.0, 255.0 - ramp(i, cb), 255.0]);
    }
    for i in 0..bm {
        wheel.push([ramp(i, bm), 0.0, 255.0]);
    }
    for i in 0..mr {
        wheel.push([255.0, 0.0, 255.0 - ramp(i, mr)]);
    }
    wheel
}

/// Fully saturated colour for a hue angle in radians, channels in `[0, 1]`.
pub fn hue_color(wheel: &[[f64; 3]], hue: f64) -> [f64; 3] {
    let n = wheel.len();
    let turn = hue / (2.0 * PI);
    let pos = (turn - math::floor(turn)) * n as f64;
    let k0 = (math::floor(pos) as usize).min(n - 1);
    let k1 = (k0 + 1) % n;
    let f = pos - k0 as f64;
    let mut out = [0.0; 3];
    for c in 0..3 {
        out[c] = ((1.0 - f) * wheel[k0][c] + f * wheel[k1][c]) / 255.0;
    }
    out
}

/// Magnitude mapped to full saturation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaxMagnitude {
    Fixed(f64),
    /// 99th percentile of the field's magnitudes (1 if that is zero).
    Auto,
}

/// Resolves the saturation scale for `v`.
pub fn resolve_max_magnitude(v: &FlowField, max: MaxMagnitude) -> Result<f64> {
    match max {
        MaxMagnitude::Fixed(m) if m > 0.0 && m.is_finite() => Ok(m),
        MaxMagnitude::Fixed(_) => Err(invalid("max magnitude must be positive")),
        MaxMagnitude::Auto => {
            let mut mags: Vec<f64> = v.iter().map(|d| d.norm()).collect();
            mags.sort_by(|a, b| a.total_cmp(b));
            let idx = ((mags.len() as f64 * 0.99) as usize).min(mags.len() - 1);
            let p99 = mags[idx];
            Ok(if p99 > 0.0 { p99 } else { 1.0 })
        }
    }
}

/// Red, green and blue planes of a colour-coded flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowColors {
    pub red: Frame,
    pub green: Frame,
    pub blue: Frame,
}

impl FlowColors {
    /// Interleaved 8-bit RGB.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let (r, g, b) = (self.red.to_u8(), self.green.to_u8(), self.blue.to_u8());
        let mut out = Vec::with_capacity(r.len() * 3);
        for i in 0..r.len() {
            out.extend_from_slice(&[r[i], g[i], b[i]]);
        }
        out
    }
}

/// Hue follows `atan2(v, u)`; saturation grows with `|(u, v)| / max`,
/// clamped at 1. Zero flow is white.
pub fn colorize(v: &FlowField, max: MaxMagnitude) -> Result<FlowColors> {
    let scale = resolve_max_magnitude(v, max)?;
    let wheel = color_wheel();
    let (w, h) = v.dims();
    let mut planes = [Grid::zeros(w, h), Grid::zeros(w, h), Grid::zeros(w, h)];
    for y in 0..h {
        for x in 0..w {
            let d = v.at(x, y);
            let s = (d.norm() / scale).min(1.0);
            let base = hue_color(&wheel, math::atan2(d.y, d.x));
            for c in 0..3 {
                planes[c].set(x, y, (1.0 - s * (1.0 - base[c])).clamp(0.0, 1.0));
            }
        }
    }
    let [r, g, b] = planes;
    Ok(FlowColors {
        red: Frame::from_grid_clamped(r),
        green: Frame::from_grid_clamped(g),
        blue: Frame::from_grid_clamped(b),
    })
}
