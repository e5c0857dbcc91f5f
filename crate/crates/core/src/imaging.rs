//! Raster types and the low-level image operations shared by every stage.
//!
//! Coordinates follow the image convention: `x` grows along columns to the
//! right, `y` grows along rows downwards. Grids are stored row-major.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Deref, Mul, Neg, Sub};

use crate::error::{invalid, Error, Result};
use crate::flow::FlowField;
use crate::math;

/// A 2D displacement or position in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        math::hypot(self.x, self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    /// Counter-clockwise rotation by 90 degrees in the x/y plane.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Dense row-major grid of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Grid {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Wraps a row-major buffer. Rejects empty dimensions, a length mismatch
    /// and non-finite samples.
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid("grid dimensions must be positive"));
        }
        if data.len() != width * height {
            return Err(invalid("grid buffer length does not match dimensions"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid"));
        }
        Ok(Grid {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Grid {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    /// Sample with signed coordinates clamped to the border.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.get(cx, cy)
    }

    /// Bilinear sample at a real position; positions outside the image are
    /// clamped onto the border first.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let xc = x.clamp(0.0, (self.width - 1) as f64);
        let yc = y.clamp(0.0, (self.height - 1) as f64);
        let (x0, fx) = split_coord(xc, self.width);
        let (y0, fy) = split_coord(yc, self.height);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn sum(&self) -> f64 {
        let mut acc = math::CompensatedSum::default();
        for &v in &self.data {
            acc.add(v);
        }
        acc.total()
    }
}

// Integer cell and fractional offset of a clamped coordinate.
#[inline]
fn split_coord(c: f64, extent: usize) -> (usize, f64) {
    if extent == 1 {
        return (0, 0.0);
    }
    let base = (math::floor(c) as usize).min(extent - 2);
    (base, c - base as f64)
}

/// Single-channel intensity image with samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame(Grid);

impl Frame {
    pub fn new(grid: Grid) -> Result<Self> {
        if grid.data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("frame intensities must lie in [0, 1]"));
        }
        Ok(Frame(grid))
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        Frame::new(Grid::from_vec(width, height, data)?)
    }

    /// Clamps every sample into `[0, 1]`.
    pub fn from_grid_clamped(grid: Grid) -> Self {
        Frame(grid.map(|v| v.clamp(0.0, 1.0)))
    }

    /// Builds a frame from 8-bit samples, mapping 0..255 onto 0..1.
    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Frame::from_vec(width, height, bytes.iter().map(|&b| b as f64 / 255.0).collect())
    }

    /// Converts to 8-bit samples (`round(v * 255)`).
    pub fn to_u8(&self) -> Vec<u8> {
        self.0
            .data
            .iter()
            .map(|&v| math::round(v * 255.0) as u8)
            .collect()
    }

    pub fn as_grid(&self) -> &Grid {
        &self.0
    }

    pub fn into_grid(self) -> Grid {
        self.0
    }
}

impl Deref for Frame {
    type Target = Grid;
    fn deref(&self) -> &Grid {
        &self.0
    }
}

/// Per-pixel boolean mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, value: bool) -> Self {
        Mask {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Mask {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_all_false(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }
}

pub(crate) fn check_dims(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Default segmentation threshold on the 8-bit intensity scale.
pub const DEFAULT_EPSILON: f64 = 1.0;

/// Smoke segmentation for dark backgrounds: a pixel is smoke iff its 8-bit
/// intensity exceeds `epsilon`.
pub fn threshold_mask(f: &Frame, epsilon: f64) -> Mask {
    Mask {
        width: f.width(),
        height: f.height(),
        data: f.as_slice().iter().map(|&v| v * 255.0 > epsilon).collect(),
    }
}

/// Normalized Gaussian taps for offsets `-r..=r`, `r = ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(invalid("gaussian sigma must be positive"));
    }
    let radius = math::ceil(3.0 * sigma) as isize;
    let denom = 2.0 * sigma * sigma;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| math::exp(-((i * i) as f64) / denom))
        .collect();
    let total: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= total;
    }
    Ok(taps)
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur(f: &Grid, sigma: f64) -> Result<Grid> {
    let taps = gaussian_kernel(sigma)?;
    let radius = (taps.len() / 2) as isize;
    let (w, h) = f.dims();

    let mut horizontal = Grid::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * f.get_clamped(x as isize + k as isize - radius, y as isize);
            }
            horizontal.set(x, y, acc);
        }
    }

    let mut out = Grid::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * horizontal.get_clamped(x as isize, y as isize + k as isize - radius);
            }
            out.set(x, y, acc);
        }
    }
    Ok(out)
}

/// Gaussian blur of an intensity frame; the result stays in `[0, 1]`.
pub fn blur_frame(f: &Frame, sigma: f64) -> Result<Frame> {
    Ok(Frame::from_grid_clamped(gaussian_blur(f, sigma)?))
}

/// Central differences inside, one-sided differences on the border.
/// Returns `(d/dx, d/dy)`.
pub fn gradient(f: &Grid) -> (Grid, Grid) {
    let (w, h) = f.dims();
    let dx = Grid::from_fn(w, h, |x, y| diff_along(w, x, |i| f.get(i, y)));
    let dy = Grid::from_fn(w, h, |x, y| diff_along(h, y, |j| f.get(x, j)));
    (dx, dy)
}

#[inline]
fn diff_along(n: usize, i: usize, at: impl Fn(usize) -> f64) -> f64 {
    if n < 2 {
        0.0
    } else if i == 0 {
        at(1) - at(0)
    } else if i == n - 1 {
        at(n - 1) - at(n - 2)
    } else {
        0.5 * (at(i + 1) - at(i - 1))
    }
}

/// Backward warp: `result(x) = f2(x + v(x))`, bilinear, border-clamped.
pub fn warp_backward(f2: &Frame, v: &FlowField) -> Result<Frame> {
    check_dims(f2.dims(), v.dims())?;
    Ok(Frame(warp_grid(f2, v, 1.0)))
}

/// Samples `g` at `x + scale * v(x)` for every pixel.
pub(crate) fn warp_grid(g: &Grid, v: &FlowField, scale: f64) -> Grid {
    Grid::from_fn(g.width(), g.height(), |x, y| {
        let d = v.at(x, y);
        g.sample_bilinear(x as f64 + scale * d.x, y as f64 + scale * d.y)
    })
}
