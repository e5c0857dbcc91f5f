//! Dense displacement fields.

use crate::error::{Error, Result};
use crate::imaging::{check_dims, Grid, Vec2};

/// Per-pixel displacement `(u, v)` in pixels, anchored at frame one.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    u: Grid,
    v: Grid,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            u: Grid::zeros(width, height),
            v: Grid::zeros(width, height),
        }
    }

    pub fn constant(width: usize, height: usize, d: Vec2) -> Self {
        FlowField {
            u: Grid::filled(width, height, d.x),
            v: Grid::filled(width, height, d.y),
        }
    }

    pub fn from_components(u: Grid, v: Grid) -> Result<Self> {
        check_dims(u.dims(), v.dims())?;
        if u.as_slice().iter().chain(v.as_slice()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("flow field"));
        }
        Ok(FlowField { u, v })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Vec2) -> Self {
        let mut u = Grid::zeros(width, height);
        let mut v = Grid::zeros(width, height);
        for y in 0..height {
            for x in 0..width {
                let d = f(x, y);
                u.set(x, y, d.x);
                v.set(x, y, d.y);
            }
        }
        FlowField { u, v }
    }

    pub fn width(&self) -> usize {
        self.u.width()
    }

    pub fn height(&self) -> usize {
        self.u.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.u.dims()
    }

    pub fn u(&self) -> &Grid {
        &self.u
    }

    pub fn v(&self) -> &Grid {
        &self.v
    }

    pub fn into_components(self) -> (Grid, Grid) {
        (self.u, self.v)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> Vec2 {
        Vec2::new(self.u.get(x, y), self.v.get(x, y))
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, d: Vec2) {
        self.u.set(x, y, d.x);
        self.v.set(x, y, d.y);
    }

    pub fn is_finite(&self) -> bool {
        self.u
            .as_slice()
            .iter()
            .chain(self.v.as_slice())
            .all(|x| x.is_finite())
    }

    pub fn scaled(&self, factor: f64) -> FlowField {
        FlowField {
            u: self.u.map(|x| x * factor),
            v: self.v.map(|x| x * factor),
        }
    }

    /// Largest component magnitude, i.e. the infinity norm over all samples.
    pub fn max_abs(&self) -> f64 {
        self.u.max_abs().max(self.v.max_abs())
    }

    pub fn iter(&self) -> impl Iterator<Item = Vec2> + '_ {
        self.u
            .as_slice()
            .iter()
            .zip(self.v.as_slice())
            .map(|(&u, &v)| Vec2::new(u, v))
    }
}
