//! Synthetic smoke-like frame pairs with analytic ground-truth flow.
//!
//! Frame one is a sum of anisotropic Gaussian blobs modulated by
//! band-limited noise on a dark background. Frame two is obtained by
//! semi-Lagrangian backward advection along a closed-form displacement
//! field, optionally followed by diffusion. The ground truth is the forward
//! displacement, anchored at frame one.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::flow::FlowField;
use crate::imaging::{gaussian_blur, Frame, Grid, Vec2};
use crate::math;

/// Width of the guaranteed-dark frame border, pixels.
pub const DARK_MARGIN: f64 = 8.0;
/// Width of the fade-in ramp inside the dark margin, pixels.
const FADE: f64 = 16.0;
const NOISE_SIGMA: f64 = 2.0;
const NOISE_AMPLITUDE: f64 = 0.3;

/// One anisotropic Gaussian blob.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blob {
    pub center: Vec2,
    pub sigma_major: f64,
    pub sigma_minor: f64,
    /// Orientation of the major axis, radians.
    pub angle: f64,
    pub amplitude: f64,
}

impl Blob {
    fn value(&self, p: Vec2) -> f64 {
        let d = p - self.center;
        let (c, s) = (math::cos(self.angle), math::sin(self.angle));
        let a = (d.x * c + d.y * s) / self.sigma_major;
        let b = (-d.x * s + d.y * c) / self.sigma_minor;
        self.amplitude * math::exp(-0.5 * (a * a + b * b))
    }
}

fn border_window(x: usize, y: usize, w: usize, h: usize) -> f64 {
    let d = (x.min(w - 1 - x).min(y).min(h - 1 - y)) as f64;
    if d < DARK_MARGIN {
        return 0.0;
    }
    let t = ((d - DARK_MARGIN) / FADE).min(1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Renders `blobs`, modulated by `1 + noise_amplitude * n` where `n` is
/// smoothed white noise scaled into `[-1, 1]`, then fades to zero at the
/// border and clamps to `[0, 1]`.
pub fn density_from_blobs(width: usize, height: usize, blobs: &[Blob], noise_amplitude: f64, seed: u64) -> Result<Frame> {
    if width == 0 || height == 0 {
        return Err(invalid("density dimensions must be positive"));
    }
    let noise = if noise_amplitude != 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let white = Grid::from_fn(width, height, |_, _| rng.random_range(-1.0..1.0));
        let smooth = gaussian_blur(&white, NOISE_SIGMA)?;
        let peak = smooth.max_abs();
        Some(if peak > 0.0 { smooth.map(|v| v / peak) } else { smooth })
    } else {
        None
    };
    let grid = Grid::from_fn(width, height, |x, y| {
        let p = Vec2::new(x as f64, y as f64);
        let mut rho: f64 = blobs.iter().map(|b| b.value(p)).sum();
        if let Some(n) = &noise {
            rho *= 1.0 + noise_amplitude * n.get(x, y);
        }
        (rho * border_window(x, y, width, height)).clamp(0.0, 1.0)
    });
    Frame::new(grid)
}

/// Random smoke-like density with `blobs` blobs; identical for equal seeds.
pub fn make_density(width: usize, height: usize, seed: u64, blobs: usize) -> Result<Frame> {
    if blobs == 0 {
        return Err(invalid("at least one blob is required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = width.min(height) as f64;
    let inset = DARK_MARGIN + FADE;
    let list: Vec<Blob> = (0..blobs)
        .map(|_| {
            let sigma_major = rng.random_range(0.06..0.14) * size;
            let sigma_minor = sigma_major * rng.random_range(0.3..0.8);
            let cx = rng.random_range(inset..(width as f64 - inset).max(inset + 1.0));
            let cy = rng.random_range(inset..(height as f64 - inset).max(inset + 1.0));
            Blob {
                center: Vec2::new(cx, cy),
                sigma_major,
                sigma_minor,
                angle: rng.random_range(0.0..core::f64::consts::PI),
                amplitude: rng.random_range(0.5..0.9),
            }
        })
        .collect();
    density_from_blobs(width, height, &list, NOISE_AMPLITUDE, seed)
}

/// Closed-form motion models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowKind {
    Translate { tx: f64, ty: f64 },
    /// Rigid rotation by `angle` radians about `center`.
    Rotate { center: Vec2, angle: f64 },
    /// Rotation by `strength * exp(-r^2 / 2 radius^2)` radians at distance
    /// `r` from `center`; area preserving.
    Vortex { center: Vec2, strength: f64, radius: f64 },
    /// Horizontal shear `u = rate * (y - cy)` about the middle row.
    Shear { rate: f64 },
}

fn rotate(p: Vec2, center: Vec2, angle: f64) -> Vec2 {
    let d = p - center;
    let (c, s) = (math::cos(angle), math::sin(angle));
    center + Vec2::new(c * d.x - s * d.y, s * d.x + c * d.y)
}

impl FlowKind {
    fn validate(&self) -> Result<()> {
        let finite = match *self {
            FlowKind::Translate { tx, ty } => tx.is_finite() && ty.is_finite(),
            FlowKind::Rotate { center, angle } => center.is_finite() && angle.is_finite(),
            FlowKind::Vortex {
                center,
                strength,
                radius,
            } => center.is_finite() && strength.is_finite() && radius.is_finite() && radius > 0.0,
            FlowKind::Shear { rate } => rate.is_finite(),
        };
        if finite {
            Ok(())
        } else {
            Err(invalid("flow parameters must be finite (vortex radius positive)"))
        }
    }

    /// Position of `p` after the motion scaled by `fraction` (negative
    /// fractions run it backwards).
    pub fn map(&self, p: Vec2, fraction: f64, dims: (usize, usize)) -> Vec2 {
        match *self {
            FlowKind::Translate { tx, ty } => p + Vec2::new(tx, ty) * fraction,
            FlowKind::Rotate { center, angle } => rotate(p, center, angle * fraction),
            FlowKind::Vortex {
                center,
                strength,
                radius,
            } => {
                let r2 = (p - center).norm_sq();
                let angle = strength * math::exp(-r2 / (2.0 * radius * radius));
                rotate(p, center, angle * fraction)
            }
            FlowKind::Shear { rate } => {
                let cy = (dims.1 as f64 - 1.0) / 2.0;
                Vec2::new(p.x + fraction * rate * (p.y - cy), p.y)
            }
        }
    }

    /// Forward displacement of the full motion at `p`.
    pub fn displacement(&self, p: Vec2, dims: (usize, usize)) -> Vec2 {
        self.map(p, 1.0, dims) - p
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSpec {
    pub kind: FlowKind,
    /// Gaussian diffusion applied after every advection step, pixels.
    pub diffusion: f64,
    pub steps: usize,
}

impl FlowSpec {
    pub fn new(kind: FlowKind) -> Self {
        FlowSpec {
            kind,
            diffusion: 0.0,
            steps: 1,
        }
    }
}

/// Frame pair with its ground-truth forward flow.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCase {
    pub f1: Frame,
    pub f2: Frame,
    pub gt: FlowField,
    pub spec: FlowSpec,
}

/// Advects `f` by `spec`: each of the `steps` sub-steps backward-samples the
/// previous frame along the inverse sub-motion, then diffuses it.
pub fn advect(f: &Frame, spec: &FlowSpec) -> Result<SynthCase> {
    spec.kind.validate()?;
    if spec.steps == 0 {
        return Err(invalid("advection needs at least one step"));
    }
    if !(spec.diffusion >= 0.0 && spec.diffusion.is_finite()) {
        return Err(invalid("diffusion must be non-negative"));
    }
    let dims = f.dims();
    let (w, h) = dims;

    let inside = |p: Vec2| p.x >= 0.0 && p.y >= 0.0 && p.x <= (w - 1) as f64 && p.y <= (h - 1) as f64;
    let any_source = (0..h).any(|y| (0..w).any(|x| inside(spec.kind.map(Vec2::new(x as f64, y as f64), -1.0, dims))));
    if !any_source {
        return Err(Error::FlowTooLarge);
    }

    let fraction = 1.0 / spec.steps as f64;
    let mut current = f.as_grid().clone();
    for _ in 0..spec.steps {
        let previous = current;
        current = Grid::from_fn(w, h, |x, y| {
            let src = spec.kind.map(Vec2::new(x as f64, y as f64), -fraction, dims);
            previous.sample_bilinear(src.x, src.y)
        });
        if spec.diffusion > 0.0 {
            current = gaussian_blur(&current, spec.diffusion)?;
        }
    }

    let gt = FlowField::from_fn(w, h, |x, y| spec.kind.displacement(Vec2::new(x as f64, y as f64), dims));
    Ok(SynthCase {
        f1: f.clone(),
        f2: Frame::from_grid_clamped(current),
        gt,
        spec: *spec,
    })
}
