//! Sparse motion by skeletal attraction.
//!
//! Each skeletal point `x` of frame one is attracted by the skeletal points
//! `y` of frame two with weight
//!
//! ```text
//! w(y) = N(x | y, C_y) * exp(-(h(x) - h(y))^2 / (2 sigma_v^2))
//! ```
//!
//! where `C_y` is an anisotropic covariance aligned with the skeleton at
//! `y`: standard deviation `sigma` across the line and `sigma * eta` along
//! it. The destination of `x` is the expectation of `y` under the normalized
//! weights. It need not lie on the skeleton, and points whose best weight
//! is negligible map to nothing and are dropped.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::imaging::{check_dims, Vec2};
use crate::math;
use crate::skeleton::{MultiScaleSkeleton, SkeletalPoint};

pub const DEFAULT_SIGMA_SPATIAL: f64 = 5.0;
pub const DEFAULT_ETA: f64 = 0.1;

/// Mahalanobis distance beyond which a destination counts as unreachable.
pub const FILTER_MAHALANOBIS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttractionParams {
    /// Standard deviation across the skeleton line, pixels.
    pub sigma_spatial: f64,
    /// Tangential squash factor, `0 < eta <= 1`.
    pub eta: f64,
    /// Scale of the stability-difference term.
    pub sigma_v: f64,
    /// Points whose largest unnormalized weight falls below this are dropped.
    pub min_weight: f64,
    /// Candidate cutoff in pixels; `f64::INFINITY` scans the whole skeleton.
    pub neighbor_radius: f64,
}

impl AttractionParams {
    /// Derived defaults: the filter level is the spatial density at
    /// Mahalanobis distance 3 and candidates are cut off at `3 sigma`.
    pub fn new(sigma_spatial: f64, eta: f64, sigma_v: f64) -> Self {
        AttractionParams {
            sigma_spatial,
            eta,
            sigma_v,
            min_weight: density_at_mahalanobis(sigma_spatial, eta, FILTER_MAHALANOBIS),
            neighbor_radius: 3.0 * sigma_spatial,
        }
    }

    /// Defaults for a skeleton built from `scale_count` scales, with
    /// `sigma_v = 2 / (N - 1)`.
    pub fn for_scale_count(scale_count: usize) -> Self {
        let sigma_v = 2.0 / (scale_count.max(2) - 1) as f64;
        Self::new(DEFAULT_SIGMA_SPATIAL, DEFAULT_ETA, sigma_v)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_spatial > 0.0 && self.sigma_spatial.is_finite()) {
            return Err(invalid("sigma_spatial must be positive"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(invalid("eta must lie in (0, 1]"));
        }
        if !(self.sigma_v > 0.0 && self.sigma_v.is_finite()) {
            return Err(invalid("sigma_v must be positive"));
        }
        if !(self.min_weight >= 0.0) {
            return Err(invalid("min_weight must be non-negative"));
        }
        if !(self.neighbor_radius > 0.0) {
            return Err(invalid("neighbor_radius must be positive"));
        }
        Ok(())
    }
}

impl Default for AttractionParams {
    fn default() -> Self {
        Self::for_scale_count(5)
    }
}

/// Density of the attraction Gaussian at Mahalanobis distance `k`.
pub fn density_at_mahalanobis(sigma_spatial: f64, eta: f64, k: f64) -> f64 {
    math::exp(-0.5 * k * k) / (2.0 * PI * sigma_spatial * sigma_spatial * eta)
}

/// Symmetric 2x2 matrix `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn is_positive_definite(&self) -> bool {
        self.xx > 0.0 && self.det() > 0.0
    }
}

/// `C_y = U diag(sigma^2, (sigma eta)^2) U^T` with `U = [normal, tangent]`.
pub fn covariance_at(y: &SkeletalPoint, params: &AttractionParams) -> Sym2 {
    let across = params.sigma_spatial * params.sigma_spatial;
    let along = across * params.eta * params.eta;
    let (n, t) = (y.normal, y.tangent);
    Sym2 {
        xx: across * n.x * n.x + along * t.x * t.x,
        xy: across * n.x * n.y + along * t.x * t.y,
        yy: across * n.y * n.y + along * t.y * t.y,
    }
}

// Unnormalized bilateral weight of candidate `y` for anchor `x`.
#[inline]
fn bilateral_weight(x: &SkeletalPoint, y: &SkeletalPoint, params: &AttractionParams, norm: f64) -> f64 {
    let d = x.pos - y.pos;
    let across = d.dot(y.normal) / params.sigma_spatial;
    let along = d.dot(y.tangent) / (params.sigma_spatial * params.eta);
    let spatial = norm * math::exp(-0.5 * (across * across + along * along));
    let dh = (x.stability - y.stability) / params.sigma_v;
    spatial * math::exp(-0.5 * dh * dh)
}

fn raw_weights<'a>(
    x: &SkeletalPoint,
    candidates: impl Iterator<Item = &'a SkeletalPoint>,
    params: &AttractionParams,
    out: &mut Vec<f64>,
) -> bool {
    out.clear();
    let norm = 1.0 / (2.0 * PI * params.sigma_spatial * params.sigma_spatial * params.eta);
    let mut max = 0.0_f64;
    let mut total = 0.0;
    for y in candidates {
        let w = bilateral_weight(x, y, params, norm);
        max = max.max(w);
        total += w;
        out.push(w);
    }
    if !(total > 0.0) || !total.is_finite() || max < params.min_weight {
        return false;
    }
    for w in out.iter_mut() {
        *w /= total;
    }
    true
}

/// Conditional probabilities `p(y | x)` over `candidates`, in order. `None`
/// when the point maps to nothing: no candidates, vanishing total weight, or
/// a largest unnormalized weight below `min_weight`.
pub fn attraction_weights(
    x: &SkeletalPoint,
    candidates: &[SkeletalPoint],
    params: &AttractionParams,
) -> Option<Vec<f64>> {
    let mut p = Vec::with_capacity(candidates.len());
    raw_weights(x, candidates.iter(), params, &mut p).then_some(p)
}

/// `E[y | x]`, or `None` when `x` is filtered.
pub fn expected_destination(
    x: &SkeletalPoint,
    candidates: &[SkeletalPoint],
    params: &AttractionParams,
) -> Option<Vec2> {
    let p = attraction_weights(x, candidates, params)?;
    Some(weighted_mean(candidates.iter(), &p))
}

fn weighted_mean<'a>(points: impl Iterator<Item = &'a SkeletalPoint>, p: &[f64]) -> Vec2 {
    let mut e = Vec2::ZERO;
    for (y, &w) in points.zip(p) {
        e += y.pos * w;
    }
    e
}

/// One displacement sample anchored at a frame-one skeletal pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseSample {
    pub anchor: Vec2,
    pub displacement: Vec2,
    pub stability: f64,
}

/// Displacement samples on the frame-one skeleton, sorted row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFlow {
    pub width: usize,
    pub height: usize,
    pub samples: Vec<SparseSample>,
    /// Frame-one points dropped as mapping to nothing.
    pub filtered: usize,
}

impl SparseFlow {
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }
}

// Uniform bucket grid over the destination skeleton.
struct CandidateIndex<'a> {
    points: &'a [SkeletalPoint],
    cell: f64,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<u32>>,
}

impl<'a> CandidateIndex<'a> {
    fn new(points: &'a [SkeletalPoint], width: usize, height: usize, radius: f64) -> Self {
        let extent = width.max(height) as f64;
        let cell = if radius.is_finite() && radius < extent {
            radius.max(1.0)
        } else {
            extent.max(1.0)
        };
        let cols = (math::ceil(width as f64 / cell) as usize).max(1);
        let rows = (math::ceil(height as f64 / cell) as usize).max(1);
        let mut buckets = vec![Vec::new(); cols * rows];
        for (i, p) in points.iter().enumerate() {
            let (cx, cy) = Self::cell_of(p.pos, cell, cols, rows);
            buckets[cy * cols + cx].push(i as u32);
        }
        CandidateIndex {
            points,
            cell,
            cols,
            rows,
            buckets,
        }
    }

    fn cell_of(pos: Vec2, cell: f64, cols: usize, rows: usize) -> (usize, usize) {
        let cx = (math::floor(pos.x / cell).max(0.0) as usize).min(cols - 1);
        let cy = (math::floor(pos.y / cell).max(0.0) as usize).min(rows - 1);
        (cx, cy)
    }

    fn gather(&self, at: Vec2, radius: f64, out: &mut Vec<u32>) {
        out.clear();
        let span = if radius.is_finite() {
            math::ceil(radius / self.cell) as isize
        } else {
            self.cols.max(self.rows) as isize
        };
        let (cx, cy) = Self::cell_of(at, self.cell, self.cols, self.rows);
        let r2 = radius * radius;
        for by in (cy as isize - span).max(0)..=(cy as isize + span).min(self.rows as isize - 1) {
            for bx in (cx as isize - span).max(0)..=(cx as isize + span).min(self.cols as isize - 1) {
                for &i in &self.buckets[by as usize * self.cols + bx as usize] {
                    if (self.points[i as usize].pos - at).norm_sq() <= r2 {
                        out.push(i);
                    }
                }
            }
        }
        out.sort_unstable();
    }
}

/// Attracts every point of `s1` to `s2` and returns the displacements of
/// the points that are not filtered. An empty `s2` yields an empty result.
pub fn estimate_sparse(
    s1: &MultiScaleSkeleton,
    s2: &MultiScaleSkeleton,
    params: &AttractionParams,
) -> Result<SparseFlow> {
    params.validate()?;
    check_dims(s1.dims(), s2.dims())?;
    let (width, height) = s1.dims();
    let mut flow = SparseFlow {
        width,
        height,
        samples: Vec::new(),
        filtered: 0,
    };
    if s2.is_empty() {
        return Ok(flow);
    }

    let index = CandidateIndex::new(s2.points(), width, height, params.neighbor_radius);
    let mut ids = Vec::new();
    let mut weights = Vec::new();
    for x in s1.points() {
        index.gather(x.pos, params.neighbor_radius, &mut ids);
        let candidates = ids.iter().map(|&i| &s2.points()[i as usize]);
        if raw_weights(x, candidates.clone(), params, &mut weights) {
            let destination = weighted_mean(candidates, &weights);
            flow.samples.push(SparseSample {
                anchor: x.pos,
                displacement: destination - x.pos,
                stability: x.stability,
            });
        } else {
            flow.filtered += 1;
        }
    }
    Ok(flow)
}
