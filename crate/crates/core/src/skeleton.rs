//! Multi-scale ridge skeletons of smoke density.
//!
//! A ridge at scale `sigma` is a pixel of the blurred frame that is a strict
//! local maximum along `x` or along `y`. Averaging the binary ridge maps of
//! `N` scales gives the compound skeleton `h`, whose value at a pixel is the
//! fraction of scales at which that pixel is a ridge. Pixels that survive
//! many scales are the stable structures of the smoke.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::imaging::{check_dims, gaussian_blur, Frame, Grid, Mask, Vec2};
use crate::math;

/// Radius (pixels) of the neighbourhood used to fit local frames.
pub const DEFAULT_FRAME_RADIUS: f64 = 5.0;

/// Eigenvalue ratio below which a neighbourhood counts as isotropic.
const ISOTROPY_RATIO: f64 = 1.05;

/// Strictly increasing blur scales, at least two.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleSet {
    sigmas: Vec<f64>,
}

impl ScaleSet {
    pub fn new(sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.len() < 2 {
            return Err(invalid("scale set needs at least two scales"));
        }
        if sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(invalid("scales must be positive and finite"));
        }
        if sigmas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("scales must be strictly increasing"));
        }
        Ok(ScaleSet { sigmas })
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn count(&self) -> usize {
        self.sigmas.len()
    }
}

impl Default for ScaleSet {
    /// Octave spacing from local detail to global structure.
    fn default() -> Self {
        ScaleSet {
            sigmas: vec![2.0, 4.0, 8.0, 16.0, 32.0],
        }
    }
}

/// A pixel of the compound skeleton with its local orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkeletalPoint {
    /// Integer pixel centre.
    pub pos: Vec2,
    /// Fraction of scales at which the pixel is a ridge, in `(0, 1]`.
    pub stability: f64,
    pub tangent: Vec2,
    /// `tangent` rotated by +90 degrees.
    pub normal: Vec2,
}

/// Compound skeleton: per-pixel ridge counts over all scales plus the
/// extracted points in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiScaleSkeleton {
    width: usize,
    height: usize,
    scale_count: usize,
    hits: Vec<u16>,
    points: Vec<SkeletalPoint>,
}

impl MultiScaleSkeleton {
    /// Assembles a skeleton from explicit points, e.g. a hand-drawn one.
    /// Every stability must sit on the `{1/N, ..., 1}` lattice and every
    /// position must be a distinct in-bounds pixel centre.
    pub fn from_points(
        width: usize,
        height: usize,
        scale_count: usize,
        mut points: Vec<SkeletalPoint>,
    ) -> Result<Self> {
        if scale_count == 0 || scale_count > u16::MAX as usize {
            return Err(invalid("scale count out of range"));
        }
        let mut hits = vec![0u16; width * height];
        for p in &points {
            let (x, y) = (p.pos.x, p.pos.y);
            if x < 0.0 || y < 0.0 || x != math::floor(x) || y != math::floor(y) {
                return Err(invalid("skeletal points must sit on pixel centres"));
            }
            let (xi, yi) = (x as usize, y as usize);
            if xi >= width || yi >= height {
                return Err(invalid("skeletal point outside the frame"));
            }
            let level = p.stability * scale_count as f64;
            let count = math::round(level);
            if !(count >= 1.0 && count <= scale_count as f64) || (level - count).abs() > 1e-9 {
                return Err(invalid("stability is not on the scale lattice"));
            }
            let slot = &mut hits[yi * width + xi];
            if *slot != 0 {
                return Err(invalid("duplicate skeletal point"));
            }
            *slot = count as u16;
        }
        points.sort_by(|a, b| (a.pos.y, a.pos.x).partial_cmp(&(b.pos.y, b.pos.x)).unwrap());
        Ok(MultiScaleSkeleton {
            width,
            height,
            scale_count,
            hits,
            points,
        })
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

    pub fn scale_count(&self) -> usize {
        self.scale_count
    }

    /// Number of scales at which `(x, y)` is a ridge.
    pub fn hits(&self, x: usize, y: usize) -> usize {
        self.hits[y * self.width + x] as usize
    }

    /// `h(x) = hits / N`, on the lattice `{0, 1/N, ..., 1}`.
    pub fn stability(&self, x: usize, y: usize) -> f64 {
        self.hits(x, y) as f64 / self.scale_count as f64
    }

    pub fn stability_grid(&self) -> Grid {
        Grid::from_fn(self.width, self.height, |x, y| self.stability(x, y))
    }

    /// Pixels with `h > 0`.
    pub fn support(&self) -> Mask {
        Mask::from_fn(self.width, self.height, |x, y| self.hits(x, y) > 0)
    }

    pub fn points(&self) -> &[SkeletalPoint] {
        &self.points
    }

    /// True when no pixel is a ridge at any scale, e.g. for an empty mask.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Stability map quantized to 8 bits, `round(h * 255)`.
    pub fn stability_u8(&self) -> Vec<u8> {
        self.hits
            .iter()
            .map(|&c| math::round(c as f64 / self.scale_count as f64 * 255.0) as u8)
            .collect()
    }
}

/// Marks pixels of `g` inside `mask` that are strict local maxima along the
/// `x` or the `y` axis. An axis without two neighbours cannot qualify.
pub fn detect_ridges(g: &Grid, mask: &Mask) -> Result<Mask> {
    check_dims(g.dims(), mask.dims())?;
    let (w, h) = g.dims();
    Ok(Mask::from_fn(w, h, |x, y| {
        if !mask.get(x, y) {
            return false;
        }
        let c = g.get(x, y);
        let along_x = x > 0 && x + 1 < w && c > g.get(x - 1, y) && c > g.get(x + 1, y);
        let along_y = y > 0 && y + 1 < h && c > g.get(x, y - 1) && c > g.get(x, y + 1);
        along_x || along_y
    }))
}

/// Aggregates the per-scale ridge maps of `f` (restricted to `mask`) into a
/// compound skeleton and fits a tangent/normal frame at every point.
pub fn build_skeleton(f: &Frame, mask: &Mask, scales: &ScaleSet) -> Result<MultiScaleSkeleton> {
    check_dims(f.dims(), mask.dims())?;
    let (w, h) = f.dims();
    let mut hits = vec![0u16; w * h];
    if !mask.is_all_false() {
        for &sigma in scales.sigmas() {
            let blurred = gaussian_blur(f, sigma)?;
            let ridges = detect_ridges(&blurred, mask)?;
            for (count, &on) in hits.iter_mut().zip(ridges.as_slice()) {
                *count += on as u16;
            }
        }
    }

    let mut skeleton = MultiScaleSkeleton {
        width: w,
        height: h,
        scale_count: scales.count(),
        hits,
        points: Vec::new(),
    };
    let support = skeleton.support();
    let mut points = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if support.get(x, y) {
                let (tangent, normal) = estimate_frames(&support, x, y, DEFAULT_FRAME_RADIUS);
                points.push(SkeletalPoint {
                    pos: Vec2::new(x as f64, y as f64),
                    stability: skeleton.stability(x, y),
                    tangent,
                    normal,
                });
            }
        }
    }
    skeleton.points = points;
    Ok(skeleton)
}

/// Local `(tangent, normal)` at `(x, y)` from the principal axis of the
/// ridge pixels within `radius`. Falls back to a horizontal tangent when the
/// neighbourhood has fewer than two pixels or no dominant direction.
///
/// The tangent sign is canonical: positive `x`, or positive `y` when
/// vertical. The normal is the tangent rotated by +90 degrees.
pub fn estimate_frames(ridge: &Mask, x: usize, y: usize, radius: f64) -> (Vec2, Vec2) {
    let fallback = (Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0));
    let r = math::floor(radius.max(0.0)) as isize;
    let r2 = radius * radius;
    let (w, h) = ridge.dims();

    let mut offsets: Vec<(f64, f64)> = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            let (px, py) = (x as isize + dx, y as isize + dy);
            if px < 0 || py < 0 || px >= w as isize || py >= h as isize {
                continue;
            }
            if ((dx * dx + dy * dy) as f64) <= r2 && ridge.get(px as usize, py as usize) {
                offsets.push((dx as f64, dy as f64));
            }
        }
    }
    if offsets.len() < 2 {
        return fallback;
    }

    let n = offsets.len() as f64;
    let mx = offsets.iter().map(|o| o.0).sum::<f64>() / n;
    let my = offsets.iter().map(|o| o.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(ox, oy) in &offsets {
        let (cx, cy) = (ox - mx, oy - my);
        sxx += cx * cx;
        sxy += cx * cy;
        syy += cy * cy;
    }

    let mean = 0.5 * (sxx + syy);
    let spread = math::hypot(0.5 * (sxx - syy), sxy);
    let major = mean + spread;
    let minor = mean - spread;
    if !(major > 0.0) || (minor > 0.0 && major / minor < ISOTROPY_RATIO) {
        return fallback;
    }

    let theta = 0.5 * math::atan2(2.0 * sxy, sxx - syy);
    let mut tangent = Vec2::new(math::cos(theta), math::sin(theta));
    if tangent.x < 0.0 || (tangent.x == 0.0 && tangent.y < 0.0) {
        tangent = -tangent;
    }
    let tangent = tangent * (1.0 / tangent.norm());
    (tangent, tangent.perp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::{FRAC_1_SQRT_2, PI};

    fn lcg_grid(w: usize, h: usize, seed: u64) -> Grid {
        let mut s = seed;
        Grid::from_fn(w, h, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 33) % 8) as f64 / 7.0
        })
    }

    #[test]
    fn scale_set_validation() {
        assert!(ScaleSet::new(vec![1.0]).is_err());
        assert!(ScaleSet::new(vec![2.0, 2.0]).is_err());
        assert!(ScaleSet::new(vec![4.0, 2.0]).is_err());
        assert!(ScaleSet::new(vec![0.0, 2.0]).is_err());
        assert_eq!(ScaleSet::default().count(), 5);
    }

    #[test]
    fn horizontal_line_is_its_own_ridge() {
        let g = Grid::from_fn(9, 7, |_, y| if y == 3 { 1.0 } else { 0.0 });
        let ridges = detect_ridges(&g, &Mask::new(9, 7, true)).unwrap();
        for y in 0..7 {
            for x in 0..9 {
                assert_eq!(ridges.get(x, y), y == 3, "({x},{y})");
            }
        }
    }

    #[test]
    fn constant_frame_has_no_ridges() {
        let g = Grid::filled(6, 6, 0.5);
        assert!(detect_ridges(&g, &Mask::new(6, 6, true)).unwrap().is_all_false());
    }

    #[test]
    fn ridges_respect_mask() {
        let g = Grid::from_fn(5, 5, |_, y| if y == 2 { 1.0 } else { 0.0 });
        let mask = Mask::from_fn(5, 5, |x, _| x < 2);
        let ridges = detect_ridges(&g, &mask).unwrap();
        assert_eq!(ridges.count(), 2);
    }

    #[test]
    fn ridges_match_neighbour_oracle() {
        for seed in 0..20u64 {
            let g = lcg_grid(7, 7, seed);
            let ridges = detect_ridges(&g, &Mask::new(7, 7, true)).unwrap();
            for y in 0..7i32 {
                for x in 0..7i32 {
                    let at = |a: i32, b: i32| -> Option<f64> {
                        ((0..7).contains(&a) && (0..7).contains(&b)).then(|| g.get(a as usize, b as usize))
                    };
                    let c = at(x, y).unwrap();
                    let beats = |p: Option<f64>, q: Option<f64>| matches!((p, q), (Some(p), Some(q)) if c > p && c > q);
                    let expected = beats(at(x - 1, y), at(x + 1, y)) || beats(at(x, y - 1), at(x, y + 1));
                    assert_eq!(ridges.get(x as usize, y as usize), expected);
                }
            }
        }
    }

    #[test]
    fn ridges_invariant_to_offset_and_equivariant_to_rotation() {
        let g = lcg_grid(6, 4, 17);
        let all = Mask::new(6, 4, true);
        let base = detect_ridges(&g, &all).unwrap();
        let shifted = detect_ridges(&g.map(|v| v + 0.25), &all).unwrap();
        assert_eq!(base, shifted);

        // Rotate by 90 degrees: (x, y) -> (h - 1 - y, x).
        let rotated = Grid::from_fn(4, 6, |x, y| g.get(y, 3 - x));
        let rot_ridges = detect_ridges(&rotated, &Mask::new(4, 6, true)).unwrap();
        for y in 0..4 {
            for x in 0..6 {
                assert_eq!(base.get(x, y), rot_ridges.get(3 - y, x));
            }
        }
    }

    #[test]
    fn empty_mask_gives_empty_skeleton() {
        let f = Frame::new(lcg_grid(8, 8, 3)).unwrap();
        let s = build_skeleton(&f, &Mask::new(8, 8, false), &ScaleSet::default()).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.stability_grid().max_abs(), 0.0);
    }

    #[test]
    fn stability_lattice_arithmetic() {
        // A pixel that is a ridge at a single scale out of five.
        let s = MultiScaleSkeleton {
            width: 2,
            height: 1,
            scale_count: 5,
            hits: vec![1, 5],
            points: Vec::new(),
        };
        assert_eq!(s.stability(0, 0), 0.2);
        assert_eq!(s.stability(1, 0), 1.0);
        assert_eq!(s.stability_u8(), vec![51, 255]);
    }

    #[test]
    fn scale_stable_ridge_reaches_full_stability() {
        // Gaussian ridge along y = 20; its locus does not move under blur.
        let (w, h) = (48, 41);
        let f = Frame::new(Grid::from_fn(w, h, |_, y| {
            let d = y as f64 - 20.0;
            0.9 * libm::exp(-d * d / (2.0 * 3.0 * 3.0))
        }))
        .unwrap();
        let mask = crate::imaging::threshold_mask(&f, 1.0);
        let scales = ScaleSet::default();
        let s = build_skeleton(&f, &mask, &scales).unwrap();
        for x in 0..w {
            assert_eq!(s.stability(x, 20), 1.0, "x = {x}");
        }
        // Per-scale oracle: the locus is a ridge at every scale individually.
        for &sigma in scales.sigmas() {
            let ridges = detect_ridges(&gaussian_blur(&f, sigma).unwrap(), &mask).unwrap();
            assert!((0..w).all(|x| ridges.get(x, 20)));
        }
        // Containment in the smoke mask.
        for y in 0..h {
            for x in 0..w {
                if s.hits(x, y) > 0 {
                    assert!(mask.get(x, y));
                }
            }
        }
    }

    #[test]
    fn points_have_orthonormal_frames() {
        let f = Frame::new(lcg_grid(24, 24, 8)).unwrap();
        let mask = Mask::new(24, 24, true);
        let s = build_skeleton(&f, &mask, &ScaleSet::new(vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        assert!(!s.is_empty());
        for p in s.points() {
            assert!((p.tangent.norm() - 1.0).abs() < 1e-9);
            assert!((p.normal.norm() - 1.0).abs() < 1e-9);
            assert!(p.tangent.dot(p.normal).abs() < 1e-9);
            let lattice = p.stability * 3.0;
            assert_eq!(lattice, libm::round(lattice));
            assert!(p.stability > 0.0 && p.stability <= 1.0);
        }
    }

    #[test]
    fn frame_of_horizontal_segment() {
        let ridge = Mask::from_fn(21, 11, |_, y| y == 5);
        let (t, n) = estimate_frames(&ridge, 10, 5, DEFAULT_FRAME_RADIUS);
        assert_eq!(t, Vec2::new(1.0, 0.0));
        assert_eq!(n, Vec2::new(0.0, 1.0));
    }

    #[test]
    fn frame_of_diagonal_segment() {
        let ridge = Mask::from_fn(21, 21, |x, y| x == y);
        let (t, n) = estimate_frames(&ridge, 10, 10, DEFAULT_FRAME_RADIUS);
        assert!((t.x - FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((t.y - FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((n.x + FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((n.y - FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn frame_of_isolated_pixel_falls_back() {
        let ridge = Mask::from_fn(5, 5, |x, y| x == 2 && y == 2);
        let (t, n) = estimate_frames(&ridge, 2, 2, DEFAULT_FRAME_RADIUS);
        assert_eq!(t, Vec2::new(1.0, 0.0));
        assert_eq!(n, Vec2::new(0.0, 1.0));
        // A filled disc has no dominant direction either.
        let disc = Mask::new(11, 11, true);
        assert_eq!(estimate_frames(&disc, 5, 5, 3.0).0, Vec2::new(1.0, 0.0));
    }

    #[test]
    fn frame_follows_quarter_circle() {
        let (cx, cy, radius) = (5.0, 5.0, 30.0);
        let ridge = Mask::from_fn(45, 45, |x, y| {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            dx >= 0.0 && dy >= 0.0 && (libm::hypot(dx, dy) - radius).abs() < 0.5
        });
        for deg in [20.0f64, 35.0, 45.0, 60.0, 70.0] {
            let theta = deg * PI / 180.0;
            let px = libm::round(cx + radius * libm::cos(theta)) as usize;
            let py = libm::round(cy + radius * libm::sin(theta)) as usize;
            assert!(ridge.get(px, py), "arc pixel missing at {deg}");
            let (t, _) = estimate_frames(&ridge, px, py, DEFAULT_FRAME_RADIUS);
            let analytic = Vec2::new(-libm::sin(theta), libm::cos(theta));
            let cos_angle = t.dot(analytic).abs();
            assert!(cos_angle > libm::cos(10.0 * PI / 180.0), "deg {deg}: {t:?}");
        }
    }
}
