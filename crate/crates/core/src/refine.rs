//! Single-level variational refinement of a dense flow.
//!
//! Minimizes
//!
//! ```text
//! E(v) = sum_x phi(|f2(x + v) - f1(x)|^2)
//!      + alpha * phi(|grad f2(x + v) - grad f1(x)|^2)
//!      + gamma * phi(|grad v1|^2 + |grad v2|^2)
//! ```
//!
//! with the Charbonnier penalizer `phi(s^2) = sqrt(s^2 + eps^2)`. Each outer
//! fixed-point iteration linearizes the warped data terms about the current
//! flow, freezes the robust weights, and runs a fixed number of SOR sweeps on
//! the resulting symmetric positive semi-definite system for the increment.
//! An increment that would raise the energy is halved until it does not.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::flow::FlowField;
use crate::imaging::{check_dims, gradient, Frame, Grid, Vec2};
use crate::math;

/// Halvings tried before an outer iteration is rejected.
const MAX_BACKTRACKS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineParams {
    /// Gradient-constancy weight.
    pub alpha: f64,
    /// Smoothness weight.
    pub gamma: f64,
    pub penalizer_eps: f64,
    pub outer_iters: usize,
    pub sor_iters: usize,
    pub sor_omega: f64,
}

impl Default for RefineParams {
    fn default() -> Self {
        RefineParams {
            alpha: 1.0,
            gamma: 0.01,
            penalizer_eps: 1e-3,
            outer_iters: 30,
            sor_iters: 30,
            sor_omega: 1.6,
        }
    }
}

impl RefineParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.gamma >= 0.0) || !self.alpha.is_finite() || !self.gamma.is_finite() {
            return Err(invalid("refinement weights must be non-negative"));
        }
        if !(self.penalizer_eps > 0.0) {
            return Err(invalid("penalizer_eps must be positive"));
        }
        if self.sor_iters == 0 {
            return Err(invalid("sor_iters must be at least 1"));
        }
        if !(self.sor_omega > 0.0 && self.sor_omega < 2.0) {
            return Err(invalid("sor_omega must lie in (0, 2)"));
        }
        Ok(())
    }
}

#[inline]
fn charbonnier(s2: f64, eps: f64) -> f64 {
    math::sqrt(s2 + eps * eps)
}

// d phi / d(s^2)
#[inline]
fn charbonnier_weight(s2: f64, eps: f64) -> f64 {
    0.5 / math::sqrt(s2 + eps * eps)
}

// Forward differences with zero flux across the far border.
#[inline]
fn forward_diffs(g: &Grid, x: usize, y: usize) -> (f64, f64) {
    let c = g.get(x, y);
    let dx = if x + 1 < g.width() { g.get(x + 1, y) - c } else { 0.0 };
    let dy = if y + 1 < g.height() { g.get(x, y + 1) - c } else { 0.0 };
    (dx, dy)
}

fn smoothness_arg(v: &FlowField, x: usize, y: usize) -> f64 {
    let (ux, uy) = forward_diffs(v.u(), x, y);
    let (vx, vy) = forward_diffs(v.v(), x, y);
    ux * ux + uy * uy + vx * vx + vy * vy
}

/// Spatial derivatives of the frame pair, computed once per refinement. The
/// moving frame is sampled at `x + v`, the reference at `x`.
#[derive(Debug, Clone)]
struct Derivatives {
    m: Grid,
    mx: Grid,
    my: Grid,
    mxx: Grid,
    mxy: Grid,
    myx: Grid,
    myy: Grid,
    r: Grid,
    rx: Grid,
    ry: Grid,
}

impl Derivatives {
    fn new(moving: &Frame, reference: &Frame) -> Self {
        let (m, r) = (moving, reference);
        let (mx, my) = gradient(m);
        let (mxx, mxy) = gradient(&mx);
        let (myx, myy) = gradient(&my);
        let (rx, ry) = gradient(r);
        Derivatives {
            m: m.as_grid().clone(),
            mx,
            my,
            mxx,
            mxy,
            myx,
            myy,
            r: r.as_grid().clone(),
            rx,
            ry,
        }
    }
}

// Data residuals and their flow Jacobians at one pixel.
struct WarpedPixel {
    it: f64,
    ix: f64,
    iy: f64,
    gx: f64,
    gy: f64,
    // Jacobian of (gx, gy) with respect to (du, dv).
    jxx: f64,
    jxy: f64,
    jyx: f64,
    jyy: f64,
}

impl Derivatives {
    fn warped(&self, x: usize, y: usize, d: Vec2) -> WarpedPixel {
        let (w, h) = self.m.dims();
        let sx = x as f64 + d.x;
        let sy = y as f64 + d.y;
        let s = |g: &Grid| g.sample_bilinear(sx, sy);
        let it = s(&self.m) - self.r.get(x, y);
        let mx = s(&self.mx);
        let my = s(&self.my);
        let gx = mx - self.rx.get(x, y);
        let gy = my - self.ry.get(x, y);
        // Clamped samples do not move with the flow.
        let inside = sx >= 0.0 && sy >= 0.0 && sx <= (w - 1) as f64 && sy <= (h - 1) as f64;
        if inside {
            WarpedPixel {
                it,
                ix: mx,
                iy: my,
                gx,
                gy,
                jxx: s(&self.mxx),
                jxy: s(&self.mxy),
                jyx: s(&self.myx),
                jyy: s(&self.myy),
            }
        } else {
            WarpedPixel {
                it,
                ix: 0.0,
                iy: 0.0,
                gx,
                gy,
                jxx: 0.0,
                jxy: 0.0,
                jyx: 0.0,
                jyy: 0.0,
            }
        }
    }

    fn energy(&self, v: &FlowField, params: &RefineParams) -> f64 {
        let (w, h) = v.dims();
        let eps = params.penalizer_eps;
        let mut total = crate::math::CompensatedSum::default();
        for y in 0..h {
            for x in 0..w {
                let p = self.warped(x, y, v.at(x, y));
                total.add(charbonnier(p.it * p.it, eps));
                total.add(params.alpha * charbonnier(p.gx * p.gx + p.gy * p.gy, eps));
                total.add(params.gamma * charbonnier(smoothness_arg(v, x, y), eps));
            }
        }
        total.total()
    }
}

/// Energy of `v` for the frame pair.
pub fn energy(f1: &Frame, f2: &Frame, v: &FlowField, params: &RefineParams) -> Result<f64> {
    check_dims(f1.dims(), f2.dims())?;
    check_dims(f1.dims(), v.dims())?;
    Ok(Derivatives::new(f2, f1).energy(v, params))
}

/// Per-pixel coefficients of the linearized increment system.
#[derive(Debug, Clone)]
struct Linearization {
    width: usize,
    height: usize,
    a11: Vec<f64>,
    a12: Vec<f64>,
    a22: Vec<f64>,
    b1: Vec<f64>,
    b2: Vec<f64>,
    // Robust weight of the forward edges leaving each pixel, times gamma.
    smooth: Vec<f64>,
}

impl Linearization {
    fn new(d: &Derivatives, v: &FlowField, params: &RefineParams) -> Self {
        let (w, h) = v.dims();
        let n = w * h;
        let eps = params.penalizer_eps;
        let mut lin = Linearization {
            width: w,
            height: h,
            a11: vec![0.0; n],
            a12: vec![0.0; n],
            a22: vec![0.0; n],
            b1: vec![0.0; n],
            b2: vec![0.0; n],
            smooth: vec![0.0; n],
        };
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let p = d.warped(x, y, v.at(x, y));
                let ad = charbonnier_weight(p.it * p.it, eps);
                let ag = params.alpha * charbonnier_weight(p.gx * p.gx + p.gy * p.gy, eps);
                lin.a11[i] = ad * p.ix * p.ix + ag * (p.jxx * p.jxx + p.jyx * p.jyx);
                lin.a12[i] = ad * p.ix * p.iy + ag * (p.jxx * p.jxy + p.jyx * p.jyy);
                lin.a22[i] = ad * p.iy * p.iy + ag * (p.jxy * p.jxy + p.jyy * p.jyy);
                lin.b1[i] = ad * p.ix * p.it + ag * (p.jxx * p.gx + p.jyx * p.gy);
                lin.b2[i] = ad * p.iy * p.it + ag * (p.jxy * p.gx + p.jyy * p.gy);
                lin.smooth[i] = params.gamma * charbonnier_weight(smoothness_arg(v, x, y), eps);
            }
        }
        lin
    }

    // Neighbours of pixel i with the weight of the shared edge.
    fn edges(&self, x: usize, y: usize, mut f: impl FnMut(usize, f64)) {
        let w = self.width;
        let i = y * w + x;
        if x + 1 < w {
            f(i + 1, self.smooth[i]);
        }
        if x > 0 {
            f(i - 1, self.smooth[i - 1]);
        }
        if y + 1 < self.height {
            f(i + w, self.smooth[i]);
        }
        if y > 0 {
            f(i - w, self.smooth[i - w]);
        }
    }

    fn sor(&self, v: &FlowField, sweeps: usize, omega: f64) -> (Vec<f64>, Vec<f64>) {
        let (w, h) = (self.width, self.height);
        let u0 = v.u().as_slice();
        let v0 = v.v().as_slice();
        let mut du = vec![0.0; w * h];
        let mut dv = vec![0.0; w * h];
        for _ in 0..sweeps {
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    let (mut sw, mut nu, mut nv) = (0.0, 0.0, 0.0);
                    self.edges(x, y, |j, wt| {
                        sw += wt;
                        nu += wt * (u0[j] + du[j] - u0[i]);
                        nv += wt * (v0[j] + dv[j] - v0[i]);
                    });
                    let d1 = self.a11[i] + sw;
                    if d1 > 0.0 {
                        let gs = (-self.b1[i] - self.a12[i] * dv[i] + nu) / d1;
                        du[i] += omega * (gs - du[i]);
                    }
                    let d2 = self.a22[i] + sw;
                    if d2 > 0.0 {
                        let gs = (-self.b2[i] - self.a12[i] * du[i] + nv) / d2;
                        dv[i] += omega * (gs - dv[i]);
                    }
                }
            }
        }
        (du, dv)
    }
}

/// Dense form of the linearized increment system `A dw = b`, unknowns
/// ordered `(du_0, dv_0, du_1, dv_1, ...)` row-major. Meant for inspecting
/// small instances.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSystem {
    pub size: usize,
    /// Row-major `size x size`.
    pub matrix: Vec<f64>,
    pub rhs: Vec<f64>,
}

pub fn assemble_system(f1: &Frame, f2: &Frame, v: &FlowField, params: &RefineParams) -> Result<DenseSystem> {
    check_dims(f1.dims(), f2.dims())?;
    check_dims(f1.dims(), v.dims())?;
    let d = Derivatives::new(f2, f1);
    let lin = Linearization::new(&d, v, params);
    let (w, h) = v.dims();
    let size = 2 * w * h;
    let mut matrix = vec![0.0; size * size];
    let mut rhs = vec![0.0; size];
    let u0 = v.u().as_slice();
    let v0 = v.v().as_slice();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (ru, rv) = (2 * i, 2 * i + 1);
            matrix[ru * size + ru] += lin.a11[i];
            matrix[ru * size + rv] += lin.a12[i];
            matrix[rv * size + ru] += lin.a12[i];
            matrix[rv * size + rv] += lin.a22[i];
            rhs[ru] -= lin.b1[i];
            rhs[rv] -= lin.b2[i];
            lin.edges(x, y, |j, wt| {
                matrix[ru * size + ru] += wt;
                matrix[rv * size + rv] += wt;
                matrix[ru * size + 2 * j] -= wt;
                matrix[rv * size + 2 * j + 1] -= wt;
                rhs[ru] -= wt * (u0[i] - u0[j]);
                rhs[rv] -= wt * (v0[i] - v0[j]);
            });
        }
    }
    Ok(DenseSystem { size, matrix, rhs })
}

/// Refined field with the energy after initialization and after every
/// outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    pub flow: FlowField,
    pub energies: Vec<f64>,
}

/// Refines `v0` with `outer_iters` fixed-point iterations of `sor_iters`
/// SOR sweeps each.
pub fn refine(f1: &Frame, f2: &Frame, v0: &FlowField, params: &RefineParams) -> Result<RefineOutcome> {
    params.validate()?;
    check_dims(f1.dims(), f2.dims())?;
    check_dims(f1.dims(), v0.dims())?;
    if !v0.is_finite() {
        return Err(Error::NonFinite("initial flow"));
    }
    let (w, h) = v0.dims();
    let diagonal = math::hypot(w as f64, h as f64);
    let derivs = Derivatives::new(f2, f1);

    let mut flow = v0.clone();
    let mut current = derivs.energy(&flow, params);
    let mut energies = vec![current];
    for _ in 0..params.outer_iters {
        let lin = Linearization::new(&derivs, &flow, params);
        let (du, dv) = lin.sor(&flow, params.sor_iters, params.sor_omega);
        if du.iter().chain(&dv).all(|&d| d == 0.0) {
            energies.push(current);
            continue;
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_BACKTRACKS {
            let candidate = FlowField::from_fn(w, h, |x, y| {
                let i = y * w + x;
                let inc = Vec2::new(du[i], dv[i]) * step;
                let inc = Vec2::new(inc.x.clamp(-diagonal, diagonal), inc.y.clamp(-diagonal, diagonal));
                flow.at(x, y) + inc
            });
            let e = derivs.energy(&candidate, params);
            if e <= current {
                accepted = Some((candidate, e));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((candidate, e)) => {
                flow = candidate;
                current = e;
            }
            None => {}
        }
        energies.push(current);
    }
    Ok(RefineOutcome { flow, energies })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(w: usize, h: usize, shift: f64) -> Frame {
        Frame::from_grid_clamped(Grid::from_fn(w, h, |x, y| {
            let xf = x as f64 - shift;
            0.5 + 0.25 * libm::sin(0.5 * xf) * libm::cos(0.4 * y as f64) + 0.1 * libm::sin(0.23 * (xf + y as f64))
        }))
    }

    #[test]
    fn energy_of_identical_frames_at_rest() {
        let f = textured(9, 7, 0.0);
        let p = RefineParams::default();
        let e = energy(&f, &f, &FlowField::zeros(9, 7), &p).unwrap();
        let expected = (1.0 + p.alpha + p.gamma) * p.penalizer_eps * 63.0;
        assert!((e - expected).abs() < 1e-12);
    }

    #[test]
    fn energy_is_linear_in_gamma() {
        let f1 = textured(8, 8, 0.0);
        let f2 = textured(8, 8, 1.0);
        let v = FlowField::from_fn(8, 8, |x, y| Vec2::new(0.1 * x as f64, -0.05 * y as f64));
        let p = RefineParams::default();
        let p2 = RefineParams { gamma: 2.0 * p.gamma, ..p };
        let p0 = RefineParams { gamma: 0.0, ..p };
        let e = energy(&f1, &f2, &v, &p).unwrap();
        let e2 = energy(&f1, &f2, &v, &p2).unwrap();
        let e0 = energy(&f1, &f2, &v, &p0).unwrap();
        assert!(((e2 - e0) - 2.0 * (e - e0)).abs() < 1e-10);
    }

    #[test]
    fn energy_matches_straight_line_oracle() {
        let (w, h) = (5usize, 4usize);
        let f1 = textured(w, h, 0.3);
        let f2 = textured(w, h, 1.1);
        let v = FlowField::from_fn(w, h, |x, y| Vec2::new(0.3 - 0.1 * y as f64, 0.2 * x as f64 - 0.4));
        let p = RefineParams { alpha: 0.6, gamma: 0.9, penalizer_eps: 0.01, ..RefineParams::default() };
        let phi = |s: f64| (s + p.penalizer_eps * p.penalizer_eps).sqrt();
        let central = |g: &dyn Fn(i64, i64) -> f64, x: i64, y: i64, axis: u8| -> f64 {
            let (n, i) = if axis == 0 { (w as i64, x) } else { (h as i64, y) };
            let at = |k: i64| if axis == 0 { g(k, y) } else { g(x, k) };
            if i == 0 {
                at(1) - at(0)
            } else if i == n - 1 {
                at(n - 1) - at(n - 2)
            } else {
                (at(i + 1) - at(i - 1)) / 2.0
            }
        };
        let f1g = |x: i64, y: i64| f1.get(x as usize, y as usize);
        let f2g = |x: i64, y: i64| f2.get(x as usize, y as usize);
        let f2x = Grid::from_fn(w, h, |x, y| central(&f2g, x as i64, y as i64, 0));
        let f2y = Grid::from_fn(w, h, |x, y| central(&f2g, x as i64, y as i64, 1));
        let bilinear = |g: &Grid, sx: f64, sy: f64| -> f64 {
            let sx = sx.clamp(0.0, (w - 1) as f64);
            let sy = sy.clamp(0.0, (h - 1) as f64);
            let x0 = (sx.floor() as usize).min(w - 2);
            let y0 = (sy.floor() as usize).min(h - 2);
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            g.get(x0, y0) * (1.0 - fx) * (1.0 - fy)
                + g.get(x0 + 1, y0) * fx * (1.0 - fy)
                + g.get(x0, y0 + 1) * (1.0 - fx) * fy
                + g.get(x0 + 1, y0 + 1) * fx * fy
        };
        let mut expected = 0.0;
        for y in 0..h {
            for x in 0..w {
                let d = v.at(x, y);
                let (sx, sy) = (x as f64 + d.x, y as f64 + d.y);
                let it = bilinear(f2.as_grid(), sx, sy) - f1.get(x, y);
                let gx = bilinear(&f2x, sx, sy) - central(&f1g, x as i64, y as i64, 0);
                let gy = bilinear(&f2y, sx, sy) - central(&f1g, x as i64, y as i64, 1);
                let fd = |g: &Grid| {
                    let c = g.get(x, y);
                    let dx = if x + 1 < w { g.get(x + 1, y) - c } else { 0.0 };
                    let dy = if y + 1 < h { g.get(x, y + 1) - c } else { 0.0 };
                    dx * dx + dy * dy
                };
                expected += phi(it * it) + p.alpha * phi(gx * gx + gy * gy) + p.gamma * phi(fd(v.u()) + fd(v.v()));
            }
        }
        let e = energy(&f1, &f2, &v, &p).unwrap();
        assert!((e - expected).abs() < 1e-9 * expected.max(1.0));
    }

    #[test]
    fn identical_frames_keep_zero_flow() {
        let f = textured(16, 12, 0.0);
        let out = refine(&f, &f, &FlowField::zeros(16, 12), &RefineParams::default()).unwrap();
        assert!(out.flow.max_abs() < 1e-9);
    }

    #[test]
    fn constant_frames_fix_any_constant_flow_without_smoothness() {
        let f = Frame::new(Grid::filled(10, 8, 0.4)).unwrap();
        let v0 = FlowField::constant(10, 8, Vec2::new(1.25, -0.5));
        let p = RefineParams { gamma: 0.0, ..RefineParams::default() };
        let out = refine(&f, &f, &v0, &p).unwrap();
        assert_eq!(out.flow, v0);
    }

    #[test]
    fn rejects_non_finite_initialization() {
        let f = textured(4, 4, 0.0);
        let mut v0 = FlowField::zeros(4, 4);
        v0.set(1, 1, Vec2::new(f64::NAN, 0.0));
        assert_eq!(
            refine(&f, &f, &v0, &RefineParams::default()),
            Err(Error::NonFinite("initial flow"))
        );
    }

    #[test]
    fn energy_never_increases() {
        let f1 = textured(24, 20, 0.0);
        let f2 = textured(24, 20, 1.5);
        let v0 = FlowField::from_fn(24, 20, |x, _| Vec2::new(-1.0 + 0.02 * x as f64, 0.3));
        let out = refine(&f1, &f2, &v0, &RefineParams::default()).unwrap();
        for pair in out.energies.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9);
        }
        assert!(out.energies.last().unwrap() < &out.energies[0]);
        assert!(out.flow.is_finite());
    }

    #[test]
    fn system_is_symmetric_psd() {
        let f1 = textured(4, 3, 0.0);
        let f2 = textured(4, 3, 0.7);
        let v = FlowField::from_fn(4, 3, |x, y| Vec2::new(0.2 * x as f64, -0.1 * y as f64));
        let sys = assemble_system(&f1, &f2, &v, &RefineParams::default()).unwrap();
        let n = sys.size;
        for i in 0..n {
            for j in 0..n {
                assert!((sys.matrix[i * n + j] - sys.matrix[j * n + i]).abs() < 1e-12);
            }
        }
        // Positive semi-definite: non-negative quadratic form on probe vectors.
        let mut s = 3u64;
        for _ in 0..200 {
            let z: Vec<f64> = (0..n)
                .map(|_| {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
                })
                .collect();
            let mut q = 0.0;
            for i in 0..n {
                for j in 0..n {
                    q += z[i] * sys.matrix[i * n + j] * z[j];
                }
            }
            assert!(q >= -1e-12);
        }
    }

    #[test]
    fn long_sor_solves_the_assembled_system() {
        let (w, h) = (5usize, 4usize);
        let f1 = textured(w, h, 0.0);
        let f2 = textured(w, h, 0.6);
        let v = FlowField::from_fn(w, h, |x, _| Vec2::new(0.1 * x as f64, 0.0));
        let p = RefineParams::default();
        let sys = assemble_system(&f1, &f2, &v, &p).unwrap();
        let d = Derivatives::new(&f2, &f1);
        let lin = Linearization::new(&d, &v, &p);
        let (du, dv) = lin.sor(&v, 200000, 1.9);
        let n = sys.size;
        let scale = sys.matrix.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        for i in 0..n {
            let mut r = -sys.rhs[i];
            for p in 0..w * h {
                r += sys.matrix[i * n + 2 * p] * du[p] + sys.matrix[i * n + 2 * p + 1] * dv[p];
            }
            assert!(r.abs() < 1e-10 * scale, "row {i}: {r}");
        }
    }
}
