//! Sparse-to-dense interpolation by penalized least squares.
//!
//! Each flow component `u` known on a set of anchor pixels `M` is extended to
//! the field `v` minimizing
//!
//! ```text
//! || M^(1/2) (v - u) ||^2 + lambda || L v ||^2
//! ```
//!
//! where `L` is the discrete Laplacian with reflective borders. `L` is
//! diagonalized by the DCT-II, so one smoothing step is a pointwise product
//! with the filtering tensor `Gamma` in the transform domain. The iteration
//! `v <- IDCT(Gamma . DCT(M (u - v) + v))` majorizes the energy and decreases
//! it monotonically. It starts from the nearest-anchor fill, which is
//! already exact for constant data and shortens the run elsewhere.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::dct::Dct2d;
use crate::error::{invalid, Error, Result};
use crate::flow::FlowField;
use crate::imaging::{check_dims, Grid, Mask};
use crate::math;
use crate::sparse_flow::SparseFlow;

/// Form of the filtering tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TensorVariant {
    /// Laplacian eigenvalues `2 - 2 cos(k pi / n)`; the DC gain is exactly 1
    /// so constant fields are reproduced.
    #[default]
    Garcia,
    /// Literal `2 - cos(k pi / n)` form. Its DC gain is below 1 and it
    /// shrinks constant fields; kept for comparison only.
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpParams {
    pub lambda: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub tensor_variant: TensorVariant,
}

impl Default for InterpParams {
    fn default() -> Self {
        InterpParams {
            lambda: 1.0,
            max_iters: 500,
            tol: 1e-6,
            tensor_variant: TensorVariant::Garcia,
        }
    }
}

impl InterpParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid("lambda must be non-negative"));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be positive"));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("tol must be positive"));
        }
        Ok(())
    }
}

/// `Gamma` for a `width x height` grid, laid out like [`crate::dct::dct2`]
/// coefficients. Values lie in `(0, 1]`.
pub fn filtering_tensor(width: usize, height: usize, lambda: f64, variant: TensorVariant) -> Grid {
    let eig = |k: usize, n: usize| {
        let c = math::cos(k as f64 * PI / n as f64);
        match variant {
            TensorVariant::Garcia => 2.0 - 2.0 * c,
            TensorVariant::PaperLiteral => 2.0 - c,
        }
    };
    let ex: Vec<f64> = (0..width).map(|k| eig(k, width)).collect();
    let ey: Vec<f64> = (0..height).map(|k| eig(k, height)).collect();
    Grid::from_fn(width, height, |kx, ky| {
        let s = ex[kx] + ey[ky];
        1.0 / (1.0 + lambda * s * s)
    })
}

/// Applies the reflective-border Laplacian `L` (diagonal 1 at the ends, 2
/// inside, per axis).
pub fn neumann_laplacian(v: &Grid) -> Grid {
    let (w, h) = v.dims();
    Grid::from_fn(w, h, |x, y| {
        let c = v.get(x, y);
        let mut acc = 0.0;
        if x > 0 {
            acc += c - v.get(x - 1, y);
        }
        if x + 1 < w {
            acc += c - v.get(x + 1, y);
        }
        if y > 0 {
            acc += c - v.get(x, y - 1);
        }
        if y + 1 < h {
            acc += c - v.get(x, y + 1);
        }
        acc
    })
}

/// Penalized least-squares energy of one component.
pub fn interp_energy(v: &Grid, u: &Grid, mask: &Mask, lambda: f64) -> f64 {
    let mut data = 0.0;
    for ((&a, &b), &m) in v.as_slice().iter().zip(u.as_slice()).zip(mask.as_slice()) {
        if m {
            data += (a - b) * (a - b);
        }
    }
    let lap = neumann_laplacian(v);
    let smooth: f64 = lap.as_slice().iter().map(|l| l * l).sum();
    data + lambda * smooth
}

/// Result of interpolating one component.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentFit {
    pub field: Grid,
    pub iterations: usize,
    pub converged: bool,
}

/// Interpolates `values` known where `mask` is set. `observer` sees every
/// iterate, starting with the initial guess at index 0.
pub fn interpolate_component_with(
    values: &Grid,
    mask: &Mask,
    params: &InterpParams,
    mut observer: impl FnMut(usize, &Grid),
) -> Result<ComponentFit> {
    params.validate()?;
    check_dims(values.dims(), mask.dims())?;
    if mask.is_all_false() {
        return Err(Error::NoSparseData);
    }
    let (w, h) = values.dims();
    let gamma = filtering_tensor(w, h, params.lambda, params.tensor_variant);
    let mut plan = Dct2d::new(w, h);

    let known = mask.as_slice();
    let u = values.as_slice();
    let mut v = nearest_anchor_fill(values, mask);
    observer(0, &v);

    let mut work = Grid::zeros(w, h);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iters {
        for (i, z) in work.as_mut_slice().iter_mut().enumerate() {
            *z = if known[i] { u[i] } else { v.as_slice()[i] };
        }
        plan.forward(&mut work);
        for (z, g) in work.as_mut_slice().iter_mut().zip(gamma.as_slice()) {
            *z *= g;
        }
        plan.inverse(&mut work);

        let change = work
            .as_slice()
            .iter()
            .zip(v.as_slice())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        core::mem::swap(&mut v, &mut work);
        iterations += 1;
        observer(iterations, &v);
        if change < params.tol {
            converged = true;
            break;
        }
    }
    Ok(ComponentFit {
        field: v,
        iterations,
        converged,
    })
}

/// Copies each anchor value to the pixels it is nearest to. Distances are
/// Euclidean, propagated by a two-pass sweep over 8-neighbours, so a few
/// pixels may take a near-nearest anchor.
pub fn nearest_anchor_fill(values: &Grid, mask: &Mask) -> Grid {
    let (w, h) = values.dims();
    let none = usize::MAX;
    let mut src: Vec<usize> = (0..w * h).map(|i| if mask.as_slice()[i] { i } else { none }).collect();
    let d2 = |i: usize, s: usize| {
        let (dx, dy) = ((i % w) as f64 - (s % w) as f64, (i / w) as f64 - (s / w) as f64);
        dx * dx + dy * dy
    };
    let relax = |src: &mut [usize], i: usize, j: usize| {
        let s = src[j];
        if s != none && (src[i] == none || d2(i, s) < d2(i, src[i])) {
            src[i] = s;
        }
    };
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x > 0 {
                relax(&mut src, i, i - 1);
            }
            if y > 0 {
                relax(&mut src, i, i - w);
                if x > 0 {
                    relax(&mut src, i, i - w - 1);
                }
                if x + 1 < w {
                    relax(&mut src, i, i - w + 1);
                }
            }
        }
        for x in (0..w.saturating_sub(1)).rev() {
            relax(&mut src, y * w + x, y * w + x + 1);
        }
    }
    for y in (0..h).rev() {
        for x in (0..w).rev() {
            let i = y * w + x;
            if x + 1 < w {
                relax(&mut src, i, i + 1);
            }
            if y + 1 < h {
                relax(&mut src, i, i + w);
                if x + 1 < w {
                    relax(&mut src, i, i + w + 1);
                }
                if x > 0 {
                    relax(&mut src, i, i + w - 1);
                }
            }
        }
        for x in 1..w {
            relax(&mut src, y * w + x, y * w + x - 1);
        }
    }
    let u = values.as_slice();
    Grid::from_fn(w, h, |x, y| {
        let s = src[y * w + x];
        if s == none {
            0.0
        } else {
            u[s]
        }
    })
}

pub fn interpolate_component(values: &Grid, mask: &Mask, params: &InterpParams) -> Result<ComponentFit> {
    interpolate_component_with(values, mask, params, |_, _| {})
}

/// Anchor pixels of a sparse flow, with the sample grids `(u, v)`.
pub fn anchor_data(sparse: &SparseFlow) -> (Mask, Grid, Grid) {
    let (w, h) = (sparse.width, sparse.height);
    let mut mask = Mask::new(w, h, false);
    let mut u = Grid::zeros(w, h);
    let mut v = Grid::zeros(w, h);
    for s in &sparse.samples {
        let (x, y) = (s.anchor.x as usize, s.anchor.y as usize);
        mask.set(x, y, true);
        u.set(x, y, s.displacement.x);
        v.set(x, y, s.displacement.y);
    }
    (mask, u, v)
}

/// Dense field from sparse samples plus per-component iteration counts.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseInterpolation {
    pub flow: FlowField,
    pub iterations: [usize; 2],
    pub converged: [bool; 2],
}

/// Interpolates both components independently; the data term lives on the
/// anchor pixels of `sparse`.
pub fn interpolate(sparse: &SparseFlow, params: &InterpParams) -> Result<DenseInterpolation> {
    if sparse.is_empty() {
        return Err(Error::NoSparseData);
    }
    let (mask, u, v) = anchor_data(sparse);
    let fu = interpolate_component(&u, &mask, params)?;
    let fv = interpolate_component(&v, &mask, params)?;
    Ok(DenseInterpolation {
        iterations: [fu.iterations, fv.iterations],
        converged: [fu.converged, fv.converged],
        flow: FlowField::from_components(fu.field, fv.field)?,
    })
}
