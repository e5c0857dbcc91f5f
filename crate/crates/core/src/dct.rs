//! Orthonormal 2D DCT-II and its inverse.
//!
//! One-dimensional transforms use Makhoul's reordering onto a complex FFT of
//! the same length: radix-2 for powers of two, Bluestein's chirp-z otherwise.
//! The 2D transform is separable (rows, then columns).

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::{Add, Mul, Sub};

use crate::imaging::Grid;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct Complex {
    re: f64,
    im: f64,
}

impl Complex {
    const ZERO: Complex = Complex { re: 0.0, im: 0.0 };

    fn new(re: f64, im: f64) -> Self {
        Complex { re, im }
    }

    fn expi(theta: f64) -> Self {
        Complex::new(math::cos(theta), math::sin(theta))
    }

    fn conj(self) -> Self {
        Complex::new(self.re, -self.im)
    }

    fn scale(self, s: f64) -> Self {
        Complex::new(self.re * s, self.im * s)
    }
}

impl Add for Complex {
    type Output = Complex;
    fn add(self, o: Complex) -> Complex {
        Complex::new(self.re + o.re, self.im + o.im)
    }
}

impl Sub for Complex {
    type Output = Complex;
    fn sub(self, o: Complex) -> Complex {
        Complex::new(self.re - o.re, self.im - o.im)
    }
}

impl Mul for Complex {
    type Output = Complex;
    fn mul(self, o: Complex) -> Complex {
        Complex::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }
}

// In-place iterative radix-2 FFT.
#[derive(Debug, Clone)]
struct Radix2 {
    n: usize,
    twiddles: Vec<Complex>,
    reversed: Vec<u32>,
}

impl Radix2 {
    fn new(n: usize) -> Self {
        debug_assert!(n.is_power_of_two());
        let bits = n.trailing_zeros();
        let reversed = (0..n as u32)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (32 - bits) })
            .collect();
        let twiddles = (0..n / 2)
            .map(|k| Complex::expi(-2.0 * PI * k as f64 / n as f64))
            .collect();
        Radix2 {
            n,
            twiddles,
            reversed,
        }
    }

    fn forward(&self, buf: &mut [Complex]) {
        let n = self.n;
        for i in 0..n {
            let j = self.reversed[i] as usize;
            if j > i {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let w = self.twiddles[k * stride];
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            len <<= 1;
        }
    }
}

// Arbitrary-length FFT.
#[derive(Debug, Clone)]
enum Fft {
    Pow2(Radix2),
    Bluestein {
        n: usize,
        inner: Radix2,
        chirp: Vec<Complex>,
        kernel: Vec<Complex>,
    },
}

impl Fft {
    fn new(n: usize) -> Self {
        if n.is_power_of_two() {
            return Fft::Pow2(Radix2::new(n));
        }
        let m = (2 * n - 1).next_power_of_two();
        let inner = Radix2::new(m);
        let chirp: Vec<Complex> = (0..n)
            .map(|k| {
                // k^2 mod 2n keeps the phase argument small.
                let k2 = (k as u64 * k as u64) % (2 * n as u64);
                Complex::expi(-PI * k2 as f64 / n as f64)
            })
            .collect();
        let mut kernel = vec![Complex::ZERO; m];
        kernel[0] = chirp[0].conj();
        for k in 1..n {
            kernel[k] = chirp[k].conj();
            kernel[m - k] = chirp[k].conj();
        }
        inner.forward(&mut kernel);
        Fft::Bluestein {
            n,
            inner,
            chirp,
            kernel,
        }
    }

    fn forward(&self, buf: &mut [Complex], scratch: &mut Vec<Complex>) {
        match self {
            Fft::Pow2(r) => r.forward(buf),
            Fft::Bluestein {
                n,
                inner,
                chirp,
                kernel,
            } => {
                let m = inner.n;
                scratch.clear();
                scratch.resize(m, Complex::ZERO);
                for k in 0..*n {
                    scratch[k] = buf[k] * chirp[k];
                }
                inner.forward(scratch);
                for (s, k) in scratch.iter_mut().zip(kernel) {
                    *s = (*s * *k).conj();
                }
                // Inverse via conjugation: ifft(z) = conj(fft(conj(z))) / m.
                inner.forward(scratch);
                let inv_m = 1.0 / m as f64;
                for k in 0..*n {
                    buf[k] = scratch[k].conj().scale(inv_m) * chirp[k];
                }
            }
        }
    }

    fn inverse(&self, buf: &mut [Complex], scratch: &mut Vec<Complex>) {
        for c in buf.iter_mut() {
            *c = c.conj();
        }
        self.forward(buf, scratch);
        let inv_n = 1.0 / buf.len() as f64;
        for c in buf.iter_mut() {
            *c = c.conj().scale(inv_n);
        }
    }
}

/// Orthonormal 1D DCT-II / DCT-III pair of a fixed length.
#[derive(Debug, Clone)]
pub struct Dct1d {
    n: usize,
    fft: Fft,
    // e^{-i pi k / 2n}
    twiddles: Vec<Complex>,
    // Orthonormal scale factors s_k.
    scales: Vec<f64>,
    buf: Vec<Complex>,
    scratch: Vec<Complex>,
}

impl Dct1d {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "transform length must be positive");
        let twiddles = (0..n)
            .map(|k| Complex::expi(-PI * k as f64 / (2 * n) as f64))
            .collect();
        let scales = (0..n)
            .map(|k| {
                if k == 0 {
                    math::sqrt(1.0 / n as f64)
                } else {
                    math::sqrt(2.0 / n as f64)
                }
            })
            .collect();
        Dct1d {
            n,
            fft: Fft::new(n),
            twiddles,
            scales,
            buf: vec![Complex::ZERO; n],
            scratch: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `X_k = s_k sum_j x_j cos(pi (2j + 1) k / 2n)`, in place.
    pub fn forward(&mut self, data: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(data.len(), n);
        for j in 0..n.div_ceil(2) {
            self.buf[j] = Complex::new(data[2 * j], 0.0);
        }
        for j in 0..n / 2 {
            self.buf[n - 1 - j] = Complex::new(data[2 * j + 1], 0.0);
        }
        self.fft.forward(&mut self.buf, &mut self.scratch);
        for k in 0..n {
            data[k] = self.scales[k] * (self.twiddles[k] * self.buf[k]).re;
        }
    }

    /// Exact inverse of [`Dct1d::forward`], in place.
    pub fn inverse(&mut self, data: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(data.len(), n);
        for k in 0..n {
            let y = data[k] / self.scales[k];
            let y_mirror = if k == 0 { 0.0 } else { data[n - k] / self.scales[n - k] };
            self.buf[k] = self.twiddles[k].conj() * Complex::new(y, -y_mirror);
        }
        self.fft.inverse(&mut self.buf, &mut self.scratch);
        for j in 0..n.div_ceil(2) {
            data[2 * j] = self.buf[j].re;
        }
        for j in 0..n / 2 {
            data[2 * j + 1] = self.buf[n - 1 - j].re;
        }
    }
}

/// Reusable separable 2D transform for one grid size.
#[derive(Debug, Clone)]
pub struct Dct2d {
    width: usize,
    height: usize,
    rows: Dct1d,
    cols: Dct1d,
    column: Vec<f64>,
}

impl Dct2d {
    pub fn new(width: usize, height: usize) -> Self {
        Dct2d {
            width,
            height,
            rows: Dct1d::new(width),
            cols: Dct1d::new(height),
            column: vec![0.0; height],
        }
    }

    pub fn forward(&mut self, g: &mut Grid) {
        self.apply(g, true);
    }

    pub fn inverse(&mut self, g: &mut Grid) {
        self.apply(g, false);
    }

    fn apply(&mut self, g: &mut Grid, forward: bool) {
        assert_eq!(g.dims(), (self.width, self.height), "grid does not match transform plan");
        let w = self.width;
        let data = g.as_mut_slice();
        for row in data.chunks_exact_mut(w) {
            if forward {
                self.rows.forward(row);
            } else {
                self.rows.inverse(row);
            }
        }
        for x in 0..w {
            for (y, c) in self.column.iter_mut().enumerate() {
                *c = data[y * w + x];
            }
            if forward {
                self.cols.forward(&mut self.column);
            } else {
                self.cols.inverse(&mut self.column);
            }
            for (y, c) in self.column.iter().enumerate() {
                data[y * w + x] = *c;
            }
        }
    }
}

/// Orthonormal 2D DCT-II. Coefficient `(kx, ky)` is stored at column `kx`,
/// row `ky`.
pub fn dct2(g: &Grid) -> Grid {
    let mut out = g.clone();
    Dct2d::new(g.width(), g.height()).forward(&mut out);
    out
}

/// Inverse of [`dct2`] (orthonormal DCT-III).
pub fn idct2(g: &Grid) -> Grid {
    let mut out = g.clone();
    Dct2d::new(g.width(), g.height()).inverse(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_dct(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                let s = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
                s * x
                    .iter()
                    .enumerate()
                    .map(|(j, v)| v * (PI * (2 * j + 1) as f64 * k as f64 / (2 * n) as f64).cos())
                    .sum::<f64>()
            })
            .collect()
    }

    extern crate std;
    use std::vec::Vec as StdVec;

    fn lcg(n: usize, seed: u64) -> StdVec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect()
    }

    #[test]
    fn one_dimensional_matches_direct_sum() {
        for n in [1usize, 2, 3, 5, 7, 8, 12, 16, 31, 64, 100] {
            let x = lcg(n, n as u64);
            let mut y = x.clone();
            let mut plan = Dct1d::new(n);
            plan.forward(&mut y);
            let reference = direct_dct(&x);
            for (a, b) in y.iter().zip(&reference) {
                assert!((a - b).abs() < 1e-12, "n = {n}");
            }
            plan.inverse(&mut y);
            for (a, b) in y.iter().zip(&x) {
                assert!((a - b).abs() < 1e-12, "n = {n}");
            }
        }
    }

    #[test]
    fn constant_grid_is_dc_only() {
        let g = Grid::filled(6, 4, 2.0);
        let c = dct2(&g);
        assert!((c.get(0, 0) - 2.0 * (24.0f64).sqrt()).abs() < 1e-12);
        for y in 0..4 {
            for x in 0..6 {
                if (x, y) != (0, 0) {
                    assert!(c.get(x, y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn roundtrip_random_8x8() {
        let data = lcg(64, 99);
        let g = Grid::from_vec(8, 8, data.to_vec()).unwrap();
        let back = idct2(&dct2(&g));
        for (a, b) in back.as_slice().iter().zip(g.as_slice()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn single_cosine_mode() {
        // g(x, y) = cos(pi (2x + 1) 3 / 2w) cos(pi (2y + 1) 2 / 2h); the only
        // coefficient is at (3, 2) with value sqrt(w/2) sqrt(h/2).
        let (w, h) = (10usize, 7usize);
        let g = Grid::from_fn(w, h, |x, y| {
            (PI * (2 * x + 1) as f64 * 3.0 / (2 * w) as f64).cos()
                * (PI * (2 * y + 1) as f64 * 2.0 / (2 * h) as f64).cos()
        });
        let c = dct2(&g);
        let expected = (w as f64 / 2.0).sqrt() * (h as f64 / 2.0).sqrt();
        for y in 0..h {
            for x in 0..w {
                let target = if (x, y) == (3, 2) { expected } else { 0.0 };
                assert!((c.get(x, y) - target).abs() < 1e-12, "({x},{y})");
            }
        }
    }
}
