//! Periodic pseudo-spectral helpers on the grid `x_j = -π + (j+1)·2π/N`.
//!
//! The grid contains `θ = 0` (index `N/2 - 1`) and `θ = π` (last index).

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Points of the uniform grid on (−π, π].
pub fn grid(n: usize) -> Vec<f64> {
    let h = 2.0 * PI / n as f64;
    (0..n).map(|j| -PI + (j as f64 + 1.0) * h).collect()
}

/// First grid point, `−π + 2π/N`.
pub fn grid_origin(n: usize) -> f64 {
    -PI + 2.0 * PI / n as f64
}

/// Signed wavenumber of FFT bin `i` (the Nyquist bin maps to `+n/2`).
pub fn wavenumber(i: usize, n: usize) -> f64 {
    if i <= n / 2 {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

/// Reduce an angle to the interval (−π, π].
pub fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI {
        y + 2.0 * PI
    } else {
        y
    }
}

/// FFT plans and spectral operators for one grid size.
#[derive(Clone)]
pub struct Spectral {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    up_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("n", &self.n).finish()
    }
}

/// Oversampling factor used by [`FastInterp`].
pub const OVERSAMPLE: usize = 4;
const STENCIL: usize = 10;

impl Spectral {
    /// Plans transforms for an even grid size `n ≥ 4`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 4 && n % 2 == 0, "grid size must be even and >= 4, got {n}");
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let up_inv = planner.plan_fft_inverse(OVERSAMPLE * n);
        Self { n, fwd, inv, up_inv }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    /// Unnormalized DFT of real samples.
    pub fn forward(&self, f: &[f64]) -> Vec<Complex64> {
        assert_eq!(f.len(), self.n);
        let mut buf: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fwd.process(&mut buf);
        buf
    }

    /// Inverse of [`Spectral::forward`], keeping the real part.
    pub fn inverse(&self, mut hat: Vec<Complex64>) -> Vec<f64> {
        assert_eq!(hat.len(), self.n);
        self.inv.process(&mut hat);
        let s = 1.0 / self.n as f64;
        hat.iter().map(|c| c.re * s).collect()
    }

    /// Derivative of given order computed from precomputed coefficients.
    pub fn derivative_hat(&self, hat: &[Complex64], order: u32) -> Vec<f64> {
        let n = self.n;
        let mut out = hat.to_vec();
        for (i, c) in out.iter_mut().enumerate() {
            let k = wavenumber(i, n);
            if i == n / 2 && order % 2 == 1 {
                *c = Complex64::new(0.0, 0.0);
                continue;
            }
            *c *= Complex64::new(0.0, k).powu(order);
        }
        self.inverse(out)
    }

    /// Spectral derivative of given order.
    pub fn derivative(&self, f: &[f64], order: u32) -> Vec<f64> {
        let hat = self.forward(f);
        self.derivative_hat(&hat, order)
    }

    /// Periodic antiderivative of `f − mean(f)` with zero mean.
    pub fn antiderivative(&self, f: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut hat = self.forward(f);
        hat[0] = Complex64::new(0.0, 0.0);
        hat[n / 2] = Complex64::new(0.0, 0.0);
        for (i, c) in hat.iter_mut().enumerate().skip(1) {
            let k = wavenumber(i, n);
            if i != n / 2 {
                *c /= Complex64::new(0.0, k);
            }
        }
        self.inverse(hat)
    }

    /// Applies `exp(−strength·(|k|/k_max)^order)` to every mode in place.
    pub fn filter(&self, f: &mut [f64], strength: f64, order: i32) {
        let n = self.n;
        let mut hat = self.forward(f);
        let kmax = (n / 2) as f64;
        for (i, c) in hat.iter_mut().enumerate() {
            let k = wavenumber(i, n).abs() / kmax;
            *c *= (-strength * k.powi(order)).exp();
        }
        f.copy_from_slice(&self.inverse(hat));
    }

    /// Returns samples of `f(x + s)` (exact for the trigonometric interpolant).
    pub fn shift(&self, f: &[f64], s: f64) -> Vec<f64> {
        let n = self.n;
        let mut hat = self.forward(f);
        for (i, c) in hat.iter_mut().enumerate() {
            if i == n / 2 {
                *c *= (wavenumber(i, n) * s).cos();
            } else {
                let a = wavenumber(i, n) * s;
                *c *= Complex64::new(a.cos(), a.sin());
            }
        }
        self.inverse(hat)
    }

    /// Zeros every mode with `|k| > n/3` (2/3 rule).
    pub fn truncate_two_thirds(&self, f: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut hat = self.forward(f);
        let cut = n as f64 / 3.0;
        for (i, c) in hat.iter_mut().enumerate() {
            if wavenumber(i, n).abs() > cut {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        self.inverse(hat)
    }

    /// Exact trigonometric interpolant (or its derivative) at an arbitrary point.
    pub fn eval(&self, hat: &[Complex64], x: f64, order: u32) -> f64 {
        let n = self.n;
        let theta = x - grid_origin(n);
        let half = n / 2;
        let mut acc = 0.0;
        if order == 0 {
            acc += hat[0].re;
        }
        let mut e = Complex64::new(1.0, 0.0);
        let step = Complex64::new(theta.cos(), theta.sin());
        for k in 1..half {
            if k % 32 == 0 {
                let a = k as f64 * theta;
                e = Complex64::new(a.cos(), a.sin());
            } else {
                e *= step;
            }
            let v = hat[k] * e;
            let kp = (k as f64).powi(order as i32);
            // (ik)^order · v
            let r = match order % 4 {
                0 => v.re,
                1 => -v.im,
                2 => -v.re,
                _ => v.im,
            };
            acc += 2.0 * kp * r;
        }
        let kn = half as f64;
        let a = kn * theta;
        let nyq = hat[half].re;
        acc += match order % 4 {
            0 => nyq * a.cos(),
            1 => -nyq * a.sin(),
            2 => -nyq * a.cos(),
            _ => nyq * a.sin(),
        } * kn.powi(order as i32);
        acc / n as f64
    }

    /// Samples the trigonometric interpolant on the grid refined `OVERSAMPLE` times,
    /// starting at the same origin.
    pub fn upsample_hat(&self, hat: &[Complex64]) -> Vec<f64> {
        let n = self.n;
        let m = OVERSAMPLE * n;
        let mut big = vec![Complex64::new(0.0, 0.0); m];
        let half = n / 2;
        big[..half].copy_from_slice(&hat[..half]);
        for i in half + 1..n {
            big[m - n + i] = hat[i];
        }
        big[half] = hat[half] * 0.5;
        big[m - half] = hat[half] * 0.5;
        self.up_inv.process(&mut big);
        let s = 1.0 / n as f64;
        big.iter().map(|c| c.re * s).collect()
    }

    /// Builds a fast local interpolator for a field given its coefficients.
    pub fn fast_interp(&self, hat: &[Complex64]) -> FastInterp {
        FastInterp { fine: self.upsample_hat(hat), n: self.n }
    }
}

/// Lagrange weights on the oversampled grid for one evaluation point.
#[derive(Clone, Copy, Debug)]
pub struct Stencil {
    idx: [usize; STENCIL],
    w: [f64; STENCIL],
}

impl Stencil {
    /// Stencil for evaluating at `x` on the oversampled grid of a size-`n` base grid.
    pub fn new(n: usize, x: f64) -> Self {
        let m = OVERSAMPLE * n;
        let hf = 2.0 * PI / m as f64;
        let u = (x - grid_origin(n)) / hf;
        let i0 = u.floor();
        let s = u - i0;
        let lo = (STENCIL / 2 - 1) as f64;
        let mut w = [0.0; STENCIL];
        // Lagrange basis on nodes -lo, ..., STENCIL-1-lo evaluated at s.
        let nodes: [f64; STENCIL] = std::array::from_fn(|j| j as f64 - lo);
        let mut exact = None;
        for (j, &node) in nodes.iter().enumerate() {
            if (s - node).abs() < 1e-14 {
                exact = Some(j);
            }
        }
        if let Some(j) = exact {
            w[j] = 1.0;
        } else {
            let mut full = 1.0;
            for &node in &nodes {
                full *= s - node;
            }
            for j in 0..STENCIL {
                let mut den = 1.0;
                for m2 in 0..STENCIL {
                    if m2 != j {
                        den *= nodes[j] - nodes[m2];
                    }
                }
                w[j] = full / ((s - nodes[j]) * den);
            }
        }
        let base = i0 as i64 - lo as i64;
        let idx = std::array::from_fn(|j| (base + j as i64).rem_euclid(m as i64) as usize);
        Self { idx, w }
    }
}

/// Oversampled field with local Lagrange interpolation.
#[derive(Clone, Debug)]
pub struct FastInterp {
    fine: Vec<f64>,
    n: usize,
}

impl FastInterp {
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_stencil(&Stencil::new(self.n, x))
    }

    pub fn eval_stencil(&self, st: &Stencil) -> f64 {
        st.idx.iter().zip(st.w.iter()).map(|(&i, &w)| self.fine[i] * w).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_contains_zero_and_pi() {
        let g = grid(16);
        assert_eq!(g[7], 0.0);
        assert!((g[15] - PI).abs() < 1e-15);
    }

    #[test]
    fn derivative_of_sin() {
        let n = 64;
        let s = Spectral::new(n);
        let g = grid(n);
        let f: Vec<f64> = g.iter().map(|x| (3.0 * x).sin()).collect();
        let d = s.derivative(&f, 1);
        let d3 = s.derivative(&f, 3);
        for (i, x) in g.iter().enumerate() {
            assert!((d[i] - 3.0 * (3.0 * x).cos()).abs() < 1e-12);
            assert!((d3[i] + 27.0 * (3.0 * x).cos()).abs() < 1e-10);
        }
    }

    #[test]
    fn antiderivative_inverts_derivative() {
        let n = 128;
        let s = Spectral::new(n);
        let g = grid(n);
        let f: Vec<f64> = g.iter().map(|x| (x.cos()).exp()).collect();
        let df = s.derivative(&f, 1);
        let back = s.antiderivative(&df);
        let mean = f.iter().sum::<f64>() / n as f64;
        for i in 0..n {
            assert!((back[i] + mean - f[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_eval_and_upsample_agree() {
        let n = 32;
        let s = Spectral::new(n);
        let g = grid(n);
        let f: Vec<f64> = g.iter().map(|x| (2.0 * x).cos() + 0.3 * (5.0 * x).sin() + 0.1 * (16.0 * (x - g[0])).cos()).collect();
        let hat = s.forward(&f);
        let up = s.upsample_hat(&hat);
        let hf = 2.0 * PI / (OVERSAMPLE * n) as f64;
        for (j, v) in up.iter().enumerate() {
            let x = grid_origin(n) + j as f64 * hf;
            assert!((s.eval(&hat, x, 0) - v).abs() < 1e-12, "j={j}");
        }
        for (i, x) in g.iter().enumerate() {
            assert!((s.eval(&hat, *x, 0) - f[i]).abs() < 1e-12);
        }
        let x: f64 = 0.123;
        let want = -2.0 * (2.0 * x).sin() + 1.5 * (5.0 * x).cos();
        let d = s.eval(&hat, x, 1) + 0.1 * 16.0 * (16.0 * (x - g[0])).sin();
        assert!((d - want).abs() < 1e-10);
    }

    #[test]
    fn fast_interp_is_accurate_for_smooth_fields() {
        let n = 256;
        let s = Spectral::new(n);
        let g = grid(n);
        let f: Vec<f64> = g.iter().map(|x| (2.0 * x.sin()).exp()).collect();
        let hat = s.forward(&f);
        let fi = s.fast_interp(&hat);
        for k in 0..200 {
            let x = -4.0 + 0.0437 * k as f64;
            let want = (2.0 * x.sin()).exp();
            assert!((fi.eval(x) - want).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn shift_moves_profile() {
        let n = 64;
        let s = Spectral::new(n);
        let g = grid(n);
        let f: Vec<f64> = g.iter().map(|x| (x.cos()).exp()).collect();
        let sh = s.shift(&f, 0.3);
        for (i, x) in g.iter().enumerate() {
            assert!((sh[i] - ((x + 0.3).cos()).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.5) - 0.5).abs() < 1e-15);
    }
}
