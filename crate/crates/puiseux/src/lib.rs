//! Fractional-series inversion of the quartic `−x + a3 y³ + a4 y⁴ = 0`.
//!
//! The normalized branch `ȳ(u) = Σ (−1)ⁿ (cₙ/3ⁿ) u^{n+1}` solves `ȳ³ + ȳ⁴ = u³`;
//! the scaled branch is `y(x) = (a3/a4)·ȳ(a3^{−4/3} a4 x^{1/3})`.

use std::sync::OnceLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

/// Coefficients up to this index are computed in exact rational arithmetic.
pub const EXACT_ORDER: usize = 24;
/// Largest supported truncation order.
pub const MAX_ORDER: usize = 400;
/// Safety fraction r/R³ in the precondition `|a4³x| < r·a3⁴`.
pub const SAFETY: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PuiseuxError {
    #[error("a3 must be nonzero and finite, got {0}")]
    BadA3(f64),
    #[error("non-finite input")]
    NonFinite,
    #[error("order {requested} exceeds the supported maximum {max}")]
    Order { requested: usize, max: usize },
    #[error("|a4³x| / a3⁴ = {value:.3e} is outside the safety region (< {bound:.3e})")]
    OutsideSafety { value: f64, bound: f64 },
    #[error("|θ − θ0| = {delta:.3e} exceeds the window {bound:.3e} = c1·a3⁴/L³")]
    Window { delta: f64, bound: f64 },
    #[error("|a4(x)| = {a4:.3e} exceeds L/24 = {bound:.3e}; the fourth-derivative bound is wrong")]
    FourthBound { a4: f64, bound: f64 },
    #[error("θ is not monotone on |x − x0| < {0:.3e}")]
    NotMonotone(f64),
}

fn conv<T: Clone + Zero + std::ops::Mul<Output = T>>(a: &[T], b: &[T], n: usize) -> T {
    let mut s = T::zero();
    for i in 0..=n {
        s = s + a[i].clone() * b[n - i].clone();
    }
    s
}

/// Exact `c_0..=c_{n_max}` from the recursion
/// `cₙ = Σ_{k1+..+k4=n−1} c_{k1}c_{k2}c_{k3}c_{k4} − (1/3) Σ_{m1+m2+m3=n, mᵢ≤n−1} c_{m1}c_{m2}c_{m3}`.
pub fn exact_coefficients(n_max: usize) -> Vec<BigRational> {
    let third = BigRational::new(BigInt::one(), BigInt::from(3));
    let mut c = vec![BigRational::one()];
    for n in 1..=n_max {
        // c_n enters neither sum once it is zeroed, which enforces mᵢ ≤ n − 1.
        let mut cc = c.clone();
        cc.push(BigRational::zero());
        let p2: Vec<BigRational> = (0..=n).map(|j| conv(&cc, &cc, j)).collect();
        let p3: Vec<BigRational> = (0..=n).map(|j| conv(&cc, &p2, j)).collect();
        let quartic = conv(&cc, &p3, n - 1);
        c.push(quartic - &third * &p3[n]);
    }
    c
}

/// Normalized coefficients `eₙ = (−1)ⁿ cₙ/3ⁿ` for n ≤ MAX_ORDER, exact-rounded up to EXACT_ORDER.
fn normalized() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let exact = exact_coefficients(EXACT_ORDER);
        let mut e: Vec<f64> = exact
            .iter()
            .enumerate()
            .map(|(n, c)| {
                let v = (c / BigRational::from_integer(BigInt::from(3).pow(n as u32))).to_f64().expect("finite coefficient");
                if n % 2 == 0 { v } else { -v }
            })
            .collect();
        // Same recursion for dₙ = cₙ/3ⁿ: dₙ = (Σ⁴ₙ₋₁(d) − Σ³ₙ(d))/3.
        let mut c: Vec<f64> = e.iter().enumerate().map(|(n, v)| if n % 2 == 0 { *v } else { -*v }).collect();
        for n in e.len()..=MAX_ORDER {
            let mut cc = c.clone();
            cc.push(0.0);
            let p2: Vec<f64> = (0..=n).map(|j| conv(&cc, &cc, j)).collect();
            let p3: Vec<f64> = (0..=n).map(|j| conv(&cc, &p2, j)).collect();
            let v = (conv(&cc, &p3, n - 1) - p3[n]) / 3.0;
            c.push(v);
            e.push(if n % 2 == 0 { v } else { -v });
        }
        e
    })
}

/// `c_0..=c_{n_max}` as floats (exact up to rounding for n ≤ EXACT_ORDER).
pub fn coefficients(n_max: usize) -> Result<Vec<f64>, PuiseuxError> {
    if n_max > MAX_ORDER {
        return Err(PuiseuxError::Order { requested: n_max, max: MAX_ORDER });
    }
    Ok(normalized()[..=n_max].iter().enumerate().map(|(n, e)| e.abs() * 3f64.powi(n as i32)).collect())
}

/// Convergence radius of ȳ estimated by the Domb–Sykes extrapolation of coefficient ratios.
pub fn radius_estimate() -> f64 {
    static R: OnceLock<f64> = OnceLock::new();
    *R.get_or_init(|| {
        let e = normalized();
        let n = MAX_ORDER;
        let ratio = |k: usize| (e[k] / e[k - 1]).abs();
        let inv = n as f64 * ratio(n) - (n - 1) as f64 * ratio(n - 1);
        1.0 / inv
    })
}

/// `y = Σ_{j=0}^{order} eⱼ u^{j+1}` by Horner.
fn eval_normalized(u: f64, order: usize) -> f64 {
    let e = normalized();
    let mut s = 0.0;
    for j in (0..=order).rev() {
        s = s * u + e[j];
    }
    s * u
}

/// Truncated scaled series of the quartic branch.
#[derive(Debug, Clone, PartialEq)]
pub struct PuiseuxSeries {
    /// c_0..=c_order.
    pub c: Vec<f64>,
    pub a3: f64,
    pub a4: f64,
    pub order: usize,
    /// Estimated radius of convergence in the normalized variable.
    pub radius_est: f64,
}

impl PuiseuxSeries {
    pub fn new(a3: f64, a4: f64, order: usize) -> Result<Self, PuiseuxError> {
        if !(a3.is_finite() && a3 != 0.0) {
            return Err(PuiseuxError::BadA3(a3));
        }
        if !a4.is_finite() {
            return Err(PuiseuxError::NonFinite);
        }
        Ok(Self { c: coefficients(order)?, a3, a4, order, radius_est: radius_estimate() })
    }

    /// Bound on `|a4³x|/a3⁴` for evaluation.
    pub fn safety_bound(&self) -> f64 {
        SAFETY * self.radius_est.powi(3)
    }

    /// Normalized variable `u = a3^{−4/3} a4 x^{1/3}`.
    pub fn normalized_variable(&self, x: f64) -> f64 {
        self.a4 * x.cbrt() / self.a3.cbrt().powi(4)
    }

    /// ȳ(u) truncated at `order`.
    pub fn normalized(&self, u: f64) -> f64 {
        eval_normalized(u, self.order)
    }

    /// y(x); errors outside the safety region.
    pub fn eval(&self, x: f64) -> Result<f64, PuiseuxError> {
        if !x.is_finite() {
            return Err(PuiseuxError::NonFinite);
        }
        if self.a4 == 0.0 {
            return Ok((x / self.a3).cbrt());
        }
        let value = (self.a4.powi(3) * x).abs() / self.a3.powi(4);
        let bound = self.safety_bound();
        if value >= bound {
            return Err(PuiseuxError::OutsideSafety { value, bound });
        }
        Ok(self.a3 / self.a4 * self.normalized(self.normalized_variable(x)))
    }
}

/// Solves `−x + a3 y³ + a4 y⁴ = 0` on the small branch by the series truncated at `order`.
pub fn invert_quartic(a3: f64, a4: f64, x: f64, order: usize) -> Result<f64, PuiseuxError> {
    PuiseuxSeries::new(a3, a4, order)?.eval(x)
}

/// Smallest truncation order whose geometric tail bound is below `tol` (relative), capped at MAX_ORDER.
pub fn order_for(a3: f64, a4: f64, x: f64, tol: f64) -> usize {
    if a4 == 0.0 || x == 0.0 {
        return 0;
    }
    let q = (a4.powi(3) * x).abs().cbrt() / a3.abs().powf(4.0 / 3.0) / radius_estimate();
    if q >= 1.0 {
        return MAX_ORDER;
    }
    let n = (tol.ln() / q.ln()).ceil().max(0.0) as usize;
    (n + 2).min(MAX_ORDER)
}

/// The three-term expansion `a3^{−1/3}x^{1/3} − (1/3)a3^{−5/3}a4x^{2/3} + (1/3)a3^{−3}a4²x`.
pub fn leading_terms(a3: f64, a4: f64, x: f64) -> f64 {
    let (r, s) = (a3.cbrt(), x.cbrt());
    s / r - a4 * s * s / (3.0 * r.powi(5)) + a4 * a4 * x / (3.0 * a3.powi(3))
}

/// Scale `a3^{−13/3}|a4|³|x|^{4/3}` of the remainder after [`leading_terms`].
pub fn remainder_scale(a3: f64, a4: f64, x: f64) -> f64 {
    a3.abs().cbrt().powi(-13) * a4.abs().powi(3) * x.abs().cbrt().powi(4)
}

/// Constants of the perturbed inversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbedConfig {
    /// Window constant c1 in `|θ − θ0| ≤ c1·a3⁴/L³`.
    pub c1: f64,
    /// Remainder constant C2 (an empirical stand-in).
    pub c2: f64,
}

impl Default for PerturbedConfig {
    fn default() -> Self {
        Self { c1: 23.0 / 24.0, c2: 1.0 }
    }
}

/// Inversion of a C^{3,1} θ near a cubic critical point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbedInversion {
    /// x − x0 from monotone root finding.
    pub dx: f64,
    /// `a4(x) = (θ(x) − θ0 − a3(x−x0)³)/(x−x0)⁴`.
    pub a4: f64,
    /// The three-term expansion with a4(x).
    pub three_term: f64,
    /// `dx − three_term`.
    pub remainder: f64,
    /// `C2·a3^{−13/3}|a4(x)|³|θ−θ0|^{4/3}`.
    pub remainder_bound: f64,
}

impl PerturbedInversion {
    /// Whether the remainder respects its bound (with a rounding allowance).
    pub fn certified(&self) -> bool {
        self.remainder.abs() <= self.remainder_bound + 64.0 * f64::EPSILON * self.dx.abs()
    }
}

/// Inverts `θ(x) = target` near x0, where `θ(x) = θ0 + a3(x−x0)³ + a4(x)(x−x0)⁴` and `|θ⁗| ≤ l`.
///
/// The root is found by bisection on `|x − x0| < 6|a3|/L`, where θ is monotone.
pub fn perturbed_invert<F: Fn(f64) -> f64>(
    theta: F,
    x0: f64,
    a3: f64,
    l: f64,
    target: f64,
    cfg: &PerturbedConfig,
) -> Result<PerturbedInversion, PuiseuxError> {
    if !(a3.is_finite() && a3 != 0.0) {
        return Err(PuiseuxError::BadA3(a3));
    }
    if !(l.is_finite() && l > 0.0 && target.is_finite() && x0.is_finite()) {
        return Err(PuiseuxError::NonFinite);
    }
    let theta0 = theta(x0);
    let delta = target - theta0;
    let window = cfg.c1 * a3.powi(4) / l.powi(3);
    if delta.abs() > window {
        return Err(PuiseuxError::Window { delta: delta.abs(), bound: window });
    }
    let half = 6.0 * a3.abs() / l;
    let sign = a3.signum();
    let g = |d: f64| sign * (theta(x0 + d) - target);
    let (mut lo, mut hi) = (-half, half);
    if !(g(lo) <= 0.0 && g(hi) >= 0.0) {
        return Err(PuiseuxError::NotMonotone(half));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let dx = if g(lo).abs() <= g(hi).abs() { lo } else { hi };
    let a4 = if dx == 0.0 { 0.0 } else { (theta(x0 + dx) - theta0 - a3 * dx.powi(3)) / dx.powi(4) };
    if a4.abs() > l / 24.0 * (1.0 + 1e-6) + 1e-12 {
        return Err(PuiseuxError::FourthBound { a4, bound: l / 24.0 });
    }
    let three_term = leading_terms(a3, a4, delta);
    Ok(PerturbedInversion {
        dx,
        a4,
        three_term,
        remainder: dx - three_term,
        remainder_bound: cfg.c2 * remainder_scale(a3, a4, delta),
    })
}
