//! The azimuthal Euler system in Riemann variables (γ = 2, rescaled time).
//!
//! Unknowns are `w = b + c`, `z = b − c`, the entropy `k` and the radial
//! profile `a`, all functions of the angle θ on the circle.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::{grid, Spectral};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EulerError {
    #[error("array length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("degenerate sound speed c = {value:e} at grid index {index}")]
    Degenerate { index: usize, value: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("radius must be positive, got {0}")]
    BadRadius(f64),
}

/// Decay exponents of the initial data derivatives: `‖∂^j a0‖ ≲ ε^{alpha[j]}`,
/// `‖∂^j z0‖ ≲ ε^{beta[j]}`, `‖∂^j k0‖ ≲ ε^{gamma[j]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub alpha: [f64; 6],
    pub beta: [f64; 6],
    pub gamma: [f64; 6],
}

impl Exponents {
    /// Smallest admissible exponents for a given μ.
    pub fn minimal(mu: f64) -> Self {
        let mut alpha = [0.0; 6];
        let mut beta = [0.0; 6];
        let mut gamma = [0.0; 6];
        for j in 1..6 {
            let jf = j as f64;
            beta[j] = mu - jf;
            if j >= 2 {
                alpha[j] = mu + 1.0 - jf;
                gamma[j] = mu - jf;
            }
        }
        gamma[1] = mu;
        Self { alpha, beta, gamma }
    }

    /// Checks the admissibility inequalities, returning the first violation.
    pub fn check(&self, mu: f64) -> Result<(), String> {
        let tol = 1e-12;
        if self.alpha[0] != 0.0 || self.beta[0] != 0.0 || self.gamma[0] != 0.0 || self.alpha[1] != 0.0 {
            return Err("alpha_0, beta_0, gamma_0 and alpha_1 must be 0".into());
        }
        if self.gamma[1] < mu - tol {
            return Err(format!("gamma_1 = {} < mu", self.gamma[1]));
        }
        if self.beta[1] > 0.0 {
            return Err(format!("beta_1 = {} > 0", self.beta[1]));
        }
        for j in 1..6 {
            let jf = j as f64;
            if self.beta[j] < mu - jf - tol {
                return Err(format!("beta_{j} = {} < mu - {j}", self.beta[j]));
            }
            if j >= 2 {
                if self.alpha[j] < mu + 1.0 - jf - tol {
                    return Err(format!("alpha_{j} = {} < mu + 1 - {j}", self.alpha[j]));
                }
                if self.gamma[j] < mu - jf - tol {
                    return Err(format!("gamma_{j} = {} < mu - {j}", self.gamma[j]));
                }
            }
            for (name, e) in [("alpha", self.alpha[j]), ("beta", self.beta[j]), ("gamma", self.gamma[j])] {
                if e > 1.0 {
                    return Err(format!("{name}_{j} = {e} > 1"));
                }
            }
        }
        Ok(())
    }
}

/// Small parameter, data-class margin, adiabatic exponent and grid size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub eps: f64,
    pub mu: f64,
    pub gamma: f64,
    pub exponents: Exponents,
    pub n_grid: usize,
}

impl Params {
    /// Parameters with minimal exponents and γ = 2.
    pub fn new(eps: f64, mu: f64, n_grid: usize) -> Result<Self, EulerError> {
        let p = Self { eps, mu, gamma: 2.0, exponents: Exponents::minimal(mu), n_grid };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<(), EulerError> {
        if !(self.eps > 0.0) {
            return Err(EulerError::InvalidParams(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.mu > 0.0) {
            return Err(EulerError::InvalidParams(format!("mu must be positive, got {}", self.mu)));
        }
        if self.gamma != 2.0 {
            return Err(EulerError::InvalidParams(format!("only gamma = 2 is supported, got {}", self.gamma)));
        }
        if self.n_grid < 4 || self.n_grid % 2 != 0 {
            return Err(EulerError::InvalidParams(format!("n_grid must be even and >= 4, got {}", self.n_grid)));
        }
        self.exponents.check(self.mu).map_err(EulerError::InvalidParams)
    }
}

/// Periodic samples of (w, z, k, a) at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateField {
    pub t: f64,
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    pub k: Vec<f64>,
    pub a: Vec<f64>,
}

impl StateField {
    pub fn new(t: f64, w: Vec<f64>, z: Vec<f64>, k: Vec<f64>, a: Vec<f64>) -> Result<Self, EulerError> {
        let n = w.len();
        for v in [&z, &k, &a] {
            if v.len() != n {
                return Err(EulerError::LengthMismatch(n, v.len()));
            }
        }
        Ok(Self { t, w, z, k, a })
    }

    /// Constant state on a grid of size `n`.
    pub fn constant(n: usize, t: f64, w: f64, z: f64, k: f64, a: f64) -> Self {
        Self { t, w: vec![w; n], z: vec![z; n], k: vec![k; n], a: vec![a; n] }
    }

    pub fn n(&self) -> usize {
        self.w.len()
    }

    pub fn theta(&self) -> Vec<f64> {
        grid(self.n())
    }

    pub fn c(&self) -> Vec<f64> {
        self.w.iter().zip(&self.z).map(|(w, z)| 0.5 * (w - z)).collect()
    }

    /// First index with `c ≤ 0`, if any.
    pub fn first_degenerate(&self) -> Option<(usize, f64)> {
        self.w
            .iter()
            .zip(&self.z)
            .map(|(w, z)| 0.5 * (w - z))
            .enumerate()
            .find(|(_, c)| !(*c > 0.0))
    }

    pub fn is_hyperbolic(&self) -> bool {
        self.first_degenerate().is_none()
    }

    fn require_hyperbolic(&self) -> Result<(), EulerError> {
        match self.first_degenerate() {
            Some((index, value)) => Err(EulerError::Degenerate { index, value }),
            None => Ok(()),
        }
    }
}

/// Time derivatives of (w, z, k, a).
#[derive(Debug, Clone, PartialEq)]
pub struct Tendency {
    pub dw: Vec<f64>,
    pub dz: Vec<f64>,
    pub dk: Vec<f64>,
    pub da: Vec<f64>,
}

/// `w = b + c`, `z = b − c`.
pub fn riemann_from_primitive(b: &[f64], c: &[f64]) -> Result<(Vec<f64>, Vec<f64>), EulerError> {
    if b.len() != c.len() {
        return Err(EulerError::LengthMismatch(b.len(), c.len()));
    }
    Ok((
        b.iter().zip(c).map(|(b, c)| b + c).collect(),
        b.iter().zip(c).map(|(b, c)| b - c).collect(),
    ))
}

/// `b = (w + z)/2`, `c = (w − z)/2`.
pub fn primitive_from_riemann(w: &[f64], z: &[f64]) -> Result<(Vec<f64>, Vec<f64>), EulerError> {
    if w.len() != z.len() {
        return Err(EulerError::LengthMismatch(w.len(), z.len()));
    }
    Ok((
        w.iter().zip(z).map(|(w, z)| 0.5 * (w + z)).collect(),
        w.iter().zip(z).map(|(w, z)| 0.5 * (w - z)).collect(),
    ))
}

/// The three characteristic speeds `(λ1, λ2, λ3)`.
pub fn wave_speeds(w: f64, z: f64) -> (f64, f64, f64) {
    (w / 3.0 + z, 2.0 * (w + z) / 3.0, w + z / 3.0)
}

/// Pointwise source terms `(S_w, S_z, S_a)` given values and `∂θk`.
///
/// `S_k` is zero.
#[inline]
pub fn sources(w: f64, z: f64, a: f64, k_theta: f64) -> (f64, f64, f64) {
    let d = w - z;
    let s = w + z;
    let coupling = d * d * k_theta / 24.0;
    (
        -8.0 / 3.0 * a * w + coupling,
        -8.0 / 3.0 * a * z + coupling,
        -4.0 / 3.0 * a * a + s * s / 3.0 - d * d / 6.0,
    )
}

/// Right-hand side of the system, with spectral derivatives and 2/3-rule dealiasing.
pub fn rhs(state: &StateField) -> Result<Tendency, EulerError> {
    rhs_with(&Spectral::new(state.n()), state)
}

/// [`rhs`] with a caller-provided transform plan.
pub fn rhs_with(spec: &Spectral, state: &StateField) -> Result<Tendency, EulerError> {
    state.require_hyperbolic()?;
    let n = state.n();
    let tr = |f: &[f64]| spec.truncate_two_thirds(f);
    let (w, z, k, a) = (tr(&state.w), tr(&state.z), tr(&state.k), tr(&state.a));
    let (wt, zt, kt, at) = (spec.derivative(&w, 1), spec.derivative(&z, 1), spec.derivative(&k, 1), spec.derivative(&a, 1));
    let mut dw = vec![0.0; n];
    let mut dz = vec![0.0; n];
    let mut dk = vec![0.0; n];
    let mut da = vec![0.0; n];
    for i in 0..n {
        let (l1, l2, l3) = wave_speeds(w[i], z[i]);
        let (sw, sz, sa) = sources(w[i], z[i], a[i], kt[i]);
        dw[i] = -l3 * wt[i] + sw;
        dz[i] = -l1 * zt[i] + sz;
        dk[i] = -l2 * kt[i];
        da[i] = -l2 * at[i] + sa;
    }
    Ok(Tendency { dw: tr(&dw), dz: tr(&dz), dk: tr(&dk), da: tr(&da) })
}

/// Differentiated Riemann variables `q^w = ∂θw − c∂θk/4`, `q^z = ∂θz + c∂θk/4`.
pub fn diff_riemann(state: &StateField) -> (Vec<f64>, Vec<f64>) {
    let spec = Spectral::new(state.n());
    let wt = spec.derivative(&state.w, 1);
    let zt = spec.derivative(&state.z, 1);
    let kt = spec.derivative(&state.k, 1);
    let c = state.c();
    let qw = (0..state.n()).map(|i| wt[i] - 0.25 * c[i] * kt[i]).collect();
    let qz = (0..state.n()).map(|i| zt[i] + 0.25 * c[i] * kt[i]).collect();
    (qw, qz)
}

/// Specific vorticity `ϖ = 4(w + z − ∂θa) c⁻² e^k`.
pub fn specific_vorticity(state: &StateField) -> Result<Vec<f64>, EulerError> {
    state.require_hyperbolic()?;
    let at = Spectral::new(state.n()).derivative(&state.a, 1);
    Ok((0..state.n())
        .map(|i| {
            let c = 0.5 * (state.w[i] - state.z[i]);
            4.0 * (state.w[i] + state.z[i] - at[i]) / (c * c) * state.k[i].exp()
        })
        .collect())
}

/// Polar fields at radius r: `u_r = r a`, `u_θ = r b`, `σ = r c`, `S = k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarProfile {
    pub u_r: Vec<f64>,
    pub u_theta: Vec<f64>,
    pub sigma: Vec<f64>,
    pub entropy: Vec<f64>,
}

pub fn polar_reconstruction(state: &StateField, r: f64) -> Result<PolarProfile, EulerError> {
    if !(r > 0.0) {
        return Err(EulerError::BadRadius(r));
    }
    let (b, c) = primitive_from_riemann(&state.w, &state.z)?;
    Ok(PolarProfile {
        u_r: state.a.iter().map(|a| r * a).collect(),
        u_theta: b.iter().map(|b| r * b).collect(),
        sigma: c.iter().map(|c| r * c).collect(),
        entropy: state.k.clone(),
    })
}
