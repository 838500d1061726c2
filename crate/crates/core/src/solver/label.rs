//! State carried along the 3-characteristic η, stored on a uniform label grid.
//!
//! Every field is a function of the label x: `W = w∘η`, `Z = z∘η`, `K = k∘η`,
//! `A = a∘η`, the displacement `D = η − x` and `E = η_x`. The 1- and
//! 2-characteristics are stored as label positions `g` with `ψ = η(g)` and
//! `φ = η(g)`, together with the running time integrals needed by the
//! Duhamel formulas.

use serde::{Deserialize, Serialize};

use crate::spectral::{grid, Spectral, Stencil};

/// Indices of the components of a [`LabelState`].
pub mod comp {
    pub const W: usize = 0;
    pub const Z: usize = 1;
    pub const K: usize = 2;
    pub const A: usize = 3;
    /// η − x.
    pub const D: usize = 4;
    /// η_x.
    pub const E: usize = 5;
    /// ∫ a∘η dτ.
    pub const INT_A: usize = 6;
    /// ∫ I⁻¹ η_x (c ∂θk q^z)∘η dτ.
    pub const H1: usize = 7;
    /// ∫ I⁻¹ w∘η ∂x(a∘η) dτ.
    pub const H2: usize = 8;
    /// ∫ η_x q^w∘η dτ.
    pub const S1: usize = 9;
    /// ∫ ∂x(k∘η) c∘η dτ.
    pub const S2: usize = 10;
    /// ∫ ∂x(z∘η) dτ.
    pub const S3: usize = 11;
    /// Label displacement of ψ: ψ(x) = η(x + PSI_G).
    pub const PSI_G: usize = 12;
    /// log ψ_x integrated from ∂t log ψ_x = ∂θλ1∘ψ.
    pub const PSI_LOGX: usize = 13;
    /// ∫ (∂θz − 4a/3)∘ψ dτ.
    pub const PSI_J: usize = 14;
    /// ∫ ((8/3)a + c∂θk/12)∘ψ dτ.
    pub const PSI_E: usize = 15;
    /// ∫ e^{PSI_E} ψ_x (c ∂θk q^w)∘ψ dτ.
    pub const PSI_F1: usize = 16;
    /// ∫ e^{PSI_E} ψ_x (∂θa z)∘ψ dτ.
    pub const PSI_F2: usize = 17;
    pub const PHI_G: usize = 18;
    /// log φ_x integrated from ∂t log φ_x = ∂θλ2∘φ.
    pub const PHI_LOGX: usize = 19;
    /// ∫ a∘φ dτ.
    pub const PHI_J: usize = 20;
    /// ∫ 𝓘 c²∘φ dτ.
    pub const PHI_V: usize = 21;
    /// ∫ |∂θw∘φ| dτ.
    pub const PHI_L: usize = 22;
    pub const COUNT: usize = 23;
    /// Components that are spatial fields (filtered after each step).
    pub const FIELDS: [usize; 6] = [W, Z, K, A, D, E];
}

/// Which equations drive the label state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    /// The azimuthal Euler system.
    Full,
    /// Scalar Burgers `∂t u + u ∂θu = 0` carried in W (ψ, φ unused).
    Burgers,
}

/// All label-grid unknowns at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelState {
    pub t: f64,
    pub n: usize,
    pub data: Vec<f64>,
}

impl LabelState {
    /// State at the initial time: identity flows, zero integrals.
    pub fn initial(t: f64, w: &[f64], z: &[f64], k: &[f64], a: &[f64]) -> Self {
        let n = w.len();
        let mut s = Self { t, n, data: vec![0.0; comp::COUNT * n] };
        s.get_mut(comp::W).copy_from_slice(w);
        s.get_mut(comp::Z).copy_from_slice(z);
        s.get_mut(comp::K).copy_from_slice(k);
        s.get_mut(comp::A).copy_from_slice(a);
        s.get_mut(comp::E).fill(1.0);
        s
    }

    pub fn get(&self, c: usize) -> &[f64] {
        &self.data[c * self.n..(c + 1) * self.n]
    }

    pub fn get_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.n..(c + 1) * self.n]
    }

    /// Label grid (identical to the θ grid).
    pub fn labels(&self) -> Vec<f64> {
        grid(self.n)
    }

    /// η(x) on the label grid (universal cover).
    pub fn eta(&self) -> Vec<f64> {
        self.labels().iter().zip(self.get(comp::D)).map(|(x, d)| x + d).collect()
    }

    /// Label positions `g` of ψ or φ (universal cover).
    pub fn flow_labels(&self, g_comp: usize) -> Vec<f64> {
        self.labels().iter().zip(self.get(g_comp)).map(|(x, d)| x + d).collect()
    }

    pub fn min_eta_x(&self) -> (f64, usize) {
        self.get(comp::E).iter().enumerate().fold((f64::INFINITY, 0), |acc, (i, &v)| if v < acc.0 { (v, i) } else { acc })
    }

    /// `y ← y + h·k`.
    pub(crate) fn axpy(&mut self, h: f64, k: &[f64]) {
        for (y, d) in self.data.iter_mut().zip(k) {
            *y += h * d;
        }
    }
}

/// Evaluates label fields and their derivatives at flow positions.
pub(crate) struct FlowSampler {
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    pub k: Vec<f64>,
    pub a: Vec<f64>,
    pub e: Vec<f64>,
    pub wx: Vec<f64>,
    pub zx: Vec<f64>,
    pub kx: Vec<f64>,
    pub ax: Vec<f64>,
}

/// Spectral derivatives of the primary fields in label space.
pub(crate) struct LabelDerivs {
    pub wx: Vec<f64>,
    pub zx: Vec<f64>,
    pub kx: Vec<f64>,
    pub ax: Vec<f64>,
}

pub(crate) struct Engine {
    pub spec: Spectral,
    pub model: Model,
}

impl Engine {
    pub fn new(n: usize, model: Model) -> Self {
        Self { spec: Spectral::new(n), model }
    }

    pub fn derivs(&self, s: &LabelState) -> LabelDerivs {
        let sp = &self.spec;
        let d = |c| sp.derivative(s.get(c), 1);
        match self.model {
            Model::Full => LabelDerivs { wx: d(comp::W), zx: d(comp::Z), kx: d(comp::K), ax: d(comp::A) },
            Model::Burgers => {
                let z = vec![0.0; s.n];
                LabelDerivs { wx: d(comp::W), zx: z.clone(), kx: z.clone(), ax: z }
            }
        }
    }

    /// Time derivative of every component.
    pub fn tendency(&self, s: &LabelState) -> Vec<f64> {
        let n = s.n;
        let mut out = vec![0.0; comp::COUNT * n];
        let sp = &self.spec;
        if self.model == Model::Burgers {
            let wx = sp.derivative(s.get(comp::W), 1);
            out[comp::D * n..(comp::D + 1) * n].copy_from_slice(s.get(comp::W));
            out[comp::E * n..(comp::E + 1) * n].copy_from_slice(&wx);
            return out;
        }
        let hats: Vec<_> = [comp::W, comp::Z, comp::K, comp::A, comp::E].iter().map(|&c| sp.forward(s.get(c))).collect();
        let wx = sp.derivative_hat(&hats[0], 1);
        let zx = sp.derivative_hat(&hats[1], 1);
        let kx = sp.derivative_hat(&hats[2], 1);
        let ax = sp.derivative_hat(&hats[3], 1);
        let (w, z, k, a, e) = (s.get(comp::W), s.get(comp::Z), s.get(comp::K), s.get(comp::A), s.get(comp::E));
        let int_a = s.get(comp::INT_A);
        {
            let (head, _) = out.split_at_mut(comp::PSI_G * n);
            let mut chunks = head.chunks_mut(n);
            let mut next = || chunks.next().unwrap();
            let (dw, dz, dk, da, dd, de) = (next(), next(), next(), next(), next(), next());
            let (dia, dh1, dh2, ds1, ds2, ds3) = (next(), next(), next(), next(), next(), next());
            for i in 0..n {
                let c = 0.5 * (w[i] - z[i]);
                let inv_e = 1.0 / e[i];
                let kt = kx[i] * inv_e;
                let coupling = (w[i] - z[i]).powi(2) * kt / 24.0;
                dw[i] = -8.0 / 3.0 * a[i] * w[i] + coupling;
                dz[i] = 4.0 / 3.0 * c * zx[i] * inv_e - 8.0 / 3.0 * a[i] * z[i] + coupling;
                dk[i] = 2.0 / 3.0 * c * kt;
                let sum = w[i] + z[i];
                da[i] = 2.0 / 3.0 * c * ax[i] * inv_e - 4.0 / 3.0 * a[i] * a[i] + sum * sum / 3.0 - (2.0 * c).powi(2) / 6.0;
                dd[i] = w[i] + z[i] / 3.0;
                de[i] = wx[i] + zx[i] / 3.0;
                dia[i] = a[i];
                let inv_i = (-k[i] / 8.0 + 8.0 / 3.0 * int_a[i]).exp();
                let qz = (zx[i] + 0.25 * c * kx[i]) * inv_e;
                dh1[i] = inv_i * c * kx[i] * qz;
                dh2[i] = inv_i * w[i] * ax[i];
                ds1[i] = wx[i] - 0.25 * c * kx[i];
                ds2[i] = kx[i] * c;
                ds3[i] = zx[i];
            }
        }
        let ik = |h: &[rustfft::num_complex::Complex64]| {
            h.iter()
                .enumerate()
                .map(|(i, c)| {
                    if i == n / 2 {
                        rustfft::num_complex::Complex64::new(0.0, 0.0)
                    } else {
                        c * rustfft::num_complex::Complex64::new(0.0, crate::spectral::wavenumber(i, n))
                    }
                })
                .collect::<Vec<_>>()
        };
        let fi: Vec<_> = hats.iter().map(|h| sp.fast_interp(h)).collect();
        let fd: Vec<_> = hats[..4].iter().map(|h| sp.fast_interp(&ik(h))).collect();
        let labels = s.labels();

        // 1-characteristic ψ
        let (gpsi, lpsi) = (s.get(comp::PSI_G), s.get(comp::PSI_LOGX));
        let epsi = s.get(comp::PSI_E);
        // 2-characteristic φ
        let (gphi, jphi) = (s.get(comp::PHI_G), s.get(comp::PHI_J));
        for i in 0..n {
            let st = Stencil::new(n, labels[i] + gpsi[i]);
            let v = |f: &crate::spectral::FastInterp| f.eval_stencil(&st);
            let (w, z, _k, a, e) = (v(&fi[0]), v(&fi[1]), v(&fi[2]), v(&fi[3]), v(&fi[4]));
            let (wt, zt, kt, at) = (v(&fd[0]) / e, v(&fd[1]) / e, v(&fd[2]) / e, v(&fd[3]) / e);
            let c = 0.5 * (w - z);
            out[comp::PSI_G * n + i] = -4.0 / 3.0 * c / e;
            out[comp::PSI_LOGX * n + i] = wt / 3.0 + zt;
            out[comp::PSI_J * n + i] = zt - 4.0 / 3.0 * a;
            out[comp::PSI_E * n + i] = 8.0 / 3.0 * a + c * kt / 12.0;
            let factor = (epsi[i] + lpsi[i]).exp();
            let qw = wt - 0.25 * c * kt;
            out[comp::PSI_F1 * n + i] = factor * c * kt * qw;
            out[comp::PSI_F2 * n + i] = factor * at * z;

            let st = Stencil::new(n, labels[i] + gphi[i]);
            let v = |f: &crate::spectral::FastInterp| f.eval_stencil(&st);
            let (w, z, a, e) = (v(&fi[0]), v(&fi[1]), v(&fi[3]), v(&fi[4]));
            let (wt, zt) = (v(&fd[0]) / e, v(&fd[1]) / e);
            let c = 0.5 * (w - z);
            out[comp::PHI_G * n + i] = -2.0 / 3.0 * c / e;
            out[comp::PHI_LOGX * n + i] = 2.0 / 3.0 * (wt + zt);
            out[comp::PHI_J * n + i] = a;
            out[comp::PHI_V * n + i] = (8.0 / 3.0 * jphi[i]).exp() * c * c;
            out[comp::PHI_L * n + i] = wt.abs();
        }
        out
    }

    /// Samples label fields at arbitrary label positions.
    pub fn sample(&self, s: &LabelState, positions: &[f64]) -> FlowSampler {
        let sp = &self.spec;
        let n = s.n;
        let hats: Vec<_> = [comp::W, comp::Z, comp::K, comp::A, comp::E].iter().map(|&c| sp.forward(s.get(c))).collect();
        let fi: Vec<_> = hats.iter().map(|h| sp.fast_interp(h)).collect();
        let der: Vec<_> = hats[..4].iter().map(|h| sp.forward(&sp.derivative_hat(h, 1))).map(|h| sp.fast_interp(&h)).collect();
        let mut out = FlowSampler {
            w: Vec::with_capacity(positions.len()),
            z: Vec::new(),
            k: Vec::new(),
            a: Vec::new(),
            e: Vec::new(),
            wx: Vec::new(),
            zx: Vec::new(),
            kx: Vec::new(),
            ax: Vec::new(),
        };
        for &p in positions {
            let st = Stencil::new(n, p);
            out.w.push(fi[0].eval_stencil(&st));
            out.z.push(fi[1].eval_stencil(&st));
            out.k.push(fi[2].eval_stencil(&st));
            out.a.push(fi[3].eval_stencil(&st));
            out.e.push(fi[4].eval_stencil(&st));
            out.wx.push(der[0].eval_stencil(&st));
            out.zx.push(der[1].eval_stencil(&st));
            out.kx.push(der[2].eval_stencil(&st));
            out.ax.push(der[3].eval_stencil(&st));
        }
        out
    }
}
