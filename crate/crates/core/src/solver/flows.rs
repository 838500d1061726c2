//! Flow maps, compositions and the Duhamel identities evaluated on snapshots.

use serde::{Deserialize, Serialize};

use super::label::{comp, Engine, LabelState, Model};
use super::Trajectory;
use crate::euler_core::StateField;
use crate::spectral::{grid, Spectral};

/// The three characteristic flows on the label grid at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub t: f64,
    pub labels: Vec<f64>,
    pub eta: Vec<f64>,
    pub psi: Vec<f64>,
    pub phi: Vec<f64>,
    pub eta_x: Vec<f64>,
    /// `I_t = e^{k∘η/8 − (8/3)∫a∘η}`.
    pub i_t: Vec<f64>,
    /// `𝓘_t = e^{(8/3)∫a∘φ}`.
    pub ifrak: Vec<f64>,
}

impl FlowState {
    pub fn from_label(s: &LabelState) -> Self {
        let spec = Spectral::new(s.n);
        let labels = s.labels();
        let eta = s.eta();
        let d_interp = spec.fast_interp(&spec.forward(s.get(comp::D)));
        let through_eta = |gc: usize| -> Vec<f64> {
            s.flow_labels(gc).iter().map(|&g| g + d_interp.eval(g)).collect()
        };
        let (psi, phi) = (through_eta(comp::PSI_G), through_eta(comp::PHI_G));
        let i_t = s.get(comp::K).iter().zip(s.get(comp::INT_A)).map(|(k, ia)| (k / 8.0 - 8.0 / 3.0 * ia).exp()).collect();
        let ifrak = s.get(comp::PHI_J).iter().map(|j| (8.0 / 3.0 * j).exp()).collect();
        Self { t: s.t, labels, eta, psi, phi, eta_x: s.get(comp::E).to_vec(), i_t, ifrak }
    }
}

/// Composes a periodic field sampled on the θ grid with flow samples by exact
/// trigonometric interpolation.
pub fn compose(field: &[f64], flow: &[f64]) -> Vec<f64> {
    let spec = Spectral::new(field.len());
    let hat = spec.forward(field);
    flow.iter().map(|&x| spec.eval(&hat, x, 0)).collect()
}

/// Which 1- or 2-characteristic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flow {
    Psi,
    Phi,
}

impl Flow {
    fn g_comp(self) -> usize {
        match self {
            Flow::Psi => comp::PSI_G,
            Flow::Phi => comp::PHI_G,
        }
    }
}

/// Values of the label fields at the label positions of ψ or φ, i.e. `f∘ψ`.
pub struct Composed {
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    pub k: Vec<f64>,
    pub a: Vec<f64>,
    pub c: Vec<f64>,
    pub w_theta: Vec<f64>,
    pub z_theta: Vec<f64>,
    pub k_theta: Vec<f64>,
    pub a_theta: Vec<f64>,
}

/// `f∘ψ` or `f∘φ` for every primary field and its θ-derivative.
pub fn composed(s: &LabelState, flow: Flow) -> Composed {
    let engine = Engine::new(s.n, Model::Full);
    let g = s.flow_labels(flow.g_comp());
    let f = engine.sample(s, &g);
    let c = f.w.iter().zip(&f.z).map(|(w, z)| 0.5 * (w - z)).collect();
    let div = |v: &[f64]| v.iter().zip(&f.e).map(|(x, e)| x / e).collect::<Vec<f64>>();
    Composed {
        w_theta: div(&f.wx),
        z_theta: div(&f.zx),
        k_theta: div(&f.kx),
        a_theta: div(&f.ax),
        w: f.w,
        z: f.z,
        k: f.k,
        a: f.a,
        c,
    }
}

/// Label-space θ-derivatives `∂θf∘η = ∂x(f∘η)/η_x` and friends.
pub struct AlongEta {
    pub c: Vec<f64>,
    pub wx: Vec<f64>,
    pub zx: Vec<f64>,
    pub kx: Vec<f64>,
    pub ax: Vec<f64>,
}

pub fn along_eta(s: &LabelState) -> AlongEta {
    let spec = Spectral::new(s.n);
    let d = |c| spec.derivative(s.get(c), 1);
    AlongEta {
        c: s.get(comp::W).iter().zip(s.get(comp::Z)).map(|(w, z)| 0.5 * (w - z)).collect(),
        wx: d(comp::W),
        zx: d(comp::Z),
        kx: d(comp::K),
        ax: d(comp::A),
    }
}

/// Eulerian fields on the uniform θ grid, by inverting the monotone map η.
pub fn eulerian(s: &LabelState) -> StateField {
    let n = s.n;
    let spec = Spectral::new(n);
    let labels = s.labels();
    let d_hat = spec.forward(s.get(comp::D));
    let d_int = spec.fast_interp(&d_hat);
    let eta_at = |x: f64| x + d_int.eval(x);
    // η on an extended label range covering one period of θ
    let theta = grid(n);
    let interps: Vec<_> = [comp::W, comp::Z, comp::K, comp::A].iter().map(|&c| spec.fast_interp(&spec.forward(s.get(c)))).collect();
    let mut out = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let eta0 = eta_at(labels[0]);
    for (i, &th) in theta.iter().enumerate() {
        // shift target into [η(x_0), η(x_0) + 2π)
        let mut target = th;
        while target < eta0 {
            target += 2.0 * std::f64::consts::PI;
        }
        while target >= eta0 + 2.0 * std::f64::consts::PI {
            target -= 2.0 * std::f64::consts::PI;
        }
        let (mut lo, mut hi) = (labels[0], labels[0] + 2.0 * std::f64::consts::PI);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if eta_at(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        let x = 0.5 * (lo + hi);
        for (f, o) in interps.iter().zip(out.iter_mut()) {
            o[i] = f.eval(x);
        }
    }
    let [w, z, k, a] = out;
    StateField { t: s.t, w, z, k, a }
}

/// Which formula to use for a flow derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowDerivative {
    /// ψ_x = (c0/c∘ψ)^{1/2} e^{∫(∂θz − 4a/3)∘ψ}, φ_x = (c0/c∘φ)² e^{−(16/3)∫a∘φ}.
    ClosedForm,
    /// φ_x = c0² 𝓘⁻² c⁻²∘φ (φ only).
    Ifrak,
    /// Spectral derivative of the flow samples.
    Direct,
    /// exp of the integrated log-derivative.
    Integrated,
}

/// Flow derivative samples at one snapshot.
pub fn flow_derivative(s: &LabelState, c0: &[f64], flow: Flow, how: FlowDerivative) -> Vec<f64> {
    let n = s.n;
    match how {
        FlowDerivative::ClosedForm | FlowDerivative::Ifrak => {
            let cf = composed(s, flow);
            (0..n)
                .map(|i| match (flow, how) {
                    (Flow::Psi, FlowDerivative::ClosedForm) => (c0[i] / cf.c[i]).sqrt() * s.get(comp::PSI_J)[i].exp(),
                    (Flow::Phi, FlowDerivative::ClosedForm) => (c0[i] / cf.c[i]).powi(2) * (-16.0 / 3.0 * s.get(comp::PHI_J)[i]).exp(),
                    (Flow::Phi, FlowDerivative::Ifrak) => {
                        let ifr = (8.0 / 3.0 * s.get(comp::PHI_J)[i]).exp();
                        c0[i] * c0[i] / (ifr * ifr * cf.c[i] * cf.c[i])
                    }
                    (Flow::Psi, _) => f64::NAN,
                    _ => unreachable!(),
                })
                .collect()
        }
        FlowDerivative::Direct => {
            let spec = Spectral::new(n);
            let f = FlowState::from_label(s);
            let samples = match flow {
                Flow::Psi => f.psi,
                Flow::Phi => f.phi,
            };
            let disp: Vec<f64> = samples.iter().zip(&f.labels).map(|(p, x)| p - x).collect();
            spec.derivative(&disp, 1).iter().map(|d| 1.0 + d).collect()
        }
        FlowDerivative::Integrated => {
            let c = match flow {
                Flow::Psi => comp::PSI_LOGX,
                Flow::Phi => comp::PHI_LOGX,
            };
            s.get(c).iter().map(|v| v.exp()).collect()
        }
    }
}

/// Both sides of one identity, sampled on the label grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sides {
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl Sides {
    pub fn abs_residual(&self) -> f64 {
        self.lhs.iter().zip(&self.rhs).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// ∞-norm residual divided by the larger ∞-norm of the two sides.
    ///
    /// When both sides are below [`Sides::ABS_FLOOR`] (an identity whose sides
    /// vanish) the absolute residual is returned instead.
    pub fn rel_residual(&self) -> f64 {
        let scale = self.lhs.iter().chain(&self.rhs).fold(0.0f64, |m, v| m.max(v.abs()));
        if scale <= Self::ABS_FLOOR {
            self.abs_residual()
        } else {
            self.abs_residual() / scale
        }
    }

    pub const ABS_FLOOR: f64 = 1e-10;
}

/// Initial-data derivatives used by the Duhamel formulas.
pub struct InitialDerivs {
    pub w0x: Vec<f64>,
    pub z0x: Vec<f64>,
    pub k0x: Vec<f64>,
    pub c0: Vec<f64>,
    pub k0: Vec<f64>,
    pub varpi0: Vec<f64>,
}

impl InitialDerivs {
    pub fn new(data: &StateField) -> Self {
        let spec = Spectral::new(data.n());
        let ax = spec.derivative(&data.a, 1);
        let c0 = data.c();
        let varpi0 = (0..data.n())
            .map(|i| 4.0 * (data.w[i] + data.z[i] - ax[i]) / (c0[i] * c0[i]) * data.k[i].exp())
            .collect();
        Self {
            w0x: spec.derivative(&data.w, 1),
            z0x: spec.derivative(&data.z, 1),
            k0x: spec.derivative(&data.k, 1),
            c0,
            k0: data.k.clone(),
            varpi0,
        }
    }
}

/// `η_x q^w∘η = I_t[(w0′ − c0k0′/4)e^{−k0/8} + (1/12)∫… − (8/3)∫…]`.
pub fn duhamel_qw_eta(s: &LabelState, init: &InitialDerivs) -> Sides {
    let ae = along_eta(s);
    let n = s.n;
    let (k, ia, h1, h2) = (s.get(comp::K), s.get(comp::INT_A), s.get(comp::H1), s.get(comp::H2));
    let lhs = (0..n).map(|i| ae.wx[i] - 0.25 * ae.c[i] * ae.kx[i]).collect();
    let rhs = (0..n)
        .map(|i| {
            let it = (k[i] / 8.0 - 8.0 / 3.0 * ia[i]).exp();
            it * ((init.w0x[i] - 0.25 * init.c0[i] * init.k0x[i]) * (-init.k0[i] / 8.0).exp() + h1[i] / 12.0 - 8.0 / 3.0 * h2[i])
        })
        .collect();
    Sides { lhs, rhs }
}

/// `η_x = 1 + ∫η_x q^w∘η + ¼∫∂x(k∘η)c∘η + ⅓∫∂x(z∘η)`.
pub fn duhamel_eta_x(s: &LabelState) -> Sides {
    let n = s.n;
    let (s1, s2, s3) = (s.get(comp::S1), s.get(comp::S2), s.get(comp::S3));
    Sides { lhs: s.get(comp::E).to_vec(), rhs: (0..n).map(|i| 1.0 + s1[i] + 0.25 * s2[i] + s3[i] / 3.0).collect() }
}

/// `q^z∘ψ ψ_x = e^{−E}[(z0′ + c0k0′/4) − (1/12)∫e^{E}ψ_x(c∂θk q^w)∘ψ − (8/3)∫e^{E}ψ_x(∂θa z)∘ψ]`.
pub fn duhamel_qz_psi(s: &LabelState, init: &InitialDerivs) -> Sides {
    let n = s.n;
    let cf = composed(s, Flow::Psi);
    let psi_x = flow_derivative(s, &init.c0, Flow::Psi, FlowDerivative::Integrated);
    let (e, f1, f2) = (s.get(comp::PSI_E), s.get(comp::PSI_F1), s.get(comp::PSI_F2));
    let lhs = (0..n).map(|i| (cf.z_theta[i] + 0.25 * cf.c[i] * cf.k_theta[i]) * psi_x[i]).collect();
    let rhs = (0..n)
        .map(|i| (-e[i]).exp() * (init.z0x[i] + 0.25 * init.c0[i] * init.k0x[i] - f1[i] / 12.0 - 8.0 / 3.0 * f2[i]))
        .collect();
    Sides { lhs, rhs }
}

/// `ϖ∘φ = ϖ0𝓘_t + (4/3)c0⁻²k0′e^{k0}𝓘_t∫𝓘_τ c²∘φ dτ`.
pub fn vorticity_duhamel(s: &LabelState, init: &InitialDerivs) -> Sides {
    let n = s.n;
    let cf = composed(s, Flow::Phi);
    let lhs = (0..n).map(|i| varpi(cf.w[i], cf.z[i], cf.k[i], cf.a_theta[i])).collect();
    let (j, v) = (s.get(comp::PHI_J), s.get(comp::PHI_V));
    let rhs = (0..n)
        .map(|i| {
            let ifr = (8.0 / 3.0 * j[i]).exp();
            init.varpi0[i] * ifr + 4.0 / 3.0 * init.k0x[i] * init.k0[i].exp() / (init.c0[i] * init.c0[i]) * ifr * v[i]
        })
        .collect();
    Sides { lhs, rhs }
}

/// Pointwise specific vorticity.
pub fn varpi(w: f64, z: f64, k: f64, a_theta: f64) -> f64 {
    let c = 0.5 * (w - z);
    4.0 * (w + z - a_theta) / (c * c) * k.exp()
}

/// `k∘φ − k0` on the label grid.
pub fn transport_k_phi(s: &LabelState, init: &InitialDerivs) -> Sides {
    let cf = composed(s, Flow::Phi);
    Sides { lhs: cf.k, rhs: init.k0.clone() }
}

/// Relative ∞-norm residuals of the three Duhamel identities at one snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DuhamelResidual {
    pub t: f64,
    pub qw_eta: f64,
    pub eta_x: f64,
    pub qz_psi: f64,
}

/// Duhamel residuals over every snapshot of a full-system trajectory.
pub fn duhamel_residuals(traj: &Trajectory) -> Vec<DuhamelResidual> {
    let init = InitialDerivs::new(&traj.initial);
    traj.snapshots
        .iter()
        .map(|sn| DuhamelResidual {
            t: sn.t(),
            qw_eta: duhamel_qw_eta(&sn.state, &init).rel_residual(),
            eta_x: duhamel_eta_x(&sn.state).rel_residual(),
            qz_psi: duhamel_qz_psi(&sn.state, &init).rel_residual(),
        })
        .collect()
}

/// Closed-form flow derivative at every snapshot.
pub fn flow_derivative_closed_form(traj: &Trajectory, flow: Flow) -> Vec<(f64, Vec<f64>)> {
    let c0 = traj.initial.c();
    traj.snapshots.iter().map(|sn| (sn.t(), flow_derivative(&sn.state, &c0, flow, FlowDerivative::ClosedForm))).collect()
}
