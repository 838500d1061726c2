//! Residuals of exact transport identities and a-priori envelope checks.
//!
//! Transport identities are checked by differencing stored compositions in
//! time over 5-snapshot probe clusters (4th-order centred differences) and
//! comparing with right sides built from spectral θ-derivatives.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::solver::{self, comp, InitialDerivs, LabelState, Model, Sides, Trajectory};
use crate::spectral::Spectral;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("no complete 5-snapshot probe cluster in the trajectory (probes: {0:?})")]
    NoProbes(Vec<f64>),
    #[error("degenerate sound speed at t = {t}")]
    Degenerate { t: f64 },
    #[error("identities need a full-system trajectory")]
    NotFull,
}

/// Exact transport identities along the three characteristic families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Identity {
    CPsi,
    CThetaPsi,
    KPsi,
    KThetaPsi,
    ZPsi,
    ZThetaPsi,
    APsi,
    AThetaPsi,
    CPhi,
    CThetaPhi,
    KThetaPhi,
    CEta,
    KEta,
    KThetaEta,
}

/// Characteristic family along which a quantity is composed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Along {
    Psi,
    Phi,
    Eta,
}

impl Identity {
    pub const DEFAULT: [Identity; 5] = [Identity::CPsi, Identity::KPsi, Identity::CPhi, Identity::CEta, Identity::KEta];
    pub const ALL: [Identity; 14] = [
        Identity::CPsi,
        Identity::CThetaPsi,
        Identity::KPsi,
        Identity::KThetaPsi,
        Identity::ZPsi,
        Identity::ZThetaPsi,
        Identity::APsi,
        Identity::AThetaPsi,
        Identity::CPhi,
        Identity::CThetaPhi,
        Identity::KThetaPhi,
        Identity::CEta,
        Identity::KEta,
        Identity::KThetaEta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Identity::CPsi => "c_psi",
            Identity::CThetaPsi => "c_theta_psi",
            Identity::KPsi => "k_psi",
            Identity::KThetaPsi => "k_theta_psi",
            Identity::ZPsi => "z_psi",
            Identity::ZThetaPsi => "z_theta_psi",
            Identity::APsi => "a_psi",
            Identity::AThetaPsi => "a_theta_psi",
            Identity::CPhi => "c_phi",
            Identity::CThetaPhi => "c_theta_phi",
            Identity::KThetaPhi => "k_theta_phi",
            Identity::CEta => "c_eta",
            Identity::KEta => "k_eta",
            Identity::KThetaEta => "k_theta_eta",
        }
    }

    pub fn along(self) -> Along {
        use Identity::*;
        match self {
            CPsi | CThetaPsi | KPsi | KThetaPsi | ZPsi | ZThetaPsi | APsi | AThetaPsi => Along::Psi,
            CPhi | CThetaPhi | KThetaPhi => Along::Phi,
            CEta | KEta | KThetaEta => Along::Eta,
        }
    }

    /// The composed quantity Q in `−(3/2)∂t(Q∘flow) = R∘flow`.
    fn quantity(self, f: &ThetaFields) -> Vec<f64> {
        use Identity::*;
        match self {
            CPsi | CPhi | CEta => f.c.clone(),
            CThetaPsi | CThetaPhi => f.ct.clone(),
            KPsi | KEta => f.k.clone(),
            KThetaPsi | KThetaPhi | KThetaEta => f.kt.clone(),
            ZPsi => f.z.clone(),
            ZThetaPsi => f.zt.clone(),
            APsi => f.a.clone(),
            AThetaPsi => f.at.clone(),
        }
    }

    /// The right side R.
    fn right_side(self, f: &ThetaFields) -> Vec<f64> {
        use Identity::*;
        (0..f.c.len())
            .map(|i| {
                let (w, z, k, a, c) = (f.w[i], f.z[i], f.k[i], f.a[i], f.c[i]);
                let (wt, zt, kt, at, ct) = (f.wt[i], f.zt[i], f.kt[i], f.at[i], f.ct[i]);
                let (wtt, ztt, ktt, att, ctt) = (f.wtt[i], f.ztt[i], f.ktt[i], f.att[i], f.ctt[i]);
                let _ = (w, k);
                match self {
                    CPsi => (wt + 4.0 * a) * c,
                    CThetaPsi => c * wtt + 1.5 * ct * wt + 1.5 * ct * zt + 4.0 * (at * c + a * ct),
                    KPsi => c * kt,
                    KThetaPsi => c * ktt + kt * wt + kt * zt,
                    ZPsi => 4.0 * a * z - 0.25 * c * c * kt,
                    ZThetaPsi => {
                        0.5 * wt * zt + 1.5 * zt * zt - 0.5 * c * ct * kt - 0.25 * c * c * ktt + 4.0 * (at * z + a * zt)
                    }
                    APsi => at * c + 2.0 * a * a - c * c - 4.0 * c * z - 2.0 * z * z,
                    AThetaPsi => {
                        att * c + 2.0 * at * ct + 2.0 * at * zt + 4.0 * a * at - ((2.0 * c + 4.0 * z) * ct + (4.0 * c + 4.0 * z) * zt)
                    }
                    CPhi => 4.0 * a * c + c * ct + c * zt,
                    CThetaPhi => c * ctt + c * ztt + 3.0 * ct * ct + 3.0 * ct * zt + 4.0 * (at * c + a * ct),
                    KThetaPhi => kt * wt + kt * zt,
                    CEta => (zt + 4.0 * a) * c,
                    KEta => -c * kt,
                    KThetaEta => wt * kt + zt * kt - c * ktt,
                }
            })
            .collect()
    }
}

/// Residual series of one identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityResidual {
    pub name: String,
    pub times: Vec<f64>,
    /// Relative ∞-norm residual at each time.
    pub residuals: Vec<f64>,
    /// Observed order under refinement; only set from at least three resolutions.
    pub slope: Option<f64>,
}

impl IdentityResidual {
    pub fn new(name: &str) -> Self {
        Self { name: name.into(), times: Vec::new(), residuals: Vec::new(), slope: None }
    }

    pub fn max(&self) -> f64 {
        self.residuals.iter().cloned().fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.residuals.iter().all(|r| r.is_finite())
    }
}

/// Observed convergence order from `(h, error)` pairs: the least-squares slope of log error against log h.
pub fn refinement_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 3 || points.iter().any(|&(h, e)| !(h > 0.0 && e > 0.0)) {
        return None;
    }
    let x: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Sets `slope` on each residual from runs at several resolutions, keyed by step size h.
/// Each run's residual is its maximum over time.
pub fn attach_slopes(runs: &[(f64, Vec<IdentityResidual>)]) -> Vec<IdentityResidual> {
    let Some((_, first)) = runs.last() else { return Vec::new() };
    first
        .iter()
        .map(|r| {
            let pts: Vec<(f64, f64)> = runs
                .iter()
                .filter_map(|(h, rs)| rs.iter().find(|x| x.name == r.name).map(|x| (*h, x.max())))
                .collect();
            IdentityResidual { slope: refinement_slope(&pts), ..r.clone() }
        })
        .collect()
}

/// Label-grid samples of every field and its first two θ-derivatives (`∂θ = η_x⁻¹∂x`).
struct ThetaFields {
    w: Vec<f64>,
    z: Vec<f64>,
    k: Vec<f64>,
    a: Vec<f64>,
    c: Vec<f64>,
    wt: Vec<f64>,
    zt: Vec<f64>,
    kt: Vec<f64>,
    at: Vec<f64>,
    ct: Vec<f64>,
    wtt: Vec<f64>,
    ztt: Vec<f64>,
    ktt: Vec<f64>,
    att: Vec<f64>,
    ctt: Vec<f64>,
}

impl ThetaFields {
    fn new(spec: &Spectral, s: &LabelState) -> Self {
        let e = s.get(comp::E);
        let dt = |f: &[f64]| -> Vec<f64> { spec.derivative(f, 1).iter().zip(e).map(|(d, e)| d / e).collect() };
        let (w, z, k, a) = (s.get(comp::W).to_vec(), s.get(comp::Z).to_vec(), s.get(comp::K).to_vec(), s.get(comp::A).to_vec());
        let c: Vec<f64> = w.iter().zip(&z).map(|(w, z)| 0.5 * (w - z)).collect();
        let (wt, zt, kt, at, ct) = (dt(&w), dt(&z), dt(&k), dt(&a), dt(&c));
        let (wtt, ztt, ktt, att, ctt) = (dt(&wt), dt(&zt), dt(&kt), dt(&at), dt(&ct));
        Self { w, z, k, a, c, wt, zt, kt, at, ct, wtt, ztt, ktt, att, ctt }
    }
}

/// Samples a label-grid function at the positions of a flow by exact trigonometric interpolation.
fn along(spec: &Spectral, s: &LabelState, q: &[f64], flow: Along) -> Vec<f64> {
    let g = match flow {
        Along::Eta => return q.to_vec(),
        Along::Psi => s.flow_labels(comp::PSI_G),
        Along::Phi => s.flow_labels(comp::PHI_G),
    };
    let hat = spec.forward(q);
    g.iter().map(|&x| spec.eval(&hat, x, 0)).collect()
}

/// Snapshot indices of each complete probe cluster, ordered by offset −2..2.
pub fn probe_clusters(traj: &Trajectory) -> Vec<[usize; 5]> {
    let h = traj.config.probe_spacing;
    let mut out = Vec::new();
    for &c in &traj.config.probes {
        let mut idx = [usize::MAX; 5];
        for (j, slot) in idx.iter_mut().enumerate() {
            let t = c + (j as f64 - 2.0) * h;
            if let Some(i) = traj.snapshots.iter().position(|sn| (sn.t() - t).abs() <= 1e-11 * (1.0 + t.abs())) {
                *slot = i;
            }
        }
        if idx.iter().all(|&i| i != usize::MAX) {
            out.push(idx);
        }
    }
    out
}

fn centred_derivative(v: [&[f64]; 5], h: f64) -> Vec<f64> {
    (0..v[0].len()).map(|i| (v[0][i] - 8.0 * v[1][i] + 8.0 * v[3][i] - v[4][i]) / (12.0 * h)).collect()
}

/// Residuals of the chosen transport identities at every probe cluster.
pub fn appendix_identity_residuals(traj: &Trajectory, which: &[Identity]) -> Result<Vec<IdentityResidual>, DiagnosticsError> {
    if traj.model() != Model::Full {
        return Err(DiagnosticsError::NotFull);
    }
    let clusters = probe_clusters(traj);
    if clusters.is_empty() {
        return Err(DiagnosticsError::NoProbes(traj.config.probes.clone()));
    }
    let h = traj.config.probe_spacing;
    let spec = Spectral::new(traj.last().state.n);
    let mut out: Vec<IdentityResidual> = which.iter().map(|id| IdentityResidual::new(id.name())).collect();
    for cl in clusters {
        let states: Vec<&LabelState> = cl.iter().map(|&i| &traj.snapshots[i].state).collect();
        let fields: Vec<ThetaFields> = states.iter().map(|s| ThetaFields::new(&spec, s)).collect();
        for (id, res) in which.iter().zip(out.iter_mut()) {
            let q: Vec<Vec<f64>> = (0..5).map(|j| along(&spec, states[j], &id.quantity(&fields[j]), id.along())).collect();
            let dq = centred_derivative([&q[0], &q[1], &q[2], &q[3], &q[4]], h);
            let lhs: Vec<f64> = dq.iter().map(|d| -1.5 * d).collect();
            let rhs = along(&spec, states[2], &id.right_side(&fields[2]), id.along());
            res.times.push(states[2].t);
            res.residuals.push(Sides { lhs, rhs }.rel_residual());
        }
    }
    Ok(out)
}

/// ϖ∘η on the label grid.
fn varpi_grid(f: &ThetaFields) -> Vec<f64> {
    (0..f.c.len()).map(|i| solver::varpi(f.w[i], f.z[i], f.k[i], f.at[i])).collect()
}

/// Residuals of the vorticity evolution along φ (at probe clusters) and of its
/// Duhamel form (at every snapshot after the first).
pub fn vorticity_checks(traj: &Trajectory) -> Result<(IdentityResidual, IdentityResidual), DiagnosticsError> {
    if traj.model() != Model::Full {
        return Err(DiagnosticsError::NotFull);
    }
    let spec = Spectral::new(traj.last().state.n);
    let h = traj.config.probe_spacing;
    let mut evo = IdentityResidual::new("varpi_evolution_phi");
    for cl in probe_clusters(traj) {
        let states: Vec<&LabelState> = cl.iter().map(|&i| &traj.snapshots[i].state).collect();
        let mut q = Vec::with_capacity(5);
        let mut center = None;
        for (j, s) in states.iter().enumerate() {
            let f = ThetaFields::new(&spec, s);
            if f.c.iter().any(|c| !(*c > 0.0)) {
                return Err(DiagnosticsError::Degenerate { t: s.t });
            }
            let vp = varpi_grid(&f);
            q.push(along(&spec, s, &vp, Along::Phi));
            if j == 2 {
                let r: Vec<f64> = (0..vp.len()).map(|i| 8.0 / 3.0 * f.a[i] * vp[i] + 4.0 / 3.0 * f.k[i].exp() * f.kt[i]).collect();
                center = Some(along(&spec, s, &r, Along::Phi));
            }
        }
        let lhs = centred_derivative([&q[0], &q[1], &q[2], &q[3], &q[4]], h);
        evo.times.push(states[2].t);
        evo.residuals.push(Sides { lhs, rhs: center.expect("cluster has a centre") }.rel_residual());
    }
    let init = InitialDerivs::new(&traj.initial);
    let mut duh = IdentityResidual::new("varpi_duhamel_phi");
    for sn in traj.snapshots.iter().skip(1) {
        duh.times.push(sn.t());
        duh.residuals.push(solver::vorticity_duhamel(&sn.state, &init).rel_residual());
    }
    Ok((evo, duh))
}

/// Residuals of the Duhamel representations and of `k∘φ = k0` at every snapshot after the first.
pub fn duhamel_suite(traj: &Trajectory) -> Result<Vec<IdentityResidual>, DiagnosticsError> {
    if traj.model() != Model::Full {
        return Err(DiagnosticsError::NotFull);
    }
    let init = InitialDerivs::new(&traj.initial);
    let mut out = vec![
        IdentityResidual::new("qw_duhamel_eta"),
        IdentityResidual::new("eta_x_duhamel"),
        IdentityResidual::new("qz_duhamel_psi"),
        IdentityResidual::new("k_transport_phi"),
    ];
    for sn in traj.snapshots.iter().skip(1) {
        let s = &sn.state;
        let vals = [
            solver::duhamel_qw_eta(s, &init).rel_residual(),
            solver::duhamel_eta_x(s).rel_residual(),
            solver::duhamel_qz_psi(s, &init).rel_residual(),
            solver::transport_k_phi(s, &init).rel_residual(),
        ];
        for (r, v) in out.iter_mut().zip(vals) {
            r.times.push(s.t);
            r.residuals.push(v);
        }
    }
    Ok(out)
}

/// Worst ratio of a monitored quantity to its bound over the trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCheck {
    pub name: String,
    /// `max_t measured/bound`; at most 1 passes.
    pub worst_ratio: f64,
    pub t_worst: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub slack: f64,
    pub checks: Vec<EnvelopeCheck>,
}

impl EnvelopeReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&EnvelopeCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn range(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

fn sup(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Ratio for `v ∼ 1` relative to the initial range `[lo0, hi0]` with a multiplicative slack.
fn order_one_ratio(v: &[f64], (lo0, hi0): (f64, f64), slack: f64) -> f64 {
    let (lo, hi) = range(v);
    let upper = hi / (slack * hi0);
    let lower = if lo > 0.0 { (lo0 / slack) / lo } else { f64::INFINITY };
    upper.max(lower)
}

/// Checks the a-priori envelopes on every snapshot with multiplicative/additive `slack`.
pub fn estimate_envelopes(traj: &Trajectory, slack: f64) -> EnvelopeReport {
    let eps = traj.params.eps;
    let t0 = traj.initial.t;
    let spec = Spectral::new(traj.initial.n());
    let full = traj.model() == Model::Full;
    let w_range0 = range(&traj.initial.w);
    let c_range0 = range(&traj.initial.c());
    let init = InitialDerivs::new(&traj.initial);
    let qz_bound = slack * (sup(init.z0x.iter().cloned()) + 0.25 * sup(init.c0.iter().zip(&init.k0x).map(|(c, k)| c * k)));

    let mut names: Vec<&str> = vec!["w_order_one", "eta_x_upper", "eta_x_qw"];
    if full {
        names.extend(["c_order_one", "psi_x_order_one", "phi_x_order_one", "qz_bound", "w_theta_integral_phi"]);
    }
    let mut worst: Vec<(f64, f64)> = vec![(f64::NEG_INFINITY, t0); names.len()];
    for sn in &traj.snapshots {
        let s = &sn.state;
        let (w, z, e) = (s.get(comp::W), s.get(comp::Z), s.get(comp::E));
        let wx = spec.derivative(w, 1);
        let (zx, kx) = if full { (spec.derivative(z, 1), spec.derivative(s.get(comp::K), 1)) } else { (vec![0.0; s.n], vec![0.0; s.n]) };
        let c: Vec<f64> = w.iter().zip(z).map(|(w, z)| 0.5 * (w - z)).collect();
        let mut ratios = vec![
            order_one_ratio(w, w_range0, slack),
            range(e).1 / (4.0 + slack),
            sup((0..s.n).map(|i| wx[i] - 0.25 * c[i] * kx[i])) / (2.0 / eps * (1.0 + slack)),
        ];
        if full {
            let lx = |cmp: usize| s.get(cmp).iter().map(|v| v.exp()).collect::<Vec<f64>>();
            ratios.push(order_one_ratio(&c, c_range0, slack));
            ratios.push(order_one_ratio(&lx(comp::PSI_LOGX), (1.0, 1.0), slack));
            ratios.push(order_one_ratio(&lx(comp::PHI_LOGX), (1.0, 1.0), slack));
            ratios.push(sup((0..s.n).map(|i| (zx[i] + 0.25 * c[i] * kx[i]) / e[i])) / qz_bound);
            let span = s.t - t0;
            ratios.push(if span > 0.0 { sup(s.get(comp::PHI_L).iter().cloned()) / (slack * 3.0 * span / eps) } else { 0.0 });
        }
        for (wst, r) in worst.iter_mut().zip(ratios) {
            if r > wst.0 || r.is_nan() {
                *wst = (r, s.t);
            }
        }
    }
    let checks = names
        .iter()
        .zip(worst)
        .map(|(name, (r, t))| EnvelopeCheck { name: name.to_string(), worst_ratio: r, t_worst: t, passed: r <= 1.0 })
        .collect();
    EnvelopeReport { slack, checks }
}
