//! Time integration up to the first gradient singularity.
//!
//! The unknowns are advanced in η-label coordinates (see [`label`]) with
//! classical RK4, an exponential spectral filter, and an adaptive step
//! limited by the relative transport speeds and by `‖∂θλ3‖∞`. The ψ and φ
//! flows and all Duhamel integrals are integrated inside the same RK stages.

pub mod flows;
pub mod label;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::euler_core::{EulerError, Params, StateField};
use crate::spectral::Spectral;
pub use flows::*;
pub use label::{comp, LabelState, Model};
use label::Engine;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Euler(#[from] EulerError),
    #[error("degenerate sound speed c = {value:e} at label index {index} (t = {t})")]
    Degenerate { t: f64, index: usize, value: f64 },
    #[error("non-finite value in component {component} at label index {index} after step {step} (t = {t}, dt = {dt:e})")]
    NonFinite { t: f64, dt: f64, step: usize, component: usize, index: usize },
    #[error("estimate-violation: {check} = {value:e} exceeds bound {bound:e} at t = {t}")]
    EstimateViolation { t: f64, check: String, value: f64, bound: f64 },
    #[error("eta_x became nonpositive (min {min:e}) at t = {t}")]
    EtaXNonPositive { t: f64, min: f64 },
    #[error("time step collapsed to {dt:e} at t = {t}")]
    StepCollapse { t: f64, dt: f64 },
    #[error("invalid solver configuration: {0}")]
    Config(String),
}

/// Solver knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub model: Model,
    pub cfl: f64,
    /// `dt ≤ grad_cap / ‖∂θλ3‖∞`.
    pub grad_cap: f64,
    pub dt_max: Option<f64>,
    /// Exponential filter `(strength, order)`; `None` disables filtering.
    pub filter: Option<(f64, i32)>,
    /// Regular snapshot spacing (default ε/20, or 0.05 in Burgers mode).
    pub snapshot_dt: Option<f64>,
    /// min η_x below which snapshots are densified.
    pub dense_threshold: f64,
    /// Dense snapshot spacing (default `ε·dense_threshold/64`).
    pub dense_dt: Option<f64>,
    /// Centres of 5-snapshot clusters used for time differencing.
    pub probes: Vec<f64>,
    pub probe_spacing: f64,
    /// Slack on the a-priori envelopes checked at every step; `None` disables the abort.
    pub envelope_slack: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            model: Model::Full,
            cfl: 0.4,
            grad_cap: 0.5,
            dt_max: None,
            filter: Some((36.0, 36)),
            snapshot_dt: None,
            dense_threshold: 0.1,
            dense_dt: None,
            probes: Vec::new(),
            probe_spacing: 1e-3,
            envelope_slack: Some(4.0),
        }
    }
}

impl SolverConfig {
    pub fn burgers() -> Self {
        Self { model: Model::Burgers, envelope_slack: None, ..Self::default() }
    }

    fn check(&self) -> Result<(), SolverError> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(SolverError::Config(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        if !(self.grad_cap > 0.0) || !(self.dense_threshold > 0.0) || !(self.probe_spacing > 0.0) {
            return Err(SolverError::Config("grad_cap, dense_threshold and probe_spacing must be positive".into()));
        }
        Ok(())
    }
}

/// When to stop integrating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    /// Stop once min η_x ≤ this threshold.
    pub min_eta_x: f64,
    /// Hard cap on the final time.
    pub t_max: f64,
}

impl StopRule {
    pub fn eta_x(min_eta_x: f64, t_max: f64) -> Self {
        Self { min_eta_x, t_max }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MinEtaX,
    TimeCap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotKind {
    Initial,
    Regular,
    Dense,
    Probe,
    Final,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub kind: SnapshotKind,
    pub state: LabelState,
}

impl Snapshot {
    pub fn t(&self) -> f64 {
        self.state.t
    }
}

/// Per-step monitor record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Monitor {
    pub t: f64,
    pub dt: f64,
    pub min_eta_x: f64,
    pub argmin_label: f64,
    pub w_theta_max: f64,
    pub z_theta_max: f64,
    pub k_theta_max: f64,
    pub a_theta_max: f64,
    pub min_c: f64,
    pub max_z_minus_min_w: f64,
}

/// Snapshots plus monitor series of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: Params,
    pub config: SolverConfig,
    pub stop_rule: StopRule,
    pub initial: StateField,
    pub snapshots: Vec<Snapshot>,
    pub monitors: Vec<Monitor>,
    pub stop: StopReason,
}

impl Trajectory {
    pub fn model(&self) -> Model {
        self.config.model
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("trajectory has snapshots")
    }

    pub fn t_stop(&self) -> f64 {
        self.last().t()
    }

    /// Copy keeping only snapshots up to the first one with min η_x ≤ `delta`.
    pub fn truncated(&self, delta: f64) -> Trajectory {
        let mut out = self.clone();
        if let Some(i) = self.snapshots.iter().position(|s| s.state.min_eta_x().0 <= delta) {
            out.snapshots.truncate(i + 1);
            let t_end = out.snapshots[i].t();
            out.monitors.retain(|m| m.t <= t_end);
            out.stop_rule.min_eta_x = delta;
            out.stop = StopReason::MinEtaX;
        }
        out
    }
}

/// A-priori envelope constants taken from the initial data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub slack: f64,
    pub t0: f64,
    pub w_range: (f64, f64),
    pub c_range: (f64, f64),
    pub k_theta0: f64,
    pub a0: f64,
    pub a_rate: f64,
    pub z0: f64,
    pub z_rate: f64,
}

impl Envelope {
    pub fn from_initial(data: &StateField, slack: f64) -> Self {
        let spec = Spectral::new(data.n());
        let kt = spec.derivative(&data.k, 1);
        let c = data.c();
        let minmax = |v: &[f64]| v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut a_rate: f64 = 0.0;
        let mut z_rate: f64 = 0.0;
        for i in 0..data.n() {
            let (_, sz, sa) = crate::euler_core::sources(data.w[i], data.z[i], data.a[i], kt[i]);
            a_rate = a_rate.max(sa.abs());
            z_rate = z_rate.max(sz.abs());
        }
        Self {
            slack,
            t0: data.t,
            w_range: minmax(&data.w),
            c_range: minmax(&c),
            k_theta0: sup(&kt),
            a0: sup(&data.a),
            a_rate,
            z0: sup(&data.z),
            z_rate,
        }
    }

    /// Checks the pointwise envelopes on one label state; returns the first violation.
    pub fn violation(&self, s: &LabelState, m: &Monitor) -> Option<(String, f64, f64)> {
        let k = self.slack;
        let (w, z, a) = (s.get(comp::W), s.get(comp::Z), s.get(comp::A));
        let (wlo, whi) = w.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        let span = s.t - self.t0;
        let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let checks = [
            ("w_lower", self.w_range.0 / k - wlo, self.w_range.0 / k),
            ("w_upper", whi - k * self.w_range.1, k * self.w_range.1),
            ("c_lower", self.c_range.0 / k - m.min_c, self.c_range.0 / k),
            ("k_theta", m.k_theta_max - (k * self.k_theta0 + 1e-12), k * self.k_theta0),
            ("a_sup", sup(a) - (self.a0 + k * span * self.a_rate + 1e-12), self.a0 + k * span * self.a_rate),
            ("z_sup", sup(z) - (self.z0 + k * span * self.z_rate + 1e-12), self.z0 + k * span * self.z_rate),
        ];
        checks.iter().find(|(_, excess, _)| *excess > 0.0).map(|(name, excess, bound)| (name.to_string(), bound + excess, *bound))
    }
}

/// Stepper bound to one grid size and model.
pub struct Stepper {
    engine: Engine,
    filter: Option<(f64, i32)>,
}

impl Stepper {
    pub fn new(n: usize, model: Model, filter: Option<(f64, i32)>) -> Self {
        Self { engine: Engine::new(n, model), filter }
    }

    pub fn spectral(&self) -> &Spectral {
        &self.engine.spec
    }

    pub fn model(&self) -> Model {
        self.engine.model
    }

    /// Time derivative of every component.
    pub fn tendency(&self, s: &LabelState) -> Vec<f64> {
        self.engine.tendency(s)
    }

    /// One classical RK4 step (negative `dt` integrates backwards).
    pub fn step(&self, s: &LabelState, dt: f64) -> LabelState {
        let k1 = self.engine.tendency(s);
        let mut y = s.clone();
        y.axpy(0.5 * dt, &k1);
        y.t = s.t + 0.5 * dt;
        let k2 = self.engine.tendency(&y);
        let mut y = s.clone();
        y.axpy(0.5 * dt, &k2);
        y.t = s.t + 0.5 * dt;
        let k3 = self.engine.tendency(&y);
        let mut y = s.clone();
        y.axpy(dt, &k3);
        y.t = s.t + dt;
        let k4 = self.engine.tendency(&y);
        let mut out = s.clone();
        for i in 0..out.data.len() {
            out.data[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out.t = s.t + dt;
        if let Some((strength, order)) = self.filter {
            for &c in &comp::FIELDS {
                self.engine.spec.filter(out.get_mut(c), strength, order);
            }
        }
        out
    }

    /// Monitor values of a state.
    pub fn monitor(&self, s: &LabelState, dt: f64) -> Monitor {
        let d = self.engine.derivs(s);
        let e = s.get(comp::E);
        let (w, z) = (s.get(comp::W), s.get(comp::Z));
        let (min_e, imin) = s.min_eta_x();
        let sup = |v: &[f64]| v.iter().zip(e).fold(0.0f64, |m, (x, e)| m.max((x / e).abs()));
        let min_c = w.iter().zip(z).fold(f64::INFINITY, |m, (w, z)| m.min(0.5 * (w - z)));
        let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let wmin = w.iter().cloned().fold(f64::INFINITY, f64::min);
        Monitor {
            t: s.t,
            dt,
            min_eta_x: min_e,
            argmin_label: s.labels()[imin],
            w_theta_max: sup(&d.wx),
            z_theta_max: sup(&d.zx),
            k_theta_max: sup(&d.kx),
            a_theta_max: sup(&d.ax),
            min_c,
            max_z_minus_min_w: zmax - wmin,
        }
    }

    /// Largest stable step: relative transport CFL and the gradient limiter.
    pub fn stable_dt(&self, s: &LabelState, cfl: f64, grad_cap: f64) -> f64 {
        let n = s.n;
        let dx = self.engine.spec.dx();
        let d = self.engine.derivs(s);
        let (w, z, e) = (s.get(comp::W), s.get(comp::Z), s.get(comp::E));
        let mut vmax: f64 = 0.0;
        let mut gmax: f64 = 0.0;
        for i in 0..n {
            if self.engine.model == Model::Full {
                vmax = vmax.max((2.0 / 3.0 * (w[i] - z[i]) / e[i]).abs());
            }
            gmax = gmax.max(((d.wx[i] + d.zx[i] / 3.0) / e[i]).abs());
        }
        let mut dt = f64::INFINITY;
        if vmax > 0.0 {
            dt = dt.min(cfl * dx / vmax);
        }
        if gmax > 0.0 {
            dt = dt.min(grad_cap / gmax);
        }
        dt
    }
}

fn check_state(s: &LabelState, model: Model, step: usize, dt: f64) -> Result<(), SolverError> {
    for c in 0..comp::COUNT {
        if let Some(i) = s.get(c).iter().position(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite { t: s.t, dt, step, component: c, index: i });
        }
    }
    if model == Model::Full {
        let (w, z) = (s.get(comp::W), s.get(comp::Z));
        if let Some(i) = (0..s.n).find(|&i| !(w[i] > z[i])) {
            return Err(SolverError::Degenerate { t: s.t, index: i, value: 0.5 * (w[i] - z[i]) });
        }
    }
    let (m, _) = s.min_eta_x();
    if !(m > 0.0) {
        return Err(SolverError::EtaXNonPositive { t: s.t, min: m });
    }
    Ok(())
}

/// Default configuration and stop rule for a full-system run.
pub fn default_stop(params: &Params) -> StopRule {
    StopRule::eta_x(1e-2, params.eps * 3.0)
}

/// Integrates with the default configuration.
pub fn evolve_until(data: &StateField, params: &Params, stop: &StopRule) -> Result<Trajectory, SolverError> {
    evolve_with(data, params, &SolverConfig::default(), stop)
}

/// Integrates from `data.t` until the stop rule fires.
pub fn evolve_with(data: &StateField, params: &Params, config: &SolverConfig, stop: &StopRule) -> Result<Trajectory, SolverError> {
    config.check()?;
    params.check()?;
    let n = data.n();
    if n != params.n_grid {
        return Err(SolverError::Config(format!("data has {n} samples but params.n_grid = {}", params.n_grid)));
    }
    if config.model == Model::Full {
        if let Some((index, value)) = data.first_degenerate() {
            return Err(SolverError::Degenerate { t: data.t, index, value });
        }
    }
    let eps = params.eps;
    let model = config.model;
    let burgers = model == Model::Burgers;
    let stepper = Stepper::new(n, model, config.filter);
    let envelope = config.envelope_slack.map(|k| Envelope::from_initial(data, k));
    let snapshot_dt = config.snapshot_dt.unwrap_or(if burgers { 0.05 } else { eps / 20.0 });
    let dense_dt = config.dense_dt.unwrap_or(if burgers { config.dense_threshold / 64.0 } else { eps * config.dense_threshold / 64.0 });
    let dt_max = config.dt_max.unwrap_or(if burgers { 0.05 } else { eps / 40.0 });

    let mut probe_times: Vec<f64> = config
        .probes
        .iter()
        .flat_map(|&c| (-2..=2).map(move |j| c + j as f64 * config.probe_spacing))
        .filter(|&t| t > data.t)
        .collect();
    probe_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    probe_times.dedup_by(|a, b| (*a - *b).abs() < 1e-14);

    let mut s = LabelState::initial(data.t, &data.w, &data.z, &data.k, &data.a);
    check_state(&s, model, 0, 0.0)?;
    let mut snapshots = vec![Snapshot { kind: SnapshotKind::Initial, state: s.clone() }];
    let mut monitors = vec![stepper.monitor(&s, 0.0)];
    let mut next_regular = data.t + snapshot_dt;
    let mut next_dense: Option<f64> = None;
    let mut probe_idx = 0;
    let mut step_no = 0usize;
    let time_tol = 1e-12 * (1.0 + data.t.abs());

    let stop_reason = loop {
        let (min_e, imin) = s.min_eta_x();
        if min_e <= stop.min_eta_x * (1.0 + 1e-9) {
            break StopReason::MinEtaX;
        }
        if s.t >= stop.t_max - time_tol {
            break StopReason::TimeCap;
        }
        if next_dense.is_none() && min_e <= config.dense_threshold {
            next_dense = Some(s.t + dense_dt);
        }
        let mut dt = stepper.stable_dt(&s, config.cfl, config.grad_cap).min(dt_max);
        // approach the stop threshold without overshooting it by much
        let derivs = stepper.engine.derivs(&s);
        let rate = -(derivs.wx[imin] + derivs.zx[imin] / 3.0);
        if rate > 0.0 {
            let to_go = (min_e - stop.min_eta_x) / rate;
            dt = dt.min(to_go.max(0.0) * 1.000001 + 1e-15);
        }
        dt = dt.min(stop.t_max - s.t);
        let mut target: Option<(f64, SnapshotKind)> = None;
        let mut consider = |t: f64, kind: SnapshotKind| {
            if target.map_or(true, |(tt, _)| t < tt) {
                target = Some((t, kind));
            }
        };
        consider(next_regular, SnapshotKind::Regular);
        if let Some(td) = next_dense {
            consider(td, SnapshotKind::Dense);
        }
        if probe_idx < probe_times.len() {
            consider(probe_times[probe_idx], SnapshotKind::Probe);
        }
        let mut hit = None;
        if let Some((tt, kind)) = target {
            if tt - s.t <= dt + time_tol {
                dt = tt - s.t;
                hit = Some((tt, kind));
            }
        }
        if !(dt > 1e-15) {
            if hit.is_none() {
                return Err(SolverError::StepCollapse { t: s.t, dt });
            }
        }
        let mut next = if dt > 0.0 { stepper.step(&s, dt) } else { s.clone() };
        step_no += 1;
        if let Some((tt, _)) = hit {
            next.t = tt;
        }
        check_state(&next, model, step_no, dt)?;
        let mon = stepper.monitor(&next, dt);
        if let Some(env) = &envelope {
            if let Some((check, value, bound)) = env.violation(&next, &mon) {
                return Err(SolverError::EstimateViolation { t: next.t, check, value, bound });
            }
        }
        monitors.push(mon);
        s = next;
        if let Some((tt, kind)) = hit {
            // advance every schedule that was reached
            while next_regular <= tt + time_tol {
                next_regular += snapshot_dt;
            }
            if let Some(td) = next_dense.as_mut() {
                while *td <= tt + time_tol {
                    *td += dense_dt;
                }
            }
            while probe_idx < probe_times.len() && probe_times[probe_idx] <= tt + time_tol {
                probe_idx += 1;
            }
            snapshots.push(Snapshot { kind, state: s.clone() });
        }
    };
    if snapshots.last().map(|sn| sn.state.t) != Some(s.t) {
        snapshots.push(Snapshot { kind: SnapshotKind::Final, state: s.clone() });
    } else if let Some(last) = snapshots.last_mut() {
        last.kind = SnapshotKind::Final;
    }
    Ok(Trajectory {
        params: *params,
        config: config.clone(),
        stop_rule: *stop,
        initial: data.clone(),
        snapshots,
        monitors,
        stop: stop_reason,
    })
}

/// Grid size used when none is given: the next power of two ≥ 8π/ε², at least 256.
pub fn auto_grid(eps: f64) -> usize {
    let need = 8.0 * std::f64::consts::PI / (eps * eps);
    (need.ceil() as usize).next_power_of_two().max(256)
}
