use std::sync::OnceLock;

use preshock_core::euler_core::{Params, StateField};
use preshock_core::initial_data::{build_canonical, DataSpec, Family};
use preshock_core::solver::*;
use preshock_core::spectral::{grid, Spectral};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 0.2;
const N: usize = 1024;

fn run(family: Family) -> Trajectory {
    let p = Params::new(EPS, 0.25, N).unwrap();
    let d = build_canonical(&DataSpec { family, ..DataSpec::new(p) }).unwrap();
    evolve_until(&d, &p, &default_stop(&p)).unwrap()
}

fn canonical_run() -> &'static Trajectory {
    static RUN: OnceLock<Trajectory> = OnceLock::new();
    RUN.get_or_init(|| run(Family::default()))
}

fn isentropic_run() -> &'static Trajectory {
    static RUN: OnceLock<Trajectory> = OnceLock::new();
    RUN.get_or_init(|| run(Family::isentropic()))
}

fn smooth_initial(n: usize) -> LabelState {
    let th = grid(n);
    let w: Vec<f64> = th.iter().map(|&x| 1.0 + 0.2 * x.sin() + 0.05 * (2.0 * x).cos()).collect();
    let z: Vec<f64> = th.iter().map(|&x| -0.1 + 0.05 * x.cos()).collect();
    let k: Vec<f64> = th.iter().map(|&x| 0.1 * (x + 0.3).sin()).collect();
    let a: Vec<f64> = th.iter().map(|&x| 0.05 * (3.0 * x).cos()).collect();
    LabelState::initial(0.0, &w, &z, &k, &a)
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn integrate(st: &Stepper, s0: &LabelState, t_end: f64, steps: usize) -> LabelState {
    let dt = t_end / steps as f64;
    (0..steps).fold(s0.clone(), |s, _| st.step(&s, dt))
}

#[test]
fn zero_entropy_stays_zero() {
    let d = StateField::constant(32, 0.0, 1.0, 0.0, 0.0, 0.0);
    let s = LabelState::initial(0.0, &d.w, &d.z, &d.k, &d.a);
    let st = Stepper::new(32, Model::Full, Some((36.0, 36)));
    let s1 = st.step(&s, 1e-2);
    assert!(s1.get(comp::K).iter().all(|&k| k == 0.0));
    assert_eq!(s1.t, 1e-2);
}

#[test]
fn rk4_self_convergence_is_fourth_order() {
    let n = 64;
    let st = Stepper::new(n, Model::Full, None);
    let s0 = smooth_initial(n);
    let sols: Vec<LabelState> = [10, 20, 40, 80].iter().map(|&m| integrate(&st, &s0, 0.4, m)).collect();
    // Every component except the |∂θw∘φ| integral, whose integrand has kinks.
    let smooth = |s: &LabelState| s.data[..comp::PHI_L * n].to_vec();
    let d: Vec<f64> = sols.windows(2).map(|w| sup_diff(&smooth(&w[0]), &smooth(&w[1]))).collect();
    for r in d.windows(2) {
        let order = (r[0] / r[1]).log2();
        assert!(order > 3.8, "observed order {order}, differences {d:?}");
    }
}

#[test]
fn forward_then_backward_step_is_high_order() {
    let n = 64;
    let st = Stepper::new(n, Model::Full, None);
    let s0 = integrate(&st, &smooth_initial(n), 0.1, 10);
    let err = |dt: f64| sup_diff(&st.step(&st.step(&s0, dt), -dt).data, &s0.data);
    let (e1, e2) = (err(0.02), err(0.01));
    assert!(e1 < 1e-7, "round-trip error {e1}");
    let order = (e1 / e2).log2();
    assert!(order > 4.5, "round-trip order {order} ({e1:e}, {e2:e})");
}

#[test]
fn invalid_configuration_is_rejected() {
    let p = Params::new(EPS, 0.25, 64).unwrap();
    let d = StateField::constant(64, -EPS, 1.0, 0.0, 0.0, 0.0);
    let cfg = SolverConfig { cfl: 0.0, ..SolverConfig::default() };
    assert!(matches!(evolve_with(&d, &p, &cfg, &default_stop(&p)), Err(SolverError::Config(_))));
    let small = StateField::constant(32, -EPS, 1.0, 0.0, 0.0, 0.0);
    assert!(matches!(evolve_until(&small, &p, &default_stop(&p)), Err(SolverError::Config(_))));
    let mut bad = d.clone();
    bad.z[3] = 2.0;
    assert!(matches!(evolve_until(&bad, &p, &default_stop(&p)), Err(SolverError::Degenerate { index: 3, .. })));
}

#[test]
fn initial_flow_state() {
    let tr = canonical_run();
    let s = &tr.snapshots[0].state;
    let f = FlowState::from_label(s);
    assert_eq!(f.t, -EPS);
    for i in 0..N {
        assert!((f.eta[i] - f.labels[i]).abs() < 1e-15);
        assert!((f.psi[i] - f.labels[i]).abs() < 1e-15);
        assert!((f.phi[i] - f.labels[i]).abs() < 1e-15);
        assert_eq!(f.eta_x[i], 1.0);
        assert!((f.i_t[i] - (tr.initial.k[i] / 8.0).exp()).abs() < 1e-15);
        assert_eq!(f.ifrak[i], 1.0);
    }
}

#[test]
fn canonical_run_stops_on_the_eta_x_rule() {
    let tr = canonical_run();
    assert_eq!(tr.stop, StopReason::MinEtaX);
    // The last step lands on the threshold up to round-off.
    assert!(tr.last().state.min_eta_x().0 <= 1e-2 * (1.0 + 1e-9));
    assert!(tr.t_stop().abs() <= 10.0 * EPS.powf(1.25), "t_stop = {}", tr.t_stop());
    assert!(tr.snapshots.windows(2).all(|w| w[0].t() < w[1].t()));
    assert!(tr.monitors.windows(2).all(|w| w[0].t < w[1].t));
    let dense = tr.snapshots.iter().filter(|s| s.kind == SnapshotKind::Dense).count();
    assert!(dense >= 8, "only {dense} dense snapshots");
}

#[test]
fn sound_speed_stays_order_one() {
    let tr = canonical_run();
    let c0 = tr.initial.c();
    let (lo, hi) = c0.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &c| (l.min(c), h.max(c)));
    for m in &tr.monitors {
        assert!(m.min_c >= 0.5 * lo && m.min_c <= 2.0 * hi, "min c = {} at t = {}", m.min_c, m.t);
    }
}

#[test]
fn entropy_is_transported_along_phi() {
    let tr = canonical_run();
    let init = InitialDerivs::new(&tr.initial);
    for sn in &tr.snapshots {
        let r = transport_k_phi(&sn.state, &init).abs_residual();
        assert!(r <= 1e-8, "‖k∘φ − k0‖ = {r:e} at t = {}", sn.t());
    }
}

#[test]
fn flows_are_ordered() {
    let tr = canonical_run();
    for sn in tr.snapshots.iter().skip(1) {
        let f = FlowState::from_label(&sn.state);
        for i in 0..N {
            assert!(f.psi[i] < f.phi[i] && f.phi[i] < f.eta[i], "t = {}, label {}", sn.t(), f.labels[i]);
        }
        assert!(f.eta_x.iter().all(|&e| e > 0.0));
    }
}

#[test]
fn min_eta_x_decreases_near_the_end() {
    let tr = canonical_run();
    let tail: Vec<f64> = tr.monitors.iter().filter(|m| m.min_eta_x < 0.1).map(|m| m.min_eta_x).collect();
    assert!(tail.len() > 8);
    assert!(tail.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn compose_examples() {
    let n = 64;
    let x = grid(n);
    let f: Vec<f64> = x.iter().map(|v| (v.sin() + 0.3 * (5.0 * v).cos()).exp()).collect();
    assert!(sup_diff(&compose(&f, &x), &f) < 1e-13);
    let cos: Vec<f64> = x.iter().map(|v| v.cos()).collect();
    let shifted: Vec<f64> = x.iter().map(|v| v + std::f64::consts::PI).collect();
    let neg: Vec<f64> = cos.iter().map(|v| -v).collect();
    assert!(sup_diff(&compose(&cos, &shifted), &neg) < 1e-14);
}

#[test]
fn compose_is_exact_for_band_limited_fields() {
    let n = 128;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let modes: Vec<(f64, f64)> = (0..n / 4).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let eval = |x: f64| modes.iter().enumerate().map(|(k, (c, s))| c * (k as f64 * x).cos() + s * (k as f64 * x).sin()).sum::<f64>();
    let f: Vec<f64> = grid(n).iter().map(|&x| eval(x)).collect();
    let pts: Vec<f64> = (0..1000).map(|_| rng.gen_range(-10.0..10.0)).collect();
    let exact: Vec<f64> = pts.iter().map(|&x| eval(x)).collect();
    assert!(sup_diff(&compose(&f, &pts), &exact) < 1e-12);
}

#[test]
fn flow_derivatives_agree() {
    let tr = canonical_run();
    let c0 = tr.initial.c();
    let first = &tr.snapshots[0].state;
    for flow in [Flow::Psi, Flow::Phi] {
        assert!(flow_derivative(first, &c0, flow, FlowDerivative::ClosedForm).iter().all(|&v| (v - 1.0).abs() < 1e-13));
    }
    let mid = tr.snapshots.iter().min_by(|a, b| (a.t() + EPS / 2.0).abs().total_cmp(&(b.t() + EPS / 2.0).abs())).unwrap();
    let s = &mid.state;
    let phi_a = flow_derivative(s, &c0, Flow::Phi, FlowDerivative::ClosedForm);
    let phi_b = flow_derivative(s, &c0, Flow::Phi, FlowDerivative::Ifrak);
    let phi_d = flow_derivative(s, &c0, Flow::Phi, FlowDerivative::Direct);
    assert!(sup_diff(&phi_a, &phi_b) < 1e-10);
    assert!(sup_diff(&phi_a, &phi_d) < 1e-6, "{}", sup_diff(&phi_a, &phi_d));
    let psi_a = flow_derivative(s, &c0, Flow::Psi, FlowDerivative::ClosedForm);
    let psi_d = flow_derivative(s, &c0, Flow::Psi, FlowDerivative::Direct);
    let psi_i = flow_derivative(s, &c0, Flow::Psi, FlowDerivative::Integrated);
    assert!(sup_diff(&psi_a, &psi_d) < 1e-6, "{}", sup_diff(&psi_a, &psi_d));
    assert!(sup_diff(&psi_a, &psi_i) < 1e-6);
    assert_eq!(flow_derivative_closed_form(tr, Flow::Psi).len(), tr.snapshots.len());
}

#[test]
fn psi_x_matches_label_differences_at_second_order() {
    let tr = isentropic_run();
    let c0 = tr.initial.c();
    let s = &tr.snapshots[2].state;
    let closed = flow_derivative(s, &c0, Flow::Psi, FlowDerivative::ClosedForm);
    let f = FlowState::from_label(s);
    // Centred differences on every m-th label.
    let mut errs = Vec::new();
    for m in [16, 8, 4] {
        let h = 2.0 * std::f64::consts::PI * m as f64 / N as f64;
        let mut e: f64 = 0.0;
        for i in (m..N - m).step_by(m) {
            let fd = (f.psi[i + m] - f.psi[i - m]) / (2.0 * h);
            e = e.max((fd - closed[i]).abs());
        }
        errs.push(e);
    }
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order > 1.8, "order {order}, errors {errs:?}");
    }
}

#[test]
fn duhamel_residuals_vanish_initially_and_stay_small() {
    let tr = canonical_run();
    let r = duhamel_residuals(tr);
    assert!(r[0].qw_eta.max(r[0].eta_x).max(r[0].qz_psi) < 1e-13, "{:?}", r[0]);
    for d in r.iter().filter(|d| d.t <= -EPS / 2.0) {
        assert!(d.qw_eta <= 1e-6 && d.eta_x <= 1e-6 && d.qz_psi <= 1e-6, "{d:?}");
    }
}

#[test]
fn isentropic_duhamel_reduces() {
    let tr = isentropic_run();
    let init = InitialDerivs::new(&tr.initial);
    assert!(init.k0.iter().all(|&k| k == 0.0));
    for sn in tr.snapshots.iter().filter(|s| s.t() <= -EPS / 2.0) {
        let r = duhamel_qw_eta(&sn.state, &init).rel_residual();
        assert!(r <= 1e-8, "residual {r:e} at t = {}", sn.t());
    }
}

#[test]
fn burgers_mode_is_exact_along_characteristics() {
    let n = 128;
    let p = Params::new(1.0, 0.25, n).unwrap();
    let d = preshock_core::initial_data::burgers_sine(n, 0.0, 0.0);
    let tr = evolve_with(&d, &p, &SolverConfig::burgers(), &StopRule::eta_x(1e-2, 3.0)).unwrap();
    let spec = Spectral::new(n);
    let u0p = spec.derivative(&d.w, 1);
    for sn in &tr.snapshots {
        let s = &sn.state;
        assert!(sup_diff(s.get(comp::W), &d.w) < 1e-13);
        let e: Vec<f64> = u0p.iter().map(|v| 1.0 + s.t * v).collect();
        assert!(sup_diff(s.get(comp::E), &e) < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn compose_with_identity_flow(seed in any::<u64>()) {
        let n = 32;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        prop_assert!(sup_diff(&compose(&f, &grid(n)), &f) < 1e-13);
    }
}
