use std::sync::OnceLock;

use preshock_core::analysis::*;
use preshock_core::euler_core::{Params, StateField};
use preshock_core::initial_data::{build_canonical, burgers_sine, DataSpec};
use preshock_core::solver::*;
use preshock_core::spectral::grid;

fn burgers(n: usize, t0: f64, shift: f64, delta: f64) -> Trajectory {
    let p = Params::new(1.0, 0.25, n).unwrap();
    evolve_with(&burgers_sine(n, t0, shift), &p, &SolverConfig::burgers(), &StopRule::eta_x(delta, t0 + 3.0)).unwrap()
}

fn full_run() -> &'static Trajectory {
    static RUN: OnceLock<Trajectory> = OnceLock::new();
    RUN.get_or_init(|| {
        let p = Params::new(0.2, 0.25, 1024).unwrap();
        let d = build_canonical(&DataSpec::new(p)).unwrap();
        evolve_until(&d, &p, &StopRule::eta_x(1e-3, 0.6)).unwrap()
    })
}

fn narrow(window: f64) -> AnalysisConfig {
    AnalysisConfig { window: Some(window), ..AnalysisConfig::default() }
}

#[test]
fn burgers_blowup_time_and_label() {
    for shift in [0.0, 0.3] {
        let tr = burgers(512, 0.0, shift, 1e-2);
        let r = detect_blowup(&tr, &AnalysisConfig::default()).unwrap();
        assert!((r.t_star - 1.0).abs() <= 1e-3, "T* = {}", r.t_star);
        assert!((r.x_star - shift).abs() <= 1e-3, "x* = {}", r.x_star);
        // ξ* = η(x*, T*) = x* − sin 0
        assert!((r.xi_star - shift).abs() <= 1e-3);
        assert!(r.t_star > tr.t_stop());
        assert!(r.uniqueness_margin > 0.0);
    }
}

#[test]
fn burgers_sandwich_constants() {
    // t0 = −1 puts T* at 0, and η_x = −t + (t + 1)(1 − cos x).
    let tr = burgers(512, -1.0, 0.0, 1e-3);
    let cfg = narrow(0.1);
    let r = detect_blowup(&tr, &cfg).unwrap();
    assert!(r.t_star.abs() < 1e-9, "T* = {}", r.t_star);
    let s = eta_x_structure_check(&tr, &r, &cfg).unwrap();
    // Sandwich holds with c = C = |u0‴|/2 = 1/2 up to the (1 − cos x) vs x²/2 gap.
    assert!(s.c_lower >= 0.5 * (1.0 - 0.1f64.powi(2) / 12.0) - 1e-9, "c = {}", s.c_lower);
    assert!(s.c_upper <= 0.5 + 1e-9, "C = {}", s.c_upper);
    assert!((s.rate_range.0 - 1.0).abs() < 1e-6 && (s.rate_range.1 - 1.0).abs() < 1e-6, "{:?}", s.rate_range);
}

#[test]
fn burgers_cusp_coefficients() {
    // At T* = 1: η = x − sin x, w∘η = −sin x.
    let tr = burgers(512, 0.0, 0.0, 1e-3);
    let cfg = narrow(0.2);
    let r = detect_blowup(&tr, &cfg).unwrap();
    let exp = fit_cusp(&tr, &r, &cfg).unwrap();
    assert!((exp.a3 - 1.0 / 6.0).abs() < 1e-6, "a3 = {}", exp.a3);
    assert!(exp.a4.abs() < 1e-6, "a4 = {}", exp.a4);
    let w = exp.field(CuspField::W).unwrap();
    let b = [0.0, -1.0, 0.0, 1.0 / 6.0, 0.0];
    for j in 0..5 {
        assert!((w.b[j] - b[j]).abs() < 1e-5, "B{j} = {}", w.b[j]);
    }
    assert!((w.frac[1] + 6f64.cbrt()).abs() < 1e-5);
    assert!(w.frac[2].abs() < 1e-5);
    assert!(exp.passed());

    let prof = reconstruct_and_compare(&exp, &tr, &cfg).unwrap();
    let pw = prof.field(CuspField::W).unwrap();
    // The next term of −(6Δ)^{1/3} is linear in Δ, so the normalized remainder stays O(1).
    assert!(pw.max_normalized < 2.0, "{}", pw.max_normalized);
}

#[test]
fn burgers_holder_exponent() {
    let tr = burgers(512, 0.0, 0.0, 1e-4);
    let h = holder_from_trajectory(&tr, &narrow(0.2)).unwrap();
    assert!((h.mean - 1.0 / 3.0).abs() < 0.02, "{h:?}");
}

#[test]
fn competing_minima_are_ambiguous() {
    let n = 256;
    let p = Params::new(1.0, 0.25, n).unwrap();
    let w: Vec<f64> = grid(n).iter().map(|x| -(2.0 * x).sin()).collect();
    let d = StateField { w, ..burgers_sine(n, 0.0, 0.0) };
    let tr = evolve_with(&d, &p, &SolverConfig::burgers(), &StopRule::eta_x(1e-2, 3.0)).unwrap();
    assert!(matches!(detect_blowup(&tr, &AnalysisConfig::default()), Err(AnalysisError::Ambiguous(_))));
}

#[test]
fn short_tail_is_rejected() {
    let tr = full_run().truncated(0.2);
    assert!(matches!(detect_blowup(&tr, &AnalysisConfig::default()), Err(AnalysisError::InsufficientTail { .. })));
}

#[test]
fn synthetic_taylor_data() {
    let (a3, b2, b4) = (1.0 / 6.0, 0.7, -0.4);
    let eta = vec![0.0, 0.0, 0.0, a3, 0.0, 0.0];
    let exp = CuspExpansion::from_taylor(0.0, 0.0, eta, &[(CuspField::W, [1.0, -1.0, b2, 0.0, 0.0]), (CuspField::Z, [0.0, 0.0, 0.0, 0.5, b4])], 0.1);
    assert_eq!(exp.field(CuspField::W).unwrap().frac[2], a3.powf(-2.0 / 3.0) * b2);
    assert_eq!(exp.field(CuspField::Z).unwrap().frac[4], a3.powf(-4.0 / 3.0) * b4);
    assert!((exp.window_theta - a3 * 1e-3).abs() < 1e-18);

    // η = x − sin x with w∘η = −sin x, exactly representable on the grid.
    let n = 256;
    let x = grid(n);
    let sin: Vec<f64> = x.iter().map(|v| -v.sin()).collect();
    let zero = vec![0.0; n];
    let mut s = LabelState::initial(0.0, &sin, &zero, &zero, &zero);
    s.get_mut(comp::D).copy_from_slice(&sin);
    let e: Vec<f64> = x.iter().map(|v| 1.0 - v.cos()).collect();
    s.get_mut(comp::E).copy_from_slice(&e);
    let lf = LabelFields::with_varpi(&s, &zero);
    let exact = CuspExpansion::from_taylor(0.0, 0.0, vec![0.0, 0.0, 0.0, a3, 0.0, -1.0 / 120.0], &[(CuspField::W, [0.0, -1.0, 0.0, 1.0 / 6.0, 0.0])], 0.1);
    let prof = compare_on(&exact, &lf, 1.0, 0.25, 0.0, &AnalysisConfig::default()).unwrap();
    let w = prof.field(CuspField::W).unwrap();
    assert!(w.max_normalized < 2.0);
    // The remainder is O(Δ): it shrinks linearly towards the centre.
    let inner = w.rows.iter().map(|r| (r.delta.abs(), (r.value - r.reconstruction).abs())).min_by(|a, b| a.0.total_cmp(&b.0)).unwrap();
    assert!(inner.1 <= 2.0 * inner.0);
}

#[test]
fn full_system_blowup_report() {
    let tr = full_run();
    let eps: f64 = 0.2;
    let r = detect_blowup(tr, &AnalysisConfig::default()).unwrap();
    assert!(r.passed(), "{:?}", r.checks.iter().filter(|c| !c.passed).collect::<Vec<_>>());
    assert!(r.t_star > tr.t_stop());
    assert!(r.t_star.abs() <= 10.0 * eps.powf(1.25));
    assert!(r.x_star.abs() <= 10.0 * eps.powf(2.25));
    assert!(r.uniqueness_margin > 0.0);
    // |η_xx(x*, t)| ≤ A ε⁻² (T* − t) along the tail with a finite A.
    assert!(r.eta_xx_const.is_finite() && r.eta_xx_const > 0.0);
}

#[test]
fn full_system_structure_and_cusp() {
    let tr = full_run();
    let eps: f64 = 0.2;
    let cfg = AnalysisConfig::default();
    let r = detect_blowup(tr, &cfg).unwrap();
    let s = eta_x_structure_check(tr, &r, &cfg).unwrap();
    assert!(s.c_lower > 0.0 && s.c_lower.is_finite());
    assert!(s.c_upper > 0.0 && s.c_upper.is_finite());
    assert!(s.checks.iter().all(|c| c.passed), "{:?}", s.checks);

    let exp = fit_cusp(tr, &r, &cfg).unwrap();
    assert!(exp.passed(), "{:?}", exp.checks.iter().filter(|c| !c.passed).collect::<Vec<_>>());
    assert!(exp.a3 > 0.0);
    let scaled = exp.a3 * eps.powi(3);
    assert!((0.1..=10.0).contains(&scaled), "a3 ε³ = {scaled}");
    // Fractional coefficients follow from the Taylor data by the closed formulas.
    for fe in &exp.fields {
        let (a3, a4) = (exp.a3, exp.a4);
        let b = fe.b;
        match fe.field {
            CuspField::W => {
                assert_eq!(fe.frac[1], a3.powf(-1.0 / 3.0) * b[1]);
                let expect = a3.powf(-2.0 / 3.0) * b[2] - a3.powf(-5.0 / 3.0) * a4 * b[1] / 3.0;
                assert!((fe.frac[2] - expect).abs() <= 1e-14 * expect.abs().max(1.0));
            }
            CuspField::Z | CuspField::K | CuspField::A => {
                assert_eq!(fe.frac[3], b[3] / a3);
                let expect = a3.powf(-4.0 / 3.0) * b[4] - a3.powf(-7.0 / 3.0) * a4 * b[3];
                assert!((fe.frac[4] - expect).abs() <= 1e-14 * expect.abs().max(1.0));
            }
            CuspField::Varpi => assert_eq!(fe.frac[3], b[3] / a3),
        }
        assert_eq!(fe.frac[0], b[0]);
    }
}

#[test]
fn full_system_holder_exponent() {
    let h = holder_from_trajectory(full_run(), &AnalysisConfig::default()).unwrap();
    assert!(h.mean > 0.0 && h.mean < 1.0, "{h:?}");
}
