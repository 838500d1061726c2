//! Analysis and diagnostics reports written into a run directory.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Result;
use serde::Serialize;

use preshock_core::analysis::{self, AnalysisError, Check};
use preshock_core::diagnostics::{self, Identity, IdentityResidual};
use preshock_core::solver::{Model, Trajectory};

use crate::config::RunConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// Process exit status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Clean = 0,
    Failure = 1,
    EstimateViolation = 2,
    AmbiguousBlowup = 3,
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    schema_version: u32,
    kind: &'a str,
    config: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn write_report<T: Serialize, E: std::fmt::Display>(dir: &Path, kind: &str, cfg: &RunConfig, r: &Result<T, E>) -> Result<()> {
    let rep = Report {
        schema_version: SCHEMA_VERSION,
        kind,
        config: cfg,
        result: r.as_ref().ok(),
        error: r.as_ref().err().map(|e| e.to_string()),
    };
    fs::write(dir.join(format!("{kind}.json")), serde_json::to_string_pretty(&rep)? + "\n")?;
    Ok(())
}

#[derive(Serialize)]
struct CuspReport {
    expansion: analysis::CuspExpansion,
    coefficient_bounds: Vec<Check>,
}

#[derive(Serialize)]
struct DiagnosticsReport {
    identities: Vec<IdentityResidual>,
    vorticity: Vec<IdentityResidual>,
    duhamel: Vec<IdentityResidual>,
}

fn residual_csv(dir: &Path, r: &IdentityResidual) -> Result<()> {
    let mut s = String::from("t,residual\n");
    for (t, v) in r.times.iter().zip(&r.residuals) {
        writeln!(s, "{t:.17e},{v:.17e}")?;
    }
    fs::write(dir.join(format!("residual_{}.csv", r.name)), s)?;
    Ok(())
}

/// Every report for `traj`, one line of human-readable summary per report.
pub fn write_all(dir: &Path, traj: &Trajectory, cfg: &RunConfig) -> Result<(Outcome, Vec<String>)> {
    let acfg = cfg.analysis();
    let full = traj.model() == Model::Full;
    let mut outcome = Outcome::Clean;
    let mut lines = Vec::new();

    let blowup = analysis::detect_blowup(traj, &acfg);
    write_report(dir, "blowup", cfg, &blowup)?;
    match &blowup {
        Ok(b) => lines.push(format!("blowup: T* = {:.10e}, x* = {:.6e}, checks {}", b.t_star, b.x_star, pass(b.passed()))),
        Err(e) => {
            if matches!(e, AnalysisError::Ambiguous(_)) {
                outcome = outcome.max(Outcome::AmbiguousBlowup);
            }
            lines.push(format!("blowup: {e}"));
        }
    }

    if let Ok(b) = &blowup {
        if full {
            let st = analysis::eta_x_structure_check(traj, b, &acfg);
            if let Ok(s) = &st {
                lines.push(format!("structure: c = {:.3e}, C = {:.3e}, checks {}", s.c_lower, s.c_upper, pass(s.checks.iter().all(|c| c.passed))));
            }
            write_report(dir, "structure", cfg, &st)?;
        }
        let cusp = analysis::fit_cusp(traj, b, &acfg);
        match &cusp {
            Ok(exp) => {
                let bounds = if full { analysis::coefficient_bounds(exp, cfg.eps, cfg.mu, cfg.coefficient_slack) } else { Vec::new() };
                lines.push(format!("cusp: a3 = {:.4e}, a4 = {:.4e}, bounds {}", exp.a3, exp.a4, pass(bounds.iter().all(|c| c.passed))));
                let profile = analysis::reconstruct_and_compare(exp, traj, &acfg);
                if let Ok(p) = &profile {
                    for f in &p.fields {
                        let mut s = String::from("theta,delta,value,reconstruction,normalized_remainder\n");
                        for r in &f.rows {
                            writeln!(s, "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}", r.theta, r.delta, r.value, r.reconstruction, r.normalized_remainder)?;
                        }
                        fs::write(dir.join(format!("profile_{}.csv", f.field.name())), s)?;
                    }
                }
                write_report(dir, "profile", cfg, &profile)?;
                write_report(dir, "cusp", cfg, &Ok::<_, AnalysisError>(CuspReport { expansion: exp.clone(), coefficient_bounds: bounds }))?;
            }
            Err(e) => {
                lines.push(format!("cusp: {e}"));
                write_report(dir, "cusp", cfg, &cusp)?;
            }
        }
    }

    let holder = analysis::holder_from_trajectory(traj, &acfg);
    if let Ok(h) = &holder {
        lines.push(format!("holder: exponent {:.4} (left {:.4}, right {:.4})", h.mean, h.left, h.right));
    }
    write_report(dir, "holder", cfg, &holder)?;

    if full {
        let which: &[Identity] = if cfg.all_identities { &Identity::ALL } else { &Identity::DEFAULT };
        let diag = (|| -> Result<DiagnosticsReport, diagnostics::DiagnosticsError> {
            let identities = diagnostics::appendix_identity_residuals(traj, which)?;
            let (evo, duh) = diagnostics::vorticity_checks(traj)?;
            Ok(DiagnosticsReport { identities, vorticity: vec![evo, duh], duhamel: diagnostics::duhamel_suite(traj)? })
        })();
        if let Ok(d) = &diag {
            for r in d.identities.iter().chain(&d.vorticity).chain(&d.duhamel) {
                residual_csv(dir, r)?;
            }
            let worst = d.identities.iter().chain(&d.vorticity).map(|r| r.max()).fold(0.0, f64::max);
            lines.push(format!("identities: worst probe residual {worst:.3e}"));
        }
        write_report(dir, "diagnostics", cfg, &diag)?;

        let env = diagnostics::estimate_envelopes(traj, cfg.envelope_slack);
        for c in env.checks.iter().filter(|c| !c.passed) {
            lines.push(format!("estimate-violation: {} ratio {:.3} at t = {:.6e}", c.name, c.worst_ratio, c.t_worst));
        }
        if !env.passed() {
            outcome = outcome.max(Outcome::EstimateViolation);
        }
        lines.push(format!("envelopes (slack {}): {}", cfg.envelope_slack, pass(env.passed())));
        write_report(dir, "envelopes", cfg, &Ok::<_, AnalysisError>(env))?;
    }
    Ok((outcome, lines))
}

fn pass(b: bool) -> &'static str {
    if b {
        "pass"
    } else {
        "FAIL"
    }
}
