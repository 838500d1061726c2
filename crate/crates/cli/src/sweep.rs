//! Concurrent ε sweep and scaling-law fit.

use std::fmt::Write as _;
use std::fs;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use preshock_core::analysis::LineFit;

use crate::config::RunConfig;
use crate::reports::{Outcome, SCHEMA_VERSION};
use crate::{simulate, RunSummary};

/// Worker count from `PRESHOCK_WORKERS`, else the number of members.
fn workers(members: usize) -> Result<usize> {
    match std::env::var("PRESHOCK_WORKERS") {
        Ok(v) => {
            let n: usize = v.trim().parse().with_context(|| format!("PRESHOCK_WORKERS = {v:?} is not a positive integer"))?;
            Ok(n.max(1))
        }
        Err(_) => Ok(members.max(1)),
    }
}

#[derive(Serialize)]
struct SweepReport<'a> {
    schema_version: u32,
    config: &'a RunConfig,
    members: &'a [RunSummary],
    t_star_slope: Option<f64>,
    x_star_slope: Option<f64>,
}

/// Slope of log|y| against log ε.
fn log_slope(eps: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    LineFit::fit(&lx, &ly).slope
}

pub fn run(base: &RunConfig, eps_list: &[f64]) -> Result<Outcome> {
    if eps_list.len() < 3 {
        bail!("a sweep needs at least three eps values, got {}", eps_list.len());
    }
    let members: Vec<RunConfig> = eps_list
        .iter()
        .map(|&eps| {
            let mut c = base.clone();
            c.eps = eps;
            c.out = base.out.join(format!("eps_{eps}"));
            c.check().map(|_| c)
        })
        .collect::<Result<_>>()?;
    fs::create_dir_all(&base.out)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers(members.len())?).build()?;
    let results: Vec<Result<RunSummary>> = pool.install(|| members.par_iter().map(simulate).collect());
    let mut summaries = Vec::new();
    for (c, r) in members.iter().zip(results) {
        summaries.push(r.with_context(|| format!("sweep member eps = {}", c.eps))?);
    }

    let worst = summaries.iter().map(|s| s.outcome).max().unwrap_or(Outcome::Clean);
    let complete = summaries.iter().all(|s| s.t_star.is_some());
    let (ts, xs) = if complete {
        let t: Vec<f64> = summaries.iter().map(|s| s.t_star.unwrap_or(f64::NAN)).collect();
        let x: Vec<f64> = summaries.iter().map(|s| s.x_star.unwrap_or(f64::NAN)).collect();
        (Some(log_slope(eps_list, &t)), Some(log_slope(eps_list, &x)))
    } else {
        (None, None)
    };
    let rep = SweepReport { schema_version: SCHEMA_VERSION, config: base, members: &summaries, t_star_slope: ts, x_star_slope: xs };
    fs::write(base.out.join("sweep.json"), serde_json::to_string_pretty(&rep)? + "\n")?;
    let mut csv = String::from("eps,t_star,x_star,outcome\n");
    for s in &summaries {
        writeln!(csv, "{},{:.17e},{:.17e},{}", s.eps, s.t_star.unwrap_or(f64::NAN), s.x_star.unwrap_or(f64::NAN), s.outcome as u8)?;
    }
    fs::write(base.out.join("sweep.csv"), csv)?;
    match (ts, xs) {
        (Some(t), Some(x)) => println!("slope log|T*| vs log eps = {t:.4}; slope log|x*| vs log eps = {x:.4}"),
        _ => {
            eprintln!("sweep summary aborted: a member run produced no blowup report; member directories are kept");
            return Ok(worst.max(Outcome::Failure));
        }
    }
    Ok(worst)
}
