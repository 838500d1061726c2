//! Flat run configuration, read from TOML and overridden by flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use preshock_core::analysis::AnalysisConfig;
use preshock_core::euler_core::Params;
use preshock_core::solver::{auto_grid, SolverConfig, StopRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Full,
    Burgers,
    PuiseuxDemo,
}

/// Every knob of one run. Unset optional knobs take ε-dependent defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub eps: f64,
    pub mu: f64,
    /// Grid size; default `auto_grid(eps)` (512 in Burgers mode).
    pub grid: Option<usize>,
    pub cfl: f64,
    /// Stop once min η_x ≤ this.
    pub stop_eta_x: f64,
    /// Final-time cap; default 3ε (3 in Burgers mode).
    pub t_max: Option<f64>,
    pub seed: u64,
    /// Random perturbation amplitude in units of ε (0 disables).
    pub perturb: f64,
    /// Stem of an exported data file (`<stem>.csv` + `<stem>.json`) used instead of the canonical family.
    pub data_file: Option<PathBuf>,
    /// Label of the Burgers blowup point.
    pub burgers_shift: f64,
    pub snapshot_dt: Option<f64>,
    pub dense_threshold: f64,
    /// Probe-cluster centres; default one at mid-run (t = −ε/2) in full mode.
    pub probes: Option<Vec<f64>>,
    /// Probe spacing; default ε/200.
    pub probe_spacing: Option<f64>,
    pub envelope_slack: f64,
    /// Cusp window radius in the label; default ε².
    pub window: Option<f64>,
    pub fit_degree: usize,
    /// Evaluate every transport identity instead of the default subset.
    pub all_identities: bool,
    /// Slack of the coefficient magnitude bounds.
    pub coefficient_slack: f64,
    /// Truncation order shown by puiseux-demo.
    pub puiseux_order: usize,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Full,
            eps: 0.1,
            mu: 0.25,
            grid: None,
            cfl: 0.4,
            stop_eta_x: 1e-2,
            t_max: None,
            seed: 0,
            perturb: 0.0,
            data_file: None,
            burgers_shift: 0.0,
            snapshot_dt: None,
            dense_threshold: 0.1,
            probes: None,
            probe_spacing: None,
            envelope_slack: 4.0,
            window: None,
            fit_degree: 8,
            all_identities: false,
            coefficient_slack: 10.0,
            puiseux_order: 12,
            out: PathBuf::from("run"),
        }
    }
}

/// Command-line overrides shared by every subcommand.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// TOML config file; flags win over its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    #[arg(long, global = true)]
    pub mu: Option<f64>,
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    #[arg(long, global = true)]
    pub cfl: Option<f64>,
    #[arg(long = "stop-eta-x", global = true)]
    pub stop_eta_x: Option<f64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Config file (if any) with flag overrides applied, then validated.
    pub fn resolve(o: &Overrides) -> Result<Self> {
        let mut c = match &o.config {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        if let Some(v) = o.eps {
            c.eps = v;
        }
        if let Some(v) = o.mu {
            c.mu = v;
        }
        if let Some(v) = o.grid {
            c.grid = Some(v);
        }
        if let Some(v) = o.cfl {
            c.cfl = v;
        }
        if let Some(v) = o.stop_eta_x {
            c.stop_eta_x = v;
        }
        if let Some(v) = &o.out {
            c.out = v.clone();
        }
        if let Some(v) = o.mode {
            c.mode = v;
        }
        if let Some(v) = o.seed {
            c.seed = v;
        }
        c.check()?;
        Ok(c)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            bail!("eps must lie in (0, 1], got {}", self.eps);
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            bail!("mu must lie in (0, 1), got {}", self.mu);
        }
        if !(self.stop_eta_x > 0.0 && self.stop_eta_x < 1.0) {
            bail!("stop_eta_x must lie in (0, 1), got {}", self.stop_eta_x);
        }
        if !(self.perturb >= 0.0) || !(self.envelope_slack > 1.0) || !(self.coefficient_slack > 0.0) {
            bail!("perturb must be >= 0, envelope_slack > 1 and coefficient_slack > 0");
        }
        if !(5..=12).contains(&self.fit_degree) {
            bail!("fit_degree must lie in 5..=12, got {}", self.fit_degree);
        }
        if let Some(p) = &self.data_file {
            if !p.with_extension("csv").exists() || !p.with_extension("json").exists() {
                bail!("data file {} (.csv/.json) does not exist", p.display());
            }
        }
        Ok(())
    }

    pub fn grid_size(&self) -> usize {
        self.grid.unwrap_or(match self.mode {
            Mode::Burgers => 512,
            _ => auto_grid(self.eps),
        })
    }

    pub fn params(&self) -> Result<Params> {
        Ok(Params::new(self.eps, self.mu, self.grid_size())?)
    }

    pub fn solver(&self) -> SolverConfig {
        let base = match self.mode {
            Mode::Burgers => SolverConfig::burgers(),
            _ => SolverConfig { envelope_slack: Some(self.envelope_slack), ..SolverConfig::default() },
        };
        let full = self.mode == Mode::Full;
        SolverConfig {
            cfl: self.cfl,
            snapshot_dt: self.snapshot_dt,
            dense_threshold: self.dense_threshold,
            probes: self.probes.clone().unwrap_or_else(|| if full { vec![-self.eps / 2.0] } else { Vec::new() }),
            probe_spacing: self.probe_spacing.unwrap_or(self.eps / 200.0),
            ..base
        }
    }

    pub fn stop(&self) -> StopRule {
        let cap = self.t_max.unwrap_or(if self.mode == Mode::Burgers { 3.0 } else { 3.0 * self.eps });
        StopRule::eta_x(self.stop_eta_x, cap)
    }

    pub fn analysis(&self) -> AnalysisConfig {
        AnalysisConfig { window: self.window, fit_degree: self.fit_degree, ..AnalysisConfig::default() }
    }
}
