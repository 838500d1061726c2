//! Run-directory storage: trajectory metadata as JSON, snapshot arrays as raw little-endian f64.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use preshock_core::solver::{comp, Trajectory};

pub const TRAJECTORY: &str = "trajectory.json";
pub const SNAPSHOTS: &str = "snapshots.bin";
pub const CONFIG: &str = "config.toml";
pub const MANIFEST: &str = "manifest.json";

pub fn save_trajectory(dir: &Path, traj: &Trajectory) -> Result<()> {
    let mut meta = traj.clone();
    let mut bytes = Vec::with_capacity(traj.snapshots.iter().map(|s| s.state.data.len() * 8).sum());
    for sn in &mut meta.snapshots {
        for v in &sn.state.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        sn.state.data = Vec::new();
    }
    fs::write(dir.join(SNAPSHOTS), bytes).context("writing snapshots")?;
    fs::write(dir.join(TRAJECTORY), serde_json::to_string(&meta)?).context("writing trajectory metadata")?;
    Ok(())
}

/// Names of the files `analyze` needs that are absent from `dir`.
pub fn missing_files(dir: &Path) -> Vec<String> {
    [CONFIG, TRAJECTORY, SNAPSHOTS].iter().filter(|f| !dir.join(f).exists()).map(|f| f.to_string()).collect()
}

pub fn load_trajectory(dir: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(dir.join(TRAJECTORY)).context("reading trajectory metadata")?;
    let mut traj: Trajectory = serde_json::from_str(&text).context("parsing trajectory metadata")?;
    let bytes = fs::read(dir.join(SNAPSHOTS)).context("reading snapshots")?;
    let needed: usize = traj.snapshots.iter().map(|s| comp::COUNT * s.state.n * 8).sum();
    if bytes.len() != needed {
        bail!("{} holds {} bytes, the metadata needs {needed}", SNAPSHOTS, bytes.len());
    }
    let mut chunks = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    for sn in &mut traj.snapshots {
        sn.state.data = chunks.by_ref().take(comp::COUNT * sn.state.n).collect();
    }
    Ok(traj)
}
