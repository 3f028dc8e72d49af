//! Run manifests: everything needed to repeat a run, plus what it produced.

use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::commands::{execute, JobResult};
use crate::config::{CommandKind, RunConfig};
use crate::output::OutputDir;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: CommandKind,
    pub config: RunConfig,
    pub seeds: Vec<u64>,
    pub version: String,
    /// Report files relative to the output directory; the manifest itself
    /// is not listed.
    pub outputs: Vec<String>,
    pub workers: usize,
    pub duration_secs: f64,
    pub started_unix_secs: f64,
}

impl RunManifest {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("malformed manifest {}", path.display()))
    }
}

/// Runs `cfg` on a pool of `workers` threads and writes its manifest.
pub fn run(cfg: &RunConfig, out_dir: &Path, workers: usize) -> anyhow::Result<(RunManifest, JobResult)> {
    let started_unix_secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let clock = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
    let mut out = OutputDir::create(out_dir)?;
    let result = pool.install(|| execute(cfg, &mut out))?;
    let manifest = RunManifest {
        command: cfg.command(),
        config: cfg.clone(),
        seeds: cfg.seeds(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        outputs: out.into_written(),
        workers: workers.max(1),
        duration_secs: clock.elapsed().as_secs_f64(),
        started_unix_secs,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    let path = out_dir.join(MANIFEST_FILE);
    std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok((manifest, result))
}

/// Repeats the run recorded in `manifest_path` into `out_dir`.
pub fn rerun(manifest_path: &Path, out_dir: &Path, workers: Option<usize>) -> anyhow::Result<(RunManifest, JobResult)> {
    let old = RunManifest::load(manifest_path)?;
    run(&old.config, out_dir, workers.unwrap_or(old.workers))
}
