//! Config-driven runner for the dampwave laboratory: ray studies, GCC
//! audits, escape-function checks, wave runs and the local energy comparison.

// Validation writes `!(x > 0.0)` so NaN is refused too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

pub use commands::Subcommand;
pub use config::Config;
pub use error::RunError;
use output::{sha256_hex, FileEntry, OutputDir};

pub const OUTPUT_ENV: &str = "DAMPWAVE_OUTPUT_DIR";
pub const FALLBACK_OUTPUT: &str = "dampwave-out";

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    pub subcommand: &'static str,
    pub config_path: String,
    pub config_sha256: String,
    pub rng_seed: u64,
    pub threads: usize,
    pub status: &'static str,
    pub exit_code: i32,
    pub started_unix: u64,
    pub wall_time_s: f64,
    pub files: Vec<FileEntry>,
}

/// `--output`, then the config's `output_dir`, then `$DAMPWAVE_OUTPUT_DIR`,
/// then `./dampwave-out`.
pub fn resolve_output(flag: Option<&Path>, cfg: Option<&Config>, env: Option<PathBuf>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()))
        .or(env)
        .unwrap_or_else(|| PathBuf::from(FALLBACK_OUTPUT))
}

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, RunError> {
    match threads {
        Some(0) => Err(RunError::Config("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| RunError::Config(format!("cannot start {n} threads: {e}"))),
        None => Ok(f()),
    }
}

/// Loads nothing and prints nothing: runs `sub` on a parsed config, writes
/// the reports, `manifest_<sub>.json` and, on failure, `error.json`.
pub fn execute(
    sub: Subcommand,
    cfg: &Config,
    config_bytes: &[u8],
    config_path: &str,
    out_root: &Path,
    threads: Option<usize>,
) -> Result<Manifest, RunError> {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    let mut out = OutputDir::create(out_root)?;
    let (result, used) = with_threads(threads, || (commands::run(sub, cfg, &mut out), rayon::current_num_threads()))?;
    if let Err(e) = &result {
        out.write_json("error.json", &e.report(sub.as_str()))?;
    }
    let manifest = Manifest {
        tool: "dampwave",
        version: env!("CARGO_PKG_VERSION"),
        core_version: dampwave_core::VERSION,
        subcommand: sub.as_str(),
        config_path: config_path.to_string(),
        config_sha256: sha256_hex(config_bytes),
        rng_seed: cfg.rng_seed,
        threads: used,
        status: result.as_ref().map_or_else(|e| e.kind(), |_| "ok"),
        exit_code: result.as_ref().map_or_else(|e| e.exit_code(), |_| 0),
        started_unix: started,
        wall_time_s: clock.elapsed().as_secs_f64(),
        files: out.files().to_vec(),
    };
    out.write_json(&format!("manifest_{}.json", sub.as_str()), &manifest)?;
    result.map(|_| manifest)
}
