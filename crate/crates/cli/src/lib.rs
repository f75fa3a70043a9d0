//! Scenario runner for the thermolab library.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | every asserted check passed |
//! | 1 | I/O failure while writing artifacts |
//! | 2 | config or manifest could not be read or parsed |
//! | 3 | a parameter violates a precondition |
//! | 4 | an asserted bound was violated |
//! | 5 | replay produced different bytes |

pub mod config;
pub mod output;
pub mod scenario;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use config::Config;
use output::{first_divergence, sha256_hex, to_json, write_atomic};
use scenario::{prepare, CATALOG};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("replay mismatch: {0}")]
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Precondition(_) => 3,
            CliError::Mismatch(_) => 5,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERTION: i32 = 4;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub name: String,
    pub kind: String,
    pub seed: u64,
    pub passed: bool,
    pub wall_time_s: f64,
    pub artifacts: Vec<Artifact>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: PathBuf,
    pub config_sha256: String,
    pub seed: u64,
    pub threads: usize,
    pub wall_time_s: f64,
    pub exit_code: i32,
    pub scenarios: Vec<ScenarioRecord>,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: PathBuf,
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Precondition("--threads must be positive".into()));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| CliError::Io(e.to_string()))
}

/// Runs every scenario of a config, writes the artifacts and the manifest,
/// and returns the manifest. `exit_code` is 0 or 4.
pub fn run(config_path: &Path, opts: &RunOptions) -> Result<Manifest, CliError> {
    let started = Instant::now();
    let (cfg, bytes): (Config, Vec<u8>) = config::load(config_path)?;
    let base_dir = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let base_seed = opts.seed.or(cfg.seed).unwrap_or(0);
    // all scenarios are validated before any numerical work starts
    let prepared = cfg.scenarios.iter().map(|s| prepare(s, &base_dir, base_seed)).collect::<Result<Vec<_>, _>>()?;
    let pool = pool(opts.threads)?;
    std::fs::create_dir_all(&opts.out)?;
    let mut records = Vec::with_capacity(prepared.len());
    for p in &prepared {
        let t0 = Instant::now();
        let outcome = pool.install(|| p.execute())?;
        let passed = outcome.checks.iter().all(|c| c.passed);
        let entry = p.scenario.experiment.entry();
        let report = json!({
            "name": p.scenario.name,
            "kind": entry.kind,
            "anchor": entry.anchor,
            "seed": p.seed,
            "bound_scale": p.scenario.bound_scale,
            "passed": passed,
            "checks": outcome.checks,
            "result": outcome.result,
        });
        let mut files = vec![(format!("{}.json", p.scenario.name), to_json(&report))];
        for t in outcome.tables {
            files.push((format!("{}.{}.csv", p.scenario.name, t.suffix), t.bytes));
        }
        let mut artifacts = Vec::with_capacity(files.len());
        for (name, data) in &files {
            write_atomic(&opts.out.join(name), data)?;
            artifacts.push(Artifact { path: name.clone(), sha256: sha256_hex(data) });
        }
        for c in outcome.checks.iter().filter(|c| !c.passed) {
            eprintln!("{}: check failed: {} = {:e}, limit {:e}", p.scenario.name, c.name, c.value, c.limit);
        }
        records.push(ScenarioRecord {
            name: p.scenario.name.clone(),
            kind: entry.kind.to_string(),
            seed: p.seed,
            passed,
            wall_time_s: t0.elapsed().as_secs_f64(),
            artifacts,
        });
    }
    let exit_code = if records.iter().all(|r| r.passed) { EXIT_OK } else { EXIT_ASSERTION };
    let manifest = Manifest {
        tool: "thermolab".into(),
        version: VERSION.into(),
        config: std::fs::canonicalize(config_path)?,
        config_sha256: sha256_hex(&bytes),
        seed: base_seed,
        threads: pool.current_num_threads(),
        wall_time_s: started.elapsed().as_secs_f64(),
        exit_code,
        scenarios: records,
    };
    write_atomic(&opts.out.join(MANIFEST_NAME), &to_json(&manifest))?;
    Ok(manifest)
}

/// Re-runs the manifest's config with its seed and byte-compares every
/// artifact against the files next to the manifest.
pub fn replay(manifest_path: &Path, threads: Option<usize>) -> Result<Manifest, CliError> {
    let text = std::fs::read(manifest_path).map_err(|e| CliError::Config(format!("{}: {e}", manifest_path.display())))?;
    let old: Manifest = serde_json::from_slice(&text).map_err(|e| CliError::Config(format!("{}: {e}", manifest_path.display())))?;
    let dir = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let cfg_bytes = std::fs::read(&old.config).map_err(|e| CliError::Config(format!("{}: {e}", old.config.display())))?;
    if sha256_hex(&cfg_bytes) != old.config_sha256 {
        return Err(CliError::Mismatch(format!("config {} changed since the recorded run", old.config.display())));
    }
    let scratch = tempfile::tempdir()?;
    let opts = RunOptions { seed: Some(old.seed), threads, out: scratch.path().to_path_buf() };
    let new = run(&old.config, &opts)?;
    for (a, b) in old.scenarios.iter().zip(&new.scenarios) {
        if a.name != b.name || a.artifacts.len() != b.artifacts.len() {
            return Err(CliError::Mismatch(format!("scenario list differs at {:?} / {:?}", a.name, b.name)));
        }
    }
    if old.scenarios.len() != new.scenarios.len() {
        return Err(CliError::Mismatch("scenario count differs".into()));
    }
    for rec in &old.scenarios {
        for art in &rec.artifacts {
            let recorded = std::fs::read(dir.join(&art.path)).map_err(|e| CliError::Mismatch(format!("{}: {e}", art.path)))?;
            let fresh = std::fs::read(scratch.path().join(&art.path)).map_err(|e| CliError::Mismatch(format!("{}: {e}", art.path)))?;
            if let Some((offset, line)) = first_divergence(&recorded, &fresh) {
                return Err(CliError::Mismatch(format!("{}: first difference at byte {offset} (line {line})", art.path)));
            }
        }
    }
    Ok(new)
}

/// One line per experiment kind: kind, anchor and library operation.
pub fn catalog_lines() -> Vec<String> {
    CATALOG.iter().map(|e| format!("{:<26} {:<50} {}", e.kind, format!("\"{}\"", e.anchor), e.operation)).collect()
}
