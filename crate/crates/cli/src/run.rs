use std::fs::{self, File};
use std::path::{Path, PathBuf};

use chrono::Utc;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use xmam::config::{DatasetConfig, ExperimentConfig};
use xmam::sim::{MetricsCsv, RoundReport, RoundSink, Simulation};

use crate::failure::Failure;

pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Self-description of a run directory.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    /// Experiment file as given on the command line.
    pub config_source: PathBuf,
    /// Effective configuration stored next to the outputs.
    pub config_copy: String,
    /// SHA-256 of the bytes of `config_copy`.
    pub config_sha256: String,
    pub seed: u64,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub rounds_planned: usize,
    pub rounds_completed: usize,
    /// Set until the run finishes; a failed run keeps its completed rounds.
    pub partial: bool,
    pub error: Option<String>,
    pub metrics: String,
    pub diagnostics: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DiagnosticsFile {
    pub rounds: Vec<RoundReport>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(Failure::runtime)?;
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

/// Makes a relative dataset directory absolute so the stored copy works
/// from anywhere.
fn anchor_dataset(cfg: &mut ExperimentConfig, base: &Path) -> Result<(), Failure> {
    if let DatasetConfig::Mnist { dir, .. } = &mut cfg.dataset {
        if dir.is_relative() {
            *dir = std::path::absolute(base.join(&*dir)).map_err(Failure::runtime)?;
        }
    }
    Ok(())
}

struct RunSink {
    metrics: MetricsCsv<File>,
    reports: Vec<RoundReport>,
}

impl RoundSink for RunSink {
    fn record(&mut self, r: &RoundReport) -> xmam::Result<()> {
        self.metrics.record(r)?;
        match r.attack_success_rate {
            Some(asr) => log::info!(
                "round {}: test error {:.4}, attack success {:.4}, kept {}/{}",
                r.iteration,
                r.test_error,
                asr,
                r.preserved_count(),
                r.sampled_ids.len()
            ),
            None => log::info!(
                "round {}: test error {:.4}, kept {}/{}",
                r.iteration,
                r.test_error,
                r.preserved_count(),
                r.sampled_ids.len()
            ),
        }
        self.reports.push(r.clone());
        Ok(())
    }
}

pub fn run(config: &Path, out: &Path, seed: Option<u64>) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::from_path(config).map_err(|e| match e {
        xmam::Error::Io { .. } => Failure::Config(e.to_string()),
        other => other.into(),
    })?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let base = config.parent().unwrap_or(Path::new("."));
    anchor_dataset(&mut cfg, base)?;
    let stored = cfg.to_toml_string()?;

    fs::create_dir_all(out).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
    fs::write(out.join(CONFIG_FILE), &stored).map_err(Failure::runtime)?;
    let mut manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_source: config.to_path_buf(),
        config_copy: CONFIG_FILE.to_string(),
        config_sha256: sha256_hex(stored.as_bytes()),
        seed: cfg.seed,
        started_at: Utc::now().to_rfc3339(),
        finished_at: None,
        rounds_planned: cfg.global_iterations,
        rounds_completed: 0,
        partial: true,
        error: None,
        metrics: METRICS_FILE.to_string(),
        diagnostics: DIAGNOSTICS_FILE.to_string(),
    };
    let manifest_path = out.join(MANIFEST_FILE);
    write_json(&manifest_path, &manifest)?;
    log::info!(
        "running {} rounds with seed {} into {}",
        cfg.global_iterations,
        cfg.seed,
        out.display()
    );

    let timing = cfg.timing_in_metrics;
    let mut sink = RunSink {
        metrics: MetricsCsv::create(out.join(METRICS_FILE), timing)?,
        reports: Vec::new(),
    };
    let outcome = match Simulation::from_config(cfg, base) {
        Ok(mut sim) => sim.run(&mut sink).map(|_| ()).map_err(Failure::from),
        Err(e) => Err(Failure::from(e)),
    };

    let diagnostics = DiagnosticsFile {
        rounds: sink.reports,
    };
    write_json(&out.join(DIAGNOSTICS_FILE), &diagnostics)?;
    manifest.rounds_completed = diagnostics.rounds.len();
    manifest.finished_at = Some(Utc::now().to_rfc3339());
    manifest.partial = outcome.is_err();
    manifest.error = outcome.as_ref().err().map(ToString::to_string);
    write_json(&manifest_path, &manifest)?;
    outcome
}
