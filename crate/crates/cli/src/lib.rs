//! Command implementations behind the `ace` binary.

use std::fs;
use std::path::{Path, PathBuf};

use ace_runtime::config::{ConfigError, KeyValues};
use ace_runtime::models::{all_tables, CostModelParams, ImplementedFootprint};
use ace_runtime::prover::DEFAULT_BUNDLE_BYTES;
use ace_runtime::sim::{run_scenario, Scenario, SimConfig, SimError, SimReport};
use ace_runtime::workload::Workload;
use thiserror::Error;

pub mod bench;

pub use bench::{cmd_bench_crypto, cmd_bench_pipeline, BenchReport};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Config { path: PathBuf, source: ConfigError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } => 1,
            _ => 2,
        }
    }
}

fn load_kv(path: &Path) -> Result<KeyValues, CliError> {
    KeyValues::load(path).map_err(|source| CliError::Config {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io)?;
    }
    fs::write(path, contents).map_err(io)
}

#[derive(Debug)]
pub struct SimulateOutput {
    pub report: SimReport,
    pub rendered: String,
    pub files: Vec<PathBuf>,
}

impl SimulateOutput {
    pub fn failures(&self) -> Vec<String> {
        self.report.check()
    }
}

/// Runs one scenario and, with `out`, writes `<scenario>-seed<seed>.report.txt`
/// and the matching `.audit.log`.
pub fn cmd_simulate(
    scenario: &str,
    config: Option<&Path>,
    seed: u64,
    out: Option<&Path>,
) -> Result<SimulateOutput, CliError> {
    let scenario: Scenario = scenario.parse()?;
    let cfg = match config {
        Some(path) => SimConfig::from_kv(&load_kv(path)?)?,
        None => SimConfig::default(),
    };
    let report = run_scenario(&cfg, scenario, seed)?;
    let rendered = report.render();
    let mut files = Vec::new();
    if let Some(dir) = out {
        let stem = format!("{}-seed{seed}", scenario.name());
        let report_path = dir.join(format!("{stem}.report.txt"));
        let audit_path = dir.join(format!("{stem}.audit.log"));
        write_file(&report_path, &rendered)?;
        write_file(&audit_path, &report.render_audit())?;
        files.extend([report_path, audit_path]);
    }
    Ok(SimulateOutput {
        report,
        rendered,
        files,
    })
}

/// Per-transaction block and witness bytes, measured on an encoded transfer.
pub fn implemented_footprint() -> ImplementedFootprint {
    let tx = Workload::new(0, 1, 2).transfer(0, 1, 0, 1);
    ImplementedFootprint {
        block_record_bytes: tx.record_len() as u64,
        witness_bundle_bytes: DEFAULT_BUNDLE_BYTES as u64,
    }
}

/// Writes `<name>.csv` and `<name>.txt` for every model table into `out`.
pub fn cmd_tables(config: Option<&Path>, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let params = match config {
        Some(path) => CostModelParams::from_kv(&load_kv(path)?).map_err(|source| CliError::Config {
            path: path.to_path_buf(),
            source,
        })?,
        None => CostModelParams::default(),
    };
    let mut files = Vec::new();
    for table in all_tables(&params, Some(implemented_footprint())) {
        let csv = out.join(format!("{}.csv", table.name));
        let txt = out.join(format!("{}.txt", table.name));
        write_file(&csv, &table.to_csv())?;
        write_file(&txt, &table.to_text())?;
        files.extend([csv, txt]);
    }
    Ok(files)
}
