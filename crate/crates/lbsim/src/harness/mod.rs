//! Experiment orchestration: configs, result records and output directories.

pub mod config;
pub mod experiments;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
pub use config::Config;

/// One reported quantity. Checked records pass when `|value| <= tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub metric: String,
    pub lambda: Option<f64>,
    pub value: f64,
    pub stderr: Option<f64>,
    pub pass: Option<bool>,
    pub tolerance: Option<f64>,
}

impl ResultRecord {
    pub fn info(experiment: &str, metric: &str, lambda: Option<f64>, value: f64, stderr: Option<f64>) -> Self {
        Self {
            experiment: experiment.into(),
            metric: metric.into(),
            lambda,
            value,
            stderr,
            pass: None,
            tolerance: None,
        }
    }

    pub fn check(
        experiment: &str,
        metric: &str,
        lambda: Option<f64>,
        value: f64,
        stderr: Option<f64>,
        tolerance: f64,
    ) -> Self {
        Self {
            pass: Some(value.abs() <= tolerance),
            tolerance: Some(tolerance),
            ..Self::info(experiment, metric, lambda, value, stderr)
        }
    }

    /// Counts the steps where `values` fails to decrease strictly; passes at zero.
    pub fn decreasing(experiment: &str, metric: &str, values: &[f64]) -> Self {
        let bad = values.windows(2).filter(|w| !(w[1] < w[0])).count();
        Self::check(experiment, metric, None, bad as f64, None, 0.0)
    }

    pub fn failed(&self) -> bool {
        self.pass == Some(false)
    }
}

/// Numeric CSV table, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub name: String,
    pub columns: Vec<String>,
    pub data: Vec<f64>,
}

impl CsvTable {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            data: Vec::new(),
        }
    }

    pub fn push(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.data.extend_from_slice(row);
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.columns.len()
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.columns.join(","))?;
        for row in self.data.chunks(self.columns.len()) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    Table(CsvTable),
    File { name: String, bytes: Vec<u8> },
}

impl Artifact {
    pub fn name(&self) -> &str {
        match self {
            Artifact::Table(t) => &t.name,
            Artifact::File { name, .. } => name,
        }
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        match self {
            Artifact::Table(t) => t.write(w),
            Artifact::File { bytes, .. } => Ok(w.write_all(bytes)?),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOutput {
    pub records: Vec<ResultRecord>,
    pub artifacts: Vec<Artifact>,
}

impl RunOutput {
    pub fn any_failed(&self) -> bool {
        self.records.iter().any(ResultRecord::failed)
    }

    pub fn records_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("record serializes"));
            s.push('\n');
        }
        s
    }

    pub fn records_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut s = String::from("experiment,metric,lambda,value,stderr,pass,tolerance\n");
        for r in &self.records {
            let pass = r.pass.map(|p| p.to_string()).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.experiment,
                r.metric,
                opt(r.lambda),
                r.value,
                opt(r.stderr),
                pass,
                opt(r.tolerance)
            ));
        }
        s
    }
}

/// Subcommands of the front end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Limits,
    Volterra,
    Kappa,
    Thm1,
    Thm2,
    Appendix,
    Conjecture,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Limits => "limits",
            Command::Volterra => "volterra",
            Command::Kappa => "kappa",
            Command::Thm1 => "thm1",
            Command::Thm2 => "thm2",
            Command::Appendix => "appendix",
            Command::Conjecture => "conjecture",
        }
    }
}

/// Runs one subcommand on the current rayon pool.
pub fn run(cmd: Command, cfg: &Config) -> Result<RunOutput> {
    use experiments as ex;
    let records = match cmd {
        Command::Simulate => return ex::simulate(cfg),
        Command::Limits => return ex::limits_suite(cfg),
        Command::Volterra => return ex::volterra_suite(cfg),
        Command::Kappa => ex::kappa_table(cfg)?.0,
        Command::Thm1 => {
            let kappa = ex::configured_kappa(cfg)?;
            let rows = ex::kinetic_ladder(cfg)?;
            ex::thm1_table(cfg, &rows, &kappa)?
        }
        Command::Thm2 => {
            let rows = ex::kinetic_ladder(cfg)?;
            ex::thm2_table(cfg, &rows)?
        }
        Command::Appendix => ex::appendix_suite(cfg, cfg.limits.convention)?,
        Command::Conjecture => {
            let kappa = ex::configured_kappa(cfg)?;
            let rows = ex::kinetic_ladder(cfg)?;
            ex::conjecture_compare(cfg, &rows, kappa.value)?
        }
    };
    Ok(RunOutput {
        records,
        artifacts: Vec::new(),
    })
}

/// Runs on a dedicated pool; `threads == 0` uses the rayon default.
pub fn run_with_threads(cmd: Command, cfg: &Config, threads: usize) -> Result<RunOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    pool.install(|| run(cmd, cfg))
}

/// Hash identifying an output directory: the command plus the canonical config.
pub fn run_hash(cmd: Command, cfg: &Config) -> String {
    let mut h = Sha256::new();
    h.update(cmd.name().as_bytes());
    h.update(b"\n");
    h.update(cfg.hash().as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment_id: String,
    pub command: Command,
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    pub threads: usize,
    pub created_unix: u64,
    pub files: Vec<String>,
}

pub const MANIFEST: &str = "manifest.json";

/// Fails if `dir` holds a manifest written for a different command or config.
pub fn check_output_dir(dir: &Path, cmd: Command, cfg: &Config) -> Result<()> {
    let path = dir.join(MANIFEST);
    if !path.exists() {
        return Ok(());
    }
    let old: Manifest = serde_json::from_str(&fs::read_to_string(&path)?)
        .map_err(|e| Error::OutputConflict(format!("{} (unreadable manifest: {e})", dir.display())))?;
    if old.config_hash != run_hash(cmd, cfg) {
        return Err(Error::OutputConflict(dir.display().to_string()));
    }
    Ok(())
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> Result<()>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Writes records, artifacts, the resolved config and the manifest.
pub fn write_outputs(dir: &Path, cmd: Command, cfg: &Config, threads: usize, out: &RunOutput) -> Result<Manifest> {
    check_output_dir(dir, cmd, cfg)?;
    fs::create_dir_all(dir)?;
    let mut files = vec!["config.toml".to_string(), "records.jsonl".into(), "records.csv".into()];
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    fs::write(dir.join("records.jsonl"), out.records_jsonl())?;
    fs::write(dir.join("records.csv"), out.records_csv())?;
    for a in &out.artifacts {
        write_file(&dir.join(a.name()), |w| a.write(w))?;
        files.push(a.name().to_string());
    }
    let manifest = Manifest {
        experiment_id: cfg.experiment.id.clone(),
        command: cmd,
        config_hash: run_hash(cmd, cfg),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.experiment.seed,
        threads,
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        files,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(dir.join(MANIFEST), json + "\n")?;
    Ok(manifest)
}

/// Machine-readable record of a failed run.
pub fn write_error(dir: &Path, cmd: Command, err: &Error) -> Result<()> {
    fs::create_dir_all(dir)?;
    let v = serde_json::json!({
        "command": cmd.name(),
        "error": err.kind(),
        "message": err.to_string(),
    });
    fs::write(dir.join("error.json"), v.to_string() + "\n")?;
    Ok(())
}
