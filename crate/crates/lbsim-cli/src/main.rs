use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use lbsim::harness::{self, Command, Config};
use lbsim::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sub {
    Simulate,
    Limits,
    Volterra,
    Kappa,
    Thm1,
    Thm2,
    Appendix,
    Conjecture,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Simulate => Command::Simulate,
            Sub::Limits => Command::Limits,
            Sub::Volterra => Command::Volterra,
            Sub::Kappa => Command::Kappa,
            Sub::Thm1 => Command::Thm1,
            Sub::Thm2 => Command::Thm2,
            Sub::Appendix => Command::Appendix,
            Sub::Conjecture => Command::Conjecture,
        }
    }
}

/// Heavy test particle simulations and their diffusive limits.
#[derive(Debug, Parser)]
#[command(name = "lbsim", version)]
struct Cli {
    #[arg(value_enum)]
    command: Sub,
    /// TOML file with [model], [splitting], [limits], [volterra] and [experiment] sections.
    #[arg(long)]
    config: PathBuf,
    /// Overrides experiment.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 picks one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Output directory; falls back to LBSIM_OUT, then experiment.out.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `section.key=value`, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn load(cli: &Cli) -> lbsim::Result<(Config, PathBuf)> {
    let mut overrides = cli.set.clone();
    if let Some(s) = cli.seed {
        overrides.push(format!("experiment.seed={s}"));
    }
    let cfg = Config::load(&cli.config, &overrides)?;
    let out = cli
        .out
        .clone()
        .or_else(|| std::env::var_os("LBSIM_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&cfg.experiment.out));
    Ok((cfg, out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cmd = Command::from(cli.command);
    let (cfg, out) = match load(&cli) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("lbsim: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = harness::check_output_dir(&out, cmd, &cfg) {
        eprintln!("lbsim: {e}");
        return ExitCode::from(1);
    }
    let result = harness::run_with_threads(cmd, &cfg, cli.threads)
        .and_then(|res| harness::write_outputs(&out, cmd, &cfg, cli.threads, &res).map(|_| res));
    match result {
        Ok(res) => {
            for r in res.records.iter().filter(|r| r.failed()) {
                eprintln!(
                    "lbsim: check failed: {} {} value={} tolerance={:?}",
                    r.experiment, r.metric, r.value, r.tolerance
                );
            }
            if cfg.experiment.assert && res.any_failed() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("lbsim: {e}");
            if !matches!(e, Error::OutputConflict(_)) {
                if let Err(w) = harness::write_error(&out, cmd, &e) {
                    eprintln!("lbsim: cannot write error record: {w}");
                }
            }
            match e {
                Error::ConfigInvalid(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
