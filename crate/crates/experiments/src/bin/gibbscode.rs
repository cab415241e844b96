use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gibbscode_experiments::{emit, run_experiment, ExpError, ExperimentConfig, ExperimentKind, Format};

#[derive(Parser)]
#[command(name = "gibbscode", version, about = "Exact and message-passing experiments on sparse graph codes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Correlation decay against graph distance.
    CorrDecay,
    /// GEXIT curves from several estimators.
    GexitCurve,
    /// Density-evolution GEXIT against depth.
    DeCurve,
    /// Pointwise and averaged correlation bounds.
    Bounds,
    /// Primal/dual identities on random LDPC codes.
    DualityCheck,
    /// Cluster expansion identity on tiny LDPC codes.
    BerrettiCheck,
    /// Convergence of truncated BP-GEXIT.
    Limits,
}

impl Command {
    fn kind(self) -> ExperimentKind {
        match self {
            Command::CorrDecay => ExperimentKind::CorrDecay,
            Command::GexitCurve => ExperimentKind::GexitCurve,
            Command::DeCurve => ExperimentKind::DeCurve,
            Command::Bounds => ExperimentKind::Bounds,
            Command::DualityCheck => ExperimentKind::DualityCheck,
            Command::BerrettiCheck => ExperimentKind::BerrettiCheck,
            Command::Limits => ExperimentKind::Limits,
        }
    }
}

fn run(cli: &Cli) -> Result<Option<bool>, ExpError> {
    let path = cli.config.as_ref().ok_or_else(|| ExpError::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    let kind = cli.command.kind();
    match cfg.experiment {
        Some(k) if k != kind => {
            return Err(ExpError::Config(format!(
                "config describes {} but the subcommand is {}",
                k.as_str(),
                kind.as_str()
            )));
        }
        _ => cfg.experiment = Some(kind),
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| ExpError::Config(e.to_string()))?;
    }
    let out = run_experiment(&cfg)?;
    for p in emit(&out, &cfg, Format::Csv, &cli.out)?.into_iter().chain(emit(&out, &cfg, Format::Json, &cli.out)?) {
        println!("{}", p.display());
    }
    Ok(out.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Some(false)) => {
            eprintln!("check failed");
            ExitCode::from(1)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
