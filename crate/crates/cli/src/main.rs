use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dmvqe_cli::config::{read_json, BpScanConfig, DatasetGenConfig, DmTrainConfig, Experiment, ExperimentConfig, SampleConfig, VqeConfig};
use dmvqe_cli::experiment::{run_experiment, run_sample, run_vqe};
use dmvqe_cli::{CliError, Result};

#[derive(Parser)]
#[command(name = "dmvqe", version, about = "Diffusion-initialized VQE experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the configured base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (default: the config's `out_dir`, else `out`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Label a (J, h) grid with optimized circuit parameters.
    GenDataset,
    /// Train the conditional diffusion model on a dataset.
    TrainDm,
    /// Draw best-of-k parameter grids for one Hamiltonian.
    Sample,
    /// Run one VQE variant.
    Vqe,
    /// Gradient-variance scan over circuit depth.
    BpScan,
    /// Run any experiment kind given by the config's `kind` field.
    Eval,
}

fn config_path(cli: &Cli) -> Result<&Path> {
    cli.config
        .as_deref()
        .ok_or_else(|| CliError::validation("--config is required"))
}

fn out_dir(cli: &Cli, configured: Option<PathBuf>) -> PathBuf {
    cli.out_dir.clone().or(configured).unwrap_or_else(|| PathBuf::from("out"))
}

fn run_kind(cli: &Cli, mut experiment: Experiment) -> Result<()> {
    if let Some(seed) = cli.seed {
        experiment.set_seed(seed);
    }
    let dir = out_dir(cli, None);
    let report = run_experiment(&experiment, &dir)?;
    for (k, v) in &report.aggregates {
        println!("{k}: {v}");
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let path = config_path(cli)?;
    match cli.command {
        Command::GenDataset => run_kind(cli, Experiment::DatasetGen(read_json::<DatasetGenConfig>(path)?)),
        Command::TrainDm => run_kind(cli, Experiment::DmTrain(read_json::<DmTrainConfig>(path)?)),
        Command::BpScan => run_kind(cli, Experiment::BpScan(read_json::<BpScanConfig>(path)?)),
        Command::Eval => {
            let cfg: ExperimentConfig = read_json(path)?;
            let mut experiment = cfg.experiment;
            if let Some(seed) = cli.seed {
                experiment.set_seed(seed);
            }
            let report = run_experiment(&experiment, &out_dir(cli, cfg.out_dir))?;
            for (k, v) in &report.aggregates {
                println!("{k}: {v}");
            }
            Ok(())
        }
        Command::Sample => {
            let mut cfg: SampleConfig = read_json(path)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let value = run_sample(&cfg, &out_dir(cli, None))?;
            println!("best energy: {}", value["best"]["energy"]);
            Ok(())
        }
        Command::Vqe => {
            let mut cfg: VqeConfig = read_json(path)?;
            if let Some(seed) = cli.seed {
                cfg.optimizer.seed = seed;
            }
            let result = run_vqe(&cfg, &out_dir(cli, None))?;
            println!("final energy: {}", result.final_energy);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
