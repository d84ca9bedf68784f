use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rpca_cli::experiment::generate_dataset;
use rpca_cli::{parse_grid, run_experiment, run_scaling_bench, CliError, ExperimentConfig, RunOptions};

#[derive(Parser)]
#[command(name = "rpca", version, about = "Robust PCA experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed and method of a config; writes report.json and report.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: the config's output_path, then ./rpca-out).
        #[arg(long, env = rpca_cli::OUTPUT_DIR_ENV)]
        out: Option<PathBuf>,
        /// Sequential reductions everywhere; reports are then reproducible.
        #[arg(long)]
        deterministic: bool,
        /// Seeds run in this many worker slots.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Median wall time of the batch driver over an `NxD,NxD,...` grid.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        grid: String,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, env = rpca_cli::OUTPUT_DIR_ENV)]
        out: Option<PathBuf>,
    },
    /// Write the labeled, contaminated dataset of one seed.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the first configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn output_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| cfg.output_path.clone())
        .unwrap_or_else(|| PathBuf::from("rpca-out"))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            out,
            deterministic,
            workers,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = run_experiment(&cfg, &RunOptions { deterministic, workers })?;
            let (json, csv) = report.write_to_dir(&output_dir(out, &cfg))?;
            for s in &report.aggregate {
                println!(
                    "{:<18} runs {:>3}  median ratio {:.4}  IQR {:.4}  median time {:.3}s",
                    s.method.to_string(),
                    s.runs,
                    s.median_ratio,
                    s.iqr_ratio,
                    s.median_wall_time_secs
                );
            }
            println!("digest {}", report.digest);
            println!("wrote {} and {}", json.display(), csv.display());
        }
        Command::Bench {
            config,
            grid,
            repeats,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let grid = parse_grid(&grid)?;
            let table = run_scaling_bench(&cfg, &grid, repeats)?;
            table.write_csv(std::io::stdout())?;
            let dir = output_dir(out, &cfg);
            std::fs::create_dir_all(&dir)?;
            table.write_csv_path(&dir.join("bench.csv"))?;
        }
        Command::Gen { config, out, seed } => {
            let cfg = ExperimentConfig::load(&config)?;
            let n = cfg
                .n
                .ok_or_else(|| CliError::Config("n: gen needs a sample count".into()))?;
            let seed = seed.unwrap_or(cfg.seeds[0]);
            generate_dataset(&cfg, seed, n)?.write_path(&out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
