use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hgesi_cli::commands;
use hgesi_cli::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "hgesi", version, about = "Source imaging with a hierarchical graph prior")]
struct Cli {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated method list, e.g. `proposed,sloreta`.
    #[arg(long, global = true)]
    methods: Option<String>,
    /// Grid cells processed in parallel.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one instance directory per grid cell.
    Simulate {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the configured methods on one instance directory.
    Fit {
        instance: PathBuf,
        /// Defaults to `<instance>/fit`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate, fit and score the whole grid.
    Benchmark {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Project a fitted landmark tree to 3-D for plotting.
    ExportTree {
        state: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score fitted estimates of one instance.
    Metrics {
        instance: PathBuf,
        /// Directory written by `fit`; defaults to `<instance>/fit`.
        #[arg(long)]
        fit: Option<PathBuf>,
        /// Defaults to `<fit>/metrics.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::load_or_default(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.validate().map_err(|e| CliError::Validation(format!("--seed: {e}")))?;
    }
    if let Some(m) = &cli.methods {
        cfg.set_methods(m)?;
    }
    match cli.command {
        Command::Simulate { out } => {
            let out = out.unwrap_or_else(|| cfg.output_dir.clone());
            let dirs = commands::cmd_simulate(&cfg, &out, cli.jobs)?;
            println!("wrote {} instances under {}", dirs.len(), out.display());
        }
        Command::Fit { instance, out } => {
            for dir in commands::cmd_fit(&cfg, &instance, out.as_deref())? {
                println!("{}", dir.display());
            }
        }
        Command::Benchmark { out } => {
            let out = out.unwrap_or_else(|| cfg.output_dir.clone());
            let res = commands::cmd_benchmark(&cfg, &out, cli.jobs)?;
            for row in &res.summary {
                println!("{}", row.csv_row());
            }
            println!(
                "{} runs in {:.1}s; wrote {} and {}",
                res.runs.len(),
                res.wall_seconds,
                res.runs_csv.display(),
                res.summary_csv.display()
            );
        }
        Command::ExportTree { state, out } => {
            commands::cmd_export_tree(&state, &out)?;
            println!("{}", out.display());
        }
        Command::Metrics { instance, fit, out } => {
            let csv = commands::cmd_metrics(&cfg, &instance, fit.as_deref())?;
            let out = out.unwrap_or_else(|| fit.unwrap_or_else(|| instance.join("fit")).join("metrics.csv"));
            std::fs::write(&out, &csv).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
            print!("{csv}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are validation errors; help and version are not errors
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
