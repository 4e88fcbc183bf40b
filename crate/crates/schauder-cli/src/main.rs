use clap::Parser;
use schauder::config::Config;
use schauder::error::Error;
use schauder_cli::{run_experiment, RunOptions, EXPERIMENTS};
use std::path::PathBuf;
use std::process::ExitCode;

/// Desk-scale elliptic regularity laboratory: norms, dyadic analysis,
/// potentials, maximum-principle solvers, boundary blow-up.
#[derive(Parser)]
#[command(name = "schauder", version, about)]
struct Cli {
    /// Experiment config file (key = value lines with `[sections]`)
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory for report.json / sweep.csv
    #[arg(long, default_value = ".")]
    out: PathBuf,

    /// Override the config's random seed
    #[arg(long)]
    seed: Option<u64>,

    /// Pin the report timestamp (byte-identical reruns)
    #[arg(long)]
    fixed_clock: bool,

    /// List available experiment kinds and exit
    #[arg(long)]
    list_experiments: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.list_experiments {
        for name in EXPERIMENTS {
            println!("{name}");
        }
        return ExitCode::SUCCESS;
    }
    let Some(config_path) = &cli.config else {
        eprintln!("error: --config PATH is required (or --list-experiments)");
        return ExitCode::from(2);
    };
    let text = match std::fs::read_to_string(config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config_path.display());
            return ExitCode::from(2);
        }
    };
    let cfg = match Config::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let opts = RunOptions {
        seed_override: cli.seed,
        fixed_clock: cli.fixed_clock,
    };
    match run_experiment(&cfg, &opts) {
        Ok(out) => {
            if let Err(e) = std::fs::create_dir_all(&cli.out) {
                eprintln!("error: cannot create {}: {e}", cli.out.display());
                return ExitCode::from(2);
            }
            let report_path = cli.out.join("report.json");
            if let Err(e) = std::fs::write(&report_path, out.report.to_string_pretty()) {
                eprintln!("error: cannot write {}: {e}", report_path.display());
                return ExitCode::from(2);
            }
            if let Some(csv) = &out.sweep_csv {
                let csv_path = cli.out.join("sweep.csv");
                if let Err(e) = std::fs::write(&csv_path, csv) {
                    eprintln!("error: cannot write {}: {e}", csv_path.display());
                    return ExitCode::from(2);
                }
            }
            if out.failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                for name in &out.failed {
                    eprintln!("invariant failed: {name}");
                }
                ExitCode::from(1)
            }
        }
        Err(e @ (Error::ConfigParse { .. } | Error::InvalidArgument(_) | Error::Expr(_))) => {
            // configuration problems: no report is written
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
