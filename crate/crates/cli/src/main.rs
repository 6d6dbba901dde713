use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use almpc_cli::config::parse_config;
use almpc_cli::export::{export_bundle, export_csv, read_bundle, LogBundle, NamedRun};
use almpc_cli::selftest::run_selftest;
use almpc_cli::svg::render_svg;
use almpc_cli::CliError;
use almpc_core::simulator::{compare_runs, run_experiment};

#[derive(Parser)]
#[command(
    name = "almpc",
    about = "Adaptive learning tube MPC experiments: run, compare, plot"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and export CSV logs and SVG figures
    Run {
        /// Experiment configuration (JSON)
        #[arg(short = 'c', long = "config")]
        config: PathBuf,
        /// Output directory
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
        /// Scalar config overrides, key=value
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run the adaptive scheme and the fixed-domain baseline on identical
    /// disturbances and export both
    Compare {
        #[arg(short = 'c', long = "config")]
        config: PathBuf,
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Re-render SVG figures from a previously exported output directory
    Plot {
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
    },
    /// Run the built-in smoke suite
    Selftest,
}

fn cmd_run(config: &Path, out: &Path, overrides: &[String]) -> Result<(), CliError> {
    let cfg = parse_config(config, overrides)?;
    let run = run_experiment(&cfg)?;
    let name = if cfg.adaptation_enabled {
        "almpc"
    } else {
        "rlmpc"
    };
    export_csv(&run, out)?;
    let bundle = LogBundle {
        runs: vec![NamedRun {
            name: name.to_string(),
            run,
        }],
    };
    export_bundle(&bundle, out)?;
    render_svg(&bundle, out)?;
    log::info!("wrote logs and figures to {}", out.display());
    Ok(())
}

fn cmd_compare(config: &Path, out: &Path, overrides: &[String]) -> Result<(), CliError> {
    let cfg = parse_config(config, overrides)?;
    let (adaptive, baseline) = compare_runs(&cfg)?;
    export_csv(&adaptive, &out.join("almpc"))?;
    export_csv(&baseline, &out.join("rlmpc"))?;
    let bundle = LogBundle {
        runs: vec![
            NamedRun {
                name: "almpc".to_string(),
                run: adaptive,
            },
            NamedRun {
                name: "rlmpc".to_string(),
                run: baseline,
            },
        ],
    };
    export_bundle(&bundle, out)?;
    render_svg(&bundle, out)?;
    log::info!("wrote paired logs and figures to {}", out.display());
    Ok(())
}

fn cmd_plot(out: &Path) -> Result<(), CliError> {
    let bundle = read_bundle(out).map_err(|_| {
        CliError::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!(
                "{}/logs.json not found; `plot` re-renders from a directory written by `run` or `compare`",
                out.display()
            ),
        ))
    })?;
    render_svg(&bundle, out)?;
    log::info!("re-rendered figures in {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new()
            .filter("ALMPC_LOG")
            .default_filter_or("info"),
    )
    .format_timestamp(None)
    .init();

    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            config,
            out,
            overrides,
        } => cmd_run(config, out, overrides),
        Command::Compare {
            config,
            out,
            overrides,
        } => cmd_compare(config, out, overrides),
        Command::Plot { out } => cmd_plot(out),
        Command::Selftest => {
            let (_, failed) = run_selftest();
            if failed == 0 {
                return ExitCode::SUCCESS;
            }
            return ExitCode::FAILURE;
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("almpc: {}", err);
            ExitCode::from(err.exit_code())
        }
    }
}
