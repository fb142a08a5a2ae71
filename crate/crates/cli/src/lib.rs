//! Command-line front end: scenario files, CSV and JSON formats, metric
//! reports and SVG plots around the `gptrack-core` pipeline.
//!
//! Exit codes: 0 success, 2 input or parse error, 3 numerical failure,
//! 4 contract violation, 5 failed assertion block or metrics comparison.

pub mod commands;
pub mod config;
pub mod error;
pub mod hyper;
pub mod io;
pub mod plot;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::Globals;
pub use config::{Assertions, OutputConfig, PlotKind, ScenarioConfig};
pub use error::CliError;
pub use hyper::HyperparameterFile;
pub use report::MetricsReport;

#[derive(Debug, Parser)]
#[command(
    name = "gptrack",
    version,
    about = "GP-forecast tracking MPC simulator"
)]
pub struct Cli {
    /// Overrides the sensor, optimizer and disturbance seeds.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Scenario JSON; built-in defaults when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; defaults to the scenario's `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Suppresses informational output.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fits per-channel GP hyperparameters to a tracking CSV.
    FitHyper {
        /// Tracking CSV (`t,x,y,z,roll,pitch,yaw` in s, mm, deg).
        tracking: PathBuf,
        /// Output file; defaults to `<out>/hyper.json`.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Forecasts pose, velocity and variance over the horizon.
    Predict {
        tracking: PathBuf,
        /// Hyperparameter JSON from `fit-hyper`.
        #[arg(long)]
        hyper: PathBuf,
        /// Forecast start, s; defaults to the last sample time.
        #[arg(long)]
        t_now: Option<f64>,
        /// Grid spacing, s.
        #[arg(long)]
        ts: Option<f64>,
        /// Number of steps N; the output has N + 1 rows.
        #[arg(long)]
        horizon: Option<usize>,
        /// Output file; defaults to `<out>/prediction.csv`.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Runs the closed-loop scenario and writes log, metrics and plots.
    Simulate {
        /// Scenario JSON; same as `--config`.
        scenario: Option<PathBuf>,
    },
    /// Recomputes metrics and plots from a log CSV.
    Report {
        log: PathBuf,
        /// Comma-separated plots (gp_error, pose, pose_error); empty for none.
        #[arg(long)]
        plots: Option<String>,
        /// Metrics JSON the recomputed metrics must match within 1e-12.
        #[arg(long)]
        expect: Option<PathBuf>,
    },
}

fn parse_plots(list: &str) -> Result<Vec<PlotKind>, CliError> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(PlotKind::parse)
        .collect()
}

/// Executes one parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut g = Globals {
        seed: cli.seed,
        config: cli.config,
        out: cli.out,
        quiet: cli.quiet,
    };
    match cli.command {
        Command::FitHyper { tracking, output } => {
            commands::fit_hyper(&g, &tracking, output.as_deref()).map(|_| ())
        }
        Command::Predict {
            tracking,
            hyper,
            t_now,
            ts,
            horizon,
            output,
        } => commands::predict(
            &g,
            &commands::PredictArgs {
                tracking: &tracking,
                hyper: &hyper,
                t_now,
                ts,
                horizon,
                output: output.as_deref(),
            },
        )
        .map(|_| ()),
        Command::Simulate { scenario } => {
            if let Some(s) = scenario {
                if g.config.is_some() {
                    return Err(CliError::Input(
                        "give the scenario either positionally or with --config".into(),
                    ));
                }
                g.config = Some(s);
            }
            commands::simulate(&g).map(|_| ())
        }
        Command::Report { log, plots, expect } => {
            let plots = plots.as_deref().map(parse_plots).transpose()?;
            commands::report(&g, &log, plots.as_deref(), expect.as_deref()).map(|_| ())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_lists_parse() {
        assert!(parse_plots("").unwrap().is_empty());
        assert_eq!(
            parse_plots("pose, gp_error").unwrap(),
            vec![PlotKind::Pose, PlotKind::GpError]
        );
        assert_eq!(parse_plots("pose,bogus").unwrap_err().exit_code(), 2);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
