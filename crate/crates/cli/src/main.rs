//! `scalesim`: latency sweeps, discrete-event simulation and plots.

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use scalesim_core::harness::{
    cmd_compare, cmd_simulate, cmd_sweep, load_config, render_plot, ConfigError, HarnessError,
    RunConfig, RunScenario,
};

#[derive(Debug, Parser)]
#[command(
    name = "scalesim",
    version,
    about = "Monolith vs microservice latency experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form latency sweep over user counts for both architectures.
    Sweep(RunArgs),
    /// Discrete-event simulation of one deployment scenario.
    Simulate(RunArgs),
    /// Analytic vs simulated means; exits 1 when a relative delta exceeds the tolerance.
    Compare(RunArgs),
    /// Render a latency CSV as an SVG chart.
    Plot {
        csv: PathBuf,
        /// Output path; defaults to the CSV path with an `.svg` extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tolerance: Option<f64>,
    /// monolith, microservice, three_layer or analytic_sweep
    #[arg(long)]
    scenario: Option<String>,
    /// Force both noise terms to zero.
    #[arg(long)]
    zero_noise: bool,
}

impl RunArgs {
    /// Config file (or defaults), then flag overrides.
    fn resolve(&self, default_scenario: Option<RunScenario>) -> Result<RunConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => {
                let scenario = match (&self.scenario, default_scenario) {
                    (Some(_), _) => RunScenario::AnalyticSweep,
                    (None, Some(s)) => s,
                    (None, None) => {
                        return Err(ConfigError::Validation(
                            "no scenario given; pass --scenario or --config".into(),
                        )
                        .into())
                    }
                };
                RunConfig::with_scenario(scenario)
            }
        };
        if let Some(s) = &self.scenario {
            cfg.scenario = s.parse().map_err(ConfigError::Validation)?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(t) = self.tolerance {
            cfg.tolerance = t;
        }
        if self.zero_noise {
            cfg.zero_noise = true;
        }
        Ok(cfg.validate()?)
    }
}

fn run(cli: Cli, log: &mut dyn Write) -> Result<i32, HarnessError> {
    match cli.command {
        Command::Sweep(args) => {
            cmd_sweep(&args.resolve(Some(RunScenario::AnalyticSweep))?, log)?;
            Ok(0)
        }
        Command::Simulate(args) => {
            cmd_simulate(&args.resolve(None)?, log)?;
            Ok(0)
        }
        Command::Compare(args) => {
            let report = cmd_compare(&args.resolve(Some(RunScenario::AnalyticSweep))?, log)?;
            Ok(report.exit_code())
        }
        Command::Plot { csv, out } => {
            let svg = out.unwrap_or_else(|| csv.with_extension("svg"));
            let series = render_plot(&csv, &svg)?;
            let _ = writeln!(log, "wrote {} series to {}", series.len(), svg.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let code = match run(cli, &mut stdout.lock()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
