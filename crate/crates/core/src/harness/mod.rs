//! Experiment orchestration behind the `scalesim` command line.
//!
//! Every command first prints its fully resolved configuration, so the log of
//! any run is enough to reproduce it. Exit codes: 0 success, 1 tolerance
//! breach, 2 invalid configuration or input, 3 I/O failure.

pub mod config;
pub mod csv;
pub mod plot;

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::analytic::{run_sweep, AnalyticError, SweepConfig, SweepResult};
use crate::desim::{collect_latencies, DesimError, NoHook, SimHook};
use crate::domain::{Architecture, UserCount};
use crate::recsys::generate_store;
use crate::rng::{substream_seed, RngStream};
use crate::stats::{fit_line, LineFit};
use crate::topology::{
    instantiate, DeploymentPlan, Scenario, ServiceGraph, ServingView, ThreeLayerRuntime,
    TopologyError,
};

pub use config::{parse_config, ConfigError, RunConfig, RunScenario};
pub use csv::{parse_csv, write_csv, LatencyRow, SchemaError, Source};
pub use plot::{render_svg, series_from_rows, PlotSeries};

pub const PLOT_TITLE: &str = "Response time scaling: monolith vs microservices";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Schema { path: PathBuf, source: SchemaError },
    #[error("simulation failed: {0}")]
    Simulation(#[from] TopologyError),
}

impl From<AnalyticError> for HarnessError {
    fn from(e: AnalyticError) -> Self {
        HarnessError::Config(ConfigError::Validation(e.to_string()))
    }
}

impl From<DesimError> for HarnessError {
    fn from(e: DesimError) -> Self {
        HarnessError::Simulation(e.into())
    }
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Schema { .. } | HarnessError::Simulation(_) => {
                2
            }
            HarnessError::Io { .. } => 3,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_owned(),
        source,
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(parse_config(&text)?)
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

fn print_config(cfg: &RunConfig, log: &mut dyn Write) -> io::Result<()> {
    writeln!(log, "# resolved configuration")?;
    log.write_all(cfg.to_config_text().as_bytes())?;
    writeln!(log)
}

fn log_io(e: io::Error) -> HarnessError {
    HarnessError::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    }
}

pub fn sweep_config(cfg: &RunConfig) -> Result<SweepConfig, HarnessError> {
    Ok(SweepConfig::new(
        cfg.user_counts.clone(),
        cfg.trials,
        cfg.effective_params(),
        cfg.seed,
    )?)
}

pub fn sweep_rows(result: &SweepResult) -> Vec<LatencyRow> {
    result
        .samples
        .iter()
        .map(|s| LatencyRow {
            source: Source::Analytic,
            architecture: s.architecture.as_str().to_owned(),
            n: s.n.get(),
            trial: s.trial,
            latency_ms: s.latency(),
        })
        .collect()
}

/// Files written by `sweep` or `simulate`.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub csv: PathBuf,
    pub svg: PathBuf,
    pub rows: usize,
}

fn emit(cfg: &RunConfig, stem: &str, rows: &[LatencyRow]) -> Result<Artifacts, HarnessError> {
    let csv = cfg.out_dir.join(format!("{stem}.csv"));
    let svg = cfg.out_dir.join(format!("{stem}.svg"));
    write_file(&csv, &write_csv(rows))?;
    write_file(&svg, &render_svg(&series_from_rows(rows), PLOT_TITLE))?;
    Ok(Artifacts {
        csv,
        svg,
        rows: rows.len(),
    })
}

fn print_summary(result: &SweepResult, log: &mut dyn Write) -> io::Result<()> {
    writeln!(
        log,
        "{:<13} {:>8} {:>6} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "architecture", "n", "count", "mean", "std(pop)", "min", "p50", "p95", "p99", "max"
    )?;
    for p in &result.points {
        let s = &p.summary;
        writeln!(
            log,
            "{:<13} {:>8} {:>6} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            p.architecture.as_str(),
            p.n.get(),
            s.count,
            s.mean,
            s.std,
            s.min,
            s.p50,
            s.p95,
            s.p99,
            s.max
        )?;
    }
    Ok(())
}

/// Runs the closed-form sweep for both architectures and writes `sweep.csv` / `sweep.svg`.
pub fn cmd_sweep(cfg: &RunConfig, log: &mut dyn Write) -> Result<Artifacts, HarnessError> {
    print_config(cfg, log).map_err(log_io)?;
    let result = run_sweep(&sweep_config(cfg)?);
    let artifacts = emit(cfg, "sweep", &sweep_rows(&result))?;
    print_summary(&result, log).map_err(log_io)?;
    writeln!(
        log,
        "wrote {} rows to {} and {}",
        artifacts.rows,
        artifacts.csv.display(),
        artifacts.svg.display()
    )
    .map_err(log_io)?;
    Ok(artifacts)
}

fn build_plan(
    cfg: &RunConfig,
    scenario: Scenario,
    n: UserCount,
) -> Result<(ServiceGraph, DeploymentPlan), HarnessError> {
    let (graph, mut plan) = scenario.build(n, cfg.shards, &cfg.effective_params())?;
    if cfg.gateway_ms > 0.0 {
        plan = plan.with_gateway_time(&graph, cfg.gateway_ms);
    }
    if cfg.sidecar_ms > 0.0 {
        plan = plan.with_sidecar(&graph, cfg.sidecar_ms);
    }
    Ok((graph, plan))
}

/// One request through a fresh engine: the light-load limit, no queueing.
fn single_request<H: SimHook>(
    graph: &ServiceGraph,
    plan: &DeploymentPlan,
    seed: u64,
    hook: H,
    user: u64,
) -> Result<f64, HarnessError> {
    let mut engine = instantiate(graph, plan, seed, hook)?;
    engine.inject_request(0.0, graph.gateway(), user)?;
    let trace = engine.run_until_drained()?;
    Ok(collect_latencies(&trace)[0])
}

/// Desim latencies for `scenario`: one engine per `(n, trial)`, seeded from the
/// cell's own substream.
pub fn simulate_rows(cfg: &RunConfig, scenario: Scenario) -> Result<Vec<LatencyRow>, HarnessError> {
    let tag = format!("desim/{scenario}");
    let mut rows = Vec::with_capacity(cfg.user_counts.len() * cfg.trials as usize);
    for &n in &cfg.user_counts {
        let (graph, plan) = build_plan(cfg, scenario, n)?;
        let shared = if scenario == Scenario::ThreeLayer {
            let mut rng = RngStream::new(substream_seed(cfg.seed, "store", n.get(), 0));
            let store =
                Arc::new(generate_store(n, cfg.dimension, &mut rng).map_err(TopologyError::from)?);
            let view = Arc::new(ServingView::new(&plan, &store)?);
            Some((store, view))
        } else {
            None
        };
        for trial in 0..cfg.trials {
            let seed = substream_seed(cfg.seed, &tag, n.get(), u64::from(trial));
            let user = u64::from(trial) % n.get();
            let latency = match &shared {
                Some((store, view)) => {
                    let rt = ThreeLayerRuntime::with_view(&plan, store.clone(), view.clone(), seed);
                    single_request(&graph, &plan, seed, rt, user)?
                }
                None => single_request(&graph, &plan, seed, NoHook, user)?,
            };
            rows.push(LatencyRow {
                source: Source::Desim,
                architecture: scenario.as_str().to_owned(),
                n: n.get(),
                trial,
                latency_ms: latency,
            });
        }
    }
    Ok(rows)
}

/// Runs the discrete-event simulation for the configured deployment scenario and
/// writes `simulate_<scenario>.csv` / `.svg`.
pub fn cmd_simulate(cfg: &RunConfig, log: &mut dyn Write) -> Result<Artifacts, HarnessError> {
    print_config(cfg, log).map_err(log_io)?;
    let scenario = cfg.scenario.deployment().ok_or_else(|| {
        ConfigError::Validation(
            "simulate needs a deployment scenario: monolith, microservice or three_layer".into(),
        )
    })?;
    let rows = simulate_rows(cfg, scenario)?;
    let artifacts = emit(cfg, &format!("simulate_{scenario}"), &rows)?;
    writeln!(
        log,
        "wrote {} rows to {} and {}",
        artifacts.rows,
        artifacts.csv.display(),
        artifacts.svg.display()
    )
    .map_err(log_io)?;
    Ok(artifacts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub architecture: Architecture,
    pub n: u64,
    pub analytic_mean: f64,
    pub desim_mean: f64,
    pub abs_delta: f64,
    pub rel_delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareFit {
    pub architecture: Architecture,
    pub source: Source,
    /// `None` when the sweep has a single user count.
    pub fit: Option<LineFit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    pub fits: Vec<CompareFit>,
    pub tolerance: f64,
}

impl CompareReport {
    pub fn max_rel_delta(&self) -> f64 {
        self.rows.iter().map(|r| r.rel_delta).fold(0.0, f64::max)
    }

    pub fn within_tolerance(&self) -> bool {
        self.rows.iter().all(|r| r.rel_delta <= self.tolerance)
    }

    pub fn exit_code(&self) -> i32 {
        if self.within_tolerance() {
            0
        } else {
            1
        }
    }

    pub fn fit(&self, architecture: Architecture, source: Source) -> Option<LineFit> {
        self.fits
            .iter()
            .find(|f| f.architecture == architecture && f.source == source)
            .and_then(|f| f.fit)
    }
}

impl fmt::Display for CompareReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<13} {:>8} {:>14} {:>14} {:>12} {:>10}",
            "architecture", "n", "analytic_mean", "desim_mean", "abs_delta", "rel_delta"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<13} {:>8} {:>14.6} {:>14.6} {:>12.6} {:>10.6}",
                r.architecture.as_str(),
                r.n,
                r.analytic_mean,
                r.desim_mean,
                r.abs_delta,
                r.rel_delta
            )?;
        }
        for fit in &self.fits {
            match fit.fit {
                Some(l) => writeln!(
                    f,
                    "fit {} {}: slope={:.6} intercept={:.6} r2={:.6}",
                    fit.architecture.as_str(),
                    fit.source.as_str(),
                    l.slope,
                    l.intercept,
                    l.r_squared
                )?,
                None => writeln!(
                    f,
                    "fit {} {}: n/a (single user count)",
                    fit.architecture.as_str(),
                    fit.source.as_str()
                )?,
            }
        }
        let verdict = if self.within_tolerance() {
            "PASS"
        } else {
            "FAIL"
        };
        writeln!(
            f,
            "max relative delta {:.6} vs tolerance {:.6}: {verdict}",
            self.max_rel_delta(),
            self.tolerance
        )
    }
}

fn fit_samples(points: &[(f64, f64)]) -> Option<LineFit> {
    fit_line(points).ok()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Compares closed-form and simulated latencies for both architectures.
pub fn compare(cfg: &RunConfig) -> Result<CompareReport, HarnessError> {
    let analytic = run_sweep(&sweep_config(cfg)?);
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for arch in Architecture::ALL {
        let scenario = match arch {
            Architecture::Monolith => Scenario::Monolith,
            Architecture::Microservice => Scenario::Microservice,
        };
        let desim = simulate_rows(cfg, scenario)?;
        let mut analytic_points = Vec::new();
        let mut desim_points = Vec::new();
        for &n in &cfg.user_counts {
            let a: Vec<f64> = analytic.samples_for(arch, n).map(|s| s.latency()).collect();
            let d: Vec<f64> = desim
                .iter()
                .filter(|r| r.n == n.get())
                .map(|r| r.latency_ms)
                .collect();
            analytic_points.extend(a.iter().map(|&y| (n.as_f64(), y)));
            desim_points.extend(d.iter().map(|&y| (n.as_f64(), y)));
            let (am, dm) = (mean(&a), mean(&d));
            let abs_delta = (dm - am).abs();
            let rel_delta = if abs_delta == 0.0 {
                0.0
            } else if am == 0.0 {
                f64::INFINITY
            } else {
                abs_delta / am.abs()
            };
            rows.push(CompareRow {
                architecture: arch,
                n: n.get(),
                analytic_mean: am,
                desim_mean: dm,
                abs_delta,
                rel_delta,
            });
        }
        fits.push(CompareFit {
            architecture: arch,
            source: Source::Analytic,
            fit: fit_samples(&analytic_points),
        });
        fits.push(CompareFit {
            architecture: arch,
            source: Source::Desim,
            fit: fit_samples(&desim_points),
        });
    }
    Ok(CompareReport {
        rows,
        fits,
        tolerance: cfg.tolerance,
    })
}

pub fn cmd_compare(cfg: &RunConfig, log: &mut dyn Write) -> Result<CompareReport, HarnessError> {
    print_config(cfg, log).map_err(log_io)?;
    let report = compare(cfg)?;
    write!(log, "{report}").map_err(log_io)?;
    Ok(report)
}

/// Reads a latency CSV and writes its mean-latency chart.
pub fn render_plot(csv_path: &Path, svg_path: &Path) -> Result<Vec<PlotSeries>, HarnessError> {
    let text = fs::read_to_string(csv_path).map_err(io_err(csv_path))?;
    let rows = parse_csv(&text).map_err(|source| HarnessError::Schema {
        path: csv_path.to_owned(),
        source,
    })?;
    let series = series_from_rows(&rows);
    write_file(svg_path, &render_svg(&series, PLOT_TITLE))?;
    Ok(series)
}
