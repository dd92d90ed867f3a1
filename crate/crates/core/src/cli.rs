//! Command-line front end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{parse, serialize, ExperimentPlan, Warning};
use crate::metrics::FringeFit;
use crate::runner::{self, Overrides};
use crate::Error;

#[derive(Debug, Parser)]
#[command(name = "pairsim", version, about = "Photon-pair source and coincidence-counting simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Two-photon interference fringe over a θ₂ sweep, with visibility fit.
    Fringe(RunArgs),
    /// CAR and classical-inequality violation over a pump power sweep.
    CarSweep(RunArgs),
    /// Classical-inequality test at the configured operating point.
    Inequality(RunArgs),
    /// Check a configuration and print its canonical form.
    Validate {
        config: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Gates per run; replaces `gates` from the config.
    #[arg(long)]
    pub gates: Option<u64>,
    /// Worker threads; 0 uses all cores. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Format of the tabular output.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Replace pairs by independent Poissonian streams.
    #[arg(long)]
    pub classical_surrogate: bool,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Serialize)]
struct RunReport<'a, T: Serialize> {
    command: &'a str,
    seed: u64,
    gates: u64,
    overrides: Overrides,
    plan: String,
    warnings: &'a [Warning],
    results: T,
}

#[derive(Debug, Serialize)]
struct FitJson {
    #[serde(rename = "A")]
    amplitude: f64,
    #[serde(rename = "B")]
    offset: f64,
    phase_deg: f64,
    visibility: f64,
    visibility_err: f64,
    chi2_per_dof: f64,
}

impl From<&FringeFit> for FitJson {
    fn from(f: &FringeFit) -> Self {
        Self {
            amplitude: f.amplitude,
            offset: f.offset,
            phase_deg: f.phase.to_degrees(),
            visibility: f.visibility,
            visibility_err: f.visibility_err,
            chi2_per_dof: f.chi2_per_dof,
        }
    }
}

#[derive(Debug, Serialize)]
struct FringeRow {
    theta2_deg: f64,
    singles1: u64,
    singles2: u64,
    coincidences: u64,
    accidentals: u64,
}

#[derive(Debug, Serialize)]
struct SweepRow {
    power_uw: f64,
    car: Option<f64>,
    car_err: Option<f64>,
    lhs: f64,
    lhs_sigma: f64,
    n_sigma: f64,
}

/// Runs the command and returns the process exit status.
pub fn run(cli: Cli) -> i32 {
    let started = Instant::now();
    let result = match cli.command {
        Command::Validate { config } => validate(&config),
        Command::Fringe(args) => with_workers(&args, || fringe(&args)),
        Command::CarSweep(args) => with_workers(&args, || car_sweep(&args)),
        Command::Inequality(args) => with_workers(&args, || inequality(&args)),
    };
    match result {
        Ok(()) => {
            eprintln!("wall time: {:.3} s", started.elapsed().as_secs_f64());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn with_workers(args: &RunArgs, f: impl FnOnce() -> Result<(), Error> + Send) -> Result<(), Error> {
    if args.workers == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(args.workers).build() {
        Ok(pool) => pool.install(f),
        Err(e) => {
            eprintln!("warning: could not build a {}-thread pool ({e}); using the global pool", args.workers);
            f()
        }
    }
}

fn read_text(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

/// Reading the config is part of configuration: a missing file exits 2.
fn load(path: &Path) -> Result<(ExperimentPlan, Vec<Warning>), Error> {
    let text = read_text(path).map_err(|e| {
        Error::Config(crate::config::ConfigError {
            code: crate::config::ErrorCode::Syntax,
            location: crate::config::Location { line: 1, column: 1 },
            message: e.to_string(),
        })
    })?;
    let parsed = parse(&text)?;
    parsed.plan.loop_config().validate()?;
    for w in &parsed.warnings {
        eprintln!("{}: {w}", path.display());
    }
    Ok((parsed.plan, parsed.warnings))
}

fn validate(path: &Path) -> Result<(), Error> {
    let (plan, _) = load(path)?;
    print!("{}", serialize(&plan));
    Ok(())
}

fn overrides(args: &RunArgs) -> Overrides {
    Overrides { seed: args.seed, gates: args.gates, classical_surrogate: args.classical_surrogate }
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.display().to_string(), source })?;
    let path = dir.join(name);
    let mut f = fs::File::create(&path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    f.write_all(bytes).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), Error> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_file(dir, name, &bytes)
}

fn write_table<T: Serialize>(args: &RunArgs, stem: &str, rows: &[T]) -> Result<(), Error> {
    match args.format {
        Format::Json => write_json(&args.out, &format!("{stem}.json"), &rows),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))?;
            write_file(&args.out, &format!("{stem}.csv"), &bytes)
        }
    }
}

fn write_report<T: Serialize>(
    args: &RunArgs,
    command: &str,
    plan: &ExperimentPlan,
    warnings: &[Warning],
    results: T,
) -> Result<(), Error> {
    let o = overrides(args);
    let report = RunReport {
        command,
        seed: o.seed(plan),
        gates: o.gates(plan),
        overrides: o,
        plan: serialize(plan),
        warnings,
        results,
    };
    write_json(&args.out, "report.json", &report)
}

fn fringe(args: &RunArgs) -> Result<(), Error> {
    let (plan, warnings) = load(&args.config)?;
    let o = overrides(args);
    let points = runner::fringe_points(&plan, &o)?;
    let angles = plan.sweep.map(|s| s.points()).unwrap_or_default();
    let rows: Vec<FringeRow> = points
        .iter()
        .zip(angles)
        .map(|(p, theta2_deg)| FringeRow {
            theta2_deg,
            singles1: p.counts.singles_1,
            singles2: p.counts.singles_2,
            coincidences: p.counts.coincidences,
            accidentals: p.counts.accidentals_estimate,
        })
        .collect();
    write_table(args, "points", &rows)?;
    // Points are kept even when the fit is ill-posed.
    let fit = crate::metrics::visibility_fit(&points)?;
    write_json(&args.out, "fit.json", &FitJson::from(&fit))?;
    write_report(args, "fringe", &plan, &warnings, runner::FringeRun { points, fit })
}

fn car_sweep(args: &RunArgs) -> Result<(), Error> {
    let (plan, warnings) = load(&args.config)?;
    let points = runner::car_sweep(&plan, &overrides(args))?;
    let rows: Vec<SweepRow> = points
        .iter()
        .map(|p| SweepRow {
            power_uw: p.power_uw,
            car: p.car.map(|c| c.ratio),
            car_err: p.car.map(|c| c.error),
            lhs: p.inequality.lhs,
            lhs_sigma: p.inequality.sigma,
            n_sigma: p.inequality.n_sigma_violation,
        })
        .collect();
    write_table(args, "sweep", &rows)?;
    write_report(args, "car-sweep", &plan, &warnings, points)
}

#[derive(Debug, Serialize)]
struct InequalityJson {
    lhs: f64,
    sigma: f64,
    n_sigma: f64,
    power_uw: f64,
    car: Option<f64>,
    car_err: Option<f64>,
}

fn inequality(args: &RunArgs) -> Result<(), Error> {
    let (plan, warnings) = load(&args.config)?;
    let run = runner::inequality(&plan, &overrides(args))?;
    let summary = InequalityJson {
        lhs: run.result.lhs,
        sigma: run.result.sigma,
        n_sigma: run.result.n_sigma_violation,
        power_uw: run.power_uw,
        car: run.car.map(|c| c.ratio),
        car_err: run.car.map(|c| c.error),
    };
    write_json(&args.out, "inequality.json", &summary)?;
    write_report(args, "inequality", &plan, &warnings, run)
}
