//! Command-line front end: scenario runs, controller comparisons,
//! demand-response experiments, property verification, and config export.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error,
//! 3 property violation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use refsim::error::Error;
use refsim::opt;
use refsim::params::{Config, ControllerKind};
use refsim::scenario::{
    self, synthetic_spiky_prices, DrPolicy, PriceSeries, RunResult, ScenarioConfig,
};
use refsim::verify::{self, Suite};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "refsim", version, about = "Supermarket refrigeration control simulator")]
struct Cli {
    /// Configuration file (TOML). Defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed loop and write trajectory CSV + metrics JSON.
    Simulate(SimulateArgs),
    /// Run pi, linear, and greedy on the same plant and summarize savings.
    Compare(CompareArgs),
    /// Demand-response comparison under a real-time price series.
    Dr(DrArgs),
    /// Run the property suites; nonzero exit on any violation.
    Verify(VerifyArgs),
    /// Write the default configuration file.
    ExportDefaults(ExportArgs),
}

#[derive(Args)]
struct CommonRunArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's perturbation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's run duration.
    #[arg(long, value_name = "SECONDS")]
    duration_s: Option<f64>,
    /// Overwrite existing output files instead of refusing.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonRunArgs,
    /// Controller: pi | linear | greedy | oracle. Defaults to the config's.
    #[arg(long)]
    controller: Option<ControllerKind>,
    /// Price CSV (`time_s,price_usd_per_kwh`) for cost accounting.
    #[arg(long)]
    prices: Option<PathBuf>,
    /// Write every integrator step to the trajectory CSV instead of one row
    /// per control period.
    #[arg(long)]
    every_step: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: CommonRunArgs,
}

#[derive(Args)]
struct DrArgs {
    #[command(flatten)]
    common: CommonRunArgs,
    /// Price CSV; a synthetic spiky series is used when omitted.
    #[arg(long)]
    prices: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Suite: theorems | gradient | oracle | all.
    #[arg(long, default_value = "all")]
    suite: Suite,
    /// Seed for instance generation.
    #[arg(long, default_value_t = 2013)]
    seed: u64,
    /// Optional directory for the JSON reports.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ExportArgs {
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("REFSIM_LOG", "warn"))
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::PriceSeries(_) | Error::PriceRow { .. } => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> refsim::Result<ExitCode> {
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Simulate(args) => simulate(&config, args),
        Command::Compare(args) => compare(&config, args),
        Command::Dr(args) => dr(&config, args),
        Command::Verify(args) => verify_cmd(args),
        Command::ExportDefaults(args) => export_defaults(args),
    }
}

fn load_prices(path: &Path) -> refsim::Result<PriceSeries> {
    let file = std::fs::File::open(path).map_err(|e| Error::PriceSeries(format!(
        "cannot read price file {}: {e}",
        path.display()
    )))?;
    PriceSeries::read_csv(std::io::BufReader::new(file))
}

/// Refuses to overwrite unless `force` is set.
fn guard_path(path: &Path, force: bool) -> refsim::Result<()> {
    if !force && path.exists() {
        return Err(Error::Config {
            violations: vec![format!(
                "refusing to overwrite {} (pass --force to allow)",
                path.display()
            )],
        });
    }
    Ok(())
}

fn scenario_from(config: &Config, common: &CommonRunArgs) -> ScenarioConfig {
    let mut sc = ScenarioConfig::from_config(config);
    if let Some(seed) = common.seed {
        sc.seed = seed;
    }
    if let Some(d) = common.duration_s {
        sc.duration_s = d;
    }
    sc
}

#[derive(Serialize)]
struct MetricsDocument<'a> {
    controller: String,
    seed: u64,
    duration_s: f64,
    metrics: &'a scenario::Metrics,
    config: &'a Config,
}

fn write_run(
    run: &RunResult,
    dir: &Path,
    config: &Config,
    sc: &ScenarioConfig,
    every_step: bool,
    force: bool,
) -> refsim::Result<()> {
    std::fs::create_dir_all(dir)?;
    let traj_path = dir.join("trajectory.csv");
    let metrics_path = dir.join("metrics.json");
    let log_path = dir.join("solver_log.csv");
    guard_path(&traj_path, force)?;
    guard_path(&metrics_path, force)?;
    if !run.solver_log.is_empty() {
        guard_path(&log_path, force)?;
    }
    let file = std::fs::File::create(&traj_path)?;
    run.trajectory
        .write_csv(std::io::BufWriter::new(file), config.plant.control_period_s, every_step)?;
    let doc = MetricsDocument {
        controller: run.controller.to_string(),
        seed: sc.seed,
        duration_s: sc.duration_s,
        metrics: &run.metrics,
        config,
    };
    std::fs::write(&metrics_path, serde_json::to_string_pretty(&doc).expect("serializable"))?;
    if !run.solver_log.is_empty() {
        let file = std::fs::File::create(&log_path)?;
        opt::write_solver_log(&run.solver_log, std::io::BufWriter::new(file))?;
    }
    Ok(())
}

fn simulate(config: &Config, args: SimulateArgs) -> refsim::Result<ExitCode> {
    let (params, topology) = config.build()?;
    let mut sc = scenario_from(config, &args.common);
    if let Some(kind) = args.controller {
        sc.controller = kind;
    }
    if let Some(path) = &args.prices {
        sc.prices = Some(load_prices(path)?);
    }
    let run = scenario::run_closed_loop(&params, &topology, &sc)?;
    write_run(&run, &args.common.out, config, &sc, args.every_step, args.common.force)?;
    println!(
        "{}: avg power {:.3} kW, {} switchings, violation {:.3} C*s, max food excursion {:.3} C",
        run.controller,
        run.metrics.average_power_kw,
        run.metrics.switching_count,
        run.metrics.violation_integral_c_s,
        run.metrics.max_food_excursion_c
    );
    Ok(ExitCode::SUCCESS)
}

fn compare(config: &Config, args: CompareArgs) -> refsim::Result<ExitCode> {
    let (params, topology) = config.build()?;
    let sc = scenario_from(config, &args.common);
    let (cmp, runs) = scenario::compare(&params, &topology, &sc)?;
    std::fs::create_dir_all(&args.common.out)?;
    for run in &runs {
        let dir = args.common.out.join(run.controller.to_string());
        write_run(run, &dir, config, &sc, false, args.common.force)?;
    }
    let path = args.common.out.join("comparison.json");
    guard_path(&path, args.common.force)?;
    std::fs::write(&path, serde_json::to_string_pretty(&cmp).expect("serializable"))?;
    println!(
        "pi {:.3} kW | linear {:.3} kW (saving {:.1}%, switching -{:.1}%) | greedy {:.3} kW (saving {:.1}%, switching -{:.1}%)",
        cmp.pi.average_power_kw,
        cmp.linear.average_power_kw,
        cmp.linear_energy_saving_pct,
        cmp.linear_switching_reduction_pct,
        cmp.greedy.average_power_kw,
        cmp.greedy_energy_saving_pct,
        cmp.greedy_switching_reduction_pct,
    );
    Ok(ExitCode::SUCCESS)
}

fn dr(config: &Config, args: DrArgs) -> refsim::Result<ExitCode> {
    let (params, topology) = config.build()?;
    let sc = scenario_from(config, &args.common);
    let prices = match &args.prices {
        Some(path) => load_prices(path)?,
        None => synthetic_spiky_prices(),
    };
    let policy = DrPolicy {
        price_threshold_usd_per_kwh: config.demand_response.price_threshold_usd_per_kwh,
        valve_cap_fraction: config.demand_response.valve_cap_fraction,
    };
    let (cmp, runs) = scenario::dr_compare(&params, &topology, &sc, &prices, policy)?;
    std::fs::create_dir_all(&args.common.out)?;
    for run in &runs {
        let dir = args.common.out.join(run.controller.to_string());
        write_run(run, &dir, config, &sc, false, args.common.force)?;
    }
    let prices_path = args.common.out.join("prices.csv");
    guard_path(&prices_path, args.common.force)?;
    let file = std::fs::File::create(&prices_path)?;
    prices.write_csv(std::io::BufWriter::new(file))?;
    let path = args.common.out.join("dr_comparison.json");
    guard_path(&path, args.common.force)?;
    std::fs::write(&path, serde_json::to_string_pretty(&cmp).expect("serializable"))?;
    println!(
        "cost: pi ${:.3} | linear ${:.3} (saving {:.1}%) | greedy ${:.3} (saving {:.1}%)",
        cmp.pi_cost_usd,
        cmp.linear_cost_usd,
        cmp.linear_cost_saving_pct,
        cmp.greedy_cost_usd,
        cmp.greedy_cost_saving_pct,
    );
    Ok(ExitCode::SUCCESS)
}

fn verify_cmd(args: VerifyArgs) -> refsim::Result<ExitCode> {
    let reports = verify::run_suite(args.suite, args.seed)?;
    let mut all_pass = true;
    for report in &reports {
        println!("{}", report.summary());
        all_pass &= report.pass();
    }
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("property_reports.json");
        guard_path(&path, args.force)?;
        std::fs::write(&path, serde_json::to_string_pretty(&reports).expect("serializable"))?;
    }
    if all_pass {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(3))
    }
}

fn export_defaults(args: ExportArgs) -> refsim::Result<ExitCode> {
    match &args.out {
        Some(path) => {
            guard_path(path, args.force)?;
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            std::fs::write(path, refsim::params::DEFAULT_CONFIG_TOML)?;
        }
        None => print!("{}", refsim::params::DEFAULT_CONFIG_TOML),
    }
    Ok(ExitCode::SUCCESS)
}
