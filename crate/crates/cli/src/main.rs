use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bcast_core::payoff::{simulate_revenue, SimulationSetup};
use bcast_core::scenario::{self, ExperimentSpec};
use bcast_core::{optimizer, scheduler, Execution, SchedulerKind};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "bcast",
    version,
    about = "Broadcast/unicast revenue experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Simulation seed, overriding `[simulation] seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Broadcast order: optimal, suboptimal or none.
    #[arg(long, global = true)]
    scheduler: Option<SchedulerKind>,

    /// Largest share of the bandwidth broadcast may take.
    #[arg(long, global = true)]
    beta: Option<f64>,

    /// Output format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Run on the calling thread only.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Jointly optimize bandwidth, price and order for one user count.
    Optimize {
        config: PathBuf,
        /// User count, overriding `[cell] users`.
        #[arg(long)]
        users: Option<u64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Evaluate every sweep point of a config.
    Sweep {
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also write a long-format (one metric per line) CSV here.
        #[arg(long)]
        long: Option<PathBuf>,
    },
    /// Monte Carlo revenue at the closed-form design.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        users: Option<u64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print the broadcast order.
    Schedule {
        config: PathBuf,
        #[arg(long)]
        users: Option<u64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Export the normalized catalog as CSV.
    Catalog {
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the oracle battery on a small instance.
    Validate {
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: serde::Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let mut out = open_output(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

impl Cli {
    fn exec(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::default()
        }
    }

    fn load(&self, path: &Path) -> Result<ExperimentSpec> {
        let mut spec = ExperimentSpec::load(path)?;
        if let Some(seed) = self.seed {
            spec.simulation.seed = seed;
        }
        if let Some(beta) = self.beta {
            spec.cell.bc_cap_fraction = beta;
        }
        if let Some(kind) = self.scheduler {
            spec.sweep.schedulers = vec![kind];
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn run(cli: &Cli) -> Result<bool> {
    let exec = cli.exec();
    match &cli.command {
        Command::Optimize {
            config,
            users,
            output,
        } => {
            let spec = cli.load(config)?;
            let norm = scenario::normalize(&spec)?;
            let catalog = norm.build_catalog(exec)?;
            let cell = norm.cell.with_users(users.unwrap_or(spec.cell.users));
            let result = optimizer::joint_optimize(&catalog, &cell)?;
            match cli.format.unwrap_or(Format::Json) {
                Format::Json => write_json(
                    &serde_json::json!({ "scheme": norm.scheme, "cell": cell, "result": result }),
                    output.as_deref(),
                )?,
                Format::Csv => bail!("optimize writes JSON only"),
            }
        }
        Command::Sweep {
            config,
            output,
            long,
        } => {
            let spec = cli.load(config)?;
            let sweep = scenario::run_sweep(&spec, exec)?;
            match cli.format.unwrap_or(Format::Csv) {
                Format::Csv => {
                    let mut out = open_output(output.as_deref())?;
                    sweep.write_csv(&mut out)?;
                    out.flush()?;
                }
                Format::Json => write_json(&sweep, output.as_deref())?,
            }
            if let Some(path) = long {
                let mut out = open_output(Some(path))?;
                sweep.write_long_csv(&mut out)?;
                out.flush()?;
            }
        }
        Command::Simulate {
            config,
            trials,
            users,
            output,
        } => {
            let spec = cli.load(config)?;
            let norm = scenario::normalize(&spec)?;
            let catalog = norm.build_catalog(exec)?;
            let cell = norm.cell.with_users(users.unwrap_or(spec.cell.users));
            let ranked = scheduler::schedule_for(spec.sweep.schedulers[0], &catalog, &cell)?;
            let s = optimizer::s_star(&catalog, &ranked.schedule);
            let setup = SimulationSetup {
                catalog: &catalog,
                cell: &cell,
                rates: &norm.rates,
                broadcast_price: optimizer::closed_form_pb(&catalog, &cell, s)?,
                broadcast_bandwidth: optimizer::closed_form_wb(&catalog, &cell),
                schedule: &ranked.schedule,
            };
            let trials = trials.unwrap_or(spec.simulation.trials);
            let report = simulate_revenue(setup, trials, spec.simulation.seed, exec)?;
            match cli.format.unwrap_or(Format::Json) {
                Format::Json => write_json(&report, output.as_deref())?,
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(open_output(output.as_deref())?);
                    w.serialize(&report)?;
                    w.flush()?;
                }
            }
        }
        Command::Schedule {
            config,
            users,
            output,
        } => {
            let spec = cli.load(config)?;
            let norm = scenario::normalize(&spec)?;
            let catalog = norm.build_catalog(exec)?;
            let cell = norm.cell.with_users(users.unwrap_or(spec.cell.users));
            let ranked = scheduler::schedule_for(spec.sweep.schedulers[0], &catalog, &cell)?;
            match cli.format.unwrap_or(Format::Csv) {
                Format::Csv => {
                    let mut out = open_output(output.as_deref())?;
                    ranked
                        .schedule
                        .write_csv(&catalog, &ranked.weights, &mut out)?;
                    out.flush()?;
                }
                Format::Json => write_json(&ranked.schedule, output.as_deref())?,
            }
        }
        Command::Catalog { config, output } => {
            let spec = cli.load(config)?;
            let catalog = scenario::normalize(&spec)?.build_catalog(exec)?;
            let mut out = open_output(output.as_deref())?;
            catalog.write_csv(&mut out)?;
            out.flush()?;
        }
        Command::Validate { config, output } => {
            let spec = cli.load(config)?;
            let report = scenario::run_validation(&spec, exec)?;
            match cli.format {
                Some(Format::Json) => write_json(&report, output.as_deref())?,
                Some(Format::Csv) => bail!("validate writes text or JSON"),
                None => {
                    let mut out = open_output(output.as_deref())?;
                    write!(out, "{report}")?;
                    out.flush()?;
                }
            }
            return Ok(report.passed());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
