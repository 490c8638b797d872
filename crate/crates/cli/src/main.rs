//! `retrofit`: design, simulate, sweep and verify retrofit controllers on
//! power-grid models described by a TOML experiment file.

mod output;
mod verify;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{info, warn};

use retrofit::retrofit::RetrofitDesign;
use retrofit::sim::{match_input_energy, naive_baseline, rank_sweep, Experiment, NetworkSource, Prepared, RunResult};
use retrofit::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_PROPERTY: u8 = 4;

/// Relative tolerance when matching the retrofit input energy to `input_energy`.
const ENERGY_TOL: f64 = 0.1;

#[derive(Parser)]
#[command(name = "retrofit", version, about = "Retrofit controllers for power-grid swing dynamics")]
struct Cli {
    /// Experiment file (TOML); built-in defaults when absent.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed of the random network (and of the verification instances).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design a retrofit controller and print its certificate.
    Design,
    /// Simulate broadcast-only and retrofit runs and write trajectories.
    Simulate,
    /// Design and simulate over a grid of projection ranks.
    Sweep {
        /// Ranks as a comma list of `k`, `a-b` (inclusive) or `all`.
        #[arg(long, value_name = "LIST", default_value = "all")]
        rank_grid: String,
    },
    /// Check the structural properties on random instances and the
    /// certified bound on the configured experiment.
    Verify {
        #[arg(long, value_name = "N", default_value_t = 20)]
        trials: usize,
    },
}

enum Failure {
    Config(String),
    Numerical(String),
    Property(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Schema { .. }
            | Error::Io { .. }
            | Error::InvalidArgument(_)
            | Error::Dimension { .. }
            | Error::Network(_)
            | Error::OverlappingPorts { .. } => Failure::Config(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RETROFIT_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(EXIT_NUMERICAL)
        }
        Err(Failure::Property(m)) => {
            eprintln!("verification failed: {m}");
            ExitCode::from(EXIT_PROPERTY)
        }
    }
}

fn load_experiment(cli: &Cli) -> Outcome<Experiment> {
    let mut exp = match &cli.config {
        Some(path) => Experiment::read(path)?,
        None => Experiment::default(),
    };
    if let Some(s) = cli.seed {
        match &mut exp.network {
            NetworkSource::Random { seed, .. } => *seed = s,
            NetworkSource::File { .. } => info!("--seed does not affect a network read from file"),
        }
    }
    if cli.out.is_some() {
        exp.output_dir.clone_from(&cli.out);
    }
    Ok(exp)
}

fn execute(cli: &Cli) -> Outcome<()> {
    let exp = load_experiment(cli)?;
    let out = exp.output_dir.clone();
    if let Some(dir) = &out {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Config(format!("{}: {e}", dir.display())))?;
    }
    match &cli.command {
        Command::Design => design_cmd(&exp, out.as_deref()),
        Command::Simulate => simulate_cmd(&exp, out.as_deref()),
        Command::Sweep { rank_grid } => sweep_cmd(&exp, rank_grid, out.as_deref()),
        Command::Verify { trials } => verify_cmd(&exp, cli.seed.unwrap_or(0), *trials),
    }
}

/// The configured design, energy matched when `input_energy` is set.
fn make_design(exp: &Experiment, prep: &Prepared) -> Outcome<(Prepared, RetrofitDesign)> {
    match exp.input_energy {
        None => Ok((prep.clone(), prep.design()?)),
        Some(target) => {
            let m = match_input_energy(prep, target, ENERGY_TOL)?;
            if !m.matched {
                warn!("retrofit input norm {:.4} misses the target {target}", m.input_norm);
            }
            Ok((prep.with_input_weight(m.input_weight), m.design))
        }
    }
}

fn design_cmd(exp: &Experiment, out: Option<&Path>) -> Outcome<()> {
    let prep = exp.prepare()?;
    let (_, d) = make_design(exp, &prep)?;
    println!("{}", output::design_summary(&d));
    let cert = output::certificate_text(&d.certificate);
    print!("{cert}");
    if let Some(dir) = out {
        output::write_text(&dir.join("certificate.toml"), &cert)?;
    }
    Ok(())
}

fn simulate_cmd(exp: &Experiment, out: Option<&Path>) -> Outcome<()> {
    let prep = exp.prepare()?;
    let baseline = prep.baseline()?;
    let (tuned, d) = make_design(exp, &prep)?;
    let retro = tuned.run_design(&d)?;
    let mut runs: Vec<(&str, &RunResult)> = vec![("broadcast", &baseline), ("retrofit", &retro)];
    let naive = match &exp.naive_area {
        Some(area) => Some(naive_baseline(&prep, area, &tuned.options.weights)?.0),
        None => None,
    };
    if let Some(n) = &naive {
        runs.push(("naive", n));
    }
    let summary = output::run_summary(&runs)?;
    print!("{summary}");
    if let Some(dir) = out {
        for (name, r) in &runs {
            output::write_trajectory(&dir.join(format!("{name}.csv")), &prep, r)?;
        }
        output::write_text(&dir.join("summary.csv"), &summary)?;
        output::write_text(&dir.join("certificate.toml"), &output::certificate_text(&d.certificate))?;
    }
    if retro.diverged() {
        return Err(Failure::Numerical("retrofit closed loop diverged".into()));
    }
    Ok(())
}

fn sweep_cmd(exp: &Experiment, grid: &str, out: Option<&Path>) -> Outcome<()> {
    let prep = exp.prepare()?;
    let ranks = output::parse_rank_grid(grid, prep.sys.n()).map_err(Failure::Config)?;
    let rows = rank_sweep(&prep, &ranks);
    let table = output::sweep_table(&rows)?;
    match out {
        Some(dir) => {
            output::write_text(&dir.join("sweep.csv"), &table)?;
            println!("{} ranks written to {}", rows.len(), dir.join("sweep.csv").display());
        }
        None => print!("{table}"),
    }
    Ok(())
}

fn verify_cmd(exp: &Experiment, seed: u64, trials: usize) -> Outcome<()> {
    let mut failed = Vec::new();
    for check in verify::random_instance_checks(seed, trials) {
        println!("{check}");
        if !check.pass {
            failed.push(check.name);
        }
    }
    let check = verify::experiment_bound(exp)?;
    println!("{check}");
    if !check.pass {
        failed.push(check.name);
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Property(failed.join(", ")))
    }
}
