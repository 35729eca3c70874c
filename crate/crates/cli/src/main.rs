//! `icrb-so3`: Monte Carlo experiments for intrinsic Cramér-Rao bounds on
//! SO(3).
//!
//! Exit codes: 0 success, 2 configuration error, 3 failed check, 1 other.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use icrb_core::harness::{self, Mode, Outcome, Scenario};
use icrb_core::montecarlo::TrialError;
use icrb_core::Error;

#[derive(Parser, Debug)]
#[command(name = "icrb-so3", version, about = "Intrinsic Cramér-Rao bounds on SO(3)")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Override the scenario's n_trials.
    #[arg(long, global = true)]
    trials: Option<usize>,

    /// Override the scenario's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Write one row per trial (trial,xi_x,xi_y,xi_z,angle).
    #[arg(long, global = true, value_name = "PATH")]
    csv: Option<PathBuf>,

    /// Include wall-clock time in the report (breaks byte-identical output).
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Wahba experiment from a static_wahba scenario.
    Static { config: PathBuf },
    /// Filter experiment from a dynamic_iekf scenario.
    Dynamic { config: PathBuf },
    /// Print J and J⁻¹ without simulating.
    Info { config: PathBuf },
    /// Run the built-in identity checks.
    Verify,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Check(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Check(_) => 3,
            Failure::Other(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Check(m) | Failure::Other(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidScenario(_) | Error::Unobservable(_) | Error::InvalidInput(_) => {
                Failure::Config(e.to_string())
            }
            Error::IdentityViolation(_) => Failure::Check(e.to_string()),
            _ => Failure::Other(e.to_string()),
        }
    }
}

fn load_scenario(path: &Path, cli: &Cli) -> Result<Scenario, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let mut scenario = Scenario::from_json(&text)?;
    if let Some(n) = cli.trials {
        scenario.n_trials = n;
    }
    if let Some(s) = cli.seed {
        scenario.seed = s;
    }
    scenario.validate()?;
    Ok(scenario)
}

fn write_csv(path: &Path, trials: &[TrialError]) -> Result<(), Failure> {
    let io = |e: csv::Error| Failure::Other(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["trial", "xi_x", "xi_y", "xi_z", "angle"]).map_err(io)?;
    for t in trials {
        let xi = t.xi.map_or([f64::NAN; 3], |v| [v.x, v.y, v.z]);
        w.write_record([
            t.index.to_string(),
            xi[0].to_string(),
            xi[1].to_string(),
            xi[2].to_string(),
            t.angle.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()
        .map_err(|e| Failure::Other(format!("{}: {e}", path.display())))
}

fn experiment(cli: &Cli, config: &Path, mode: Mode) -> Result<(), Failure> {
    let scenario = load_scenario(config, cli)?;
    if scenario.mode != mode {
        return Err(Failure::Config(format!(
            "{}: scenario mode is {:?}, expected {:?}",
            config.display(),
            scenario.mode,
            mode
        )));
    }
    let start = Instant::now();
    let Outcome { mut report, trials } = match mode {
        Mode::StaticWahba => harness::run_static(&scenario)?,
        Mode::DynamicIekf => harness::run_dynamic(&scenario)?,
    };
    if cli.timing {
        report.timing = Some(start.elapsed().as_secs_f64());
    }
    println!("{}", report.to_json());
    if let Some(path) = &cli.csv {
        write_csv(path, &trials)?;
    }
    if !report.valid {
        return Err(Failure::Check(format!(
            "{} of {} trials left the domain of log; covariance estimate is invalid",
            report.rejected_trials, report.trial_count
        )));
    }
    if !report.loewner_ok {
        return Err(Failure::Check(format!(
            "empirical covariance does not dominate the bound (tolerance {:e})",
            report.loewner_tol
        )));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Static { config } => experiment(cli, config, Mode::StaticWahba),
        Command::Dynamic { config } => experiment(cli, config, Mode::DynamicIekf),
        Command::Info { config } => {
            let scenario = load_scenario(config, cli)?;
            let summary = harness::info(&scenario)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).map_err(|e| Failure::Other(e.to_string()))?
            );
            Ok(())
        }
        Command::Verify => {
            let v = harness::verify()?;
            println!(
                "{}",
                serde_json::to_string_pretty(&v).map_err(|e| Failure::Other(e.to_string()))?
            );
            for c in &v.checks {
                eprintln!(
                    "{:<42} {:>12.4e}  {:<10} {}",
                    c.name,
                    c.value,
                    c.threshold,
                    if c.passed { "ok" } else { "FAILED" }
                );
            }
            if v.passed {
                Ok(())
            } else {
                Err(Failure::Check("verification failed".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("icrb-so3: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("icrb-so3: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
