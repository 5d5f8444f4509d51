use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use elaa_isac::baselines::exhaustive_oracle;
use elaa_isac::harness::{parse_seeds, write_experiment, Experiment, ExperimentSpec, Profile};
use elaa_isac::metrics::derive_qos_targets;
use elaa_isac::solver::run_sca;
use elaa_isac::{Error, Result, Scenario, SystemConfig};

#[derive(Parser)]
#[command(name = "elaa-isac", version, about = "Subarray activation experiments for ELAA-assisted ISAC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment sweep and write CSV tables plus a manifest.
    Run {
        /// convergence | power_vs_S | power_vs_users
        experiment: String,
        /// JSON system configuration; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// `a..b`, `a..=b` or a comma list.
        #[arg(long, default_value = "0..20")]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "desk")]
        profile: String,
        #[arg(long)]
        with_oracle: bool,
        /// Worker threads (all cores by default).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Solve a single instance and print the result as JSON.
    Solve {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Redraw placements from this seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the convergence trace to this CSV file.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        with_oracle: bool,
    },
}

fn load(config: &Option<PathBuf>) -> Result<SystemConfig> {
    match config {
        Some(path) => SystemConfig::from_json_file(path),
        None => Ok(SystemConfig::default()),
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { experiment, config, seeds, out, profile, with_oracle, workers } => {
            let experiment: Experiment = experiment.parse()?;
            let profile: Profile = profile.parse()?;
            let spec = ExperimentSpec::new(experiment, profile, load(&config)?, parse_seeds(&seeds)?, with_oracle)?;
            for path in write_experiment(&spec, &out, workers)? {
                println!("{}", path.display());
            }
        }
        Command::Solve { config, seed, trace, with_oracle } => {
            let mut cfg = load(&config)?;
            if let Some(seed) = seed {
                cfg = cfg.with_random_placement(seed);
            }
            let sc = Scenario::build(&cfg)?;
            let targets = derive_qos_targets(&sc);
            let result = run_sca(&sc, &targets)?;
            if let Some(path) = trace {
                result.write_trace_csv(std::fs::File::create(path)?)?;
            }
            println!("{}", result.to_json());
            if with_oracle {
                println!("{}", serde_json::to_string_pretty(&exhaustive_oracle(&sc, &targets)?)?);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Infeasible(_) => ExitCode::from(2),
                Error::SolverFailure(_) | Error::Assembly { .. } => ExitCode::from(3),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
