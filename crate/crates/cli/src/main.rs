use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use influence_cli::analyze::{finish, screen};
use influence_cli::ingest::ingest;
use influence_cli::output::{write_all, write_geometry};
use influence_cli::simulate::write_simulated;
use influence_cli::verify::{self, VerifyOptions};
use influence_cli::{AnalysisConfig, CliError, Objective, Overrides, Result, Scheme};
use influence_core::models::SimulationConfig;

#[derive(Parser)]
#[command(name = "influence", version, about = "Local influence analysis on perturbation manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit, check the perturbation, and write influence reports.
    Analyze {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        scheme: Option<Scheme>,
        #[arg(long)]
        objective: Option<Objective>,
        #[arg(long, allow_negative_numbers = true)]
        alpha: Option<f64>,
        /// Keep an inappropriate perturbation instead of rescaling it.
        #[arg(long)]
        no_rescale: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare closed forms against Monte Carlo and finite-difference oracles.
    Verify {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        scheme: Option<Scheme>,
        #[arg(long)]
        objective: Option<Objective>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, hide = true)]
        corrupt_gamma: bool,
    },
    /// Write synthetic clustered data with an optional outlying cluster.
    Simulate {
        #[arg(long, default_value_t = 30)]
        clusters: usize,
        #[arg(long, default_value_t = 3)]
        min_m: usize,
        #[arg(long, default_value_t = 12)]
        max_m: usize,
        /// 1-based index of the cluster whose errors are inflated.
        #[arg(long)]
        outlier_cluster: Option<usize>,
        #[arg(long, default_value_t = 5.0)]
        inflate: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<AnalysisConfig> {
    let mut cfg = match path {
        Some(p) => AnalysisConfig::from_file(p)?,
        None => AnalysisConfig::default(),
    };
    cfg.apply(overrides);
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze { data, config, scheme, objective, alpha, no_rescale, seed, out } => {
            let overrides = Overrides { scheme, objective, alpha, no_rescale, seed, out };
            let cfg = load_config(config.as_deref(), &overrides)?;
            let dataset = ingest(&data)?;
            let screened = screen(&cfg, &dataset)?;
            println!("{}", screened.summary);
            println!("scheme {}: appropriate = {}", screened.raw.name(), screened.raw_verdict.is_appropriate);
            if screened.raw_verdict.singular {
                write_geometry(&cfg.out, &screened)?;
            }
            let analysis = finish(&cfg, screened)?;
            if let Some(v) = &analysis.rescaled_verdict {
                println!("rescaled to {}: appropriate = {}", analysis.model.name(), v.is_appropriate);
            }
            for path in write_all(&cfg.out, &analysis)? {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Verify { data, config, scheme, objective, seed, corrupt_gamma } => {
            let overrides = Overrides { scheme, objective, seed, ..Default::default() };
            let cfg = load_config(config.as_deref(), &overrides)?;
            let dataset = ingest(&data)?;
            let report = verify::run(&cfg, &dataset, VerifyOptions { corrupt_gamma })?;
            print!("{report}");
            if report.all_passed() {
                Ok(())
            } else {
                Err(CliError::VerificationFailed)
            }
        }
        Command::Simulate { clusters, min_m, max_m, outlier_cluster, inflate, seed, out } => {
            let cfg = SimulationConfig { clusters, min_m, max_m, outlier_cluster, inflate, seed, ..Default::default() };
            write_simulated(&cfg, &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
