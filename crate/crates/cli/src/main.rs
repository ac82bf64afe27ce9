use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use gridtopo::grid::{fixtures, load_grid, Grid};
use gridtopo::harness::{emit_results, relative_noise_thresholds, run_experiment, sig6, ExperimentSpec};
use gridtopo::learner::{format_report, learn_topology, LearnerConfig, Mode};
use gridtopo::powerflow::{generate_samples, read_samples, write_samples, InjectionModel, Model};
use gridtopo::topology_error;

#[derive(Parser)]
#[command(name = "gridtopo", version, about = "Learn power-grid topology from nodal voltage samples")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn the edge set from a samples CSV and print the report.
    Learn {
        /// Fixture name or grid file; used to score the estimate.
        #[arg(long)]
        grid: String,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        tau1: f64,
        #[arg(long)]
        tau2: f64,
        #[arg(long)]
        tau3: f64,
        #[arg(long, default_value = "dc")]
        mode: Mode,
        /// Identify zero-injection nodes and their neighbors in one pass.
        #[arg(long)]
        joint: bool,
    },
    /// Simulate voltage samples and write them as CSV.
    Simulate {
        #[arg(long)]
        grid: String,
        #[arg(long)]
        model: Model,
        #[arg(long = "T")]
        t: usize,
        /// Standard deviation of the injection fluctuations.
        #[arg(long)]
        sigma: f64,
        /// Weight of a common factor shared by all injections.
        #[arg(long)]
        rho: Option<f64>,
        /// Measurement noise as a fraction of each node's variance.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment spec and write errors.csv and errors.gplot.
    Experiment {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print guaranteeing thresholds and the signal-to-noise check.
    Thresholds {
        #[arg(long)]
        grid: String,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
}

fn open_grid(name: &str) -> Result<Grid> {
    match fixtures::by_name(name) {
        Some(g) => Ok(g),
        None => load_grid(name).with_context(|| format!("loading grid `{name}`")),
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Learn {
            grid,
            samples,
            tau1,
            tau2,
            tau3,
            mode,
            joint,
        } => {
            let grid = open_grid(&grid)?;
            let samples = read_samples(&samples).with_context(|| format!("reading {}", samples.display()))?;
            let config = LearnerConfig::new(tau1, tau2, tau3)?
                .with_mode(mode)
                .with_joint(joint);
            let outcome = learn_topology(&samples, &config)?;
            print!("{}", format_report(&outcome));
            eprintln!("topology error: {}", sig6(topology_error(&grid, &outcome.estimate)?));
        }
        Command::Simulate {
            grid,
            model,
            t,
            sigma,
            rho,
            noise,
            seed,
            out,
        } => {
            let grid = open_grid(&grid)?;
            let injections = match rho {
                Some(rho) => InjectionModel::common_factor(&grid, sigma, rho)?,
                None => InjectionModel::gaussian(&grid, sigma),
            };
            let samples = generate_samples(&grid, model, &injections, t, noise, seed)?;
            write_samples(&samples, &out).with_context(|| format!("writing {}", out.display()))?;
        }
        Command::Experiment { spec, out } => {
            let spec = ExperimentSpec::from_file(&spec)?;
            let outcome = run_experiment(&spec)?;
            for (r, c) in &outcome.configs {
                println!("noise {r}: tau1 {:e} tau2 {:e} tau3 {:e}", c.tau1, c.tau2, c.tau3);
            }
            if !outcome.pf_failures.is_empty() {
                eprintln!("{} trials dropped after power-flow failures", outcome.pf_failures.len());
            }
            if outcome.learn_failures > 0 {
                eprintln!("{} runs failed to learn and were scored as empty", outcome.learn_failures);
            }
            for path in emit_results(&outcome.curve, &out)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Thresholds { grid, sigma, noise } => {
            if !(sigma > 0.0) {
                bail!("--sigma must be positive");
            }
            if !(noise >= 0.0) {
                bail!("--noise must be non-negative");
            }
            let grid = open_grid(&grid)?;
            let sigma_p = InjectionModel::gaussian(&grid, sigma).active_covariance();
            let report = relative_noise_thresholds(&grid, &sigma_p, noise)?;
            let c = &report.config;
            println!("tau1 {:e}", c.tau1);
            println!("tau2 {:e}", c.tau2);
            println!("tau3 {:e}", c.tau3);
            println!("s_id {:e}", report.snr.s_id);
            println!("snr {:e}", report.snr.snr);
            println!(
                "required snr {:e} (identification {:e}, neighbors {:e}, lines {:e})",
                report.required_snr(),
                report.required[0],
                report.required[1],
                report.required[2]
            );
            println!("snr ok: {}", report.snr_ok());
        }
    }
    Ok(())
}
