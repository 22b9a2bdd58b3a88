use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rdm_core::distributions::{mean, to_text, variance};
use rdm_core::policies::exact_return_distribution;
use rdm_core::{MarkovianPolicy, PolicyHandle};
use rdm_lab::bench::{emit_results, generate_mdp, run_experiment, run_fixture_suite, ExperimentConfig};
use rdm_lab::formats::{load_mdp, load_policy, mdp_to_json, save_mdp, save_policy, PolicyFile};
use rdm_lab::Result;

#[derive(Parser)]
#[command(name = "rdm", version, about = "Return-distribution matching experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output` in the config.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check the built-in fixtures; exits nonzero on any failure.
    Fixtures,
    /// Sample a random MDP and write it as JSON.
    GenInstance {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        states: usize,
        #[arg(long, default_value_t = 2)]
        actions: usize,
        #[arg(long, default_value_t = 5)]
        horizon: usize,
        #[arg(long, default_value_t = 0.03)]
        rho: f64,
        /// Write the MDP here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also sample a policy of this kind and write it here.
        #[arg(long, requires = "policy_kind")]
        policy: Option<PathBuf>,
        #[arg(long, value_enum)]
        policy_kind: Option<PolicyKind>,
    },
    /// Print the exact return distribution of a policy on an MDP.
    EvalPolicy {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        policy: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyKind {
    Markovian,
    Uniform,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, output } => {
            let cfg = ExperimentConfig::load(&config)?;
            let results = run_experiment(&cfg)?;
            println!("{:<10} {:>6} {:>9} {:>9} {:>9}", "algorithm", "N", "mean", "std", "median");
            for row in &results.rows {
                println!(
                    "{:<10} {:>6} {:>9.4} {:>9.4} {:>9.4}",
                    row.algorithm.tag(),
                    row.n,
                    row.mean,
                    row.std,
                    row.median()
                );
            }
            for f in &results.failures {
                eprintln!("failed: instance {} N {} seed {} {}: {}", f.instance, f.n, f.seed, f.algorithm, f.message);
            }
            if let Some(dir) = output.or(cfg.output) {
                for path in emit_results(&results, &dir)? {
                    eprintln!("wrote {}", path.display());
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Fixtures => {
            let report = run_fixture_suite();
            print!("{report}");
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::GenInstance { seed, states, actions, horizon, rho, output, policy, policy_kind } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mdp = generate_mdp(states, actions, horizon, rho, &mut rng)?;
            match output {
                Some(path) => save_mdp(&mdp, &path)?,
                None => println!("{}", mdp_to_json(&mdp)),
            }
            if let (Some(path), Some(kind)) = (policy, policy_kind) {
                let pol = match kind {
                    PolicyKind::Markovian => MarkovianPolicy::random(states, actions, horizon, &mut rng),
                    PolicyKind::Uniform => MarkovianPolicy::uniform(states, actions, horizon),
                };
                save_policy(&PolicyFile::Markovian(pol), &path)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::EvalPolicy { mdp, policy } => {
            let mdp = load_mdp(&mdp)?;
            let pol: PolicyHandle = load_policy(&policy)?.into();
            let dist = exact_return_distribution(&mdp, &pol, mdp.reward())?;
            print!("{}", to_text(&dist));
            eprintln!("mean {} variance {}", mean(&dist), variance(&dist));
            Ok(ExitCode::SUCCESS)
        }
    }
}
