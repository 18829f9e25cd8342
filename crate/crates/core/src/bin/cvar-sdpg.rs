use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cvar_sdpg::agent::Policy;
use cvar_sdpg::harness::{self, cdf_csv, scale_label, summary_csv, EvalSettings};
use cvar_sdpg::{selftest, Error, Result};

#[derive(Parser)]
#[command(
    name = "cvar-sdpg",
    version,
    about = "Risk-averse sample-based distributional policy gradients"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured seed and write reports plus checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Train only this seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a saved policy under action disturbances.
    Eval {
        /// `actor.ckpt` file or a `seed_<s>` checkpoint directory.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        env: String,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.5, 1.0, 1.5])]
        noise_scales: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write summary.csv and cdf_<scale>.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in oracle checks.
    Selftest,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Train { config, seed, out } => {
            let mut cfg = harness::read_config(&config)?;
            if let Some(seed) = seed {
                cfg.seeds = vec![seed];
            }
            if let Some(out) = out {
                cfg.out_dir = out;
            }
            let output = harness::run_observed(&cfg, |seed, step, report| {
                let means: Vec<String> = report.means().iter().map(|m| format!("{m:.2}")).collect();
                eprintln!("seed {seed} step {step}: eval means [{}]", means.join(", "));
            })?;
            for file in &output.files {
                println!("{}", file.display());
            }
            Ok(true)
        }
        Command::Eval {
            checkpoint,
            env,
            noise_scales,
            episodes,
            seed,
            out,
        } => {
            let policy = Policy::load(actor_path(&checkpoint))?;
            let settings = EvalSettings {
                noise_scales,
                episodes,
                seed,
                discount: None,
            };
            let report = harness::evaluate(&policy, &env, &settings)?;
            let summary = summary_csv(&[(seed, report.clone())]);
            print!("{summary}");
            if let Some(dir) = out {
                fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                write(&dir.join("summary.csv"), &summary)?;
                for scale in &report.scales {
                    let path = dir.join(format!("cdf_{}.csv", scale_label(scale.scale)));
                    write(&path, &cdf_csv(&scale.cdf))?;
                }
            }
            Ok(true)
        }
        Command::Selftest => {
            let checks = selftest::run_all()?;
            for c in &checks {
                println!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            Ok(checks.iter().all(|c| c.passed))
        }
    }
}

fn actor_path(checkpoint: &Path) -> PathBuf {
    if checkpoint.is_dir() {
        checkpoint.join("actor.ckpt")
    } else {
        checkpoint.to_path_buf()
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
