//! Risk-neutral versus risk-averse training on the one-step risky bandit.
//!
//! Larger actions pay more but raise the chance of a catastrophic loss. The
//! mean-optimal action is +1 and the CVaR(0.9)-optimal action is -1.
//!
//!     cargo run --release --example risk_separation -- [steps] [seeds]

use cvar_sdpg::envsim::OneStepRisky;
use cvar_sdpg::harness::{train, RunConfig};

fn main() -> cvar_sdpg::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(2);

    println!(
        "closed form: mean(+1) = {:.2}, mean(-1) = {:.2}",
        OneStepRisky::mean_reward(1.0),
        OneStepRisky::mean_reward(-1.0)
    );
    println!(
        "             CVaR0.9(+1) = {:.2}, CVaR0.9(-1) = {:.2}\n",
        OneStepRisky::reward_cvar(1.0, 0.9),
        OneStepRisky::reward_cvar(-1.0, 0.9)
    );

    for alpha in [0.0, 0.9] {
        let cfg = RunConfig::parse(&format!(
            "env=one_step_risky\nalpha={alpha}\nsteps={steps}\neval_period={steps}\neval_episodes=1000\n\
             n=20\nbatch_size=32\nhidden=32,32\nbeta1=1e-3\nbeta2=1e-3\nlog_period={steps}\n"
        ))?;
        for seed in 0..seeds {
            let out = train(&cfg, seed)?;
            let action = out.agent.policy().act(&[0.0])?[0];
            let noise_free = &out.final_report.scales[0];
            println!(
                "alpha {alpha:.1} seed {seed}: action {action:+.3}  eval mean {:+.3}  worst {:+.3}",
                noise_free.mean, noise_free.min
            );
        }
    }
    Ok(())
}
