//! Trains on the pendulum and evaluates the policy under growing action
//! disturbances, writing metrics, summary and per-scale CDF files.
//!
//!     cargo run --release --example pendulum_robustness -- [steps] [alpha] [out_dir]

use cvar_sdpg::harness::{run_observed, RunConfig};

fn main() -> cvar_sdpg::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(30_000);
    let alpha: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.3);
    let out_dir = args.next().unwrap_or_else(|| "runs/pendulum".into());

    let cfg = RunConfig::parse(&format!(
        "env=pendulum\nalpha={alpha}\nsteps={steps}\neval_period={}\neval_episodes=50\nseeds=1\n\
         noise_scales=0,0.5,1.0,1.5\nn=16\nbatch_size=32\nhidden=64,64\nbeta1=1e-3\nbeta2=1e-3\n\
         log_period=1000\nout_dir={out_dir}\n",
        (steps / 5).max(1)
    ))?;
    let out = run_observed(&cfg, |_, step, report| {
        let means: Vec<String> = report.means().iter().map(|m| format!("{m:8.1}")).collect();
        println!("step {step:6}: {}", means.join(" "));
    })?;

    println!("\nscale    mean     std      min");
    for s in &out.outcomes[0].final_report.scales {
        println!(
            "{:5}  {:7.1}  {:6.1}  {:7.1}",
            s.scale, s.mean, s.std, s.min
        );
    }
    println!("\nwrote {} files under {out_dir}", out.files.len());
    Ok(())
}
