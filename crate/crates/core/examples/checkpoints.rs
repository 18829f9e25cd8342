//! Saves a trained agent, reloads the policy and re-evaluates it, and
//! round-trips a replay pool through its binary dump.

use cvar_sdpg::agent::Policy;
use cvar_sdpg::harness::{evaluate, train, EvalSettings, RunConfig};
use cvar_sdpg::replay::{ReplayPool, Transition};
use cvar_sdpg::rng::RngStream;

fn main() -> cvar_sdpg::Result<()> {
    let dir = std::env::temp_dir().join("cvar_sdpg_checkpoint_example");
    let cfg = RunConfig::parse("env=pendulum\nsteps=2000\neval_period=2000\neval_episodes=10\nn=8\nbatch_size=32\nhidden=32,32")?;
    let outcome = train(&cfg, 0)?;
    outcome.agent.save(&dir)?;
    println!(
        "saved actor.ckpt, critic.ckpt, agent.cfg to {}",
        dir.display()
    );

    let policy = Policy::load(dir.join("actor.ckpt"))?;
    let settings = EvalSettings {
        noise_scales: vec![0.0, 1.0],
        episodes: 10,
        seed: 5,
        discount: None,
    };
    let fresh = evaluate(&outcome.agent.policy(), "pendulum", &settings)?;
    let reloaded = evaluate(&policy, "pendulum", &settings)?;
    println!("in-memory means {:?}", fresh.means());
    println!("reloaded  means {:?}", reloaded.means());
    assert_eq!(fresh, reloaded);

    let mut pool = ReplayPool::new(100, 3, 1)?;
    let mut rng = RngStream::from_seed(1);
    for _ in 0..40 {
        pool.push(Transition {
            state: rng.normals(3),
            action: vec![rng.uniform_range(-2.0, 2.0)],
            reward: rng.normal(),
            next_state: rng.normals(3),
            terminal: false,
        })?;
    }
    let mut bytes = Vec::new();
    pool.dump(&mut bytes)
        .map_err(|e| cvar_sdpg::Error::io("<memory>", e))?;
    let restored = ReplayPool::restore(&mut bytes.as_slice())?;
    println!(
        "replay dump: {} bytes, {} transitions restored",
        bytes.len(),
        restored.len()
    );
    Ok(())
}
