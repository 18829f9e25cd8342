use std::fs;
use std::path::PathBuf;

use super::config::RunConfig;
use super::evaluate::{evaluate, EvalReport, EvalSettings};
use super::report::{write_reports, MetricRow};
use crate::agent::{Agent, LearnerStreams};
use crate::envsim::make_env;
use crate::error::{Error, Result};
use crate::replay::{ReplayPool, Transition};
use crate::rng::SeedTree;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub seed: u64,
    pub agent: Agent,
    pub metrics: Vec<MetricRow>,
    /// Evaluation of the final policy at every configured noise scale.
    pub final_report: EvalReport,
    pub learner_updates: u64,
    pub clipped_actions: u64,
}

fn eval_settings(config: &RunConfig, seeds: &SeedTree) -> EvalSettings {
    EvalSettings {
        noise_scales: config.noise_scales.clone(),
        episodes: config.eval_episodes,
        seed: seeds.derive_seed("eval"),
        discount: config.discounted_returns.then_some(config.agent.gamma),
    }
}

pub fn train(config: &RunConfig, seed: u64) -> Result<TrainOutcome> {
    train_observed(config, seed, |_, _| {})
}

/// Interleaved collection and learning: every environment step pushes one
/// exploratory transition, then (once the pool holds a batch) runs one
/// critic update, one actor update and one target sync. `on_eval` sees each
/// periodic evaluation.
///
/// All randomness comes from named substreams of `seed`: `explore`, `env`,
/// `replay`, `critic_noise`, `actor_noise`, `init_actor`, `init_critic`,
/// and `eval`.
pub fn train_observed(
    config: &RunConfig,
    seed: u64,
    mut on_eval: impl FnMut(u64, &EvalReport),
) -> Result<TrainOutcome> {
    config.validate()?;
    let seeds = SeedTree::new(seed);
    let mut env = make_env(&config.env)?;
    let spec = env.spec().clone();
    let mut agent = Agent::new(config.agent.clone(), &spec, &seeds)?;
    let mut pool = ReplayPool::new(config.replay_capacity, spec.state_dim, spec.action_dim)?;
    let mut explore = seeds.stream("explore");
    let mut env_rng = seeds.stream("env");
    let mut learner = LearnerStreams::new(&seeds);
    let settings = eval_settings(config, &seeds);

    let mut metrics = Vec::new();
    let mut state = env.reset(&mut env_rng);
    let mut episode_step = 0;
    for step in 1..=config.total_env_steps {
        let action = agent.select_action(&state, config.agent.exploration, &mut explore)?;
        let result = env.step(&state, &action, &mut env_rng)?;
        agent.observe_state(&state);
        let next_state = result.next_state.clone();
        pool.push(Transition {
            state: std::mem::take(&mut state),
            action,
            reward: result.reward,
            next_state: result.next_state,
            terminal: result.terminal,
        })?;
        episode_step += 1;
        state = if result.terminal || episode_step >= spec.max_steps {
            episode_step = 0;
            env.reset(&mut env_rng)
        } else {
            next_state
        };

        let mut stats = None;
        if pool.len() >= config.agent.batch_size {
            match agent.learn(&pool, &mut learner) {
                Ok(s) => stats = Some(s),
                Err(Error::Divergence(msg)) => {
                    return Err(diverged(config, seed, step, &agent, msg))
                }
                Err(e) => return Err(e),
            }
        }

        let eval_means = if step % config.eval_period == 0 {
            let report = evaluate(&agent.policy(), &config.env, &settings)?;
            on_eval(step, &report);
            Some(report.means())
        } else {
            None
        };
        if step % config.log_period == 0 || eval_means.is_some() {
            metrics.push(MetricRow {
                seed,
                step,
                critic_loss: stats.map(|s| s.critic_loss),
                actor_cvar: stats.map(|s| s.actor_cvar),
                eval_means,
            });
        }
    }

    let final_report = evaluate(&agent.policy(), &config.env, &settings)?;
    Ok(TrainOutcome {
        seed,
        learner_updates: agent.learner_steps(),
        clipped_actions: env.clipped_actions(),
        agent,
        metrics,
        final_report,
    })
}

fn diverged(config: &RunConfig, seed: u64, step: u64, agent: &Agent, msg: String) -> Error {
    let dir = config.out_dir.join(format!("seed_{seed}")).join("diverged");
    let saved = match agent.save(&dir) {
        Ok(()) => format!("checkpoint in {}", dir.display()),
        Err(e) => format!("checkpoint failed: {e}"),
    };
    Error::Divergence(format!(
        "seed {seed}, env step {step}, learner step {}: {msg}; {saved}",
        agent.learner_steps()
    ))
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub outcomes: Vec<TrainOutcome>,
    pub files: Vec<PathBuf>,
}

/// Trains every configured seed, then writes the CSV reports, one checkpoint
/// directory per seed, and a `config.txt` echo into `config.out_dir`.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    run_observed(config, |_, _, _| {})
}

pub fn run_observed(
    config: &RunConfig,
    mut on_eval: impl FnMut(u64, u64, &EvalReport),
) -> Result<RunOutput> {
    let outcomes = config
        .seeds
        .iter()
        .map(|&seed| train_observed(config, seed, |step, r| on_eval(seed, step, r)))
        .collect::<Result<Vec<_>>>()?;
    let dir = &config.out_dir;
    let reports: Vec<(u64, EvalReport)> = outcomes
        .iter()
        .map(|o| (o.seed, o.final_report.clone()))
        .collect();
    let metrics: Vec<MetricRow> = outcomes
        .iter()
        .flat_map(|o| o.metrics.iter().cloned())
        .collect();
    let mut files = write_reports(dir, &reports, &metrics, &config.noise_scales)?;
    for o in &outcomes {
        let ckpt = dir.join(format!("seed_{}", o.seed));
        o.agent.save(&ckpt)?;
        files.push(ckpt);
    }
    let echo = dir.join("config.txt");
    fs::write(&echo, config.to_text()).map_err(|e| Error::io(&echo, e))?;
    files.push(echo);
    Ok(RunOutput { outcomes, files })
}
