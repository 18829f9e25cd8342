//! Quick oracle checks behind the `selftest` subcommand.
//!
//! Each check compares an implementation path with an independent route:
//! central finite differences for every analytic gradient, brute-force
//! enumeration for the tail estimators, and direct counting for the CDF.

use ndarray::Array2;

use crate::agent::{Agent, AgentConfig, BatchNoise};
use crate::envsim::EnvSpec;
use crate::error::Result;
use crate::gradnet::{mlp_init, Activation, NetworkParams};
use crate::harness::empirical_cdf;
use crate::replay::Transition;
use crate::retdist::{cvar_estimate, cvar_subgradient, quantile_grid, ReturnSamples};
use crate::rng::{RngStream, SeedTree};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-4;

/// `max |a - b| / max(max |a|, max |b|, 1e-7)`. The floor keeps vanishing
/// gradients from turning finite-difference roundoff into a large ratio.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(1e-7f64, |m, v| m.max(v.abs()));
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / scale
}

/// Central differences of `f` over every flattened parameter of `params`.
pub fn finite_difference(
    params: &NetworkParams,
    mut f: impl FnMut(&NetworkParams) -> f64,
) -> Vec<f64> {
    let mut probe = params.clone();
    (0..params.num_params())
        .map(|i| {
            let orig = *probe.param_mut(i);
            *probe.param_mut(i) = orig + FD_STEP;
            let up = f(&probe);
            *probe.param_mut(i) = orig - FD_STEP;
            let down = f(&probe);
            *probe.param_mut(i) = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

fn random_batch(rng: &mut RngStream, m: usize, sd: usize, ad: usize) -> Vec<Transition> {
    (0..m)
        .map(|i| Transition {
            state: rng.normals(sd),
            action: (0..ad).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
            reward: rng.normal(),
            next_state: rng.normals(sd),
            terminal: i % 3 == 2,
        })
        .collect()
}

fn network_gradients(trials: u64) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for seed in 0..trials {
        let mut rng = RngStream::from_seed(seed);
        let acts = [Activation::Relu, Activation::Tanh, Activation::Linear];
        let net = mlp_init(&[3, 4, 4, 2], &acts, seed)?;
        let x = Array2::from_shape_simple_fn((5, 3), || rng.normal());
        let upstream = Array2::from_shape_simple_fn((5, 2), || rng.normal());
        let (_, cache) = net.forward(x.view())?;
        let grads = net.backward(&cache, &upstream)?;
        let objective = |p: &NetworkParams, x: &Array2<f64>| -> f64 {
            (p.predict(x.view()).expect("forward") * &upstream).sum()
        };
        let numeric = finite_difference(&net, |p| objective(p, &x));
        worst = worst.max(relative_error(&grads.params.flatten(), &numeric));
        let mut numeric_x = Vec::new();
        let mut probe = x.clone();
        for idx in 0..x.len() {
            let (r, c) = (idx / 3, idx % 3);
            let orig = probe[[r, c]];
            probe[[r, c]] = orig + FD_STEP;
            let up = objective(&net, &probe);
            probe[[r, c]] = orig - FD_STEP;
            let down = objective(&net, &probe);
            probe[[r, c]] = orig;
            numeric_x.push((up - down) / (2.0 * FD_STEP));
        }
        worst = worst.max(relative_error(
            grads.input.as_slice().expect("contiguous"),
            &numeric_x,
        ));
    }
    Ok(Check {
        name: "network gradients vs finite differences",
        passed: worst <= FD_TOL,
        detail: format!("{trials} nets, worst relative error {worst:.2e}"),
    })
}

fn jitter(p: &mut NetworkParams, rng: &mut RngStream) {
    for i in 0..p.num_params() {
        *p.param_mut(i) += 0.3 * rng.normal();
    }
}

fn tiny_agent(seed: u64, alpha: f64, atoms: usize) -> Result<(Agent, Vec<Transition>, BatchNoise)> {
    let spec = EnvSpec {
        state_dim: 2,
        action_dim: 2,
        a_max: vec![1.5, 0.5],
        max_steps: 1,
    };
    let config = AgentConfig {
        alpha,
        gamma: 0.9,
        atoms,
        batch_size: 2,
        hidden: vec![4, 4],
        ..AgentConfig::default()
    };
    let mut agent = Agent::new(config, &spec, &SeedTree::new(seed))?;
    // Move the online networks away from the targets and from zero biases.
    let mut rng = RngStream::from_seed(seed ^ 0x5eed);
    jitter(agent.actor_params_mut(), &mut rng);
    jitter(agent.critic_params_mut(), &mut rng);
    let batch = random_batch(&mut rng, 2, 2, 2);
    let noise = BatchNoise::draw(2, atoms, &mut rng);
    Ok((agent, batch, noise))
}

fn agent_gradients(trials: u64) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for seed in 0..trials {
        let alpha = if seed % 2 == 0 { 0.0 } else { 0.5 };
        let (agent, batch, noise) = tiny_agent(seed, alpha, 3)?;
        let refs: Vec<&Transition> = batch.iter().collect();

        let (_, critic_grads) = agent.critic_gradient(&refs, &noise)?;
        let numeric = finite_difference(&agent.critic().params, |p| {
            let mut probe = agent.clone();
            *probe.critic_params_mut() = p.clone();
            probe.critic_gradient(&refs, &noise).expect("critic loss").0
        });
        worst = worst.max(relative_error(&critic_grads.flatten(), &numeric));

        let (_, actor_grads) = agent.actor_gradient(&refs, &noise)?;
        let numeric = finite_difference(&agent.actor().params, |p| {
            let mut probe = agent.clone();
            *probe.actor_params_mut() = p.clone();
            probe
                .actor_gradient(&refs, &noise)
                .expect("actor objective")
                .0
        });
        worst = worst.max(relative_error(&actor_grads.flatten(), &numeric));
    }
    Ok(Check {
        name: "critic and actor gradients vs finite differences",
        passed: worst <= FD_TOL,
        detail: format!("{trials} agents, worst relative error {worst:.2e}"),
    })
}

fn cvar_brute_force(trials: u64) -> Result<Check> {
    let alphas = [0.0, 0.1, 0.25, 0.5, 0.9];
    let mut rng = RngStream::from_seed(77);
    let mut failures = 0;
    let mut checked = 0;
    for _ in 0..trials {
        let n = 1 + rng.index(64);
        let alpha = alphas[rng.index(alphas.len())];
        let k = (n as f64 * (1.0 - alpha) + 1e-9).floor() as usize;
        if k == 0 {
            continue;
        }
        checked += 1;
        let atoms: Vec<f64> = (0..n).map(|_| (rng.normal() * 4.0).round() / 2.0).collect();
        let mut sorted = atoms.clone();
        sorted.sort_by(f64::total_cmp);
        let oracle = sorted[..k].iter().sum::<f64>() / k as f64;
        let samples = ReturnSamples::new(atoms.clone())?;
        let stats = cvar_estimate(&samples, alpha)?;
        let weights = cvar_subgradient(&samples, alpha)?;
        let weighted: f64 = weights.iter().zip(&atoms).map(|(w, z)| w * z).sum();
        if stats.cvar != oracle
            || stats.var != sorted[k - 1]
            || weights.iter().filter(|w| **w > 0.0).count() != k
            || (weighted - oracle).abs() > 1e-12 * oracle.abs().max(1.0)
        {
            failures += 1;
        }
    }
    Ok(Check {
        name: "CVaR estimator vs brute-force tail average",
        passed: failures == 0,
        detail: format!("{checked} sample sets, {failures} mismatches"),
    })
}

fn alpha_zero_reduction(trials: u64) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for seed in 0..trials {
        let (agent, batch, noise) = tiny_agent(100 + seed, 0.0, 3)?;
        let refs: Vec<&Transition> = batch.iter().collect();
        let (_, grads) = agent.actor_gradient(&refs, &noise)?;
        let mean_grads = mean_atom_actor_gradient(&agent, &refs, &noise)?;
        worst = worst.max(relative_error(&grads.flatten(), &mean_grads));
    }
    Ok(Check {
        name: "alpha = 0 actor gradient equals mean-atom gradient",
        passed: worst <= 1e-12,
        detail: format!("{trials} configurations, worst relative error {worst:.2e}"),
    })
}

/// Risk-neutral route: uniform atom weights chained by hand through the public network API.
fn mean_atom_actor_gradient(
    agent: &Agent,
    batch: &[&Transition],
    noise: &BatchNoise,
) -> Result<Vec<f64>> {
    let n = agent.config().atoms;
    let (sd, ad) = (agent.actor().state_dim(), agent.actor().action_dim());
    let mut grad_total = vec![0.0; agent.actor().params.num_params()];
    for (i, t) in batch.iter().enumerate() {
        let x = Array2::from_shape_vec((1, sd), t.state.clone()).expect("row");
        let (squashed, actor_cache) = agent.actor().params.forward(x.view())?;
        let mut rows = Array2::zeros((n, sd + ad + 1));
        for j in 0..n {
            for c in 0..sd {
                rows[[j, c]] = t.state[c];
            }
            for c in 0..ad {
                rows[[j, sd + c]] = squashed[[0, c]] * agent.actor().a_max[c];
            }
            rows[[j, sd + ad]] = noise.online[i * n + j];
        }
        let (_, critic_cache) = agent.critic().params.forward(rows.view())?;
        let upstream = Array2::from_elem((n, 1), 1.0 / (n * batch.len()) as f64);
        let input_grads = agent
            .critic()
            .params
            .backward(&critic_cache, &upstream)?
            .input;
        let mut da = Array2::zeros((1, ad));
        for c in 0..ad {
            let col_sum: f64 = (0..n).map(|j| input_grads[[j, sd + c]]).sum();
            da[[0, c]] = col_sum * agent.actor().a_max[c];
        }
        let g = agent
            .actor()
            .params
            .backward(&actor_cache, &da)?
            .params
            .flatten();
        for (acc, v) in grad_total.iter_mut().zip(g) {
            *acc += v;
        }
    }
    Ok(grad_total)
}

fn cdf_and_grid() -> Result<Check> {
    let cdf = empirical_cdf(&[1.0, 2.0, 2.0, 3.0])?;
    let f2 = cdf.iter().find(|(v, _)| *v == 2.0).map(|p| p.1);
    let grid = quantile_grid(51)?;
    let grid_ok = grid
        .levels()
        .iter()
        .enumerate()
        .all(|(i, t)| (t - (2 * i + 1) as f64 / 102.0).abs() < 1e-15);
    Ok(Check {
        name: "empirical CDF count and quantile grid",
        passed: f2 == Some(0.75) && grid_ok && cdf.last().map(|p| p.1) == Some(1.0),
        detail: format!(
            "F(2) = {f2:?}, grid formula {}",
            if grid_ok { "ok" } else { "mismatch" }
        ),
    })
}

pub fn run_all() -> Result<Vec<Check>> {
    Ok(vec![
        network_gradients(20)?,
        agent_gradients(20)?,
        cvar_brute_force(500)?,
        alpha_zero_reduction(10)?,
        cdf_and_grid()?,
    ])
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for check in super::run_all().unwrap() {
            assert!(check.passed, "{}: {}", check.name, check.detail);
        }
    }
}
