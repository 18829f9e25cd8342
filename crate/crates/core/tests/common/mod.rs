#![allow(dead_code)]

use cvar_sdpg::agent::{Agent, AgentConfig, BatchNoise};
use cvar_sdpg::envsim::EnvSpec;
use cvar_sdpg::gradnet::NetworkParams;
use cvar_sdpg::replay::Transition;
use cvar_sdpg::rng::{RngStream, SeedTree};
use ndarray::Array2;

pub const FD_STEP: f64 = 1e-5;

/// Smallest normalizer for [`rel_err`]. Central differences at h = 1e-5
/// carry roughly 1e-12 of roundoff, so gradients that vanish (dead ReLU
/// layers, for instance) are compared in absolute terms below this scale.
pub const GRAD_FLOOR: f64 = 1e-7;

/// Gradient-check error normalized by the larger infinity norm of the two.
pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(GRAD_FLOOR, |m, v| m.max(v.abs()));
    let worst = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    worst / scale
}

pub fn central_diff(params: &NetworkParams, mut f: impl FnMut(&NetworkParams) -> f64) -> Vec<f64> {
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(params.num_params());
    for i in 0..params.num_params() {
        let orig = *probe.param_mut(i);
        *probe.param_mut(i) = orig + FD_STEP;
        let up = f(&probe);
        *probe.param_mut(i) = orig - FD_STEP;
        let down = f(&probe);
        *probe.param_mut(i) = orig;
        out.push((up - down) / (2.0 * FD_STEP));
    }
    out
}

pub fn perturb(params: &mut NetworkParams, rng: &mut RngStream, scale: f64) {
    for i in 0..params.num_params() {
        *params.param_mut(i) += scale * rng.normal();
    }
}

pub struct Fixture {
    pub agent: Agent,
    pub batch: Vec<Transition>,
    pub noise: BatchNoise,
}

impl Fixture {
    pub fn refs(&self) -> Vec<&Transition> {
        self.batch.iter().collect()
    }
}

/// Tiny agent (hidden widths <= 4) with online nets moved off the targets,
/// a two-transition batch and matching noise.
pub fn tiny_fixture(seed: u64, alpha: f64, atoms: usize) -> Fixture {
    let mut rng = RngStream::from_seed(seed.wrapping_mul(0x9e37_79b9).wrapping_add(17));
    let state_dim = 1 + rng.index(3);
    let action_dim = 1 + rng.index(2);
    let a_max: Vec<f64> = (0..action_dim)
        .map(|_| rng.uniform_range(0.5, 2.0))
        .collect();
    let hidden: Vec<usize> = (0..1 + rng.index(2)).map(|_| 2 + rng.index(3)).collect();
    let spec = EnvSpec {
        state_dim,
        action_dim,
        a_max,
        max_steps: 10,
    };
    let config = AgentConfig {
        alpha,
        gamma: 0.95,
        atoms,
        batch_size: 2,
        hidden,
        huber: rng.uniform_range(0.2, 2.0),
        ..AgentConfig::default()
    };
    let mut agent = Agent::new(config, &spec, &SeedTree::new(seed)).unwrap();
    perturb(agent.actor_params_mut(), &mut rng, 0.3);
    perturb(agent.critic_params_mut(), &mut rng, 0.3);
    let batch = (0..2)
        .map(|i| Transition {
            state: rng.normals(state_dim),
            action: (0..action_dim)
                .map(|_| rng.uniform_range(-0.5, 0.5))
                .collect(),
            reward: rng.normal(),
            next_state: rng.normals(state_dim),
            terminal: i == 1 && seed.is_multiple_of(2),
        })
        .collect();
    let noise = BatchNoise::draw(2, atoms, &mut rng);
    Fixture {
        agent,
        batch,
        noise,
    }
}

/// Risk-neutral actor gradient: weight 1/(n M) on every online atom, chained
/// by hand through the critic input and the actor.
pub fn mean_atom_actor_gradient(f: &Fixture) -> Vec<f64> {
    let agent = &f.agent;
    let n = agent.config().atoms;
    let m = f.batch.len();
    let actor = agent.actor();
    let (sd, ad) = (actor.state_dim(), actor.action_dim());
    let mut total = vec![0.0; actor.params.num_params()];
    for (i, t) in f.batch.iter().enumerate() {
        let x = Array2::from_shape_vec((1, sd), t.state.clone()).unwrap();
        let (squashed, actor_cache) = actor.params.forward(x.view()).unwrap();
        let mut rows = Array2::zeros((n, sd + ad + 1));
        for j in 0..n {
            for c in 0..sd {
                rows[[j, c]] = t.state[c];
            }
            for c in 0..ad {
                rows[[j, sd + c]] = squashed[[0, c]] * actor.a_max[c];
            }
            rows[[j, sd + ad]] = f.noise.online[i * n + j];
        }
        let (_, cache) = agent.critic().params.forward(rows.view()).unwrap();
        let upstream = Array2::from_elem((n, 1), 1.0 / (n * m) as f64);
        let dx = agent
            .critic()
            .params
            .backward(&cache, &upstream)
            .unwrap()
            .input;
        let mut da = Array2::zeros((1, ad));
        for c in 0..ad {
            da[[0, c]] = (0..n).map(|j| dx[[j, sd + c]]).sum::<f64>() * actor.a_max[c];
        }
        let g = actor
            .params
            .backward(&actor_cache, &da)
            .unwrap()
            .params
            .flatten();
        for (acc, v) in total.iter_mut().zip(g) {
            *acc += v;
        }
    }
    total
}

pub fn critic_fd(f: &Fixture) -> (Vec<f64>, Vec<f64>) {
    let refs = f.refs();
    let (_, grads) = f.agent.critic_gradient(&refs, &f.noise).unwrap();
    let numeric = central_diff(&f.agent.critic().params, |p| {
        let mut probe = f.agent.clone();
        *probe.critic_params_mut() = p.clone();
        probe.critic_gradient(&refs, &f.noise).unwrap().0
    });
    (grads.flatten(), numeric)
}

pub fn actor_fd(f: &Fixture) -> (Vec<f64>, Vec<f64>) {
    let refs = f.refs();
    let (_, grads) = f.agent.actor_gradient(&refs, &f.noise).unwrap();
    let numeric = central_diff(&f.agent.actor().params, |p| {
        let mut probe = f.agent.clone();
        *probe.actor_params_mut() = p.clone();
        probe.actor_gradient(&refs, &f.noise).unwrap().0
    });
    (grads.flatten(), numeric)
}
