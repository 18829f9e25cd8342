//! The risk-averse sample-based distributional actor-critic learner.
//!
//! The critic `G(q | x, a)` maps a state, an action and one standard-normal
//! scalar `q` to a return atom; `n` noise draws give `n` atoms in one batched
//! forward pass. It is trained with the quantile-Huber loss against
//! distributional Bellman targets built from the target networks. The actor is
//! trained by ascending the lower-tail CVaR of the online critic's atoms,
//! chaining the atom subgradients through the critic's action input and then
//! through the actor.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{s, Array2, ArrayView2, Axis};

use crate::envsim::EnvSpec;
use crate::error::{Error, Result};
use crate::gradnet::{
    mlp_init, polyak_update, read_network, write_network, Activation, Direction, NetworkParams,
    Optimizer, OptimizerKind, ParamGrads, RunningNorm,
};
use crate::replay::{ReplayPool, Transition};
use crate::retdist::{
    bellman_target, cvar_subgradient, quantile_grid, quantile_huber_loss, sort_with_permutation,
    tail_count, QuantileGrid, ReturnSamples,
};
use crate::rng::{RngStream, SeedTree};

/// Every hyperparameter of the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    /// CVaR level; 0 is risk neutral.
    pub alpha: f64,
    pub gamma: f64,
    /// Atoms per return distribution.
    pub atoms: usize,
    pub batch_size: usize,
    pub critic_lr: f64,
    pub actor_lr: f64,
    /// Standard deviation of exploration noise, in action units.
    pub exploration: f64,
    pub huber: f64,
    pub tau_target: f64,
    pub target_period: u64,
    pub optimizer: OptimizerKind,
    pub hidden: Vec<usize>,
    /// Global-norm gradient clip applied to both networks; `None` disables it.
    pub grad_clip: Option<f64>,
    /// Running per-feature normalization of states fed to both networks.
    pub input_norm: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            alpha: 0.0,
            gamma: 0.99,
            atoms: 51,
            batch_size: 256,
            critic_lr: 1e-4,
            actor_lr: 1e-4,
            exploration: 0.3,
            huber: 1.0,
            tau_target: 0.005,
            target_period: 1,
            optimizer: OptimizerKind::Adam,
            hidden: vec![400, 300],
            grad_clip: Some(10.0),
            input_norm: false,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "on" | "yes" => Ok(true),
        "false" | "0" | "off" | "no" => Ok(false),
        _ => Err(Error::InvalidArgument(format!(
            "bad value `{value}` for `{key}`"
        ))),
    }
}

pub(crate) fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| parse_num(key, t))
        .collect()
}

impl AgentConfig {
    /// Applies one `key=value` setting. Returns `Ok(false)` for keys that do
    /// not belong to the agent.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "alpha" => self.alpha = parse_num(key, value)?,
            "gamma" => self.gamma = parse_num(key, value)?,
            "n" | "atoms" => self.atoms = parse_num(key, value)?,
            "batch_size" | "m" => self.batch_size = parse_num(key, value)?,
            "beta1" | "critic_lr" => self.critic_lr = parse_num(key, value)?,
            "beta2" | "actor_lr" => self.actor_lr = parse_num(key, value)?,
            "delta" | "exploration" => self.exploration = parse_num(key, value)?,
            "zeta" | "huber" => self.huber = parse_num(key, value)?,
            "tau_target" => self.tau_target = parse_num(key, value)?,
            "target_period" => self.target_period = parse_num(key, value)?,
            "optimizer" => self.optimizer = value.parse()?,
            "hidden" => self.hidden = parse_list(key, value)?,
            "grad_clip" => {
                self.grad_clip = match value {
                    "off" | "none" => None,
                    v => Some(parse_num(key, v)?).filter(|c: &f64| *c > 0.0),
                }
            }
            "input_norm" => self.input_norm = parse_bool(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// `key=value` lines accepted by [`AgentConfig::set`].
    pub fn to_kv(&self) -> String {
        let hidden: Vec<String> = self.hidden.iter().map(ToString::to_string).collect();
        let mut out = String::new();
        let _ = writeln!(out, "alpha={}", self.alpha);
        let _ = writeln!(out, "gamma={}", self.gamma);
        let _ = writeln!(out, "n={}", self.atoms);
        let _ = writeln!(out, "batch_size={}", self.batch_size);
        let _ = writeln!(out, "beta1={}", self.critic_lr);
        let _ = writeln!(out, "beta2={}", self.actor_lr);
        let _ = writeln!(out, "delta={}", self.exploration);
        let _ = writeln!(out, "zeta={}", self.huber);
        let _ = writeln!(out, "tau_target={}", self.tau_target);
        let _ = writeln!(out, "target_period={}", self.target_period);
        let _ = writeln!(out, "optimizer={}", self.optimizer);
        let _ = writeln!(out, "hidden={}", hidden.join(","));
        match self.grad_clip {
            Some(c) => {
                let _ = writeln!(out, "grad_clip={c}");
            }
            None => out.push_str("grad_clip=off\n"),
        }
        let _ = writeln!(out, "input_norm={}", self.input_norm);
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(0.0..1.0).contains(&self.alpha) {
            return bad(format!("alpha {} outside [0, 1)", self.alpha));
        }
        tail_count(self.atoms, self.alpha)?;
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        for (name, lr) in [("beta1", self.critic_lr), ("beta2", self.actor_lr)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("{name} must be positive, got {lr}"));
            }
        }
        if !(self.exploration.is_finite() && self.exploration >= 0.0) {
            return bad(format!(
                "delta must be non-negative, got {}",
                self.exploration
            ));
        }
        if !(self.huber.is_finite() && self.huber >= 0.0) {
            return bad(format!("zeta must be non-negative, got {}", self.huber));
        }
        if !(self.tau_target > 0.0 && self.tau_target <= 1.0) {
            return bad(format!("tau_target {} outside (0, 1]", self.tau_target));
        }
        if self.target_period == 0 {
            return bad("target_period must be positive".into());
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive".into());
        }
        Ok(())
    }
}

fn hidden_layout(
    input: usize,
    hidden: &[usize],
    output: usize,
    last: Activation,
) -> (Vec<usize>, Vec<Activation>) {
    let mut sizes = vec![input];
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    let mut acts = vec![Activation::Relu; hidden.len()];
    acts.push(last);
    (sizes, acts)
}

/// Deterministic policy `a = a_max * tanh(net(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorNet {
    pub params: NetworkParams,
    pub a_max: Vec<f64>,
}

impl ActorNet {
    pub fn new(params: NetworkParams, a_max: Vec<f64>) -> Result<Self> {
        let last = params.layers().last().expect("non-empty network");
        if last.activation != Activation::Tanh {
            return Err(Error::Layout("actor output layer must be tanh".into()));
        }
        if params.out_dim() != a_max.len() {
            return Err(Error::Dimension {
                context: "actor output",
                expected: a_max.len(),
                got: params.out_dim(),
            });
        }
        Ok(ActorNet { params, a_max })
    }

    pub fn init(state_dim: usize, a_max: &[f64], hidden: &[usize], seed: u64) -> Result<Self> {
        let (sizes, acts) = hidden_layout(state_dim, hidden, a_max.len(), Activation::Tanh);
        Self::new(mlp_init(&sizes, &acts, seed)?, a_max.to_vec())
    }

    pub fn state_dim(&self) -> usize {
        self.params.in_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.a_max.len()
    }

    fn scale(&self, mut squashed: Array2<f64>) -> Array2<f64> {
        for mut row in squashed.rows_mut() {
            for (v, m) in row.iter_mut().zip(&self.a_max) {
                *v *= m;
            }
        }
        squashed
    }

    /// Actions for a batch of (already normalized) states.
    pub fn act_batch(&self, states: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.scale(self.params.predict(states)?))
    }
}

/// Sample generator `G(q | x, a)` with input rows `[x, a, q]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticNet {
    pub params: NetworkParams,
    state_dim: usize,
    action_dim: usize,
}

impl CriticNet {
    pub fn new(params: NetworkParams, state_dim: usize, action_dim: usize) -> Result<Self> {
        if params.in_dim() != state_dim + action_dim + 1 {
            return Err(Error::Dimension {
                context: "critic input",
                expected: state_dim + action_dim + 1,
                got: params.in_dim(),
            });
        }
        if params.out_dim() != 1 {
            return Err(Error::Dimension {
                context: "critic output",
                expected: 1,
                got: params.out_dim(),
            });
        }
        Ok(CriticNet {
            params,
            state_dim,
            action_dim,
        })
    }

    pub fn init(state_dim: usize, action_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let (sizes, acts) =
            hidden_layout(state_dim + action_dim + 1, hidden, 1, Activation::Linear);
        Self::new(mlp_init(&sizes, &acts, seed)?, state_dim, action_dim)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Critic input rows for `rows.len()` state-action pairs, `n` noise values each.
    fn inputs(
        &self,
        states: &Array2<f64>,
        actions: &Array2<f64>,
        noise: &[f64],
        n: usize,
    ) -> Array2<f64> {
        let (sd, ad) = (self.state_dim, self.action_dim);
        let pairs = states.nrows();
        debug_assert_eq!(noise.len(), pairs * n);
        let mut input = Array2::zeros((pairs * n, sd + ad + 1));
        for i in 0..pairs {
            for j in 0..n {
                let mut row = input.row_mut(i * n + j);
                row.slice_mut(s![..sd]).assign(&states.row(i));
                row.slice_mut(s![sd..sd + ad]).assign(&actions.row(i));
                row[sd + ad] = noise[i * n + j];
            }
        }
        input
    }

    /// One atom per noise value for a single state-action pair.
    pub fn generate(&self, state: &[f64], action: &[f64], noise: &[f64]) -> Result<ReturnSamples> {
        if state.len() != self.state_dim {
            return Err(Error::Dimension {
                context: "critic state",
                expected: self.state_dim,
                got: state.len(),
            });
        }
        if action.len() != self.action_dim {
            return Err(Error::Dimension {
                context: "critic action",
                expected: self.action_dim,
                got: action.len(),
            });
        }
        let states = Array2::from_shape_vec((1, state.len()), state.to_vec()).expect("row shape");
        let actions =
            Array2::from_shape_vec((1, action.len()), action.to_vec()).expect("row shape");
        let input = self.inputs(&states, &actions, noise, noise.len());
        let out = self.params.predict(input.view())?;
        ReturnSamples::new(out.into_raw_vec_and_offset().0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetPair {
    pub actor: ActorNet,
    pub critic: CriticNet,
}

/// Noise for one update: `batch * atoms` values, transition-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNoise {
    pub online: Vec<f64>,
    pub target: Vec<f64>,
}

impl BatchNoise {
    /// Per transition: `n` online draws, then `n` target draws.
    pub fn draw(batch: usize, atoms: usize, rng: &mut RngStream) -> Self {
        let mut online = Vec::with_capacity(batch * atoms);
        let mut target = Vec::with_capacity(batch * atoms);
        for _ in 0..batch {
            online.extend((0..atoms).map(|_| rng.normal()));
            target.extend((0..atoms).map(|_| rng.normal()));
        }
        BatchNoise { online, target }
    }
}

/// A frozen deterministic policy for data collection and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub actor: ActorNet,
    pub state_norm: Option<RunningNorm>,
}

impl Policy {
    pub fn act(&self, state: &[f64]) -> Result<Vec<f64>> {
        let x = match &self.state_norm {
            Some(norm) => norm.normalize(state),
            None => state.to_vec(),
        };
        let input = Array2::from_shape_vec((1, x.len()), x).expect("row shape");
        let out = self.actor.act_batch(input.view())?;
        Ok(out.into_raw_vec_and_offset().0)
    }

    /// Network text followed by an optional `norm <dim> <count>` block.
    pub fn write<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        write_network(out, &self.actor.params)?;
        let bounds: Vec<String> = self.actor.a_max.iter().map(ToString::to_string).collect();
        writeln!(out, "a_max {}", bounds.join(" "))?;
        if let Some(norm) = &self.state_norm {
            writeln!(out, "norm {} {}", norm.dim(), norm.count())?;
            for values in [norm.mean(), norm.m2()] {
                let row: Vec<String> = values.iter().map(ToString::to_string).collect();
                writeln!(out, "{}", row.join(" "))?;
            }
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let text: Vec<String> = input
            .lines()
            .collect::<std::io::Result<_>>()
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let split = text
            .iter()
            .position(|l| l.starts_with("a_max"))
            .ok_or_else(|| Error::Checkpoint("missing `a_max` line".into()))?;
        let params = read_network(text[..split].join("\n").as_bytes())?;
        let floats = |line: &str| -> Result<Vec<f64>> {
            line.split_ascii_whitespace()
                .map(|t| {
                    t.parse()
                        .map_err(|_| Error::Checkpoint(format!("bad number `{t}`")))
                })
                .collect()
        };
        let a_max = floats(&text[split]["a_max".len()..])?;
        let actor = ActorNet::new(params, a_max)?;
        let state_norm = match text.get(split + 1) {
            Some(header) if header.starts_with("norm") => {
                let fields = floats(&header["norm".len()..])?;
                let (mean, m2) = match (text.get(split + 2), text.get(split + 3)) {
                    (Some(a), Some(b)) => (floats(a)?, floats(b)?),
                    _ => return Err(Error::Checkpoint("truncated norm block".into())),
                };
                if fields.len() != 2 || mean.len() != fields[0] as usize || m2.len() != mean.len() {
                    return Err(Error::Checkpoint("malformed norm block".into()));
                }
                Some(RunningNorm::from_parts(fields[1] as u64, mean, m2))
            }
            _ => None,
        };
        Ok(Policy { actor, state_norm })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnStats {
    pub critic_loss: f64,
    pub actor_cvar: f64,
}

#[derive(Debug, Clone)]
pub struct Agent {
    config: AgentConfig,
    actor: ActorNet,
    critic: CriticNet,
    targets: TargetPair,
    actor_opt: Optimizer,
    critic_opt: Optimizer,
    grid: QuantileGrid,
    state_norm: Option<RunningNorm>,
    learner_steps: u64,
}

impl Agent {
    /// Networks are initialized from the `init_actor` and `init_critic`
    /// substreams of `seeds`; targets start as exact copies.
    pub fn new(config: AgentConfig, env: &EnvSpec, seeds: &SeedTree) -> Result<Self> {
        config.validate()?;
        let actor = ActorNet::init(
            env.state_dim,
            &env.a_max,
            &config.hidden,
            seeds.derive_seed("init_actor"),
        )?;
        let critic = CriticNet::init(
            env.state_dim,
            env.action_dim,
            &config.hidden,
            seeds.derive_seed("init_critic"),
        )?;
        Self::from_networks(config, actor, critic)
    }

    pub fn from_networks(config: AgentConfig, actor: ActorNet, critic: CriticNet) -> Result<Self> {
        config.validate()?;
        if actor.state_dim() != critic.state_dim() || actor.action_dim() != critic.action_dim() {
            return Err(Error::Layout(
                "actor and critic disagree on dimensions".into(),
            ));
        }
        let targets = TargetPair {
            actor: actor.clone(),
            critic: critic.clone(),
        };
        let state_norm = config
            .input_norm
            .then(|| RunningNorm::new(actor.state_dim()));
        Ok(Agent {
            actor_opt: Optimizer::new(config.optimizer, &actor.params),
            critic_opt: Optimizer::new(config.optimizer, &critic.params),
            grid: quantile_grid(config.atoms)?,
            config,
            actor,
            critic,
            targets,
            state_norm,
            learner_steps: 0,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn actor(&self) -> &ActorNet {
        &self.actor
    }

    pub fn critic(&self) -> &CriticNet {
        &self.critic
    }

    pub fn targets(&self) -> &TargetPair {
        &self.targets
    }

    pub fn actor_params_mut(&mut self) -> &mut NetworkParams {
        &mut self.actor.params
    }

    pub fn critic_params_mut(&mut self) -> &mut NetworkParams {
        &mut self.critic.params
    }

    pub fn learner_steps(&self) -> u64 {
        self.learner_steps
    }

    pub fn policy(&self) -> Policy {
        Policy {
            actor: self.actor.clone(),
            state_norm: self.state_norm.clone(),
        }
    }

    /// Feeds a collected state to the input normalizer, if enabled.
    pub fn observe_state(&mut self, state: &[f64]) {
        if let Some(norm) = &mut self.state_norm {
            norm.update(state);
        }
    }

    fn state_matrix<'a>(&self, states: impl ExactSizeIterator<Item = &'a [f64]>) -> Array2<f64> {
        let rows = states.len();
        let dim = self.actor.state_dim();
        let mut out = Array2::zeros((rows, dim));
        for (mut row, x) in out.rows_mut().into_iter().zip(states) {
            match &self.state_norm {
                Some(norm) => {
                    let slice = row.as_slice_mut().expect("standard layout");
                    norm.normalize_into(x, slice);
                }
                None => row.assign(&ndarray::ArrayView1::from(x)),
            }
        }
        out
    }

    /// `pi(x) + delta * N(0, 1)` per dimension, clipped to the action bounds.
    pub fn select_action(
        &self,
        state: &[f64],
        delta: f64,
        rng: &mut RngStream,
    ) -> Result<Vec<f64>> {
        if state.len() != self.actor.state_dim() {
            return Err(Error::Dimension {
                context: "policy state",
                expected: self.actor.state_dim(),
                got: state.len(),
            });
        }
        let x = self.state_matrix(std::iter::once(state));
        let greedy = self.actor.act_batch(x.view())?;
        Ok(greedy
            .iter()
            .zip(&self.actor.a_max)
            .map(|(&a, &m)| {
                let noisy = if delta > 0.0 {
                    a + delta * rng.normal()
                } else {
                    a
                };
                noisy.clamp(-m, m)
            })
            .collect())
    }

    fn check_batch(&self, batch: &[&Transition], noise: &BatchNoise) -> Result<()> {
        let expected = batch.len() * self.config.atoms;
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        for len in [noise.online.len(), noise.target.len()] {
            if len != expected {
                return Err(Error::Dimension {
                    context: "batch noise",
                    expected,
                    got: len,
                });
            }
        }
        Ok(())
    }

    /// Batch-mean quantile-Huber loss of the online critic and its gradient in
    /// the critic parameters. Generated atoms are sorted per transition and
    /// gradients are routed back through the sort permutation.
    pub fn critic_gradient(
        &self,
        batch: &[&Transition],
        noise: &BatchNoise,
    ) -> Result<(f64, ParamGrads)> {
        self.check_batch(batch, noise)?;
        let n = self.config.atoms;
        let m = batch.len();

        let next_states = self.state_matrix(batch.iter().map(|t| t.next_state.as_slice()));
        let next_actions = self.targets.actor.act_batch(next_states.view())?;
        let target_in = self
            .targets
            .critic
            .inputs(&next_states, &next_actions, &noise.target, n);
        let next_atoms = self.targets.critic.params.predict(target_in.view())?;

        let states = self.state_matrix(batch.iter().map(|t| t.state.as_slice()));
        let mut actions = Array2::zeros((m, self.actor.action_dim()));
        for (mut row, t) in actions.rows_mut().into_iter().zip(batch) {
            row.assign(&ndarray::ArrayView1::from(t.action.as_slice()));
        }
        let online_in = self.critic.inputs(&states, &actions, &noise.online, n);
        let (atoms, cache) = self.critic.params.forward(online_in.view())?;

        let mut out_grads = Array2::zeros((m * n, 1));
        let mut total = 0.0;
        for (i, t) in batch.iter().enumerate() {
            let next = ReturnSamples::new(next_atoms.slice(s![i * n..(i + 1) * n, 0]).to_vec())?;
            let target = bellman_target(t.reward, self.config.gamma, &next, t.terminal)?;
            let generated = ReturnSamples::new(atoms.slice(s![i * n..(i + 1) * n, 0]).to_vec())?;
            let (sorted, perm) = sort_with_permutation(&generated);
            let (loss, grad) =
                quantile_huber_loss(&sorted, &target, &self.grid, self.config.huber)?;
            total += loss;
            for (g, &orig) in grad.iter().zip(&perm) {
                out_grads[[i * n + orig, 0]] = g / m as f64;
            }
        }
        let loss = total / m as f64;
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("critic loss {loss}")));
        }
        let grads = self.critic.params.param_grads(&cache, &out_grads)?;
        Ok((loss, grads))
    }

    /// Batch-mean CVaR of online-critic atoms at `a = pi(x)` and its gradient
    /// in the actor parameters. Only `noise.online` is used.
    pub fn actor_gradient(
        &self,
        batch: &[&Transition],
        noise: &BatchNoise,
    ) -> Result<(f64, ParamGrads)> {
        self.check_batch(batch, noise)?;
        let n = self.config.atoms;
        let m = batch.len();
        let (sd, ad) = (self.actor.state_dim(), self.actor.action_dim());

        let states = self.state_matrix(batch.iter().map(|t| t.state.as_slice()));
        let (squashed, actor_cache) = self.actor.params.forward(states.view())?;
        let actions = self.actor.scale(squashed);
        let critic_in = self.critic.inputs(&states, &actions, &noise.online, n);
        let (atoms, critic_cache) = self.critic.params.forward(critic_in.view())?;

        let mut out_grads = Array2::zeros((m * n, 1));
        let mut total = 0.0;
        for i in 0..m {
            let z = ReturnSamples::new(atoms.slice(s![i * n..(i + 1) * n, 0]).to_vec())?;
            let weights = cvar_subgradient(&z, self.config.alpha)?;
            total += crate::retdist::cvar_estimate(&z, self.config.alpha)?.cvar;
            for (j, w) in weights.iter().enumerate() {
                out_grads[[i * n + j, 0]] = w / m as f64;
            }
        }
        let objective = total / m as f64;
        if !objective.is_finite() {
            return Err(Error::Divergence(format!("actor objective {objective}")));
        }
        let input_grads = self.critic.params.input_grads(&critic_cache, &out_grads)?;
        let mut action_grads = Array2::zeros((m, ad));
        for i in 0..m {
            let block = input_grads.slice(s![i * n..(i + 1) * n, sd..sd + ad]);
            action_grads.row_mut(i).assign(&block.sum_axis(Axis(0)));
        }
        for mut row in action_grads.rows_mut() {
            for (g, a_max) in row.iter_mut().zip(&self.actor.a_max) {
                *g *= a_max;
            }
        }
        let grads = self.actor.params.param_grads(&actor_cache, &action_grads)?;
        Ok((objective, grads))
    }

    fn clip(&self, grads: &mut ParamGrads) {
        if let Some(max) = self.config.grad_clip {
            grads.clip_global_norm(max);
        }
    }

    /// One descent step on the critic with fresh noise. Returns the loss.
    pub fn critic_update(&mut self, batch: &[&Transition], rng: &mut RngStream) -> Result<f64> {
        let noise = BatchNoise::draw(batch.len(), self.config.atoms, rng);
        self.critic_update_with(batch, &noise)
    }

    pub fn critic_update_with(&mut self, batch: &[&Transition], noise: &BatchNoise) -> Result<f64> {
        let (loss, mut grads) = self.critic_gradient(batch, noise)?;
        self.clip(&mut grads);
        self.critic_opt.step(
            &mut self.critic.params,
            &grads,
            self.config.critic_lr,
            Direction::Descend,
        )?;
        Ok(loss)
    }

    /// One ascent step on the actor with fresh noise. The critic is untouched.
    /// Returns the batch-mean CVaR estimate.
    pub fn actor_update(&mut self, batch: &[&Transition], rng: &mut RngStream) -> Result<f64> {
        let noise = BatchNoise::draw(batch.len(), self.config.atoms, rng);
        self.actor_update_with(batch, &noise)
    }

    pub fn actor_update_with(&mut self, batch: &[&Transition], noise: &BatchNoise) -> Result<f64> {
        let (objective, mut grads) = self.actor_gradient(batch, noise)?;
        self.clip(&mut grads);
        self.actor_opt.step(
            &mut self.actor.params,
            &grads,
            self.config.actor_lr,
            Direction::Ascend,
        )?;
        Ok(objective)
    }

    /// Counts one learner step and blends targets every `target_period` steps.
    pub fn target_sync(&mut self) -> Result<bool> {
        self.learner_steps += 1;
        if !self.learner_steps.is_multiple_of(self.config.target_period) {
            return Ok(false);
        }
        let tau = self.config.tau_target;
        polyak_update(&mut self.targets.actor.params, &self.actor.params, tau)?;
        polyak_update(&mut self.targets.critic.params, &self.critic.params, tau)?;
        Ok(true)
    }

    /// Critic update, actor update and target sync, all on one batch drawn
    /// from `pool`.
    pub fn learn(&mut self, pool: &ReplayPool, rngs: &mut LearnerStreams) -> Result<LearnStats> {
        let m = self.config.batch_size;
        let batch = pool.sample_batch(m, &mut rngs.replay)?;
        let critic_loss = self.critic_update(&batch, &mut rngs.critic_noise)?;
        let actor_cvar = self.actor_update(&batch, &mut rngs.actor_noise)?;
        self.target_sync()?;
        Ok(LearnStats {
            critic_loss,
            actor_cvar,
        })
    }

    /// Writes `actor.ckpt`, `critic.ckpt` and `agent.cfg` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.policy().save(dir.join("actor.ckpt"))?;
        crate::gradnet::save_network(dir.join("critic.ckpt"), &self.critic.params)?;
        let cfg = dir.join("agent.cfg");
        fs::write(&cfg, self.config.to_kv()).map_err(|e| Error::io(cfg, e))
    }
}

/// Random streams consumed by [`Agent::learn`].
#[derive(Debug, Clone)]
pub struct LearnerStreams {
    pub replay: RngStream,
    pub critic_noise: RngStream,
    pub actor_noise: RngStream,
}

impl LearnerStreams {
    pub fn new(seeds: &SeedTree) -> Self {
        LearnerStreams {
            replay: seeds.stream("replay"),
            critic_noise: seeds.stream("critic_noise"),
            actor_noise: seeds.stream("actor_noise"),
        }
    }
}
