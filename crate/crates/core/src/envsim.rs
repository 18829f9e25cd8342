//! Environments: a trait, two built-in continuous-control tasks, and the
//! evaluation-time action disturbance.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub state_dim: usize,
    pub action_dim: usize,
    /// Symmetric bound per action dimension.
    pub a_max: Vec<f64>,
    pub max_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    /// Absorbing event. Hitting `max_steps` is a truncation and is not flagged here.
    pub terminal: bool,
}

pub trait Environment: Send {
    fn name(&self) -> &'static str;
    fn spec(&self) -> &EnvSpec;
    fn reset(&self, rng: &mut RngStream) -> Vec<f64>;
    /// Out-of-bound actions are clipped and counted.
    fn step(&mut self, state: &[f64], action: &[f64], rng: &mut RngStream) -> Result<StepResult>;
    fn clipped_actions(&self) -> u64;
}

pub const ENV_NAMES: [&str; 2] = ["one_step_risky", "pendulum"];

pub fn make_env(name: &str) -> Result<Box<dyn Environment>> {
    match name {
        "one_step_risky" => Ok(Box::new(OneStepRisky::new())),
        "pendulum" => Ok(Box::new(Pendulum::new())),
        other => Err(Error::UnknownEnv(other.to_string())),
    }
}

fn check_dims(spec: &EnvSpec, state: &[f64], action: &[f64]) -> Result<()> {
    if state.len() != spec.state_dim {
        return Err(Error::Dimension {
            context: "environment state",
            expected: spec.state_dim,
            got: state.len(),
        });
    }
    if action.len() != spec.action_dim {
        return Err(Error::Dimension {
            context: "environment action",
            expected: spec.action_dim,
            got: action.len(),
        });
    }
    Ok(())
}

/// Clips to `[-a_max, a_max]`; the flag reports whether anything changed.
pub fn clip_action(action: &[f64], a_max: &[f64]) -> (Vec<f64>, bool) {
    let mut clipped = false;
    let out = action
        .iter()
        .zip(a_max)
        .map(|(&a, &m)| {
            let c = a.clamp(-m, m);
            clipped |= c != a;
            c
        })
        .collect();
    (out, clipped)
}

/// `a + eps` with `eps ~ N(0, (scale * a_max)^2)` per dimension, clipped to bounds.
pub fn disturb_action(action: &[f64], scale: f64, a_max: &[f64], rng: &mut RngStream) -> Vec<f64> {
    debug_assert!(scale >= 0.0);
    let noisy: Vec<f64> = action
        .iter()
        .zip(a_max)
        .map(|(&a, &m)| a + scale * m * rng.normal())
        .collect();
    clip_action(&noisy, a_max).0
}

/// Single-state, horizon-1 task where larger actions pay more on average but
/// risk a catastrophe.
///
/// Reward is `a` with probability `1 - p(a)` and `a - C` with probability
/// `p(a) = p_max (a + 1) / 2`, with `C = 4`, `p_max = 0.2`, `a` in `[-1, 1]`.
/// The mean `0.6 a - 0.4` peaks at `a = 1`; the lower-tail CVaR at level 0.9
/// is `-3a - 4` for `a < 0` and `a - 4` for `a >= 0`, peaking at `a = -1`.
/// Each step consumes exactly one uniform variate.
#[derive(Debug, Clone)]
pub struct OneStepRisky {
    spec: EnvSpec,
    clipped: u64,
}

impl OneStepRisky {
    pub const CATASTROPHE: f64 = 4.0;
    pub const P_MAX: f64 = 0.2;

    pub fn new() -> Self {
        OneStepRisky {
            spec: EnvSpec {
                state_dim: 1,
                action_dim: 1,
                a_max: vec![1.0],
                max_steps: 1,
            },
            clipped: 0,
        }
    }

    pub fn catastrophe_prob(a: f64) -> f64 {
        Self::P_MAX * (a + 1.0) / 2.0
    }

    pub fn mean_reward(a: f64) -> f64 {
        a - Self::CATASTROPHE * Self::catastrophe_prob(a)
    }

    /// Lower-tail CVaR of the reward at level `alpha` (tail mass `1 - alpha`).
    pub fn reward_cvar(a: f64, alpha: f64) -> f64 {
        let tail = 1.0 - alpha;
        let p = Self::catastrophe_prob(a);
        if tail <= p {
            a - Self::CATASTROPHE
        } else {
            a - Self::CATASTROPHE * p / tail
        }
    }
}

impl Default for OneStepRisky {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for OneStepRisky {
    fn name(&self) -> &'static str {
        "one_step_risky"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, _rng: &mut RngStream) -> Vec<f64> {
        vec![0.0]
    }

    fn step(&mut self, state: &[f64], action: &[f64], rng: &mut RngStream) -> Result<StepResult> {
        check_dims(&self.spec, state, action)?;
        let (action, clipped) = clip_action(action, &self.spec.a_max);
        self.clipped += u64::from(clipped);
        let a = action[0];
        let u = rng.uniform();
        let reward = if u < Self::catastrophe_prob(a) {
            a - Self::CATASTROPHE
        } else {
            a
        };
        Ok(StepResult {
            next_state: vec![0.0],
            reward,
            terminal: true,
        })
    }

    fn clipped_actions(&self) -> u64 {
        self.clipped
    }
}

/// Torque-limited pendulum swing-up.
///
/// State is `(cos theta, sin theta, theta_dot)` with `theta = 0` upright.
/// Semi-implicit Euler: `theta_dot += (3g/(2l) sin theta + 3/(m l^2) u) dt`,
/// clamped to `[-MAX_SPEED, MAX_SPEED]`, then `theta += theta_dot dt`, wrapped to
/// `[-pi, pi)`. Reward is `-(theta^2 + 0.1 theta_dot^2 + 0.001 u^2)` evaluated
/// at the pre-step state. Episodes run 200 steps with no absorbing state.
/// Resets draw `theta ~ U[-pi, pi)` then `theta_dot ~ U[-1, 1)`.
#[derive(Debug, Clone)]
pub struct Pendulum {
    spec: EnvSpec,
    clipped: u64,
}

impl Pendulum {
    pub const MAX_TORQUE: f64 = 2.0;
    pub const MAX_SPEED: f64 = 8.0;
    pub const DT: f64 = 0.05;
    pub const GRAVITY: f64 = 10.0;
    pub const MASS: f64 = 1.0;
    pub const LENGTH: f64 = 1.0;

    pub fn new() -> Self {
        Pendulum {
            spec: EnvSpec {
                state_dim: 3,
                action_dim: 1,
                a_max: vec![Self::MAX_TORQUE],
                max_steps: 200,
            },
            clipped: 0,
        }
    }

    pub fn observe(theta: f64, theta_dot: f64) -> Vec<f64> {
        let theta = wrap_angle(theta);
        vec![theta.cos(), theta.sin(), theta_dot]
    }

    pub fn angle(state: &[f64]) -> f64 {
        state[1].atan2(state[0])
    }
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new()
    }
}

pub fn wrap_angle(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

impl Environment for Pendulum {
    fn name(&self) -> &'static str {
        "pendulum"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, rng: &mut RngStream) -> Vec<f64> {
        let theta = rng.uniform_range(-PI, PI);
        let theta_dot = rng.uniform_range(-1.0, 1.0);
        Self::observe(theta, theta_dot)
    }

    fn step(&mut self, state: &[f64], action: &[f64], _rng: &mut RngStream) -> Result<StepResult> {
        check_dims(&self.spec, state, action)?;
        let (action, clipped) = clip_action(action, &self.spec.a_max);
        self.clipped += u64::from(clipped);
        let u = action[0];
        let theta = Self::angle(state);
        let theta_dot = state[2];
        let cost = theta * theta + 0.1 * theta_dot * theta_dot + 0.001 * u * u;
        let accel = 3.0 * Self::GRAVITY / (2.0 * Self::LENGTH) * theta.sin()
            + 3.0 / (Self::MASS * Self::LENGTH * Self::LENGTH) * u;
        let new_dot = (theta_dot + accel * Self::DT).clamp(-Self::MAX_SPEED, Self::MAX_SPEED);
        let new_theta = theta + new_dot * Self::DT;
        Ok(StepResult {
            next_state: Self::observe(new_theta, new_dot),
            reward: -cost,
            terminal: false,
        })
    }

    fn clipped_actions(&self) -> u64 {
        self.clipped
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factory_by_name() {
        for name in ENV_NAMES {
            assert_eq!(make_env(name).unwrap().name(), name);
        }
        assert!(matches!(make_env("cartpole"), Err(Error::UnknownEnv(_))));
    }

    #[test]
    fn risky_reset_and_safe_action() {
        let mut env = OneStepRisky::new();
        let mut rng = RngStream::from_seed(0);
        assert_eq!(env.reset(&mut rng), vec![0.0]);
        for _ in 0..1000 {
            let s = env.step(&[0.0], &[-1.0], &mut rng).unwrap();
            assert_eq!(s.reward, -1.0);
            assert!(s.terminal);
        }
    }

    #[test]
    fn risky_closed_forms() {
        assert!((OneStepRisky::mean_reward(1.0) - 0.2).abs() < 1e-15);
        assert!((OneStepRisky::reward_cvar(-1.0, 0.9) + 1.0).abs() < 1e-12);
        assert!((OneStepRisky::reward_cvar(1.0, 0.9) + 3.0).abs() < 1e-12);
        for a in [-0.9, -0.5, -0.1] {
            let expected = -3.0 * a - 4.0;
            assert!(
                (OneStepRisky::reward_cvar(a, 0.9) - expected).abs() < 1e-9,
                "a={a}"
            );
        }
        for a in [0.0, 0.3, 0.8] {
            assert!((OneStepRisky::reward_cvar(a, 0.9) - (a - 4.0)).abs() < 1e-9);
        }
        assert!(
            (OneStepRisky::reward_cvar(0.4, 0.0) - OneStepRisky::mean_reward(0.4)).abs() < 1e-12
        );
    }

    #[test]
    fn risky_positive_action_rewards() {
        let mut env = OneStepRisky::new();
        let mut rng = RngStream::from_seed(4);
        let n = 20_000;
        let mut bad = 0;
        for _ in 0..n {
            let r = env.step(&[0.0], &[1.0], &mut rng).unwrap().reward;
            assert!(r == 1.0 || r == -3.0);
            bad += usize::from(r == -3.0);
        }
        let p = bad as f64 / n as f64;
        let sigma = (0.2 * 0.8 / n as f64).sqrt();
        assert!((p - 0.2).abs() < 3.0 * sigma, "catastrophe rate {p}");
    }

    #[test]
    fn out_of_bound_actions_are_clipped_and_counted() {
        let mut env = OneStepRisky::new();
        let mut rng = RngStream::from_seed(0);
        let r = env.step(&[0.0], &[-5.0], &mut rng).unwrap();
        assert_eq!(r.reward, -1.0);
        assert_eq!(env.clipped_actions(), 1);
        assert!(env.step(&[0.0, 1.0], &[0.0], &mut rng).is_err());
    }

    #[test]
    fn pendulum_reset_bounds_and_determinism() {
        let env = Pendulum::new();
        for seed in 0..200 {
            let s = env.reset(&mut RngStream::from_seed(seed));
            let theta = Pendulum::angle(&s);
            assert!((-PI..=PI).contains(&theta));
            assert!((-1.0..=1.0).contains(&s[2]));
            assert_eq!(s, env.reset(&mut RngStream::from_seed(seed)));
        }
    }

    #[test]
    fn pendulum_rewards_at_rest() {
        let mut env = Pendulum::new();
        let mut rng = RngStream::from_seed(0);
        let hanging = Pendulum::observe(PI, 0.0);
        let r = env.step(&hanging, &[0.0], &mut rng).unwrap();
        assert!((r.reward + PI * PI).abs() < 1e-12);
        let upright = Pendulum::observe(0.0, 0.0);
        let r = env.step(&upright, &[0.0], &mut rng).unwrap();
        assert_eq!(r.reward, 0.0);
        assert_eq!(r.next_state, upright);
        assert!(!r.terminal);
    }

    #[test]
    fn pendulum_speed_is_capped() {
        let mut env = Pendulum::new();
        let mut rng = RngStream::from_seed(2);
        let mut state = env.reset(&mut rng);
        for t in 0..5000 {
            let torque = if (t / 37) % 2 == 0 { 2.0 } else { -2.0 };
            state = env.step(&state, &[torque], &mut rng).unwrap().next_state;
            assert!(state[2].abs() <= Pendulum::MAX_SPEED);
        }
    }

    #[test]
    fn disturbance_basics() {
        let mut rng = RngStream::from_seed(1);
        assert_eq!(disturb_action(&[0.3], 0.0, &[1.0], &mut rng), vec![0.3]);
        for _ in 0..1000 {
            let a = disturb_action(&[1.9], 1.5, &[2.0], &mut rng);
            assert!(a[0].abs() <= 2.0);
        }
    }
}
