use cvar_sdpg::envsim::{
    disturb_action, make_env, wrap_angle, Environment, OneStepRisky, Pendulum,
};
use cvar_sdpg::replay::{ReplayPool, Transition};
use cvar_sdpg::rng::{RngStream, SeedTree};
use proptest::prelude::*;
use std::f64::consts::PI;

fn tagged(i: usize) -> Transition {
    Transition {
        state: vec![i as f64],
        action: vec![0.0],
        reward: i as f64,
        next_state: vec![i as f64 + 1.0],
        terminal: i.is_multiple_of(2),
    }
}

#[test]
fn sampling_frequencies_are_uniform_within_three_sigma() {
    let mut pool = ReplayPool::new(10, 1, 1).unwrap();
    for i in 0..10 {
        pool.push(tagged(i)).unwrap();
    }
    let mut rng = RngStream::from_seed(2024);
    let mut counts = [0u64; 10];
    let draws = 100_000;
    for _ in 0..draws / 10 {
        for t in pool.sample_batch(10, &mut rng).unwrap() {
            counts[t.reward as usize] += 1;
        }
    }
    let p = 0.1;
    let expected = draws as f64 * p;
    let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
    for (i, c) in counts.iter().enumerate() {
        assert!((*c as f64 - expected).abs() <= 3.0 * sigma, "item {i}: {c}");
    }
}

#[test]
fn sampling_is_seeded_and_leaves_pool_untouched() {
    let mut pool = ReplayPool::new(50, 1, 1).unwrap();
    for i in 0..30 {
        pool.push(tagged(i)).unwrap();
    }
    let before: Vec<Transition> = pool.iter().cloned().collect();
    let a: Vec<f64> = pool
        .sample_batch(30, &mut RngStream::from_seed(1))
        .unwrap()
        .iter()
        .map(|t| t.reward)
        .collect();
    let b: Vec<f64> = pool
        .sample_batch(30, &mut RngStream::from_seed(1))
        .unwrap()
        .iter()
        .map(|t| t.reward)
        .collect();
    assert_eq!(a, b);
    assert_eq!(pool.iter().cloned().collect::<Vec<_>>(), before);
    assert!(pool.sample_batch(31, &mut RngStream::from_seed(1)).is_err());
    let mut one = ReplayPool::new(5, 1, 1).unwrap();
    one.push(tagged(7)).unwrap();
    assert_eq!(
        one.sample_batch(1, &mut RngStream::from_seed(3)).unwrap()[0],
        &tagged(7)
    );
    assert!(one.sample_batch(2, &mut RngStream::from_seed(3)).is_err());
}

proptest! {
    #[test]
    fn eviction_is_fifo_and_bounded(capacity in 1usize..20, pushes in 0usize..60) {
        let mut pool = ReplayPool::new(capacity, 1, 1).unwrap();
        for i in 0..pushes {
            pool.push(tagged(i)).unwrap();
            prop_assert!(pool.len() <= capacity);
        }
        let kept: Vec<usize> = pool.iter().map(|t| t.reward as usize).collect();
        let expected: Vec<usize> = (pushes.saturating_sub(capacity)..pushes).collect();
        prop_assert_eq!(kept, expected);
    }

    #[test]
    fn dump_restore_round_trips(capacity in 1usize..20, pushes in 0usize..30) {
        let mut pool = ReplayPool::new(capacity, 1, 1).unwrap();
        for i in 0..pushes {
            pool.push(tagged(i)).unwrap();
        }
        let mut bytes = Vec::new();
        pool.dump(&mut bytes).unwrap();
        let back = ReplayPool::restore(&mut bytes.as_slice()).unwrap();
        prop_assert_eq!(back.capacity(), capacity);
        prop_assert_eq!(back.iter().collect::<Vec<_>>(), pool.iter().collect::<Vec<_>>());
    }

    #[test]
    fn disturbed_actions_stay_in_bounds(a in -3.0f64..3.0, scale in 0.0f64..5.0, seed in any::<u64>()) {
        let mut rng = RngStream::from_seed(seed);
        let out = disturb_action(&[a, -a], scale, &[1.0, 2.5], &mut rng);
        prop_assert!(out[0].abs() <= 1.0 && out[1].abs() <= 2.5);
    }
}

#[test]
fn disturbance_std_matches_scale_times_bound() {
    let a_max = [2.0];
    // Small scales keep the bounds many standard deviations away, so
    // clipping does not bias the moment.
    for scale in [0.05, 0.1, 0.2] {
        let mut rng = RngStream::from_seed(99);
        let eps: Vec<f64> = (0..100_000)
            .map(|_| disturb_action(&[0.0], scale, &a_max, &mut rng)[0])
            .collect();
        let mean = eps.iter().sum::<f64>() / eps.len() as f64;
        let var = eps.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / eps.len() as f64;
        let target = scale * a_max[0];
        assert!(
            (var.sqrt() / target - 1.0).abs() <= 0.02,
            "scale {scale}: std {}",
            var.sqrt()
        );
    }
    let mut rng = RngStream::from_seed(1);
    assert_eq!(disturb_action(&[0.3], 0.0, &a_max, &mut rng), vec![0.3]);
}

#[test]
fn one_step_risky_closed_forms_match_monte_carlo() {
    let episodes = 1_000_000;
    let mut env = OneStepRisky::new();
    for (k, a) in [-0.5, 0.0, 0.6].into_iter().enumerate() {
        let mut rng = SeedTree::new(5).indexed("mc", k as u64);
        let mut rewards: Vec<f64> = (0..episodes)
            .map(|_| env.step(&[0.0], &[a], &mut rng).unwrap().reward)
            .collect();
        let p = OneStepRisky::catastrophe_prob(a);
        let n = episodes as f64;
        let c = OneStepRisky::CATASTROPHE;

        let mean = rewards.iter().sum::<f64>() / n;
        let se_mean = c * (p * (1.0 - p) / n).sqrt();
        assert!(
            (mean - OneStepRisky::mean_reward(a)).abs() <= 3.0 * se_mean.max(1e-12),
            "mean at {a}"
        );

        rewards.sort_by(f64::total_cmp);
        for alpha in [0.5, 0.9] {
            let tail = 1.0 - alpha;
            let k = (n * tail).round() as usize;
            let cvar = rewards[..k].iter().sum::<f64>() / k as f64;
            let se = c * (p * (1.0 - p) / n).sqrt() / tail;
            let exact = OneStepRisky::reward_cvar(a, alpha);
            assert!(
                (cvar - exact).abs() <= 3.0 * se.max(1e-12),
                "cvar at {a}, {alpha}: {cvar} vs {exact}"
            );
        }
    }
}

#[test]
fn one_step_risky_optima_are_at_the_bounds() {
    let grid: Vec<f64> = (0..=200).map(|i| -1.0 + i as f64 / 100.0).collect();
    let best = |f: &dyn Fn(f64) -> f64| {
        grid.iter()
            .cloned()
            .fold(grid[0], |b, a| if f(a) > f(b) { a } else { b })
    };
    assert_eq!(best(&OneStepRisky::mean_reward), 1.0);
    assert_eq!(best(&|a| OneStepRisky::reward_cvar(a, 0.9)), -1.0);
}

#[test]
fn pendulum_observation_stays_on_the_circle() {
    let mut env = Pendulum::new();
    let mut rng = RngStream::from_seed(7);
    let mut state = env.reset(&mut rng);
    for step in 0..10_000 {
        let u = rng.uniform_range(-3.0, 3.0);
        let next = env.step(&state, &[u], &mut rng).unwrap();
        assert_eq!(next.next_state.len(), 3);
        let norm = next.next_state[0].powi(2) + next.next_state[1].powi(2);
        assert!((norm - 1.0).abs() <= 1e-9, "step {step}");
        assert!(next.next_state[2].abs() <= Pendulum::MAX_SPEED);
        assert!(next.reward.is_finite() && !next.terminal);
        state = if step % 200 == 199 {
            env.reset(&mut rng)
        } else {
            next.next_state
        };
    }
    assert!(env.clipped_actions() > 0);
}

#[test]
fn pendulum_reward_examples() {
    let mut env = Pendulum::new();
    let mut rng = RngStream::from_seed(0);
    let hanging = env
        .step(&Pendulum::observe(PI, 0.0), &[0.0], &mut rng)
        .unwrap();
    assert!((hanging.reward + PI * PI).abs() <= 1e-12);
    let upright = env
        .step(&Pendulum::observe(0.0, 0.0), &[0.0], &mut rng)
        .unwrap();
    assert_eq!(upright.reward, 0.0);
    assert_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0);
}

#[test]
fn environments_replay_exactly_from_a_seed() {
    for name in ["one_step_risky", "pendulum"] {
        let trace = || {
            let mut env = make_env(name).unwrap();
            let mut rng = RngStream::from_seed(42);
            let mut state = env.reset(&mut rng);
            let mut out = Vec::new();
            for _ in 0..50 {
                let r = env.step(&state, &[0.3], &mut rng).unwrap();
                out.push(r.reward);
                state = if r.terminal {
                    env.reset(&mut rng)
                } else {
                    r.next_state
                };
            }
            out
        };
        assert_eq!(trace(), trace());
    }
}
