use crate::agent::Policy;
use crate::envsim::{disturb_action, make_env, Environment};
use crate::error::{Error, Result};
use crate::rng::SeedTree;

/// Statistics of episode returns at one disturbance scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleReport {
    pub scale: f64,
    pub mean: f64,
    /// Population standard deviation (divides by the episode count).
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub returns: Vec<f64>,
    pub cdf: Vec<(f64, f64)>,
}

impl ScaleReport {
    pub fn from_returns(scale: f64, returns: Vec<f64>) -> Result<Self> {
        let cdf = empirical_cdf(&returns)?;
        let (mean, std) = mean_std(&returns);
        Ok(ScaleReport {
            scale,
            mean,
            std,
            min: cdf[0].0,
            max: cdf[cdf.len() - 1].0,
            returns,
            cdf,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub scales: Vec<ScaleReport>,
}

impl EvalReport {
    pub fn means(&self) -> Vec<f64> {
        self.scales.iter().map(|s| s.mean).collect()
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Sorted distinct values with `F(v) = #{x <= v} / N`.
pub fn empirical_cdf(returns: &[f64]) -> Result<Vec<(f64, f64)>> {
    if returns.is_empty() {
        return Err(Error::InvalidArgument(
            "empirical CDF of an empty sample".into(),
        ));
    }
    if !returns.iter().all(|r| r.is_finite()) {
        return Err(Error::NonFinite("episode returns"));
    }
    let mut sorted = returns.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        if i + 1 < n && sorted[i + 1] == v {
            continue;
        }
        let prob = if i + 1 == n {
            1.0
        } else {
            (i + 1) as f64 / n as f64
        };
        points.push((v, prob));
    }
    Ok(points)
}

/// Episode settings for [`evaluate`].
#[derive(Debug, Clone)]
pub struct EvalSettings {
    pub noise_scales: Vec<f64>,
    pub episodes: usize,
    pub seed: u64,
    /// Discount for reported returns; `None` sums rewards undiscounted.
    pub discount: Option<f64>,
}

/// Runs the noiseless policy with disturbed actions at each scale.
///
/// Episode `e` draws its reset, environment and disturbance variates from
/// substreams indexed by `e`, identical across scales, so the scales differ
/// only in the disturbance magnitude.
pub fn evaluate(policy: &Policy, env_name: &str, settings: &EvalSettings) -> Result<EvalReport> {
    if settings.episodes == 0 {
        return Err(Error::InvalidArgument(
            "evaluation needs at least one episode".into(),
        ));
    }
    let mut env = make_env(env_name)?;
    if env.spec().state_dim != policy.actor.state_dim() || env.spec().a_max != policy.actor.a_max {
        return Err(Error::InvalidArgument(format!(
            "policy does not fit environment `{env_name}`"
        )));
    }
    let tree = SeedTree::new(settings.seed);
    let scales = settings
        .noise_scales
        .iter()
        .map(|&scale| {
            let returns = (0..settings.episodes as u64)
                .map(|e| run_episode(policy, env.as_mut(), scale, &tree, e, settings.discount))
                .collect::<Result<Vec<_>>>()?;
            ScaleReport::from_returns(scale, returns)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { scales })
}

fn run_episode(
    policy: &Policy,
    env: &mut dyn Environment,
    scale: f64,
    tree: &SeedTree,
    episode: u64,
    discount: Option<f64>,
) -> Result<f64> {
    let mut reset_rng = tree.indexed("eval_reset", episode);
    let mut env_rng = tree.indexed("eval_env", episode);
    let mut disturb_rng = tree.indexed("eval_disturb", episode);
    let a_max = env.spec().a_max.clone();
    let max_steps = env.spec().max_steps;
    let mut state = env.reset(&mut reset_rng);
    let mut total = 0.0;
    let mut weight = 1.0;
    for _ in 0..max_steps {
        let action = policy.act(&state)?;
        let action = disturb_action(&action, scale, &a_max, &mut disturb_rng);
        let step = env.step(&state, &action, &mut env_rng)?;
        total += weight * step.reward;
        if let Some(gamma) = discount {
            weight *= gamma;
        }
        if step.terminal {
            break;
        }
        state = step.next_state;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_examples() {
        let cdf = empirical_cdf(&[1.0, 2.0, 2.0, 3.0]).unwrap();
        assert_eq!(cdf, vec![(1.0, 0.25), (2.0, 0.75), (3.0, 1.0)]);
        assert_eq!(empirical_cdf(&[4.5]).unwrap(), vec![(4.5, 1.0)]);
        let cdf = empirical_cdf(&[0.3, 0.1, 0.7, 0.2, 0.9, 0.4, 0.6]).unwrap();
        assert_eq!(cdf.last().unwrap().1, 1.0);
        assert!(empirical_cdf(&[]).is_err());
    }

    #[test]
    fn report_stats_match_returns() {
        let r = ScaleReport::from_returns(0.5, vec![1.0, -2.0, 4.0, 4.0]).unwrap();
        assert_eq!((r.mean, r.min, r.max), (1.75, -2.0, 4.0));
        let var: f64 = [1.0f64, -2.0, 4.0, 4.0]
            .iter()
            .map(|v| (v - 1.75).powi(2))
            .sum::<f64>()
            / 4.0;
        assert!((r.std - var.sqrt()).abs() < 1e-15);
    }
}
