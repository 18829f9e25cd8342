use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::agent::{parse_list, AgentConfig};
use crate::envsim::ENV_NAMES;
use crate::error::{Error, Result};
use crate::replay::DEFAULT_CAPACITY;

/// Everything needed to reproduce a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub agent: AgentConfig,
    pub env: String,
    pub total_env_steps: u64,
    /// Environment steps between evaluation snapshots.
    pub eval_period: u64,
    pub eval_episodes: usize,
    /// Disturbance standard deviations as multiples of `a_max`.
    pub noise_scales: Vec<f64>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub replay_capacity: usize,
    /// Environment steps between rows of `metrics.csv`.
    pub log_period: u64,
    /// Report discounted instead of plain episode returns.
    pub discounted_returns: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            agent: AgentConfig::default(),
            env: "pendulum".into(),
            total_env_steps: 100_000,
            eval_period: 5_000,
            eval_episodes: 100,
            noise_scales: vec![0.0, 0.5, 1.0, 1.5],
            seeds: vec![0, 1, 2, 3, 4],
            out_dir: PathBuf::from("runs"),
            replay_capacity: DEFAULT_CAPACITY,
            log_period: 1,
            discounted_returns: false,
        }
    }
}

fn num<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config {
        line,
        msg: format!("bad value `{value}` for `{key}`"),
    })
}

impl RunConfig {
    /// Parses flat `key = value` text. Blank lines and `#` comments are
    /// ignored; absent keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
                line,
                msg: format!("expected `key=value`, found `{content}`"),
            })?;
            cfg.set(line, key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, line: usize, key: &str, value: &str) -> Result<()> {
        let list_err = |e: Error| Error::Config {
            line,
            msg: e.to_string(),
        };
        match key {
            "env" => {
                if !ENV_NAMES.contains(&value) {
                    return Err(Error::Config {
                        line,
                        msg: format!(
                            "unknown environment `{value}` (expected one of {ENV_NAMES:?})"
                        ),
                    });
                }
                self.env = value.to_string();
            }
            "total_env_steps" | "steps" => self.total_env_steps = num(line, key, value)?,
            "eval_period" => self.eval_period = num(line, key, value)?,
            "eval_episodes" => self.eval_episodes = num(line, key, value)?,
            "noise_scales" => self.noise_scales = parse_list(key, value).map_err(list_err)?,
            "seeds" => self.seeds = parse_list(key, value).map_err(list_err)?,
            "seed" => self.seeds = vec![num(line, key, value)?],
            "out_dir" => self.out_dir = PathBuf::from(value),
            "replay_capacity" => self.replay_capacity = num(line, key, value)?,
            "log_period" => self.log_period = num(line, key, value)?,
            "discounted_returns" => {
                self.discounted_returns = match value {
                    "true" | "1" => true,
                    "false" | "0" => false,
                    _ => {
                        return Err(Error::Config {
                            line,
                            msg: format!("bad value `{value}` for `{key}`"),
                        })
                    }
                }
            }
            _ => {
                let known = self.agent.set(key, value).map_err(|e| Error::Config {
                    line,
                    msg: e.to_string(),
                })?;
                if !known {
                    return Err(Error::Config {
                        line,
                        msg: format!("unknown key `{key}`"),
                    });
                }
                if key == "alpha" && !(0.0..1.0).contains(&self.agent.alpha) {
                    return Err(Error::Config {
                        line,
                        msg: format!("alpha {} outside [0, 1)", self.agent.alpha),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config { line: 0, msg });
        self.agent.validate().map_err(|e| Error::Config {
            line: 0,
            msg: e.to_string(),
        })?;
        if self.eval_period == 0 {
            return bad("eval_period must be >= 1".into());
        }
        if self.eval_episodes == 0 {
            return bad("eval_episodes must be >= 1".into());
        }
        if self.log_period == 0 {
            return bad("log_period must be >= 1".into());
        }
        if self.replay_capacity == 0 {
            return bad("replay_capacity must be >= 1".into());
        }
        if self
            .noise_scales
            .iter()
            .any(|s| !(*s >= 0.0 && s.is_finite()))
        {
            return bad(format!(
                "noise scales must be non-negative: {:?}",
                self.noise_scales
            ));
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        Ok(())
    }

    /// Text accepted by [`RunConfig::parse`] that reproduces this config.
    pub fn to_text(&self) -> String {
        let join = |v: Vec<String>| v.join(",");
        let mut out = String::new();
        let _ = writeln!(out, "env={}", self.env);
        let _ = writeln!(out, "total_env_steps={}", self.total_env_steps);
        let _ = writeln!(out, "eval_period={}", self.eval_period);
        let _ = writeln!(out, "eval_episodes={}", self.eval_episodes);
        let _ = writeln!(
            out,
            "noise_scales={}",
            join(self.noise_scales.iter().map(|s| s.to_string()).collect())
        );
        let _ = writeln!(
            out,
            "seeds={}",
            join(self.seeds.iter().map(|s| s.to_string()).collect())
        );
        let _ = writeln!(out, "out_dir={}", self.out_dir.display());
        let _ = writeln!(out, "replay_capacity={}", self.replay_capacity);
        let _ = writeln!(out, "log_period={}", self.log_period);
        let _ = writeln!(out, "discounted_returns={}", self.discounted_returns);
        out.push_str(&self.agent.to_kv());
        out
    }
}

pub fn read_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.agent.critic_lr, 1e-4);
        assert_eq!(cfg.agent.actor_lr, 1e-4);
        assert_eq!(cfg.agent.batch_size, 256);
        assert_eq!(cfg.agent.exploration, 0.3);
        assert_eq!(cfg.agent.huber, 1.0);
        assert_eq!(cfg.agent.atoms, 51);
    }

    #[test]
    fn single_override() {
        let cfg = RunConfig::parse("# risk averse\nalpha=0.5\n").unwrap();
        let mut expected = RunConfig::default();
        expected.agent.alpha = 0.5;
        assert_eq!(cfg, expected);
    }

    #[test]
    fn errors_name_the_line() {
        match RunConfig::parse("gamma=0.9\n\nalpha=1.0\n") {
            Err(Error::Config { line: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match RunConfig::parse("beta1=0.1\nwibble=2\n") {
            Err(Error::Config { line: 2, msg }) => assert!(msg.contains("wibble")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            RunConfig::parse("n=abc"),
            Err(Error::Config { line: 1, .. })
        ));
        assert!(matches!(
            RunConfig::parse("just text"),
            Err(Error::Config { line: 1, .. })
        ));
        assert!(matches!(
            RunConfig::parse("env=mujoco"),
            Err(Error::Config { line: 1, .. })
        ));
        assert!(RunConfig::parse("n=5\nalpha=0.9").is_err());
    }

    #[test]
    fn text_round_trip() {
        let cfg = RunConfig::parse(
            "alpha=0.3\nseeds=4,9\nnoise_scales=0,0.25\nhidden=16,8\ngrad_clip=off",
        )
        .unwrap();
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }
}
