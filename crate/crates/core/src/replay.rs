//! Bounded FIFO transition pool with uniform minibatch sampling.

use std::collections::VecDeque;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::gradnet::MAGIC;
use crate::rng::RngStream;

/// One environment interaction `(x, a, r, x', terminal)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

#[derive(Debug, Clone)]
pub struct ReplayPool {
    capacity: usize,
    state_dim: usize,
    action_dim: usize,
    items: VecDeque<Transition>,
}

pub const DEFAULT_CAPACITY: usize = 1_000_000;

impl ReplayPool {
    pub fn new(capacity: usize, state_dim: usize, action_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument(
                "replay capacity must be positive".into(),
            ));
        }
        Ok(ReplayPool {
            capacity,
            state_dim,
            action_dim,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    fn check(&self, t: &Transition) -> Result<()> {
        let dims = [
            ("transition state", self.state_dim, t.state.len()),
            ("transition action", self.action_dim, t.action.len()),
            ("transition next state", self.state_dim, t.next_state.len()),
        ];
        for (context, expected, got) in dims {
            if expected != got {
                return Err(Error::Dimension {
                    context,
                    expected,
                    got,
                });
            }
        }
        if !t.reward.is_finite() {
            return Err(Error::NonFinite("transition reward"));
        }
        Ok(())
    }

    /// Appends `t`, evicting the oldest entry when full.
    pub fn push(&mut self, t: Transition) -> Result<()> {
        self.check(&t)?;
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
        Ok(())
    }

    /// `m` transitions drawn uniformly with replacement.
    pub fn sample_batch(&self, m: usize, rng: &mut RngStream) -> Result<Vec<&Transition>> {
        if m == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if self.items.len() < m {
            return Err(Error::InsufficientData {
                have: self.items.len(),
                need: m,
            });
        }
        Ok((0..m)
            .map(|_| &self.items[rng.index(self.items.len())])
            .collect())
    }

    /// Binary dump: magic line, `replay\n`, then little-endian u64
    /// `capacity, state_dim, action_dim, count` followed by each transition as
    /// f64 fields (`state, action, reward, next_state`) and one terminal byte.
    pub fn dump<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        out.write_all(MAGIC.as_bytes())?;
        out.write_all(b"\nreplay\n")?;
        for v in [
            self.capacity,
            self.state_dim,
            self.action_dim,
            self.items.len(),
        ] {
            out.write_all(&(v as u64).to_le_bytes())?;
        }
        for t in &self.items {
            let fields = t
                .state
                .iter()
                .chain(&t.action)
                .chain(std::iter::once(&t.reward))
                .chain(&t.next_state);
            for v in fields {
                out.write_all(&v.to_le_bytes())?;
            }
            out.write_all(&[u8::from(t.terminal)])?;
        }
        Ok(())
    }

    pub fn restore<R: Read>(input: &mut R) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(format!("replay dump: {msg}"));
        let mut header = vec![0u8; MAGIC.len() + "\nreplay\n".len()];
        input
            .read_exact(&mut header)
            .map_err(|_| bad("truncated header"))?;
        if header != format!("{MAGIC}\nreplay\n").as_bytes() {
            return Err(bad("missing header"));
        }
        let mut word = [0u8; 8];
        let mut next_u64 = |input: &mut R| -> Result<u64> {
            input.read_exact(&mut word).map_err(|_| bad("truncated"))?;
            Ok(u64::from_le_bytes(word))
        };
        let capacity = next_u64(input)? as usize;
        let state_dim = next_u64(input)? as usize;
        let action_dim = next_u64(input)? as usize;
        let count = next_u64(input)? as usize;
        if count > capacity {
            return Err(bad("count exceeds capacity"));
        }
        let mut pool = ReplayPool::new(capacity, state_dim, action_dim)?;
        let mut read_vec = |input: &mut R, len: usize| -> Result<Vec<f64>> {
            (0..len)
                .map(|_| next_u64(input).map(f64::from_bits))
                .collect()
        };
        for _ in 0..count {
            let state = read_vec(input, state_dim)?;
            let action = read_vec(input, action_dim)?;
            let reward = read_vec(input, 1)?[0];
            let next_state = read_vec(input, state_dim)?;
            let mut flag = [0u8; 1];
            input.read_exact(&mut flag).map_err(|_| bad("truncated"))?;
            pool.push(Transition {
                state,
                action,
                reward,
                next_state,
                terminal: flag[0] != 0,
            })?;
        }
        Ok(pool)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr(tag: f64) -> Transition {
        Transition {
            state: vec![tag, -tag],
            action: vec![tag * 0.5],
            reward: tag,
            next_state: vec![tag + 1.0, 0.1],
            terminal: tag as i64 % 2 == 0,
        }
    }

    #[test]
    fn push_counts_and_evicts_fifo() {
        let mut pool = ReplayPool::new(2, 2, 1).unwrap();
        pool.push(tr(1.0)).unwrap();
        assert_eq!(pool.len(), 1);
        pool.push(tr(2.0)).unwrap();
        pool.push(tr(3.0)).unwrap();
        assert_eq!(pool.len(), 2);
        let rewards: Vec<f64> = pool.iter().map(|t| t.reward).collect();
        assert_eq!(rewards, vec![2.0, 3.0]);
    }

    #[test]
    fn push_preserves_values_and_checks_dims() {
        let mut pool = ReplayPool::new(4, 2, 1).unwrap();
        let t = tr(std::f64::consts::PI);
        pool.push(t.clone()).unwrap();
        assert_eq!(pool.iter().next().unwrap(), &t);
        let mut bad = tr(1.0);
        bad.action.push(0.0);
        assert!(matches!(pool.push(bad), Err(Error::Dimension { .. })));
    }

    #[test]
    fn sampling_rules() {
        let mut pool = ReplayPool::new(8, 2, 1).unwrap();
        pool.push(tr(5.0)).unwrap();
        let mut rng = RngStream::from_seed(9);
        assert_eq!(pool.sample_batch(1, &mut rng).unwrap()[0], &tr(5.0));
        assert!(matches!(
            pool.sample_batch(2, &mut rng),
            Err(Error::InsufficientData { .. })
        ));
        for i in 0..7 {
            pool.push(tr(i as f64)).unwrap();
        }
        let a: Vec<f64> = pool
            .sample_batch(5, &mut RngStream::from_seed(1))
            .unwrap()
            .iter()
            .map(|t| t.reward)
            .collect();
        let b: Vec<f64> = pool
            .sample_batch(5, &mut RngStream::from_seed(1))
            .unwrap()
            .iter()
            .map(|t| t.reward)
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn dump_restore_round_trip() {
        let mut pool = ReplayPool::new(3, 2, 1).unwrap();
        for i in 0..5 {
            pool.push(tr(i as f64 + 0.25)).unwrap();
        }
        let mut buf = Vec::new();
        pool.dump(&mut buf).unwrap();
        let back = ReplayPool::restore(&mut buf.as_slice()).unwrap();
        assert_eq!(back.capacity(), 3);
        assert!(back.iter().eq(pool.iter()));
        assert!(ReplayPool::restore(&mut &buf[..20]).is_err());
    }
}
