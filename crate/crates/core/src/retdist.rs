//! Return-distribution arithmetic on sample atoms.
//!
//! Atoms are sorted ascending and paired with an increasing quantile grid.
//! Risk quantities use the lower tail: VaR at level `alpha` is the
//! `floor(n (1 - alpha))`-th smallest atom and CVaR averages the atoms up to
//! and including it. When atoms tie, exactly `k = floor(n (1 - alpha))` of them
//! are selected, taking the first `k` in stable sort order.

use crate::error::{Error, Result};

/// `n` return atoms for one state-action pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSamples {
    atoms: Vec<f64>,
    sorted: bool,
}

impl ReturnSamples {
    pub fn new(atoms: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidArgument(
                "return samples need at least one atom".into(),
            ));
        }
        if !atoms.iter().all(|a| a.is_finite()) {
            return Err(Error::NonFinite("return atoms"));
        }
        Ok(ReturnSamples {
            atoms,
            sorted: false,
        })
    }

    /// Marks already-ascending atoms as sorted.
    pub fn new_sorted(atoms: Vec<f64>) -> Result<Self> {
        let mut s = Self::new(atoms)?;
        if !s.atoms.windows(2).all(|w| w[0] <= w[1]) {
            return Err(Error::InvalidArgument(
                "atoms are not in ascending order".into(),
            ));
        }
        s.sorted = true;
        Ok(s)
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn is_sorted(&self) -> bool {
        self.sorted
    }

    pub fn into_atoms(self) -> Vec<f64> {
        self.atoms
    }
}

/// Midpoint quantile levels `(2i - 1) / (2n)` for `i = 1..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileGrid {
    tau_hat: Vec<f64>,
}

impl QuantileGrid {
    pub fn levels(&self) -> &[f64] {
        &self.tau_hat
    }

    pub fn len(&self) -> usize {
        self.tau_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau_hat.is_empty()
    }
}

pub fn quantile_grid(n: usize) -> Result<QuantileGrid> {
    if n == 0 {
        return Err(Error::InvalidArgument("quantile grid needs n >= 1".into()));
    }
    let denom = 2.0 * n as f64;
    Ok(QuantileGrid {
        tau_hat: (1..=n).map(|i| (2 * i - 1) as f64 / denom).collect(),
    })
}

/// Huber function with threshold `zeta`.
///
/// `zeta = 0` is taken as the absolute value `|v|` (plain quantile
/// regression) rather than the degenerate limit 0 of the formula.
pub fn huber(v: f64, zeta: f64) -> f64 {
    let a = v.abs();
    if zeta == 0.0 {
        a
    } else if a < zeta {
        0.5 * v * v
    } else {
        zeta * (a - 0.5 * zeta)
    }
}

/// Derivative of [`huber`] in `v` (0 at `v = 0` when `zeta = 0`).
pub fn huber_grad(v: f64, zeta: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else if zeta == 0.0 {
        v.signum()
    } else if v.abs() < zeta {
        v
    } else {
        zeta * v.signum()
    }
}

/// Ascending stable sort. `perm[i]` is the original index of sorted position `i`.
pub fn sort_with_permutation(samples: &ReturnSamples) -> (ReturnSamples, Vec<usize>) {
    let mut perm: Vec<usize> = (0..samples.atoms.len()).collect();
    perm.sort_by(|&i, &j| samples.atoms[i].total_cmp(&samples.atoms[j]));
    let atoms = perm.iter().map(|&i| samples.atoms[i]).collect();
    (
        ReturnSamples {
            atoms,
            sorted: true,
        },
        perm,
    )
}

/// Quantile-Huber loss between sorted predictions and target atoms.
///
/// `loss = 1/(n n_t) * sum_j sum_k |tau_j - 1{v < 0}| * huber(v, zeta)` with
/// `v = target_k - pred_j`. Also returns `d loss / d pred_j`.
pub fn quantile_huber_loss(
    pred_sorted: &ReturnSamples,
    target: &ReturnSamples,
    grid: &QuantileGrid,
    zeta: f64,
) -> Result<(f64, Vec<f64>)> {
    if !pred_sorted.sorted {
        return Err(Error::InvalidArgument("predictions must be sorted".into()));
    }
    if grid.len() != pred_sorted.len() {
        return Err(Error::Dimension {
            context: "quantile grid",
            expected: pred_sorted.len(),
            got: grid.len(),
        });
    }
    if !(zeta >= 0.0 && zeta.is_finite()) {
        return Err(Error::InvalidArgument(format!("huber threshold {zeta}")));
    }
    let scale = 1.0 / (pred_sorted.len() * target.len()) as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred_sorted.len());
    for (&z, &tau) in pred_sorted.atoms.iter().zip(&grid.tau_hat) {
        let mut row_loss = 0.0;
        let mut row_grad = 0.0;
        for &t in &target.atoms {
            let v = t - z;
            let weight = if v < 0.0 { 1.0 - tau } else { tau };
            row_loss += weight * huber(v, zeta);
            row_grad -= weight * huber_grad(v, zeta);
        }
        loss += row_loss;
        grad.push(row_grad * scale);
    }
    Ok((loss * scale, grad))
}

/// Distributional Bellman backup `r + gamma * z'`, or `r` on terminal steps.
pub fn bellman_target(
    reward: f64,
    gamma: f64,
    next: &ReturnSamples,
    terminal: bool,
) -> Result<ReturnSamples> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!(
            "discount {gamma} outside [0, 1]"
        )));
    }
    if !reward.is_finite() {
        return Err(Error::NonFinite("reward"));
    }
    let atoms = if terminal {
        vec![reward; next.len()]
    } else {
        next.atoms.iter().map(|z| reward + gamma * z).collect()
    };
    Ok(ReturnSamples {
        atoms,
        sorted: false,
    })
}

/// Number of lower-tail atoms, `floor(n (1 - alpha))`.
///
/// A relative slack of `1e-9` absorbs representation error, so e.g.
/// `n = 10, alpha = 0.9` yields 1 rather than 0.
pub fn tail_count(n: usize, alpha: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "CVaR level {alpha} outside [0, 1)"
        )));
    }
    let exact = n as f64 * (1.0 - alpha);
    let k = (exact * (1.0 + 1e-9)).floor() as usize;
    let k = k.min(n);
    if k == 0 {
        return Err(Error::LevelTooExtreme { alpha, n });
    }
    Ok(k)
}

fn sorted_copy(samples: &ReturnSamples) -> Vec<f64> {
    if samples.sorted {
        samples.atoms.clone()
    } else {
        sort_with_permutation(samples).0.atoms
    }
}

pub fn var_estimate(samples: &ReturnSamples, alpha: f64) -> Result<f64> {
    let k = tail_count(samples.len(), alpha)?;
    Ok(sorted_copy(samples)[k - 1])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskStats {
    pub var: f64,
    pub cvar: f64,
    pub alpha: f64,
}

/// Lower-tail VaR and CVaR. CVaR is the mean of the `k` smallest atoms,
/// summed in ascending order.
pub fn cvar_estimate(samples: &ReturnSamples, alpha: f64) -> Result<RiskStats> {
    let k = tail_count(samples.len(), alpha)?;
    let sorted = sorted_copy(samples);
    let tail_sum: f64 = sorted[..k].iter().sum();
    Ok(RiskStats {
        var: sorted[k - 1],
        cvar: tail_sum / k as f64,
        alpha,
    })
}

/// `d CVaR / d z_j` with the tail selection held fixed: `1/k` on the `k`
/// selected atoms, 0 elsewhere, aligned with the original atom order.
pub fn cvar_subgradient(samples: &ReturnSamples, alpha: f64) -> Result<Vec<f64>> {
    let k = tail_count(samples.len(), alpha)?;
    let mut weights = vec![0.0; samples.len()];
    let w = 1.0 / k as f64;
    if k == samples.len() {
        weights.fill(w);
        return Ok(weights);
    }
    let (_, perm) = sort_with_permutation(samples);
    for &i in &perm[..k] {
        weights[i] = w;
    }
    Ok(weights)
}

/// Mean atom, i.e. the Q-value. Summed in ascending order so that it agrees
/// bit for bit with `cvar_estimate(samples, 0.0).cvar`.
pub fn mean_return(samples: &ReturnSamples) -> f64 {
    let sorted = sorted_copy(samples);
    sorted.iter().sum::<f64>() / sorted.len() as f64
}
