//! VaR, CVaR and the CVaR subgradient on a small return sample, including
//! the tie policy.

use cvar_sdpg::retdist::{cvar_estimate, cvar_subgradient, mean_return, ReturnSamples};
use cvar_sdpg::rng::RngStream;

fn main() -> cvar_sdpg::Result<()> {
    let mut rng = RngStream::from_seed(3);
    // Mostly good outcomes with an occasional large loss.
    let atoms: Vec<f64> = (0..20)
        .map(|_| {
            if rng.uniform() < 0.15 {
                -10.0 + rng.normal()
            } else {
                1.0 + 0.5 * rng.normal()
            }
        })
        .collect();
    let samples = ReturnSamples::new(atoms)?;

    println!("mean return       {:8.3}", mean_return(&samples));
    for alpha in [0.0, 0.5, 0.8, 0.9] {
        let stats = cvar_estimate(&samples, alpha)?;
        println!(
            "alpha {alpha:<4}  VaR {:8.3}  CVaR {:8.3}",
            stats.var, stats.cvar
        );
    }

    let weights = cvar_subgradient(&samples, 0.8)?;
    println!("\nsubgradient weights at alpha = 0.8 (aligned with atoms):");
    for (z, w) in samples.atoms().iter().zip(&weights) {
        if *w > 0.0 {
            println!("  z = {z:8.3}  w = {w:.3}");
        }
    }

    // Ties: exactly floor(n (1 - alpha)) atoms are selected, first in order.
    let tied = ReturnSamples::new(vec![2.0, 2.0, 2.0])?;
    println!(
        "\n[2, 2, 2] at alpha = 2/3 -> {:?}",
        cvar_subgradient(&tied, 2.0 / 3.0)?
    );
    Ok(())
}
