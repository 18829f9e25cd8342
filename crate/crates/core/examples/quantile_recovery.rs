//! Fits ten free atoms to standard-normal draws by descending the
//! quantile-Huber loss; the atoms settle on the midpoint quantiles.

use cvar_sdpg::retdist::{quantile_grid, quantile_huber_loss, ReturnSamples};
use cvar_sdpg::rng::RngStream;

fn main() -> cvar_sdpg::Result<()> {
    let n = 10;
    let zeta = 0.01;
    let target = ReturnSamples::new(RngStream::from_seed(0).normals(10_000))?;
    let grid = quantile_grid(n)?;

    let mut atoms = vec![0.0; n];
    for iter in 0..3000 {
        atoms.sort_by(f64::total_cmp);
        let (loss, grad) = quantile_huber_loss(
            &ReturnSamples::new_sorted(atoms.clone())?,
            &target,
            &grid,
            zeta,
        )?;
        if iter % 500 == 0 {
            println!("iter {iter:4}  loss {loss:.6}");
        }
        let lr = if iter < 2000 { 1.0 } else { 0.1 };
        for (z, g) in atoms.iter_mut().zip(&grad) {
            *z -= lr * n as f64 / zeta * g;
        }
    }

    let mut sorted = target.into_atoms();
    sorted.sort_by(f64::total_cmp);
    println!("\n  tau     atom   empirical quantile");
    for (tau, z) in grid.levels().iter().zip(&atoms) {
        let q = sorted[(tau * sorted.len() as f64) as usize];
        println!("{tau:5.2}  {z:7.3}  {q:7.3}");
    }
    Ok(())
}
