//! Finite-difference checks of the network backward pass and of the critic
//! and actor gradients, plus the rest of the built-in oracle suite.

use cvar_sdpg::gradnet::{mlp_init, Activation};
use cvar_sdpg::selftest::{finite_difference, relative_error, run_all};
use ndarray::Array2;

fn main() -> cvar_sdpg::Result<()> {
    let net = mlp_init(
        &[3, 8, 8, 1],
        &[Activation::Relu, Activation::Tanh, Activation::Linear],
        7,
    )?;
    let x = Array2::from_shape_fn((4, 3), |(i, j)| (i as f64 - 1.5) * 0.3 + j as f64 * 0.2);
    let upstream = Array2::from_elem((4, 1), 1.0);

    let (_, cache) = net.forward(x.view())?;
    let analytic = net.backward(&cache, &upstream)?.params.flatten();
    let numeric = finite_difference(&net, |p| p.predict(x.view()).expect("forward").sum());
    println!(
        "{} parameters, relative error {:.2e}",
        net.num_params(),
        relative_error(&analytic, &numeric)
    );

    for check in run_all()? {
        println!(
            "{} {}: {}",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            check.detail
        );
    }
    Ok(())
}
