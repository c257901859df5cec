//! Weak-convergence threshold: build the Hessian and the long-run covariance
//! at the true law, draw the Gaussian quadratic form once, and read off the
//! threshold for several sample sizes next to the Sanov one.
//!
//! cargo run --release --example wc_threshold

use hoeffding_markov::clt::{
    covariance_lambda, hessian_at, psd_repair, threshold_sanov, QuadraticFormSamples,
};
use hoeffding_markov::markov::{lift_transition, stationary_law, TransitionMatrix};

fn main() -> hoeffding_markov::Result<()> {
    let q = TransitionMatrix::from_rows(vec![
        vec![0.6, 0.3, 0.1],
        vec![0.2, 0.5, 0.3],
        vec![0.3, 0.3, 0.4],
    ])?;
    let p = lift_transition(&q);
    let pi = stationary_law(&p, 1000)?.law;
    let h = hessian_at(&pi)?;
    let lambda = psd_repair(&covariance_lambda(&pi, &p, 1000)?);
    println!(
        "covariance: {} powers summed, min eigenvalue {:.2e}",
        lambda.terms_used,
        lambda.min_eigenvalue()
    );

    let beta = 0.001;
    let samples = QuadraticFormSamples::draw(&h, &lambda, 20_000, 7)?;
    println!("{:>6} {:>10} {:>10}", "n", "eta_sv", "eta_wc");
    for n in [100, 500, 1000, 5000] {
        println!(
            "{n:>6} {:>10.5} {:>10.5}",
            threshold_sanov(beta, n)?,
            samples.threshold(n, beta)?
        );
    }
    Ok(())
}
