//! Estimate the reference law, transition matrix and covariance from one
//! training sequence, save them as a PL file and load it back.
//!
//! cargo run --release --example estimate_pl

use hoeffding_markov::compare::random_transition_matrix;
use hoeffding_markov::estimation::{calibrate, EstimationConfig};
use hoeffding_markov::flow::PlFile;
use hoeffding_markov::markov::{sample_chain, InitialLaw};

fn main() -> hoeffding_markov::Result<()> {
    let q = random_transition_matrix(4, 11)?;
    let cfg = EstimationConfig::default();
    let n0 = cfg.training_length(4);
    let training = sample_chain(&q, n0, 3, &InitialLaw::Stationary)?;

    let bundle = calibrate(&training, &cfg)?;
    println!("trained on {n0} symbols");
    println!("max |Q_hat - Q| = {:.4}", bundle.q.max_abs_diff(&q));
    println!(
        "covariance {0}x{0}, PSD repair needed: {1}",
        bundle.lambda.dim(),
        bundle.lambda.psd_repaired
    );

    let path = std::env::temp_dir().join("hoeffding-example-pl.json");
    PlFile::new(None, vec![bundle.clone()]).save(&path)?;
    let back = PlFile::load(&path)?;
    println!("{} -> {} PL(s)", path.display(), back.pls.len());
    assert_eq!(back.pls[0].pi, bundle.pi);
    Ok(())
}
