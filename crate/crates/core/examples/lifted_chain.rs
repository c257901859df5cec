//! Lift a transition matrix to the pair chain, find its stationary law, and
//! recover the original matrix from that law alone.
//!
//! cargo run --example lifted_chain

use hoeffding_markov::markov::{
    lift_transition, marginal_consistency, stationary_law, Alphabet, TransitionMatrix, DEFAULT_M0,
};

fn main() -> hoeffding_markov::Result<()> {
    let q = TransitionMatrix::from_rows(vec![
        vec![0.5, 0.3, 0.2],
        vec![0.1, 0.6, 0.3],
        vec![0.25, 0.25, 0.5],
    ])?;
    let p = lift_transition(&q);
    println!("P is {0} x {0}", p.dim());

    let st = stationary_law(&p, DEFAULT_M0)?;
    println!("stationary residual {:.2e}", st.residual);
    let alphabet = Alphabet::new(q.dim())?;
    for k in 0..alphabet.lifted_size() {
        let (i, j) = alphabet.pair(k);
        println!("  pi({}, {}) = {:.6}", i + 1, j + 1, st.law.get(k));
    }

    let back = marginal_consistency(&st.law)?;
    println!("max |Q from pi - Q| = {:.2e}", back.max_abs_diff(&q));
    Ok(())
}
