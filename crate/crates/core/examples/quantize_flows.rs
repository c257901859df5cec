//! Fit the flow quantizer (size and duration bins, k-means over source
//! addresses) and show how flows map to symbols.
//!
//! cargo run --example quantize_flows

use hoeffding_markov::flow::{build_quantizer, quantize, QuantizerLevels};
use hoeffding_markov::recipe::Recipe;

fn main() -> hoeffding_markov::Result<()> {
    let recipe = Recipe::load(concat!(env!("CARGO_MANIFEST_DIR"), "/recipes/scenario1.json"))?;
    let flows = recipe.observed_flows()?;
    let spec = build_quantizer(&flows, QuantizerLevels::new(1, 2, 2), 3, 0)?;
    println!("N = {}", spec.n_states());
    for (i, c) in spec.cluster_centers.iter().enumerate() {
        println!("  cluster {i}: center ({:.1}, {:.1})", c[0], c[1]);
    }

    let q = quantize(&flows, &spec)?;
    let mut counts = vec![0usize; spec.n_states()];
    for &s in &q.states {
        counts[s] += 1;
    }
    for (s, c) in counts.iter().enumerate() {
        println!("  symbol {s:>2}: {c}");
    }
    println!("{} flows -> {} lifted symbols", flows.len(), q.lifted.len());
    for f in flows.iter().take(5) {
        println!("  {:>9.3} s {:>8} B from {:<12} -> {}", f.start_time, f.size, f.src, spec.symbol(f));
    }
    Ok(())
}
