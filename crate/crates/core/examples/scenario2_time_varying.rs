//! Day/night traffic checked against several reference PLs at once. Each
//! window is compared with the closest PL and that PL's threshold is used.
//!
//! cargo run --release --example scenario2_time_varying [recipe.json]

use hoeffding_markov::recipe::Recipe;

fn main() -> hoeffding_markov::Result<()> {
    env_logger::init();
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/recipes/scenario2.json").into());
    let recipe = Recipe::load(path)?;
    let flows = recipe.observed_flows()?;
    let run = recipe.run_detection(&flows)?;
    println!(
        "{} flows, N = {}, {} PLs",
        flows.len(),
        run.quantizer.n_states(),
        run.pls.len()
    );
    for pl in &run.pls {
        println!(
            "  {:<10} segment {:?}, {} symbols",
            pl.label.as_deref().unwrap_or("-"),
            pl.segment.unwrap_or_default(),
            pl.training_length
        );
    }
    let flagged: Vec<_> = run.reports.iter().filter(|r| r.is_anomaly).collect();
    println!("{} of {} windows flagged", flagged.len(), run.reports.len());
    for r in flagged {
        println!(
            "  [{:.0}, {:.0}) h {:.2}: D = {:.4} > {:.4} (PL {})",
            r.window_start,
            r.window_end,
            r.window_start / 3600.0,
            r.divergence.unwrap_or(f64::NAN),
            r.threshold.unwrap_or(f64::NAN),
            r.best_pl.unwrap_or(0)
        );
    }
    Ok(())
}
