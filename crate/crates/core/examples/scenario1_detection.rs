//! Rate anomaly in stationary traffic: one user multiplies its flow rate by
//! ten for 500 s. Compares the weak-convergence and Sanov thresholds.
//!
//! cargo run --release --example scenario1_detection [recipe.json]

use hoeffding_markov::flow::ThresholdMethod;
use hoeffding_markov::recipe::Recipe;

fn main() -> hoeffding_markov::Result<()> {
    env_logger::init();
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/recipes/scenario1.json").into());
    let mut recipe = Recipe::load(path)?;
    let flows = recipe.observed_flows()?;
    println!("{} flows, N = {}", flows.len(), {
        let (spec, _) = recipe.calibrate(&flows)?;
        spec.n_states()
    });

    for method in [ThresholdMethod::Wc, ThresholdMethod::Sanov] {
        recipe.detection.get_or_insert_with(Default::default).threshold_method = method;
        let run = recipe.run_detection(&flows)?;
        let flagged = run.reports.iter().filter(|r| r.is_anomaly).count();
        println!("\n{method:?}: {flagged} of {} windows flagged", run.reports.len());
        println!("{:>8} {:>6} {:>10} {:>10}", "start", "pairs", "D", "eta");
        for r in &run.reports {
            let mark = if r.is_anomaly { "*" } else { "" };
            println!(
                "{:>8} {:>6} {:>10.5} {:>10.5} {mark}",
                r.window_start,
                r.n_pairs,
                r.divergence.unwrap_or(f64::NAN),
                r.threshold.unwrap_or(f64::NAN)
            );
        }
    }
    Ok(())
}
