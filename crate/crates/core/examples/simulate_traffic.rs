//! Generate the Scenario 1 traffic and show flow counts per user inside and
//! outside the anomaly interval.
//!
//! cargo run --example simulate_traffic > flows.csv

use std::collections::BTreeMap;

use hoeffding_markov::flow::flows_to_csv;
use hoeffding_markov::recipe::Recipe;

fn main() -> hoeffding_markov::Result<()> {
    let recipe = Recipe::load(concat!(env!("CARGO_MANIFEST_DIR"), "/recipes/scenario1.json"))?;
    let flows = recipe.observed_flows()?;
    let anomaly = recipe.scenario()?.anomaly.expect("scenario 1 has an anomaly");

    let mut per_user: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for f in &flows {
        let e = per_user.entry(f.src.as_str()).or_default();
        if f.start_time >= anomaly.start_s && f.start_time < anomaly.end_s {
            e.1 += 1;
        } else {
            e.0 += 1;
        }
    }
    eprintln!("{:<12} {:>8} {:>8}", "user", "outside", "inside");
    for (user, (out, inside)) in per_user {
        eprintln!("{user:<12} {out:>8} {inside:>8}");
    }
    print!("{}", flows_to_csv(&flows)?);
    Ok(())
}
