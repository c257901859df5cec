use hoeffding_markov::estimation::EstimationConfig;
use hoeffding_markov::flow::{
    build_quantizer, calibrate_from_reference, detect, quantize, DetectionConfig, QuantizerLevels,
    ThresholdMethod,
};
use hoeffding_markov::markov::{empirical_pl, SymbolSequence};
use hoeffding_markov::recipe::Recipe;
use hoeffding_markov::traffic::generate;
use proptest::prelude::*;

const RECIPES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/recipes");

fn scenario1() -> Recipe {
    Recipe::load(format!("{RECIPES}/scenario1.json")).unwrap()
}

#[test]
fn per_window_threshold_uses_window_length() {
    let recipe = scenario1();
    let flows = recipe.observed_flows().unwrap();
    let run = recipe.run_detection(&flows).unwrap();
    let pl = &run.pls[0];
    let samples = pl.wc_samples(10_000, hoeffding_markov::rng::derive_seed(0, 0)).unwrap();
    for r in &run.reports {
        assert_eq!(r.n_pairs, r.n_flows - 1);
        let expected = samples.threshold(r.n_pairs, 0.001).unwrap();
        assert_eq!(r.threshold, Some(expected));
    }
}

#[test]
fn reports_are_deterministic() {
    let recipe = scenario1();
    let flows = recipe.observed_flows().unwrap();
    let a = recipe.run_detection(&flows).unwrap().reports;
    let b = recipe.run_detection(&flows).unwrap().reports;
    assert_eq!(a, b);
    assert!(a.windows(2).all(|w| w[0].window_start < w[1].window_start));
}

#[test]
fn adding_a_pl_never_raises_divergence() {
    let recipe = scenario1();
    let flows = recipe.observed_flows().unwrap();
    let spec = build_quantizer(&flows, QuantizerLevels::new(1, 2, 2), 3, 0).unwrap();
    let est = EstimationConfig::default();
    let one = calibrate_from_reference(&flows, &spec, &est, Some(&[[0.0, 3500.0]])).unwrap();
    let two =
        calibrate_from_reference(&flows, &spec, &est, Some(&[[0.0, 3500.0], [3500.0, 7000.0]]))
            .unwrap();
    let cfg = DetectionConfig {
        threshold_method: ThresholdMethod::Sanov,
        ..Default::default()
    };
    let a = detect(&flows, &spec, &cfg, &one).unwrap();
    let b = detect(&flows, &spec, &cfg, &two).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!(y.divergence.unwrap() <= x.divergence.unwrap());
    }
}

#[test]
fn clean_traffic_is_stable_across_halves() {
    let mut recipe = scenario1();
    let scenario = recipe.scenario.as_mut().unwrap();
    scenario.anomaly = None;
    scenario.horizon_s = 200_000.0;
    let flows = generate(scenario).unwrap();
    let spec = build_quantizer(&flows, QuantizerLevels::new(1, 2, 2), 3, 0).unwrap();
    let states = quantize(&flows, &spec).unwrap().states;
    let mid = flows.partition_point(|f| f.start_time < 100_000.0);
    let first = empirical_pl(&SymbolSequence::lift_states(12, &states[..mid]).unwrap()).unwrap();
    let second = empirical_pl(&SymbolSequence::lift_states(12, &states[mid..]).unwrap()).unwrap();
    let tv = first.total_variation(&second);
    assert!(tv < 0.05, "total variation {tv}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn flows_belong_to_the_expected_number_of_windows(
        w in 50u32..500,
        ratio in 1u32..8,
        t in 0.0f64..5000.0,
    ) {
        let stride = (w / ratio).max(1) as f64;
        let w = w as f64;
        let cfg = DetectionConfig { window_size_s: w, stride_s: stride, ..Default::default() };
        let horizon = 20_000.0;
        let starts = cfg.window_starts(horizon);
        let count = starts.iter().filter(|&&s| t >= s && t < s + w).count();
        let base = (w / stride).floor() as usize;
        // Early flows sit under fewer windows because none start before 0.
        if t >= w {
            prop_assert!(count == base || count == base + 1, "count {} base {}", count, base);
        } else {
            prop_assert!(count <= base + 1);
        }
    }
}
