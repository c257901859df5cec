use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hoeffding_markov::compare::run_threshold_compare;
use hoeffding_markov::estimation::{calibrate, EstimationConfig};
use hoeffding_markov::flow::{
    build_quantizer, calibrate_from_reference, detect, read_flows, reports_to_jsonl,
    reports_to_summary_csv, flows_to_csv, PlFile, ThresholdMethod,
};
use hoeffding_markov::io::{read_sequence, write_atomic};
use hoeffding_markov::recipe::Recipe;
use hoeffding_markov::{selftest, Error, Result};

/// Markov-model Hoeffding test for flow anomaly detection.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare Sanov, weak-convergence and simulated thresholds on a random chain.
    ThresholdCompare(CompareArgs),
    /// Estimate a PL bundle from a symbol sequence or from flows.
    Estimate(EstimateArgs),
    /// Generate synthetic flows from a scenario.
    Simulate(SimulateArgs),
    /// Run the windowed test; exits 2 when any window is anomalous.
    Detect(DetectArgs),
    /// Check the library's invariants; exits 1 on any failure.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct Common {
    /// Recipe JSON file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    beta: Option<f64>,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    #[arg(long = "T")]
    t_samples: Option<usize>,
    #[arg(long)]
    m0: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    n_states: Option<usize>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: Common,
    /// One-column CSV of 1-based lifted symbols.
    #[arg(long, conflicts_with = "flows", requires = "n_states")]
    symbols: Option<PathBuf>,
    /// Alphabet size of the symbol file.
    #[arg(long)]
    n_states: Option<usize>,
    /// Flow CSV; quantized before estimation.
    #[arg(long)]
    flows: Option<PathBuf>,
    #[arg(long)]
    m0: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Wc,
    Sanov,
    Fixed,
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    common: Common,
    /// Flow CSV; simulated from the recipe's scenario when omitted.
    #[arg(long)]
    flows: Option<PathBuf>,
    /// PL file; calibrated from the reference traffic when omitted.
    #[arg(long)]
    pl: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// Threshold value for `--method fixed`.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long = "T")]
    t_samples: Option<usize>,
    #[arg(long)]
    m0: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Also write the CSV summary here.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn load_recipe(path: Option<&Path>) -> Result<Recipe> {
    path.map(Recipe::load).transpose().map(Option::unwrap_or_default)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn estimation_config(recipe: &Recipe, m0: Option<usize>, epsilon: Option<f64>) -> EstimationConfig {
    let mut est = recipe.estimation.clone().unwrap_or_default();
    if let Some(m0) = m0 {
        est.m0 = m0;
    }
    if let Some(eps) = epsilon {
        est.epsilon = eps;
    }
    est
}

fn threshold_compare(args: CompareArgs) -> Result<ExitCode> {
    let recipe = load_recipe(args.common.config.as_deref())?;
    let mut cfg = recipe.threshold_compare.unwrap_or_default();
    if let Some(v) = args.common.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.beta {
        cfg.beta = v;
    }
    if let Some(v) = args.n_grid {
        cfg.n_grid = v;
    }
    if let Some(v) = args.t_samples {
        cfg.t_samples = v;
    }
    if let Some(v) = args.m0 {
        cfg.m0 = v;
    }
    if let Some(v) = args.epsilon {
        cfg.epsilon = v;
    }
    if let Some(v) = args.n_states {
        cfg.n_states = v;
    }
    let report = run_threshold_compare(&cfg)?;
    emit(args.common.out.as_deref(), &report.curve.to_csv())?;
    let s = report.summary;
    eprintln!(
        "relative error vs Monte Carlo: wc max {:.4} mean {:.4}; sanov max {:.4} mean {:.4}",
        s.wc_max_rel, s.wc_mean_rel, s.sv_max_rel, s.sv_mean_rel
    );
    Ok(ExitCode::SUCCESS)
}

fn estimate(args: EstimateArgs) -> Result<ExitCode> {
    let recipe = load_recipe(args.common.config.as_deref())?;
    let est = estimation_config(&recipe, args.m0, args.epsilon);
    let file = match (&args.symbols, &args.flows) {
        (Some(path), _) => {
            let n = args.n_states.expect("clap enforces --n-states");
            let z = read_sequence(n, path)?;
            PlFile::new(None, vec![calibrate(&z, &est)?])
        }
        (None, Some(path)) => {
            let flows = read_flows(path)?;
            let mut q = recipe.quantizer.unwrap_or_default();
            if let Some(seed) = args.common.seed {
                q.seed = seed;
            }
            let spec = build_quantizer(&flows, q.levels, q.clusters, q.seed)?;
            let pls = calibrate_from_reference(&flows, &spec, &est, recipe.segments.as_deref())?;
            PlFile::new(Some(spec), pls)
        }
        (None, None) => {
            return Err(Error::Config("estimate needs --symbols or --flows".into()));
        }
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    emit(args.common.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn simulate(args: SimulateArgs) -> Result<ExitCode> {
    let mut recipe = load_recipe(args.common.config.as_deref())?;
    if let (Some(seed), Some(s)) = (args.common.seed, recipe.scenario.as_mut()) {
        s.seed = seed;
    }
    let flows = recipe.observed_flows()?;
    emit(args.common.out.as_deref(), &flows_to_csv(&flows)?)?;
    Ok(ExitCode::SUCCESS)
}

fn detect_cmd(args: DetectArgs) -> Result<ExitCode> {
    let mut recipe = load_recipe(args.common.config.as_deref())?;
    let mut cfg = recipe.detection.clone().unwrap_or_default();
    if let Some(seed) = args.common.seed {
        cfg.seed = seed;
    }
    if let Some(beta) = args.beta {
        cfg.beta = beta;
    }
    if let Some(t) = args.t_samples {
        cfg.t_samples = t;
    }
    match (args.method, args.threshold) {
        (Some(Method::Fixed), Some(v)) => cfg.threshold_method = ThresholdMethod::Fixed(v),
        (Some(Method::Fixed), None) => {
            return Err(Error::Config("--method fixed needs --threshold".into()));
        }
        (Some(Method::Wc), _) => cfg.threshold_method = ThresholdMethod::Wc,
        (Some(Method::Sanov), _) => cfg.threshold_method = ThresholdMethod::Sanov,
        (None, Some(v)) => cfg.threshold_method = ThresholdMethod::Fixed(v),
        (None, None) => {}
    }
    recipe.estimation = Some(estimation_config(&recipe, args.m0, args.epsilon));
    recipe.detection = Some(cfg.clone());

    let flows = match &args.flows {
        Some(path) => read_flows(path)?,
        None => recipe.observed_flows()?,
    };
    let reports = match &args.pl {
        Some(path) => {
            let file = PlFile::load(path)?;
            let spec = file.quantizer.ok_or_else(|| {
                Error::Config(format!("{} carries no quantizer", path.display()))
            })?;
            detect(&flows, &spec, &cfg, &file.pls)?
        }
        None => recipe.run_detection(&flows)?.reports,
    };
    emit(args.common.out.as_deref(), &reports_to_jsonl(&reports)?)?;
    if let Some(path) = &args.summary {
        write_atomic(path, reports_to_summary_csv(&reports).as_bytes())?;
    }
    let flagged = reports.iter().filter(|r| r.is_anomaly).count();
    eprintln!("{flagged} of {} windows flagged", reports.len());
    Ok(if flagged > 0 {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn selftest_cmd(args: SelftestArgs) -> Result<ExitCode> {
    let checks = selftest::run(args.seed)?;
    let mut ok = true;
    for c in &checks {
        println!(
            "{} {:<28} worst {:.3e} (tolerance {:.0e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.worst,
            c.tolerance
        );
        ok &= c.passed;
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // Usage errors exit with 1; 2 is reserved for detected anomalies.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::ThresholdCompare(a) => threshold_compare(a),
        Command::Estimate(a) => estimate(a),
        Command::Simulate(a) => simulate(a),
        Command::Detect(a) => detect_cmd(a),
        Command::Selftest(a) => selftest_cmd(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::FAILURE
    })
}
