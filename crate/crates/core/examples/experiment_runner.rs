//! Many seeded trials of one scenario: the summary does not depend on the
//! number of worker threads, and the metadata pins down the scenario.
//!
//! ```bash
//! cargo run --release --example experiment_runner
//! ```

use queue_monitor::engine::{run_experiment_with_threads, ExperimentSummary, RunMetadata, Scenario};
use queue_monitor::estimators::EstimatorKind;
use queue_monitor::policies::{PolicyKind, PolicyParams};
use queue_monitor::processes::ProcessSpec;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = Scenario {
        arrival: ProcessSpec::BatchBernoulli { prob: 0.04, size: 20 },
        departure: ProcessSpec::ConstantRate { rate: 1 },
        policy: PolicyParams::new(PolicyKind::PoaDep, 0.1)?,
        estimator: EstimatorKind::Extrapolating,
        horizon: Some(3_000),
    };
    let (trials, base_seed) = (40, 1_000);
    let one = run_experiment_with_threads(&scenario, trials, base_seed, Some(1))?;
    let four = run_experiment_with_threads(&scenario, trials, base_seed, Some(4))?;
    assert_eq!(one, four);

    for name in ["ratio", "pings_per_packet", "lag_sum", "max_overshoot"] {
        let f = one.field(name).expect("known field");
        println!(
            "{name:<18} n {:>3} mean {:>12.5} se {:>10.5}",
            f.n,
            f.mean.unwrap_or(f64::NAN),
            f.std_error.unwrap_or(f64::NAN)
        );
    }
    println!("{} columns in summary.csv", ExperimentSummary::csv_header().len());

    let meta = RunMetadata::new(&scenario, base_seed, trials);
    let json = serde_json::to_string_pretty(&meta)?;
    let back: RunMetadata = serde_json::from_str(&json)?;
    assert_eq!(back.scenario, scenario);
    println!("scenario hash {}", meta.scenario_hash);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
