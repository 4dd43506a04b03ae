//! Continuous time: compound Poisson arrivals, Poisson service, and a
//! monitor that decrements its estimate on its own Poisson clock.
//!
//! ```bash
//! cargo run --release --example continuous_poisson
//! ```

use queue_monitor::engine::{run_experiment, Scenario};
use queue_monitor::estimators::EstimatorKind;
use queue_monitor::policies::{PolicyKind, PolicyParams};
use queue_monitor::processes::ProcessSpec;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let mu = 1.0;
    for eps in [0.2, 0.1] {
        let scenario = Scenario {
            // Bursts of 100 packets at rate 0.008: load 0.8.
            arrival: ProcessSpec::Poisson { rate: 0.008, batch: 100 },
            departure: ProcessSpec::Poisson { rate: mu, batch: 1 },
            policy: PolicyParams::new(PolicyKind::PoaDep, eps)?,
            estimator: EstimatorKind::PoissonTick { mu },
            horizon: Some(20_000),
        };
        let s = run_experiment(&scenario, 8, 42)?;
        let show = |name: &str| s.mean(name).unwrap_or(f64::NAN);
        println!(
            "eps {eps}: ratio {:.4} (se {:.4})  arrival part {:.3}  departure part {:.3}  opt {:.1}",
            show("ratio"),
            s.std_error("ratio").unwrap_or(f64::NAN),
            show("arrival_error"),
            show("departure_error"),
            show("opt")
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
