//! Ping-on-arrival tracking of a bursty queue served at unit rate. The
//! monitor extrapolates from the last ping, subtracting one per step.
//!
//! ```bash
//! cargo run --example poa_tracking
//! ```

use queue_monitor::engine::{simulate, SimOptions, TrialRun};
use queue_monitor::estimators::EstimatorKind;
use queue_monitor::metrics::{lag_deltas, write_trajectory_csv};
use queue_monitor::policies::{PolicyKind, PolicyParams};
use queue_monitor::processes::{generate, ProcessSpec};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let arrival = ProcessSpec::BatchBernoulli { prob: 0.02, size: 40 };
    let departure = ProcessSpec::ConstantRate { rate: 1 };
    let trace = generate(&arrival, &departure, Some(5_000), 11)?;

    for eps in [0.2, 0.1, 0.05] {
        let policy = PolicyParams::new(PolicyKind::PoaDep, eps)?;
        let run = simulate(&trace, &policy, &EstimatorKind::Extrapolating, 11, SimOptions::default())?;
        let TrialRun::Discrete(run) = run else { unreachable!() };
        let r = &run.result;
        // Every lag term is non-negative, so the estimate never overshoots.
        let lag: u64 = lag_deltas(&run.records, &run.pings).iter().sum();
        assert_eq!(Some(lag as i64), r.signed_error_sum);
        println!(
            "eps {eps:<5} ratio {:.4}  pings/packet {:.3}  overshoot {}",
            r.ratio.unwrap_or(f64::NAN),
            r.pings_per_packet,
            r.max_overshoot
        );
        if eps == 0.05 {
            let mut buf = Vec::new();
            write_trajectory_csv(&run.profile, &run.estimates, &mut buf)?;
            let text = String::from_utf8(buf)?;
            println!("first steps of the trajectory:");
            for line in text.lines().take(6) {
                println!("  {line}");
            }
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
