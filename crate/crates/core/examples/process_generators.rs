//! Every process kind, generated with one seed, with a few statistics of
//! the queue it produces.
//!
//! ```bash
//! cargo run --example process_generators
//! ```

use queue_monitor::policies::Epsilon;
use queue_monitor::processes::{generate, phase_lb_departures, Eg1Variant, ProcessSpec};
use queue_monitor::queue::{replay, replay_continuous, AnyTrace};

fn describe(label: &str, trace: &AnyTrace) {
    match trace {
        AnyTrace::Discrete(t) => {
            let r = replay(t);
            println!(
                "{label:<28} discrete   horizon {:>7} packets {:>6} max height {:>5} mean {:.2}",
                t.horizon,
                r.records.len(),
                r.profile.max(),
                r.profile.area() as f64 / t.horizon.max(1) as f64
            );
        }
        AnyTrace::Continuous(t) => {
            let r = replay_continuous(t);
            println!(
                "{label:<28} continuous horizon {:>7.1} packets {:>6} mean height {:.2}",
                t.horizon,
                r.records.len(),
                r.profile.area() / t.horizon
            );
        }
    }
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let seed = 5;
    let unit = ProcessSpec::ConstantRate { rate: 1 };
    let sides = [
        ("constant arrivals", ProcessSpec::ConstantRate { rate: 1 }, unit.clone()),
        (
            "batch bernoulli",
            ProcessSpec::BatchBernoulli { prob: 0.05, size: 16 },
            unit.clone(),
        ),
        (
            "poisson / poisson",
            ProcessSpec::Poisson { rate: 0.8, batch: 1 },
            ProcessSpec::Poisson { rate: 1.0, batch: 1 },
        ),
    ];
    for (label, arrival, departure) in &sides {
        describe(label, &generate(arrival, departure, Some(2_000), seed)?);
    }

    let eps = Epsilon::new(0.05)?;
    let joint = [
        ("phase lb (departures)", ProcessSpec::PhaseLbDepartures { h: 200, epsilon: eps, phases: 20 }),
        ("phase lb (arrivals)", ProcessSpec::PhaseLbArrivals { h: 200, epsilon: eps, phases: 20 }),
        ("bursty iid", ProcessSpec::BurstyIid { h: 64, steps: 5_000 }),
        ("straggler example", ProcessSpec::ScenarioEg1 { h: 8, variant: Eg1Variant::OneStays }),
        ("doubling example", ProcessSpec::ScenarioEg3 { h: 6, choices: None }),
    ];
    for (label, spec) in &joint {
        describe(label, &generate(spec, spec, None, seed)?);
    }

    // The phase boundaries stay available to callers that ask for them.
    let phased = phase_lb_departures(200, eps, 5, seed)?;
    for p in &phased.phases {
        println!("phase at {:>5}: {} packets leave", p.start, p.size);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
