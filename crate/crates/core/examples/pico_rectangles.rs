//! PICO on the bursty instance: packets keep pinging while queued, and the
//! monitor reports the union of forward-projected rectangles. Prints the
//! area the union misses, the area it overshoots, and pings per height band.
//!
//! ```bash
//! cargo run --release --example pico_rectangles
//! ```

use queue_monitor::engine::{simulate, SimOptions, TrialRun};
use queue_monitor::estimators::EstimatorKind;
use queue_monitor::metrics::ping_stats;
use queue_monitor::policies::{PolicyKind, PolicyParams};
use queue_monitor::processes::bursty_iid;
use queue_monitor::queue::AnyTrace;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let eps = 0.2;
    let trace = AnyTrace::from(bursty_iid(64, 20_000, 3)?);
    let policy = PolicyParams::new(PolicyKind::Pico, eps)?;
    let options = SimOptions {
        keep_rectangles: true,
        keep_pings: true,
    };
    let TrialRun::Discrete(run) = simulate(&trace, &policy, &EstimatorKind::Pico, 3, options)? else {
        unreachable!()
    };
    let r = &run.result;
    let area = r.truth_area;
    println!("packets {}  pings {}  ratio {:.4}", r.packets, r.ping_count, r.ratio.unwrap_or(f64::NAN));
    println!(
        "missed area {:.1} ({:.4} of truth)  overshoot area {:.1} ({:.4}, bound {:.1})",
        r.under_area.unwrap_or(0.0),
        r.under_area.unwrap_or(0.0) / area,
        r.over_area.unwrap_or(0.0),
        r.over_area.unwrap_or(0.0) / area,
        9.0 * eps
    );
    println!(
        "overshoot bound holds: {:?}  certified rectangles outside the diagram: {:?}",
        r.over_bound_holds, r.lower_rect_violations
    );
    println!("rectangles built: {}", run.rectangles.as_ref().map_or(0, Vec::len));

    let stats = ping_stats(&run.pings, &run.records);
    println!("arrival height band -> pings per packet");
    for (band, bucket) in &stats.histogram {
        println!("  [{band}, {}) {:>6} packets {:>8.2}", (*band).max(1) * 2, bucket.packets, bucket.per_packet());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
