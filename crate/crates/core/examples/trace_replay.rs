//! Replays a hand-written trace, prints the height profile and the offline
//! optimum, and round-trips the trace through CSV.
//!
//! ```bash
//! cargo run --example trace_replay
//! ```

use queue_monitor::queue::{compute_opt, replay, transition_counts, AnyTrace, Event, Trace};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    // Three packets at 0, two more at 2; one token per step from step 1.
    let trace = Trace::new(
        8,
        vec![
            Event::new(0, 3, 0),
            Event::new(1, 0, 1),
            Event::new(2, 2, 1),
            Event::new(3, 0, 1),
            Event::new(4, 0, 1),
            Event::new(5, 0, 1),
        ],
    )?;
    let replayed = replay(&trace);
    println!("heights: {:?}", replayed.profile.heights);
    for r in &replayed.records {
        println!(
            "packet {}: arrived {} at height {}, left {:?}",
            r.id, r.arrival_time, r.height_at_arrival, r.departure_time
        );
    }

    let delays: u64 = replayed.records.iter().filter_map(|r| r.delay_steps()).sum();
    assert_eq!(replayed.profile.area(), delays as u128);
    println!("area under profile = total delay = {delays}");

    let opt = compute_opt(&replayed.profile, &replayed.records)?;
    println!("OPT (time-average height) = {opt:.4}");

    for (height, (up, down)) in transition_counts(&replayed.records) {
        println!("{height} <-> {}: {up} up, {down} down", height + 1);
    }

    let any = AnyTrace::from(trace);
    let mut buf = Vec::new();
    any.write_csv(&mut buf)?;
    let csv = String::from_utf8(buf)?;
    println!("--- trace.csv ---\n{csv}");
    assert_eq!(AnyTrace::from_csv_str(&csv)?, any);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
