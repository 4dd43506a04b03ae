//! Runs each adversarial demonstration at a small size and prints its
//! verdict. Pass a demo name to run only that one.
//!
//! ```bash
//! cargo run --release --example adversarial_demos -- lb-dep
//! ```

use queue_monitor::demos::{run_demo, DemoParams, DEMO_NAMES};

fn small_params(name: &str) -> DemoParams {
    let base = DemoParams {
        trials: 30,
        ..DemoParams::default()
    };
    match name {
        "lb-dep" | "lb-arr" => DemoParams {
            h: 200,
            epsilon: 0.05,
            phases: 40,
            ..base
        },
        "poa-insufficiency" => DemoParams {
            h: 64,
            epsilon: 0.1,
            steps: 20_000,
            ..base
        },
        "eg1" => DemoParams { h: 10, epsilon: 0.1, ..base },
        _ => DemoParams { h: 10, epsilon: 0.1, ..base },
    }
}

pub fn run_named(names: &[&str]) -> Result<(), Box<dyn std::error::Error>> {
    for name in names {
        let report = run_demo(name, &small_params(name))?;
        println!("== {name}");
        for arm in &report.arms {
            println!(
                "  {:<24} ratio {:>9.4} (se {:.4})  pings/packet {:.3}",
                arm.arm,
                arm.mean_ratio.unwrap_or(f64::NAN),
                arm.ratio_se.unwrap_or(f64::NAN),
                arm.mean_pings_per_packet.unwrap_or(f64::NAN)
            );
        }
        println!("  {}", report.verdict);
    }
    Ok(())
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    run_named(DEMO_NAMES)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.is_empty() {
        run_example()
    } else {
        let names: Vec<&str> = args.iter().map(String::as_str).collect();
        run_named(&names)
    }
}
