//! Every cargo example runs to completion.

#[allow(dead_code)]
#[path = "../examples/trace_replay.rs"]
mod trace_replay;
#[allow(dead_code)]
#[path = "../examples/poa_tracking.rs"]
mod poa_tracking;
#[allow(dead_code)]
#[path = "../examples/pico_rectangles.rs"]
mod pico_rectangles;
#[allow(dead_code)]
#[path = "../examples/process_generators.rs"]
mod process_generators;
#[allow(dead_code)]
#[path = "../examples/experiment_runner.rs"]
mod experiment_runner;
#[allow(dead_code)]
#[path = "../examples/continuous_poisson.rs"]
mod continuous_poisson;
#[allow(dead_code)]
#[path = "../examples/adversarial_demos.rs"]
mod adversarial_demos;

#[test]
fn trace_replay_runs() {
    trace_replay::run_example().unwrap();
}

#[test]
fn poa_tracking_runs() {
    poa_tracking::run_example().unwrap();
}

#[test]
fn pico_rectangles_runs() {
    pico_rectangles::run_example().unwrap();
}

#[test]
fn process_generators_runs() {
    process_generators::run_example().unwrap();
}

#[test]
fn experiment_runner_runs() {
    experiment_runner::run_example().unwrap();
}

#[test]
fn continuous_poisson_runs() {
    continuous_poisson::run_example().unwrap();
}

#[test]
fn adversarial_demos_run() {
    adversarial_demos::run_example().unwrap();
}
