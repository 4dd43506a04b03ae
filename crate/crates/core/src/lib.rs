//! Simulation of queue-height monitoring.
//!
//! Packets traverse a FIFO queue and may send a ping reporting their current
//! position (their height) to a monitor. The monitor estimates the queue's
//! height at every instant from the pings alone. This crate provides:
//!
//! - [`queue`]: traces, FIFO replay, height profiles and the offline optimum
//!   that knows every packet's arrival and departure time.
//! - [`processes`]: arrival and departure generators, including adversarial
//!   instances.
//! - [`policies`]: when a packet pings.
//! - [`estimators`]: what the monitor reports between pings.
//! - [`metrics`]: tracking cost, ratios and area accounting.
//! - [`engine`]: scenarios, seeded trials and experiment summaries.
//! - [`demos`]: self-checking adversarial demonstrations.
//! - [`cli`]: the `qmon` command line.
//!
//! ```
//! use queue_monitor::engine::{run_experiment, Scenario};
//! use queue_monitor::estimators::EstimatorKind;
//! use queue_monitor::policies::{PolicyKind, PolicyParams};
//! use queue_monitor::processes::ProcessSpec;
//!
//! let scenario = Scenario {
//!     arrival: ProcessSpec::BatchBernoulli { prob: 0.1, size: 8 },
//!     departure: ProcessSpec::ConstantRate { rate: 1 },
//!     policy: PolicyParams::new(PolicyKind::PoaDep, 0.1).unwrap(),
//!     estimator: EstimatorKind::Extrapolating,
//!     horizon: Some(500),
//! };
//! let summary = run_experiment(&scenario, 10, 0).unwrap();
//! assert_eq!(summary.n_trials, 10);
//! ```

pub mod cli;
pub mod demos;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod metrics;
pub mod policies;
pub mod processes;
pub mod queue;
pub mod seeding;

pub use error::{Error, Result};
