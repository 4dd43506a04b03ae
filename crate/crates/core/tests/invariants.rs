//! Properties of replay, traces and trials on random schedules.

use proptest::prelude::*;

use queue_monitor::engine::{simulate, SimOptions, TrialRun};
use queue_monitor::estimators::EstimatorKind;
use queue_monitor::policies::{PolicyKind, PolicyParams};
use queue_monitor::processes::{generate, Eg1Variant, ProcessSpec};
use queue_monitor::queue::{
    compute_opt, replay, replay_continuous, transition_counts, AnyTrace, Event, Trace,
};

/// Appends unit tokens after the last step until the queue is empty.
fn drained(arrivals: &[u64], tokens: &[u64]) -> Trace<u64> {
    let mut queued = 0u64;
    let mut events = Vec::new();
    for (t, (&a, &d)) in arrivals.iter().zip(tokens).enumerate() {
        queued -= d.min(queued);
        queued += a;
        if a > 0 || d > 0 {
            events.push(Event::new(t as u64, a, d));
        }
    }
    let start = arrivals.len() as u64;
    for k in 0..queued {
        events.push(Event::new(start + k, 0, 1));
    }
    Trace::new(start + queued, events).unwrap()
}

fn discrete_trace() -> impl Strategy<Value = Trace<u64>> {
    (1usize..120).prop_flat_map(|n| {
        (
            prop::collection::vec(prop_oneof![3 => Just(0u64), 2 => 1u64..4, 1 => 5u64..30], n),
            prop::collection::vec(0u64..4, n),
        )
            .prop_map(|(a, d)| drained(&a, &d))
    })
}

/// Bursty arrivals with one departure token per step.
fn unit_rate_trace() -> impl Strategy<Value = Trace<u64>> {
    (1usize..150).prop_flat_map(|n| {
        prop::collection::vec(prop_oneof![4 => Just(0u64), 1 => 1u64..25], n)
            .prop_map(move |a| drained(&a, &vec![1; a.len()]))
    })
}

fn continuous_trace() -> impl Strategy<Value = Trace<f64>> {
    prop::collection::vec((0.001f64..3.0, 0u64..5, 0u64..3), 1..80).prop_map(|steps| {
        let mut now = 0.0;
        let mut queued = 0u64;
        let mut events = Vec::new();
        for (gap, a, d) in steps {
            now += gap;
            queued -= d.min(queued);
            queued += a;
            events.push(Event::new(now, a, d));
        }
        for _ in 0..queued {
            now += 1.0;
            events.push(Event::new(now, 0, 1));
        }
        Trace::new(now, events).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn area_equals_total_delay(trace in discrete_trace()) {
        let r = replay(&trace);
        let delay: u128 = r.records.iter().map(|p| p.delay_steps().unwrap() as u128).sum();
        prop_assert_eq!(r.profile.area(), delay);
        prop_assert_eq!(r.profile.heights.len() as u64, trace.horizon);
    }

    #[test]
    fn packets_leave_in_arrival_order(trace in discrete_trace()) {
        let r = replay(&trace);
        for pair in r.records.windows(2) {
            prop_assert!(pair[0].arrival_time <= pair[1].arrival_time);
            prop_assert!(pair[0].departure_time <= pair[1].departure_time);
        }
        for p in &r.records {
            prop_assert!(p.departure_time.unwrap() > p.arrival_time);
        }
    }

    #[test]
    fn arrival_heights_stack_up_to_the_step_height(trace in discrete_trace()) {
        let r = replay(&trace);
        for p in &r.records {
            prop_assert!(p.height_at_arrival >= 1);
            prop_assert!(p.height_at_arrival <= r.profile.heights[p.arrival_time as usize]);
        }
        // The last arrival of a step sees the step's height.
        for pair in r.records.windows(2) {
            if pair[0].arrival_time != pair[1].arrival_time {
                prop_assert_eq!(pair[0].height_at_arrival, r.profile.heights[pair[0].arrival_time as usize]);
            }
        }
    }

    #[test]
    fn every_level_is_crossed_equally_often_both_ways(trace in discrete_trace()) {
        let r = replay(&trace);
        for (level, (up, down)) in transition_counts(&r.records) {
            prop_assert_eq!(up, down, "level {}", level);
        }
    }

    #[test]
    fn discrete_csv_round_trip(trace in discrete_trace()) {
        let any = AnyTrace::from(trace);
        let mut buf = Vec::new();
        any.write_csv(&mut buf).unwrap();
        prop_assert_eq!(AnyTrace::read_csv(buf.as_slice()).unwrap(), any);
    }

    #[test]
    fn continuous_csv_round_trip(trace in continuous_trace()) {
        let any = AnyTrace::from(trace);
        let mut buf = Vec::new();
        any.write_csv(&mut buf).unwrap();
        prop_assert_eq!(AnyTrace::read_csv(buf.as_slice()).unwrap(), any);
    }

    #[test]
    fn continuous_area_equals_total_delay(trace in continuous_trace()) {
        let r = replay_continuous(&trace);
        let delay: f64 = r.records.iter().map(|p| p.delay().unwrap()).sum();
        let area = r.profile.area();
        prop_assert!((area - delay).abs() <= 1e-9 * delay.max(1.0), "{} vs {}", area, delay);
    }

    #[test]
    fn reported_cost_matches_the_trajectory(trace in discrete_trace(), seed in any::<u64>(), eps in 0.05f64..0.5) {
        let any = AnyTrace::from(trace);
        let policy = PolicyParams::new(PolicyKind::PoaArr, eps).unwrap();
        let TrialRun::Discrete(run) = simulate(&any, &policy, &EstimatorKind::Hold, seed, SimOptions::default()).unwrap() else {
            unreachable!()
        };
        let horizon = run.profile.heights.len() as f64;
        let alg: f64 = run.profile.heights.iter().zip(&run.estimates).map(|(&h, &e)| (h as f64 - e).abs()).sum::<f64>() / horizon;
        prop_assert!((run.result.alg - alg).abs() <= 1e-9 * alg.max(1.0));
        let opt = compute_opt(&run.profile, &run.records).unwrap();
        prop_assert_eq!(run.result.opt, opt);
        // Held estimates are always some earlier ping's height.
        for &e in &run.estimates {
            prop_assert!(e == 0.0 || run.pings.iter().any(|p| p.height as f64 == e));
        }
    }

    #[test]
    fn extrapolation_never_overshoots_under_unit_service(trace in unit_rate_trace(), seed in any::<u64>(), eps in 0.05f64..0.5) {
        let any = AnyTrace::from(trace);
        let policy = PolicyParams::new(PolicyKind::PoaDep, eps).unwrap();
        let TrialRun::Discrete(run) = simulate(&any, &policy, &EstimatorKind::Extrapolating, seed, SimOptions::default()).unwrap() else {
            unreachable!()
        };
        for (&h, &e) in run.profile.heights.iter().zip(&run.estimates) {
            prop_assert!(e <= h as f64);
        }
        prop_assert_eq!(run.result.signed_error_sum, run.result.lag_sum.map(|l| l as i64));
    }

    #[test]
    fn generators_are_reproducible(seed in any::<u64>(), prob in 0.0f64..0.3, size in 1u64..20) {
        let arrival = ProcessSpec::BatchBernoulli { prob, size };
        let departure = ProcessSpec::ConstantRate { rate: 1 };
        let a = generate(&arrival, &departure, Some(300), seed).unwrap();
        let b = generate(&arrival, &departure, Some(300), seed).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn every_generator_leaves_the_queue_empty() {
    let unit = ProcessSpec::ConstantRate { rate: 1 };
    let pairs = [
        (ProcessSpec::BatchBernoulli { prob: 0.3, size: 7 }, unit.clone()),
        (ProcessSpec::ConstantRate { rate: 3 }, ProcessSpec::ConstantRate { rate: 2 }),
        (ProcessSpec::BurstyIid { h: 20, steps: 2000 }, ProcessSpec::BurstyIid { h: 20, steps: 2000 }),
        (
            ProcessSpec::ScenarioEg1 { h: 40, variant: Eg1Variant::OneStays },
            ProcessSpec::ScenarioEg1 { h: 40, variant: Eg1Variant::OneStays },
        ),
        (ProcessSpec::ScenarioEg3 { h: 8, choices: None }, ProcessSpec::ScenarioEg3 { h: 8, choices: None }),
    ];
    for (arrival, departure) in &pairs {
        for seed in 0..5 {
            let AnyTrace::Discrete(trace) = generate(arrival, departure, Some(500), seed).unwrap() else {
                unreachable!()
            };
            let r = replay(&trace);
            assert!(r.records.iter().all(|p| p.departure_time.is_some()), "{}", arrival.name());
        }
    }
    let poisson = generate(
        &ProcessSpec::Poisson { rate: 0.9, batch: 3 },
        &ProcessSpec::Poisson { rate: 3.0, batch: 1 },
        Some(200),
        1,
    )
    .unwrap();
    let AnyTrace::Continuous(trace) = poisson else { unreachable!() };
    let r = replay_continuous(&trace);
    assert!(r.records.iter().all(|p| p.departure_time.is_some()));
}
