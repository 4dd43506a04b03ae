//! PICO trials checked column by column against a brute-force scan over
//! every ping sent.

use proptest::prelude::*;

use queue_monitor::engine::{simulate, DiscreteRun, SimOptions, TrialRun};
use queue_monitor::estimators::EstimatorKind;
use queue_monitor::policies::{Epsilon, PolicyKind, PolicyParams};
use queue_monitor::processes::{bursty_iid, scenario_eg1, scenario_eg3, Eg1Variant};
use queue_monitor::queue::{AnyTrace, Event, Trace};

fn run_pico(trace: Trace<u64>, eps: f64, seed: u64) -> DiscreteRun {
    let policy = PolicyParams::new(PolicyKind::Pico, eps).unwrap();
    let options = SimOptions {
        keep_rectangles: true,
        keep_pings: true,
    };
    match simulate(&AnyTrace::Discrete(trace), &policy, &EstimatorKind::Pico, seed, options).unwrap() {
        TrialRun::Discrete(run) => run,
        TrialRun::Continuous(_) => unreachable!(),
    }
}

/// Tallest ping alive at ping time `t`: sent at or before `t` and with
/// `t <= send + 3 eps w`.
fn union_height(run: &DiscreteRun, t: u64, eps: Epsilon) -> u64 {
    let (num, den) = (eps.num() as u128, eps.den() as u128);
    run.pings
        .iter()
        .filter(|p| p.send_time <= t && t as u128 * den <= p.send_time as u128 * den + 3 * num * p.waiting_time as u128)
        .map(|p| p.height)
        .max()
        .unwrap_or(0)
}

fn check_against_scan(run: &DiscreteRun, eps_value: f64) -> Result<(), TestCaseError> {
    let eps = Epsilon::new(eps_value).unwrap();
    let (num, den) = (eps.num() as u128, eps.den() as u128);
    let mut under = 0u128;
    let mut over = 0u128;
    let mut area = 0u128;
    for (s, &h) in run.profile.heights.iter().enumerate() {
        let covering = union_height(run, s as u64 + 1, eps);
        let top = covering as u128 * (den + 3 * num);
        let truth = h as u128 * den;
        if top > truth {
            over += top - truth;
        } else {
            under += truth - top;
        }
        area += h as u128;
        let expected = top as f64 / den as f64;
        let e = run.estimates[s];
        prop_assert!((e - expected).abs() <= 1e-9 * expected.max(1.0), "column {}: {} vs {}", s, e, expected);
    }
    let r = &run.result;
    prop_assert_eq!(r.under_numerator, Some(under));
    prop_assert_eq!(r.over_numerator, Some(over));
    prop_assert_eq!(r.over_bound_holds, Some(over <= 9 * num * area));

    // Each ping certifies that its sender sat at or below its reported
    // height in every column since it arrived.
    let mut violations = 0u64;
    for p in &run.pings {
        let a = p.arrival_time as usize;
        let last = p.send_time as usize - 1;
        if run.profile.heights[a..=last].iter().any(|&h| h < p.height) {
            violations += 1;
        }
    }
    prop_assert_eq!(r.lower_rect_violations, Some(violations));
    prop_assert_eq!(violations, 0);

    let per_packet: u64 = run.ping_counts.iter().map(|&c| c as u64).sum();
    prop_assert_eq!(per_packet, run.pings.len() as u64);
    prop_assert_eq!(r.ping_count, per_packet);
    prop_assert_eq!(run.rectangles.as_ref().map(Vec::len), Some(run.pings.len()));
    Ok(())
}

fn small_trace() -> impl Strategy<Value = Trace<u64>> {
    (1usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec(prop_oneof![3 => Just(0u64), 1 => 1u64..20], n),
            prop::collection::vec(0u64..3, n),
        )
            .prop_map(|(arrivals, tokens)| {
                let mut queued = 0u64;
                let mut events = Vec::new();
                for (t, (&a, &d)) in arrivals.iter().zip(&tokens).enumerate() {
                    queued -= d.min(queued);
                    queued += a;
                    events.push(Event::new(t as u64, a, d));
                }
                let start = arrivals.len() as u64;
                events.extend((0..queued).map(|k| Event::new(start + k, 0, 1)));
                Trace::new(start + queued, events).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn random_schedules_match_the_scan(trace in small_trace(), seed in any::<u64>(), eps in prop::sample::select(vec![0.05, 0.1, 0.15, 0.2])) {
        let run = run_pico(trace, eps, seed);
        check_against_scan(&run, eps)?;
    }
}

#[test]
fn adversarial_instances_match_the_scan() {
    for seed in 0..4 {
        for eps in [0.1, 0.2] {
            let traces = [
                scenario_eg1(60, Eg1Variant::OneStays).unwrap(),
                scenario_eg1(60, Eg1Variant::AllDepart).unwrap(),
                scenario_eg3(7, &[1, 0, 1, 1, 0, 0, 1]).unwrap(),
                bursty_iid(12, 400, seed).unwrap(),
            ];
            for trace in traces {
                check_against_scan(&run_pico(trace, eps, seed), eps).unwrap();
            }
        }
    }
}
