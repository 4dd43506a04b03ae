//! Error, ping-cost and diagnostic statistics of one trial.

use std::collections::{BTreeMap, BinaryHeap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::Rectangle;
use crate::policies::{Epsilon, Ping};
use crate::queue::{ContinuousProfile, HeightProfile, PacketRecord, TimePoint};

/// Everything measured in one seeded trial. Diagnostics that only make
/// sense for some policy/estimator pairs are `None` elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    /// Time-average true height.
    pub opt: f64,
    /// Time-average absolute estimation error.
    pub alg: f64,
    /// `alg / opt`; 0 when both vanish, `None` when only `opt` does.
    pub ratio: Option<f64>,
    pub packets: u64,
    pub ping_count: u64,
    pub pings_per_packet: f64,
    /// Sum of per-packet lags (ping-on-arrival policies in discrete mode).
    pub lag_sum: Option<u64>,
    /// `sum_t (h_t - e_t)` for integer-valued discrete estimators.
    pub signed_error_sum: Option<i64>,
    /// `max_t (e_t - h_t)`, clamped below at 0.
    pub max_overshoot: f64,
    /// Area under the true height profile.
    pub truth_area: f64,
    /// `Area(H \ R)` and `Area(R \ H)` for the rectangle estimator.
    pub under_area: Option<f64>,
    pub over_area: Option<f64>,
    /// The same areas as exact numerators over the denominator of epsilon.
    pub under_numerator: Option<u128>,
    pub over_numerator: Option<u128>,
    /// Whether `Area(R \ H) <= 9 eps Area(H)` held exactly.
    pub over_bound_holds: Option<bool>,
    /// Pings whose certified rectangle `[t - w, t] x [0, h]` pokes out of
    /// the height diagram.
    pub lower_rect_violations: Option<u64>,
    /// Time-average `h_t - c_t` and `|e_t - c_t|`, where `c_t` is the
    /// current height of the last packet that pinged (continuous mode).
    pub arrival_error: Option<f64>,
    pub departure_error: Option<f64>,
}

/// `alg / opt` with the degenerate case made explicit.
pub fn ratio(opt: f64, alg: f64) -> Option<f64> {
    if opt > 0.0 {
        Some(alg / opt)
    } else if alg == 0.0 {
        Some(0.0)
    } else {
        None
    }
}

/// `(1/T) sum_t |h_t - e_t|` over the steps of the profile.
pub fn compute_alg(truth: &HeightProfile, estimates: &[f64]) -> Result<f64> {
    if truth.heights.len() != estimates.len() {
        return Err(Error::LengthMismatch {
            truth: truth.heights.len(),
            estimate: estimates.len(),
        });
    }
    if estimates.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = truth
        .heights
        .iter()
        .zip(estimates)
        .map(|(&h, &e)| (h as f64 - e).abs())
        .sum();
    Ok(total / estimates.len() as f64)
}

/// Exact `(1/T) integral |h - e|` for piecewise-constant truth and
/// estimate. `estimate` lists `(time, value)` change points in time order;
/// the estimate is 0 before the first one.
pub fn compute_alg_continuous(truth: &ContinuousProfile, estimate: &[(f64, f64)]) -> f64 {
    let horizon = truth.horizon;
    if horizon <= 0.0 {
        return 0.0;
    }
    let mut cuts: Vec<f64> = truth
        .segments
        .iter()
        .map(|s| s.0)
        .chain(estimate.iter().map(|s| s.0))
        .filter(|&t| t < horizon)
        .collect();
    cuts.push(0.0);
    cuts.push(horizon);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let value_at = |t: f64| {
        let k = estimate.partition_point(|s| s.0 <= t);
        if k == 0 {
            0.0
        } else {
            estimate[k - 1].1
        }
    };
    let total: f64 = cuts
        .windows(2)
        .map(|w| (w[1] - w[0]) * (truth.height_at(w[0]) as f64 - value_at(w[0])).abs())
        .sum();
    total / horizon
}

/// Per-packet lag: `min(h(a_i), a_j - a_i)` for the first pinging packet
/// `j >= i`, or `h(a_i)` when no later packet pings.
pub fn lag_deltas(records: &[PacketRecord<u64>], pings: &[Ping<u64>]) -> Vec<u64> {
    let mut pinged = vec![false; records.len()];
    for p in pings {
        pinged[p.packet_id as usize] = true;
    }
    let mut next_ping: Option<u64> = None;
    let mut deltas = vec![0; records.len()];
    for (i, record) in records.iter().enumerate().rev() {
        if pinged[i] {
            next_ping = Some(record.arrival_time);
        }
        deltas[i] = match next_ping {
            Some(a) => record.height_at_arrival.min(a - record.arrival_time),
            None => record.height_at_arrival,
        };
    }
    deltas
}

/// Under- and over-estimation areas of the rectangle estimator, as exact
/// numerators over `den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AreaSplit {
    pub under_numerator: u128,
    pub over_numerator: u128,
    pub den: u64,
    /// `Area(H) = sum_t h_t`.
    pub truth_area: u128,
}

impl AreaSplit {
    pub fn under_area(&self) -> f64 {
        self.under_numerator as f64 / self.den as f64
    }

    pub fn over_area(&self) -> f64 {
        self.over_numerator as f64 / self.den as f64
    }

    /// `Area(R \ H) <= 9 eps Area(H)`, compared exactly.
    pub fn over_within(&self, eps: Epsilon) -> bool {
        debug_assert_eq!(eps.den(), self.den);
        self.over_numerator <= 9 * eps.num() as u128 * self.truth_area
    }

    pub(crate) fn add_column(&mut self, height: u64, covering: Option<u64>, eps: Epsilon) {
        let truth = height as u128 * eps.den() as u128;
        let top = covering.unwrap_or(0) as u128 * (eps.den() + 3 * eps.num()) as u128;
        if top > truth {
            self.over_numerator += top - truth;
        } else {
            self.under_numerator += truth - top;
        }
        self.truth_area += height as u128;
    }

    pub(crate) fn empty(eps: Epsilon) -> Self {
        AreaSplit {
            under_numerator: 0,
            over_numerator: 0,
            den: eps.den(),
            truth_area: 0,
        }
    }
}

/// Column-by-column comparison of the true height against the union of
/// rectangles. Column `s` of the profile is compared with the union at
/// ping time `s + 1`, the time at which packets present during column `s`
/// send their pings.
pub fn area_decomposition(truth: &HeightProfile, rects: &[Rectangle], eps: Epsilon) -> AreaSplit {
    let mut order: Vec<&Rectangle> = rects.iter().collect();
    order.sort_by_key(|r| r.start);
    let mut pending = order.into_iter().peekable();
    let mut active: BinaryHeap<(u64, u128)> = BinaryHeap::new();
    let mut split = AreaSplit::empty(eps);
    for (s, &height) in truth.heights.iter().enumerate() {
        let t = s as u64 + 1;
        while let Some(r) = pending.next_if(|r| r.start <= t) {
            active.push((r.height, r.expiry_scaled));
        }
        let cutoff = t as u128 * eps.den() as u128;
        while active.peek().is_some_and(|&(_, expiry)| expiry < cutoff) {
            active.pop();
        }
        split.add_column(height, active.peek().map(|&(h, _)| h), eps);
    }
    split
}

/// Ping volume of a trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PingStats {
    pub count: u64,
    pub per_packet: f64,
    /// Keyed by the power of two at or below each packet's arrival height.
    pub histogram: BTreeMap<u64, HeightBucket>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeightBucket {
    pub packets: u64,
    pub pings: u64,
}

impl HeightBucket {
    pub fn per_packet(&self) -> f64 {
        if self.packets == 0 {
            0.0
        } else {
            self.pings as f64 / self.packets as f64
        }
    }
}

fn height_bucket(h: u64) -> u64 {
    if h == 0 {
        0
    } else {
        1 << h.ilog2()
    }
}

pub fn ping_stats<T: TimePoint>(pings: &[Ping<T>], records: &[PacketRecord<T>]) -> PingStats {
    let mut histogram: BTreeMap<u64, HeightBucket> = BTreeMap::new();
    for r in records {
        histogram.entry(height_bucket(r.height_at_arrival)).or_default().packets += 1;
    }
    for p in pings {
        let h = records[p.packet_id as usize].height_at_arrival;
        histogram.entry(height_bucket(h)).or_default().pings += 1;
    }
    let count = pings.len() as u64;
    let per_packet = if records.is_empty() { 0.0 } else { count as f64 / records.len() as f64 };
    PingStats {
        count,
        per_packet,
        histogram,
    }
}

/// Writes `time,estimate,true_height,abs_error` rows for a discrete trial.
pub fn write_trajectory_csv<W: Write>(truth: &HeightProfile, estimates: &[f64], writer: W) -> Result<()> {
    if truth.heights.len() != estimates.len() {
        return Err(Error::LengthMismatch {
            truth: truth.heights.len(),
            estimate: estimates.len(),
        });
    }
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["time", "estimate", "true_height", "abs_error"])?;
    for (t, (&h, &e)) in truth.heights.iter().zip(estimates).enumerate() {
        out.write_record([
            t.to_string(),
            format!("{e:?}"),
            h.to_string(),
            format!("{:?}", (h as f64 - e).abs()),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::ExtrapolatingState;
    use crate::queue::{replay, Event, Trace};
    use proptest::prelude::*;

    fn burst_of_three() -> Trace<u64> {
        Trace::new(4, vec![Event::new(0, 3, 0), Event::new(1, 0, 1), Event::new(2, 0, 1), Event::new(3, 0, 1)]).unwrap()
    }

    #[test]
    fn alg_examples() {
        let truth = HeightProfile { heights: vec![5; 10] };
        assert_eq!(compute_alg(&truth, &[5.0; 10]).unwrap(), 0.0);
        assert_eq!(compute_alg(&truth, &[3.0; 10]).unwrap(), 2.0);
        assert!(matches!(compute_alg(&truth, &[3.0; 9]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn extrapolation_tracks_a_single_burst() {
        let r = replay(&burst_of_three());
        let mut est = ExtrapolatingState::new();
        est.observe(&Ping::on_arrival(2, 0, 3));
        let e: Vec<f64> = (0..4).map(|t| est.extrapolate(t) as f64).collect();
        assert_eq!(compute_alg(&r.profile, &e).unwrap(), 0.0);
    }

    #[test]
    fn ratio_cases() {
        assert_eq!(ratio(2.0, 1.0), Some(0.5));
        assert_eq!(ratio(0.0, 0.0), Some(0.0));
        assert_eq!(ratio(0.0, 1.0), None);
    }

    #[test]
    fn continuous_alg_integrates_exactly() {
        let truth = ContinuousProfile {
            segments: vec![(0.5, 2), (2.0, 0)],
            horizon: 4.0,
        };
        // |h - e|: [0,0.5) 0, [0.5,1) 2, [1,2) 1, [2,3) 1, [3,4) 0.
        let e = [(1.0, 1.0), (3.0, 0.0)];
        assert!((compute_alg_continuous(&truth, &e) - 3.0 / 4.0).abs() < 1e-12);
        assert_eq!(compute_alg_continuous(&truth, &[(0.5, 2.0), (2.0, 0.0)]), 0.0);
    }

    fn record(id: u64, arrival: u64, h: u64) -> PacketRecord<u64> {
        PacketRecord {
            id,
            arrival_time: arrival,
            departure_time: None,
            height_at_arrival: h,
            height_after_departure: None,
        }
    }

    #[test]
    fn lag_examples() {
        let records = vec![record(0, 0, 100), record(1, 4, 100), record(2, 6, 3)];
        assert_eq!(
            lag_deltas(&records, &[Ping::on_arrival(1, 4, 100)]),
            vec![4, 0, 3]
        );
        let all: Vec<_> = records.iter().map(|r| Ping::on_arrival(r.id, r.arrival_time, r.height_at_arrival)).collect();
        assert_eq!(lag_deltas(&records, &all), vec![0, 0, 0]);
        assert_eq!(lag_deltas(&records, &[]), vec![100, 100, 3]);
    }

    #[test]
    fn area_of_one_rectangle() {
        let eps = Epsilon::new(0.1).unwrap();
        let truth = HeightProfile { heights: vec![20; 14] };
        let rect = Rectangle::from_ping(
            &Ping {
                packet_id: 0,
                send_time: 10,
                height: 20,
                waiting_time: 10,
                arrival_time: 0,
            },
            eps,
        );
        // Columns 9..=12 map to ping times 10..=13, each overshooting by 6.
        let split = area_decomposition(&truth, &[rect], eps);
        assert_eq!(split.over_area(), 24.0);
        assert_eq!(split.under_area(), 20.0 * 10.0);
        assert_eq!(split.truth_area, 280);

        let none = area_decomposition(&truth, &[], eps);
        assert_eq!((none.under_area(), none.over_area()), (280.0, 0.0));
    }

    #[test]
    fn ping_stats_examples() {
        let records = vec![record(0, 0, 1), record(1, 0, 2), record(2, 0, 3), record(3, 1, 5)];
        let empty = ping_stats::<u64>(&[], &[]);
        assert_eq!((empty.count, empty.per_packet), (0, 0.0));
        assert!(empty.histogram.is_empty());
        let stats = ping_stats(&[Ping::on_arrival(2, 0, 3), Ping::on_arrival(3, 1, 5)], &records);
        assert_eq!(stats.count, 2);
        assert_eq!(stats.per_packet, 0.5);
        assert_eq!(stats.histogram[&2], HeightBucket { packets: 2, pings: 1 });
        assert_eq!(stats.histogram[&4], HeightBucket { packets: 1, pings: 1 });
    }

    #[test]
    fn trajectory_csv() {
        let truth = HeightProfile { heights: vec![2, 1] };
        let mut out = Vec::new();
        write_trajectory_csv(&truth, &[2.6, 0.0], &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "time,estimate,true_height,abs_error\n0,2.6,2,0.6000000000000001\n1,0.0,1,1.0\n"
        );
    }

    proptest! {
        #[test]
        fn areas_add_up_to_total_error(
            heights in prop::collection::vec(0u64..30, 1..60),
            pings in prop::collection::vec((1u64..60, 1u64..30, 1u64..40), 0..20),
        ) {
            let eps = Epsilon::from_ratio(1, 10).unwrap();
            let truth = HeightProfile { heights: heights.clone() };
            let rects: Vec<Rectangle> = pings
                .iter()
                .map(|&(t, h, w)| Rectangle::from_ping(&Ping { packet_id: 0, send_time: t, height: h, waiting_time: w, arrival_time: t.saturating_sub(w) }, eps))
                .collect();
            let split = area_decomposition(&truth, &rects, eps);
            let estimates: Vec<f64> = (0..heights.len() as u64)
                .map(|s| rects.iter().filter(|r| r.covers(s + 1, eps)).map(|r| r.height).max()
                    .map_or(0.0, |h| crate::estimators::stretched_height(h, eps)))
                .collect();
            let alg = compute_alg(&truth, &estimates).unwrap() * heights.len() as f64;
            prop_assert!((split.under_area() + split.over_area() - alg).abs() < 1e-6);
        }
    }
}
