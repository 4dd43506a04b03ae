use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::trace::{TimePoint, Trace};
use crate::error::{Error, Result};

/// One packet's lifecycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketRecord<T = u64> {
    /// Arrival order, starting at 0.
    pub id: u64,
    pub arrival_time: T,
    pub departure_time: Option<T>,
    /// Queue length just after this packet joined, counting itself and any
    /// earlier packet of the same batch.
    pub height_at_arrival: u64,
    /// Queue length just after this packet left.
    pub height_after_departure: Option<u64>,
}

impl<T: TimePoint> PacketRecord<T> {
    pub fn delay(&self) -> Option<f64> {
        self.departure_time
            .map(|d| d.as_f64() - self.arrival_time.as_f64())
    }
}

impl PacketRecord<u64> {
    pub fn delay_steps(&self) -> Option<u64> {
        self.departure_time.map(|d| d - self.arrival_time)
    }
}

/// True queue length `h_t` for each step `t` in `[0, T)`.
///
/// `h_t` counts the packets with `a_i <= t < d_i`: the state after step
/// `t`'s departures and arrivals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeightProfile {
    pub heights: Vec<u64>,
}

impl HeightProfile {
    pub fn horizon(&self) -> u64 {
        self.heights.len() as u64
    }

    /// Area of the height diagram, `sum_t h_t`.
    pub fn area(&self) -> u128 {
        self.heights.iter().map(|&h| h as u128).sum()
    }

    pub fn max(&self) -> u64 {
        self.heights.iter().copied().max().unwrap_or(0)
    }
}

/// Piecewise-constant queue length over `[0, horizon)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousProfile {
    /// `(start, height)` pairs with increasing starts; each height holds
    /// until the next start (or the horizon).
    pub segments: Vec<(f64, u64)>,
    pub horizon: f64,
}

impl ContinuousProfile {
    /// `integral_0^T h(t) dt`, summed segment by segment.
    pub fn area(&self) -> f64 {
        let mut total = 0.0;
        for (i, &(start, height)) in self.segments.iter().enumerate() {
            let end = self
                .segments
                .get(i + 1)
                .map_or(self.horizon, |next| next.0)
                .min(self.horizon);
            if end > start {
                total += (end - start) * height as f64;
            }
        }
        total
    }

    pub fn height_at(&self, t: f64) -> u64 {
        match self
            .segments
            .partition_point(|&(start, _)| start <= t)
            .checked_sub(1)
        {
            Some(i) => self.segments[i].1,
            None => 0,
        }
    }
}

/// Output of replaying a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replayed<P, T = u64> {
    pub profile: P,
    pub records: Vec<PacketRecord<T>>,
}

/// FIFO queue state shared by both time modes.
#[derive(Debug, Clone)]
pub struct QueueState<T = u64> {
    pub now: T,
    pub fifo: VecDeque<u64>,
    pub records: Vec<PacketRecord<T>>,
}

impl<T: TimePoint> QueueState<T> {
    pub fn new() -> Self {
        QueueState {
            now: T::ZERO,
            fifo: VecDeque::new(),
            records: Vec::new(),
        }
    }

    pub fn height(&self) -> u64 {
        self.fifo.len() as u64
    }

    /// Position of `id` counted from the head, the head being 1.
    pub fn position(&self, id: u64) -> Option<u64> {
        let head = *self.fifo.front()?;
        (id >= head && id - head < self.fifo.len() as u64).then(|| id - head + 1)
    }

    /// Serves up to `tokens` packets at time `now`. Only packets that arrived
    /// strictly earlier are eligible; unused tokens are dropped.
    pub fn depart(&mut self, now: T, tokens: u64) -> Vec<u64> {
        self.now = now;
        let mut served = Vec::new();
        for _ in 0..tokens {
            let Some(&head) = self.fifo.front() else {
                break;
            };
            let record = &self.records[head as usize];
            if record.arrival_time >= now {
                break;
            }
            self.fifo.pop_front();
            let after = self.fifo.len() as u64;
            let record = &mut self.records[head as usize];
            record.departure_time = Some(now);
            record.height_after_departure = Some(after);
            served.push(head);
        }
        served
    }

    /// Appends `count` packets at the tail; returns the new ids in order.
    pub fn arrive(&mut self, now: T, count: u64) -> std::ops::Range<u64> {
        self.now = now;
        let first = self.records.len() as u64;
        for id in first..first + count {
            self.fifo.push_back(id);
            self.records.push(PacketRecord {
                id,
                arrival_time: now,
                departure_time: None,
                height_at_arrival: self.fifo.len() as u64,
                height_after_departure: None,
            });
        }
        first..first + count
    }
}

impl<T: TimePoint> Default for QueueState<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Replays a discrete trace step by step.
///
/// Within a step, departure tokens serve packets that arrived in earlier
/// steps, then the step's arrivals join the tail, then `h_t` is read. Events
/// at the horizon itself are applied (so final departures are recorded) but
/// no height is recorded for `t = T`.
pub fn replay(trace: &Trace<u64>) -> Replayed<HeightProfile> {
    let horizon = trace.horizon;
    let mut queue = QueueState::<u64>::new();
    let mut heights = Vec::with_capacity(horizon as usize);
    let mut events = trace.events.iter().peekable();
    for t in 0..=horizon {
        let (mut arrivals, mut tokens) = (0u64, 0u64);
        while let Some(event) = events.next_if(|e| e.time == t) {
            arrivals += event.arrivals;
            tokens += event.departure_tokens;
        }
        queue.depart(t, tokens);
        queue.arrive(t, arrivals);
        if t < horizon {
            heights.push(queue.height());
        }
    }
    Replayed {
        profile: HeightProfile { heights },
        records: queue.records,
    }
}

/// Event-driven replay of a continuous trace.
pub fn replay_continuous(trace: &Trace<f64>) -> Replayed<ContinuousProfile, f64> {
    let mut queue = QueueState::<f64>::new();
    let mut segments: Vec<(f64, u64)> = Vec::new();
    let mut i = 0;
    while i < trace.events.len() {
        let t = trace.events[i].time;
        let (mut arrivals, mut tokens) = (0u64, 0u64);
        while i < trace.events.len() && trace.events[i].time == t {
            arrivals += trace.events[i].arrivals;
            tokens += trace.events[i].departure_tokens;
            i += 1;
        }
        queue.depart(t, tokens);
        queue.arrive(t, arrivals);
        push_segment(&mut segments, t, queue.height());
    }
    Replayed {
        profile: ContinuousProfile {
            segments,
            horizon: trace.horizon,
        },
        records: queue.records,
    }
}

pub(crate) fn push_segment(segments: &mut Vec<(f64, u64)>, t: f64, height: u64) {
    match segments.last_mut() {
        Some(last) if last.0 == t => last.1 = height,
        Some(last) if last.1 == height => {}
        None if height == 0 => {}
        _ => segments.push((t, height)),
    }
}

/// Time-average height `(1/T) sum_t h_t`, cross-checked against the
/// time-average delay `(1/T) sum_i (d_i - a_i)`.
pub fn compute_opt(profile: &HeightProfile, records: &[PacketRecord<u64>]) -> Result<f64> {
    let horizon = profile.horizon();
    let mut delay: u128 = 0;
    let mut undeparted = 0;
    for record in records {
        match record.departure_time {
            Some(d) if d <= horizon => delay += (d - record.arrival_time) as u128,
            _ => undeparted += 1,
        }
    }
    if undeparted > 0 {
        return Err(Error::NotDrained { undeparted });
    }
    let area = profile.area();
    if area != delay {
        return Err(Error::InconsistentProfile {
            area: area.to_string(),
            delay: delay.to_string(),
        });
    }
    if horizon == 0 {
        return Ok(0.0);
    }
    Ok(area as f64 / horizon as f64)
}

/// Continuous counterpart of [`compute_opt`]; the two integrals must agree
/// to a relative `1e-9`.
pub fn compute_opt_continuous(
    profile: &ContinuousProfile,
    records: &[PacketRecord<f64>],
) -> Result<f64> {
    let mut delay = 0.0;
    let mut undeparted = 0;
    for record in records {
        match record.departure_time {
            Some(d) if d <= profile.horizon => delay += d - record.arrival_time,
            _ => undeparted += 1,
        }
    }
    if undeparted > 0 {
        return Err(Error::NotDrained { undeparted });
    }
    let area = profile.area();
    if (area - delay).abs() > 1e-9 * area.abs().max(1.0) {
        return Err(Error::InconsistentProfile {
            area: area.to_string(),
            delay: delay.to_string(),
        });
    }
    if profile.horizon <= 0.0 {
        return Ok(0.0);
    }
    Ok(area / profile.horizon)
}

/// Per-level transition counts: `level -> (ups, downs)` where an up is an
/// arrival moving the queue from `level` to `level + 1` and a down is a
/// departure moving it from `level + 1` to `level`.
pub fn transition_counts<T: TimePoint>(records: &[PacketRecord<T>]) -> BTreeMap<u64, (u64, u64)> {
    let mut counts: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    for record in records {
        counts.entry(record.height_at_arrival - 1).or_default().0 += 1;
        if let Some(after) = record.height_after_departure {
            counts.entry(after).or_default().1 += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::queue::trace::Event;

    fn unit_departures(arrivals: &[(u64, u64)], horizon: u64) -> Trace<u64> {
        let mut events = Vec::new();
        for t in 0..=horizon {
            let a = arrivals
                .iter()
                .filter(|(at, _)| *at == t)
                .map(|(_, n)| n)
                .sum();
            events.push(Event::new(t, a, 1));
        }
        Trace::new(horizon, events).unwrap()
    }

    #[test]
    fn three_packet_burst_with_unit_departures() {
        let trace = unit_departures(&[(0, 3)], 4);
        let out = replay(&trace);
        assert_eq!(out.profile.heights, vec![3, 2, 1, 0]);
        let delays: Vec<_> = out.records.iter().map(|r| r.delay_steps().unwrap()).collect();
        assert_eq!(delays, vec![1, 2, 3]);
        let heights: Vec<_> = out.records.iter().map(|r| r.height_at_arrival).collect();
        assert_eq!(heights, vec![1, 2, 3]);
        assert_eq!(compute_opt(&out.profile, &out.records).unwrap(), 1.5);
    }

    #[test]
    fn empty_trace() {
        let out = replay(&Trace::new(6, vec![]).unwrap());
        assert_eq!(out.profile.heights, vec![0; 6]);
        assert!(out.records.is_empty());
        assert_eq!(compute_opt(&out.profile, &out.records).unwrap(), 0.0);
        let out = replay(&Trace::empty());
        assert_eq!(compute_opt(&out.profile, &out.records).unwrap(), 0.0);
    }

    #[test]
    fn single_late_token() {
        let trace = Trace::new(10, vec![Event::new(0, 1, 0), Event::new(5, 0, 1)]).unwrap();
        let out = replay(&trace);
        assert_eq!(&out.profile.heights[..6], &[1, 1, 1, 1, 1, 0]);
        assert_eq!(out.records[0].delay_steps(), Some(5));
        assert_eq!(compute_opt(&out.profile, &out.records).unwrap(), 0.5);
    }

    #[test]
    fn tokens_on_empty_queue_do_not_bank() {
        let trace = Trace::new(
            5,
            vec![Event::new(0, 0, 7), Event::new(1, 2, 0), Event::new(3, 0, 1), Event::new(4, 0, 1)],
        )
        .unwrap();
        let out = replay(&trace);
        assert_eq!(out.profile.heights, vec![0, 2, 2, 1, 0]);
    }

    #[test]
    fn same_step_arrivals_cannot_leave_immediately() {
        let trace = Trace::new(2, vec![Event::new(0, 1, 0), Event::new(1, 1, 5), Event::new(2, 0, 1)])
            .unwrap();
        let out = replay(&trace);
        assert_eq!(out.profile.heights, vec![1, 1]);
        assert_eq!(out.records[0].departure_time, Some(1));
        assert_eq!(out.records[1].departure_time, Some(2));
        assert_eq!(out.records[1].height_at_arrival, 1);
    }

    #[test]
    fn undrained_trace_is_reported() {
        let trace = Trace::new(3, vec![Event::new(0, 2, 0), Event::new(1, 0, 1)]).unwrap();
        let out = replay(&trace);
        assert!(matches!(
            compute_opt(&out.profile, &out.records),
            Err(Error::NotDrained { undeparted: 1 })
        ));
    }

    #[test]
    fn doctored_profile_is_inconsistent() {
        let trace = unit_departures(&[(0, 3)], 4);
        let mut out = replay(&trace);
        out.profile.heights[1] += 1;
        assert!(matches!(
            compute_opt(&out.profile, &out.records),
            Err(Error::InconsistentProfile { .. })
        ));
    }

    #[test]
    fn continuous_replay_integrates_segments() {
        let trace = Trace::new(
            4.0,
            vec![Event::new(0.5, 2, 0), Event::new(1.5, 0, 1), Event::new(4.0, 0, 1)],
        )
        .unwrap();
        let out = replay_continuous(&trace);
        assert_eq!(out.profile.segments, vec![(0.5, 2), (1.5, 1), (4.0, 0)]);
        assert_eq!(out.profile.height_at(1.0), 2);
        assert_eq!(out.profile.height_at(0.1), 0);
        // 2 * 1.0 + 1 * 2.5 = 4.5 = delays 1.0 + 3.5
        assert_eq!(out.profile.area(), 4.5);
        assert_eq!(compute_opt_continuous(&out.profile, &out.records).unwrap(), 4.5 / 4.0);
    }

    #[test]
    fn positions_are_inclusive() {
        let mut q = QueueState::<u64>::new();
        q.arrive(0, 3);
        assert_eq!(q.position(0), Some(1));
        assert_eq!(q.position(2), Some(3));
        q.depart(1, 1);
        assert_eq!(q.position(0), None);
        assert_eq!(q.position(2), Some(2));
        assert_eq!(q.position(3), None);
    }
}
