//! Arrival and departure processes, including the adversarial instances
//! used by the lower-bound demos.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policies::Epsilon;
use crate::queue::{replay, replay_continuous, AnyTrace, Event, Mode, Trace};
use crate::seeding::{stream_rng, Stream, StreamRng};

/// Largest `h` accepted for [`scenario_eg3`]; its horizon grows as `2^(h+1)`.
pub const EG3_MAX_H: u64 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Eg1Variant {
    /// Every packet leaves at step 1.
    AllDepart,
    /// All but the last leave at step 1; the last leaves at step `h + 1`.
    OneStays,
}

/// A process that drives either side of the queue.
///
/// Rate-type kinds describe one side and can be combined freely with any
/// other kind of the same time mode. The joint kinds (phase instances,
/// `bursty_iid`, the two examples) fix arrivals and departures together and
/// must appear as both the arrival and the departure process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcessSpec {
    /// `rate` arrivals (or tokens) every step.
    ConstantRate { rate: u64 },
    /// Poisson stream of events, each carrying `batch` arrivals (or tokens).
    Poisson {
        rate: f64,
        #[serde(default = "one")]
        batch: u64,
    },
    /// Each step, `size` arrivals (or tokens) with probability `prob`.
    BatchBernoulli { prob: f64, size: u64 },
    /// Arrivals (or tokens) copied from a recorded trace.
    Replay { trace: AnyTrace },
    PhaseLbDepartures { h: u64, epsilon: Epsilon, phases: u64 },
    PhaseLbArrivals { h: u64, epsilon: Epsilon, phases: u64 },
    BurstyIid { h: u64, steps: u64 },
    ScenarioEg1 { h: u64, variant: Eg1Variant },
    /// `choices[i]` picks `2^(i+1)` (0) or `2^(i+2)` (1) for the departure
    /// of the packet at index `i`. When absent the bits are drawn at random.
    ScenarioEg3 {
        h: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        choices: Option<Vec<u8>>,
    },
}

fn one() -> u64 {
    1
}

impl ProcessSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ProcessSpec::ConstantRate { .. } => "constant_rate",
            ProcessSpec::Poisson { .. } => "poisson",
            ProcessSpec::BatchBernoulli { .. } => "batch_bernoulli",
            ProcessSpec::Replay { .. } => "replay",
            ProcessSpec::PhaseLbDepartures { .. } => "phase_lb_departures",
            ProcessSpec::PhaseLbArrivals { .. } => "phase_lb_arrivals",
            ProcessSpec::BurstyIid { .. } => "bursty_iid",
            ProcessSpec::ScenarioEg1 { .. } => "scenario_eg1",
            ProcessSpec::ScenarioEg3 { .. } => "scenario_eg3",
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            ProcessSpec::Poisson { .. } => Mode::Continuous,
            ProcessSpec::Replay { trace } => trace.mode(),
            _ => Mode::Discrete,
        }
    }

    pub fn is_joint(&self) -> bool {
        matches!(
            self,
            ProcessSpec::PhaseLbDepartures { .. }
                | ProcessSpec::PhaseLbArrivals { .. }
                | ProcessSpec::BurstyIid { .. }
                | ProcessSpec::ScenarioEg1 { .. }
                | ProcessSpec::ScenarioEg3 { .. }
        )
    }

    /// Checks parameter ranges without generating anything.
    pub fn validate(&self) -> Result<()> {
        match self {
            ProcessSpec::ConstantRate { .. } => Ok(()),
            ProcessSpec::Poisson { rate, batch } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return Err(Error::out_of_range("rate", rate, "positive and finite"));
                }
                if *batch == 0 {
                    return Err(Error::out_of_range("batch", batch, "at least 1"));
                }
                Ok(())
            }
            ProcessSpec::BatchBernoulli { prob, .. } => {
                if !(0.0..=1.0).contains(prob) {
                    return Err(Error::out_of_range("prob", prob, "[0, 1]"));
                }
                Ok(())
            }
            ProcessSpec::Replay { trace } => trace.validate(),
            ProcessSpec::PhaseLbDepartures { h, epsilon, .. } => {
                check_phase_params(*h, *epsilon, 8, "(0, 1/8)")
            }
            ProcessSpec::PhaseLbArrivals { h, epsilon, .. } => {
                check_phase_params(*h, *epsilon, 16, "(0, 1/16)")
            }
            ProcessSpec::BurstyIid { h, .. } => {
                if *h < 2 {
                    return Err(Error::out_of_range("h", h, "at least 2"));
                }
                Ok(())
            }
            ProcessSpec::ScenarioEg1 { h, .. } => {
                if *h == 0 {
                    return Err(Error::out_of_range("h", h, "at least 1"));
                }
                Ok(())
            }
            ProcessSpec::ScenarioEg3 { h, choices } => {
                check_eg3_h(*h)?;
                if let Some(choices) = choices {
                    check_eg3_choices(*h, choices)?;
                }
                Ok(())
            }
        }
    }
}

/// A generated phase instance with its phase boundaries. Only the demos
/// look at the phases; estimators see the trace alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasedTrace {
    pub trace: Trace<u64>,
    pub phases: Vec<Phase>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase {
    pub start: u64,
    /// Packets injected (or removed) at the phase start; also its length.
    pub size: u64,
}

/// Builds the trace produced by an arrival and a departure process.
///
/// Joint processes must be passed as both arguments and ignore `horizon`.
/// Otherwise arrivals are taken on `[0, horizon)` and, after the horizon,
/// departures continue (unit tokens per step in discrete mode, the departure
/// process itself in continuous mode) until the queue is empty. The
/// returned trace's horizon is the final departure.
pub fn generate(
    arrival: &ProcessSpec,
    departure: &ProcessSpec,
    horizon: Option<u64>,
    seed: u64,
) -> Result<AnyTrace> {
    check_combination(arrival, departure, horizon)?;
    if arrival.is_joint() {
        return generate_joint(arrival, seed).map(AnyTrace::Discrete);
    }
    if let (ProcessSpec::Replay { trace: a }, ProcessSpec::Replay { trace: d }) = (arrival, departure)
    {
        if a == d && horizon.is_none() {
            return Ok(a.clone());
        }
    }
    let horizon = match (horizon, arrival) {
        (Some(h), _) => h,
        (None, ProcessSpec::Replay { trace }) => replay_horizon(trace),
        (None, _) => unreachable!("checked by check_combination"),
    };
    match arrival.mode() {
        Mode::Discrete => generate_discrete(arrival, departure, horizon, seed).map(AnyTrace::Discrete),
        Mode::Continuous => {
            generate_continuous(arrival, departure, horizon as f64, seed).map(AnyTrace::Continuous)
        }
    }
}

/// Checks that two processes can drive one queue, without generating.
pub fn check_combination(arrival: &ProcessSpec, departure: &ProcessSpec, horizon: Option<u64>) -> Result<()> {
    arrival.validate()?;
    departure.validate()?;
    if arrival.mode() != departure.mode() {
        return Err(Error::ModeMismatch);
    }
    if arrival.is_joint() || departure.is_joint() {
        if arrival != departure {
            return Err(Error::IncompatibleProcesses(format!(
                "{} must be used as both the arrival and the departure process",
                if arrival.is_joint() { arrival.name() } else { departure.name() }
            )));
        }
        return Ok(());
    }
    if horizon.is_none() && !matches!(arrival, ProcessSpec::Replay { .. }) {
        return Err(Error::IncompatibleProcesses(format!(
            "a horizon is required for {} arrivals",
            arrival.name()
        )));
    }
    Ok(())
}

fn replay_horizon(trace: &AnyTrace) -> u64 {
    match trace {
        AnyTrace::Discrete(t) => t.horizon,
        AnyTrace::Continuous(t) => t.horizon.ceil() as u64,
    }
}

fn generate_joint(spec: &ProcessSpec, seed: u64) -> Result<Trace<u64>> {
    match spec {
        ProcessSpec::PhaseLbDepartures { h, epsilon, phases } => {
            Ok(phase_lb_departures(*h, *epsilon, *phases, seed)?.trace)
        }
        ProcessSpec::PhaseLbArrivals { h, epsilon, phases } => {
            Ok(phase_lb_arrivals(*h, *epsilon, *phases, seed)?.trace)
        }
        ProcessSpec::BurstyIid { h, steps } => bursty_iid(*h, *steps, seed),
        ProcessSpec::ScenarioEg1 { h, variant } => scenario_eg1(*h, *variant),
        ProcessSpec::ScenarioEg3 { h, choices } => match choices {
            Some(choices) => scenario_eg3(*h, choices),
            None => {
                check_eg3_h(*h)?;
                let mut rng = stream_rng(seed, Stream::Instance);
                let choices: Vec<u8> = (0..*h).map(|_| rng.random_range(0..=1)).collect();
                scenario_eg3(*h, &choices)
            }
        },
        _ => unreachable!("not a joint process"),
    }
}

/// Per-step counts of one side of the queue over `[0, horizon)`.
fn discrete_side(spec: &ProcessSpec, horizon: u64, rng: &mut StreamRng, arrivals: bool) -> Vec<u64> {
    let n = horizon as usize;
    match spec {
        ProcessSpec::ConstantRate { rate } => vec![*rate; n],
        ProcessSpec::BatchBernoulli { prob, size } => (0..n)
            .map(|_| if rng.random_bool(*prob) { *size } else { 0 })
            .collect(),
        ProcessSpec::Replay {
            trace: AnyTrace::Discrete(trace),
        } => {
            let mut counts = vec![0; n];
            for e in trace.events.iter().filter(|e| e.time < horizon) {
                counts[e.time as usize] += if arrivals { e.arrivals } else { e.departure_tokens };
            }
            counts
        }
        _ => unreachable!("checked by the mode test"),
    }
}

fn generate_discrete(
    arrival: &ProcessSpec,
    departure: &ProcessSpec,
    horizon: u64,
    seed: u64,
) -> Result<Trace<u64>> {
    let arrivals = discrete_side(arrival, horizon, &mut stream_rng(seed, Stream::Arrivals), true);
    let tokens = discrete_side(departure, horizon, &mut stream_rng(seed, Stream::Departures), false);
    let mut events: Vec<Event> = arrivals
        .iter()
        .zip(&tokens)
        .enumerate()
        .filter(|(_, (&a, &d))| a > 0 || d > 0)
        .map(|(t, (&a, &d))| Event::new(t as u64, a, d))
        .collect();
    let undrained = replay(&Trace {
        horizon,
        events: events.clone(),
    })
    .records
    .iter()
    .filter(|r| r.departure_time.is_none())
    .count() as u64;
    let end = if undrained == 0 { horizon } else { horizon + undrained - 1 };
    events.extend((horizon..horizon + undrained).map(|t| Event::new(t, 0, 1)));
    Trace::new(end, events)
}

/// Event times of one continuous side on `[0, horizon)`, plus the sampler
/// state needed to keep going past the horizon.
struct PoissonStream {
    gap: Exp<f64>,
    batch: u64,
    next: f64,
    rng: StreamRng,
}

impl PoissonStream {
    fn new(rate: f64, batch: u64, mut rng: StreamRng) -> Result<Self> {
        let gap = Exp::new(rate).map_err(|_| Error::out_of_range("rate", rate, "positive and finite"))?;
        let next = gap.sample(&mut rng);
        Ok(PoissonStream { gap, batch, next, rng })
    }

    fn pop(&mut self) -> (f64, u64) {
        let at = self.next;
        self.next += self.gap.sample(&mut self.rng);
        (at, self.batch)
    }
}

/// Events of one side before the horizon, plus the stream that continues
/// past it when the side is Poisson.
type SideEvents = (Vec<(f64, u64)>, Option<PoissonStream>);

fn continuous_side(
    spec: &ProcessSpec,
    horizon: f64,
    seed_rng: StreamRng,
    arrivals: bool,
) -> Result<SideEvents> {
    match spec {
        ProcessSpec::Poisson { rate, batch } => {
            let mut stream = PoissonStream::new(*rate, *batch, seed_rng)?;
            let mut out = Vec::new();
            while stream.next < horizon {
                out.push(stream.pop());
            }
            Ok((out, Some(stream)))
        }
        ProcessSpec::Replay {
            trace: AnyTrace::Continuous(trace),
        } => Ok((
            trace
                .events
                .iter()
                .filter(|e| e.time < horizon)
                .map(|e| (e.time, if arrivals { e.arrivals } else { e.departure_tokens }))
                .filter(|&(_, n)| n > 0)
                .collect(),
            None,
        )),
        _ => unreachable!("checked by the mode test"),
    }
}

fn merge_continuous(arrivals: &[(f64, u64)], tokens: &[(f64, u64)]) -> Vec<Event<f64>> {
    let mut events: Vec<Event<f64>> = Vec::with_capacity(arrivals.len() + tokens.len());
    let (mut i, mut j) = (0, 0);
    while i < arrivals.len() || j < tokens.len() {
        let take_arrival = j == tokens.len() || (i < arrivals.len() && arrivals[i].0 <= tokens[j].0);
        let (t, a, d) = if take_arrival {
            i += 1;
            (arrivals[i - 1].0, arrivals[i - 1].1, 0)
        } else {
            j += 1;
            (tokens[j - 1].0, 0, tokens[j - 1].1)
        };
        match events.last_mut() {
            Some(last) if last.time == t => {
                last.arrivals += a;
                last.departure_tokens += d;
            }
            _ => events.push(Event::new(t, a, d)),
        }
    }
    events
}

fn generate_continuous(
    arrival: &ProcessSpec,
    departure: &ProcessSpec,
    horizon: f64,
    seed: u64,
) -> Result<Trace<f64>> {
    let (arrivals, _) = continuous_side(arrival, horizon, stream_rng(seed, Stream::Arrivals), true)?;
    let (tokens, stream) =
        continuous_side(departure, horizon, stream_rng(seed, Stream::Departures), false)?;
    let mut events = merge_continuous(&arrivals, &tokens);
    let mut undrained = replay_continuous(&Trace {
        horizon,
        events: events.clone(),
    })
    .records
    .iter()
    .filter(|r| r.departure_time.is_none())
    .count() as u64;
    let mut end = horizon;
    match stream {
        Some(mut stream) => {
            while undrained > 0 {
                let (t, n) = stream.pop();
                events.push(Event::new(t, 0, n));
                undrained = undrained.saturating_sub(n);
                end = t;
            }
        }
        None => {
            for k in 0..undrained {
                end = horizon + k as f64;
                events.push(Event::new(end, 0, 1));
            }
        }
    }
    Trace::new(end, events)
}

fn check_phase_params(h: u64, eps: Epsilon, inverse_bound: u64, constraint: &'static str) -> Result<()> {
    if inverse_bound * eps.num() >= eps.den() {
        return Err(Error::out_of_range("epsilon", eps.value(), constraint));
    }
    if (h as u128) * (eps.num() as u128) < eps.den() as u128 {
        return Err(Error::out_of_range("h", h, "at least 1/epsilon"));
    }
    Ok(())
}

/// `floor(8 eps h)`, computed exactly.
pub fn phase_size_cap(h: u64, eps: Epsilon) -> u64 {
    (8 * h as u128 * eps.num() as u128 / eps.den() as u128) as u64
}

fn draw_phase_sizes(h: u64, eps: Epsilon, phases: u64, seed: u64) -> Vec<u64> {
    let cap = phase_size_cap(h, eps);
    let mut rng = stream_rng(seed, Stream::Instance);
    (0..phases).map(|_| rng.random_range(0..=cap)).collect()
}

/// Burst of `h` packets, then `phases` phases. Phase `i` injects `H_i`
/// packets, drawn uniformly from `{0, ..., floor(8 eps h)}`, and lasts `H_i`
/// steps during which one packet leaves per step. A final unit-rate drain
/// empties the queue.
pub fn phase_lb_departures(h: u64, eps: Epsilon, phases: u64, seed: u64) -> Result<PhasedTrace> {
    check_phase_params(h, eps, 8, "(0, 1/8)")?;
    departure_phases_from_sizes(h, &draw_phase_sizes(h, eps, phases, seed))
}

/// [`phase_lb_departures`] with the phase sizes given explicitly.
pub fn departure_phases_from_sizes(h: u64, sizes: &[u64]) -> Result<PhasedTrace> {
    if h == 0 {
        return Err(Error::out_of_range("h", h, "at least 1"));
    }
    let total: u64 = sizes.iter().sum();
    let horizon = total + h;
    let mut arrivals = vec![0u64; horizon as usize + 1];
    arrivals[0] = h;
    let mut phases = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &size in sizes {
        arrivals[start as usize] += size;
        phases.push(Phase { start, size });
        start += size;
    }
    let events = arrivals
        .iter()
        .enumerate()
        .map(|(t, &a)| Event::new(t as u64, a, u64::from(t > 0)))
        .filter(|e| e.arrivals > 0 || e.departure_tokens > 0)
        .collect();
    Ok(PhasedTrace {
        trace: Trace::new(horizon, events)?,
        phases,
    })
}

/// Burst of `h` packets, then `phases` phases. Phase `i` removes `H_i`
/// packets at once and then admits one packet per step until the queue is
/// back at `h`. A final unit-rate drain empties the queue.
pub fn phase_lb_arrivals(h: u64, eps: Epsilon, phases: u64, seed: u64) -> Result<PhasedTrace> {
    check_phase_params(h, eps, 16, "(0, 1/16)")?;
    arrival_phases_from_sizes(h, &draw_phase_sizes(h, eps, phases, seed))
}

/// [`phase_lb_arrivals`] with the phase sizes given explicitly.
pub fn arrival_phases_from_sizes(h: u64, sizes: &[u64]) -> Result<PhasedTrace> {
    if h == 0 {
        return Err(Error::out_of_range("h", h, "at least 1"));
    }
    if let Some(&too_big) = sizes.iter().find(|&&s| s > h) {
        return Err(Error::out_of_range("phase size", too_big, "at most h"));
    }
    let mut events = vec![Event::new(0, h, 0)];
    let mut phases = Vec::with_capacity(sizes.len());
    let mut start = 1;
    for &size in sizes {
        phases.push(Phase { start, size });
        for k in 0..size {
            events.push(Event::new(start + k, 1, if k == 0 { size } else { 0 }));
        }
        start += size;
    }
    let horizon = start + h - 1;
    events.extend((start..=horizon).map(|t| Event::new(t, 0, 1)));
    Ok(PhasedTrace {
        trace: Trace::new(horizon, events)?,
        phases,
    })
}

/// Each step a departure burst of `h` with probability 2/3, if at least `h`
/// packets are queued, then an arrival burst of `h` with probability 1/3.
/// After `steps` steps the queue drains at unit rate.
pub fn bursty_iid(h: u64, steps: u64, seed: u64) -> Result<Trace<u64>> {
    if h < 2 {
        return Err(Error::out_of_range("h", h, "at least 2"));
    }
    let mut rng = stream_rng(seed, Stream::Instance);
    let mut height = 0u64;
    let mut events = Vec::new();
    for t in 0..steps {
        let depart = rng.random_bool(2.0 / 3.0) && height >= h;
        let arrive = rng.random_bool(1.0 / 3.0);
        if depart {
            height -= h;
        }
        if arrive {
            height += h;
        }
        if depart || arrive {
            events.push(Event::new(t, if arrive { h } else { 0 }, if depart { h } else { 0 }));
        }
    }
    let drain_start = steps.max(1);
    events.extend((drain_start..drain_start + height).map(|t| Event::new(t, 0, 1)));
    let horizon = if height == 0 { steps } else { drain_start + height - 1 };
    Trace::new(horizon, events)
}

/// `h` packets arrive at step 0; see [`Eg1Variant`] for how they leave.
pub fn scenario_eg1(h: u64, variant: Eg1Variant) -> Result<Trace<u64>> {
    if h == 0 {
        return Err(Error::out_of_range("h", h, "at least 1"));
    }
    let events = match variant {
        Eg1Variant::AllDepart => vec![Event::new(0, h, 0), Event::new(1, 0, h)],
        Eg1Variant::OneStays if h == 1 => vec![Event::new(0, 1, 0), Event::new(2, 0, 1)],
        Eg1Variant::OneStays => vec![
            Event::new(0, h, 0),
            Event::new(1, 0, h - 1),
            Event::new(h + 1, 0, 1),
        ],
    };
    let horizon = events.last().map_or(0, |e| e.time);
    Trace::new(horizon, events)
}

fn check_eg3_h(h: u64) -> Result<()> {
    if h == 0 || h > EG3_MAX_H {
        return Err(Error::out_of_range("h", h, "between 1 and 24"));
    }
    Ok(())
}

fn check_eg3_choices(h: u64, choices: &[u8]) -> Result<()> {
    if choices.len() as u64 != h {
        return Err(Error::InfeasibleSchedule(format!(
            "{} departure choices given for {h} packets",
            choices.len()
        )));
    }
    if let Some(bad) = choices.iter().find(|&&c| c > 1) {
        return Err(Error::InfeasibleSchedule(format!("choice {bad} is not a bit")));
    }
    Ok(())
}

/// `h` packets arrive at step 0 and the `i`-th (counting from 1) departs at
/// `2^i` or `2^(i+1)` according to `choices`.
pub fn scenario_eg3(h: u64, choices: &[u8]) -> Result<Trace<u64>> {
    check_eg3_h(h)?;
    check_eg3_choices(h, choices)?;
    let departures: Vec<u64> = choices
        .iter()
        .enumerate()
        .map(|(i, &c)| 1u64 << (i as u32 + 1 + c as u32))
        .collect();
    eg3_from_departures(&departures)
}

/// `departures.len()` packets arrive at step 0 and leave at the given times.
pub fn eg3_from_departures(departures: &[u64]) -> Result<Trace<u64>> {
    if let Some(w) = departures.windows(2).find(|w| w[1] < w[0]) {
        return Err(Error::InfeasibleSchedule(format!(
            "departure at {} follows a later departure at {}",
            w[1], w[0]
        )));
    }
    if departures.first() == Some(&0) {
        return Err(Error::InfeasibleSchedule("departure at step 0".into()));
    }
    let mut events = vec![Event::new(0, departures.len() as u64, 0)];
    for &d in departures {
        match events.last_mut() {
            Some(last) if last.time == d => last.departure_tokens += 1,
            _ => events.push(Event::new(d, 0, 1)),
        }
    }
    let horizon = departures.last().copied().unwrap_or(0);
    Trace::new(horizon, events)
}
