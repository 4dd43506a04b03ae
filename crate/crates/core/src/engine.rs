//! Seeded trials, parallel experiments and their aggregation.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimators::{
    stretched_height, EstimatorKind, ExtrapolatingState, HoldState, PicoState, PoissonTickState,
    Rectangle,
};
use crate::metrics::{compute_alg, lag_deltas, ratio, AreaSplit, TrialResult};
use crate::policies::{decide, Ping, PolicyKind, PolicyParams};
use crate::processes::{check_combination, generate, ProcessSpec};
use crate::queue::{
    compute_opt, compute_opt_continuous, push_segment, AnyTrace, ContinuousProfile, HeightProfile,
    Mode, PacketRecord, QueueState, Trace,
};
use crate::seeding::{stream_rng, Stream, StreamRng, GENERATOR, SEED_SCHEME};

/// A complete monitoring setup: how the queue evolves and how packets and
/// server behave.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub arrival: ProcessSpec,
    pub departure: ProcessSpec,
    pub policy: PolicyParams,
    pub estimator: EstimatorKind,
    /// Required for rate-type arrivals; joint processes and replays bring
    /// their own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
}

impl Scenario {
    pub fn mode(&self) -> Mode {
        self.arrival.mode()
    }

    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        check_combination(&self.arrival, &self.departure, self.horizon)?;
        check_pairing(&self.policy, &self.estimator, self.mode())
    }

    /// The trace of trial `seed`.
    pub fn trace(&self, seed: u64) -> Result<AnyTrace> {
        generate(&self.arrival, &self.departure, self.horizon, seed)
    }
}

/// Which estimators each policy may be paired with, per time mode.
pub fn check_pairing(policy: &PolicyParams, estimator: &EstimatorKind, mode: Mode) -> Result<()> {
    use EstimatorKind as E;
    use PolicyKind as P;
    let ok = match (policy.kind, estimator, mode) {
        (P::Pico, E::Pico, Mode::Discrete) => true,
        (P::Pico, _, _) | (_, E::Pico, _) => false,
        (P::PoaArr, E::Hold, _) => true,
        (P::PoaArr, _, _) => false,
        (P::PoaDep, E::Extrapolating, Mode::Discrete) => true,
        (P::PoaDep, E::PoissonTick { .. }, Mode::Continuous) => true,
        (P::PoaDep, _, _) => false,
        (_, E::Hold, _) => true,
        (_, E::Extrapolating, Mode::Discrete) => true,
        (_, E::PoissonTick { .. }, Mode::Continuous) => true,
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::IncompatibleEstimator {
            policy: policy.kind.name().to_string(),
            estimator: format!("{} ({mode} mode)", estimator.name()),
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions {
    /// Keep every rectangle the server builds.
    pub keep_rectangles: bool,
    /// Keep continuous-policy pings (ping-on-arrival pings are always kept).
    pub keep_pings: bool,
}

/// Everything produced by a discrete trial.
#[derive(Debug, Clone)]
pub struct DiscreteRun {
    pub profile: HeightProfile,
    pub records: Vec<PacketRecord<u64>>,
    /// `e_t` for every step of the profile.
    pub estimates: Vec<f64>,
    pub pings: Vec<Ping<u64>>,
    /// Number of pings sent by each packet.
    pub ping_counts: Vec<u32>,
    pub rectangles: Option<Vec<Rectangle>>,
    pub result: TrialResult,
}

/// Everything produced by a continuous trial.
#[derive(Debug, Clone)]
pub struct ContinuousRun {
    pub profile: ContinuousProfile,
    pub records: Vec<PacketRecord<f64>>,
    /// Change points `(time, e)` of the estimate, which is 0 before the first.
    pub estimates: Vec<(f64, f64)>,
    pub pings: Vec<Ping<f64>>,
    pub result: TrialResult,
}

#[derive(Debug, Clone)]
pub enum TrialRun {
    Discrete(DiscreteRun),
    Continuous(ContinuousRun),
}

impl TrialRun {
    pub fn result(&self) -> &TrialResult {
        match self {
            TrialRun::Discrete(run) => &run.result,
            TrialRun::Continuous(run) => &run.result,
        }
    }

    pub fn into_result(self) -> TrialResult {
        match self {
            TrialRun::Discrete(run) => run.result,
            TrialRun::Continuous(run) => run.result,
        }
    }
}

/// Simulates packets and server over a fixed trace.
pub fn simulate(
    trace: &AnyTrace,
    policy: &PolicyParams,
    estimator: &EstimatorKind,
    seed: u64,
    options: SimOptions,
) -> Result<TrialRun> {
    policy.validate()?;
    check_pairing(policy, estimator, trace.mode())?;
    match trace {
        AnyTrace::Discrete(t) => {
            simulate_discrete(t, policy, estimator, seed, options).map(TrialRun::Discrete)
        }
        AnyTrace::Continuous(t) => {
            simulate_continuous(t, policy, estimator, seed).map(TrialRun::Continuous)
        }
    }
}

enum DiscreteServer {
    Extrapolating(ExtrapolatingState),
    Hold(HoldState),
    Pico(PicoState),
}

/// Suffix minima of the height profile, for checking that a ping's
/// certified rectangle lies under the profile.
#[derive(Default)]
struct SuffixMin {
    stack: Vec<(u64, u64)>,
}

impl SuffixMin {
    fn push(&mut self, t: u64, h: u64) {
        while self.stack.last().is_some_and(|&(_, m)| m >= h) {
            self.stack.pop();
        }
        self.stack.push((t, h));
    }

    /// Minimum height over steps `since..=` the latest one.
    fn min_since(&self, since: u64) -> u64 {
        let k = self.stack.partition_point(|&(t, _)| t < since);
        self.stack[k].1
    }
}

fn simulate_discrete(
    trace: &Trace<u64>,
    policy: &PolicyParams,
    estimator: &EstimatorKind,
    seed: u64,
    options: SimOptions,
) -> Result<DiscreteRun> {
    let eps = policy.epsilon;
    let rule = policy.rule();
    let mut server = match estimator {
        EstimatorKind::Extrapolating => DiscreteServer::Extrapolating(ExtrapolatingState::new()),
        EstimatorKind::Hold => DiscreteServer::Hold(HoldState::new()),
        EstimatorKind::Pico if options.keep_rectangles => DiscreteServer::Pico(PicoState::with_log(eps)),
        EstimatorKind::Pico => DiscreteServer::Pico(PicoState::new(eps)),
        EstimatorKind::PoissonTick { .. } => unreachable!("rejected by check_pairing"),
    };
    let horizon = trace.horizon;
    let mut queue = QueueState::<u64>::new();
    let mut packet_rngs: VecDeque<StreamRng> = VecDeque::new();
    let mut heights = Vec::with_capacity(horizon as usize);
    let mut estimates = Vec::with_capacity(horizon as usize);
    let mut pings = Vec::new();
    let mut ping_counts: Vec<u32> = Vec::new();
    let mut ping_total = 0u64;
    let mut split = AreaSplit::empty(eps);
    let mut minima = SuffixMin::default();
    let mut violations = 0u64;
    let mut signed_error = 0i64;
    let mut overshoot = 0.0f64;
    let mut events = trace.events.iter().peekable();

    for t in 0..=horizon {
        let (mut arrivals, mut tokens) = (0u64, 0u64);
        while let Some(e) = events.next_if(|e| e.time == t) {
            arrivals += e.arrivals;
            tokens += e.departure_tokens;
        }
        let served = queue.depart(t, tokens).len();
        if let DiscreteServer::Pico(_) = server {
            packet_rngs.drain(..served);
        }
        let arrived = queue.arrive(t, arrivals);
        ping_counts.resize(queue.records.len(), 0);
        if t == horizon {
            break;
        }
        let h = queue.height();
        let estimate = match &mut server {
            DiscreteServer::Pico(state) => {
                packet_rngs.extend(arrived.map(|id| stream_rng(seed, Stream::Packet(id))));
                minima.push(t, h);
                let send = t + 1;
                let head = queue.fifo.front().copied().unwrap_or(0);
                for (index, rng) in packet_rngs.iter_mut().enumerate().rev() {
                    let id = head + index as u64;
                    let position = index as u64 + 1;
                    let arrival = queue.records[id as usize].arrival_time;
                    let waited = send - arrival;
                    let prob = rule.continuous_prob(position, waited).unwrap_or(0.0);
                    if !decide(prob, rng) {
                        continue;
                    }
                    ping_counts[id as usize] += 1;
                    ping_total += 1;
                    if position > minima.min_since(arrival) {
                        violations += 1;
                    }
                    let ping = Ping {
                        packet_id: id,
                        send_time: send,
                        height: position,
                        waiting_time: waited,
                        arrival_time: arrival,
                    };
                    state.insert(&ping);
                    if options.keep_pings {
                        pings.push(ping);
                    }
                }
                let covering = state.covering_height(send);
                split.add_column(h, covering, eps);
                covering.map_or(0.0, |y| stretched_height(y, eps))
            }
            server => {
                for id in arrived {
                    let height = queue.records[id as usize].height_at_arrival;
                    let prob = rule.arrival_prob(height).unwrap_or(0.0);
                    if !decide(prob, &mut stream_rng(seed, Stream::Packet(id))) {
                        continue;
                    }
                    let ping = Ping::on_arrival(id, t, height);
                    ping_counts[id as usize] += 1;
                    ping_total += 1;
                    match server {
                        DiscreteServer::Extrapolating(s) => s.observe(&ping),
                        DiscreteServer::Hold(s) => {
                            s.hold(Some(&ping));
                        }
                        DiscreteServer::Pico(_) => unreachable!(),
                    }
                    pings.push(ping);
                }
                let e = match server {
                    DiscreteServer::Extrapolating(s) => s.extrapolate(t),
                    DiscreteServer::Hold(s) => s.estimate(),
                    DiscreteServer::Pico(_) => unreachable!(),
                };
                signed_error += h as i64 - e as i64;
                e as f64
            }
        };
        overshoot = overshoot.max(estimate - h as f64);
        heights.push(h);
        estimates.push(estimate);
    }

    let profile = HeightProfile { heights };
    let records = queue.records;
    let opt = compute_opt(&profile, &records)?;
    let alg = compute_alg(&profile, &estimates)?;
    let packets = records.len() as u64;
    let is_pico = matches!(server, DiscreteServer::Pico(_));
    let lag_sum = (!is_pico).then(|| lag_deltas(&records, &pings).iter().sum());
    let rectangles = match server {
        DiscreteServer::Pico(state) => state.into_rectangles(),
        _ => None,
    };
    let result = TrialResult {
        seed,
        opt,
        alg,
        ratio: ratio(opt, alg),
        packets,
        ping_count: ping_total,
        pings_per_packet: per_packet(ping_total, packets),
        lag_sum,
        signed_error_sum: (!is_pico).then_some(signed_error),
        max_overshoot: overshoot,
        truth_area: profile.area() as f64,
        under_area: is_pico.then(|| split.under_area()),
        over_area: is_pico.then(|| split.over_area()),
        under_numerator: is_pico.then_some(split.under_numerator),
        over_numerator: is_pico.then_some(split.over_numerator),
        over_bound_holds: is_pico.then(|| split.over_within(eps)),
        lower_rect_violations: is_pico.then_some(violations),
        arrival_error: None,
        departure_error: None,
    };
    Ok(DiscreteRun {
        profile,
        records,
        estimates,
        pings,
        ping_counts,
        rectangles,
        result,
    })
}

fn per_packet(pings: u64, packets: u64) -> f64 {
    if packets == 0 {
        0.0
    } else {
        pings as f64 / packets as f64
    }
}

enum ContinuousServer {
    Hold(HoldState),
    Tick(PoissonTickState),
}

/// Running integrals of the continuous error terms.
#[derive(Default)]
struct Integrals {
    abs_error: f64,
    arrival_error: f64,
    departure_error: f64,
    overshoot: f64,
}

impl Integrals {
    fn add(&mut self, dt: f64, h: u64, e: u64, c: u64) {
        if dt <= 0.0 {
            return;
        }
        let (h, e, c) = (h as f64, e as f64, c as f64);
        self.abs_error += dt * (h - e).abs();
        self.arrival_error += dt * (h - c);
        self.departure_error += dt * (e - c).abs();
        self.overshoot = self.overshoot.max(e - h);
    }
}

fn simulate_continuous(
    trace: &Trace<f64>,
    policy: &PolicyParams,
    estimator: &EstimatorKind,
    seed: u64,
) -> Result<ContinuousRun> {
    let rule = policy.rule();
    let mut server = match estimator {
        EstimatorKind::Hold => ContinuousServer::Hold(HoldState::new()),
        EstimatorKind::PoissonTick { mu } => {
            ContinuousServer::Tick(PoissonTickState::new(*mu, stream_rng(seed, Stream::Server))?)
        }
        _ => unreachable!("rejected by check_pairing"),
    };
    let horizon = trace.horizon;
    let mut queue = QueueState::<f64>::new();
    let mut segments: Vec<(f64, u64)> = Vec::new();
    let mut estimates: Vec<(f64, f64)> = Vec::new();
    let mut pings = Vec::new();
    let mut acc = Integrals::default();
    let mut now = 0.0f64;
    let mut e = 0u64;
    let mut last_pinger: Option<u64> = None;
    let mut i = 0;

    let advance = |to: f64,
                       now: &mut f64,
                       e: &mut u64,
                       h: u64,
                       c: u64,
                       server: &mut ContinuousServer,
                       acc: &mut Integrals,
                       estimates: &mut Vec<(f64, f64)>| {
        if let ContinuousServer::Tick(tick) = server {
            tick.advance_with(to, |at, next| {
                acc.add(at - *now, h, *e, c);
                *now = at;
                if next != *e {
                    *e = next;
                    estimates.push((at, next as f64));
                }
            });
        }
        acc.add(to - *now, h, *e, c);
        *now = to;
    };

    while i < trace.events.len() {
        let t = trace.events[i].time;
        let (mut arrivals, mut tokens) = (0u64, 0u64);
        while i < trace.events.len() && trace.events[i].time == t {
            arrivals += trace.events[i].arrivals;
            tokens += trace.events[i].departure_tokens;
            i += 1;
        }
        let c = last_pinger.and_then(|id| queue.position(id)).unwrap_or(0);
        advance(t, &mut now, &mut e, queue.height(), c, &mut server, &mut acc, &mut estimates);
        queue.depart(t, tokens);
        for id in queue.arrive(t, arrivals) {
            let height = queue.records[id as usize].height_at_arrival;
            let prob = rule.arrival_prob(height).unwrap_or(0.0);
            if !decide(prob, &mut stream_rng(seed, Stream::Packet(id))) {
                continue;
            }
            let ping = Ping::on_arrival(id, t, height);
            match &mut server {
                ContinuousServer::Hold(s) => {
                    s.hold(Some(&ping));
                }
                ContinuousServer::Tick(s) => s.observe(&ping),
            }
            last_pinger = Some(id);
            pings.push(ping);
        }
        let next = match &server {
            ContinuousServer::Hold(s) => s.estimate(),
            ContinuousServer::Tick(s) => s.estimate(),
        };
        if next != e {
            e = next;
            estimates.push((t, e as f64));
        }
        push_segment(&mut segments, t, queue.height());
    }
    let c = last_pinger.and_then(|id| queue.position(id)).unwrap_or(0);
    advance(horizon, &mut now, &mut e, queue.height(), c, &mut server, &mut acc, &mut estimates);

    let profile = ContinuousProfile { segments, horizon };
    let records = queue.records;
    let opt = compute_opt_continuous(&profile, &records)?;
    let scale = |x: f64| if horizon > 0.0 { x / horizon } else { 0.0 };
    let alg = scale(acc.abs_error);
    let packets = records.len() as u64;
    let ping_count = pings.len() as u64;
    let result = TrialResult {
        seed,
        opt,
        alg,
        ratio: ratio(opt, alg),
        packets,
        ping_count,
        pings_per_packet: per_packet(ping_count, packets),
        lag_sum: None,
        signed_error_sum: None,
        max_overshoot: acc.overshoot,
        truth_area: profile.area(),
        under_area: None,
        over_area: None,
        under_numerator: None,
        over_numerator: None,
        over_bound_holds: None,
        lower_rect_violations: None,
        arrival_error: Some(scale(acc.arrival_error)),
        departure_error: Some(scale(acc.departure_error)),
    };
    Ok(ContinuousRun {
        profile,
        records,
        estimates,
        pings,
        result,
    })
}

/// Generates the trace of trial `seed` and simulates it.
pub fn run_trial(scenario: &Scenario, seed: u64) -> Result<TrialResult> {
    run_trial_with(scenario, seed, SimOptions::default()).map(TrialRun::into_result)
}

pub fn run_trial_with(scenario: &Scenario, seed: u64, options: SimOptions) -> Result<TrialRun> {
    scenario.validate()?;
    let trace = scenario.trace(seed)?;
    simulate(&trace, &scenario.policy, &scenario.estimator, seed, options)
}

/// Runs trials with seeds `base_seed + i` for `i` in `0..n_trials`.
pub fn run_experiment(scenario: &Scenario, n_trials: usize, base_seed: u64) -> Result<ExperimentSummary> {
    run_experiment_with_threads(scenario, n_trials, base_seed, None)
}

/// [`run_experiment`] on at most `threads` worker threads.
pub fn run_experiment_with_threads(
    scenario: &Scenario,
    n_trials: usize,
    base_seed: u64,
    threads: Option<usize>,
) -> Result<ExperimentSummary> {
    if n_trials == 0 {
        return Err(Error::out_of_range("trials", 0, "at least 1"));
    }
    scenario.validate()?;
    let trials = par_map(threads, n_trials, |i| run_trial(scenario, base_seed.wrapping_add(i as u64)))?;
    Ok(summarize(trials))
}

/// Maps `f` over `0..n` in parallel, keeping index order.
pub fn par_map<T, F>(threads: Option<usize>, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let work = || (0..n).into_par_iter().map(&f).collect::<Result<Vec<T>>>();
    match threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|_| Error::out_of_range("threads", k, "a thread count the system can start"))?
            .install(work),
        None => work(),
    }
}

/// Mean and standard error of one field across trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSummary {
    pub field: String,
    /// Trials in which the field was defined.
    pub n: usize,
    pub mean: Option<f64>,
    /// `None` with fewer than two values.
    pub std_error: Option<f64>,
}

type Extractor = fn(&TrialResult) -> Option<f64>;

/// The summarized fields, in column order.
pub const SUMMARY_FIELDS: &[(&str, Extractor)] = &[
    ("opt", |r| Some(r.opt)),
    ("alg", |r| Some(r.alg)),
    ("ratio", |r| r.ratio),
    ("ping_count", |r| Some(r.ping_count as f64)),
    ("pings_per_packet", |r| Some(r.pings_per_packet)),
    ("lag_sum", |r| r.lag_sum.map(|x| x as f64)),
    ("signed_error_sum", |r| r.signed_error_sum.map(|x| x as f64)),
    ("max_overshoot", |r| Some(r.max_overshoot)),
    ("under_area", |r| r.under_area),
    ("over_area", |r| r.over_area),
    ("under_fraction", |r| r.under_area.map(|a| fraction(a, r.truth_area))),
    ("over_fraction", |r| r.over_area.map(|a| fraction(a, r.truth_area))),
    ("lower_rect_violations", |r| r.lower_rect_violations.map(|x| x as f64)),
    ("arrival_error", |r| r.arrival_error),
    ("departure_error", |r| r.departure_error),
];

fn fraction(part: f64, whole: f64) -> f64 {
    if whole > 0.0 {
        part / whole
    } else {
        0.0
    }
}

/// Mean and standard error of a sample, summed in the given order.
pub fn mean_and_se(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (Some(mean), Some((var / n as f64).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub n_trials: usize,
    /// Trials with zero true height but nonzero error.
    pub degenerate_trials: usize,
    pub fields: Vec<FieldSummary>,
    /// Per-trial rows, sorted by seed.
    pub trials: Vec<TrialResult>,
}

/// Aggregates trials. The result does not depend on their order.
pub fn summarize(mut trials: Vec<TrialResult>) -> ExperimentSummary {
    trials.sort_by_key(|t| t.seed);
    let fields = SUMMARY_FIELDS
        .iter()
        .map(|(name, get)| {
            let values: Vec<f64> = trials.iter().filter_map(get).collect();
            let (mean, std_error) = mean_and_se(&values);
            FieldSummary {
                field: name.to_string(),
                n: values.len(),
                mean,
                std_error,
            }
        })
        .collect();
    ExperimentSummary {
        n_trials: trials.len(),
        degenerate_trials: trials.iter().filter(|t| t.ratio.is_none()).count(),
        fields,
        trials,
    }
}

impl ExperimentSummary {
    pub fn field(&self, name: &str) -> Option<&FieldSummary> {
        self.fields.iter().find(|f| f.field == name)
    }

    pub fn mean(&self, name: &str) -> Option<f64> {
        self.field(name).and_then(|f| f.mean)
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.field(name).and_then(|f| f.std_error)
    }

    /// Column names of [`ExperimentSummary::csv_row`].
    pub fn csv_header() -> Vec<String> {
        let mut header = vec!["n_trials".to_string(), "degenerate_trials".to_string()];
        for (name, _) in SUMMARY_FIELDS {
            header.push(format!("{name}_mean"));
            header.push(format!("{name}_se"));
        }
        header
    }

    /// One wide row; undefined values are empty.
    pub fn csv_row(&self) -> Vec<String> {
        let show = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:?}"));
        let mut row = vec![self.n_trials.to_string(), self.degenerate_trials.to_string()];
        for f in &self.fields {
            row.push(show(f.mean));
            row.push(show(f.std_error));
        }
        row
    }
}

/// Provenance written next to every result set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub crate_version: String,
    pub generator: String,
    pub seed_scheme: String,
    pub base_seed: u64,
    pub trials: usize,
    /// SHA-256 of the scenario's JSON encoding.
    pub scenario_hash: String,
    pub scenario: Scenario,
}

impl RunMetadata {
    pub fn new(scenario: &Scenario, base_seed: u64, trials: usize) -> Self {
        RunMetadata {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            generator: GENERATOR.to_string(),
            seed_scheme: SEED_SCHEME.to_string(),
            base_seed,
            trials,
            scenario_hash: scenario_hash(scenario),
            scenario: scenario.clone(),
        }
    }
}

pub fn scenario_hash(scenario: &Scenario) -> String {
    let json = serde_json::to_vec(scenario).expect("scenarios always serialize");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}
