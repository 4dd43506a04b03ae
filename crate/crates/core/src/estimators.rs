//! Server-side estimators. Each consumes the ping stream and reports `e_t`.

use std::collections::BTreeMap;

use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policies::{Epsilon, Ping};
use crate::seeding::StreamRng;

/// Which estimator the server runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Last ping's height minus one per elapsed step.
    Extrapolating,
    /// Last ping's height, held until the next ping.
    Hold,
    /// Last ping's height, decremented on the server's own Poisson clock.
    PoissonTick { mu: f64 },
    /// Union of forward-projected rectangles.
    Pico,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Extrapolating => "extrapolating",
            EstimatorKind::Hold => "hold",
            EstimatorKind::PoissonTick { .. } => "poisson_tick",
            EstimatorKind::Pico => "pico",
        }
    }
}

/// Assumes nothing arrived since the last ping and one packet left per step.
#[derive(Debug, Clone, Default)]
pub struct ExtrapolatingState {
    last_ping: Option<(u64, u64)>,
}

impl ExtrapolatingState {
    pub fn new() -> Self {
        Self::default()
    }

    /// A later ping replaces the stored one; among pings sent at the same
    /// step the tallest wins, since it was sent by the latest arrival.
    pub fn observe(&mut self, ping: &Ping<u64>) {
        match self.last_ping {
            Some((t, h)) if t == ping.send_time && h >= ping.height => {}
            Some((t, _)) if t > ping.send_time => {}
            _ => self.last_ping = Some((ping.send_time, ping.height)),
        }
    }

    /// `max(0, h - (t - t'))` for the last ping `(t', h)`, or 0 before any.
    pub fn extrapolate(&self, t: u64) -> u64 {
        match self.last_ping {
            Some((sent, h)) => {
                debug_assert!(t >= sent);
                h.saturating_sub(t.saturating_sub(sent))
            }
            None => 0,
        }
    }

    pub fn last_ping(&self) -> Option<(u64, u64)> {
        self.last_ping
    }
}

/// Keeps the estimate constant between pings.
#[derive(Debug, Clone, Default)]
pub struct HoldState {
    current: u64,
    last_send: Option<f64>,
}

impl HoldState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Applies an optional ping and returns the held estimate. Pings sent at
    /// the same instant keep the largest height.
    pub fn hold<T: crate::queue::TimePoint>(&mut self, ping: Option<&Ping<T>>) -> u64 {
        if let Some(ping) = ping {
            let at = ping.send_time.as_f64();
            if self.last_send == Some(at) {
                self.current = self.current.max(ping.height);
            } else {
                self.current = ping.height;
                self.last_send = Some(at);
            }
        }
        self.current
    }

    pub fn estimate(&self) -> u64 {
        self.current
    }
}

/// Decrements the estimate on every tick of an `Exponential(mu)` clock that
/// the server draws for itself.
#[derive(Debug, Clone)]
pub struct PoissonTickState {
    current: u64,
    mu: f64,
    gap: Exp<f64>,
    next_tick: f64,
    ticks: u64,
    rng: StreamRng,
}

impl PoissonTickState {
    pub fn new(mu: f64, mut rng: StreamRng) -> Result<Self> {
        let gap = Exp::new(mu)
            .ok()
            .filter(|_| mu > 0.0 && mu.is_finite())
            .ok_or_else(|| Error::out_of_range("mu", mu, "positive and finite"))?;
        let next_tick = gap.sample(&mut rng);
        Ok(PoissonTickState {
            current: 0,
            mu,
            gap,
            next_tick,
            ticks: 0,
            rng,
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn estimate(&self) -> u64 {
        self.current
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn observe(&mut self, ping: &Ping<f64>) {
        self.current = ping.height;
    }

    /// Sets the estimate directly, as a ping of height `h` would.
    pub fn reset(&mut self, h: u64) {
        self.current = h;
    }

    /// Fires every tick up to and including `to`, calling `on_tick(time,
    /// estimate_after)` for each one.
    pub fn advance_with(&mut self, to: f64, mut on_tick: impl FnMut(f64, u64)) {
        while self.next_tick <= to {
            let at = self.next_tick;
            self.current = self.current.saturating_sub(1);
            self.ticks += 1;
            on_tick(at, self.current);
            self.next_tick = at + self.gap.sample(&mut self.rng);
        }
    }

    /// Fires every tick up to `to` and returns the resulting trajectory.
    pub fn advance(&mut self, to: f64) -> Vec<(f64, u64)> {
        let mut trajectory = Vec::new();
        self.advance_with(to, |t, e| trajectory.push((t, e)));
        trajectory
    }
}

/// The server's forward projection of one continuous-policy ping:
/// `[start, start + 3 eps w] x [0, (1 + 3 eps) height]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rectangle {
    pub start: u64,
    /// Expiry time multiplied by the denominator of epsilon.
    pub expiry_scaled: u128,
    pub height: u64,
}

impl Rectangle {
    pub fn from_ping(ping: &Ping<u64>, eps: Epsilon) -> Self {
        debug_assert!(ping.waiting_time >= 1);
        Rectangle {
            start: ping.send_time,
            expiry_scaled: ping.send_time as u128 * eps.den() as u128
                + 3 * eps.num() as u128 * ping.waiting_time as u128,
            height: ping.height,
        }
    }

    /// `start <= t <= start + 3 eps w`, compared exactly.
    pub fn covers(&self, t: u64, eps: Epsilon) -> bool {
        self.start <= t && t as u128 * eps.den() as u128 <= self.expiry_scaled
    }

    pub fn expiry(&self, eps: Epsilon) -> f64 {
        self.expiry_scaled as f64 / eps.den() as f64
    }
}

/// `(1 + 3 eps) * height`.
pub fn stretched_height(height: u64, eps: Epsilon) -> f64 {
    height as f64 * (eps.den() + 3 * eps.num()) as f64 / eps.den() as f64
}

/// Tracks the union of projected rectangles and reports its height.
///
/// Only the Pareto frontier of `(expiry, height)` is kept: a rectangle that
/// expires no later and is no taller than another can never set the
/// estimate. Along the frontier, later expiry means smaller height.
#[derive(Debug, Clone)]
pub struct PicoState {
    eps: Epsilon,
    frontier: BTreeMap<u128, u64>,
    now: u64,
    log: Option<Vec<Rectangle>>,
}

impl PicoState {
    pub fn new(eps: Epsilon) -> Self {
        PicoState {
            eps,
            frontier: BTreeMap::new(),
            now: 0,
            log: None,
        }
    }

    /// Same as [`PicoState::new`] but also keeps every inserted rectangle.
    pub fn with_log(eps: Epsilon) -> Self {
        PicoState {
            log: Some(Vec::new()),
            ..Self::new(eps)
        }
    }

    pub fn epsilon(&self) -> Epsilon {
        self.eps
    }

    pub fn active_len(&self) -> usize {
        self.frontier.len()
    }

    pub fn rectangles(&self) -> Option<&[Rectangle]> {
        self.log.as_deref()
    }

    pub fn into_rectangles(self) -> Option<Vec<Rectangle>> {
        self.log
    }

    pub fn insert(&mut self, ping: &Ping<u64>) {
        debug_assert!(ping.send_time >= self.now);
        let rect = Rectangle::from_ping(ping, self.eps);
        if let Some(log) = &mut self.log {
            log.push(rect);
        }
        if let Some((_, &h)) = self.frontier.range(rect.expiry_scaled..).next() {
            if h >= rect.height {
                return;
            }
        }
        let dominated: Vec<u128> = self
            .frontier
            .range(..=rect.expiry_scaled)
            .rev()
            .take_while(|(_, &h)| h <= rect.height)
            .map(|(&k, _)| k)
            .collect();
        for key in dominated {
            self.frontier.remove(&key);
        }
        self.frontier.insert(rect.expiry_scaled, rect.height);
    }

    /// Drops rectangles that expired before `t` and returns the height of
    /// the tallest one still covering `t`.
    pub fn covering_height(&mut self, t: u64) -> Option<u64> {
        debug_assert!(t >= self.now);
        self.now = t;
        let cutoff = t as u128 * self.eps.den() as u128;
        while let Some(entry) = self.frontier.first_entry() {
            if *entry.key() < cutoff {
                entry.remove();
            } else {
                break;
            }
        }
        self.frontier.values().next().copied()
    }

    /// Inserts the ping (if any), then returns `e_t`: the tallest covering
    /// rectangle's top `(1 + 3 eps) h`, or 0.
    pub fn update(&mut self, ping: Option<&Ping<u64>>, t: u64) -> f64 {
        if let Some(ping) = ping {
            self.insert(ping);
        }
        self.covering_height(t)
            .map_or(0.0, |h| stretched_height(h, self.eps))
    }
}
