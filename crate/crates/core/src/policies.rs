//! Packet-side ping policies.
//!
//! A packet only ever learns its own position in the queue (`h`, counting
//! itself) and how long it has waited (`w`). Every policy here is a function
//! of those two numbers and nothing else.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::queue::TimePoint;

/// Accuracy parameter, kept both as a float and as an exact fraction.
///
/// The fraction drives comparisons that must be exact, like rectangle
/// expiry `t <= t' + 3 eps w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Epsilon {
    value: f64,
    num: u64,
    den: u64,
}

impl Epsilon {
    const MAX_DEN: u64 = 1_000_000_000;

    /// Accepts any value in `(0, 1)` and stores its simplest fraction with a
    /// denominator of at most `1e9` (so `0.1` becomes exactly `1/10`).
    pub fn new(value: f64) -> Result<Self> {
        if !(value > 0.0 && value < 1.0) {
            return Err(Error::out_of_range("epsilon", value, "(0, 1)"));
        }
        let (num, den) = simplest_fraction(value, Self::MAX_DEN);
        Ok(Epsilon { value, num, den })
    }

    pub fn from_ratio(num: u64, den: u64) -> Result<Self> {
        if num == 0 || num >= den {
            return Err(Error::out_of_range("epsilon", format!("{num}/{den}"), "(0, 1)"));
        }
        let g = gcd(num, den);
        Ok(Epsilon {
            value: num as f64 / den as f64,
            num: num / g,
            den: den / g,
        })
    }

    pub fn value(self) -> f64 {
        self.value
    }

    pub fn num(self) -> u64 {
        self.num
    }

    pub fn den(self) -> u64 {
        self.den
    }

    /// `ln(1/eps)`.
    pub fn log_inverse(self) -> f64 {
        (1.0 / self.value).ln()
    }
}

impl Serialize for Epsilon {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.value)
    }
}

impl<'de> Deserialize<'de> for Epsilon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let value = f64::deserialize(d)?;
        Epsilon::new(value).map_err(serde::de::Error::custom)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Walks the continued-fraction convergents of `x` and returns the first one
/// that reproduces `x` after rounding to `f64`, or the last one whose
/// denominator fits under `max_den`.
fn simplest_fraction(x: f64, max_den: u64) -> (u64, u64) {
    let (mut p0, mut q0, mut p1, mut q1) = (0u64, 1u64, 1u64, 0u64);
    let mut rest = x;
    loop {
        let a = rest.floor();
        let (p2, q2) = match (
            (a as u64).checked_mul(p1).and_then(|v| v.checked_add(p0)),
            (a as u64).checked_mul(q1).and_then(|v| v.checked_add(q0)),
        ) {
            (Some(p), Some(q)) if q <= max_den => (p, q),
            _ => break,
        };
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        if p1 as f64 / q1 as f64 == x {
            break;
        }
        let frac = rest - a;
        if frac <= 0.0 {
            break;
        }
        rest = 1.0 / frac;
    }
    if q1 == 0 {
        (p0, q0)
    } else {
        (p1, q1)
    }
}

/// Which ping rule packets follow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    /// Ping on arrival with `min(1, 2 ln(1/eps) / (eps h))`; tuned for
    /// constant-rate or Poisson departures.
    PoaDep,
    /// Ping on arrival with `min(1, 4 / (eps h))`; tuned for constant-rate or
    /// Poisson arrivals.
    PoaArr,
    /// Ping at every step in the queue with
    /// `min(1, 5 ln(1/eps) / (eps^2 h w))`.
    Pico,
    /// Ping on arrival with `min(1, c / (eps h))`. Used to starve the server
    /// in the lower-bound demos.
    ScaledPoa { c: f64 },
    /// Every packet pings on arrival.
    PoaAlways,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::PoaDep => "poa_dep",
            PolicyKind::PoaArr => "poa_arr",
            PolicyKind::Pico => "pico",
            PolicyKind::ScaledPoa { .. } => "scaled_poa",
            PolicyKind::PoaAlways => "poa_always",
        }
    }

    pub fn pings_on_arrival(&self) -> bool {
        !matches!(self, PolicyKind::Pico)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub epsilon: Epsilon,
    #[serde(flatten)]
    pub kind: PolicyKind,
}

impl PolicyParams {
    pub fn new(kind: PolicyKind, epsilon: f64) -> Result<Self> {
        let params = PolicyParams {
            epsilon: Epsilon::new(epsilon)?,
            kind,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let eps = self.epsilon.value();
        match self.kind {
            PolicyKind::Pico if eps > 0.2 => {
                Err(Error::out_of_range("epsilon", eps, "(0, 1/5] for pico"))
            }
            PolicyKind::PoaArr if eps >= 0.5 => {
                Err(Error::out_of_range("epsilon", eps, "(0, 1/2) for poa_arr"))
            }
            PolicyKind::ScaledPoa { c } if !(c > 0.0 && c.is_finite()) => {
                Err(Error::out_of_range("c", c, "positive and finite"))
            }
            _ => Ok(()),
        }
    }

    /// Ping probability of a packet that has just arrived at height `h`.
    /// `None` for policies that do not ping on arrival.
    pub fn arrival_prob(&self, h: u64) -> Option<f64> {
        let eps = self.epsilon.value();
        match self.kind {
            PolicyKind::PoaDep => Some(poa_dep_prob(h, eps)),
            PolicyKind::PoaArr => Some(poa_arr_prob(h, eps)),
            PolicyKind::ScaledPoa { c } => Some(scaled_poa_prob(h, eps, c)),
            PolicyKind::PoaAlways => Some(1.0),
            PolicyKind::Pico => None,
        }
    }

    /// Ping probability at height `h` after waiting `w` steps, for
    /// continuously pinging policies.
    pub fn continuous_prob(&self, h: u64, w: u64) -> Option<f64> {
        match self.kind {
            PolicyKind::Pico => Some(pico_prob(h, w, self.epsilon.value())),
            _ => None,
        }
    }
}

/// The only view of a policy that packets get: a ping probability from
/// their own height and waiting time. Constants are evaluated once.
#[derive(Debug, Clone, Copy)]
pub enum PingRule {
    /// `min(1, scale / h)` once, on arrival.
    OnArrival { scale: f64 },
    /// `min(1, scale / (h w))` at every step in the queue.
    Continuous { scale: f64 },
}

impl PingRule {
    pub fn arrival_prob(&self, h: u64) -> Option<f64> {
        match *self {
            PingRule::OnArrival { scale } => Some((scale / h as f64).min(1.0)),
            PingRule::Continuous { .. } => None,
        }
    }

    pub fn continuous_prob(&self, h: u64, w: u64) -> Option<f64> {
        match *self {
            PingRule::Continuous { scale } => Some((scale / (h as f64 * w as f64)).min(1.0)),
            PingRule::OnArrival { .. } => None,
        }
    }
}

impl PolicyParams {
    pub fn rule(&self) -> PingRule {
        let eps = self.epsilon.value();
        match self.kind {
            PolicyKind::PoaDep => PingRule::OnArrival {
                scale: 2.0 * (1.0 / eps).ln() / eps,
            },
            PolicyKind::PoaArr => PingRule::OnArrival { scale: 4.0 / eps },
            PolicyKind::ScaledPoa { c } => PingRule::OnArrival { scale: c / eps },
            PolicyKind::PoaAlways => PingRule::OnArrival { scale: f64::INFINITY },
            PolicyKind::Pico => PingRule::Continuous {
                scale: pico_scale(eps),
            },
        }
    }
}

/// `min(1, 2 ln(1/eps) / (eps h))`.
pub fn poa_dep_prob(h: u64, eps: f64) -> f64 {
    debug_assert!(h >= 1);
    (2.0 * (1.0 / eps).ln() / (eps * h as f64)).min(1.0)
}

/// `min(1, 4 / (eps h))`.
pub fn poa_arr_prob(h: u64, eps: f64) -> f64 {
    debug_assert!(h >= 1);
    (4.0 / (eps * h as f64)).min(1.0)
}

/// `min(1, c / (eps h))`.
pub fn scaled_poa_prob(h: u64, eps: f64, c: f64) -> f64 {
    debug_assert!(h >= 1);
    (c / (eps * h as f64)).min(1.0)
}

/// The numerator `5 ln(1/eps) / eps^2` of the continuous ping rate.
pub fn pico_scale(eps: f64) -> f64 {
    5.0 * (1.0 / eps).ln() / (eps * eps)
}

/// `min(1, 5 ln(1/eps) / (eps^2 h w))`.
pub fn pico_prob(h: u64, w: u64, eps: f64) -> f64 {
    debug_assert!(h >= 1 && w >= 1);
    (pico_scale(eps) / (h as f64 * w as f64)).min(1.0)
}

/// Bernoulli draw. Probabilities at or beyond the ends of `[0, 1]` decide
/// without consuming randomness.
pub fn decide<R: Rng + ?Sized>(prob: f64, rng: &mut R) -> bool {
    if prob >= 1.0 {
        true
    } else if prob <= 0.0 {
        false
    } else {
        rng.random::<f64>() < prob
    }
}

/// A packet-to-server message.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ping<T = u64> {
    pub packet_id: u64,
    pub send_time: T,
    /// The sender's position in the queue, counting itself.
    pub height: u64,
    /// `send_time - arrival_time`; zero for pings sent on arrival.
    pub waiting_time: T,
    pub arrival_time: T,
}

impl<T: TimePoint> Ping<T> {
    pub fn on_arrival(packet_id: u64, time: T, height: u64) -> Self {
        Ping {
            packet_id,
            send_time: time,
            height,
            waiting_time: T::ZERO,
            arrival_time: time,
        }
    }
}
