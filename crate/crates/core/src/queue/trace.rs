//! Event schedules that drive a simulation run, and their CSV form.
//!
//! A trace lists, per time point, how many packets arrive and how many
//! departure tokens fire. The CSV layout is
//!
//! ```text
//! time,arrivals,departure_tokens
//! 0,3,0
//! 1,0,1
//! ...
//! 4,0,0
//! ```
//!
//! The final row is always the horizon marker `T,0,0`. Discrete traces use
//! integer times; continuous traces always carry a decimal point or an
//! exponent (`3.0`, `1e-7`), which is how a reader tells the modes apart.

use std::fmt::Debug;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether time advances in unit steps or continuously.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Discrete,
    Continuous,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Discrete => f.write_str("discrete"),
            Mode::Continuous => f.write_str("continuous"),
        }
    }
}

/// A time coordinate: `u64` steps in discrete mode, `f64` in continuous mode.
pub trait TimePoint:
    Copy + PartialOrd + Debug + Send + Sync + Serialize + for<'de> Deserialize<'de> + 'static
{
    const MODE: Mode;
    const ZERO: Self;

    fn as_f64(self) -> f64;

    /// Text form used in trace CSV files.
    fn to_field(self) -> String;

    fn parse_field(field: &str) -> Option<Self>;
}

impl TimePoint for u64 {
    const MODE: Mode = Mode::Discrete;
    const ZERO: Self = 0;

    fn as_f64(self) -> f64 {
        self as f64
    }

    fn to_field(self) -> String {
        self.to_string()
    }

    fn parse_field(field: &str) -> Option<Self> {
        if field.is_empty() || !field.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        field.parse().ok()
    }
}

impl TimePoint for f64 {
    const MODE: Mode = Mode::Continuous;
    const ZERO: Self = 0.0;

    fn as_f64(self) -> f64 {
        self
    }

    fn to_field(self) -> String {
        // `Debug` is the shortest representation that parses back to the
        // same bits, and always includes a `.` or an exponent.
        format!("{self:?}")
    }

    fn parse_field(field: &str) -> Option<Self> {
        if !looks_continuous(field) {
            return None;
        }
        field.parse::<f64>().ok().filter(|v| v.is_finite() && *v >= 0.0)
    }
}

fn looks_continuous(field: &str) -> bool {
    field.contains(['.', 'e', 'E'])
}

/// Arrivals and departure tokens that occur at one time point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event<T = u64> {
    pub time: T,
    pub arrivals: u64,
    pub departure_tokens: u64,
}

impl<T: TimePoint> Event<T> {
    pub fn new(time: T, arrivals: u64, departure_tokens: u64) -> Self {
        Event {
            time,
            arrivals,
            departure_tokens,
        }
    }
}

/// The full arrival/departure schedule of one run.
///
/// Heights are observed on `[0, horizon)`; a trace that starts and ends
/// empty has every packet departed by `horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace<T = u64> {
    pub horizon: T,
    pub events: Vec<Event<T>>,
}

impl<T: TimePoint> Trace<T> {
    pub fn new(horizon: T, events: Vec<Event<T>>) -> Result<Self> {
        let trace = Trace { horizon, events };
        trace.validate()?;
        Ok(trace)
    }

    pub fn empty() -> Self {
        Trace {
            horizon: T::ZERO,
            events: Vec::new(),
        }
    }

    pub fn mode(&self) -> Mode {
        T::MODE
    }

    /// Events must be time-ordered and no later than the horizon.
    pub fn validate(&self) -> Result<()> {
        for pair in self.events.windows(2) {
            if pair[1].time < pair[0].time {
                return Err(Error::MalformedTrace(format!(
                    "events out of order at time {:?}",
                    pair[1].time
                )));
            }
        }
        if let Some(last) = self.events.last() {
            if last.time > self.horizon {
                return Err(Error::MalformedTrace(format!(
                    "event at {:?} lies beyond horizon {:?}",
                    last.time, self.horizon
                )));
            }
        }
        Ok(())
    }

    pub fn total_arrivals(&self) -> u64 {
        self.events.iter().map(|e| e.arrivals).sum()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["time", "arrivals", "departure_tokens"])?;
        for event in &self.events {
            out.write_record([
                event.time.to_field(),
                event.arrivals.to_string(),
                event.departure_tokens.to_string(),
            ])?;
        }
        out.write_record([self.horizon.to_field(), "0".into(), "0".into()])?;
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ascii")
    }
}

/// A trace in either time mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AnyTrace {
    Discrete(Trace<u64>),
    Continuous(Trace<f64>),
}

impl AnyTrace {
    pub fn mode(&self) -> Mode {
        match self {
            AnyTrace::Discrete(_) => Mode::Discrete,
            AnyTrace::Continuous(_) => Mode::Continuous,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AnyTrace::Discrete(t) => t.validate(),
            AnyTrace::Continuous(t) => t.validate(),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        match self {
            AnyTrace::Discrete(t) => t.write_csv(writer),
            AnyTrace::Continuous(t) => t.write_csv(writer),
        }
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut input = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = input.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["time", "arrivals", "departure_tokens"] {
            return Err(Error::MalformedTrace(format!(
                "expected header time,arrivals,departure_tokens, found {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows = Vec::new();
        for record in input.records() {
            let record = record?;
            if record.len() != 3 {
                return Err(Error::MalformedTrace(format!(
                    "expected 3 fields, found {}",
                    record.len()
                )));
            }
            let count = |i: usize| -> Result<u64> {
                record[i].parse().map_err(|_| {
                    Error::MalformedTrace(format!("bad count `{}`", &record[i]))
                })
            };
            rows.push((record[0].to_string(), count(1)?, count(2)?));
        }
        let Some(marker) = rows.last() else {
            return Err(Error::MalformedTrace("missing horizon row".into()));
        };
        if marker.1 != 0 || marker.2 != 0 {
            return Err(Error::MalformedTrace(
                "last row must be the horizon marker `T,0,0`".into(),
            ));
        }
        if looks_continuous(&marker.0) {
            Ok(AnyTrace::Continuous(build_trace(&rows)?))
        } else {
            Ok(AnyTrace::Discrete(build_trace(&rows)?))
        }
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        Self::read_csv(text.as_bytes())
    }

    pub fn read_csv_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

fn build_trace<T: TimePoint>(rows: &[(String, u64, u64)]) -> Result<Trace<T>> {
    let parse = |field: &str| {
        T::parse_field(field).ok_or_else(|| {
            Error::MalformedTrace(format!("time `{field}` is not a valid {} time", T::MODE))
        })
    };
    let (marker, body) = rows.split_last().expect("caller checked non-empty");
    let events = body
        .iter()
        .map(|(time, arrivals, tokens)| Ok(Event::new(parse(time)?, *arrivals, *tokens)))
        .collect::<Result<Vec<_>>>()?;
    Trace::new(parse(&marker.0)?, events)
}

impl From<Trace<u64>> for AnyTrace {
    fn from(trace: Trace<u64>) -> Self {
        AnyTrace::Discrete(trace)
    }
}

impl From<Trace<f64>> for AnyTrace {
    fn from(trace: Trace<f64>) -> Self {
        AnyTrace::Continuous(trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discrete_csv_layout() {
        let trace = Trace::new(4u64, vec![Event::new(0, 3, 0), Event::new(1, 0, 1)]).unwrap();
        assert_eq!(
            trace.to_csv_string(),
            "time,arrivals,departure_tokens\n0,3,0\n1,0,1\n4,0,0\n"
        );
    }

    #[test]
    fn continuous_times_keep_a_decimal_point() {
        let trace = Trace::new(3.0f64, vec![Event::new(0.5, 1, 0), Event::new(2.0, 0, 1)]).unwrap();
        let text = trace.to_csv_string();
        assert!(text.contains("\n2.0,0,1\n"));
        assert_eq!(
            AnyTrace::from_csv_str(&text).unwrap(),
            AnyTrace::Continuous(trace)
        );
    }

    #[test]
    fn empty_traces_keep_their_mode() {
        let d = Trace::<u64>::empty();
        let c = Trace::<f64>::empty();
        assert_eq!(
            AnyTrace::from_csv_str(&d.to_csv_string()).unwrap(),
            AnyTrace::Discrete(d)
        );
        assert_eq!(
            AnyTrace::from_csv_str(&c.to_csv_string()).unwrap(),
            AnyTrace::Continuous(c)
        );
    }

    #[test]
    fn rejects_out_of_order_events() {
        let err = Trace::new(5u64, vec![Event::new(3, 1, 0), Event::new(2, 0, 1)]);
        assert!(matches!(err, Err(Error::MalformedTrace(_))));
    }

    #[test]
    fn rejects_mixed_time_formats() {
        let text = "time,arrivals,departure_tokens\n0.5,1,0\n2,0,0\n";
        assert!(AnyTrace::from_csv_str(text).is_err());
    }

    #[test]
    fn rejects_missing_marker() {
        let text = "time,arrivals,departure_tokens\n0,1,0\n";
        assert!(AnyTrace::from_csv_str(text).is_err());
        let text = "time,arrivals,departure_tokens\n";
        assert!(AnyTrace::from_csv_str(text).is_err());
    }

    #[test]
    fn rejects_wrong_header() {
        let text = "t,a,d\n0,0,0\n";
        assert!(AnyTrace::from_csv_str(text).is_err());
    }
}
