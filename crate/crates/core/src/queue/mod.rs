//! FIFO queue semantics: traces, replay, and the true height profile.

mod replay;
mod trace;

pub use replay::{
    compute_opt, compute_opt_continuous, replay, replay_continuous, transition_counts,
    ContinuousProfile, HeightProfile, PacketRecord, QueueState, Replayed,
};
pub(crate) use replay::push_segment;
pub use trace::{AnyTrace, Event, Mode, TimePoint, Trace};
