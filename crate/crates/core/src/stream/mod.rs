//! Motion-capture ingestion: datagram codec, JSON Lines recordings, UDP listener and
//! synthetic human trajectories.

pub mod recording;
pub mod synth;
pub mod udp;
pub mod wire;

pub use recording::{Replay, RecordingError};
pub use synth::{synth, HumanBody, SynthSpec};
pub use udp::{Listener, Mailbox, Sender};
pub use wire::{decode, encode, Datagram, DecodeError};
