//! Chunked audio-visual speech enhancement over a client/server link.
//!
//! The crate is organised bottom-up:
//!
//! * [`scene`] synthesises ground-truth acoustic scenes (clean speech through
//!   early reflections, late reverberation plus noise as interference).
//! * [`dsp`] holds the spectrogram front-end, audio/visual features, channel
//!   concatenation fusion and the enhancer backends.
//! * [`wire`] is the framed binary protocol and the block-DCT frame codec.
//! * [`netem`] emulates access networks with fixed presets.
//! * [`pipeline`] runs the client/server buffering scheme either as a
//!   deterministic discrete-event simulation or over loopback TCP.
//! * [`metrics`] turns event logs and audio into latency/gap/SNR reports and
//!   runs the parameter sweeps.

pub mod config;
pub mod dsp;
mod error;
pub mod metrics;
pub mod netem;
pub mod par;
pub mod pipeline;
pub mod scene;
pub mod video;
pub mod wav;
pub mod wire;

pub use error::{Error, Result};

/// Default audio sample rate in Hz.
pub const SAMPLE_RATE: u32 = 16_000;
/// Default chunk duration in seconds (one video frame at 25 fps).
pub const T_CHUNK: f64 = 0.040;
