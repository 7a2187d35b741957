//! Client/server streaming pipeline: chunked capture, server input and output
//! buffers, a worker that enhances sliding windows every `t_delta`, paced
//! send-back, and client playout with gap detection.
//!
//! The same [`ServerCore`] and [`ClientCore`] state machines drive both the
//! discrete-event [`simulate`] and the live TCP loopback in [`live`].

mod client;
mod events;
pub mod live;
mod media;
mod server;
mod sim;

pub use client::ClientCore;
pub use events::{EventKind, EventLog, EventRecord};
pub use media::{MediaSource, PayloadConfig};
pub use server::{Preprocessed, ServerCore, WindowPlan};
pub use sim::{simulate, simulate_with};

use crate::scene::Signal;

use serde::{Deserialize, Serialize};

use crate::dsp::EnhancerSpec;
use crate::netem::{median_rtt, ChannelModel};
use crate::wire::{payload_size, ChunkFormat, PayloadMode};
use crate::{Error, Result, T_CHUNK};

/// Pipeline time in microseconds. Simulation starts at 0; live mode uses
/// the unix epoch.
pub type Micros = u64;

pub fn to_us(seconds: f64) -> Micros {
    (seconds * 1e6).round().max(0.0) as Micros
}

pub fn to_s(us: Micros) -> f64 {
    us as f64 / 1e6
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Sim,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Media per transmission, seconds.
    pub t_chunk: f64,
    /// Enhancer input window, seconds.
    pub t_i: f64,
    /// Worker cadence, seconds.
    pub t_delta: f64,
    pub enhancer: EnhancerSpec,
    /// Ready audio the server buffers before sending back; `t_delta` if unset.
    pub output_start_threshold: Option<f64>,
    /// Client jitter buffer before the first chunk plays; `t_chunk` if unset.
    pub playout_delay: Option<f64>,
    /// Forward the first `t_i - t_delta` of audio without enhancement.
    pub startup_skip: bool,
    /// How long the client waits for an ack before declaring the chunk lost.
    pub ack_timeout: f64,
    pub payload: PayloadConfig,
    pub channel: ChannelModel,
    pub mode: Mode,
    /// Live mode listen/connect address.
    pub addr: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            t_chunk: T_CHUNK,
            t_i: 0.2,
            t_delta: 0.2,
            enhancer: EnhancerSpec::passthrough(0.2),
            output_start_threshold: None,
            playout_delay: None,
            startup_skip: true,
            ack_timeout: 1.0,
            payload: PayloadConfig::default(),
            channel: ChannelModel::default(),
            mode: Mode::Sim,
            addr: "127.0.0.1:0".into(),
        }
    }
}

/// Everything a pipeline run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: PipelineConfig,
    pub log: EventLog,
    /// Audio as played by the client, silence for lost chunks.
    pub played: Signal,
    pub chunks: usize,
    /// Encoded size of each media message sent, bytes.
    pub media_bytes: Vec<usize>,
    pub protocol_errors: usize,
    pub warnings: Vec<CoherenceWarning>,
}

/// Outcome of [`validate_config`]: the config plus non-fatal warnings.
#[derive(Debug, Clone)]
pub struct Validated {
    pub config: PipelineConfig,
    pub warnings: Vec<CoherenceWarning>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceWarning {
    /// Median round-trip time for one chunk, seconds.
    pub expected_t_comm: f64,
    pub t_chunk: f64,
}

impl std::fmt::Display for CoherenceWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "expected round trip {:.1} ms exceeds chunk duration {:.1} ms; playback will have blank periods",
            self.expected_t_comm * 1e3,
            self.t_chunk * 1e3
        )
    }
}

impl PipelineConfig {
    pub fn chunks_for(&self, seconds: f64) -> usize {
        (seconds / self.t_chunk - 1e-9).ceil().max(0.0) as usize
    }

    /// Chunks in one input window.
    pub fn window_chunks(&self) -> usize {
        self.chunks_for(self.t_i).max(1)
    }

    /// Processing time of one window run.
    pub fn effective_t_a(&self) -> f64 {
        self.enhancer.latency_for(self.window_chunks() as f64 * self.t_chunk)
    }

    pub fn output_threshold(&self) -> f64 {
        self.output_start_threshold.unwrap_or(self.t_delta)
    }

    pub fn playout(&self) -> f64 {
        self.playout_delay.unwrap_or(self.t_chunk)
    }

    /// Length of the unenhanced prefix, seconds (zero when skipping is off or
    /// `t_i <= t_delta`).
    pub fn skip_seconds(&self) -> f64 {
        if self.startup_skip {
            apply_startup_skip(self.t_i, self.t_delta)
        } else {
            0.0
        }
    }

    pub fn chunk_format(&self) -> ChunkFormat {
        ChunkFormat {
            t_chunk: self.t_chunk,
            frame: self.payload.frame_size(),
            ..ChunkFormat::default()
        }
    }

    pub fn payload_mode(&self) -> PayloadMode {
        match self.payload.quality {
            Some(q) => PayloadMode::Compressed(q),
            None => PayloadMode::Raw,
        }
    }
}

/// Checks field ranges and the real-time condition `t_delta > t_a`.
pub fn validate_config(cfg: PipelineConfig) -> Result<Validated> {
    let finite_pos = |v: f64| v > 0.0 && v.is_finite();
    if !finite_pos(cfg.t_chunk) {
        return Err(Error::Config(format!("t_chunk must be > 0, got {}", cfg.t_chunk)));
    }
    if !(cfg.t_i + 1e-9 >= cfg.t_chunk && cfg.t_i.is_finite()) {
        return Err(Error::Config(format!("t_i ({}) must be at least t_chunk ({})", cfg.t_i, cfg.t_chunk)));
    }
    if !finite_pos(cfg.t_delta) {
        return Err(Error::Config(format!("t_delta must be > 0, got {}", cfg.t_delta)));
    }
    if cfg.t_delta > cfg.t_i + 1e-9 {
        return Err(Error::Config(format!(
            "t_delta ({}) must not exceed t_i ({}); windows would leave media unprocessed",
            cfg.t_delta, cfg.t_i
        )));
    }
    cfg.enhancer.validate()?;
    if cfg.enhancer.t_i > cfg.t_i + 1e-9 {
        return Err(Error::Config(format!(
            "enhancer needs {} s of input but the pipeline window is {} s",
            cfg.enhancer.t_i, cfg.t_i
        )));
    }
    let t_a = cfg.effective_t_a();
    if cfg.t_delta <= t_a {
        return Err(Error::Config(format!(
            "buffer interval must exceed algorithm latency (t_delta {:.4} s <= t_a {:.4} s)",
            cfg.t_delta, t_a
        )));
    }
    for (name, v) in [("output_start_threshold", cfg.output_start_threshold), ("playout_delay", cfg.playout_delay)] {
        if let Some(v) = v {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
    }
    if !finite_pos(cfg.ack_timeout) {
        return Err(Error::Config("ack_timeout must be > 0".into()));
    }
    cfg.payload.validate()?;
    cfg.channel.validate()?;

    let mut warnings = Vec::new();
    let size = payload_size(&cfg.chunk_format(), cfg.payload_mode())?;
    let expected = median_rtt(&cfg.channel, size) / 1e3;
    if !coherent(expected, cfg.t_chunk) {
        let w = CoherenceWarning {
            expected_t_comm: expected,
            t_chunk: cfg.t_chunk,
        };
        log::warn!("{w}");
        warnings.push(w);
    }
    Ok(Validated { config: cfg, warnings })
}

/// End-to-end delay of the steady-state pipeline.
pub fn total_delay(t_comm: f64, t_delta: f64, t_a: f64) -> f64 {
    t_comm + t_delta + t_a
}

/// Gap-free playback needs the round trip to fit in one chunk.
pub fn coherent(t_comm: f64, t_chunk: f64) -> bool {
    t_comm <= t_chunk
}

/// Seconds of leading audio forwarded unenhanced; zero if `t_i <= t_delta`.
pub fn apply_startup_skip(t_i: f64, t_delta: f64) -> f64 {
    (t_i - t_delta).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::ModelTier;

    #[test]
    fn validation_gates() {
        let mut cfg = PipelineConfig {
            t_i: 10.0,
            t_delta: 2.35,
            enhancer: EnhancerSpec::emulated(2.2, 10.0),
            ..PipelineConfig::default()
        };
        assert!(validate_config(cfg.clone()).unwrap().warnings.is_empty());
        cfg.t_delta = 2.0;
        let err = validate_config(cfg.clone()).unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("buffer interval must exceed algorithm latency")));

        let tier = PipelineConfig {
            t_i: 0.2,
            t_delta: 0.2,
            enhancer: EnhancerSpec::tier(ModelTier::Model3),
            ..PipelineConfig::default()
        };
        assert!(validate_config(tier).is_err());

        let wifi = PipelineConfig {
            channel: ChannelModel::preset("wifi4").unwrap(),
            ..PipelineConfig::default()
        };
        let v = validate_config(wifi).unwrap();
        assert_eq!(v.warnings.len(), 1);
        assert!(v.warnings[0].expected_t_comm > 0.04);
    }

    #[test]
    fn delay_laws() {
        assert!((total_delay(0.04, 2.35, 2.2) - 4.59).abs() < 1e-12);
        assert_eq!(total_delay(0.0, 0.0, 0.0), 0.0);
        assert!(coherent(0.035, 0.04));
        assert!(coherent(0.04, 0.04));
        assert!(!coherent(0.0401, 0.04));
        assert!((apply_startup_skip(10.0, 2.35) - 7.65).abs() < 1e-12);
        assert_eq!(apply_startup_skip(2.0, 2.0), 0.0);
    }

    #[test]
    fn config_round_trip() {
        let cfg: PipelineConfig = crate::config::parse(
            "t_i = 10.0\nt_delta = 2.35\n[enhancer]\nkind = \"emulated\"\nt_a = 2.2\nt_i = 10.0\nreference_window_s = 10.0\n[channel]\nname = \"5g\"\n",
        )
        .unwrap();
        assert_eq!(cfg.channel, ChannelModel::preset("5g").unwrap());
        let back: PipelineConfig = crate::config::parse(&crate::config::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
