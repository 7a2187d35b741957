use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::scene::{mix, synth_scene, Mixture, SceneParams, Signal};
use crate::video::{talking_face, Roi, FRAME_HEIGHT, FRAME_WIDTH};
use crate::wav::to_i16;
use crate::wire::{FramePayload, MediaChunk};
use crate::{Error, Result};

use super::{Micros, PipelineConfig};

/// Mouth openness is quantised to this many levels so frames can be cached.
const OPENNESS_LEVELS: usize = 16;

/// What each chunk carries besides audio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PayloadConfig {
    pub video: bool,
    pub width: usize,
    pub height: usize,
    /// Codec quality 1..=100; raw pixels if unset.
    pub quality: Option<u8>,
    /// Region the server decodes for visual features.
    pub roi: Roi,
}

impl Default for PayloadConfig {
    fn default() -> Self {
        PayloadConfig {
            video: true,
            width: FRAME_WIDTH,
            height: FRAME_HEIGHT,
            quality: None,
            roi: Roi::MOUTH,
        }
    }
}

impl PayloadConfig {
    pub fn frame_size(&self) -> Option<(usize, usize)> {
        self.video.then_some((self.width, self.height))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(q) = self.quality {
            if !(1..=100).contains(&q) {
                return Err(Error::Config(format!("quality must be in 1..=100, got {q}")));
            }
        }
        if self.video {
            if self.width == 0 || self.height == 0 || self.width > u16::MAX as usize || self.height > u16::MAX as usize {
                return Err(Error::Config(format!("bad frame size {}x{}", self.width, self.height)));
            }
            self.roi
                .check_within(self.width, self.height)
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// Client-side media: the microphone signal, optionally the clean target,
/// and a synthetic talking face driven by the target's loudness.
#[derive(Debug)]
pub struct MediaSource {
    pub audio: Signal,
    pub clean: Option<Signal>,
    samples_per_chunk: usize,
    openness: Vec<u8>,
    payload: PayloadConfig,
    cache: Mutex<HashMap<(u8, bool), Arc<FramePayload>>>,
}

impl MediaSource {
    pub fn new(audio: Signal, clean: Option<Signal>, cfg: &PipelineConfig) -> Result<Self> {
        audio.validate()?;
        if audio.is_empty() {
            return Err(Error::invalid("media source has no audio"));
        }
        if let Some(c) = &clean {
            if c.len() != audio.len() || c.sample_rate != audio.sample_rate {
                return Err(Error::invalid("clean reference must match the audio"));
            }
        }
        let spc = (audio.sample_rate as f64 * cfg.t_chunk).round() as usize;
        if spc == 0 {
            return Err(Error::Config("t_chunk shorter than one sample".into()));
        }
        let driver = clean.as_ref().unwrap_or(&audio);
        let rms: Vec<f64> = driver
            .samples
            .chunks(spc)
            .map(|c| (c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64).sqrt())
            .collect();
        let peak = rms.iter().cloned().fold(0.0, f64::max);
        let top = (OPENNESS_LEVELS - 1) as f64;
        let openness = rms
            .iter()
            .map(|r| if peak > 0.0 { (r / peak * top).round() as u8 } else { 0 })
            .collect();
        Ok(MediaSource {
            audio,
            clean,
            samples_per_chunk: spc,
            openness,
            payload: cfg.payload.clone(),
            cache: Mutex::new(HashMap::new()),
        })
    }

    /// Uses the mixture as microphone input and the summed clean references
    /// as ground truth.
    pub fn from_mixture(m: &Mixture, cfg: &PipelineConfig) -> Result<Self> {
        Self::new(m.mixture.clone(), Some(m.clean_sum()), cfg)
    }

    /// A synthetic single-talker scene of `duration_s` seconds.
    pub fn synthetic(duration_s: f64, seed: u64, cfg: &PipelineConfig) -> Result<Self> {
        let params = SceneParams {
            duration_s,
            ..SceneParams::default()
        };
        Self::from_mixture(&mix(&synth_scene(&params, seed)?)?, cfg)
    }

    pub fn samples_per_chunk(&self) -> usize {
        self.samples_per_chunk
    }

    pub fn chunk_count(&self) -> usize {
        self.openness.len()
    }

    pub fn sample_rate(&self) -> u32 {
        self.audio.sample_rate
    }

    /// Audio of chunk `seq`, zero-padded at the end of the source.
    pub fn chunk_audio(&self, seq: usize) -> Vec<i16> {
        let start = seq * self.samples_per_chunk;
        let mut out: Vec<i16> = self
            .audio
            .samples
            .iter()
            .skip(start)
            .take(self.samples_per_chunk)
            .map(|&v| to_i16(v))
            .collect();
        out.resize(self.samples_per_chunk, 0);
        out
    }

    fn frame(&self, seq: usize) -> Result<Arc<FramePayload>> {
        let key = (self.openness[seq], seq % 2 == 0);
        if let Some(f) = self.cache.lock().expect("frame cache poisoned").get(&key) {
            return Ok(f.clone());
        }
        let open = key.0 as f64 / (OPENNESS_LEVELS - 1) as f64;
        let raw = talking_face(self.payload.width, self.payload.height, open, key.1, &self.payload.roi);
        let frame = Arc::new(match self.payload.quality {
            Some(q) => FramePayload::compress(&raw, q)?,
            None => FramePayload::Raw(raw),
        });
        self.cache.lock().expect("frame cache poisoned").insert(key, frame.clone());
        Ok(frame)
    }

    pub fn chunk(&self, seq: usize, capture_ts_us: Micros) -> Result<MediaChunk> {
        if seq >= self.chunk_count() {
            return Err(Error::invalid(format!("chunk {seq} beyond end of source")));
        }
        let frame = if self.payload.video {
            (*self.frame(seq)?).clone()
        } else {
            FramePayload::None
        };
        Ok(MediaChunk {
            seq: seq as u32,
            capture_ts_us,
            audio: self.chunk_audio(seq),
            frame,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_seconds_is_250_chunks() {
        let cfg = PipelineConfig::default();
        let src = MediaSource::new(Signal::zeros(160_000, 16_000), None, &cfg).unwrap();
        assert_eq!(src.chunk_count(), 250);
        assert_eq!(src.chunk(249, 0).unwrap().seq, 249);
        assert!(src.chunk(250, 0).is_err());
        let short = MediaSource::new(Signal::zeros(700, 16_000), None, &cfg).unwrap();
        assert_eq!(short.chunk_count(), 2);
        assert_eq!(short.chunk_audio(1).len(), 640);
    }

    #[test]
    fn mouth_tracks_target() {
        let cfg = PipelineConfig {
            payload: PayloadConfig {
                quality: Some(80),
                ..PayloadConfig::default()
            },
            ..PipelineConfig::default()
        };
        let mut clean = Signal::zeros(1280, 16_000);
        for v in &mut clean.samples[640..] {
            *v = 0.5;
        }
        let src = MediaSource::new(clean.clone(), Some(clean), &cfg).unwrap();
        assert_eq!(src.openness, vec![0, 15]);
        let c = src.chunk(1, 7).unwrap();
        let f = c.frame.decode_region(Some(&Roi::MOUTH)).unwrap().unwrap();
        assert!(f.pixels.iter().all(|&p| p < 30));
    }
}
