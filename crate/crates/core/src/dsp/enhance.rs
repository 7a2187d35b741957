use serde::{Deserialize, Serialize};

use crate::dsp::{
    apply_mask, audio_features, concat_fuse, deinterleave, noise_profile_from_quietest,
    oracle_mask, spectral_subtraction_gain, visual_features, StftConfig,
};
use crate::scene::Signal;
use crate::video::{Roi, VideoFrame, FPS};
use crate::{Error, Result};

/// Input duration the emulated model tiers are timed against.
pub const REFERENCE_WINDOW_S: f64 = 0.2;

/// Fraction of quietest frames used as the blind noise estimate.
const NOISE_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnhancerKind {
    Passthrough,
    OracleMask,
    SpectralSubtraction,
    VisualGated,
    /// Passthrough audio with model-like processing time.
    Emulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelTier {
    Model1,
    Model2,
    Model3,
}

impl ModelTier {
    pub const ALL: [ModelTier; 3] = [ModelTier::Model1, ModelTier::Model2, ModelTier::Model3];

    /// Processing time on the reference window, seconds.
    pub fn latency(self) -> f64 {
        match self {
            ModelTier::Model1 => 1.2,
            ModelTier::Model2 => 0.55,
            ModelTier::Model3 => 0.35,
        }
    }

    pub fn parameters(self) -> u64 {
        match self {
            ModelTier::Model1 => 1_540_396,
            ModelTier::Model2 => 603_564,
            ModelTier::Model3 => 202_564,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelTier::Model1 => "model1",
            ModelTier::Model2 => "model2",
            ModelTier::Model3 => "model3",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        ModelTier::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::invalid(format!("unknown model tier {name:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnhancerSpec {
    pub kind: EnhancerKind,
    /// Processing latency, seconds. For `emulated` this is the latency on a
    /// window of `reference_window_s`; other kinds report it unscaled.
    pub t_a: f64,
    /// Input window the algorithm needs, seconds.
    pub t_i: f64,
    pub reference_window_s: f64,
    pub params: u64,
}

impl Default for EnhancerSpec {
    fn default() -> Self {
        EnhancerSpec {
            kind: EnhancerKind::Passthrough,
            t_a: 0.0,
            t_i: REFERENCE_WINDOW_S,
            reference_window_s: REFERENCE_WINDOW_S,
            params: 0,
        }
    }
}

impl EnhancerSpec {
    pub fn passthrough(t_i: f64) -> Self {
        EnhancerSpec { t_i, ..Self::default() }
    }

    pub fn tier(tier: ModelTier) -> Self {
        EnhancerSpec {
            kind: EnhancerKind::Emulated,
            t_a: tier.latency(),
            t_i: REFERENCE_WINDOW_S,
            reference_window_s: REFERENCE_WINDOW_S,
            params: tier.parameters(),
        }
    }

    /// Emulated model taking `t_a` seconds on a window of exactly `t_i`.
    pub fn emulated(t_a: f64, t_i: f64) -> Self {
        EnhancerSpec {
            kind: EnhancerKind::Emulated,
            t_a,
            t_i,
            reference_window_s: t_i,
            params: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_a >= 0.0 && self.t_a.is_finite()) {
            return Err(Error::Config(format!("t_a must be >= 0, got {}", self.t_a)));
        }
        if !(self.t_i > 0.0 && self.t_i.is_finite()) {
            return Err(Error::Config(format!("t_i must be > 0, got {}", self.t_i)));
        }
        if !(self.reference_window_s > 0.0) {
            return Err(Error::Config("reference window must be positive".into()));
        }
        Ok(())
    }

    /// Processing time for a window of `window_s` seconds.
    pub fn latency_for(&self, window_s: f64) -> f64 {
        match self.kind {
            EnhancerKind::Emulated => self.t_a * window_s / self.reference_window_s,
            _ => self.t_a,
        }
    }
}

/// A buffered stretch of media handed to an enhancer.
#[derive(Debug, Clone)]
pub struct MediaWindow {
    pub audio: Signal,
    /// Frames covering the audio, one per `1/fps` seconds from its start.
    pub frames: Vec<VideoFrame>,
    /// Mouth region within `frames`.
    pub roi: Roi,
    pub fps: f64,
}

impl MediaWindow {
    pub fn audio_only(audio: Signal) -> Self {
        MediaWindow {
            audio,
            frames: Vec::new(),
            roi: Roi::MOUTH,
            fps: FPS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Enhanced {
    pub audio: Signal,
    /// Processing time attributed to this run, seconds.
    pub latency_s: f64,
}

/// Runs one enhancement over `window`.
///
/// `oracle` supplies the clean reference for [`EnhancerKind::OracleMask`].
pub fn enhance(window: &MediaWindow, spec: &EnhancerSpec, oracle: Option<&Signal>) -> Result<Enhanced> {
    spec.validate()?;
    let duration = window.audio.duration();
    if spec.kind != EnhancerKind::Passthrough && duration + 1e-9 < spec.t_i {
        return Err(Error::InsufficientInput {
            needed: spec.t_i,
            got: duration,
        });
    }
    let latency_s = spec.latency_for(duration);
    let audio = match spec.kind {
        EnhancerKind::Passthrough | EnhancerKind::Emulated => window.audio.clone(),
        EnhancerKind::OracleMask => {
            let clean = oracle.ok_or_else(|| Error::invalid("oracle mask needs a clean reference"))?;
            if clean.len() != window.audio.len() {
                return Err(Error::invalid("clean reference length differs from window"));
            }
            let cfg = StftConfig::default();
            let mixture = cfg.analyze(&window.audio)?;
            let mask = oracle_mask(&cfg.analyze(clean)?, &mixture)?;
            apply_mask(&mixture, &mask)?
        }
        EnhancerKind::SpectralSubtraction => {
            let mixture = StftConfig::default().analyze(&window.audio)?;
            let profile = noise_profile_from_quietest(&mixture, NOISE_FRACTION)?;
            apply_mask(&mixture, &spectral_subtraction_gain(&mixture, &profile)?)?
        }
        EnhancerKind::VisualGated => visual_gated(window)?,
    };
    Ok(Enhanced { audio, latency_s })
}

/// Spectral-subtraction gain attenuated where the lips are still:
/// `gain · (0.1 + 0.9 · activity)`, with activity read back from the video
/// channel of the fused audio-visual map.
fn visual_gated(window: &MediaWindow) -> Result<Signal> {
    let mixture = StftConfig::default().analyze(&window.audio)?;
    let audio = audio_features(&mixture)?;
    let video = visual_features(&window.frames, &window.roi, window.fps, &mixture)?
        .broadcast_width(mixture.bins)?;
    let fused = concat_fuse(&audio, &video)?;
    let (_, activity) = deinterleave(&fused)?;
    let profile = noise_profile_from_quietest(&mixture, NOISE_FRACTION)?;
    let mut gain = spectral_subtraction_gain(&mixture, &profile)?;
    for (g, a) in gain.data.iter_mut().zip(&activity.data) {
        *g *= 0.1 + 0.9 * a.clamp(0.0, 1.0);
    }
    apply_mask(&mixture, &gain)
}

/// Parameter count of a stack of dense layers with biases.
pub fn count_parameters(layers: &[usize]) -> Result<u64> {
    if layers.is_empty() {
        return Err(Error::invalid("layer list is empty"));
    }
    if layers.contains(&0) {
        return Err(Error::invalid("layer sizes must be >= 1"));
    }
    Ok(layers
        .windows(2)
        .map(|w| ((w[0] + 1) * w[1]) as u64)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window(seconds: f64) -> MediaWindow {
        let n = (seconds * 16_000.0).round() as usize;
        let samples = (0..n).map(|i| (i as f64 * 0.01).sin() * 0.3).collect();
        MediaWindow::audio_only(Signal::new(samples, 16_000).unwrap())
    }

    #[test]
    fn passthrough_is_bitwise_identity() {
        let w = window(0.3);
        let out = enhance(&w, &EnhancerSpec::default(), None).unwrap();
        assert_eq!(out.audio, w.audio);
        assert_eq!(out.latency_s, 0.0);
    }

    #[test]
    fn tier_latencies_on_reference_window() {
        let w = window(REFERENCE_WINDOW_S);
        for (tier, want) in [(ModelTier::Model1, 1.2), (ModelTier::Model2, 0.55), (ModelTier::Model3, 0.35)] {
            let got = enhance(&w, &EnhancerSpec::tier(tier), None).unwrap().latency_s;
            assert!((got - want).abs() <= 0.01 * want, "{tier:?}: {got}");
        }
    }

    #[test]
    fn emulated_latency_is_proportional() {
        let spec = EnhancerSpec::tier(ModelTier::Model2);
        let a = enhance(&window(0.4), &spec, None).unwrap().latency_s;
        let b = enhance(&window(0.8), &spec, None).unwrap().latency_s;
        assert!((b / a - 2.0).abs() < 0.01);
    }

    #[test]
    fn short_window_is_rejected() {
        let err = enhance(&window(0.1), &EnhancerSpec::tier(ModelTier::Model3), None).unwrap_err();
        assert!(matches!(err, Error::InsufficientInput { .. }));
        let oracle = EnhancerSpec { kind: EnhancerKind::OracleMask, ..EnhancerSpec::default() };
        assert!(matches!(enhance(&window(0.3), &oracle, None), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(count_parameters(&[1]).unwrap(), 0);
        assert_eq!(count_parameters(&[2, 3]).unwrap(), 9);
        assert_eq!(count_parameters(&[10, 20, 5]).unwrap(), 325);
        assert!(count_parameters(&[]).is_err());
    }
}
