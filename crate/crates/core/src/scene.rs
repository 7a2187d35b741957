//! Ground-truth acoustic scenes.
//!
//! Each target source reaches the microphone through an impulse response
//! split at a boundary index into an early part (direct path and early
//! reflections) and a late reverberant tail. The early path yields the clean
//! reference; the late tail is lumped with additive noise as interference:
//!
//! ```text
//! clean_s[k]      = source_s[k] * early_s[k]
//! interference[k] = sum_s source_s[k] * late_s[k] + sum_c noise_c[k]
//! mixture[k]      = sum_s clean_s[k] + interference[k]
//! ```

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, SAMPLE_RATE};

#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        let s = Signal {
            samples,
            sample_rate,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Signal {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = self.samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }

    pub fn scaled(&self, c: f64) -> Signal {
        Signal {
            samples: self.samples.iter().map(|v| v * c).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Zero-pads or truncates to `len` samples.
    pub fn resized(mut self, len: usize) -> Signal {
        self.samples.resize(len, 0.0);
        self
    }

    fn add_assign(&mut self, other: &Signal) {
        if self.samples.len() < other.samples.len() {
            self.samples.resize(other.samples.len(), 0.0);
        }
        for (a, b) in self.samples.iter_mut().zip(&other.samples) {
            *a += b;
        }
    }
}

/// An impulse response split into early and late parts at `boundary`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponsePair {
    pub early: Vec<f64>,
    pub late: Vec<f64>,
    pub boundary: usize,
}

impl ImpulseResponsePair {
    /// Splits a full impulse response at `boundary`. Both parts keep the full
    /// length so that indices stay comparable.
    pub fn split(full: &[f64], boundary: usize) -> Result<Self> {
        if full.is_empty() {
            return Err(Error::invalid("empty impulse response"));
        }
        let mut early = full.to_vec();
        let mut late = full.to_vec();
        let b = boundary.min(full.len());
        early[b..].iter_mut().for_each(|v| *v = 0.0);
        late[..b].iter_mut().for_each(|v| *v = 0.0);
        let ir = ImpulseResponsePair {
            early,
            late,
            boundary,
        };
        ir.validate()?;
        Ok(ir)
    }

    /// Direct path only: unit impulse early part, silent tail.
    pub fn identity() -> Self {
        ImpulseResponsePair {
            early: vec![1.0],
            late: vec![0.0],
            boundary: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.early.is_empty() || self.late.is_empty() {
            return Err(Error::invalid("impulse response parts must be non-empty"));
        }
        if self.early.iter().chain(&self.late).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite impulse response coefficient"));
        }
        if self.early.iter().skip(self.boundary).any(|&v| v != 0.0) {
            return Err(Error::invalid("early response has energy past the boundary"));
        }
        if self.late.iter().take(self.boundary).any(|&v| v != 0.0) {
            return Err(Error::invalid("late response has energy before the boundary"));
        }
        Ok(())
    }

    /// Exponentially decaying white-noise response with a unit direct path.
    pub fn exponential(params: &IrParams, sample_rate: u32, rng: &mut impl Rng) -> Result<Self> {
        let sr = sample_rate as f64;
        let len = ((params.length_s * sr).round() as usize).max(1);
        let boundary = (params.boundary_s * sr).round() as usize;
        let mut full = vec![0.0; len];
        full[0] = 1.0;
        for (k, v) in full.iter_mut().enumerate().skip(1) {
            let w: f64 = StandardNormal.sample(rng);
            let t = k as f64 / sr;
            *v = if k < boundary {
                params.early_gain * w * (-t / params.early_decay_s).exp()
            } else {
                params.late_gain * w * (-t / params.late_decay_s).exp()
            };
        }
        Self::split(&full, boundary)
    }
}

#[derive(Debug, Clone)]
pub struct SceneSource {
    pub signal: Signal,
    pub ir: ImpulseResponsePair,
}

#[derive(Debug, Clone)]
pub struct AcousticScene {
    pub sources: Vec<SceneSource>,
    pub noises: Vec<Signal>,
    pub seed: u64,
}

impl AcousticScene {
    pub fn validate(&self) -> Result<()> {
        let first = self
            .sources
            .first()
            .ok_or_else(|| Error::invalid("scene needs at least one target source"))?;
        let sr = first.signal.sample_rate;
        for s in &self.sources {
            s.signal.validate()?;
            s.ir.validate()?;
            if s.signal.sample_rate != sr {
                return Err(Error::invalid("sources have mismatched sample rates"));
            }
        }
        for n in &self.noises {
            n.validate()?;
            if n.sample_rate != sr {
                return Err(Error::invalid("noise track sample rate differs from sources"));
            }
        }
        Ok(())
    }

    pub fn sample_rate(&self) -> u32 {
        self.sources.first().map_or(SAMPLE_RATE, |s| s.signal.sample_rate)
    }

    /// Length of the rendered tracks: the longest source or noise.
    pub fn len(&self) -> usize {
        self.sources
            .iter()
            .map(|s| s.signal.len())
            .chain(self.noises.iter().map(Signal::len))
            .max()
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Scales every source and noise track by `c`.
    pub fn scaled(&self, c: f64) -> AcousticScene {
        AcousticScene {
            sources: self
                .sources
                .iter()
                .map(|s| SceneSource {
                    signal: s.signal.scaled(c),
                    ir: s.ir.clone(),
                })
                .collect(),
            noises: self.noises.iter().map(|n| n.scaled(c)).collect(),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvolutionLength {
    /// Output has the input's length; keeps chunk boundaries aligned.
    #[default]
    Truncated,
    /// Output has `len(x) + len(h) - 1` samples.
    Full,
}

const DIRECT_CONVOLUTION_LIMIT: usize = 1 << 15;

/// Linear convolution of `x` with `h`.
pub fn convolve(x: &Signal, h: &[f64], length: ConvolutionLength) -> Result<Signal> {
    if x.is_empty() {
        return Err(Error::invalid("convolve: empty signal"));
    }
    if h.is_empty() {
        return Err(Error::invalid("convolve: empty filter"));
    }
    let full_len = x.len() + h.len() - 1;
    let out_len = match length {
        ConvolutionLength::Truncated => x.len(),
        ConvolutionLength::Full => full_len,
    };
    let mut out = vec![0.0; out_len];

    // Only the support of h contributes; the early/late split leaves long
    // runs of zeros on one side or the other.
    let Some(first) = h.iter().position(|&v| v != 0.0) else {
        return Ok(Signal::zeros(out_len, x.sample_rate));
    };
    let last = h.iter().rposition(|&v| v != 0.0).unwrap_or(first);
    let core = &h[first..=last];
    if first < out_len {
        let needed = out_len - first;
        let partial = if x.len().saturating_mul(core.len()) <= DIRECT_CONVOLUTION_LIMIT {
            direct_convolution(&x.samples, core, needed)
        } else {
            fft_convolution(&x.samples, core, needed)
        };
        out[first..].copy_from_slice(&partial);
    }
    Ok(Signal {
        samples: out,
        sample_rate: x.sample_rate,
    })
}

fn direct_convolution(x: &[f64], h: &[f64], out_len: usize) -> Vec<f64> {
    let mut out = vec![0.0; out_len];
    for (i, &xv) in x.iter().enumerate().take(out_len) {
        for (j, &hv) in h.iter().enumerate() {
            let k = i + j;
            if k >= out_len {
                break;
            }
            out[k] += xv * hv;
        }
    }
    out
}

fn fft_convolution(x: &[f64], h: &[f64], out_len: usize) -> Vec<f64> {
    let n = (x.len() + h.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut a: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    a.resize(n, Complex64::default());
    let mut b: Vec<Complex64> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    b.resize(n, Complex64::default());
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    let scale = 1.0 / n as f64;
    let mut out: Vec<f64> = a.iter().take(out_len).map(|c| c.re * scale).collect();
    out.resize(out_len, 0.0);
    out
}

/// Clean reference for one source: the source through its early response.
pub fn render_clean(source: &Signal, ir: &ImpulseResponsePair) -> Result<Signal> {
    ir.validate()?;
    convolve(source, &ir.early, ConvolutionLength::Truncated)
}

/// Late reverberation of every source plus every noise track.
pub fn render_interference(scene: &AcousticScene) -> Result<Signal> {
    scene.validate()?;
    let mut acc = Signal::zeros(scene.len(), scene.sample_rate());
    for s in &scene.sources {
        let tail = convolve(&s.signal, &s.ir.late, ConvolutionLength::Full)?.resized(scene.len());
        acc.add_assign(&tail);
    }
    for n in &scene.noises {
        acc.add_assign(n);
    }
    Ok(acc)
}

#[derive(Debug, Clone)]
pub struct Mixture {
    pub mixture: Signal,
    pub clean_refs: Vec<Signal>,
    pub interference: Signal,
}

impl Mixture {
    /// Sum of all clean references.
    pub fn clean_sum(&self) -> Signal {
        let mut acc = Signal::zeros(self.mixture.len(), self.mixture.sample_rate);
        for c in &self.clean_refs {
            acc.add_assign(c);
        }
        acc
    }
}

/// Renders the observed mixture together with its ground-truth parts.
pub fn mix(scene: &AcousticScene) -> Result<Mixture> {
    scene.validate()?;
    let len = scene.len();
    let clean_refs = scene
        .sources
        .iter()
        .map(|s| {
            s.ir.validate()?;
            Ok(convolve(&s.signal, &s.ir.early, ConvolutionLength::Full)?.resized(len))
        })
        .collect::<Result<Vec<_>>>()?;
    let interference = render_interference(scene)?;
    let mut mixture = interference.clone();
    for c in &clean_refs {
        mixture.add_assign(c);
    }
    Ok(Mixture {
        mixture,
        clean_refs,
        interference,
    })
}

/// Signal-to-noise ratio of `test` against `reference` in dB.
///
/// Returns `f64::INFINITY` when the two are identical.
pub fn snr_db(reference: &Signal, test: &Signal) -> Result<f64> {
    if reference.len() != test.len() {
        return Err(Error::invalid(format!(
            "snr: length mismatch ({} vs {})",
            reference.len(),
            test.len()
        )));
    }
    let signal = reference.energy();
    if signal == 0.0 {
        return Err(Error::UndefinedMetric("reference signal is all zeros".into()));
    }
    let noise: f64 = reference
        .samples
        .iter()
        .zip(&test.samples)
        .map(|(r, t)| (r - t) * (r - t))
        .sum();
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / noise).log10())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IrParams {
    pub length_s: f64,
    /// Early/late split point.
    pub boundary_s: f64,
    pub early_gain: f64,
    pub early_decay_s: f64,
    pub late_gain: f64,
    pub late_decay_s: f64,
}

impl Default for IrParams {
    fn default() -> Self {
        IrParams {
            length_s: 0.25,
            boundary_s: 0.05,
            early_gain: 0.05,
            early_decay_s: 0.02,
            late_gain: 0.02,
            late_decay_s: 0.08,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// Stationary white Gaussian noise.
    #[default]
    White,
    /// Stationary noise through a random one-pole low-pass.
    Colored,
}

/// Parameters for [`synth_scene`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneParams {
    pub targets: usize,
    pub noises: usize,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub input_snr_db: f64,
    pub noise_kind: NoiseKind,
    pub ir: IrParams,
    /// Peak amplitude of the mixture after normalisation.
    pub peak: f64,
    /// Optional PCM files used as target sources instead of the synthetic
    /// stand-in, one per target.
    pub source_files: Vec<PathBuf>,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            targets: 1,
            noises: 1,
            duration_s: 2.0,
            sample_rate: SAMPLE_RATE,
            input_snr_db: 0.0,
            noise_kind: NoiseKind::White,
            ir: IrParams::default(),
            peak: 0.9,
            source_files: Vec::new(),
        }
    }
}

/// Speech-like stand-in: syllables of amplitude-modulated harmonics over a
/// gliding fundamental, separated by short pauses.
pub fn speech_like(len: usize, sample_rate: u32, rng: &mut impl Rng) -> Signal {
    let sr = sample_rate as f64;
    let mut out = vec![0.0; len];
    let mut pos = (rng.gen_range(0.02..0.15) * sr) as usize;
    while pos < len {
        let syl = (rng.gen_range(0.12..0.30) * sr) as usize;
        let f0_start: f64 = rng.gen_range(100.0..220.0);
        let f0_end = f0_start * rng.gen_range(0.85..1.15);
        let harmonics = ((0.45 * sr / f0_start.max(f0_end)) as usize).clamp(1, 14);
        let gains: Vec<f64> = (1..=harmonics)
            .map(|h| rng.gen_range(0.5..1.0) / h as f64)
            .collect();
        let phases: Vec<f64> = (0..harmonics)
            .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
            .collect();
        let mut phase = 0.0;
        for i in 0..syl.min(len - pos) {
            let u = i as f64 / syl as f64;
            let f0 = f0_start + (f0_end - f0_start) * u;
            phase += std::f64::consts::TAU * f0 / sr;
            let env = 0.5 * (1.0 - (std::f64::consts::TAU * u).cos());
            let v: f64 = gains
                .iter()
                .zip(&phases)
                .enumerate()
                .map(|(h, (g, p))| g * ((h + 1) as f64 * phase + p).sin())
                .sum();
            out[pos + i] = 0.3 * env * v;
        }
        pos += syl + (rng.gen_range(0.05..0.25) * sr) as usize;
    }
    Signal {
        samples: out,
        sample_rate,
    }
}

fn noise_track(len: usize, sample_rate: u32, kind: NoiseKind, rng: &mut impl Rng) -> Signal {
    let mut samples: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
    if kind == NoiseKind::Colored {
        let a: f64 = rng.gen_range(0.3..0.9);
        let mut prev = 0.0;
        for v in samples.iter_mut() {
            prev = a * prev + (1.0 - a) * *v;
            *v = prev;
        }
    }
    Signal {
        samples,
        sample_rate,
    }
}

/// Builds a reproducible scene whose clean-sum to mixture SNR matches
/// `params.input_snr_db` (noise tracks are rescaled to hit the target).
pub fn synth_scene(params: &SceneParams, seed: u64) -> Result<AcousticScene> {
    let len = (params.duration_s * params.sample_rate as f64).round() as usize;
    if len == 0 || params.sample_rate == 0 {
        return Err(Error::invalid("scene must have positive duration and sample rate"));
    }
    if params.targets == 0 {
        return Err(Error::invalid("scene needs at least one target"));
    }
    if !params.source_files.is_empty() && params.source_files.len() != params.targets {
        return Err(Error::invalid("source_files must list one file per target"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sources = Vec::with_capacity(params.targets);
    for t in 0..params.targets {
        let signal = match params.source_files.get(t) {
            Some(path) => {
                let s = crate::wav::read(path)?;
                if s.sample_rate != params.sample_rate {
                    return Err(Error::invalid(format!(
                        "{}: sample rate {} != {}",
                        path.display(),
                        s.sample_rate,
                        params.sample_rate
                    )));
                }
                s.resized(len)
            }
            None => speech_like(len, params.sample_rate, &mut rng),
        };
        let ir = ImpulseResponsePair::exponential(&params.ir, params.sample_rate, &mut rng)?;
        sources.push(SceneSource { signal, ir });
    }
    let noises: Vec<Signal> = (0..params.noises)
        .map(|_| noise_track(len, params.sample_rate, params.noise_kind, &mut rng))
        .collect();
    let mut scene = AcousticScene {
        sources,
        noises,
        seed,
    };

    if !scene.noises.is_empty() {
        let quiet = AcousticScene {
            noises: Vec::new(),
            ..scene.clone()
        };
        let parts = mix(&quiet)?;
        let clean_energy = parts.clean_sum().energy();
        if clean_energy == 0.0 {
            return Err(Error::invalid("synthesised sources are silent"));
        }
        let late = &parts.interference;
        let mut noise = Signal::zeros(len, params.sample_rate);
        for n in &scene.noises {
            noise.add_assign(n);
        }
        let target = clean_energy / 10f64.powf(params.input_snr_db / 10.0);
        let gain = noise_gain(late, &noise, target).ok_or_else(|| {
            Error::invalid(format!(
                "late reverberation alone exceeds the interference budget for {} dB",
                params.input_snr_db
            ))
        })?;
        for n in scene.noises.iter_mut() {
            *n = n.scaled(gain);
        }
    }

    let peak = mix(&scene)?
        .mixture
        .samples
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 && params.peak > 0.0 {
        scene = scene.scaled(params.peak / peak);
    }
    Ok(scene)
}

/// Non-negative g with |late + g·noise|² = target, if one exists.
fn noise_gain(late: &Signal, noise: &Signal, target: f64) -> Option<f64> {
    let a: f64 = noise.energy();
    let b: f64 = 2.0 * late.samples.iter().zip(&noise.samples).map(|(l, n)| l * n).sum::<f64>();
    let c = late.energy() - target;
    if a == 0.0 {
        return None;
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let g = (-b + disc.sqrt()) / (2.0 * a);
    (g >= 0.0).then_some(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(v: &[f64]) -> Signal {
        Signal::new(v.to_vec(), SAMPLE_RATE).unwrap()
    }

    fn oracle(x: &[f64], h: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len() + h.len() - 1];
        for i in 0..x.len() {
            for j in 0..h.len() {
                y[i + j] += x[i] * h[j];
            }
        }
        y
    }

    #[test]
    fn short_source_tail_runs_past_its_end() {
        let ir = ImpulseResponsePair::split(&[1.0, 0.0, 0.5, 0.25], 2).unwrap();
        let scene = AcousticScene {
            sources: vec![SceneSource {
                signal: Signal::new(vec![1.0], 16_000).unwrap(),
                ir,
            }],
            noises: vec![Signal::zeros(5, 16_000)],
            seed: 0,
        };
        let m = mix(&scene).unwrap();
        assert_eq!(m.mixture.samples, vec![1.0, 0.0, 0.5, 0.25, 0.0]);
        assert_eq!(m.clean_refs[0].samples, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn convolve_identity_and_delay() {
        let x = sig(&[1.0, 2.0, 3.0]);
        assert_eq!(convolve(&x, &[1.0], ConvolutionLength::Truncated).unwrap().samples, vec![1.0, 2.0, 3.0]);
        let x = sig(&[1.0, 0.0, 0.0]);
        assert_eq!(
            convolve(&x, &[0.0, 0.5], ConvolutionLength::Truncated).unwrap().samples,
            vec![0.0, 0.5, 0.0]
        );
        assert_eq!(
            convolve(&x, &[0.0, 0.5], ConvolutionLength::Full).unwrap().samples,
            vec![0.0, 0.5, 0.0, 0.0]
        );
    }

    #[test]
    fn convolve_rejects_empty() {
        assert!(matches!(
            convolve(&sig(&[]), &[1.0], ConvolutionLength::Truncated),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            convolve(&sig(&[1.0]), &[], ConvolutionLength::Truncated),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn convolve_matches_direct_form_on_both_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (n, k) in [(256, 32), (4000, 600)] {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let want = oracle(&x, &h);
            let got = convolve(&sig(&x), &h, ConvolutionLength::Full).unwrap().samples;
            let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() / scale < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn render_clean_edge_cases() {
        let src = sig(&[0.5, -1.0, 0.25, 0.0, 2.0]);
        let ir = ImpulseResponsePair::identity();
        assert_eq!(render_clean(&src, &ir).unwrap(), src);
        let silent = ImpulseResponsePair {
            early: vec![0.0; 4],
            late: vec![0.0, 0.0, 0.0, 0.1],
            boundary: 3,
        };
        assert!(render_clean(&src, &silent).unwrap().samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ir_split_respects_boundary() {
        let ir = ImpulseResponsePair::split(&[1.0, 0.5, 0.25, 0.125], 2).unwrap();
        assert_eq!(ir.early, vec![1.0, 0.5, 0.0, 0.0]);
        assert_eq!(ir.late, vec![0.0, 0.0, 0.25, 0.125]);
        let bad = ImpulseResponsePair {
            early: vec![1.0, 1.0],
            late: vec![0.0, 0.0],
            boundary: 1,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn interference_cases() {
        let n = sig(&[0.1, -0.2, 0.3, 0.0]);
        let scene = AcousticScene {
            sources: vec![SceneSource {
                signal: sig(&[1.0, 2.0, 3.0, 4.0]),
                ir: ImpulseResponsePair::identity(),
            }],
            noises: vec![n.clone()],
            seed: 0,
        };
        assert_eq!(render_interference(&scene).unwrap(), n);

        let delayed = AcousticScene {
            sources: vec![SceneSource {
                signal: sig(&[1.0, 2.0, 3.0, 4.0]),
                ir: ImpulseResponsePair::split(&[1.0, 0.0, 1.0], 2).unwrap(),
            }],
            noises: vec![],
            seed: 0,
        };
        assert_eq!(render_interference(&delayed).unwrap().samples, vec![0.0, 0.0, 1.0, 2.0]);

        let mut mismatched = scene.clone();
        mismatched.noises[0].sample_rate = 8000;
        assert!(matches!(render_interference(&mismatched), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn mix_of_delta_sources() {
        let a = sig(&[1.0, 0.0, -1.0]);
        let b = sig(&[0.5, 0.5, 0.5]);
        let n = sig(&[0.01, 0.02, 0.03]);
        let scene = AcousticScene {
            sources: vec![
                SceneSource { signal: a.clone(), ir: ImpulseResponsePair::identity() },
                SceneSource { signal: b.clone(), ir: ImpulseResponsePair::identity() },
            ],
            noises: vec![n.clone()],
            seed: 0,
        };
        let m = mix(&scene).unwrap();
        for k in 0..3 {
            assert_eq!(m.mixture.samples[k], a.samples[k] + b.samples[k] + n.samples[k]);
        }
    }

    #[test]
    fn snr_definition() {
        let r = sig(&[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(snr_db(&r, &r).unwrap(), f64::INFINITY);
        let t = sig(&[1.0, 1.0, 0.0, 0.0]);
        assert!(snr_db(&r, &t).unwrap().abs() < 1e-12);
        assert!(matches!(snr_db(&sig(&[0.0, 0.0]), &sig(&[1.0, 0.0])), Err(Error::UndefinedMetric(_))));
        assert!(snr_db(&r, &sig(&[1.0])).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..500).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = sig(&x);
        // ref / (0.1·ref) energy ratio is 100 regardless of content
        let got = snr_db(&r, &r.scaled(0.9)).unwrap();
        assert!((got - 20.0).abs() < 1e-9, "{got}");
    }

    #[test]
    fn synth_is_deterministic_and_hits_snr() {
        let p = SceneParams::default();
        let a = synth_scene(&p, 7).unwrap();
        let b = synth_scene(&p, 7).unwrap();
        let bits = |s: &AcousticScene| -> Vec<u64> {
            s.sources
                .iter()
                .flat_map(|x| x.signal.samples.iter().chain(&x.ir.early).chain(&x.ir.late))
                .chain(s.noises.iter().flat_map(|n| n.samples.iter()))
                .map(|v| v.to_bits())
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&synth_scene(&p, 8).unwrap()));

        let m = mix(&a).unwrap();
        let snr = snr_db(&m.clean_sum(), &m.mixture).unwrap();
        assert!((-0.5..=0.5).contains(&snr), "{snr}");
        let peak = m.mixture.samples.iter().fold(0.0f64, |x, v| x.max(v.abs()));
        assert!((peak - 0.9).abs() < 1e-9);
    }

    #[test]
    fn synth_without_noise_or_tail_is_clean() {
        let p = SceneParams {
            noises: 0,
            ir: IrParams { late_gain: 0.0, ..IrParams::default() },
            ..SceneParams::default()
        };
        let m = mix(&synth_scene(&p, 1).unwrap()).unwrap();
        assert_eq!(m.mixture, m.clean_sum());
    }

    #[test]
    fn synth_rejects_zero_length() {
        let p = SceneParams { duration_s: 0.0, ..SceneParams::default() };
        assert!(matches!(synth_scene(&p, 0), Err(Error::InvalidInput(_))));
    }
}
