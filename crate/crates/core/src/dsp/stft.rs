use std::f64::consts::PI;

use rustfft::{num_complex::Complex64, FftPlanner};

use crate::scene::Signal;
use crate::{Error, Result};

/// Analysis/synthesis window pair. Both pairs overlap-add to unity at a hop
/// of half the transform size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowPair {
    /// Rectangular analysis, periodic Hann synthesis.
    #[default]
    RectHann,
    /// Square-root periodic Hann on both sides.
    SqrtHann,
}

impl WindowPair {
    pub fn analysis(self, n: usize) -> Vec<f64> {
        match self {
            WindowPair::RectHann => vec![1.0; n],
            WindowPair::SqrtHann => hann(n).into_iter().map(f64::sqrt).collect(),
        }
    }

    pub fn synthesis(self, n: usize) -> Vec<f64> {
        match self {
            WindowPair::RectHann => hann(n),
            WindowPair::SqrtHann => hann(n).into_iter().map(f64::sqrt).collect(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WindowPair::RectHann => "rect/hann",
            WindowPair::SqrtHann => "sqrt-hann",
        }
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / n as f64).cos()))
        .collect()
}

/// Complex short-time spectrum, `frames × bins`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: usize,
    pub bins: usize,
    pub fft_size: usize,
    pub hop: usize,
    pub window: WindowPair,
    pub sample_rate: u32,
    /// Zeros prepended before analysis; removed again by [`istft`].
    pub pad_front: usize,
    /// Length of the analysed signal (before padding).
    pub signal_len: usize,
    pub data: Vec<Complex64>,
}

impl Spectrogram {
    pub fn zeros_like(other: &Spectrogram) -> Spectrogram {
        Spectrogram {
            data: vec![Complex64::default(); other.data.len()],
            ..other.clone()
        }
    }

    pub fn frame(&self, f: usize) -> &[Complex64] {
        &self.data[f * self.bins..(f + 1) * self.bins]
    }

    pub fn at(&self, f: usize, b: usize) -> Complex64 {
        self.data[f * self.bins + b]
    }

    pub fn same_shape(&self, other: &Spectrogram) -> bool {
        self.frames == other.frames
            && self.bins == other.bins
            && self.fft_size == other.fft_size
            && self.hop == other.hop
    }

    pub fn validate(&self) -> Result<()> {
        if self.fft_size == 0 || self.hop == 0 || self.hop > self.fft_size {
            return Err(Error::invalid(format!(
                "spectrogram hop {} / fft size {} inconsistent",
                self.hop, self.fft_size
            )));
        }
        if self.bins != self.fft_size / 2 + 1 {
            return Err(Error::invalid(format!(
                "spectrogram has {} bins, expected {}",
                self.bins,
                self.fft_size / 2 + 1
            )));
        }
        if self.data.len() != self.frames * self.bins {
            return Err(Error::invalid("spectrogram data length != frames × bins"));
        }
        if self.sample_rate == 0 {
            return Err(Error::invalid("spectrogram sample rate must be positive"));
        }
        Ok(())
    }

    /// Centre time of frame `f` in the original signal, seconds.
    pub fn frame_time(&self, f: usize) -> f64 {
        (f as f64 * self.hop as f64 + self.fft_size as f64 / 2.0 - self.pad_front as f64)
            / self.sample_rate as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop: usize,
    pub window: WindowPair,
    /// Pad both ends so every original sample is covered by a full set of
    /// overlapping frames; reconstruction is then exact over the whole signal.
    pub padded: bool,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            fft_size: 512,
            hop: 256,
            window: WindowPair::default(),
            padded: true,
        }
    }
}

impl StftConfig {
    pub fn analyze(&self, signal: &Signal) -> Result<Spectrogram> {
        if self.fft_size < 2 || self.hop == 0 || self.hop > self.fft_size {
            return Err(Error::invalid(format!(
                "invalid stft geometry: fft {} hop {}",
                self.fft_size, self.hop
            )));
        }
        if !self.padded {
            if signal.len() < self.fft_size {
                return Err(Error::invalid(format!(
                    "signal of {} samples shorter than one {}-sample window",
                    signal.len(),
                    self.fft_size
                )));
            }
            return analyze_raw(&signal.samples, signal.sample_rate, self, 0, signal.len());
        }
        if signal.is_empty() {
            return Err(Error::invalid("cannot analyse an empty signal"));
        }
        let front = self.fft_size - self.hop;
        let mut total = front + signal.len() + front;
        let rem = (total - self.fft_size) % self.hop;
        if rem != 0 {
            total += self.hop - rem;
        }
        let mut buf = vec![0.0; total];
        buf[front..front + signal.len()].copy_from_slice(&signal.samples);
        analyze_raw(&buf, signal.sample_rate, self, front, signal.len())
    }
}

fn analyze_raw(
    x: &[f64],
    sample_rate: u32,
    cfg: &StftConfig,
    pad_front: usize,
    signal_len: usize,
) -> Result<Spectrogram> {
    let n = cfg.fft_size;
    let bins = n / 2 + 1;
    let frames = 1 + (x.len() - n) / cfg.hop;
    let win = cfg.window.analysis(n);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut data = Vec::with_capacity(frames * bins);
    let mut buf = vec![Complex64::default(); n];
    for f in 0..frames {
        let start = f * cfg.hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(x[start + i] * win[i], 0.0);
        }
        fft.process(&mut buf);
        data.extend_from_slice(&buf[..bins]);
    }
    Ok(Spectrogram {
        frames,
        bins,
        fft_size: n,
        hop: cfg.hop,
        window: cfg.window,
        sample_rate,
        pad_front,
        signal_len,
        data,
    })
}

/// Unpadded analysis with the default window pair.
pub fn stft(signal: &Signal, fft_size: usize, hop: usize) -> Result<Spectrogram> {
    StftConfig {
        fft_size,
        hop,
        padded: false,
        ..StftConfig::default()
    }
    .analyze(signal)
}

/// Weighted overlap-add synthesis. The result has `signal_len` samples.
pub fn istft(spec: &Spectrogram) -> Result<Signal> {
    spec.validate()?;
    let n = spec.fft_size;
    let ola_len = if spec.frames == 0 { 0 } else { n + (spec.frames - 1) * spec.hop };
    let mut out = vec![0.0; ola_len.max(spec.pad_front + spec.signal_len)];
    let win = spec.window.synthesis(n);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let mut buf = vec![Complex64::default(); n];
    let scale = 1.0 / n as f64;
    for f in 0..spec.frames {
        let frame = spec.frame(f);
        buf[..spec.bins].copy_from_slice(frame);
        // Hermitian completion of the one-sided spectrum.
        for k in spec.bins..n {
            buf[k] = frame[n - k].conj();
        }
        if n % 2 == 0 {
            buf[n / 2].im = 0.0;
        }
        buf[0].im = 0.0;
        ifft.process(&mut buf);
        let start = f * spec.hop;
        for i in 0..n {
            out[start + i] += buf[i].re * scale * win[i];
        }
    }
    let samples = out[spec.pad_front..spec.pad_front + spec.signal_len].to_vec();
    Ok(Signal {
        samples,
        sample_rate: spec.sample_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_signal(len: usize, seed: u64) -> Signal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Signal::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), 16_000).unwrap()
    }

    #[test]
    fn frame_count_and_short_input() {
        let s = random_signal(2000, 1);
        let spec = stft(&s, 512, 256).unwrap();
        assert_eq!(spec.frames, 1 + (2000 - 512) / 256);
        assert_eq!(spec.bins, 257);
        assert!(matches!(stft(&random_signal(100, 1), 512, 256), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn zero_signal_gives_zero_spectrum_and_back() {
        let z = Signal::zeros(4096, 16_000);
        let spec = stft(&z, 512, 256).unwrap();
        assert!(spec.data.iter().all(|c| c.norm() == 0.0));
        assert!(istft(&spec).unwrap().samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bin_centred_sinusoid_is_concentrated() {
        // Direct DFT of the single analysis frame as the oracle.
        let n = 512;
        let k0 = 37;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * PI * k0 as f64 * i as f64 / n as f64 + 0.3).cos())
            .collect();
        let s = Signal::new(x.clone(), 16_000).unwrap();
        let spec = stft(&s, n, n / 2).unwrap();
        let mut oracle = vec![0.0; n / 2 + 1];
        for (k, o) in oracle.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &v) in x.iter().enumerate() {
                let a = -2.0 * PI * (k * i) as f64 / n as f64;
                re += v * a.cos();
                im += v * a.sin();
            }
            *o = re * re + im * im;
        }
        for (k, &o) in oracle.iter().enumerate() {
            assert!((spec.at(0, k).norm_sqr() - o).abs() < 1e-6 * (1.0 + o));
        }
        let total: f64 = spec.frame(0).iter().map(|c| c.norm_sqr()).sum();
        assert!(spec.at(0, k0).norm_sqr() / total > 0.9);
    }

    #[test]
    fn round_trip_interior_unpadded() {
        for seed in 0..5 {
            let s = random_signal(16_000, seed);
            let back = istft(&stft(&s, 512, 256).unwrap()).unwrap();
            assert_eq!(back.len(), s.len());
            let last = 512 + ((s.len() - 512) / 256 - 1) * 256;
            for i in 512..last {
                assert!((back.samples[i] - s.samples[i]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn padded_round_trip_is_exact_everywhere() {
        for window in [WindowPair::RectHann, WindowPair::SqrtHann] {
            let cfg = StftConfig { window, ..StftConfig::default() };
            let s = random_signal(5003, 4);
            let back = istft(&cfg.analyze(&s).unwrap()).unwrap();
            assert_eq!(back.len(), s.len());
            let err = s.samples.iter().zip(&back.samples).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err < 1e-9, "{window:?}: {err}");
        }
    }

    #[test]
    fn single_frame_synthesis_is_windowed_frame() {
        // Hand overlap-add of one frame: x · analysis · synthesis.
        let s = random_signal(512, 7);
        let back = istft(&stft(&s, 512, 256).unwrap()).unwrap();
        let a = WindowPair::RectHann.analysis(512);
        let w = WindowPair::RectHann.synthesis(512);
        for i in 0..512 {
            assert!((back.samples[i] - s.samples[i] * a[i] * w[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn istft_rejects_bad_metadata() {
        let mut spec = stft(&random_signal(1024, 1), 512, 256).unwrap();
        spec.bins = 100;
        assert!(matches!(istft(&spec), Err(Error::InvalidInput(_))));
    }
}
