use rustfft::num_complex::Complex64;

use crate::dsp::{istft, FeatureMap, Spectrogram, StftConfig};
use crate::scene::Signal;
use crate::{Error, Result};

/// Regulariser in the oracle mask denominator.
pub const ORACLE_EPS: f64 = 1e-12;
/// Spectral-subtraction gain floor relative to the mixture magnitude.
pub const SUBTRACTION_FLOOR: f64 = 0.01;
/// Noise magnitude over-subtraction factor.
pub const OVERSUBTRACTION: f64 = 2.0;

fn check_shapes(a: &Spectrogram, b: &Spectrogram) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::Shape(format!(
            "spectrograms differ: {}x{} vs {}x{}",
            a.frames, a.bins, b.frames, b.bins
        )));
    }
    Ok(())
}

/// Wiener-like ideal ratio mask `|X|² / (|X|² + |Y - X|² + ε)`.
pub fn oracle_mask(clean: &Spectrogram, mixture: &Spectrogram) -> Result<FeatureMap> {
    check_shapes(clean, mixture)?;
    let data = clean
        .data
        .iter()
        .zip(&mixture.data)
        .map(|(x, y)| {
            let s = x.norm_sqr();
            let n = (y - x).norm_sqr();
            s / (s + n + ORACLE_EPS)
        })
        .collect();
    Ok(FeatureMap {
        height: clean.frames,
        width: clean.bins,
        channels: 1,
        time_anchor: 0,
        data,
    })
}

fn check_mask(spec: &Spectrogram, mask: &FeatureMap) -> Result<()> {
    if mask.height != spec.frames || mask.width != spec.bins || mask.channels != 1 {
        return Err(Error::Shape(format!(
            "mask {:?} does not match spectrogram {}x{}",
            mask.shape(),
            spec.frames,
            spec.bins
        )));
    }
    if let Some(v) = mask.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid(format!("mask value {v} outside [0, 1]")));
    }
    Ok(())
}

/// Scales every time-frequency cell of `mixture` by `mask` and resynthesises.
pub fn apply_mask(mixture: &Spectrogram, mask: &FeatureMap) -> Result<Signal> {
    check_mask(mixture, mask)?;
    let mut masked = mixture.clone();
    for (c, m) in masked.data.iter_mut().zip(&mask.data) {
        *c *= *m;
    }
    istft(&masked)
}

/// Per-bin mean magnitude of a noise-only spectrogram.
fn mean_magnitude(profile: &Spectrogram) -> Vec<f64> {
    let mut acc = vec![0.0; profile.bins];
    for f in 0..profile.frames {
        for (a, c) in acc.iter_mut().zip(profile.frame(f)) {
            *a += c.norm();
        }
    }
    acc.iter().map(|v| v / profile.frames as f64).collect()
}

/// Magnitude-subtraction gains for `mixture`, floored at
/// [`SUBTRACTION_FLOOR`] of the mixture magnitude.
pub fn spectral_subtraction_gain(mixture: &Spectrogram, noise_profile: &Spectrogram) -> Result<FeatureMap> {
    if noise_profile.frames == 0 {
        return Err(Error::invalid("noise profile has no frames"));
    }
    if noise_profile.bins != mixture.bins || noise_profile.fft_size != mixture.fft_size {
        return Err(Error::invalid("noise profile resolution differs from the mixture"));
    }
    let noise = mean_magnitude(noise_profile);
    let mut data = Vec::with_capacity(mixture.data.len());
    for f in 0..mixture.frames {
        for (y, n) in mixture.frame(f).iter().zip(&noise) {
            let mag = y.norm();
            let g = if mag > 0.0 {
                ((mag - OVERSUBTRACTION * n) / mag).max(SUBTRACTION_FLOOR)
            } else {
                1.0
            };
            data.push(g.min(1.0));
        }
    }
    Ok(FeatureMap {
        height: mixture.frames,
        width: mixture.bins,
        channels: 1,
        time_anchor: 0,
        data,
    })
}

/// Blind spectral subtraction with mixture phase.
pub fn spectral_subtraction(mixture: &Signal, noise_profile: &Spectrogram) -> Result<Signal> {
    let cfg = StftConfig {
        fft_size: noise_profile.fft_size,
        hop: noise_profile.hop,
        window: noise_profile.window,
        padded: true,
    };
    let spec = cfg.analyze(mixture)?;
    let gain = spectral_subtraction_gain(&spec, noise_profile)?;
    apply_mask(&spec, &gain)
}

/// Noise estimate from the quietest `fraction` of frames of `spec`.
pub fn noise_profile_from_quietest(spec: &Spectrogram, fraction: f64) -> Result<Spectrogram> {
    if spec.frames == 0 {
        return Err(Error::invalid("spectrogram has no frames"));
    }
    let mut energy: Vec<(f64, usize)> = (0..spec.frames)
        .map(|f| (spec.frame(f).iter().map(Complex64::norm_sqr).sum(), f))
        .collect();
    energy.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let keep = ((spec.frames as f64 * fraction).ceil() as usize).clamp(1, spec.frames);
    let mut data = Vec::with_capacity(keep * spec.bins);
    for &(_, f) in energy.iter().take(keep) {
        data.extend_from_slice(spec.frame(f));
    }
    Ok(Spectrogram {
        frames: keep,
        data,
        ..spec.clone()
    })
}
