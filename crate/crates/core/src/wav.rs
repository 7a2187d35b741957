//! 16-bit mono PCM WAV I/O.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::scene::Signal;
use crate::{Error, Result};

/// Float sample to 16-bit PCM with clipping.
pub fn to_i16(v: f64) -> i16 {
    (v * 32767.0).round().clamp(-32768.0, 32767.0) as i16
}

pub fn from_i16(v: i16) -> f64 {
    v as f64 / 32767.0
}

pub fn write(path: impl AsRef<Path>, signal: &Signal) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path.as_ref(), spec)?;
    for &v in &signal.samples {
        w.write_sample(to_i16(v))?;
    }
    w.finalize()?;
    Ok(())
}

/// Reads a mono WAV; 16-bit integer and 32-bit float files are accepted.
pub fn read(path: impl AsRef<Path>) -> Result<Signal> {
    let mut r = WavReader::open(path.as_ref())?;
    let spec = r.spec();
    if spec.channels != 1 {
        return Err(Error::invalid(format!(
            "{}: expected mono, found {} channels",
            path.as_ref().display(),
            spec.channels
        )));
    }
    let samples = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => r
            .samples::<i16>()
            .map(|s| s.map(from_i16))
            .collect::<std::result::Result<Vec<_>, _>>()?,
        (SampleFormat::Float, 32) => r
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<Vec<_>, _>>()?,
        (fmt, bits) => {
            return Err(Error::invalid(format!(
                "{}: unsupported sample format {fmt:?}/{bits}",
                path.as_ref().display()
            )))
        }
    };
    Signal::new(samples, spec.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcm_round_trip_within_quantisation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let s = Signal::new(vec![0.0, 0.5, -0.5, 0.999, -1.0, 1.5], 16_000).unwrap();
        write(&path, &s).unwrap();
        let back = read(&path).unwrap();
        assert_eq!(back.sample_rate, 16_000);
        for (a, b) in s.samples.iter().zip(&back.samples) {
            assert!((a.clamp(-1.0, 1.0) - b).abs() <= 1.0 / 32767.0, "{a} {b}");
        }
    }
}
