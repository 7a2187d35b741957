//! Time-frequency grids as CSV and grayscale PNG.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use avse_core::dsp::{FeatureMap, Spectrogram};
use avse_core::video::VideoFrame;
use avse_core::{Error, Result};

use crate::out::io_err;

/// Frames × bins grid with the time of each frame.
pub struct Grid {
    pub times: Vec<f64>,
    pub bins: usize,
    pub values: Vec<f64>,
}

impl Grid {
    /// Magnitude in dB, floored at -120 dB.
    pub fn spectrogram_db(spec: &Spectrogram) -> Grid {
        Grid {
            times: (0..spec.frames).map(|f| spec.frame_time(f)).collect(),
            bins: spec.bins,
            values: spec.data.iter().map(|c| 20.0 * c.norm().max(1e-6).log10()).collect(),
        }
    }

    pub fn mask(spec: &Spectrogram, mask: &FeatureMap) -> Grid {
        Grid {
            times: (0..spec.frames).map(|f| spec.frame_time(f)).collect(),
            bins: mask.width,
            values: mask.data.clone(),
        }
    }

    fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.bins)
    }

    /// Header `t,b0,b1,...`, then one row per frame.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| io_err(path, e))?;
        let mut w = BufWriter::new(f);
        let res = (|| -> std::io::Result<()> {
            write!(w, "t")?;
            for b in 0..self.bins {
                write!(w, ",b{b}")?;
            }
            writeln!(w)?;
            for (t, row) in self.times.iter().zip(self.rows()) {
                write!(w, "{t:.6}")?;
                for v in row {
                    write!(w, ",{v:.6}")?;
                }
                writeln!(w)?;
            }
            w.flush()
        })();
        res.map_err(|e| io_err(path, e))
    }

    /// Heatmap with time left to right and frequency bottom to top, scaled
    /// to the grid's own range.
    pub fn write_png(&self, path: &Path) -> Result<()> {
        let frames = self.times.len();
        if frames == 0 || self.bins == 0 {
            return Err(Error::InvalidInput("empty grid".into()));
        }
        let (lo, hi) = self.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let mut pixels = vec![0u8; frames * self.bins];
        for (f, row) in self.rows().enumerate() {
            for (b, v) in row.iter().enumerate() {
                let y = self.bins - 1 - b;
                pixels[y * frames + f] = (255.0 * (v - lo) / span).round() as u8;
            }
        }
        write_gray(path, frames, self.bins, &pixels)
    }
}

pub fn write_frame_png(path: &Path, frame: &VideoFrame) -> Result<()> {
    write_gray(path, frame.width, frame.height, &frame.pixels)
}

fn write_gray(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(f), width as u32, height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let png_err = |e: png::EncodingError| match e {
        png::EncodingError::IoError(e) => io_err(path, e),
        other => Error::InvalidInput(format!("{}: {other}", path.display())),
    };
    let mut w = enc.write_header().map_err(png_err)?;
    w.write_image_data(pixels).map_err(png_err)?;
    w.finish().map_err(png_err)
}
