//! Grayscale video frames and synthetic talking-face material.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const FRAME_WIDTH: usize = 640;
pub const FRAME_HEIGHT: usize = 380;
pub const FPS: f64 = 25.0;

/// 8-bit grayscale frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoFrame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl VideoFrame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("frame dimensions must be positive"));
        }
        if pixels.len() != width * height {
            return Err(Error::invalid(format!(
                "frame has {} pixels, expected {}x{}",
                pixels.len(),
                width,
                height
            )));
        }
        Ok(VideoFrame { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        VideoFrame {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn at(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Copies the region `roi` into a new frame.
    pub fn crop(&self, roi: &Roi) -> Result<VideoFrame> {
        roi.check_within(self.width, self.height)?;
        let mut pixels = Vec::with_capacity(roi.width * roi.height);
        for y in roi.y..roi.y + roi.height {
            let row = y * self.width;
            pixels.extend_from_slice(&self.pixels[row + roi.x..row + roi.x + roi.width]);
        }
        Ok(VideoFrame {
            width: roi.width,
            height: roi.height,
            pixels,
        })
    }
}

/// Axis-aligned rectangle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Roi {
    /// Fixed mouth region of the synthetic face at the default resolution.
    pub const MOUTH: Roi = Roi {
        x: 256,
        y: 248,
        width: 128,
        height: 48,
    };

    pub fn full(width: usize, height: usize) -> Roi {
        Roi { x: 0, y: 0, width, height }
    }

    pub fn check_within(&self, width: usize, height: usize) -> Result<()> {
        if self.width == 0
            || self.height == 0
            || self.x + self.width > width
            || self.y + self.height > height
        {
            return Err(Error::invalid(format!(
                "roi {self:?} outside {width}x{height} frame"
            )));
        }
        Ok(())
    }
}

/// Renders a smooth synthetic face whose mouth region flickers with an
/// amplitude proportional to `openness` in `[0, 1]`. Consecutive frames use
/// opposite flicker polarity (`parity`), so the inter-frame difference inside
/// the mouth tracks how open the mouth is.
pub fn talking_face(width: usize, height: usize, openness: f64, parity: bool, mouth: &Roi) -> VideoFrame {
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    let (rx, ry) = (width as f64 * 0.22, height as f64 * 0.42);
    let mut pixels = vec![0u8; width * height];
    let open = openness.clamp(0.0, 1.0);
    let sign = if parity { 1.0 } else { -1.0 };
    for y in 0..height {
        for x in 0..width {
            let (fx, fy) = (x as f64, y as f64);
            let bg = 40.0 + 50.0 * fx / width as f64 + 20.0 * fy / height as f64;
            let d = ((fx - cx) / rx).powi(2) + ((fy - cy) / ry).powi(2);
            let face = if d < 1.0 { 110.0 * (1.0 - d).sqrt() } else { 0.0 };
            let mut v = bg + face;
            for ex in [cx - rx * 0.4, cx + rx * 0.4] {
                let e = ((fx - ex) / 18.0).powi(2) + ((fy - (cy - ry * 0.25)) / 10.0).powi(2);
                if e < 1.0 {
                    v -= 70.0 * (1.0 - e);
                }
            }
            if x >= mouth.x && x < mouth.x + mouth.width && y >= mouth.y && y < mouth.y + mouth.height {
                v = 128.0 + sign * 127.0 * open;
            }
            pixels[y * width + x] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    VideoFrame { width, height, pixels }
}

/// Random smooth frame: a few low-frequency cosines over a gradient.
pub fn smooth_frame(width: usize, height: usize, rng: &mut impl Rng) -> VideoFrame {
    let comps: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.gen_range(0.5..4.0),
                rng.gen_range(0.5..4.0),
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(10.0..40.0),
            )
        })
        .collect();
    let (gx, gy) = (rng.gen_range(-40.0..40.0), rng.gen_range(-40.0..40.0));
    let mut pixels = vec![0u8; width * height];
    for y in 0..height {
        for x in 0..width {
            let (u, v) = (x as f64 / width as f64, y as f64 / height as f64);
            let mut p = 128.0 + gx * (u - 0.5) + gy * (v - 0.5);
            for &(fu, fv, ph, a) in &comps {
                p += a * (std::f64::consts::TAU * (fu * u + fv * v) + ph).cos();
            }
            pixels[y * width + x] = p.round().clamp(0.0, 255.0) as u8;
        }
    }
    VideoFrame { width, height, pixels }
}
