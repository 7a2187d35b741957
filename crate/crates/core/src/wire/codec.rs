//! Block-DCT grayscale frame codec with a quality knob.
//!
//! Stream layout (big-endian):
//!
//! | offset | size | field            |
//! |--------|------|------------------|
//! | 0      | 2    | width            |
//! | 2      | 2    | height           |
//! | 4      | 1    | quality (1..=100)|
//! | 5      | ...  | coefficient runs |
//!
//! Coefficients are quantised per 8×8 block, visited in zig-zag order with
//! the DC term replaced by its difference from the previous block, and
//! concatenated over all blocks in raster order. The whole sequence is coded
//! as `(zero_run: varint, value: zig-zag varint)` pairs; a final bare run
//! covers trailing zeros.

use std::sync::OnceLock;

use crate::video::{Roi, VideoFrame};
use crate::{Error, Result};

const HEADER_LEN: usize = 5;

#[rustfmt::skip]
const LUMA_TABLE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
];

#[rustfmt::skip]
const ZIGZAG: [usize; 64] = [
     0,  1,  8, 16,  9,  2,  3, 10,
    17, 24, 32, 25, 18, 11,  4,  5,
    12, 19, 26, 33, 40, 48, 41, 34,
    27, 20, 13,  6,  7, 14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36,
    29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46,
    53, 60, 61, 54, 47, 55, 62, 63,
];

/// Quality-scaled quantisation steps (natural order).
pub fn quant_table(quality: u8) -> [u16; 64] {
    let q = quality.clamp(1, 100) as u32;
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let mut out = [0u16; 64];
    for (o, &b) in out.iter_mut().zip(LUMA_TABLE.iter()) {
        *o = ((b as u32 * scale + 50) / 100).clamp(1, 255) as u16;
    }
    out
}

fn dct_matrix() -> &'static [[f64; 8]; 8] {
    static M: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    M.get_or_init(|| {
        let mut m = [[0.0; 8]; 8];
        for (k, row) in m.iter_mut().enumerate() {
            let c = if k == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
            for (n, v) in row.iter_mut().enumerate() {
                *v = c * (std::f64::consts::PI * (2 * n + 1) as f64 * k as f64 / 16.0).cos();
            }
        }
        m
    })
}

fn fdct(block: &[f64; 64]) -> [f64; 64] {
    let m = dct_matrix();
    let mut tmp = [0.0; 64];
    for k in 0..8 {
        for x in 0..8 {
            let mut s = 0.0;
            for n in 0..8 {
                s += m[k][n] * block[n * 8 + x];
            }
            tmp[k * 8 + x] = s;
        }
    }
    let mut out = [0.0; 64];
    for k in 0..8 {
        for l in 0..8 {
            let mut s = 0.0;
            for n in 0..8 {
                s += tmp[k * 8 + n] * m[l][n];
            }
            out[k * 8 + l] = s;
        }
    }
    out
}

fn idct(coef: &[f64; 64]) -> [f64; 64] {
    let m = dct_matrix();
    let mut tmp = [0.0; 64];
    for n in 0..8 {
        for l in 0..8 {
            let mut s = 0.0;
            for k in 0..8 {
                s += m[k][n] * coef[k * 8 + l];
            }
            tmp[n * 8 + l] = s;
        }
    }
    let mut out = [0.0; 64];
    for n in 0..8 {
        for x in 0..8 {
            let mut s = 0.0;
            for l in 0..8 {
                s += tmp[n * 8 + l] * m[l][x];
            }
            out[n * 8 + x] = s;
        }
    }
    out
}

pub(crate) fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

pub(crate) fn get_varint(buf: &[u8], pos: &mut usize) -> Option<u64> {
    let mut v = 0u64;
    for shift in (0..64).step_by(7) {
        let b = *buf.get(*pos)?;
        *pos += 1;
        v |= ((b & 0x7f) as u64) << shift;
        if b & 0x80 == 0 {
            return Some(v);
        }
    }
    None
}

fn zigzag_encode(v: i32) -> u64 {
    ((v << 1) ^ (v >> 31)) as u32 as u64
}

fn zigzag_decode(v: u64) -> Option<i32> {
    let v = u32::try_from(v).ok()?;
    Some(((v >> 1) as i32) ^ -((v & 1) as i32))
}

fn blocks(width: usize, height: usize) -> (usize, usize) {
    (width.div_ceil(8), height.div_ceil(8))
}

/// Compresses `frame` at `quality` in `1..=100` (100 is near-lossless).
pub fn compress_frame(frame: &VideoFrame, quality: u8) -> Result<Vec<u8>> {
    if !(1..=100).contains(&quality) {
        return Err(Error::invalid(format!("quality {quality} outside 1..=100")));
    }
    if frame.width > u16::MAX as usize || frame.height > u16::MAX as usize {
        return Err(Error::invalid("frame too large for codec header"));
    }
    if frame.pixels.len() != frame.width * frame.height {
        return Err(Error::invalid("frame pixel count does not match its dimensions"));
    }
    let q = quant_table(quality);
    let (bw, bh) = blocks(frame.width, frame.height);
    let mut out = Vec::with_capacity(frame.pixels.len() / 8);
    out.extend_from_slice(&(frame.width as u16).to_be_bytes());
    out.extend_from_slice(&(frame.height as u16).to_be_bytes());
    out.push(quality);

    let mut run = 0u64;
    let mut prev_dc = 0i32;
    let mut block = [0.0; 64];
    for by in 0..bh {
        for bx in 0..bw {
            for y in 0..8 {
                let py = (by * 8 + y).min(frame.height - 1);
                for x in 0..8 {
                    let px = (bx * 8 + x).min(frame.width - 1);
                    block[y * 8 + x] = frame.pixels[py * frame.width + px] as f64 - 128.0;
                }
            }
            let coef = fdct(&block);
            for (i, &zz) in ZIGZAG.iter().enumerate() {
                let mut v = (coef[zz] / q[zz] as f64).round() as i32;
                if i == 0 {
                    let dc = v;
                    v -= prev_dc;
                    prev_dc = dc;
                }
                if v == 0 {
                    run += 1;
                } else {
                    put_varint(&mut out, run);
                    put_varint(&mut out, zigzag_encode(v));
                    run = 0;
                }
            }
        }
    }
    if run > 0 {
        put_varint(&mut out, run);
    }
    Ok(out)
}

struct Decoded {
    width: usize,
    height: usize,
    quality: u8,
    coef: Vec<i32>,
}

fn decode_coefficients(bytes: &[u8]) -> Result<Decoded> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Codec("stream shorter than header".into()));
    }
    let width = u16::from_be_bytes([bytes[0], bytes[1]]) as usize;
    let height = u16::from_be_bytes([bytes[2], bytes[3]]) as usize;
    let quality = bytes[4];
    if width == 0 || height == 0 || !(1..=100).contains(&quality) {
        return Err(Error::Codec("bad header".into()));
    }
    let (bw, bh) = blocks(width, height);
    let total = bw * bh * 64;
    let mut coef = vec![0i32; total];
    let mut pos = HEADER_LEN;
    let mut k = 0usize;
    while k < total {
        let run = get_varint(bytes, &mut pos).ok_or_else(|| Error::Codec("truncated run".into()))?;
        let run = usize::try_from(run).map_err(|_| Error::Codec("run overflow".into()))?;
        k = k
            .checked_add(run)
            .filter(|&k| k <= total)
            .ok_or_else(|| Error::Codec("run past end of frame".into()))?;
        if k == total {
            break;
        }
        let v = get_varint(bytes, &mut pos)
            .and_then(zigzag_decode)
            .ok_or_else(|| Error::Codec("truncated coefficient".into()))?;
        if v == 0 {
            return Err(Error::Codec("explicit zero coefficient".into()));
        }
        coef[k] = v;
        k += 1;
    }
    if pos != bytes.len() {
        return Err(Error::Codec(format!("{} trailing bytes", bytes.len() - pos)));
    }
    // undo DC prediction
    let mut prev = 0i32;
    for b in coef.chunks_exact_mut(64) {
        b[0] = b[0].checked_add(prev).ok_or_else(|| Error::Codec("dc overflow".into()))?;
        prev = b[0];
    }
    Ok(Decoded {
        width,
        height,
        quality,
        coef,
    })
}

fn reconstruct(d: &Decoded, roi: &Roi) -> VideoFrame {
    let q = quant_table(d.quality);
    let (bw, _) = blocks(d.width, d.height);
    let mut pixels = vec![0u8; roi.width * roi.height];
    let mut coef = [0.0; 64];
    for by in roi.y / 8..(roi.y + roi.height).div_ceil(8) {
        for bx in roi.x / 8..(roi.x + roi.width).div_ceil(8) {
            let b = &d.coef[(by * bw + bx) * 64..(by * bw + bx + 1) * 64];
            for (i, &zz) in ZIGZAG.iter().enumerate() {
                coef[zz] = b[i] as f64 * q[zz] as f64;
            }
            let px = idct(&coef);
            for y in 0..8 {
                let fy = by * 8 + y;
                if fy < roi.y || fy >= roi.y + roi.height {
                    continue;
                }
                for x in 0..8 {
                    let fx = bx * 8 + x;
                    if fx < roi.x || fx >= roi.x + roi.width {
                        continue;
                    }
                    pixels[(fy - roi.y) * roi.width + (fx - roi.x)] =
                        (px[y * 8 + x] + 128.0).round().clamp(0.0, 255.0) as u8;
                }
            }
        }
    }
    VideoFrame {
        width: roi.width,
        height: roi.height,
        pixels,
    }
}

pub fn decompress_frame(bytes: &[u8]) -> Result<VideoFrame> {
    let d = decode_coefficients(bytes)?;
    let roi = Roi::full(d.width, d.height);
    Ok(reconstruct(&d, &roi))
}

/// Decodes only the pixels inside `roi`; entropy decoding still covers the
/// whole stream so malformed input is rejected the same way.
pub fn decompress_region(bytes: &[u8], roi: &Roi) -> Result<VideoFrame> {
    let d = decode_coefficients(bytes)?;
    roi.check_within(d.width, d.height)
        .map_err(|e| Error::Codec(e.to_string()))?;
    Ok(reconstruct(&d, roi))
}
