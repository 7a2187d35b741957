use crate::dsp::Spectrogram;
use crate::video::{Roi, VideoFrame};
use crate::{Error, Result};

/// Real tensor of shape `height × width × channels`, channel-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Chunk sequence index the map is anchored to.
    pub time_anchor: u64,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        FeatureMap {
            height,
            width,
            channels,
            time_anchor: 0,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        FeatureMap {
            data: vec![value; height * width * channels],
            ..Self::zeros(height, width, channels)
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        let map = FeatureMap {
            height,
            width,
            channels,
            time_anchor: 0,
            data,
        };
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(Error::Shape("feature map dimensions must be >= 1".into()));
        }
        if self.data.len() != self.height * self.width * self.channels {
            return Err(Error::Shape("feature map data length mismatch".into()));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature map has non-finite entries"));
        }
        Ok(())
    }

    fn index(&self, i: usize, j: usize, c: usize) -> usize {
        (i * self.width + j) * self.channels + c
    }

    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.data[self.index(i, j, c)]
    }

    pub fn set(&mut self, i: usize, j: usize, c: usize, v: f64) {
        let k = self.index(i, j, c);
        self.data[k] = v;
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    /// Repeats a width-1 map across `width` columns.
    pub fn broadcast_width(&self, width: usize) -> Result<FeatureMap> {
        if self.width != 1 {
            return Err(Error::Shape(format!("cannot broadcast width {} to {width}", self.width)));
        }
        let mut out = FeatureMap::zeros(self.height, width, self.channels);
        out.time_anchor = self.time_anchor;
        for i in 0..self.height {
            for j in 0..width {
                for c in 0..self.channels {
                    out.set(i, j, c, self.get(i, 0, c));
                }
            }
        }
        Ok(out)
    }
}

/// Log-magnitude features `ln(1 + |X|)`; frames × bins × 1.
pub fn audio_features(spec: &Spectrogram) -> Result<FeatureMap> {
    spec.validate()?;
    Ok(FeatureMap {
        height: spec.frames,
        width: spec.bins,
        channels: 1,
        time_anchor: 0,
        data: spec.data.iter().map(|c| c.norm().ln_1p()).collect(),
    })
}

/// Per-frame lip activity: mean absolute inter-frame difference inside
/// `roi`, scaled to `[0, 1]` by the 8-bit range. Frame 0 borrows the value of
/// frame 1 since it has no predecessor.
pub fn lip_activity(frames: &[VideoFrame], roi: &Roi) -> Result<Vec<f64>> {
    if frames.len() < 2 {
        return Err(Error::invalid("lip activity needs at least two frames"));
    }
    let (w, h) = (frames[0].width, frames[0].height);
    roi.check_within(w, h)?;
    if frames.iter().any(|f| f.width != w || f.height != h) {
        return Err(Error::invalid("frames have differing dimensions"));
    }
    let area = (roi.width * roi.height) as f64;
    let mut act = Vec::with_capacity(frames.len());
    act.push(0.0);
    for pair in frames.windows(2) {
        let mut sum = 0u64;
        for y in roi.y..roi.y + roi.height {
            let row = y * w;
            for x in roi.x..roi.x + roi.width {
                sum += pair[1].pixels[row + x].abs_diff(pair[0].pixels[row + x]) as u64;
            }
        }
        act.push(sum as f64 / area / 255.0);
    }
    act[0] = act[1];
    Ok(act)
}

/// Lip activity resampled onto the analysis frames of `audio` by
/// nearest-neighbour lookup of the video frame covering each audio frame
/// centre; shape `audio.frames × 1 × 1`.
pub fn visual_features(
    frames: &[VideoFrame],
    roi: &Roi,
    fps: f64,
    audio: &Spectrogram,
) -> Result<FeatureMap> {
    let act = lip_activity(frames, roi)?;
    if audio.frames == 0 {
        return Err(Error::invalid("audio spectrogram has no frames"));
    }
    let last = act.len() - 1;
    let data = (0..audio.frames)
        .map(|f| {
            let t = audio.frame_time(f).max(0.0);
            act[((t * fps).floor() as usize).min(last)]
        })
        .collect();
    Ok(FeatureMap {
        height: audio.frames,
        width: 1,
        channels: 1,
        time_anchor: 0,
        data,
    })
}

/// Channel-interleaving concatenation fusion.
///
/// With 1-based channel numbering, output channel `2d-1` holds video channel
/// `d` and output channel `2d` holds audio channel `d` at the same `(i, j)`.
pub fn concat_fuse(audio: &FeatureMap, video: &FeatureMap) -> Result<FeatureMap> {
    if audio.shape() != video.shape() {
        return Err(Error::Shape(format!(
            "audio map {:?} vs video map {:?}",
            audio.shape(),
            video.shape()
        )));
    }
    let d = audio.channels;
    let mut data = Vec::with_capacity(audio.data.len() * 2);
    for (a, v) in audio.data.chunks_exact(d).zip(video.data.chunks_exact(d)) {
        for c in 0..d {
            data.push(v[c]);
            data.push(a[c]);
        }
    }
    Ok(FeatureMap {
        height: audio.height,
        width: audio.width,
        channels: 2 * d,
        time_anchor: audio.time_anchor,
        data,
    })
}

/// Inverse of [`concat_fuse`]: returns `(audio, video)`.
pub fn deinterleave(fused: &FeatureMap) -> Result<(FeatureMap, FeatureMap)> {
    if fused.channels % 2 != 0 {
        return Err(Error::Shape("fused map must have an even channel count".into()));
    }
    let d = fused.channels / 2;
    let mut audio = FeatureMap::zeros(fused.height, fused.width, d);
    let mut video = FeatureMap::zeros(fused.height, fused.width, d);
    audio.time_anchor = fused.time_anchor;
    video.time_anchor = fused.time_anchor;
    for (k, px) in fused.data.chunks_exact(2 * d).enumerate() {
        for c in 0..d {
            video.data[k * d + c] = px[2 * c];
            audio.data[k * d + c] = px[2 * c + 1];
        }
    }
    Ok((audio, video))
}
