//! Latency decomposition, playout gaps, enhancement quality and the
//! network / compression / chunk-size sweeps.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dsp::{enhance, EnhancerKind, EnhancerSpec, MediaWindow, ModelTier};
use crate::netem::{rtt_experiment, ChannelModel, PRESETS, RTT_EXPERIMENT_LEN};
use crate::par::{self, Strategy};
use crate::pipeline::{EventKind, EventLog, RunOutput};
use crate::scene::{mix, snr_db, synth_scene, SceneParams, Signal};
use crate::video::{smooth_frame, talking_face, Roi, VideoFrame};
use crate::wire::{compress_frame, payload_size, ChunkFormat, PayloadMode};
use crate::{Error, Result};

/// Gaps are play intervals longer than one chunk plus this slack, seconds.
pub const GAP_SLACK: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChunkLatency {
    pub seq: u32,
    /// Forward network latency.
    pub t1: f64,
    /// Server residence: buffering plus processing.
    pub t2: f64,
    /// Reverse network latency.
    pub t3: f64,
    /// Sent to arrived back at the client.
    pub t_delay: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub min: f64,
    pub median: f64,
    pub p95: f64,
    pub max: f64,
    pub mean: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let pick = |q: f64| v[((v.len() - 1) as f64 * q).round() as usize];
        Some(Summary {
            min: v[0],
            median: pick(0.5),
            p95: pick(0.95),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnrTriple {
    pub input_snr: f64,
    pub output_snr: f64,
    pub improvement: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub chunks: Vec<ChunkLatency>,
    pub t_delay: Option<Summary>,
    pub t_comm: Option<Summary>,
    pub gap_count: usize,
    pub gap_total: f64,
    pub dropped: usize,
    pub quality: Option<SnrTriple>,
    pub payload_bytes: f64,
    pub protocol_errors: usize,
    pub coherent: bool,
}

/// Splits every delivered chunk's delay into forward, server and reverse
/// parts. Chunks marked dropped are skipped.
pub fn decompose(log: &EventLog) -> Result<Vec<ChunkLatency>> {
    let table = log.table();
    let mut missing = Vec::new();
    let mut out = Vec::new();
    for (seq, row) in table.iter().enumerate() {
        if row[EventKind::Captured as usize].is_none() || row[EventKind::Dropped as usize].is_some() {
            continue;
        }
        let get = |k: EventKind| row[k as usize];
        match (
            get(EventKind::Sent),
            get(EventKind::ArrivedServer),
            get(EventKind::SentBack),
            get(EventKind::ArrivedClient),
        ) {
            (Some(s), Some(a), Some(b), Some(c)) => out.push(ChunkLatency {
                seq: seq as u32,
                t1: a - s,
                t2: b - a,
                t3: c - b,
                t_delay: c - s,
            }),
            _ => missing.push(seq as u32),
        }
    }
    if !missing.is_empty() {
        return Err(Error::IncompleteLog(missing));
    }
    Ok(out)
}

/// Number of playout gaps and their total excess over `t_chunk`, seconds.
pub fn gap_report(log: &EventLog, t_chunk: f64) -> Result<(usize, f64)> {
    let played = log.times(EventKind::Played);
    if played.is_empty() {
        return Err(Error::EmptyPlayback);
    }
    let mut count = 0;
    let mut total = 0.0;
    for w in played.windows(2) {
        let dt = w[1].1 - w[0].1;
        if dt > t_chunk + GAP_SLACK {
            count += 1;
            total += dt - t_chunk;
        }
    }
    Ok((count, total))
}

pub fn quality(clean: &Signal, noisy: &Signal, enhanced: &Signal) -> Result<SnrTriple> {
    if clean.len() != noisy.len() || clean.len() != enhanced.len() {
        return Err(Error::invalid(format!(
            "quality: lengths differ ({}, {}, {})",
            clean.len(),
            noisy.len(),
            enhanced.len()
        )));
    }
    let input_snr = snr_db(clean, noisy)?;
    let output_snr = snr_db(clean, enhanced)?;
    let improvement = if input_snr == output_snr { 0.0 } else { output_snr - input_snr };
    Ok(SnrTriple {
        input_snr,
        output_snr,
        improvement,
    })
}

/// Latency, gap and coherence fields of a report from an event log alone.
pub fn report_log(log: &EventLog, t_chunk: f64) -> Result<RunReport> {
    let chunks = decompose(log)?;
    let (gap_count, gap_total) = gap_report(log, t_chunk)?;
    let delays: Vec<f64> = chunks.iter().map(|c| c.t_delay).collect();
    let comm: Vec<f64> = chunks.iter().map(|c| c.t1 + c.t3).collect();
    Ok(RunReport {
        t_delay: Summary::of(&delays),
        t_comm: Summary::of(&comm),
        chunks,
        gap_count,
        gap_total,
        dropped: log.times(EventKind::Dropped).len(),
        quality: None,
        payload_bytes: 0.0,
        protocol_errors: 0,
        coherent: gap_count == 0,
    })
}

/// Builds the report of a pipeline run. With `reference = (clean, noisy)`
/// the played audio is scored against the clean target.
pub fn report(run: &RunOutput, reference: Option<(&Signal, &Signal)>) -> Result<RunReport> {
    let mut rep = report_log(&run.log, run.config.t_chunk)?;
    if let Some((clean, noisy)) = reference {
        let n = clean.len().min(noisy.len()).min(run.played.len());
        let cut = |s: &Signal| Signal {
            samples: s.samples[..n].to_vec(),
            sample_rate: s.sample_rate,
        };
        rep.quality = Some(quality(&cut(clean), &cut(noisy), &cut(&run.played))?);
    }
    if !run.media_bytes.is_empty() {
        rep.payload_bytes = run.media_bytes.iter().sum::<usize>() as f64 / run.media_bytes.len() as f64;
    }
    rep.protocol_errors = run.protocol_errors;
    Ok(rep)
}

/// Least-squares line through `(x, y)`: `(slope, intercept, r2)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("linear fit needs two or more paired points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("linear fit needs distinct x values"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok((slope, intercept, r2))
}

/// A sweep result: a header and numeric rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| *h == name)?;
        self.rows.iter().map(|r| r[i].parse().ok()).collect()
    }

    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "{}", self.header.join(","))?;
        for r in &self.rows {
            writeln!(w, "{}", r.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        self.write_csv(&mut f).and_then(|_| f.flush()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Networks,
    Compression,
    ChunkSize,
}

impl SweepKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "networks" => Ok(SweepKind::Networks),
            "compression" => Ok(SweepKind::Compression),
            "chunk_size" => Ok(SweepKind::ChunkSize),
            other => Err(Error::invalid(format!(
                "unknown sweep {other:?} (expected networks, compression or chunk_size)"
            ))),
        }
    }
}

pub const COMPRESSION_QUALITIES: [u8; 9] = [100, 95, 90, 85, 80, 75, 70, 65, 60];
pub const CHUNK_FRAMES: [usize; 6] = [1, 5, 25, 50, 125, 250];
pub const CORPUS_FRAMES: usize = 50;

/// Runs a named sweep. `seed` drives channel jitter and corpus generation.
pub fn sweep(kind: SweepKind, seed: u64, strategy: Strategy) -> Result<Table> {
    match kind {
        SweepKind::Networks => sweep_networks(seed, strategy),
        SweepKind::Compression => sweep_compression(seed, strategy),
        SweepKind::ChunkSize => sweep_chunk_size(ModelTier::Model1),
    }
}

/// 100 round trips of one raw chunk per preset: `preset,trial,rtt_ms`.
pub fn sweep_networks(seed: u64, strategy: Strategy) -> Result<Table> {
    let size = payload_size(&ChunkFormat::default(), PayloadMode::Raw)?;
    let per_preset = par::map(strategy, &PRESETS, |name| -> Result<Vec<Vec<String>>> {
        let ch = ChannelModel::preset(name)?.with_seed(seed);
        Ok(rtt_experiment(&ch, size, RTT_EXPERIMENT_LEN)
            .into_iter()
            .enumerate()
            .map(|(i, r)| vec![name.to_string(), i.to_string(), format!("{r:.4}")])
            .collect())
    });
    let mut rows = Vec::new();
    for r in per_preset {
        rows.extend(r?);
    }
    Ok(Table {
        header: vec!["preset", "trial", "rtt_ms"],
        rows,
    })
}

/// Mean compressed frame size over a smooth synthetic corpus:
/// `quality,mean_bytes,reduction` where reduction is raw over compressed.
pub fn sweep_compression(seed: u64, strategy: Strategy) -> Result<Table> {
    let corpus = smooth_corpus(CORPUS_FRAMES, seed);
    let raw = (corpus[0].width * corpus[0].height) as f64;
    let mut rows = Vec::new();
    for q in COMPRESSION_QUALITIES {
        let sizes = par::map(strategy, &corpus, |f| compress_frame(f, q).map(|b| b.len()));
        let total: usize = sizes.into_iter().collect::<Result<Vec<_>>>()?.into_iter().sum();
        let mean = total as f64 / corpus.len() as f64;
        rows.push(vec![q.to_string(), format!("{mean:.1}"), format!("{:.3}", raw / mean)]);
    }
    Ok(Table {
        header: vec!["quality", "mean_bytes", "reduction"],
        rows,
    })
}

pub fn smooth_corpus(n: usize, seed: u64) -> Vec<VideoFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| smooth_frame(crate::video::FRAME_WIDTH, crate::video::FRAME_HEIGHT, &mut rng))
        .collect()
}

/// Emulated processing latency against window length in video frames:
/// `frames,window_s,latency_s`.
pub fn sweep_chunk_size(tier: ModelTier) -> Result<Table> {
    let spec = EnhancerSpec {
        t_i: crate::T_CHUNK,
        ..EnhancerSpec::tier(tier)
    };
    let spc = (crate::SAMPLE_RATE as f64 * crate::T_CHUNK).round() as usize;
    let mut rows = Vec::new();
    for frames in CHUNK_FRAMES {
        let window = MediaWindow::audio_only(Signal::zeros(frames * spc, crate::SAMPLE_RATE));
        let out = enhance(&window, &spec, None)?;
        rows.push(vec![
            frames.to_string(),
            format!("{:.3}", window.audio.duration()),
            format!("{:.6}", out.latency_s),
        ]);
    }
    Ok(Table {
        header: vec!["frames", "window_s", "latency_s"],
        rows,
    })
}

/// Per-scene SNRs of several enhancers on the same mixture.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneEval {
    pub seed: u64,
    pub input_snr: f64,
    /// `(enhancer, output_snr, improvement)`.
    pub results: Vec<(EnhancerKind, f64, f64)>,
}

/// Mouth-region frames, one per `t_chunk`, whose openness follows the
/// loudness of `driver`.
pub fn mouth_frames(driver: &Signal, t_chunk: f64) -> Vec<VideoFrame> {
    let spc = ((driver.sample_rate as f64 * t_chunk).round() as usize).max(1);
    let rms: Vec<f64> = driver
        .samples
        .chunks(spc)
        .map(|c| (c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64).sqrt())
        .collect();
    let peak = rms.iter().cloned().fold(0.0, f64::max);
    let roi = Roi::full(Roi::MOUTH.width, Roi::MOUTH.height);
    rms.iter()
        .enumerate()
        .map(|(i, r)| {
            let open = if peak > 0.0 { r / peak } else { 0.0 };
            talking_face(roi.width, roi.height, open, i % 2 == 0, &roi)
        })
        .collect()
}

/// Synthesises one scene per seed and scores each enhancer on it.
pub fn evaluate_corpus(params: &SceneParams, seeds: &[u64], kinds: &[EnhancerKind], strategy: Strategy) -> Result<Vec<SceneEval>> {
    par::map(strategy, seeds, |&seed| -> Result<SceneEval> {
        let m = mix(&synth_scene(params, seed)?)?;
        let clean = m.clean_sum();
        let frames = mouth_frames(&clean, crate::T_CHUNK);
        let window = MediaWindow {
            audio: m.mixture.clone(),
            roi: Roi::full(frames[0].width, frames[0].height),
            frames,
            fps: 1.0 / crate::T_CHUNK,
        };
        let mut results = Vec::with_capacity(kinds.len());
        let mut input_snr = f64::NAN;
        for &kind in kinds {
            let spec = EnhancerSpec {
                kind,
                t_i: crate::T_CHUNK,
                ..EnhancerSpec::default()
            };
            let out = enhance(&window, &spec, Some(&clean))?;
            let q = quality(&clean, &m.mixture, &out.audio)?;
            input_snr = q.input_snr;
            results.push((kind, q.output_snr, q.improvement));
        }
        Ok(SceneEval { seed, input_snr, results })
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hand_log() -> EventLog {
        let mut log = EventLog::new();
        for (k, t) in [
            (EventKind::Captured, 0.04),
            (EventKind::Sent, 0.05),
            (EventKind::ArrivedServer, 0.07),
            (EventKind::SentBack, 0.37),
            (EventKind::ArrivedClient, 0.40),
            (EventKind::Played, 0.44),
        ] {
            log.push(0, k, t);
        }
        log
    }

    #[test]
    fn decompose_hand_log() {
        let c = decompose(&hand_log()).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c[0].t1 - 0.02).abs() < 1e-12);
        assert!((c[0].t2 - 0.30).abs() < 1e-12);
        assert!((c[0].t3 - 0.03).abs() < 1e-12);
        assert!((c[0].t1 + c[0].t2 + c[0].t3 - c[0].t_delay).abs() < 1e-9);

        let mut log = hand_log();
        log.push(1, EventKind::Captured, 0.08);
        log.push(1, EventKind::Sent, 0.08);
        log.push(2, EventKind::Captured, 0.12);
        log.push(2, EventKind::Dropped, 0.5);
        assert!(matches!(decompose(&log), Err(Error::IncompleteLog(ref s)) if s == &vec![1]));
    }

    #[test]
    fn gaps() {
        let mut log = EventLog::new();
        for (i, t) in [0.0, 0.04, 0.08, 0.16, 0.20].into_iter().enumerate() {
            log.push(i as u32, EventKind::Played, t);
        }
        let (n, total) = gap_report(&log, 0.04).unwrap();
        assert_eq!(n, 1);
        assert!((total - 0.04).abs() < 1e-9);
        assert!(matches!(gap_report(&EventLog::new(), 0.04), Err(Error::EmptyPlayback)));
    }

    #[test]
    fn quality_cases() {
        let clean = Signal::new(vec![1.0, -1.0, 0.5, 0.25], 16_000).unwrap();
        let noisy = Signal::new(vec![1.5, -1.0, 0.0, 0.25], 16_000).unwrap();
        let q = quality(&clean, &noisy, &clean).unwrap();
        assert_eq!(q.output_snr, f64::INFINITY);
        let q = quality(&clean, &noisy, &noisy).unwrap();
        assert_eq!(q.improvement, 0.0);
        let short = Signal::zeros(3, 16_000);
        assert!(matches!(quality(&clean, &noisy, &short), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn fit_and_sweeps() {
        let (s, b, r2) = linear_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((s - 2.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
        assert!(linear_fit(&[1.0], &[1.0]).is_err());
        assert!(SweepKind::parse("bogus").is_err());

        let t = sweep(SweepKind::Networks, 1, Strategy::default()).unwrap();
        assert_eq!(t.rows.len(), 7 * 100);
        let t = sweep(SweepKind::ChunkSize, 0, Strategy::default()).unwrap();
        let lat = t.column("latency_s").unwrap();
        assert!((lat[5] / lat[0] - 250.0).abs() < 2.5);
    }

    #[test]
    fn summary_stats() {
        let s = Summary::of(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!((s.min, s.median, s.max, s.mean), (1.0, 2.0, 3.0, 2.0));
        assert!(Summary::of(&[]).is_none());
    }
}
