use std::ops::Range;

use crate::dsp::{enhance, Enhanced, EnhancerKind, MediaWindow};
use crate::scene::Signal;
use crate::video::{Roi, VideoFrame};
use crate::wav::{from_i16, to_i16};
use crate::wire::{EnhancedAudio, MediaChunk, NO_TS};
use crate::{Error, Result};

use super::{to_us, Micros, PipelineConfig};

/// A decoded media chunk ready for the input buffer.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub seq: u32,
    pub capture_ts_us: Micros,
    pub audio: Vec<f64>,
    /// Mouth region only.
    pub frame: Option<VideoFrame>,
}

impl Preprocessed {
    /// Converts audio and decodes only the region of interest of the frame.
    pub fn from_chunk(chunk: &MediaChunk, roi: &Roi) -> Result<Self> {
        let frame = chunk.frame.decode_region(Some(roi))?;
        Ok(Preprocessed {
            seq: chunk.seq,
            capture_ts_us: chunk.capture_ts_us,
            audio: chunk.audio.iter().map(|&v| from_i16(v)).collect(),
            frame,
        })
    }
}

#[derive(Debug, Clone)]
struct Output {
    audio: Vec<f64>,
    enhanced: bool,
    enhance_start: Option<Micros>,
    enhance_done: Option<Micros>,
    ready: Micros,
}

#[derive(Debug, Clone)]
struct Slot {
    arrived: Micros,
    preprocessed: Micros,
    capture_ts: Micros,
    audio: Vec<f64>,
    frame: Option<VideoFrame>,
    dropped: bool,
    out: Option<Output>,
}

/// One scheduled worker run.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPlan {
    pub index: usize,
    pub start: Micros,
    /// Chunks fed to the enhancer.
    pub window: Range<usize>,
    /// First sample (absolute) whose output this run provides.
    pub segment_start: usize,
    /// One past the last chunk this run provides output for.
    pub segment_end: usize,
    /// Too little media for the enhancer (stream shorter than `t_i`); the
    /// segment is forwarded unenhanced.
    pub passthrough: bool,
}

/// Server-side buffering and scheduling, independent of clock and transport.
#[derive(Debug)]
pub struct ServerCore {
    cfg: PipelineConfig,
    oracle: Option<Signal>,
    sample_rate: u32,
    spc: usize,
    n_i: usize,
    skip_samples: usize,
    slots: Vec<Slot>,
    contiguous: usize,
    total: Option<usize>,
    s0: Option<Micros>,
    next_index: usize,
    busy: bool,
    last_done: Micros,
    covered: usize,
    covered_sample: usize,
    next_release: usize,
    last_release: Option<Micros>,
    r0: Option<Micros>,
}

impl ServerCore {
    /// `oracle` is the clean target aligned with the stream, required by the
    /// oracle-mask enhancer only.
    pub fn new(cfg: &PipelineConfig, sample_rate: u32, oracle: Option<Signal>) -> Result<Self> {
        if cfg.enhancer.kind == EnhancerKind::OracleMask && oracle.is_none() {
            return Err(Error::Config("oracle-mask enhancer needs the clean reference".into()));
        }
        if cfg.enhancer.kind == EnhancerKind::VisualGated && !cfg.payload.video {
            return Err(Error::Config("visual-gated enhancer needs video in the payload".into()));
        }
        let spc = (sample_rate as f64 * cfg.t_chunk).round() as usize;
        let skip_samples = (cfg.skip_seconds() * sample_rate as f64).round() as usize;
        Ok(ServerCore {
            cfg: cfg.clone(),
            oracle,
            sample_rate,
            spc,
            n_i: cfg.window_chunks(),
            skip_samples,
            slots: Vec::new(),
            contiguous: 0,
            total: None,
            s0: None,
            next_index: 0,
            busy: false,
            last_done: 0,
            covered: 0,
            covered_sample: skip_samples,
            next_release: 0,
            last_release: None,
            r0: None,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn received(&self) -> usize {
        self.slots.len()
    }

    pub fn total(&self) -> Option<usize> {
        self.total
    }

    fn dropped_slot(&self, t: Micros) -> Slot {
        Slot {
            arrived: t,
            preprocessed: t,
            capture_ts: 0,
            audio: vec![0.0; self.spc],
            frame: None,
            dropped: true,
            out: None,
        }
    }

    /// Appends a chunk to the input buffer. Missing seqs before it are lost
    /// in transit (delivery is in order) and become silent dropped slots.
    pub fn insert(&mut self, p: Preprocessed, arrived: Micros, preprocessed: Micros) -> Result<()> {
        let seq = p.seq as usize;
        if seq < self.slots.len() {
            return Err(Error::Protocol(format!("duplicate or out-of-order chunk {seq}")));
        }
        if self.total.is_some() {
            return Err(Error::Protocol(format!("chunk {seq} after end of stream")));
        }
        if p.audio.len() != self.spc {
            return Err(Error::Protocol(format!(
                "chunk {seq} has {} samples, expected {}",
                p.audio.len(),
                self.spc
            )));
        }
        if self.cfg.payload.video && p.frame.is_none() {
            return Err(Error::Protocol(format!("chunk {seq} lacks a video frame")));
        }
        while self.slots.len() < seq {
            let d = self.dropped_slot(arrived);
            self.slots.push(d);
        }
        self.slots.push(Slot {
            arrived,
            preprocessed,
            capture_ts: p.capture_ts_us,
            audio: p.audio,
            frame: p.frame,
            dropped: false,
            out: None,
        });
        self.advance();
        Ok(())
    }

    /// The client announced `total` chunks; trailing missing ones are lost.
    pub fn end_of_stream(&mut self, total: usize, now: Micros) -> Result<()> {
        if total < self.slots.len() {
            return Err(Error::Protocol(format!(
                "end of stream at {total} but {} chunks received",
                self.slots.len()
            )));
        }
        while self.slots.len() < total {
            let d = self.dropped_slot(now);
            self.slots.push(d);
        }
        self.total = Some(total);
        self.advance();
        Ok(())
    }

    fn advance(&mut self) {
        self.contiguous = self.slots.len();
        // Chunks entirely inside the skipped prefix are forwarded as is.
        for c in 0..self.contiguous {
            if (c + 1) * self.spc > self.skip_samples {
                break;
            }
            let s = &mut self.slots[c];
            if s.out.is_none() {
                s.out = Some(Output {
                    audio: s.audio.clone(),
                    enhanced: false,
                    enhance_start: None,
                    enhance_done: None,
                    ready: s.preprocessed,
                });
            }
        }
        if self.s0.is_none() {
            let full = self.contiguous >= self.n_i;
            let flush = self.total == Some(self.contiguous) && self.contiguous > 0;
            if full || flush {
                let upto = self.contiguous.min(self.n_i);
                self.s0 = self.slots[..upto].iter().map(|s| s.preprocessed).max();
            }
        }
    }

    pub fn worker_finished(&self) -> bool {
        self.total.is_some_and(|t| self.covered >= t && self.covered_sample >= t * self.spc)
            || self.total == Some(0)
    }

    /// When the worker should next start, if it can be known yet.
    pub fn next_worker_time(&self) -> Option<Micros> {
        if self.busy || self.worker_finished() {
            return None;
        }
        let s0 = self.s0?;
        let tick = s0 + to_us(self.next_index as f64 * self.cfg.t_delta);
        Some(tick.max(self.last_done))
    }

    /// Claims the worker tick at `now`. Returns the run to perform with a
    /// snapshot of its input, or `None` if no new media arrived since the
    /// last run.
    pub fn plan_window(&mut self, now: Micros) -> Result<Option<(WindowPlan, MediaWindow, Option<Signal>)>> {
        let index = self.next_index;
        self.next_index += 1;
        let end = self.contiguous;
        if end * self.spc <= self.covered_sample {
            self.covered = self.covered.max(end);
            return Ok(None);
        }
        let first_needed = self.covered_sample / self.spc;
        let start = end.saturating_sub(self.n_i).min(first_needed);
        let plan = WindowPlan {
            index,
            start: now,
            window: start..end,
            segment_start: self.covered_sample,
            segment_end: end,
            passthrough: end - start < self.n_i && self.cfg.enhancer.kind != EnhancerKind::Passthrough,
        };
        let mut audio = Vec::with_capacity((end - start) * self.spc);
        for s in &self.slots[start..end] {
            audio.extend_from_slice(&s.audio);
        }
        let mut frames = Vec::new();
        if self.cfg.payload.video {
            let mut last: Option<&VideoFrame> = None;
            let first_real = self.slots[start..end].iter().find_map(|s| s.frame.as_ref());
            for s in &self.slots[start..end] {
                let f = s.frame.as_ref().or(last).or(first_real);
                match f {
                    Some(f) => frames.push(f.clone()),
                    None => {
                        frames.clear();
                        break;
                    }
                }
                last = f;
            }
        }
        let roi = frames
            .first()
            .map(|f| Roi::full(f.width, f.height))
            .unwrap_or(Roi::MOUTH);
        let window = MediaWindow {
            audio: Signal::new(audio, self.sample_rate)?,
            frames,
            roi,
            fps: 1.0 / self.cfg.t_chunk,
        };
        let oracle = self.oracle.as_ref().map(|o| {
            let mut s = o.samples.iter().skip(start * self.spc).take((end - start) * self.spc).copied().collect::<Vec<_>>();
            s.resize((end - start) * self.spc, 0.0);
            Signal { samples: s, sample_rate: o.sample_rate }
        });
        self.busy = true;
        Ok(Some((plan, window, oracle)))
    }

    /// Runs the enhancer for a planned window. Holds no state, so the live
    /// worker calls it without the lock.
    pub fn run_enhancer(cfg: &PipelineConfig, plan: &WindowPlan, window: &MediaWindow, oracle: Option<&Signal>) -> Result<Enhanced> {
        if plan.passthrough {
            return Ok(Enhanced {
                audio: window.audio.clone(),
                latency_s: 0.0,
            });
        }
        enhance(window, &cfg.enhancer, oracle)
    }

    /// Stores the result of a run that started at `plan.start` and finished
    /// at `done`.
    pub fn commit(&mut self, plan: &WindowPlan, result: &Enhanced, done: Micros) -> Result<()> {
        let win_first = plan.window.start * self.spc;
        if result.audio.len() != plan.window.len() * self.spc {
            return Err(Error::Shape("enhancer changed the window length".into()));
        }
        for c in plan.segment_start / self.spc..plan.segment_end {
            let slot = &mut self.slots[c];
            let base = c * self.spc;
            let audio: Vec<f64> = (0..self.spc)
                .map(|i| {
                    if base + i < plan.segment_start {
                        slot.audio[i]
                    } else {
                        result.audio.samples[base + i - win_first]
                    }
                })
                .collect();
            slot.out = Some(Output {
                audio,
                enhanced: !plan.passthrough,
                enhance_start: Some(plan.start),
                enhance_done: Some(done),
                ready: done,
            });
        }
        self.covered = plan.segment_end;
        self.covered_sample = plan.segment_end * self.spc;
        self.last_done = done;
        self.busy = false;
        Ok(())
    }

    /// Time between a chunk's arrival and its scheduled send-back before any
    /// queueing: processing plus the wait for the first window.
    pub fn hold(&self) -> f64 {
        let wait = if self.skip_samples > 0 { self.cfg.t_delta } else { self.cfg.t_i };
        self.cfg.effective_t_a() + wait
    }

    /// Next chunk to send back and when, once its output is ready. Dropped
    /// chunks keep their playout slot but are not sent.
    pub fn next_release(&mut self) -> Option<(u32, Micros)> {
        loop {
            let n = self.next_release;
            if n >= self.slots.len() {
                return None;
            }
            if self.r0.is_none() {
                let mut need = ((self.cfg.output_threshold() / self.cfg.t_chunk) - 1e-9).ceil().max(1.0) as usize;
                if let Some(t) = self.total {
                    need = need.min(t);
                }
                if self.slots.len() < need || self.slots[..need].iter().any(|s| s.out.is_none()) {
                    return None;
                }
                let fill = self.slots[..need].iter().filter_map(|s| s.out.as_ref()).map(|o| o.ready).max()?;
                self.r0 = Some((self.slots[0].arrived + to_us(self.hold())).max(fill));
            }
            let ready = self.slots[n].out.as_ref()?.ready;
            let paced = self.r0? + to_us(n as f64 * self.cfg.t_chunk);
            let r = paced.max(ready).max(self.last_release.unwrap_or(0));
            self.last_release = Some(r);
            self.next_release += 1;
            if !self.slots[n].dropped {
                return Some((n as u32, r));
            }
        }
    }

    pub fn release_finished(&self) -> bool {
        self.total.is_some_and(|t| self.next_release >= t)
    }

    /// The send-back message for a released chunk.
    pub fn output_message(&self, seq: u32) -> Result<EnhancedAudio> {
        let slot = self
            .slots
            .get(seq as usize)
            .ok_or_else(|| Error::invalid(format!("no chunk {seq}")))?;
        let out = slot
            .out
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("chunk {seq} has no output yet")))?;
        Ok(EnhancedAudio {
            seq,
            capture_ts_us: slot.capture_ts,
            enhanced: out.enhanced,
            arrived_server_us: slot.arrived,
            preprocessed_us: slot.preprocessed,
            enhance_start_us: out.enhance_start.unwrap_or(NO_TS),
            enhance_done_us: out.enhance_done.unwrap_or(NO_TS),
            audio: out.audio.iter().map(|&v| to_i16(v)).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::EnhancerSpec;

    fn pre(seq: u32, value: f64) -> Preprocessed {
        Preprocessed {
            seq,
            capture_ts_us: 0,
            audio: vec![value; 640],
            frame: None,
        }
    }

    fn audio_cfg(t_i: f64, t_delta: f64, skip: bool) -> PipelineConfig {
        let mut cfg = PipelineConfig {
            t_i,
            t_delta,
            startup_skip: skip,
            ..PipelineConfig::default()
        };
        cfg.payload.video = false;
        cfg
    }

    #[test]
    fn first_window_after_t_i() {
        let cfg = PipelineConfig {
            enhancer: EnhancerSpec::emulated(2.2, 10.0),
            ..audio_cfg(10.0, 2.35, false)
        };
        let mut core = ServerCore::new(&cfg, 16_000, None).unwrap();
        for s in 0..249u32 {
            let t = 40_000 * (s as u64 + 1);
            core.insert(pre(s, 0.0), t, t).unwrap();
            assert_eq!(core.next_worker_time(), None);
        }
        core.insert(pre(249, 0.0), 10_000_000, 10_000_000).unwrap();
        assert_eq!(core.next_worker_time(), Some(10_000_000));
        let (plan, window, _) = core.plan_window(10_000_000).unwrap().unwrap();
        assert_eq!(plan.window, 0..250);
        assert_eq!(window.audio.len(), 160_000);
        let out = ServerCore::run_enhancer(&cfg, &plan, &window, None).unwrap();
        assert!((out.latency_s - 2.2).abs() < 1e-12);
        assert_eq!(core.next_worker_time(), None);
        core.commit(&plan, &out, 12_200_000).unwrap();
        assert_eq!(core.next_worker_time(), Some(12_350_000));
    }

    #[test]
    fn skip_prefix_is_immediate() {
        let cfg = audio_cfg(0.4, 0.2, true);
        let mut core = ServerCore::new(&cfg, 16_000, None).unwrap();
        core.insert(pre(0, 0.1), 5, 6).unwrap();
        let m = core.output_message(0).unwrap();
        assert!(!m.enhanced);
        assert_eq!(m.enhance_start_us, NO_TS);
        assert_eq!(m.preprocessed_us, 6);
        assert!(core.output_message(5).is_err());
    }

    #[test]
    fn losses_become_silent_slots() {
        let cfg = audio_cfg(0.08, 0.08, true);
        let mut core = ServerCore::new(&cfg, 16_000, None).unwrap();
        core.insert(pre(0, 0.5), 1, 1).unwrap();
        core.insert(pre(2, 0.5), 2, 2).unwrap();
        assert!(core.insert(pre(1, 0.5), 3, 3).is_err());
        core.end_of_stream(4, 9).unwrap();
        let t = core.next_worker_time().unwrap();
        let (plan, window, _) = core.plan_window(t).unwrap().unwrap();
        assert_eq!(plan.window, 0..4);
        let a = &window.audio.samples;
        assert!(a[640..1280].iter().chain(&a[1920..]).all(|&v| v == 0.0));
        assert!(a[1280..1920].iter().all(|&v| v == 0.5));
        let out = ServerCore::run_enhancer(&cfg, &plan, &window, None).unwrap();
        core.commit(&plan, &out, t).unwrap();
        assert!(core.worker_finished());
        let mut sent = Vec::new();
        while let Some((s, _)) = core.next_release() {
            sent.push(s);
        }
        assert_eq!(sent, vec![0, 2]);
        assert!(core.release_finished());
    }

    #[test]
    fn rejects_bad_chunks() {
        let cfg = PipelineConfig::default();
        let mut core = ServerCore::new(&cfg, 16_000, None).unwrap();
        assert!(matches!(core.insert(pre(0, 0.0), 0, 0), Err(Error::Protocol(_))));
        let mut short = pre(0, 0.0);
        short.audio.pop();
        let mut core = ServerCore::new(&audio_cfg(0.2, 0.2, true), 16_000, None).unwrap();
        assert!(matches!(core.insert(short, 0, 0), Err(Error::Protocol(_))));
        let oracle = PipelineConfig {
            enhancer: EnhancerSpec {
                kind: EnhancerKind::OracleMask,
                ..EnhancerSpec::default()
            },
            ..PipelineConfig::default()
        };
        assert!(ServerCore::new(&oracle, 16_000, None).is_err());
    }
}
