use crate::scene::Signal;
use crate::wav::from_i16;
use crate::wire::{EnhancedAudio, NO_TS};
use crate::{Error, Result};

use super::{to_us, EventKind, EventLog, Micros, PipelineConfig};

#[derive(Debug, Clone)]
enum Slot {
    Pending,
    Received { arrival: Micros, audio: Vec<i16> },
    Dropped,
    Played,
}

/// Client-side bookkeeping: capture schedule, event log and playout.
#[derive(Debug)]
pub struct ClientCore {
    t_chunk: Micros,
    playout: Micros,
    spc: usize,
    origin: Micros,
    slots: Vec<Slot>,
    next_play: usize,
    last_play: Option<Micros>,
    played: Vec<i16>,
    pub log: EventLog,
}

impl ClientCore {
    /// `origin` is the instant capture of chunk 0 begins.
    pub fn new(cfg: &PipelineConfig, total: usize, samples_per_chunk: usize, origin: Micros) -> Self {
        ClientCore {
            t_chunk: to_us(cfg.t_chunk),
            playout: to_us(cfg.playout()),
            spc: samples_per_chunk,
            origin,
            slots: vec![Slot::Pending; total],
            next_play: 0,
            last_play: None,
            played: Vec::with_capacity(total * samples_per_chunk),
            log: EventLog::new(),
        }
    }

    pub fn total(&self) -> usize {
        self.slots.len()
    }

    /// When chunk `seq` has been fully captured.
    pub fn capture_time(&self, seq: usize) -> Micros {
        self.origin + (seq as u64 + 1) * self.t_chunk
    }

    pub fn record(&mut self, seq: u32, event: EventKind, t: Micros) {
        let rel = t as f64 - self.origin as f64;
        self.log.push(seq, event, rel / 1e6);
    }

    pub fn mark_dropped(&mut self, seq: u32, t: Micros) {
        if let Some(s) = self.slots.get_mut(seq as usize) {
            *s = Slot::Dropped;
        }
        self.record(seq, EventKind::Dropped, t);
    }

    /// Logs the server-side milestones carried by the message and stores
    /// the audio for playout.
    pub fn on_enhanced(&mut self, msg: &EnhancedAudio, sent_back: Micros, arrival: Micros) -> Result<()> {
        let seq = msg.seq as usize;
        match self.slots.get(seq) {
            Some(Slot::Pending) => {}
            Some(_) => return Err(Error::Protocol(format!("duplicate audio for chunk {seq}"))),
            None => return Err(Error::Protocol(format!("audio for unknown chunk {seq}"))),
        }
        if msg.audio.len() != self.spc {
            return Err(Error::Protocol(format!(
                "chunk {seq} returned {} samples, expected {}",
                msg.audio.len(),
                self.spc
            )));
        }
        self.record(msg.seq, EventKind::ArrivedServer, msg.arrived_server_us);
        self.record(msg.seq, EventKind::Preprocessed, msg.preprocessed_us);
        if msg.enhance_start_us != NO_TS {
            self.record(msg.seq, EventKind::EnhanceStart, msg.enhance_start_us);
        }
        if msg.enhance_done_us != NO_TS {
            self.record(msg.seq, EventKind::EnhanceDone, msg.enhance_done_us);
        }
        self.record(msg.seq, EventKind::SentBack, sent_back);
        self.record(msg.seq, EventKind::ArrivedClient, arrival);
        self.slots[seq] = Slot::Received {
            arrival,
            audio: msg.audio.clone(),
        };
        Ok(())
    }

    /// The next chunk due for playback and the earliest time it can play:
    /// the first chunk waits `playout_delay` after arriving, later chunks
    /// follow back to back unless they arrive late. Lost chunks play as
    /// silence in their slot.
    pub fn next_play(&mut self) -> Option<(u32, Micros)> {
        while let Some(Slot::Dropped) = self.slots.get(self.next_play) {
            self.played.extend(std::iter::repeat(0).take(self.spc));
            self.last_play = self.last_play.map(|t| t + self.t_chunk);
            self.next_play += 1;
        }
        match self.slots.get(self.next_play)? {
            Slot::Received { arrival, .. } => {
                let t = match self.last_play {
                    None => arrival + self.playout,
                    Some(prev) => (*arrival).max(prev + self.t_chunk),
                };
                Some((self.next_play as u32, t))
            }
            _ => None,
        }
    }

    /// Records that chunk `seq` (from [`next_play`](Self::next_play)) played at `t`.
    pub fn on_played(&mut self, seq: u32, t: Micros) {
        let slot = std::mem::replace(&mut self.slots[seq as usize], Slot::Played);
        if let Slot::Received { audio, .. } = slot {
            self.played.extend_from_slice(&audio);
        }
        self.last_play = Some(t);
        self.next_play = seq as usize + 1;
        self.record(seq, EventKind::Played, t);
    }

    /// Plays everything currently playable at its scheduled time.
    pub fn play_ready(&mut self) {
        while let Some((seq, t)) = self.next_play() {
            self.on_played(seq, t);
        }
    }

    pub fn finished(&self) -> bool {
        self.next_play >= self.slots.len()
    }

    /// Audio in playout order, silence for lost chunks.
    pub fn played_signal(&self, sample_rate: u32) -> Signal {
        Signal {
            samples: self.played.iter().map(|&v| from_i16(v)).collect(),
            sample_rate,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(seq: u32) -> EnhancedAudio {
        EnhancedAudio {
            seq,
            capture_ts_us: 0,
            enhanced: false,
            arrived_server_us: 1,
            preprocessed_us: 1,
            enhance_start_us: NO_TS,
            enhance_done_us: NO_TS,
            audio: vec![seq as i16; 4],
        }
    }

    #[test]
    fn playout_schedule() {
        let cfg = PipelineConfig::default();
        let mut c = ClientCore::new(&cfg, 4, 4, 0);
        assert_eq!(c.capture_time(0), 40_000);
        c.on_enhanced(&msg(0), 2, 100_000).unwrap();
        assert!(c.on_enhanced(&msg(0), 2, 100_000).is_err());
        c.play_ready();
        assert_eq!(c.log.time_of(0, EventKind::Played), Some(0.14));
        c.mark_dropped(1, 150_000);
        c.on_enhanced(&msg(2), 2, 300_000).unwrap();
        c.play_ready();
        assert_eq!(c.log.time_of(2, EventKind::Played), Some(0.3));
        assert!(!c.finished());
        c.on_enhanced(&msg(3), 2, 301_000).unwrap();
        c.play_ready();
        assert_eq!(c.log.time_of(3, EventKind::Played), Some(0.34));
        assert!(c.finished());
        let s: Vec<i16> = c.played.clone();
        assert_eq!(s, vec![0, 0, 0, 0, 0, 0, 0, 0, 2, 2, 2, 2, 3, 3, 3, 3]);
    }
}
