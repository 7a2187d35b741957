use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Pipeline milestones of one chunk, in pipeline order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Captured,
    Sent,
    ArrivedServer,
    Preprocessed,
    EnhanceStart,
    EnhanceDone,
    SentBack,
    ArrivedClient,
    Played,
    /// The chunk was lost in transit and never reached the server.
    Dropped,
}

impl EventKind {
    pub const ALL: [EventKind; 10] = [
        EventKind::Captured,
        EventKind::Sent,
        EventKind::ArrivedServer,
        EventKind::Preprocessed,
        EventKind::EnhanceStart,
        EventKind::EnhanceDone,
        EventKind::SentBack,
        EventKind::ArrivedClient,
        EventKind::Played,
        EventKind::Dropped,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EventKind::Captured => "captured",
            EventKind::Sent => "sent",
            EventKind::ArrivedServer => "arrived_server",
            EventKind::Preprocessed => "preprocessed",
            EventKind::EnhanceStart => "enhance_start",
            EventKind::EnhanceDone => "enhance_done",
            EventKind::SentBack => "sent_back",
            EventKind::ArrivedClient => "arrived_client",
            EventKind::Played => "played",
            EventKind::Dropped => "dropped",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::invalid(format!("unknown event {name:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub chunk_seq: u32,
    pub event: EventKind,
    /// Seconds since the start of capture.
    pub t: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub records: Vec<EventRecord>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, chunk_seq: u32, event: EventKind, t: f64) {
        self.records.push(EventRecord { chunk_seq, event, t });
    }

    /// Sorts by time, then seq, then pipeline order.
    pub fn sort(&mut self) {
        self.records.sort_by(|a, b| {
            a.t.total_cmp(&b.t)
                .then(a.chunk_seq.cmp(&b.chunk_seq))
                .then(a.event.cmp(&b.event))
        });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn time_of(&self, seq: u32, event: EventKind) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.chunk_seq == seq && r.event == event)
            .map(|r| r.t)
    }

    /// All times of one event kind as `(seq, t)`, ordered by seq.
    pub fn times(&self, event: EventKind) -> Vec<(u32, f64)> {
        let mut v: Vec<_> = self
            .records
            .iter()
            .filter(|r| r.event == event)
            .map(|r| (r.chunk_seq, r.t))
            .collect();
        v.sort_by_key(|&(s, _)| s);
        v
    }

    pub fn chunk_count(&self) -> usize {
        self.times(EventKind::Captured).len()
    }

    /// Per-chunk event times indexed by seq and [`EventKind`] order.
    pub fn table(&self) -> Vec<[Option<f64>; 10]> {
        let n = self.records.iter().map(|r| r.chunk_seq as usize + 1).max().unwrap_or(0);
        let mut t = vec![[None; 10]; n];
        for r in &self.records {
            t[r.chunk_seq as usize][r.event as usize] = Some(r.t);
        }
        t
    }

    /// Seqs whose recorded events go backwards in pipeline order.
    pub fn order_violations(&self) -> Vec<u32> {
        self.table()
            .iter()
            .enumerate()
            .filter(|(_, row)| {
                let present: Vec<f64> = row[..9].iter().flatten().copied().collect();
                present.windows(2).any(|w| w[1] < w[0])
            })
            .map(|(s, _)| s as u32)
            .collect()
    }

    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "chunk_seq,event,t")?;
        for r in &self.records {
            writeln!(w, "{},{},{:.6}", r.chunk_seq, r.event.name(), r.t)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        self.write_csv(&mut f).and_then(|_| f.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "chunk_seq,event,t" => {}
            other => return Err(Error::invalid(format!("bad event log header {other:?}"))),
        }
        let mut log = EventLog::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = || Error::invalid(format!("event log line {}: {line:?}", i + 2));
            let mut f = line.trim().split(',');
            let (Some(seq), Some(ev), Some(t), None) = (f.next(), f.next(), f.next(), f.next()) else {
                return Err(bad());
            };
            log.push(
                seq.parse().map_err(|_| bad())?,
                EventKind::parse(ev)?,
                t.parse().map_err(|_| bad())?,
            );
        }
        Ok(log)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse_csv(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut log = EventLog::new();
        log.push(0, EventKind::Captured, 0.04);
        log.push(0, EventKind::Sent, 0.04);
        log.push(1, EventKind::Dropped, 0.5);
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("chunk_seq,event,t\n0,captured,0.040000\n"));
        assert_eq!(EventLog::parse_csv(&text).unwrap(), log);
        assert!(EventLog::parse_csv("seq,t\n").is_err());
        assert!(EventLog::parse_csv("chunk_seq,event,t\n0,teleported,1\n").is_err());
    }

    #[test]
    fn order_violations_found() {
        let mut log = EventLog::new();
        log.push(0, EventKind::Sent, 1.0);
        log.push(0, EventKind::ArrivedServer, 0.5);
        log.push(1, EventKind::Sent, 1.0);
        assert_eq!(log.order_violations(), vec![0]);
    }
}
