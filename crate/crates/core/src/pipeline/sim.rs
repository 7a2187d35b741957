//! Single-threaded discrete-event run of the pipeline on a virtual clock
//! with 1 ms network ticks. Events at equal times run in scheduling order.

use std::collections::BTreeMap;

use crate::netem::Link;
use crate::wire::{encode, encode_chunk, Control, ControlCode, Decoder, Message, WireMessage};
use crate::{Error, Result};

use super::{
    to_us, validate_config, ClientCore, EventKind, MediaSource, Micros, PipelineConfig, Preprocessed, RunOutput,
    ServerCore, WindowPlan,
};
use crate::dsp::Enhanced;

const TICK_US: u64 = 1_000;

enum Ev {
    Capture(usize),
    Uplink(Vec<u8>),
    Downlink(Vec<u8>),
    WorkerTick,
    WorkerDone,
    Release(u32),
    AckTimeout(u32),
}

struct Sim<'a> {
    cfg: PipelineConfig,
    source: &'a MediaSource,
    queue: BTreeMap<(Micros, u64), Ev>,
    order: u64,
    up: Link,
    down: Link,
    client: ClientCore,
    server: ServerCore,
    up_decoder: Decoder,
    down_decoder: Decoder,
    captured: usize,
    next_send: usize,
    awaiting_ack: Option<u32>,
    eos_sent: bool,
    tick_scheduled: bool,
    running: Option<(WindowPlan, Enhanced)>,
    media_bytes: Vec<usize>,
    protocol_errors: usize,
}

/// Simulates `duration_s` seconds of a synthetic talker (seeded by the
/// channel seed).
pub fn simulate(cfg: &PipelineConfig, duration_s: f64) -> Result<RunOutput> {
    let source = MediaSource::synthetic(duration_s, cfg.channel.seed, cfg)?;
    simulate_with(cfg, &source)
}

/// Simulates streaming `source` through the pipeline.
pub fn simulate_with(cfg: &PipelineConfig, source: &MediaSource) -> Result<RunOutput> {
    let validated = validate_config(cfg.clone())?;
    let cfg = validated.config;
    let total = source.chunk_count();
    let mut sim = Sim {
        up: Link::new(&cfg.channel, 0, TICK_US),
        down: Link::new(&cfg.channel, 1, TICK_US),
        client: ClientCore::new(&cfg, total, source.samples_per_chunk(), 0),
        server: ServerCore::new(&cfg, source.sample_rate(), source.clean.clone())?,
        cfg,
        source,
        queue: BTreeMap::new(),
        order: 0,
        up_decoder: Decoder::new(),
        down_decoder: Decoder::new(),
        captured: 0,
        next_send: 0,
        awaiting_ack: None,
        eos_sent: false,
        tick_scheduled: false,
        running: None,
        media_bytes: Vec::with_capacity(total),
        protocol_errors: 0,
    };
    for n in 0..total {
        let t = sim.client.capture_time(n);
        sim.push(t, Ev::Capture(n));
    }
    if total == 0 {
        sim.try_send(0)?;
    }
    while let Some(((now, _), ev)) = sim.queue.pop_first() {
        sim.handle(now, ev)?;
        sim.poll(now)?;
    }
    if !sim.client.finished() {
        return Err(Error::invalid("simulation ended before playback finished"));
    }
    let mut log = std::mem::take(&mut sim.client.log);
    log.sort();
    Ok(RunOutput {
        played: sim.client.played_signal(source.sample_rate()),
        config: sim.cfg,
        log,
        chunks: total,
        media_bytes: sim.media_bytes,
        protocol_errors: sim.protocol_errors,
        warnings: validated.warnings,
    })
}

impl Sim<'_> {
    fn push(&mut self, t: Micros, ev: Ev) {
        self.queue.insert((t, self.order), ev);
        self.order += 1;
    }

    fn try_send(&mut self, now: Micros) -> Result<()> {
        if self.awaiting_ack.is_some() {
            return Ok(());
        }
        let total = self.source.chunk_count();
        if self.next_send < self.captured {
            let seq = self.next_send;
            self.next_send += 1;
            let chunk = self.source.chunk(seq, self.client.capture_time(seq))?;
            let bytes = encode_chunk(&chunk, now)?;
            self.media_bytes.push(bytes.len());
            self.client.record(seq as u32, EventKind::Sent, now);
            self.awaiting_ack = Some(seq as u32);
            match self.up.schedule(now, bytes.len(), true) {
                Some(t) => self.push(t, Ev::Uplink(bytes)),
                None => {
                    let t = now + to_us(self.cfg.ack_timeout);
                    self.push(t, Ev::AckTimeout(seq as u32));
                }
            }
        } else if self.next_send == total && !self.eos_sent {
            self.eos_sent = true;
            let bytes = encode(&WireMessage {
                send_ts_us: now,
                body: Message::Control(Control {
                    seq: total as u32,
                    code: ControlCode::EndOfStream,
                }),
            })?;
            let t = self.up.schedule(now, bytes.len(), false).expect("lossless");
            self.push(t, Ev::Uplink(bytes));
        }
        Ok(())
    }

    fn send_down(&mut self, now: Micros, msg: WireMessage) -> Result<()> {
        let bytes = encode(&msg)?;
        let t = self.down.schedule(now, bytes.len(), false).expect("lossless");
        self.push(t, Ev::Downlink(bytes));
        Ok(())
    }

    fn handle(&mut self, now: Micros, ev: Ev) -> Result<()> {
        match ev {
            Ev::Capture(n) => {
                self.client.record(n as u32, EventKind::Captured, now);
                self.captured = n + 1;
                self.try_send(now)?;
            }
            Ev::AckTimeout(seq) => {
                self.client.mark_dropped(seq, now);
                self.awaiting_ack = None;
                self.try_send(now)?;
            }
            Ev::Uplink(bytes) => {
                self.up_decoder.push(&bytes);
                loop {
                    match self.up_decoder.next_message() {
                        Ok(Some(msg)) => self.server_receive(now, msg)?,
                        Ok(None) => break,
                        Err(_) => self.protocol_errors += 1,
                    }
                }
            }
            Ev::Downlink(bytes) => {
                self.down_decoder.push(&bytes);
                loop {
                    match self.down_decoder.next_message() {
                        Ok(Some(msg)) => self.client_receive(now, msg)?,
                        Ok(None) => break,
                        Err(_) => self.protocol_errors += 1,
                    }
                }
            }
            Ev::WorkerTick => {
                self.tick_scheduled = false;
                if let Some((plan, window, oracle)) = self.server.plan_window(now)? {
                    let out = ServerCore::run_enhancer(&self.cfg, &plan, &window, oracle.as_ref())?;
                    let done = now + to_us(out.latency_s);
                    self.running = Some((plan, out));
                    self.push(done, Ev::WorkerDone);
                }
            }
            Ev::WorkerDone => {
                let (plan, out) = self.running.take().expect("worker run in flight");
                self.server.commit(&plan, &out, now)?;
            }
            Ev::Release(seq) => {
                let body = Message::Enhanced(self.server.output_message(seq)?);
                self.send_down(now, WireMessage { send_ts_us: now, body })?;
            }
        }
        Ok(())
    }

    fn server_receive(&mut self, now: Micros, msg: WireMessage) -> Result<()> {
        match msg.body {
            Message::Media(chunk) => {
                let pre = Preprocessed::from_chunk(&chunk, &self.cfg.payload.roi)?;
                self.server.insert(pre, now, now)?;
                let ack = Message::Control(Control {
                    seq: chunk.seq,
                    code: ControlCode::Ack,
                });
                self.send_down(now, WireMessage { send_ts_us: now, body: ack })
            }
            Message::Control(Control {
                seq,
                code: ControlCode::EndOfStream,
            }) => self.server.end_of_stream(seq as usize, now),
            other => Err(Error::Protocol(format!("server got unexpected {:?}", other.msg_type()))),
        }
    }

    fn client_receive(&mut self, now: Micros, msg: WireMessage) -> Result<()> {
        match msg.body {
            Message::Control(Control { seq, code: ControlCode::Ack }) => {
                if self.awaiting_ack == Some(seq) {
                    self.awaiting_ack = None;
                    self.try_send(now)?;
                }
                Ok(())
            }
            Message::Enhanced(audio) => self.client.on_enhanced(&audio, msg.send_ts_us, now),
            other => Err(Error::Protocol(format!("client got unexpected {:?}", other.msg_type()))),
        }
    }

    fn poll(&mut self, now: Micros) -> Result<()> {
        if !self.tick_scheduled && self.running.is_none() {
            if let Some(t) = self.server.next_worker_time() {
                self.tick_scheduled = true;
                self.push(t.max(now), Ev::WorkerTick);
            }
        }
        while let Some((seq, t)) = self.server.next_release() {
            self.push(t.max(now), Ev::Release(seq));
        }
        self.client.play_ready();
        Ok(())
    }
}
