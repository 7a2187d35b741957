//! Live pipeline over TCP. Each direction passes through a delay-line
//! thread that applies the channel model before writing to the socket.
//! Timestamps are unix-epoch microseconds, so client and server must share
//! a clock (loopback).

use std::io::{Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use crate::netem::Link;
use crate::scene::Signal;
use crate::wire::{encode, encode_chunk, Control, ControlCode, Decoder, Message, WireMessage};
use crate::{Error, Result};

use super::{
    to_us, validate_config, ClientCore, EventKind, MediaSource, Micros, PipelineConfig, Preprocessed, RunOutput,
    ServerCore,
};

/// Longest the server waits without any event before re-checking state.
const POLL: Duration = Duration::from_millis(50);

pub fn now_us() -> Micros {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_micros() as Micros)
        .unwrap_or(0)
}

fn sleep_until(t: Micros) {
    let now = now_us();
    if t > now {
        thread::sleep(Duration::from_micros(t - now));
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

/// Message queued for a delay line: bytes, hand-over time, may be lost.
type Outgoing = (Vec<u8>, Micros, bool);

/// Spawns the thread that delays and writes one direction of traffic. The
/// socket's write half is shut down once every sender has hung up.
fn delay_line(mut stream: TcpStream, mut link: Link) -> (Sender<Outgoing>, thread::JoinHandle<()>) {
    let (tx, rx): (Sender<Outgoing>, Receiver<Outgoing>) = mpsc::channel();
    let handle = thread::spawn(move || {
        for (bytes, handed_over, lossy) in rx {
            let Some(at) = link.schedule(handed_over, bytes.len(), lossy) else {
                continue;
            };
            sleep_until(at);
            if stream.write_all(&bytes).is_err() {
                break;
            }
        }
        let _ = stream.flush();
        let _ = stream.shutdown(Shutdown::Write);
    });
    (tx, handle)
}

/// Reads from `stream` until EOF, feeding complete messages to `on_msg`.
/// Returns the number of framing errors skipped.
fn read_messages(mut stream: TcpStream, mut on_msg: impl FnMut(WireMessage, Micros) -> Result<()>) -> Result<usize> {
    let mut decoder = Decoder::new();
    let mut buf = vec![0u8; 64 * 1024];
    let mut errors = 0;
    loop {
        let n = match stream.read(&mut buf) {
            Ok(0) => return Ok(errors),
            Ok(n) => n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        };
        let now = now_us();
        decoder.push(&buf[..n]);
        loop {
            match decoder.next_message() {
                Ok(Some(msg)) => match on_msg(msg, now) {
                    Ok(()) => {}
                    Err(Error::Protocol(m)) => {
                        log::warn!("protocol error: {m}");
                        errors += 1;
                    }
                    Err(e) => return Err(e),
                },
                Ok(None) => break,
                Err(e) => {
                    log::warn!("framing error: {}", e.reason);
                    errors += 1;
                }
            }
        }
    }
}

struct ServerShared {
    core: Mutex<ServerState>,
    cv: Condvar,
}

struct ServerState {
    core: ServerCore,
    closed: bool,
    failed: Option<Error>,
}

/// Outcome of one server session.
#[derive(Debug, Clone, Default)]
pub struct SessionStats {
    pub chunks: usize,
    pub protocol_errors: usize,
}

/// Serves one client connection until it closes and all output is sent.
pub fn serve_session(cfg: &PipelineConfig, stream: TcpStream, oracle: Option<Signal>, sample_rate: u32) -> Result<SessionStats> {
    stream.set_nodelay(true)?;
    let shared = Arc::new(ServerShared {
        core: Mutex::new(ServerState {
            core: ServerCore::new(cfg, sample_rate, oracle)?,
            closed: false,
            failed: None,
        }),
        cv: Condvar::new(),
    });
    let (down, down_thread) = delay_line(stream.try_clone()?, Link::new(&cfg.channel, 1, 1));

    let worker = {
        let shared = shared.clone();
        let cfg = cfg.clone();
        thread::spawn(move || worker_loop(&cfg, &shared))
    };
    let sender = {
        let shared = shared.clone();
        let down = down.clone();
        thread::spawn(move || sender_loop(&shared, &down))
    };

    let roi = cfg.payload.roi;
    let acks = down;
    let received = Arc::new(AtomicUsize::new(0));
    let counter = received.clone();
    let read_result = read_messages(stream, |msg, arrived| match msg.body {
        Message::Media(chunk) => {
            let pre = Preprocessed::from_chunk(&chunk, &roi)?;
            let preprocessed = now_us();
            {
                let mut st = lock(&shared.core);
                st.core.insert(pre, arrived, preprocessed)?;
            }
            shared.cv.notify_all();
            counter.fetch_add(1, Ordering::Relaxed);
            let now = now_us();
            let ack = encode(&WireMessage {
                send_ts_us: now,
                body: Message::Control(Control {
                    seq: chunk.seq,
                    code: ControlCode::Ack,
                }),
            })?;
            let _ = acks.send((ack, now, false));
            Ok(())
        }
        Message::Control(Control {
            seq,
            code: ControlCode::EndOfStream,
        }) => {
            lock(&shared.core).core.end_of_stream(seq as usize, arrived)?;
            shared.cv.notify_all();
            Ok(())
        }
        other => Err(Error::Protocol(format!("server got unexpected {:?}", other.msg_type()))),
    });
    drop(acks);
    {
        let mut st = lock(&shared.core);
        st.closed = true;
        if let Err(e) = &read_result {
            st.failed.get_or_insert(Error::Protocol(e.to_string()));
        }
    }
    shared.cv.notify_all();
    let worker_result = worker.join().map_err(|_| Error::invalid("worker thread panicked"))?;
    sender.join().map_err(|_| Error::invalid("sender thread panicked"))?;
    let _ = down_thread.join();
    let protocol_errors = read_result?;
    worker_result?;
    Ok(SessionStats {
        chunks: received.load(Ordering::Relaxed),
        protocol_errors,
    })
}

fn worker_loop(cfg: &PipelineConfig, shared: &ServerShared) -> Result<()> {
    loop {
        let planned = {
            let mut st = lock(&shared.core);
            loop {
                if st.core.worker_finished() || st.failed.is_some() {
                    return Ok(());
                }
                let now = now_us();
                match st.core.next_worker_time() {
                    Some(t) if t <= now => break,
                    Some(t) => {
                        let wait = Duration::from_micros(t - now).min(POLL);
                        st = shared.cv.wait_timeout(st, wait).unwrap_or_else(|p| p.into_inner()).0;
                    }
                    None if st.closed && st.core.total().is_none() => return Ok(()),
                    None => st = shared.cv.wait_timeout(st, POLL).unwrap_or_else(|p| p.into_inner()).0,
                }
            }
            st.core.plan_window(now_us())
        };
        let Some((plan, window, oracle)) = planned.inspect_err(|e| fail(shared, e))? else {
            continue;
        };
        let result = ServerCore::run_enhancer(cfg, &plan, &window, oracle.as_ref()).inspect_err(|e| fail(shared, e))?;
        sleep_until(plan.start + to_us(result.latency_s));
        let done = now_us();
        lock(&shared.core).core.commit(&plan, &result, done).inspect_err(|e| fail(shared, e))?;
        shared.cv.notify_all();
    }
}

fn fail(shared: &ServerShared, e: &Error) {
    lock(&shared.core).failed.get_or_insert(Error::invalid(e.to_string()));
    shared.cv.notify_all();
}

fn sender_loop(shared: &ServerShared, down: &Sender<Outgoing>) {
    loop {
        let next = {
            let mut st = lock(&shared.core);
            loop {
                if st.failed.is_some() {
                    return;
                }
                if let Some((seq, at)) = st.core.next_release() {
                    match st.core.output_message(seq) {
                        Ok(m) => break (m, at),
                        Err(_) => return,
                    }
                }
                if st.core.release_finished() || (st.closed && st.core.total().is_none()) {
                    return;
                }
                st = shared.cv.wait_timeout(st, POLL).unwrap_or_else(|p| p.into_inner()).0;
            }
        };
        let (msg, at) = next;
        sleep_until(at);
        let now = now_us();
        let Ok(bytes) = encode(&WireMessage {
            send_ts_us: now,
            body: Message::Enhanced(msg),
        }) else {
            return;
        };
        if down.send((bytes, now, false)).is_err() {
            return;
        }
    }
}

/// Accepts `sessions` connections one after another. A failed session is
/// logged and does not stop the listener.
pub fn serve(cfg: &PipelineConfig, listener: &TcpListener, sessions: usize, oracle: Option<Signal>, sample_rate: u32) -> Result<Vec<Result<SessionStats>>> {
    let cfg = validate_config(cfg.clone())?.config;
    let mut results = Vec::with_capacity(sessions);
    for _ in 0..sessions {
        let (stream, peer) = listener.accept()?;
        let r = serve_session(&cfg, stream, oracle.clone(), sample_rate);
        if let Err(e) = &r {
            log::warn!("session with {peer} failed: {e}");
        }
        results.push(r);
    }
    Ok(results)
}

struct ClientShared {
    core: Mutex<ClientCore>,
    cv: Condvar,
    closed: Mutex<bool>,
}

/// Streams `source` to the server at `addr` in real time and plays the
/// returned audio.
pub fn run_client(cfg: &PipelineConfig, addr: impl ToSocketAddrs, source: &MediaSource) -> Result<RunOutput> {
    let validated = validate_config(cfg.clone())?;
    let cfg = validated.config;
    let stream = TcpStream::connect(addr)?;
    stream.set_nodelay(true)?;
    let total = source.chunk_count();
    let origin = now_us();
    let shared = Arc::new(ClientShared {
        core: Mutex::new(ClientCore::new(&cfg, total, source.samples_per_chunk(), origin)),
        cv: Condvar::new(),
        closed: Mutex::new(false),
    });
    let (up, up_thread) = delay_line(stream.try_clone()?, Link::new(&cfg.channel, 0, 1));
    let (ack_tx, ack_rx) = mpsc::channel::<u32>();

    let receiver = {
        let shared = shared.clone();
        let stream = stream.try_clone()?;
        thread::spawn(move || {
            let r = read_messages(stream, |msg, arrival| match msg.body {
                Message::Control(Control { seq, code: ControlCode::Ack }) => {
                    let _ = ack_tx.send(seq);
                    Ok(())
                }
                Message::Enhanced(audio) => {
                    lock(&shared.core).on_enhanced(&audio, msg.send_ts_us, arrival)?;
                    shared.cv.notify_all();
                    Ok(())
                }
                other => Err(Error::Protocol(format!("client got unexpected {:?}", other.msg_type()))),
            });
            *lock(&shared.closed) = true;
            shared.cv.notify_all();
            r
        })
    };
    let player = {
        let shared = shared.clone();
        thread::spawn(move || playback_loop(&shared))
    };

    let mut media_bytes = Vec::with_capacity(total);
    let send_result = (|| -> Result<()> {
        let lossy = cfg.channel.loss_rate > 0.0;
        let timeout = Duration::from_secs_f64(cfg.ack_timeout);
        let mut awaiting: Option<u32> = None;
        let wait_ack = |awaiting: &mut Option<u32>| -> Result<()> {
            let Some(seq) = awaiting.take() else { return Ok(()) };
            loop {
                let got = if lossy {
                    ack_rx.recv_timeout(timeout)
                } else {
                    ack_rx.recv().map_err(|_| RecvTimeoutError::Disconnected)
                };
                match got {
                    Ok(s) if s == seq => return Ok(()),
                    Ok(_) => continue,
                    Err(RecvTimeoutError::Timeout) => {
                        lock(&shared.core).mark_dropped(seq, now_us());
                        return Ok(());
                    }
                    Err(RecvTimeoutError::Disconnected) => {
                        return Err(Error::Protocol("connection closed while awaiting ack".into()))
                    }
                }
            }
        };
        for seq in 0..total {
            let captured = origin + to_us((seq + 1) as f64 * cfg.t_chunk);
            sleep_until(captured);
            let chunk = source.chunk(seq, captured)?;
            wait_ack(&mut awaiting)?;
            let now = now_us();
            let bytes = encode_chunk(&chunk, now)?;
            media_bytes.push(bytes.len());
            {
                let mut c = lock(&shared.core);
                c.record(seq as u32, EventKind::Captured, captured);
                c.record(seq as u32, EventKind::Sent, now);
            }
            up.send((bytes, now, true)).map_err(|_| Error::Protocol("uplink closed".into()))?;
            awaiting = Some(seq as u32);
        }
        wait_ack(&mut awaiting)?;
        let now = now_us();
        let eos = encode(&WireMessage {
            send_ts_us: now,
            body: Message::Control(Control {
                seq: total as u32,
                code: ControlCode::EndOfStream,
            }),
        })?;
        up.send((eos, now, false)).map_err(|_| Error::Protocol("uplink closed".into()))?;
        Ok(())
    })();
    drop(up);
    let _ = up_thread.join();
    if send_result.is_err() {
        let _ = stream.shutdown(Shutdown::Both);
    }
    let recv_errors = receiver.join().map_err(|_| Error::invalid("receiver thread panicked"))??;
    player.join().map_err(|_| Error::invalid("playback thread panicked"))?;
    send_result?;

    let core = Arc::try_unwrap(shared)
        .map_err(|_| Error::invalid("client state still shared"))?
        .core
        .into_inner()
        .unwrap_or_else(|p| p.into_inner());
    let mut log = core.log.clone();
    log.sort();
    Ok(RunOutput {
        played: core.played_signal(source.sample_rate()),
        config: cfg,
        log,
        chunks: total,
        media_bytes,
        protocol_errors: recv_errors,
        warnings: validated.warnings,
    })
}

fn playback_loop(shared: &ClientShared) {
    loop {
        let due = {
            let mut c = lock(&shared.core);
            loop {
                if c.finished() {
                    return;
                }
                if let Some(d) = c.next_play() {
                    break d;
                }
                if *lock(&shared.closed) {
                    return;
                }
                c = shared.cv.wait_timeout(c, POLL).unwrap_or_else(|p| p.into_inner()).0;
            }
        };
        let (seq, at) = due;
        sleep_until(at);
        lock(&shared.core).on_played(seq, now_us().max(at));
    }
}

/// Runs server and client in one process over a loopback socket.
pub fn run_loopback(cfg: &PipelineConfig, source: &MediaSource) -> Result<RunOutput> {
    let cfg = validate_config(cfg.clone())?.config;
    let listener = TcpListener::bind(&cfg.addr)?;
    let addr = listener.local_addr()?;
    let server = {
        let cfg = cfg.clone();
        let oracle = source.clean.clone();
        let sr = source.sample_rate();
        thread::spawn(move || -> Result<SessionStats> {
            let (stream, _) = listener.accept()?;
            serve_session(&cfg, stream, oracle, sr)
        })
    };
    let client = run_client(&cfg, addr, source);
    let stats = server.join().map_err(|_| Error::invalid("server thread panicked"))??;
    let mut out = client?;
    out.protocol_errors += stats.protocol_errors;
    Ok(out)
}
