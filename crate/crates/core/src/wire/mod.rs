//! Framed binary protocol between client and server, plus the frame codec.
//!
//! Every message starts with a fixed 22-byte header, all integers big-endian:
//!
//! | offset | size | field         |
//! |--------|------|---------------|
//! | 0      | 4    | magic `AVSE`  |
//! | 4      | 1    | version (1)   |
//! | 5      | 1    | message type  |
//! | 6      | 4    | seq           |
//! | 10     | 8    | send_ts (µs)  |
//! | 18     | 4    | payload_len   |
//!
//! Payload layouts are documented on [`MediaChunk`], [`EnhancedAudio`] and
//! [`Control`], and byte by byte in `PROTOCOL.md`.

mod codec;

pub use codec::{compress_frame, decompress_frame, decompress_region, quant_table};

use crate::video::{talking_face, Roi, VideoFrame, FRAME_HEIGHT, FRAME_WIDTH};
use crate::{Error, Result, SAMPLE_RATE, T_CHUNK};

pub const MAGIC: [u8; 4] = *b"AVSE";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 22;
pub const MAX_PAYLOAD: usize = 16 * 1024 * 1024;
/// Header plus fixed media-chunk fields (everything but samples and pixels).
pub const MEDIA_OVERHEAD: usize = HEADER_LEN + 22;
/// Timestamp value meaning "did not happen".
pub const NO_TS: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MsgType {
    MediaChunk = 1,
    EnhancedAudio = 2,
    Control = 3,
}

impl MsgType {
    fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(MsgType::MediaChunk),
            2 => Some(MsgType::EnhancedAudio),
            3 => Some(MsgType::Control),
            _ => None,
        }
    }
}

/// Video part of a chunk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FramePayload {
    None,
    Raw(VideoFrame),
    Compressed {
        width: u16,
        height: u16,
        quality: u8,
        bytes: Vec<u8>,
    },
}

impl FramePayload {
    pub fn compress(frame: &VideoFrame, quality: u8) -> Result<Self> {
        Ok(FramePayload::Compressed {
            width: frame.width as u16,
            height: frame.height as u16,
            quality,
            bytes: compress_frame(frame, quality)?,
        })
    }

    fn byte_len(&self) -> usize {
        match self {
            FramePayload::None => 0,
            FramePayload::Raw(f) => f.pixels.len(),
            FramePayload::Compressed { bytes, .. } => bytes.len(),
        }
    }

    /// Decodes the pixels inside `roi` (the whole frame if `None`).
    pub fn decode_region(&self, roi: Option<&Roi>) -> Result<Option<VideoFrame>> {
        match self {
            FramePayload::None => Ok(None),
            FramePayload::Raw(f) => match roi {
                Some(r) => f.crop(r).map(Some),
                None => Ok(Some(f.clone())),
            },
            FramePayload::Compressed { bytes, .. } => match roi {
                Some(r) => decompress_region(bytes, r).map(Some),
                None => decompress_frame(bytes).map(Some),
            },
        }
    }
}

/// One chunk of captured media.
///
/// Payload: `capture_ts u64 | flags u8 (bit0 = compressed) | quality u8 |
/// width u16 | height u16 | n_samples u32 | samples i16 × n | frame_len u32 |
/// frame bytes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MediaChunk {
    pub seq: u32,
    pub capture_ts_us: u64,
    pub audio: Vec<i16>,
    pub frame: FramePayload,
}

/// Enhanced audio for one chunk, with the server-side timestamps needed to
/// reconstruct the latency breakdown on the client.
///
/// Payload: `capture_ts u64 | flags u8 (bit0 = enhanced) | arrived_server u64 |
/// preprocessed u64 | enhance_start u64 | enhance_done u64 | n_samples u32 |
/// samples i16 × n`. Absent timestamps are `u64::MAX`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnhancedAudio {
    pub seq: u32,
    pub capture_ts_us: u64,
    pub enhanced: bool,
    pub arrived_server_us: u64,
    pub preprocessed_us: u64,
    pub enhance_start_us: u64,
    pub enhance_done_us: u64,
    pub audio: Vec<i16>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ControlCode {
    /// Receipt of the media chunk with the header's seq.
    Ack = 1,
    /// No more media will follow; `seq` is the number of chunks sent.
    EndOfStream = 2,
}

/// Payload: `code u8`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Control {
    pub seq: u32,
    pub code: ControlCode,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Media(MediaChunk),
    Enhanced(EnhancedAudio),
    Control(Control),
}

impl Message {
    pub fn seq(&self) -> u32 {
        match self {
            Message::Media(m) => m.seq,
            Message::Enhanced(m) => m.seq,
            Message::Control(m) => m.seq,
        }
    }

    pub fn msg_type(&self) -> MsgType {
        match self {
            Message::Media(_) => MsgType::MediaChunk,
            Message::Enhanced(_) => MsgType::EnhancedAudio,
            Message::Control(_) => MsgType::Control,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireMessage {
    pub send_ts_us: u64,
    pub body: Message,
}

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_be_bytes());
}
fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_be_bytes());
}
fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_be_bytes());
}

fn put_samples(out: &mut Vec<u8>, s: &[i16]) {
    put_u32(out, s.len() as u32);
    for v in s {
        out.extend_from_slice(&v.to_be_bytes());
    }
}

/// Serialises a message. Fails if the payload would exceed [`MAX_PAYLOAD`]
/// or a compressed frame's fields disagree with its codec stream header.
pub fn encode(msg: &WireMessage) -> Result<Vec<u8>> {
    let mut payload = Vec::new();
    match &msg.body {
        Message::Media(c) => {
            payload.reserve(22 + c.audio.len() * 2 + c.frame.byte_len());
            put_u64(&mut payload, c.capture_ts_us);
            let (flags, quality, w, h) = match &c.frame {
                FramePayload::None => (0u8, 0u8, 0u16, 0u16),
                FramePayload::Raw(f) => {
                    if f.width > u16::MAX as usize || f.height > u16::MAX as usize {
                        return Err(Error::Protocol("frame dimensions exceed u16".into()));
                    }
                    (0, 100, f.width as u16, f.height as u16)
                }
                FramePayload::Compressed { width, height, quality, bytes } => {
                    let [w0, w1] = width.to_be_bytes();
                    let [h0, h1] = height.to_be_bytes();
                    if *width == 0 || *height == 0 || !(1..=100).contains(quality) || bytes.get(..5) != Some(&[w0, w1, h0, h1, *quality][..]) {
                        return Err(Error::Protocol("compressed frame header disagrees with its codec stream".into()));
                    }
                    (1, *quality, *width, *height)
                }
            };
            payload.push(flags);
            payload.push(quality);
            put_u16(&mut payload, w);
            put_u16(&mut payload, h);
            put_samples(&mut payload, &c.audio);
            let bytes: &[u8] = match &c.frame {
                FramePayload::None => &[],
                FramePayload::Raw(f) => &f.pixels,
                FramePayload::Compressed { bytes, .. } => bytes,
            };
            put_u32(&mut payload, bytes.len() as u32);
            payload.extend_from_slice(bytes);
        }
        Message::Enhanced(e) => {
            put_u64(&mut payload, e.capture_ts_us);
            payload.push(e.enhanced as u8);
            put_u64(&mut payload, e.arrived_server_us);
            put_u64(&mut payload, e.preprocessed_us);
            put_u64(&mut payload, e.enhance_start_us);
            put_u64(&mut payload, e.enhance_done_us);
            put_samples(&mut payload, &e.audio);
        }
        Message::Control(c) => payload.push(c.code as u8),
    }
    if payload.len() > MAX_PAYLOAD {
        return Err(Error::Protocol(format!(
            "payload of {} bytes exceeds {MAX_PAYLOAD}",
            payload.len()
        )));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(msg.body.msg_type() as u8);
    put_u32(&mut out, msg.body.seq());
    put_u64(&mut out, msg.send_ts_us);
    put_u32(&mut out, payload.len() as u32);
    out.extend_from_slice(&payload);
    Ok(out)
}

/// A framing failure. `skip` bytes should be discarded before retrying; it
/// always lands on the next candidate magic (or the end of the buffer).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolError {
    pub reason: String,
    pub skip: usize,
}

impl From<ProtocolError> for Error {
    fn from(e: ProtocolError) -> Self {
        Error::Protocol(e.reason)
    }
}

/// Offset of the next possible message start at or after `from`. A partial
/// magic at the tail of the buffer counts as a candidate.
fn next_magic(buf: &[u8], from: usize) -> usize {
    (from..buf.len())
        .find(|&i| {
            let n = (buf.len() - i).min(MAGIC.len());
            buf[i..i + n] == MAGIC[..n]
        })
        .unwrap_or(buf.len())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.buf.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }
    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }
    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_be_bytes([b[0], b[1]]))
    }
    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_be_bytes(b.try_into().unwrap()))
    }
    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_be_bytes(b.try_into().unwrap()))
    }
    fn samples(&mut self) -> Option<Vec<i16>> {
        let n = self.u32()? as usize;
        let raw = self.take(n.checked_mul(2)?)?;
        Some(raw.chunks_exact(2).map(|b| i16::from_be_bytes([b[0], b[1]])).collect())
    }
}

fn parse_body(kind: MsgType, seq: u32, payload: &[u8]) -> Option<Message> {
    let mut r = Reader { buf: payload, pos: 0 };
    let msg = match kind {
        MsgType::MediaChunk => {
            let capture_ts_us = r.u64()?;
            let flags = r.u8()?;
            let quality = r.u8()?;
            let width = r.u16()?;
            let height = r.u16()?;
            let audio = r.samples()?;
            let n = r.u32()? as usize;
            let bytes = r.take(n)?;
            let frame = match (flags, width, height) {
                (0, 0, 0) if n == 0 => FramePayload::None,
                (0, w, h) if w > 0 && h > 0 && quality == 100 => {
                    if n != w as usize * h as usize {
                        return None;
                    }
                    FramePayload::Raw(VideoFrame {
                        width: w as usize,
                        height: h as usize,
                        pixels: bytes.to_vec(),
                    })
                }
                (1, w, h) if w > 0 && h > 0 && (1..=100).contains(&quality) => {
                    let [w0, w1] = w.to_be_bytes();
                    let [h0, h1] = h.to_be_bytes();
                    if bytes.get(..5) != Some(&[w0, w1, h0, h1, quality][..]) {
                        return None;
                    }
                    FramePayload::Compressed {
                        width: w,
                        height: h,
                        quality,
                        bytes: bytes.to_vec(),
                    }
                }
                _ => return None,
            };
            Message::Media(MediaChunk {
                seq,
                capture_ts_us,
                audio,
                frame,
            })
        }
        MsgType::EnhancedAudio => {
            let capture_ts_us = r.u64()?;
            let flags = r.u8()?;
            if flags > 1 {
                return None;
            }
            Message::Enhanced(EnhancedAudio {
                seq,
                capture_ts_us,
                enhanced: flags == 1,
                arrived_server_us: r.u64()?,
                preprocessed_us: r.u64()?,
                enhance_start_us: r.u64()?,
                enhance_done_us: r.u64()?,
                audio: r.samples()?,
            })
        }
        MsgType::Control => {
            let code = match r.u8()? {
                1 => ControlCode::Ack,
                2 => ControlCode::EndOfStream,
                _ => return None,
            };
            Message::Control(Control { seq, code })
        }
    };
    (r.pos == payload.len()).then_some(msg)
}

/// Decodes one message from the front of `buf`.
///
/// Returns `Ok(None)` when more bytes are needed (nothing is consumed),
/// `Ok(Some((msg, consumed)))` on success.
pub fn decode(buf: &[u8]) -> std::result::Result<Option<(WireMessage, usize)>, ProtocolError> {
    let fail = |reason: String| ProtocolError {
        reason,
        skip: next_magic(buf, 1),
    };
    let n = buf.len().min(MAGIC.len());
    if buf[..n] != MAGIC[..n] {
        return Err(ProtocolError {
            reason: "bad magic".into(),
            skip: next_magic(buf, 1),
        });
    }
    if buf.len() < HEADER_LEN {
        return Ok(None);
    }
    if buf[4] != VERSION {
        return Err(fail(format!("unsupported version {}", buf[4])));
    }
    let kind = MsgType::from_u8(buf[5]).ok_or_else(|| fail(format!("unknown message type {}", buf[5])))?;
    let seq = u32::from_be_bytes(buf[6..10].try_into().unwrap());
    let send_ts_us = u64::from_be_bytes(buf[10..18].try_into().unwrap());
    let len = u32::from_be_bytes(buf[18..22].try_into().unwrap()) as usize;
    if len > MAX_PAYLOAD {
        return Err(fail(format!("payload length {len} exceeds limit")));
    }
    if buf.len() < HEADER_LEN + len {
        return Ok(None);
    }
    let body = parse_body(kind, seq, &buf[HEADER_LEN..HEADER_LEN + len])
        .ok_or_else(|| fail(format!("malformed {kind:?} payload")))?;
    Ok(Some((WireMessage { send_ts_us, body }, HEADER_LEN + len)))
}

/// Decodes a media chunk from the front of `bytes`; `Ok(None)` means more
/// data is needed.
pub fn decode_chunk(bytes: &[u8]) -> Result<Option<MediaChunk>> {
    match decode(bytes)? {
        None => Ok(None),
        Some((WireMessage { body: Message::Media(c), .. }, _)) => Ok(Some(c)),
        Some((other, _)) => Err(Error::Protocol(format!(
            "expected media chunk, got {:?}",
            other.body.msg_type()
        ))),
    }
}

pub fn encode_chunk(chunk: &MediaChunk, send_ts_us: u64) -> Result<Vec<u8>> {
    encode(&WireMessage {
        send_ts_us,
        body: Message::Media(chunk.clone()),
    })
}

/// Incremental stream decoder that resynchronises on the magic after
/// corruption. Single owner.
#[derive(Debug, Default)]
pub struct Decoder {
    buf: Vec<u8>,
}

impl Decoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    /// Next complete message. A protocol error discards the offending bytes
    /// up to the next candidate magic; call again to continue.
    pub fn next_message(&mut self) -> std::result::Result<Option<WireMessage>, ProtocolError> {
        if self.buf.is_empty() {
            return Ok(None);
        }
        match decode(&self.buf) {
            Ok(Some((msg, used))) => {
                self.buf.drain(..used);
                Ok(Some(msg))
            }
            Ok(None) => Ok(None),
            Err(e) => {
                self.buf.drain(..e.skip.max(1).min(self.buf.len()));
                Err(e)
            }
        }
    }
}

impl Decoder {
    /// Drains the buffer at end of stream. A trailing partial message can
    /// never complete, so it counts as a framing error and decoding resumes
    /// at the next candidate magic. Returns the recovered messages and the
    /// number of errors.
    pub fn finish(&mut self) -> (Vec<WireMessage>, usize) {
        let mut msgs = Vec::new();
        let mut errors = 0;
        while !self.buf.is_empty() {
            match self.next_message() {
                Ok(Some(m)) => msgs.push(m),
                Ok(None) => {
                    errors += 1;
                    let skip = next_magic(&self.buf, 1).max(1);
                    self.buf.drain(..skip);
                }
                Err(_) => errors += 1,
            }
        }
        (msgs, errors)
    }
}

/// Media chunk geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChunkFormat {
    pub sample_rate: u32,
    pub t_chunk: f64,
    /// `None` for audio-only chunks.
    pub frame: Option<(usize, usize)>,
}

impl Default for ChunkFormat {
    fn default() -> Self {
        ChunkFormat {
            sample_rate: SAMPLE_RATE,
            t_chunk: T_CHUNK,
            frame: Some((FRAME_WIDTH, FRAME_HEIGHT)),
        }
    }
}

impl ChunkFormat {
    pub fn samples_per_chunk(&self) -> usize {
        (self.sample_rate as f64 * self.t_chunk).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadMode {
    Raw,
    /// Measured on a synthetic half-open talking-face frame.
    Compressed(u8),
}

/// Encoded size of one media message in bytes.
pub fn payload_size(format: &ChunkFormat, mode: PayloadMode) -> Result<usize> {
    let audio = format.samples_per_chunk() * 2;
    let frame = match (format.frame, mode) {
        (None, _) => 0,
        (Some((w, h)), PayloadMode::Raw) => w * h,
        (Some((w, h)), PayloadMode::Compressed(q)) => {
            compress_frame(&talking_face(w, h, 0.5, true, &Roi::MOUTH), q)?.len()
        }
    };
    Ok(MEDIA_OVERHEAD + audio + frame)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_chunk() -> MediaChunk {
        MediaChunk {
            seq: 7,
            capture_ts_us: 40_000,
            audio: vec![1, -2, 300, i16::MIN],
            frame: FramePayload::Raw(VideoFrame::new(2, 2, vec![0, 64, 128, 255]).unwrap()),
        }
    }

    #[test]
    fn golden_bytes() {
        let bytes = encode_chunk(&small_chunk(), 0x0102_0304_0506_0708).unwrap();
        let hex: String = bytes.iter().map(|b| format!("{b:02x}")).collect();
        let golden = include_str!("../../tests/golden/media_chunk_small.hex").trim();
        assert_eq!(hex, golden);
    }

    #[test]
    fn default_raw_size() {
        assert_eq!(payload_size(&ChunkFormat::default(), PayloadMode::Raw).unwrap(), 244_480 + MEDIA_OVERHEAD);
        let audio_only = ChunkFormat { frame: None, ..ChunkFormat::default() };
        assert_eq!(payload_size(&audio_only, PayloadMode::Raw).unwrap(), 1_280 + MEDIA_OVERHEAD);
        let q80 = payload_size(&ChunkFormat::default(), PayloadMode::Compressed(80)).unwrap();
        assert!(q80 <= 81_920, "{q80}");
        let c = MediaChunk {
            seq: 0,
            capture_ts_us: 0,
            audio: vec![0; 640],
            frame: FramePayload::Raw(VideoFrame::filled(640, 380, 0)),
        };
        assert_eq!(encode_chunk(&c, 0).unwrap().len(), 244_480 + MEDIA_OVERHEAD);
    }

    #[test]
    fn compressed_header_must_match_codec_stream() {
        let frame = VideoFrame::filled(16, 8, 90);
        let chunk = MediaChunk {
            frame: FramePayload::compress(&frame, 70).unwrap(),
            ..small_chunk()
        };
        let bytes = encode_chunk(&chunk, 3).unwrap();
        assert_eq!(decode_chunk(&bytes).unwrap(), Some(chunk.clone()));
        // quality byte of the media payload: header + capture_ts + flags
        let q = HEADER_LEN + 9;
        assert_eq!(bytes[q], 70);
        let mut forged = chunk.clone();
        if let FramePayload::Compressed { quality, .. } = &mut forged.frame {
            *quality = 71;
        }
        assert!(encode_chunk(&forged, 3).is_err());
        let mut bad = bytes.clone();
        bad[q] = 71;
        assert!(decode(&bad).is_err());
        // width field of the media payload
        let mut bad = bytes;
        bad[q + 2] ^= 1;
        assert!(decode(&bad).is_err());
    }

    #[test]
    fn truncation_needs_more_data() {
        let bytes = encode_chunk(&small_chunk(), 1).unwrap();
        assert_eq!(decode(&[]).unwrap(), None);
        for n in 0..bytes.len() {
            assert_eq!(decode(&bytes[..n]).unwrap(), None, "prefix {n}");
        }
        assert_eq!(decode_chunk(&bytes).unwrap(), Some(small_chunk()));
    }

    #[test]
    fn corrupted_header_resyncs() {
        let a = encode_chunk(&small_chunk(), 1).unwrap();
        let mut b_chunk = small_chunk();
        b_chunk.seq = 8;
        let b = encode_chunk(&b_chunk, 2).unwrap();
        for corrupt in [0usize, 3, 4, 5] {
            let mut stream = a.clone();
            stream[corrupt] ^= 0x5a;
            stream.extend_from_slice(&b);
            let mut dec = Decoder::new();
            dec.push(&stream);
            let mut errors = 0;
            let mut got = Vec::new();
            loop {
                match dec.next_message() {
                    Ok(Some(m)) => got.push(m),
                    Ok(None) => break,
                    Err(_) => errors += 1,
                }
            }
            assert!(errors >= 1, "byte {corrupt}");
            assert_eq!(got.len(), 1, "byte {corrupt}");
            assert_eq!(got[0].body.seq(), 8);
        }
    }

    #[test]
    fn corrupted_length_loses_one_message() {
        let a = encode_chunk(&small_chunk(), 1).unwrap();
        let b = encode(&WireMessage {
            send_ts_us: 5,
            body: Message::Control(Control { seq: 9, code: ControlCode::Ack }),
        })
        .unwrap();
        for delta in [-3i32, 5] {
            let mut stream = a.clone();
            let len = u32::from_be_bytes(stream[18..22].try_into().unwrap()) as i32 + delta;
            stream[18..22].copy_from_slice(&(len as u32).to_be_bytes());
            stream.extend_from_slice(&b);
            stream.extend_from_slice(&b);
            let mut dec = Decoder::new();
            dec.push(&stream);
            let mut got = Vec::new();
            for _ in 0..100 {
                match dec.next_message() {
                    Ok(Some(m)) => got.push(m),
                    Ok(None) => break,
                    Err(_) => {}
                }
            }
            assert!(!got.is_empty(), "delta {delta}");
            assert!(got.iter().all(|m| m.body.seq() == 9));
        }
    }

    #[test]
    fn finish_recovers_after_inflated_length() {
        let a = encode_chunk(&small_chunk(), 1).unwrap();
        let mut stream = a.clone();
        stream[18..22].copy_from_slice(&1_000_000u32.to_be_bytes());
        stream.extend_from_slice(&a);
        let mut dec = Decoder::new();
        dec.push(&stream);
        assert_eq!(dec.next_message().unwrap(), None);
        let (msgs, errors) = dec.finish();
        assert_eq!(errors, 1);
        assert_eq!(msgs.len(), 1);
        assert_eq!(dec.buffered(), 0);
    }

    #[test]
    fn unknown_type_and_oversize_rejected() {
        let mut bytes = encode_chunk(&small_chunk(), 1).unwrap();
        bytes[5] = 9;
        assert!(decode(&bytes).is_err());
        let mut bytes = encode_chunk(&small_chunk(), 1).unwrap();
        bytes[18..22].copy_from_slice(&(MAX_PAYLOAD as u32 + 1).to_be_bytes());
        assert!(decode(&bytes).is_err());
        let huge = MediaChunk {
            seq: 0,
            capture_ts_us: 0,
            audio: vec![0; MAX_PAYLOAD / 2 + 1],
            frame: FramePayload::None,
        };
        assert!(matches!(encode_chunk(&huge, 0), Err(Error::Protocol(_))));
    }

    #[test]
    fn enhanced_and_control_round_trip() {
        for body in [
            Message::Enhanced(EnhancedAudio {
                seq: 3,
                capture_ts_us: 120_000,
                enhanced: true,
                arrived_server_us: 1,
                preprocessed_us: 2,
                enhance_start_us: NO_TS,
                enhance_done_us: 4,
                audio: vec![5, -6],
            }),
            Message::Control(Control { seq: 250, code: ControlCode::EndOfStream }),
        ] {
            let m = WireMessage { send_ts_us: 99, body };
            let bytes = encode(&m).unwrap();
            assert_eq!(decode(&bytes).unwrap(), Some((m, bytes.len())));
        }
    }
}
