//! Length-prefixed binary messages. See `docs/protocol.md` for a worked example.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};

pub const PROTO_VERSION: u16 = 1;
/// Frames above this size are rejected before allocation.
pub const MAX_FRAME_LEN: u32 = 1 << 28;

pub const MSG_HELLO_REQ: u8 = 0x01;
pub const MSG_DENOISE_REQ: u8 = 0x02;
pub const MSG_ERROR: u8 = 0x7F;
pub const MSG_HELLO_RESP: u8 = 0x81;
pub const MSG_DENOISE_RESP: u8 = 0x82;
pub const MSG_DENOISE_META: u8 = 0x83;

/// Status byte of a successful DENOISE-resp.
pub const STATUS_OK: u8 = 0;

/// Error codes carried by ERROR frames and failed DENOISE-resp bodies.
pub mod codes {
    pub const MALFORMED: u16 = 1;
    pub const VERSION: u16 = 2;
    pub const UNEXPECTED: u16 = 3;
    pub const BACKEND: u16 = 4;
}

/// `u8 ndim | ndim × u32 dims | f32 data`. `ndim = 0` means "absent".
#[derive(Debug, Clone, PartialEq)]
pub struct WireTensor {
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

impl WireTensor {
    pub fn empty() -> Self {
        Self {
            dims: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    HelloReq {
        version: u16,
    },
    HelloResp {
        version: u16,
        max_window_frames: u16,
        c: u16,
        h: u16,
        w: u16,
    },
    DenoiseReq {
        request_id: u64,
        sigma_from: f64,
        sigma_to: f64,
        window_start: u32,
        cond_offset: u16,
        cond: WireTensor,
        window: WireTensor,
    },
    /// `result` is `Ok(tensor)` for status 0, `Err((status, message))` otherwise.
    DenoiseResp {
        request_id: u64,
        result: std::result::Result<WireTensor, (u8, String)>,
    },
    /// Optional per-request metadata a server may send before the response.
    DenoiseMeta {
        request_id: u64,
        json: String,
    },
    Error {
        request_id: u64,
        code: u16,
        message: String,
    },
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn text(&mut self, s: &str) {
        let b = &s.as_bytes()[..s.len().min(u16::MAX as usize)];
        self.u16(b.len() as u16);
        self.0.extend_from_slice(b);
    }
    fn tensor(&mut self, t: &WireTensor) {
        self.u8(t.dims.len() as u8);
        for &d in &t.dims {
            self.u32(d);
        }
        for v in &t.data {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::Protocol(msg.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| malformed(format!("message body truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn text(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| malformed("message text is not UTF-8"))
    }
    fn tensor(&mut self) -> Result<WireTensor> {
        let ndim = self.u8()? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(self.u32()?);
        }
        let count = if ndim == 0 {
            0
        } else {
            dims.iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
                .ok_or_else(|| malformed("tensor dims overflow"))?
        };
        if ndim > 0 && count == 0 {
            return Err(malformed("tensor has a zero dimension"));
        }
        let bytes = self.take(count.checked_mul(4).ok_or_else(|| malformed("tensor dims overflow"))?)?;
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(malformed("tensor contains non-finite values"));
        }
        Ok(WireTensor { dims, data })
    }
    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(malformed(format!(
                "{} trailing bytes after message body",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

impl Message {
    pub fn msg_type(&self) -> u8 {
        match self {
            Message::HelloReq { .. } => MSG_HELLO_REQ,
            Message::HelloResp { .. } => MSG_HELLO_RESP,
            Message::DenoiseReq { .. } => MSG_DENOISE_REQ,
            Message::DenoiseResp { .. } => MSG_DENOISE_RESP,
            Message::DenoiseMeta { .. } => MSG_DENOISE_META,
            Message::Error { .. } => MSG_ERROR,
        }
    }

    /// Payload bytes (type byte + body), without the length prefix.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.u8(self.msg_type());
        match self {
            Message::HelloReq { version } => w.u16(*version),
            Message::HelloResp {
                version,
                max_window_frames,
                c,
                h,
                w: width,
            } => {
                w.u16(*version);
                w.u16(*max_window_frames);
                w.u16(*c);
                w.u16(*h);
                w.u16(*width);
            }
            Message::DenoiseReq {
                request_id,
                sigma_from,
                sigma_to,
                window_start,
                cond_offset,
                cond,
                window,
            } => {
                w.u64(*request_id);
                w.f64(*sigma_from);
                w.f64(*sigma_to);
                w.u32(*window_start);
                w.u16(*cond_offset);
                w.tensor(cond);
                w.tensor(window);
            }
            Message::DenoiseResp { request_id, result } => {
                w.u64(*request_id);
                match result {
                    Ok(t) => {
                        w.u8(STATUS_OK);
                        w.tensor(t);
                    }
                    Err((status, msg)) => {
                        w.u8(*status);
                        w.text(msg);
                    }
                }
            }
            Message::DenoiseMeta { request_id, json } => {
                w.u64(*request_id);
                w.text(json);
            }
            Message::Error {
                request_id,
                code,
                message,
            } => {
                w.u64(*request_id);
                w.u16(*code);
                w.text(message);
            }
        }
        w.0
    }

    pub fn decode(payload: &[u8]) -> Result<Message> {
        let mut r = Reader { buf: payload, pos: 0 };
        let msg = match r.u8()? {
            MSG_HELLO_REQ => Message::HelloReq { version: r.u16()? },
            MSG_HELLO_RESP => Message::HelloResp {
                version: r.u16()?,
                max_window_frames: r.u16()?,
                c: r.u16()?,
                h: r.u16()?,
                w: r.u16()?,
            },
            MSG_DENOISE_REQ => Message::DenoiseReq {
                request_id: r.u64()?,
                sigma_from: r.f64()?,
                sigma_to: r.f64()?,
                window_start: r.u32()?,
                cond_offset: r.u16()?,
                cond: r.tensor()?,
                window: r.tensor()?,
            },
            MSG_DENOISE_RESP => {
                let request_id = r.u64()?;
                let status = r.u8()?;
                let result = if status == STATUS_OK {
                    Ok(r.tensor()?)
                } else {
                    Err((status, r.text()?))
                };
                Message::DenoiseResp { request_id, result }
            }
            MSG_DENOISE_META => Message::DenoiseMeta {
                request_id: r.u64()?,
                json: r.text()?,
            },
            MSG_ERROR => Message::Error {
                request_id: r.u64()?,
                code: r.u16()?,
                message: r.text()?,
            },
            other => return Err(malformed(format!("unknown message type 0x{other:02x}"))),
        };
        r.finish()?;
        Ok(msg)
    }
}

fn map_io(e: io::Error) -> Error {
    match e.kind() {
        io::ErrorKind::UnexpectedEof => malformed("stream ended inside a frame"),
        _ => Error::Transport(e.to_string()),
    }
}

/// Reads one frame payload. A clean EOF before the length prefix is reported
/// as a transport error (peer closed); EOF inside a frame is a protocol error.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Vec<u8>> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Err(Error::Transport("connection closed by peer".into())),
            Ok(0) => return Err(malformed("stream ended inside a length prefix")),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(map_io(e)),
        }
    }
    let len = u32::from_le_bytes(len);
    if len == 0 {
        return Err(malformed("empty frame"));
    }
    if len > MAX_FRAME_LEN {
        return Err(malformed(format!("frame of {len} bytes exceeds limit")));
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload).map_err(map_io)?;
    Ok(payload)
}

pub fn write_frame<W: Write>(w: &mut W, msg: &Message) -> Result<()> {
    let payload = msg.encode();
    let mut buf = Vec::with_capacity(payload.len() + 4);
    buf.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    buf.extend_from_slice(&payload);
    w.write_all(&buf).map_err(|e| Error::Transport(e.to_string()))?;
    w.flush().map_err(|e| Error::Transport(e.to_string()))
}

pub fn read_message<R: Read>(r: &mut R) -> Result<Message> {
    Message::decode(&read_frame(r)?)
}
