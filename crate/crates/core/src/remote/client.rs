use std::io::{Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use crate::denoise::{Denoiser, DenoiserInfo, DenoiserKind, StepRequest};
use crate::error::{Error, Result};
use crate::latent::{Dims, LatentVideo};

use super::protocol::{read_message, write_frame, Message, WireTensor, PROTO_VERSION};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Clone)]
pub struct ClientOptions {
    pub timeout: Duration,
    /// Maximum idle connections kept for reuse.
    pub pool: usize,
}

impl Default for ClientOptions {
    fn default() -> Self {
        Self {
            timeout: DEFAULT_TIMEOUT,
            pool: 4,
        }
    }
}

pub fn latent_to_wire(z: &LatentVideo) -> WireTensor {
    let d = z.dims();
    WireTensor {
        dims: [d.c, d.frames, d.h, d.w].iter().map(|&v| v as u32).collect(),
        data: z.data().iter().map(|&v| v as f32).collect(),
    }
}

pub fn wire_to_latent(t: &WireTensor) -> Result<LatentVideo> {
    let &[c, f, h, w] = t.dims.as_slice() else {
        return Err(Error::Protocol(format!("expected a 4-d tensor, got dims {:?}", t.dims)));
    };
    LatentVideo::new(
        Dims::new(c as usize, f as usize, h as usize, w as usize),
        t.data.iter().map(|&v| v as f64).collect(),
    )
    .map_err(|e| Error::Protocol(e.to_string()))
}

/// HELLO exchange over any byte stream; returns the advertised capability.
pub fn handshake<S: Read + Write>(stream: &mut S) -> Result<DenoiserInfo> {
    write_frame(stream, &Message::HelloReq { version: PROTO_VERSION })?;
    match read_message(stream)? {
        Message::HelloResp {
            version,
            max_window_frames,
            c,
            h,
            w,
        } => {
            if version != PROTO_VERSION {
                return Err(Error::Protocol(format!(
                    "server speaks protocol version {version}, client speaks {PROTO_VERSION}"
                )));
            }
            if max_window_frames == 0 || c == 0 || h == 0 || w == 0 {
                return Err(Error::Protocol("server advertised a zero capability".into()));
            }
            Ok(DenoiserInfo {
                capability: max_window_frames as usize,
                c: c as usize,
                h: h as usize,
                w: w as usize,
                kind: DenoiserKind::Remote,
            })
        }
        Message::Error { code, message, .. } => Err(Error::Remote { code, message }),
        other => Err(Error::Protocol(format!(
            "expected HELLO-resp, got type 0x{:02x}",
            other.msg_type()
        ))),
    }
}

/// One DENOISE request/response exchange over any byte stream.
pub fn denoise_exchange<S: Read + Write>(
    stream: &mut S,
    request_id: u64,
    req: &StepRequest<'_>,
) -> Result<LatentVideo> {
    let (cond, cond_offset) = match req.cond {
        Some(c) => (
            latent_to_wire(&c.keyframe),
            u16::try_from(c.offset_in_window).map_err(|_| Error::invalid("condition offset exceeds u16"))?,
        ),
        None => (WireTensor::empty(), 0),
    };
    let msg = Message::DenoiseReq {
        request_id,
        sigma_from: req.sigma_from,
        sigma_to: req.sigma_to,
        window_start: u32::try_from(req.window_start).map_err(|_| Error::invalid("window start exceeds u32"))?,
        cond_offset,
        cond,
        window: latent_to_wire(req.window),
    };
    write_frame(stream, &msg)?;
    read_denoise_response(stream, request_id, req.window.dims())
}

/// Reads frames until the DENOISE-resp for `request_id`, skipping metadata
/// frames for the same request.
pub fn read_denoise_response<S: Read>(stream: &mut S, request_id: u64, expect: Dims) -> Result<LatentVideo> {
    loop {
        match read_message(stream)? {
            Message::DenoiseMeta { request_id: id, json } if id == request_id => {
                log::trace!("request {id} metadata: {json}");
            }
            Message::DenoiseResp { request_id: id, result } => {
                if id != request_id {
                    return Err(Error::Protocol(format!(
                        "response for request {id}, expected {request_id}"
                    )));
                }
                return match result {
                    Ok(t) => {
                        let out = wire_to_latent(&t)?;
                        if out.dims() != expect {
                            return Err(Error::Protocol(format!(
                                "result dims {:?} differ from request {expect:?}",
                                out.dims()
                            )));
                        }
                        Ok(out)
                    }
                    Err((status, message)) => Err(Error::Remote {
                        code: status as u16,
                        message,
                    }),
                };
            }
            Message::Error {
                request_id: id,
                code,
                message,
            } if id == request_id || id == 0 => {
                return Err(Error::Remote { code, message });
            }
            other => {
                return Err(Error::Protocol(format!(
                    "unexpected message type 0x{:02x} while awaiting request {request_id}",
                    other.msg_type()
                )))
            }
        }
    }
}

struct Connection {
    stream: TcpStream,
}

/// A [`Denoiser`] served over TCP. Each request holds one pooled connection
/// for its whole round trip; concurrent callers get separate connections.
pub struct RemoteDenoiser {
    addr: String,
    info: DenoiserInfo,
    opts: ClientOptions,
    idle: Mutex<Vec<Connection>>,
    next_id: AtomicU64,
}

impl std::fmt::Debug for RemoteDenoiser {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteDenoiser")
            .field("addr", &self.addr)
            .field("info", &self.info)
            .finish()
    }
}

fn open(addr: &str, timeout: Duration) -> Result<(Connection, DenoiserInfo)> {
    let addrs: Vec<_> = addr
        .to_socket_addrs()
        .map_err(|e| Error::Transport(format!("cannot resolve {addr}: {e}")))?
        .collect();
    let mut last = None;
    for a in addrs {
        match TcpStream::connect_timeout(&a, timeout) {
            Ok(stream) => {
                let setup = |s: &TcpStream| -> std::io::Result<()> {
                    s.set_read_timeout(Some(timeout))?;
                    s.set_write_timeout(Some(timeout))?;
                    s.set_nodelay(true)
                };
                setup(&stream).map_err(|e| Error::Transport(e.to_string()))?;
                let mut conn = Connection { stream };
                let info = handshake(&mut conn.stream)?;
                return Ok((conn, info));
            }
            Err(e) => last = Some(e),
        }
    }
    Err(Error::Transport(match last {
        Some(e) => format!("cannot connect to {addr}: {e}"),
        None => format!("{addr} resolved to no addresses"),
    }))
}

impl RemoteDenoiser {
    pub fn connect(addr: &str) -> Result<Self> {
        Self::connect_with(addr, ClientOptions::default())
    }

    pub fn connect_with(addr: &str, opts: ClientOptions) -> Result<Self> {
        let (conn, info) = open(addr, opts.timeout)?;
        Ok(Self {
            addr: addr.to_string(),
            info,
            opts,
            idle: Mutex::new(vec![conn]),
            next_id: AtomicU64::new(1),
        })
    }

    pub fn address(&self) -> &str {
        &self.addr
    }

    fn checkout(&self) -> Result<Connection> {
        if let Some(c) = self.idle.lock().expect("pool lock").pop() {
            return Ok(c);
        }
        let (conn, info) = open(&self.addr, self.opts.timeout)?;
        if info != self.info {
            return Err(Error::Protocol(format!(
                "server capability changed between connections: {info:?} vs {:?}",
                self.info
            )));
        }
        Ok(conn)
    }

    fn checkin(&self, conn: Connection) {
        let mut idle = self.idle.lock().expect("pool lock");
        if idle.len() < self.opts.pool.max(1) {
            idle.push(conn);
        }
    }
}

impl Denoiser for RemoteDenoiser {
    fn info(&self) -> DenoiserInfo {
        self.info
    }

    fn step(&self, req: &StepRequest<'_>) -> Result<LatentVideo> {
        let mut conn = self.checkout()?;
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let out = denoise_exchange(&mut conn.stream, id, req);
        match &out {
            // A server-reported failure leaves the stream in sync.
            Ok(_) | Err(Error::Remote { .. }) => self.checkin(conn),
            Err(_) => {
                let _ = conn.stream.shutdown(std::net::Shutdown::Both);
            }
        }
        out
    }
}
