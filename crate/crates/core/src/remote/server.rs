use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use crate::denoise::{euler_step, ConditionSpec, Denoiser, StepRequest};
use crate::error::{Error, Result};

use super::client::{latent_to_wire, wire_to_latent};
use super::protocol::{codes, read_message, write_frame, Message, PROTO_VERSION};

#[derive(Debug, Clone)]
pub struct ServerOptions {
    /// Version reported in HELLO-resp.
    pub version: u16,
}

impl Default for ServerOptions {
    fn default() -> Self {
        Self { version: PROTO_VERSION }
    }
}

/// A running server; dropping the handle stops accepting new connections.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn address(&self) -> String {
        self.addr.to_string()
    }

    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    fn stop_accepting(&mut self) {
        if self.accept.is_none() {
            return;
        }
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_accepting();
    }
}

/// Serves `backend` on `listener`, one thread per connection.
pub fn serve(listener: TcpListener, backend: Arc<dyn Denoiser>, opts: ServerOptions) -> Result<ServerHandle> {
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let stop_flag = Arc::clone(&stop);
    let accept = std::thread::Builder::new()
        .name("denoise-accept".into())
        .spawn(move || {
            for conn in listener.incoming() {
                if stop_flag.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = conn else { continue };
                let backend = Arc::clone(&backend);
                let opts = opts.clone();
                let _ = std::thread::Builder::new().name("denoise-conn".into()).spawn(move || {
                    let _ = stream.set_nodelay(true);
                    if let Err(e) = handle_connection(stream, backend.as_ref(), &opts) {
                        log::debug!("connection ended: {e}");
                    }
                });
            }
        })?;
    Ok(ServerHandle {
        addr,
        stop,
        accept: Some(accept),
    })
}

/// Binds an ephemeral loopback port and serves `backend` on it.
pub fn spawn_loopback(backend: Arc<dyn Denoiser>) -> Result<ServerHandle> {
    spawn_loopback_with(backend, ServerOptions::default())
}

pub fn spawn_loopback_with(backend: Arc<dyn Denoiser>, opts: ServerOptions) -> Result<ServerHandle> {
    serve(TcpListener::bind("127.0.0.1:0")?, backend, opts)
}

/// Answers requests on one stream until the peer closes it or sends garbage.
pub fn handle_connection<S: Read + Write>(mut stream: S, backend: &dyn Denoiser, opts: &ServerOptions) -> Result<()> {
    loop {
        let msg = match read_message(&mut stream) {
            Ok(m) => m,
            Err(Error::Transport(_)) => return Ok(()),
            Err(e) => {
                let _ = write_frame(
                    &mut stream,
                    &Message::Error {
                        request_id: 0,
                        code: codes::MALFORMED,
                        message: e.to_string(),
                    },
                );
                return Err(e);
            }
        };
        let reply = match msg {
            Message::HelloReq { .. } => {
                let info = backend.info();
                Message::HelloResp {
                    version: opts.version,
                    max_window_frames: info.capability.min(u16::MAX as usize) as u16,
                    c: info.c as u16,
                    h: info.h as u16,
                    w: info.w as u16,
                }
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
                let result = (|| -> Result<_> {
                    let window = wire_to_latent(&window)?;
                    let cond = if cond.is_empty() {
                        None
                    } else {
                        Some(ConditionSpec::new(
                            wire_to_latent(&cond)?,
                            0,
                            window_start as usize,
                            cond_offset as usize,
                        )?)
                    };
                    let out = euler_step(
                        backend,
                        &StepRequest {
                            window: &window,
                            window_start: window_start as usize,
                            sigma_from,
                            sigma_to,
                            cond: cond.as_ref(),
                        },
                    )?;
                    Ok(latent_to_wire(&out))
                })();
                Message::DenoiseResp {
                    request_id,
                    result: result.map_err(|e| (codes::BACKEND as u8, e.to_string())),
                }
            }
            other => Message::Error {
                request_id: 0,
                code: codes::UNEXPECTED,
                message: format!("unexpected message type 0x{:02x}", other.msg_type()),
            },
        };
        write_frame(&mut stream, &reply)?;
    }
}
