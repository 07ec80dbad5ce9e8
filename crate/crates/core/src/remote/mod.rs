//! Out-of-process denoisers over a length-prefixed TCP protocol.

pub mod client;
pub mod protocol;
pub mod server;

pub use client::{ClientOptions, RemoteDenoiser, DEFAULT_TIMEOUT};
pub use server::{serve, spawn_loopback, spawn_loopback_with, ServerHandle, ServerOptions};

use crate::denoise::{Denoiser, DenoiserInfo, DenoiserKind, StepRequest};
use crate::error::Result;
use crate::latent::LatentVideo;

/// Returns every window unchanged.
#[derive(Debug, Clone, Copy)]
pub struct EchoDenoiser {
    pub capability: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Denoiser for EchoDenoiser {
    fn info(&self) -> DenoiserInfo {
        DenoiserInfo {
            capability: self.capability,
            c: self.c,
            h: self.h,
            w: self.w,
            kind: DenoiserKind::Mock,
        }
    }

    fn step(&self, req: &StepRequest<'_>) -> Result<LatentVideo> {
        Ok(req.window.clone())
    }
}

/// Pulls every value toward 0.5: `0.5 + factor·(z − 0.5)`.
#[derive(Debug, Clone, Copy)]
pub struct ShrinkDenoiser {
    pub inner: EchoDenoiser,
    pub factor: f64,
}

impl Denoiser for ShrinkDenoiser {
    fn info(&self) -> DenoiserInfo {
        self.inner.info()
    }

    fn step(&self, req: &StepRequest<'_>) -> Result<LatentVideo> {
        let data = req
            .window
            .data()
            .iter()
            .map(|v| 0.5 + self.factor * (v - 0.5))
            .collect();
        LatentVideo::new(req.window.dims(), data)
    }
}
