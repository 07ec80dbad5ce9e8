//! Training-free high frame-rate refinement of video latents.
//!
//! A short keyframe latent is expanded by linear interpolation, pushed back up
//! to an intermediate noise level, and denoised with keyframe-conditioned
//! sliding windows whose overlaps are averaged. While more than `delta` steps
//! remain, each step is repeated with noise re-injection to pull the
//! interpolated frames onto the model's data manifold.
//!
//! The denoiser is pluggable ([`denoise::Denoiser`]). [`denoise::AnalyticDenoiser`]
//! is the exact posterior-mean denoiser of a low-rank Gaussian video prior and
//! [`remote::RemoteDenoiser`] talks to an out-of-process model server.

pub mod baselines;
pub mod cli;
pub mod config;
pub mod denoise;
pub mod error;
pub mod experiment;
pub mod latent;
pub mod metrics;
pub mod pipeline;
pub mod remote;
pub mod rng;
pub mod schedule;
pub mod synthetic;
pub mod tensor_io;
pub mod window;

pub use denoise::{AnalyticDenoiser, ConditionSpec, Denoiser, LinearGaussianPrior};
pub use error::{Error, Result};
pub use latent::{Dims, KeyframePlan, LatentVideo};
pub use pipeline::{diffuse_slide, RunConfig, RunTrace};
pub use rng::NoiseSeed;
pub use schedule::SigmaSchedule;
