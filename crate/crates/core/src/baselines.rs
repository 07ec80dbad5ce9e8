//! Reference methods the pipeline is compared against.

use crate::denoise::{sample_clean, ConditionSpec, Denoiser};
use crate::error::Result;
use crate::latent::{interpolate, LatentVideo};
use crate::rng::NoiseSeed;
use crate::schedule::SigmaSchedule;

/// Plain latent interpolation, no refinement.
pub fn linear_interp(low: &LatentVideo, factor: usize) -> Result<LatentVideo> {
    interpolate(low, factor)
}

/// Samples all `frames` frames in one window from pure noise, conditioned only
/// on the first keyframe. `d` must accept a window of the full length.
pub fn direct_inference(
    d: &dyn Denoiser,
    schedule: &SigmaSchedule,
    low: &LatentVideo,
    frames: usize,
    seed: NoiseSeed,
) -> Result<LatentVideo> {
    let cond = ConditionSpec::new(low.frame(0)?, 0, 0, 0)?;
    sample_clean(d, schedule, frames, 0, Some(&cond), seed)
}
