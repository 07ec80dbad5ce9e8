//! Samples clean videos from a linear-Gaussian prior with the closed-form
//! denoiser and checks that they land on the prior's subspace.

use std::sync::Arc;

use diffuseslide::denoise::sample_clean;
use diffuseslide::synthetic::{build_prior, CorpusSpec};
use diffuseslide::{AnalyticDenoiser, NoiseSeed, Result, SigmaSchedule};

fn main() -> Result<()> {
    let spec = CorpusSpec::default();
    let prior = Arc::new(build_prior(&spec)?);
    println!(
        "prior: {:?}, rank {}, Gram condition {:.2e}",
        prior.dims(),
        prior.rank(),
        prior.gram_condition()
    );
    let frames = spec.total_frames();
    let d = AnalyticDenoiser::new(Arc::clone(&prior), 1e8, frames)?;
    let s = SigmaSchedule::default_svd();
    for i in 0..3 {
        let z = sample_clean(&d, &s, frames, 0, None, NoiseSeed(11).child(i))?;
        let u = prior.coefficients(&z)?;
        println!(
            "sample {i}: off-subspace rms {:.2e}, coefficients {:.3?}",
            prior.off_manifold_rms(&z)?,
            u.as_slice()
        );
    }
    Ok(())
}
