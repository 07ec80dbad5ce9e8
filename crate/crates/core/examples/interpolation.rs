//! Builds a high frame-rate starting latent from keyframes by linear
//! interpolation, then noises it to the injection level.

use diffuseslide::latent::{inject_noise, interpolate};
use diffuseslide::rng::{Purpose, StreamLabel};
use diffuseslide::{Dims, KeyframePlan, LatentVideo, NoiseSeed, Result, RunConfig};

fn main() -> Result<()> {
    let low = LatentVideo::new(Dims::new(1, 3, 1, 2), vec![0.0, 1.0, 0.4, 0.6, 1.0, 0.0])?;
    let plan = KeyframePlan::new(4, low.frames())?;
    let high = interpolate(&low, plan.factor())?;
    println!(
        "{} keyframes -> {} frames, keyframes at {:?}",
        low.frames(),
        high.frames(),
        plan.keyframe_indices()
    );
    for t in 0..high.frames() {
        println!("frame {t:2}: {:?}", high.plane(0, t));
    }

    let cfg = RunConfig::default();
    let sigma = cfg.schedule()?.level_at(cfg.tau)?;
    let noisy = inject_noise(&high, sigma, NoiseSeed(7), StreamLabel::new(Purpose::Injection, 0, 0))?;
    println!(
        "noised to sigma {sigma:.4}: max change {:.4}",
        noisy.max_abs_diff(&high)
    );
    Ok(())
}
