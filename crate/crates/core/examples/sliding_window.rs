//! Plans the overlapping windows for a 56-frame video and runs one fused
//! denoising round.

use std::sync::Arc;

use diffuseslide::latent::interpolate;
use diffuseslide::synthetic::{build_prior, sample_pair, CorpusSpec};
use diffuseslide::window::{denoise_round, plan_windows};
use diffuseslide::{AnalyticDenoiser, Result, RunConfig};

fn main() -> Result<()> {
    let spec = CorpusSpec::default();
    let prior = Arc::new(build_prior(&spec)?);
    let (_, low) = sample_pair(&prior, &spec, 0)?;
    let plan = spec.plan()?;
    let layout = plan_windows(spec.total_frames(), &plan, &low, 14, 4)?;
    for w in layout.windows() {
        println!(
            "window [{:2}, {:2}) cond keyframe at offset {}{}",
            w.start,
            w.end(),
            w.condition.offset_in_window,
            if w.clamped { " (clamped tail)" } else { "" }
        );
    }
    println!("coverage per frame: {:?}", layout.coverage_counts());

    let cfg = RunConfig::default();
    let s = cfg.schedule()?;
    let (sf, st) = (s.level_at(cfg.tau)?, s.level_at(cfg.tau - 1)?);
    let d = AnalyticDenoiser::new(Arc::clone(&prior), cfg.cond_precision, 14)?;
    let z = interpolate(&low, spec.factor)?;
    let (next, ms) = denoise_round(&layout, &z, &d, sf, st)?;
    println!(
        "one round {sf:.3} -> {st:.3}: max change {:.4}, {} windows, {:.2} ms total",
        next.max_abs_diff(&z),
        ms.len(),
        ms.iter().sum::<f64>()
    );
    Ok(())
}
