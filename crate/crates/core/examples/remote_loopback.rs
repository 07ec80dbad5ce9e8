//! Serves the analytic denoiser over TCP on localhost and runs the pipeline
//! through it, then compares against the in-process result.

use std::sync::Arc;

use diffuseslide::remote::{spawn_loopback, RemoteDenoiser};
use diffuseslide::synthetic::{build_prior, sample_pair, CorpusSpec};
use diffuseslide::{diffuse_slide, AnalyticDenoiser, Denoiser, Result, RunConfig};

fn main() -> Result<()> {
    let spec = CorpusSpec::default();
    let prior = Arc::new(build_prior(&spec)?);
    let (_, low) = sample_pair(&prior, &spec, 0)?;
    let cfg = RunConfig::default();
    let local = AnalyticDenoiser::new(Arc::clone(&prior), cfg.cond_precision, 14)?;

    let server = spawn_loopback(Arc::new(local.clone()))?;
    let remote = RemoteDenoiser::connect(&server.address())?;
    println!("connected to {}: {:?}", server.address(), remote.info());

    let (a, _) = diffuse_slide(&low, &cfg, &local)?;
    let (b, trace) = diffuse_slide(&low, &cfg, &remote)?;
    println!(
        "{} remote calls in {:.1} ms, max difference to in-process {:.2e}",
        trace.total_denoiser_calls,
        trace.wall_ms,
        a.max_abs_diff(&b)
    );
    server.shutdown();
    Ok(())
}
