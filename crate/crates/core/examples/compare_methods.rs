//! Ranks linear interpolation, single-window sampling and the sliding-window
//! refinement on a small synthetic corpus.

use std::sync::Arc;

use diffuseslide::experiment::{compare, Corpus, Method};
use diffuseslide::synthetic::CorpusSpec;
use diffuseslide::{AnalyticDenoiser, Result, RunConfig};

fn main() -> Result<()> {
    let n_videos = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let corpus = Corpus::generate(&CorpusSpec {
        n_videos,
        ..CorpusSpec::default()
    })?;
    let cfg = RunConfig::default();
    let d = AnalyticDenoiser::new(Arc::clone(&corpus.prior), cfg.cond_precision, 14)?;
    let cmp = compare(&corpus, &cfg, &d, &Method::ALL)?;
    print!("{}", cmp.table());
    let wins = cmp
        .residuals(Method::DiffuseSlide)
        .iter()
        .zip(cmp.residuals(Method::Interp))
        .filter(|(a, b)| *a < b)
        .count();
    println!("diffuseslide beats interp on {wins}/{n_videos} videos");
    Ok(())
}
