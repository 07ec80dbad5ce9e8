//! Corpus-level runs of the three methods and their evaluation.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{direct_inference, linear_interp};
use crate::denoise::{AnalyticDenoiser, Denoiser, LinearGaussianPrior};
use crate::error::{Error, Result};
use crate::latent::{KeyframePlan, LatentVideo};
use crate::metrics::{keyframe_metrics_with, manifold_residual, with_truth, MetricReport, SsimParams};
use crate::pipeline::{diffuse_slide, RunConfig, RunTrace};
use crate::rng::NoiseSeed;
use crate::synthetic::{build_prior, item_seed, sample_pair, CorpusSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Direct,
    Interp,
    DiffuseSlide,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Direct, Method::Interp, Method::DiffuseSlide];

    pub fn name(self) -> &'static str {
        match self {
            Method::Direct => "direct",
            Method::Interp => "interp",
            Method::DiffuseSlide => "diffuseslide",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method {s:?} (direct, interp, diffuseslide)")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct CorpusItem {
    pub index: usize,
    pub seed: NoiseSeed,
    pub truth: LatentVideo,
    pub low: LatentVideo,
}

/// A synthetic corpus together with the prior it was drawn from.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub spec: CorpusSpec,
    pub prior: Arc<LinearGaussianPrior>,
    pub items: Vec<CorpusItem>,
}

impl Corpus {
    pub fn generate(spec: &CorpusSpec) -> Result<Self> {
        spec.validate()?;
        let prior = Arc::new(build_prior(spec)?);
        let items = (0..spec.n_videos)
            .map(|index| {
                let (truth, low) = sample_pair(&prior, spec, index)?;
                Ok(CorpusItem {
                    index,
                    seed: item_seed(spec, index),
                    truth,
                    low,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            spec: spec.clone(),
            prior,
            items,
        })
    }

    pub fn plan(&self) -> Result<KeyframePlan> {
        self.spec.plan()
    }
}

/// Pipeline seed for a corpus item under a run-level seed.
pub fn run_seed(item: NoiseSeed, run: u64) -> NoiseSeed {
    item.child(run)
}

/// Output of one method on one item.
#[derive(Debug, Clone)]
pub struct MethodOutput {
    pub video: LatentVideo,
    pub trace: Option<RunTrace>,
    pub wall_ms: f64,
}

/// Runs `method` on `low`. `windowed` serves DiffuseSlide; the direct baseline
/// needs the prior because it samples all frames in one window.
pub fn run_method(
    method: Method,
    low: &LatentVideo,
    cfg: &RunConfig,
    windowed: Option<&dyn Denoiser>,
    prior: &Arc<LinearGaussianPrior>,
) -> Result<MethodOutput> {
    let t0 = Instant::now();
    let (video, trace) = match method {
        Method::Interp => (linear_interp(low, cfg.factor)?, None),
        Method::DiffuseSlide => {
            let d = windowed.ok_or_else(|| Error::invalid("diffuseslide needs a windowed denoiser"))?;
            let (z, t) = diffuse_slide(low, cfg, d)?;
            (z, Some(t))
        }
        Method::Direct => {
            let frames = KeyframePlan::new(cfg.factor, low.frames())?.total_frames();
            let full = AnalyticDenoiser::new(Arc::clone(prior), cfg.cond_precision, frames)?;
            let z = direct_inference(&full, &cfg.schedule()?, low, frames, NoiseSeed(cfg.seed))?;
            (z, None)
        }
    };
    Ok(MethodOutput {
        video,
        trace,
        wall_ms: t0.elapsed().as_secs_f64() * 1e3,
    })
}

/// Keyframe fidelity, ground-truth PSNR and manifold residual of one output.
pub fn evaluate(
    low: &LatentVideo,
    output: &LatentVideo,
    truth: Option<&LatentVideo>,
    prior: Option<&LinearGaussianPrior>,
    plan: &KeyframePlan,
    ssim: Option<SsimParams>,
) -> Result<MetricReport> {
    let d = low.dims();
    let params = ssim.unwrap_or_else(|| SsimParams::fitted(d.h, d.w));
    let mut report = keyframe_metrics_with(low, output, plan, &params)?;
    if let Some(t) = truth {
        report = with_truth(report, output, t)?;
    }
    if let Some(p) = prior {
        report.manifold_residual = Some(manifold_residual(output, p)?);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub method: Method,
    pub index: usize,
    pub seed: u64,
    pub report: MetricReport,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mean_manifold_residual: f64,
    pub mean_psnr_keyframes: f64,
    pub mean_ssim_keyframes: f64,
    pub mean_psnr_vs_truth: f64,
    pub total_wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Sorted by mean manifold residual, best first.
    pub ranking: Vec<MethodSummary>,
    pub items: Vec<ItemResult>,
}

impl Comparison {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.ranking.iter().find(|s| s.method == method)
    }

    pub fn residuals(&self, method: Method) -> Vec<f64> {
        self.items
            .iter()
            .filter(|r| r.method == method)
            .map(|r| r.report.manifold_residual.unwrap_or(f64::NAN))
            .collect()
    }

    /// Fixed-width text table of the ranking.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<4} {:<13} {:>18} {:>15} {:>15} {:>14} {:>11}\n",
            "rank", "method", "manifold_residual", "psnr_keyframes", "ssim_keyframes", "psnr_vs_truth", "wall_ms"
        );
        for (i, r) in self.ranking.iter().enumerate() {
            s += &format!(
                "{:<4} {:<13} {:>18.4e} {:>15.2} {:>15.4} {:>14.2} {:>11.1}\n",
                i + 1,
                r.method.name(),
                r.mean_manifold_residual,
                r.mean_psnr_keyframes,
                r.mean_ssim_keyframes,
                r.mean_psnr_vs_truth,
                r.total_wall_ms
            );
        }
        s
    }
}

/// Runs every method in `methods` on every corpus item and ranks them.
pub fn compare(corpus: &Corpus, cfg: &RunConfig, windowed: &dyn Denoiser, methods: &[Method]) -> Result<Comparison> {
    let plan = corpus.plan()?;
    if cfg.factor != corpus.spec.factor {
        return Err(Error::invalid(format!(
            "run factor {} differs from corpus factor {}",
            cfg.factor, corpus.spec.factor
        )));
    }
    let mut items = Vec::new();
    for item in &corpus.items {
        let run_cfg = RunConfig {
            seed: run_seed(item.seed, cfg.seed).0,
            ..cfg.clone()
        };
        for &method in methods {
            let out = run_method(method, &item.low, &run_cfg, Some(windowed), &corpus.prior)?;
            let report = evaluate(
                &item.low,
                &out.video,
                Some(&item.truth),
                Some(&corpus.prior),
                &plan,
                None,
            )?;
            log::info!(
                "item {:>3} {:<13} residual {:.3e} psnr_kf {:.2}",
                item.index,
                method.name(),
                report.manifold_residual.unwrap_or(f64::NAN),
                report.psnr_keyframes
            );
            items.push(ItemResult {
                method,
                index: item.index,
                seed: run_cfg.seed,
                report,
                wall_ms: out.wall_ms,
            });
        }
    }
    let mut ranking: Vec<MethodSummary> = methods
        .iter()
        .map(|&method| {
            let rs: Vec<&ItemResult> = items.iter().filter(|r| r.method == method).collect();
            let mean = |f: &dyn Fn(&ItemResult) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / rs.len() as f64;
            MethodSummary {
                method,
                mean_manifold_residual: mean(&|r| r.report.manifold_residual.unwrap_or(f64::NAN)),
                mean_psnr_keyframes: mean(&|r| r.report.psnr_keyframes),
                mean_ssim_keyframes: mean(&|r| r.report.ssim_keyframes),
                mean_psnr_vs_truth: mean(&|r| r.report.psnr_vs_truth.unwrap_or(f64::NAN)),
                total_wall_ms: rs.iter().map(|r| r.wall_ms).sum(),
            }
        })
        .collect();
    ranking.sort_by(|a, b| a.mean_manifold_residual.total_cmp(&b.mean_manifold_residual));
    Ok(Comparison { ranking, items })
}
