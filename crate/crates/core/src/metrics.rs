//! PSNR, SSIM and the off-manifold residual.

use serde::{Deserialize, Serialize};

use crate::denoise::LinearGaussianPrior;
use crate::error::{Error, Result};
use crate::latent::{KeyframePlan, LatentVideo};

pub const PSNR_CAP_DB: f64 = 99.0;

/// `10·log10(1 / MSE)` for signals in `[0, 1]`, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::invalid(format!(
            "psnr shape mismatch: {} vs {} elements",
            a.len(),
            b.len()
        )));
    }
    let mse = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
    Ok(psnr_from_mse(mse))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
}

/// A single-channel image borrowed from a flat row-major buffer.
#[derive(Debug, Clone, Copy)]
pub struct Plane<'a> {
    pub data: &'a [f64],
    pub h: usize,
    pub w: usize,
}

impl<'a> Plane<'a> {
    pub fn new(data: &'a [f64], h: usize, w: usize) -> Result<Self> {
        if data.len() != h * w {
            return Err(Error::invalid(format!(
                "plane buffer has {} values, expected {h}x{w}",
                data.len()
            )));
        }
        Ok(Self { data, h, w })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    /// Side of the square Gaussian window (odd).
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimParams {
    /// Default parameters with the window shrunk to fit `h × w` images.
    pub fn fitted(h: usize, w: usize) -> Self {
        let d = Self::default();
        let side = h.min(w).min(d.window);
        let window = if side.is_multiple_of(2) { side - 1 } else { side };
        Self {
            window: window.max(1),
            ..d
        }
    }

    fn kernel(&self) -> Vec<f64> {
        let r = (self.window / 2) as f64;
        let g: Vec<f64> = (0..self.window)
            .map(|i| {
                let x = i as f64 - r;
                (-(x * x) / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let s: f64 = g.iter().sum();
        g.into_iter().map(|v| v / s).collect()
    }
}

/// Mean SSIM over all valid (unpadded) window positions.
pub fn ssim(a: Plane<'_>, b: Plane<'_>) -> Result<f64> {
    ssim_with(a, b, &SsimParams::default())
}

pub fn ssim_with(a: Plane<'_>, b: Plane<'_>, p: &SsimParams) -> Result<f64> {
    if (a.h, a.w) != (b.h, b.w) {
        return Err(Error::invalid(format!(
            "ssim shape mismatch: {}x{} vs {}x{}",
            a.h, a.w, b.h, b.w
        )));
    }
    if p.window == 0 || p.window.is_multiple_of(2) {
        return Err(Error::invalid("ssim window must be odd and positive"));
    }
    if a.h < p.window || a.w < p.window {
        return Err(Error::invalid(format!(
            "{}x{} image smaller than {}x{} ssim window",
            a.h, a.w, p.window, p.window
        )));
    }
    let g = p.kernel();
    let c1 = (p.k1 * p.dynamic_range).powi(2);
    let c2 = (p.k2 * p.dynamic_range).powi(2);
    let n = p.window;
    let mut total = 0.0;
    let mut count = 0usize;
    for y0 in 0..=a.h - n {
        for x0 in 0..=a.w - n {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for dy in 0..n {
                for dx in 0..n {
                    let wgt = g[dy] * g[dx];
                    let i = (y0 + dy) * a.w + x0 + dx;
                    let (va, vb) = (a.data[i], b.data[i]);
                    ma += wgt * va;
                    mb += wgt * vb;
                    saa += wgt * va * va;
                    sbb += wgt * vb * vb;
                    sab += wgt * va * vb;
                }
            }
            let va = saa - ma * ma;
            let vb = sbb - mb * mb;
            let cov = sab - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Clamps latent values to `[0, 1]` (the toy corpus renders latents directly).
pub fn render(z: &LatentVideo) -> Vec<f64> {
    z.data().iter().map(|v| v.clamp(0.0, 1.0)).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr_keyframes: f64,
    pub ssim_keyframes: f64,
    pub psnr_vs_truth: Option<f64>,
    pub manifold_residual: Option<f64>,
    pub per_frame_psnr_keyframes: Vec<f64>,
    pub per_frame_ssim_keyframes: Vec<f64>,
    pub per_frame_psnr_truth: Vec<f64>,
    pub ssim_params: Option<SsimParams>,
}

fn frame_ssim(a: &LatentVideo, ta: usize, b: &LatentVideo, tb: usize, p: &SsimParams) -> Result<f64> {
    let d = a.dims();
    let mut acc = 0.0;
    for ch in 0..d.c {
        let pa: Vec<f64> = a.plane(ch, ta).iter().map(|v| v.clamp(0.0, 1.0)).collect();
        let pb: Vec<f64> = b.plane(ch, tb).iter().map(|v| v.clamp(0.0, 1.0)).collect();
        acc += ssim_with(Plane::new(&pa, d.h, d.w)?, Plane::new(&pb, d.h, d.w)?, p)?;
    }
    Ok(acc / d.c as f64)
}

/// PSNR/SSIM between each keyframe and the high frame-rate frame at its index.
pub fn keyframe_metrics(low: &LatentVideo, high: &LatentVideo, plan: &KeyframePlan) -> Result<MetricReport> {
    let d = low.dims();
    keyframe_metrics_with(low, high, plan, &SsimParams::fitted(d.h, d.w))
}

pub fn keyframe_metrics_with(
    low: &LatentVideo,
    high: &LatentVideo,
    plan: &KeyframePlan,
    params: &SsimParams,
) -> Result<MetricReport> {
    if low.frames() != plan.n_keyframes() || high.frames() != plan.total_frames() {
        return Err(Error::invalid(format!(
            "expected {} keyframes and {} frames, got {} and {}",
            plan.n_keyframes(),
            plan.total_frames(),
            low.frames(),
            high.frames()
        )));
    }
    let (ld, hd) = (low.dims(), high.dims());
    if (ld.c, ld.h, ld.w) != (hd.c, hd.h, hd.w) {
        return Err(Error::invalid("keyframe and output frame shapes differ"));
    }
    let params = *params;
    let mut report = MetricReport {
        ssim_params: Some(params),
        ..MetricReport::default()
    };
    for (i, t) in plan.keyframe_indices().into_iter().enumerate() {
        let a = render(&low.frame(i)?);
        let b = render(&high.frame(t)?);
        report.per_frame_psnr_keyframes.push(psnr(&a, &b)?);
        report
            .per_frame_ssim_keyframes
            .push(frame_ssim(low, i, high, t, &params)?);
    }
    report.psnr_keyframes = mean(&report.per_frame_psnr_keyframes);
    report.ssim_keyframes = mean(&report.per_frame_ssim_keyframes);
    Ok(report)
}

/// Adds ground-truth PSNR (per frame and averaged) to a report.
pub fn with_truth(mut report: MetricReport, high: &LatentVideo, truth: &LatentVideo) -> Result<MetricReport> {
    if high.dims() != truth.dims() {
        return Err(Error::invalid("output and ground truth shapes differ"));
    }
    report.per_frame_psnr_truth = (0..high.frames())
        .map(|t| psnr(&render(&high.frame(t)?), &render(&truth.frame(t)?)))
        .collect::<Result<_>>()?;
    report.psnr_vs_truth = Some(mean(&report.per_frame_psnr_truth));
    Ok(report)
}

/// RMS of the component of `z` orthogonal to the prior's data manifold.
pub fn manifold_residual(z: &LatentVideo, prior: &LinearGaussianPrior) -> Result<f64> {
    prior.off_manifold_rms(z)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
