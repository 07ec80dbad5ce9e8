//! The denoiser abstraction and the exact linear-Gaussian denoiser.
//!
//! A [`Denoiser`] advances one window of frames by one solver step between two
//! noise levels. [`AnalyticDenoiser`] does this with the closed-form posterior
//! mean of a low-rank Gaussian video prior, which makes every downstream
//! algorithm testable against exact answers.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::{Dims, LatentVideo};
use crate::rng::{NoiseSeed, Purpose, StreamLabel};
use crate::schedule::SigmaSchedule;

pub const DEFAULT_COND_PRECISION: f64 = 1e8;
pub const DEFAULT_CAPABILITY: usize = 14;

/// Keyframe condition for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSpec {
    /// `c × 1 × h × w` clean keyframe latent.
    pub keyframe: LatentVideo,
    pub keyframe_ordinal: usize,
    pub offset_in_window: usize,
    pub window_start: usize,
    /// Opaque pass-through (e.g. motion bucket) for model-backed denoisers.
    pub metadata: BTreeMap<String, String>,
}

impl ConditionSpec {
    pub fn new(
        keyframe: LatentVideo,
        keyframe_ordinal: usize,
        window_start: usize,
        offset_in_window: usize,
    ) -> Result<Self> {
        if keyframe.frames() != 1 {
            return Err(Error::invalid(format!(
                "condition keyframe must have one frame, got {}",
                keyframe.frames()
            )));
        }
        Ok(Self {
            keyframe,
            keyframe_ordinal,
            offset_in_window,
            window_start,
            metadata: BTreeMap::new(),
        })
    }

    pub fn validate_for(&self, window: Dims) -> Result<()> {
        let k = self.keyframe.dims();
        if (k.c, k.h, k.w) != (window.c, window.h, window.w) {
            return Err(Error::invalid(format!(
                "condition dims {k:?} do not match window {window:?}"
            )));
        }
        if self.offset_in_window >= window.frames {
            return Err(Error::invalid(format!(
                "condition offset {} outside window of {} frames",
                self.offset_in_window, window.frames
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenoiserKind {
    Analytic,
    Remote,
    /// Test backends with fixed arithmetic.
    Mock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserInfo {
    pub capability: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub kind: DenoiserKind,
}

/// One solver step on one window.
#[derive(Debug, Clone, Copy)]
pub struct StepRequest<'a> {
    pub window: &'a LatentVideo,
    /// Absolute index of the window's first frame in the full video.
    pub window_start: usize,
    pub sigma_from: f64,
    pub sigma_to: f64,
    pub cond: Option<&'a ConditionSpec>,
}

pub trait Denoiser: Send + Sync {
    fn info(&self) -> DenoiserInfo;

    /// Returns the window advanced from `sigma_from` to `sigma_to`.
    fn step(&self, req: &StepRequest<'_>) -> Result<LatentVideo>;
}

impl<D: Denoiser + ?Sized> Denoiser for Arc<D> {
    fn info(&self) -> DenoiserInfo {
        (**self).info()
    }

    fn step(&self, req: &StepRequest<'_>) -> Result<LatentVideo> {
        (**self).step(req)
    }
}

/// First-order VE probability-flow update given the denoised estimate.
pub fn euler_update(z: &LatentVideo, denoised: &LatentVideo, sigma_from: f64, sigma_to: f64) -> Result<LatentVideo> {
    if z.dims() != denoised.dims() {
        return Err(Error::invalid("denoised estimate has wrong dims"));
    }
    if sigma_to == 0.0 {
        return Ok(denoised.clone());
    }
    let h = (sigma_to - sigma_from) / sigma_from;
    let data = z
        .data()
        .iter()
        .zip(denoised.data())
        .map(|(x, d)| x + h * (x - d))
        .collect();
    LatentVideo::new(z.dims(), data)
}

/// Validates a step request against the denoiser and runs it.
pub fn euler_step(d: &dyn Denoiser, req: &StepRequest<'_>) -> Result<LatentVideo> {
    let info = d.info();
    let dims = req.window.dims();
    if !(req.sigma_from > req.sigma_to && req.sigma_to >= 0.0) {
        return Err(Error::invalid(format!(
            "need sigma_from > sigma_to >= 0, got {} -> {}",
            req.sigma_from, req.sigma_to
        )));
    }
    if dims.frames > info.capability {
        return Err(Error::WindowTooLong {
            frames: dims.frames,
            capability: info.capability,
        });
    }
    if (dims.c, dims.h, dims.w) != (info.c, info.h, info.w) {
        return Err(Error::invalid(format!(
            "window dims {dims:?} do not match denoiser ({}, {}, {})",
            info.c, info.h, info.w
        )));
    }
    if let Some(cond) = req.cond {
        cond.validate_for(dims)?;
    }
    let out = d.step(req)?;
    if out.dims() != dims {
        return Err(Error::Protocol(format!(
            "denoiser returned dims {:?} for window {dims:?}",
            out.dims()
        )));
    }
    Ok(out)
}

/// Full reverse diffusion from `sigma_max` noise down to a clean sample.
pub fn sample_clean(
    d: &dyn Denoiser,
    schedule: &SigmaSchedule,
    frames: usize,
    window_start: usize,
    cond: Option<&ConditionSpec>,
    seed: NoiseSeed,
) -> Result<LatentVideo> {
    let info = d.info();
    if frames > info.capability {
        return Err(Error::WindowTooLong {
            frames,
            capability: info.capability,
        });
    }
    let dims = Dims::new(info.c, frames, info.h, info.w);
    let eps = seed.normals(StreamLabel::new(Purpose::InitialNoise, 0, 0), dims.len());
    let mut z = LatentVideo::zeros(dims).add_scaled(&eps, schedule.sigma_max())?;
    for pair in schedule.sigmas().windows(2) {
        z = euler_step(
            d,
            &StepRequest {
                window: &z,
                window_start,
                sigma_from: pair[0],
                sigma_to: pair[1],
                cond,
            },
        )?;
    }
    Ok(z)
}

/// `z = mean + basis · u`, `u ~ N(0, I_k)`, over full videos of fixed dims.
#[derive(Debug, Clone)]
pub struct LinearGaussianPrior {
    dims: Dims,
    basis: DMatrix<f64>,
    mean: DVector<f64>,
    gram_inv: DMatrix<f64>,
    gram_condition: f64,
}

/// Largest Gram condition number accepted as "linearly independent".
pub const MAX_GRAM_CONDITION: f64 = 1e12;

impl LinearGaussianPrior {
    pub fn new(dims: Dims, basis: DMatrix<f64>, mean: Vec<f64>) -> Result<Self> {
        let d = dims.len();
        if basis.nrows() != d || mean.len() != d {
            return Err(Error::Construction(format!(
                "basis is {}x{}, mean has {} rows, video has {d} elements",
                basis.nrows(),
                basis.ncols(),
                mean.len()
            )));
        }
        let k = basis.ncols();
        if k == 0 || k > d {
            return Err(Error::Construction(format!("rank {k} invalid for d={d}")));
        }
        let gram = basis.transpose() * &basis;
        let eig = gram.clone().symmetric_eigen();
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        let cond = max / min;
        if !(min > 0.0 && cond.is_finite() && cond < MAX_GRAM_CONDITION) {
            return Err(Error::Construction(format!(
                "basis is rank deficient (Gram eigenvalues in [{min:e}, {max:e}])"
            )));
        }
        let gram_inv = gram
            .cholesky()
            .ok_or_else(|| Error::Construction("Gram matrix not positive definite".into()))?
            .inverse();
        Ok(Self {
            dims,
            basis,
            mean: DVector::from_vec(mean),
            gram_inv,
            gram_condition: cond,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn gram_condition(&self) -> f64 {
        self.gram_condition
    }

    /// `mean + basis · u`.
    pub fn video(&self, u: &[f64]) -> Result<LatentVideo> {
        if u.len() != self.rank() {
            return Err(Error::invalid(format!(
                "coefficient vector has {} entries, prior rank is {}",
                u.len(),
                self.rank()
            )));
        }
        let z = &self.mean + &self.basis * DVector::from_column_slice(u);
        LatentVideo::new(self.dims, z.as_slice().to_vec())
    }

    /// Least-squares coefficients of `z − mean` in the basis.
    pub fn coefficients(&self, z: &LatentVideo) -> Result<DVector<f64>> {
        self.check_full(z)?;
        let r = DVector::from_column_slice(z.data()) - &self.mean;
        Ok(&self.gram_inv * (self.basis.transpose() * r))
    }

    /// RMS of the component of `z − mean` orthogonal to the basis span.
    pub fn off_manifold_rms(&self, z: &LatentVideo) -> Result<f64> {
        self.check_full(z)?;
        let r = DVector::from_column_slice(z.data()) - &self.mean;
        let proj = &self.basis * (&self.gram_inv * (self.basis.transpose() * &r));
        Ok((r - proj).norm() / (self.dims.len() as f64).sqrt())
    }

    fn check_full(&self, z: &LatentVideo) -> Result<()> {
        if z.dims() != self.dims {
            return Err(Error::invalid(format!(
                "video dims {:?} do not match prior {:?}",
                z.dims(),
                self.dims
            )));
        }
        Ok(())
    }

    /// Row indices of the given absolute frames, channel-major like
    /// [`LatentVideo::select_frames`].
    fn frame_rows(&self, frames: impl Iterator<Item = usize> + Clone) -> Vec<usize> {
        let plane = self.dims.frame_len();
        let mut rows = Vec::new();
        for ch in 0..self.dims.c {
            for t in frames.clone() {
                let start = self.dims.index(ch, t, 0, 0);
                rows.extend(start..start + plane);
            }
        }
        rows
    }

    /// The prior of the sub-video made of the listed frames.
    pub fn select_frames(&self, frames: &[usize]) -> Result<LinearGaussianPrior> {
        if let Some(&bad) = frames.iter().find(|&&t| t >= self.dims.frames) {
            return Err(Error::invalid(format!("frame {bad} outside prior")));
        }
        let rows = self.frame_rows(frames.iter().copied());
        let basis = self.basis.select_rows(rows.iter());
        let mean = rows.iter().map(|&r| self.mean[r]).collect();
        LinearGaussianPrior::new(self.dims.with_frames(frames.len()), basis, mean)
    }

    /// Posterior mean of a window given its noisy observation at level `sigma`
    /// and, optionally, a soft observation of its condition frame.
    ///
    /// Solved in coefficient space: `Λ u = rhs` with
    /// `Λ = I + AwᵀAw/σ² + p·AsᵀAs`, `rhs = Awᵀ(z − bw)/σ² + p·Asᵀ(y − bs)`,
    /// then `bw + Aw u`.
    pub fn posterior_mean(
        &self,
        window: &LatentVideo,
        window_start: usize,
        sigma: f64,
        cond: Option<&ConditionSpec>,
        cond_precision: f64,
    ) -> Result<LatentVideo> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
        }
        if !(cond_precision >= 0.0 && cond_precision.is_finite()) {
            return Err(Error::invalid("cond_precision must be finite and >= 0"));
        }
        let wd = window.dims();
        if (wd.c, wd.h, wd.w) != (self.dims.c, self.dims.h, self.dims.w) {
            return Err(Error::invalid(format!(
                "window dims {wd:?} incompatible with prior {:?}",
                self.dims
            )));
        }
        if window_start + wd.frames > self.dims.frames {
            return Err(Error::invalid(format!(
                "window [{window_start}, {}) outside prior of {} frames",
                window_start + wd.frames,
                self.dims.frames
            )));
        }

        let rows = self.frame_rows(window_start..window_start + wd.frames);
        let aw = self.basis.select_rows(rows.iter());
        let bw = DVector::from_iterator(rows.len(), rows.iter().map(|&r| self.mean[r]));
        let zw = DVector::from_column_slice(window.data());

        let k = self.rank();
        let inv_var = 1.0 / (sigma * sigma);
        let mut lambda = DMatrix::<f64>::identity(k, k) + (aw.transpose() * &aw) * inv_var;
        let mut rhs = aw.transpose() * (zw - &bw) * inv_var;

        if let (Some(cond), true) = (cond, cond_precision > 0.0) {
            cond.validate_for(wd)?;
            let t = window_start + cond.offset_in_window;
            let srows = self.frame_rows(t..t + 1);
            let as_ = self.basis.select_rows(srows.iter());
            let bs = DVector::from_iterator(srows.len(), srows.iter().map(|&r| self.mean[r]));
            let y = DVector::from_column_slice(cond.keyframe.data());
            lambda += (as_.transpose() * &as_) * cond_precision;
            rhs += as_.transpose() * (y - bs) * cond_precision;
        }

        let u = lambda
            .cholesky()
            .ok_or_else(|| Error::Numerical("posterior precision is not positive definite".into()))?
            .solve(&rhs);
        let out = bw + aw * u;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite posterior mean".into()));
        }
        LatentVideo::new(wd, out.as_slice().to_vec())
    }
}

/// Exact denoiser for a [`LinearGaussianPrior`].
#[derive(Debug, Clone)]
pub struct AnalyticDenoiser {
    prior: Arc<LinearGaussianPrior>,
    cond_precision: f64,
    capability: usize,
}

impl AnalyticDenoiser {
    pub fn new(prior: Arc<LinearGaussianPrior>, cond_precision: f64, capability: usize) -> Result<Self> {
        if capability == 0 {
            return Err(Error::invalid("capability must be >= 1"));
        }
        if !(cond_precision >= 0.0 && cond_precision.is_finite()) {
            return Err(Error::invalid("cond_precision must be finite and >= 0"));
        }
        Ok(Self {
            prior,
            cond_precision,
            capability,
        })
    }

    pub fn prior(&self) -> &LinearGaussianPrior {
        &self.prior
    }

    pub fn cond_precision(&self) -> f64 {
        self.cond_precision
    }

    /// `D(z; σ)`.
    pub fn denoise(
        &self,
        window: &LatentVideo,
        window_start: usize,
        sigma: f64,
        cond: Option<&ConditionSpec>,
    ) -> Result<LatentVideo> {
        self.prior
            .posterior_mean(window, window_start, sigma, cond, self.cond_precision)
    }
}

impl Denoiser for AnalyticDenoiser {
    fn info(&self) -> DenoiserInfo {
        let d = self.prior.dims();
        DenoiserInfo {
            capability: self.capability,
            c: d.c,
            h: d.h,
            w: d.w,
            kind: DenoiserKind::Analytic,
        }
    }

    fn step(&self, req: &StepRequest<'_>) -> Result<LatentVideo> {
        let denoised = self.denoise(req.window, req.window_start, req.sigma_from, req.cond)?;
        euler_update(req.window, &denoised, req.sigma_from, req.sigma_to)
    }
}
