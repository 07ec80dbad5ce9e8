//! End-to-end orchestration: interpolate, inject noise, then alternate
//! sliding-window denoising with noise re-injection down to the clean level.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::denoise::{sample_clean, ConditionSpec, Denoiser, DEFAULT_CAPABILITY, DEFAULT_COND_PRECISION};
use crate::error::{Error, Result};
use crate::latent::{inject_noise, interpolate, KeyframePlan, LatentVideo};
use crate::rng::{NoiseSeed, Purpose, StreamLabel};
use crate::schedule::{self, InjectionPoint, SigmaSchedule};
use crate::window::{denoise_round, plan_windows, WindowLayout};

/// Hyperparameters of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub steps: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rho: f64,
    pub tau: usize,
    pub delta: usize,
    pub m_iters: usize,
    pub factor: usize,
    /// Window width in frames; `None` uses the denoiser capability.
    pub window: Option<usize>,
    /// Window stride; `None` uses `factor`.
    pub stride: Option<usize>,
    pub seed: u64,
    pub cond_precision: f64,
    /// Opaque key/value pairs forwarded with every condition.
    pub metadata: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            steps: schedule::DEFAULT_STEPS,
            sigma_min: schedule::DEFAULT_SIGMA_MIN,
            sigma_max: schedule::DEFAULT_SIGMA_MAX,
            rho: schedule::DEFAULT_RHO,
            tau: 8,
            delta: 3,
            m_iters: 5,
            factor: 4,
            window: Some(DEFAULT_CAPABILITY),
            stride: None,
            seed: 0,
            cond_precision: DEFAULT_COND_PRECISION,
            metadata: BTreeMap::new(),
        }
    }
}

impl RunConfig {
    pub fn schedule(&self) -> Result<SigmaSchedule> {
        SigmaSchedule::build(self.steps, self.sigma_min, self.sigma_max, self.rho)
    }

    pub fn injection(&self) -> Result<InjectionPoint> {
        InjectionPoint::new(self.tau, self.delta, self.m_iters, self.steps)
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule()?;
        self.injection()?;
        if self.factor == 0 {
            return Err(Error::invalid("factor must be >= 1"));
        }
        Ok(())
    }

    pub fn stride_or_default(&self) -> usize {
        self.stride.unwrap_or(self.factor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub remaining: usize,
    pub sigma_from: f64,
    pub sigma_to: f64,
    pub reinjection_iterations: usize,
    pub denoise_rounds: usize,
    pub denoiser_calls: usize,
    /// Wall time per window summed over the step's rounds, in milliseconds.
    pub window_ms: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub steps: Vec<StepRecord>,
    pub total_denoise_rounds: usize,
    pub total_denoiser_calls: usize,
    pub windows: usize,
    pub wall_ms: f64,
    /// Set when the run stopped early; the records above are what completed.
    pub error: Option<String>,
}

impl RunTrace {
    fn push(&mut self, rec: StepRecord) {
        self.total_denoise_rounds += rec.denoise_rounds;
        self.total_denoiser_calls += rec.denoiser_calls;
        self.steps.push(rec);
    }
}

/// Observes the latent right after each re-injection (tests, diagnostics).
pub trait ReinjectionObserver {
    fn after_reinjection(&mut self, remaining: usize, iteration: usize, z: &LatentVideo);
}

impl ReinjectionObserver for () {
    fn after_reinjection(&mut self, _: usize, _: usize, _: &LatentVideo) {}
}

/// `m_iters` rounds of [denoise one level, re-inject back up], then one final
/// denoise. Returns the latent at the level below `remaining`.
#[allow(clippy::too_many_arguments)]
pub fn reinject_round(
    z: &LatentVideo,
    layout: &WindowLayout,
    d: &dyn Denoiser,
    schedule: &SigmaSchedule,
    remaining: usize,
    m_iters: usize,
    seed: NoiseSeed,
    observer: &mut dyn ReinjectionObserver,
) -> Result<(LatentVideo, StepRecord)> {
    if remaining == 0 {
        return Err(Error::invalid("reinject_round needs remaining >= 1"));
    }
    let sigma_from = schedule.level_at(remaining)?;
    let sigma_to = schedule.level_at(remaining - 1)?;
    let lift = schedule.reinjection_std(remaining)?;

    let mut rec = StepRecord {
        remaining,
        sigma_from,
        sigma_to,
        reinjection_iterations: 0,
        denoise_rounds: 0,
        denoiser_calls: 0,
        window_ms: vec![0.0; layout.len()],
    };
    let round = |z: &LatentVideo, rec: &mut StepRecord| -> Result<LatentVideo> {
        let (out, timings) = denoise_round(layout, z, d, sigma_from, sigma_to)?;
        rec.denoise_rounds += 1;
        rec.denoiser_calls += layout.len();
        for (acc, t) in rec.window_ms.iter_mut().zip(timings) {
            *acc += t;
        }
        Ok(out)
    };

    let mut current = z.clone();
    for m in 0..m_iters {
        let lower = round(&current, &mut rec)?;
        let label = StreamLabel::new(Purpose::Reinjection, remaining as u64, m as u64);
        current = inject_noise(&lower, lift, seed, label)?;
        rec.reinjection_iterations += 1;
        observer.after_reinjection(remaining, m, &current);
    }
    let out = round(&current, &mut rec)?;
    Ok((out, rec))
}

/// Result of [`diffuse_slide`]: the output latent, or the failure together
/// with whatever the trace recorded before it.
pub type RunOutcome = std::result::Result<(LatentVideo, RunTrace), (Error, RunTrace)>;

/// Expands `low` by `cfg.factor` and refines it with the given denoiser.
pub fn diffuse_slide(low: &LatentVideo, cfg: &RunConfig, d: &dyn Denoiser) -> Result<(LatentVideo, RunTrace)> {
    diffuse_slide_observed(low, cfg, d, &mut ()).map_err(|(e, _)| e)
}

pub fn diffuse_slide_observed(
    low: &LatentVideo,
    cfg: &RunConfig,
    d: &dyn Denoiser,
    observer: &mut dyn ReinjectionObserver,
) -> RunOutcome {
    let mut trace = RunTrace::default();
    match run_inner(low, cfg, d, observer, &mut trace) {
        Ok(z) => Ok((z, trace)),
        Err(e) => {
            trace.error = Some(e.to_string());
            Err((e, trace))
        }
    }
}

fn run_inner(
    low: &LatentVideo,
    cfg: &RunConfig,
    d: &dyn Denoiser,
    observer: &mut dyn ReinjectionObserver,
    trace: &mut RunTrace,
) -> Result<LatentVideo> {
    let t0 = Instant::now();
    cfg.validate()?;
    let schedule = cfg.schedule()?;
    let inj = cfg.injection()?;
    let seed = NoiseSeed(cfg.seed);

    let plan = KeyframePlan::new(cfg.factor, low.frames())?;
    let total = plan.total_frames();
    let width = cfg.window.unwrap_or(d.info().capability).min(total);
    let mut layout = plan_windows(total, &plan, low, width, cfg.stride_or_default())?;
    layout.set_metadata(&cfg.metadata);
    trace.windows = layout.len();

    let z0 = interpolate(low, cfg.factor)?;
    let mut z = inject_noise(
        &z0,
        schedule.level_at(inj.tau)?,
        seed,
        StreamLabel::new(Purpose::Injection, inj.tau as u64, 0),
    )?;

    for remaining in (1..=inj.tau).rev() {
        let m = if remaining > inj.delta { inj.m_iters } else { 0 };
        let (next, rec) = reinject_round(&z, &layout, d, &schedule, remaining, m, seed, observer)?;
        trace.push(rec);
        z = next;
    }
    trace.wall_ms = t0.elapsed().as_secs_f64() * 1e3;
    log::debug!(
        "run finished: {} rounds, {} denoiser calls, {:.1} ms",
        trace.total_denoise_rounds,
        trace.total_denoiser_calls,
        trace.wall_ms
    );
    Ok(z)
}

/// Samples `f` keyframes by full reverse diffusion, conditioned on `first_frame`
/// at offset 0. `d` must be backed by a keyframe-rate prior.
pub fn generate_keyframes(
    cfg: &RunConfig,
    d: &dyn Denoiser,
    first_frame: &LatentVideo,
    f: usize,
    seed: NoiseSeed,
) -> Result<LatentVideo> {
    let schedule = cfg.schedule()?;
    let cond = ConditionSpec::new(first_frame.clone(), 0, 0, 0)?;
    sample_clean(d, &schedule, f, 0, Some(&cond), seed)
}
