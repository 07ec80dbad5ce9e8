//! Variance-exploding noise-level schedules.
//!
//! Levels are power-spaced between `sigma_max` and `sigma_min` with shape
//! exponent `rho`, and a terminal zero is appended so the last solver step
//! lands on the clean latent. Positions in the schedule are usually addressed
//! by the number of denoising steps still *remaining*: `remaining = n_steps`
//! is pure noise, `remaining = 0` is clean.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_STEPS: usize = 25;
pub const DEFAULT_SIGMA_MIN: f64 = 0.002;
pub const DEFAULT_SIGMA_MAX: f64 = 700.0;
pub const DEFAULT_RHO: f64 = 7.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaSchedule {
    sigmas: Vec<f64>,
    sigma_min: f64,
    sigma_max: f64,
    rho: f64,
}

impl SigmaSchedule {
    pub fn build(n_steps: usize, sigma_min: f64, sigma_max: f64, rho: f64) -> Result<Self> {
        if n_steps < 2 {
            return Err(Error::invalid(format!("n_steps must be >= 2, got {n_steps}")));
        }
        if !(sigma_min.is_finite() && sigma_max.is_finite()) || sigma_min <= 0.0 {
            return Err(Error::invalid(format!(
                "sigma bounds must be finite and positive, got [{sigma_min}, {sigma_max}]"
            )));
        }
        if sigma_min >= sigma_max {
            return Err(Error::invalid(format!(
                "sigma_min {sigma_min} must be below sigma_max {sigma_max}"
            )));
        }
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::invalid(format!("rho must be positive, got {rho}")));
        }

        let hi = sigma_max.powf(1.0 / rho);
        let lo = sigma_min.powf(1.0 / rho);
        let last = (n_steps - 1) as f64;
        let mut sigmas: Vec<f64> = (0..n_steps)
            .map(|i| (hi + (i as f64 / last) * (lo - hi)).powf(rho))
            .collect();
        // Pin endpoints: powf round-trips are not exact.
        sigmas[0] = sigma_max;
        sigmas[n_steps - 1] = sigma_min;
        sigmas.push(0.0);

        if sigmas.windows(2).any(|p| p[0] <= p[1]) {
            return Err(Error::invalid("schedule is not strictly decreasing at f64 precision"));
        }
        Ok(Self {
            sigmas,
            sigma_min,
            sigma_max,
            rho,
        })
    }

    pub fn default_svd() -> Self {
        Self::build(DEFAULT_STEPS, DEFAULT_SIGMA_MIN, DEFAULT_SIGMA_MAX, DEFAULT_RHO)
            .expect("default schedule parameters are valid")
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn n_steps(&self) -> usize {
        self.sigmas.len() - 1
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Noise level with `remaining` denoising steps left.
    pub fn level_at(&self, remaining: usize) -> Result<f64> {
        let n = self.n_steps();
        if remaining > n {
            return Err(Error::invalid(format!("remaining={remaining} outside [0, {n}]")));
        }
        Ok(self.sigmas[n - remaining])
    }

    /// Std of the noise that lifts a latent from the level one step below
    /// `remaining` back up to the level at `remaining`.
    pub fn reinjection_std(&self, remaining: usize) -> Result<f64> {
        if remaining == 0 {
            return Err(Error::invalid("no level below remaining=0"));
        }
        let from = self.level_at(remaining)?;
        let to = self.level_at(remaining - 1)?;
        reinjection_std(from, to)
    }
}

/// `sqrt(from^2 - to^2)`; the levels must be strictly decreasing.
pub fn reinjection_std(sigma_from: f64, sigma_to: f64) -> Result<f64> {
    // partial_cmp also rejects NaN levels.
    if sigma_to.partial_cmp(&sigma_from) != Some(std::cmp::Ordering::Less) || sigma_to < 0.0 {
        return Err(Error::InvalidState(format!(
            "levels not strictly decreasing: from {sigma_from} to {sigma_to}"
        )));
    }
    // (a - b)(a + b) keeps precision when the levels are close.
    Ok(((sigma_from - sigma_to) * (sigma_from + sigma_to)).sqrt())
}

/// Where the pipeline enters the schedule and how long it re-injects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionPoint {
    pub tau: usize,
    pub delta: usize,
    pub m_iters: usize,
}

impl InjectionPoint {
    pub fn new(tau: usize, delta: usize, m_iters: usize, n_steps: usize) -> Result<Self> {
        if tau == 0 || tau > n_steps {
            return Err(Error::invalid(format!("tau={tau} outside (0, {n_steps}]")));
        }
        if delta > tau {
            return Err(Error::invalid(format!("delta={delta} exceeds tau={tau}")));
        }
        Ok(Self { tau, delta, m_iters })
    }

    /// Number of sliding-window denoise rounds a full run performs.
    pub fn expected_rounds(&self) -> usize {
        if self.tau > self.delta {
            (self.tau - self.delta) * (self.m_iters + 1) + self.delta
        } else {
            self.tau
        }
    }
}
