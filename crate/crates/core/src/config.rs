//! Flat JSON configuration shared by every command.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::denoise::{AnalyticDenoiser, Denoiser, LinearGaussianPrior, DEFAULT_CAPABILITY};
use crate::error::{Error, Result};
use crate::metrics::SsimParams;
use crate::pipeline::RunConfig;
use crate::remote::{ClientOptions, RemoteDenoiser, DEFAULT_TIMEOUT};
use crate::synthetic::CorpusSpec;

pub const ANALYTIC: &str = "analytic";

/// Run, corpus, denoiser and metric options in one document. Keys not listed
/// here are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub steps: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rho: f64,
    pub tau: usize,
    pub delta: usize,
    pub m_iters: usize,
    pub factor: usize,
    pub window: Option<usize>,
    pub stride: Option<usize>,
    pub seed: u64,
    pub cond_precision: f64,
    pub metadata: BTreeMap<String, String>,

    pub n_videos: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub keyframes: usize,
    pub rank: usize,
    pub corpus_seed: u64,
    pub amplitude: f64,
    pub omega_min: f64,
    pub omega_max: f64,

    /// `"analytic"` or a `host:port` address of a denoiser server.
    pub denoiser: String,
    /// Window capability advertised by the analytic denoiser.
    pub capability: usize,
    pub remote_timeout_ms: u64,
    pub remote_pool: usize,

    /// SSIM window side; `None` fits the default 11 to the frame size.
    pub ssim_window: Option<usize>,
    pub ssim_sigma: f64,

    /// Worker cap; `None` uses all cores.
    pub threads: Option<usize>,
}

impl Default for CliConfig {
    fn default() -> Self {
        let run = RunConfig::default();
        let corpus = CorpusSpec::default();
        Self {
            steps: run.steps,
            sigma_min: run.sigma_min,
            sigma_max: run.sigma_max,
            rho: run.rho,
            tau: run.tau,
            delta: run.delta,
            m_iters: run.m_iters,
            factor: run.factor,
            window: None,
            stride: None,
            seed: run.seed,
            cond_precision: run.cond_precision,
            metadata: BTreeMap::new(),
            n_videos: corpus.n_videos,
            c: corpus.c,
            h: corpus.h,
            w: corpus.w,
            keyframes: corpus.keyframes,
            rank: corpus.rank,
            corpus_seed: corpus.seed,
            amplitude: corpus.amplitude,
            omega_min: corpus.omega_min,
            omega_max: corpus.omega_max,
            denoiser: ANALYTIC.to_string(),
            capability: DEFAULT_CAPABILITY,
            remote_timeout_ms: DEFAULT_TIMEOUT.as_millis() as u64,
            remote_pool: ClientOptions::default().pool,
            ssim_window: None,
            ssim_sigma: SsimParams::default().sigma,
            threads: None,
        }
    }
}

impl CliConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            steps: self.steps,
            sigma_min: self.sigma_min,
            sigma_max: self.sigma_max,
            rho: self.rho,
            tau: self.tau,
            delta: self.delta,
            m_iters: self.m_iters,
            factor: self.factor,
            window: self.window,
            stride: self.stride,
            seed: self.seed,
            cond_precision: self.cond_precision,
            metadata: self.metadata.clone(),
        }
    }

    pub fn corpus_spec(&self) -> CorpusSpec {
        CorpusSpec {
            n_videos: self.n_videos,
            c: self.c,
            h: self.h,
            w: self.w,
            keyframes: self.keyframes,
            factor: self.factor,
            rank: self.rank,
            seed: self.corpus_seed,
            amplitude: self.amplitude,
            omega_min: self.omega_min,
            omega_max: self.omega_max,
        }
    }

    pub fn ssim_params(&self) -> Option<SsimParams> {
        self.ssim_window.map(|window| SsimParams {
            window,
            sigma: self.ssim_sigma,
            ..SsimParams::default()
        })
    }

    pub fn client_options(&self) -> ClientOptions {
        ClientOptions {
            timeout: Duration::from_millis(self.remote_timeout_ms),
            pool: self.remote_pool,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| match e {
            Error::InvalidArgument(m) => Error::Config(m),
            other => Error::Config(other.to_string()),
        };
        self.run_config().validate().map_err(wrap)?;
        self.corpus_spec().validate().map_err(wrap)?;
        if self.capability == 0 {
            return Err(Error::Config("capability must be >= 1".into()));
        }
        if self.remote_timeout_ms == 0 {
            return Err(Error::Config("remote_timeout_ms must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be >= 1".into()));
        }
        if let Some(w) = self.ssim_window {
            if w == 0 || w.is_multiple_of(2) {
                return Err(Error::Config("ssim_window must be odd".into()));
            }
        }
        Ok(())
    }

    pub fn is_analytic(&self) -> bool {
        self.denoiser == ANALYTIC
    }

    /// The windowed denoiser named by `denoiser`. `prior` backs the analytic one.
    pub fn denoiser(&self, prior: &Arc<LinearGaussianPrior>) -> Result<Arc<dyn Denoiser>> {
        if self.is_analytic() {
            Ok(Arc::new(AnalyticDenoiser::new(
                Arc::clone(prior),
                self.cond_precision,
                self.capability,
            )?))
        } else {
            let addr = self.denoiser.trim_start_matches("tcp://");
            Ok(Arc::new(RemoteDenoiser::connect_with(addr, self.client_options())?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_mirror_component_defaults() {
        let c = CliConfig::default();
        let run = c.run_config();
        assert_eq!(
            run,
            RunConfig {
                window: None,
                ..RunConfig::default()
            }
        );
        assert_eq!(c.corpus_spec(), CorpusSpec::default());
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            CliConfig::from_json(r#"{"tau": 8, "guidance": 2.0}"#),
            Err(Error::Config(_))
        ));
        let c = CliConfig::from_json(r#"{"tau": 6, "h": 16, "denoiser": "127.0.0.1:7341"}"#).unwrap();
        assert_eq!((c.tau, c.h, c.delta), (6, 16, 3));
        assert!(!c.is_analytic());
    }

    #[test]
    fn round_trips_through_json() {
        let c = CliConfig {
            window: Some(10),
            threads: Some(2),
            ..CliConfig::default()
        };
        let back = CliConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn invalid_values_rejected() {
        for bad in [
            r#"{"delta": 9}"#,
            r#"{"rank": 0}"#,
            r#"{"threads": 0}"#,
            r#"{"ssim_window": 4}"#,
        ] {
            let c = CliConfig::from_json(bad).unwrap();
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{bad}");
        }
    }
}
