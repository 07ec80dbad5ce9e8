#![allow(dead_code)]

use std::sync::Arc;

use diffuseslide::denoise::{euler_step, Denoiser, LinearGaussianPrior, StepRequest};
use diffuseslide::latent::{Dims, LatentVideo};
use diffuseslide::pipeline::ReinjectionObserver;
use diffuseslide::remote::protocol::MAX_FRAME_LEN;
use diffuseslide::rng::{NoiseSeed, Purpose, StreamLabel};
use diffuseslide::window::WindowLayout;
use nalgebra::DMatrix;
use rand::Rng;

/// Random prior with Gaussian basis entries of std `scale` and mean 0.5.
pub fn random_prior(dims: Dims, rank: usize, scale: f64, seed: u64) -> Arc<LinearGaussianPrior> {
    let a = NoiseSeed(seed).normals(StreamLabel::new(Purpose::Test, 1, 0), dims.len() * rank);
    let basis = DMatrix::from_column_slice(dims.len(), rank, &a) * scale;
    Arc::new(LinearGaussianPrior::new(dims, basis, vec![0.5; dims.len()]).unwrap())
}

pub fn random_video(dims: Dims, seed: u64, scale: f64) -> LatentVideo {
    let v = NoiseSeed(seed).normals(StreamLabel::new(Purpose::Test, 2, 0), dims.len());
    LatentVideo::new(dims, v.into_iter().map(|x| 0.5 + scale * x).collect()).unwrap()
}

/// Materializes every window's estimate, then averages per element over the
/// windows that cover it.
pub fn brute_force_round(layout: &WindowLayout, z: &LatentVideo, d: &dyn Denoiser, sf: f64, st: f64) -> LatentVideo {
    let dims = z.dims();
    let outs: Vec<(usize, LatentVideo)> = layout
        .windows()
        .iter()
        .map(|w| {
            let slice = z.slice_frames(w.start, w.width).unwrap();
            let out = euler_step(
                d,
                &StepRequest {
                    window: &slice,
                    window_start: w.start,
                    sigma_from: sf,
                    sigma_to: st,
                    cond: Some(&w.condition),
                },
            )
            .unwrap();
            (w.start, out)
        })
        .collect();
    LatentVideo::from_fn(dims, |ch, t, y, x| {
        let vals: Vec<f64> = outs
            .iter()
            .filter(|(s, o)| t >= *s && t < s + o.frames())
            .map(|(s, o)| o.data()[o.dims().index(ch, t - s, y, x)])
            .collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    })
    .unwrap()
}

/// Records `std(z − truth)` after every re-injection.
pub struct DeviationProbe {
    pub truth: LatentVideo,
    pub seen: Vec<(usize, usize, f64)>,
}

impl ReinjectionObserver for DeviationProbe {
    fn after_reinjection(&mut self, remaining: usize, iteration: usize, z: &LatentVideo) {
        let n = z.data().len() as f64;
        let diff: Vec<f64> = z.data().iter().zip(self.truth.data()).map(|(a, b)| a - b).collect();
        let mean = diff.iter().sum::<f64>() / n;
        let var = diff.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        self.seen.push((remaining, iteration, var.sqrt()));
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// A malformed frame stream of one of several kinds.
pub fn malformed_stream(rng: &mut impl Rng, valid: &[u8]) -> Vec<u8> {
    let framed = |payload: &[u8]| {
        let mut v = (payload.len() as u32).to_le_bytes().to_vec();
        v.extend_from_slice(payload);
        v
    };
    match rng.random_range(0..8) {
        // Truncated payload.
        0 => {
            let cut = rng.random_range(1..valid.len());
            framed(&valid[..cut])
        }
        // Trailing garbage.
        1 => {
            let mut p = valid.to_vec();
            p.extend((0..rng.random_range(1..9)).map(|_| rng.random::<u8>()));
            framed(&p)
        }
        // Unknown message type.
        2 => {
            let mut p = valid.to_vec();
            p[0] = loop {
                let t: u8 = rng.random();
                if ![0x01, 0x02, 0x7f, 0x81, 0x82, 0x83].contains(&t) {
                    break t;
                }
            };
            framed(&p)
        }
        // Length prefix promises more than the stream holds.
        3 => {
            let mut v = ((valid.len() + rng.random_range(1..64)) as u32).to_le_bytes().to_vec();
            v.extend_from_slice(valid);
            v
        }
        // Zero or oversized length.
        4 => {
            let len = if rng.random() {
                0
            } else {
                rng.random_range(MAX_FRAME_LEN + 1..=u32::MAX)
            };
            let mut v = len.to_le_bytes().to_vec();
            v.extend_from_slice(valid);
            v
        }
        // Stream ends inside the length prefix.
        5 => (0..rng.random_range(1..4)).map(|_| rng.random::<u8>()).collect(),
        // Tensor whose dims disagree with its payload.
        6 => {
            let mut p = valid.to_vec();
            let at = 1 + 8 + 1 + 1;
            p[at] = p[at].wrapping_add(rng.random_range(1..=255));
            framed(&p)
        }
        // Random bytes with an invalid type byte in front.
        _ => {
            let mut p = vec![0x40 + rng.random_range(0..0x3f)];
            p.extend((0..rng.random_range(0..40)).map(|_| rng.random::<u8>()));
            framed(&p)
        }
    }
}
