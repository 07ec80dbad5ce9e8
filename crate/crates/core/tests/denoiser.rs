mod common;

use std::sync::Arc;

use common::{random_prior, random_video};
use diffuseslide::denoise::{sample_clean, AnalyticDenoiser, ConditionSpec, LinearGaussianPrior};
use diffuseslide::latent::{Dims, LatentVideo};
use diffuseslide::rng::{NoiseSeed, Purpose, StreamLabel};
use diffuseslide::schedule::SigmaSchedule;
use diffuseslide::synthetic::{build_prior, CorpusSpec};
use nalgebra::{DMatrix, DVector};

/// `log N(z; b, AAᵀ + σ²I)` evaluated directly in data space.
fn log_marginal(prior: &LinearGaussianPrior, sigma: f64, z: &DVector<f64>) -> f64 {
    let a = prior.basis();
    let d = a.nrows();
    let cov = a * a.transpose() + DMatrix::identity(d, d) * (sigma * sigma);
    let chol = cov.cholesky().expect("marginal covariance is SPD");
    let r = z - prior.mean();
    let quad = r.dot(&chol.solve(&r));
    let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * (quad + logdet + d as f64 * (2.0 * std::f64::consts::PI).ln())
}

fn fd_gradient(prior: &LinearGaussianPrior, sigma: f64, z: &DVector<f64>) -> DVector<f64> {
    let h = 1e-4 * sigma.max(1e-2);
    DVector::from_fn(z.len(), |i, _| {
        let mut hi = z.clone();
        let mut lo = z.clone();
        hi[i] += h;
        lo[i] -= h;
        (log_marginal(prior, sigma, &hi) - log_marginal(prior, sigma, &lo)) / (2.0 * h)
    })
}

#[test]
fn implied_score_matches_finite_differences() {
    let mut cases = 0;
    for case in 0..120u64 {
        let (dims, rank) = match case % 3 {
            0 => (Dims::new(1, 1, 1, 1), 1),
            1 => (Dims::new(1, 3, 1, 2), 2),
            _ => (Dims::new(2, 2, 2, 1), 3),
        };
        let prior = random_prior(dims, rank, 0.3 + 0.1 * (case % 5) as f64, 100 + case);
        let seed = NoiseSeed(case);
        let sigma = 0.1 * 100f64.powf(seed.normals(StreamLabel::new(Purpose::Test, 9, 0), 1)[0].abs().min(1.0));
        let u = seed.normals(StreamLabel::new(Purpose::Test, 10, 0), rank);
        let clean = prior.video(&u).unwrap();
        let z = random_video(dims, case, sigma)
            .add_scaled(clean.data(), 1.0)
            .unwrap()
            .add_scaled(&vec![-0.5; dims.len()], 1.0)
            .unwrap();
        let d = AnalyticDenoiser::new(Arc::clone(&prior), 0.0, dims.frames).unwrap();
        let den = d.denoise(&z, 0, sigma, None).unwrap();
        let zv = DVector::from_column_slice(z.data());
        let score = (DVector::from_column_slice(den.data()) - &zv) / (sigma * sigma);
        let fd = fd_gradient(&prior, sigma, &zv);
        let rel = (&score - &fd).norm() / fd.norm();
        assert!(rel < 1e-5, "case {case}: sigma {sigma}, relative error {rel:e}");
        cases += 1;
    }
    assert!(cases >= 100);
}

#[test]
fn denoiser_never_increases_off_manifold_residual() {
    for case in 0..50u64 {
        let dims = Dims::new(1, 4, 2, 3);
        let prior = random_prior(dims, 4, 0.25, case);
        let d = AnalyticDenoiser::new(Arc::clone(&prior), 1e6, 4).unwrap();
        let z = random_video(dims, 1000 + case, 0.7);
        let sigma = 0.05 + case as f64 * 0.2;
        let cond = ConditionSpec::new(random_video(dims.with_frames(1), case, 0.2), 0, 0, (case % 4) as usize).unwrap();
        for c in [None, Some(&cond)] {
            let out = d.denoise(&z, 0, sigma, c).unwrap();
            let before = prior.off_manifold_rms(&z).unwrap();
            let after = prior.off_manifold_rms(&out).unwrap();
            assert!(after <= before + 1e-12, "case {case}: {after} > {before}");
            assert!(after < 1e-12);
        }
    }
}

#[test]
fn clean_manifold_points_are_fixed_in_the_noiseless_limit() {
    for case in 0..30u64 {
        let dims = Dims::new(1, 5, 2, 2);
        let prior = random_prior(dims, 3, 0.4, 50 + case);
        let u = NoiseSeed(case).normals(StreamLabel::new(Purpose::Test, 3, 0), 3);
        let x = prior.video(&u).unwrap();
        let offset = (case % 5) as usize;
        let cond = ConditionSpec::new(x.frame(offset).unwrap(), 0, 0, offset).unwrap();
        let d = AnalyticDenoiser::new(Arc::clone(&prior), 1e8, 5).unwrap();
        for c in [None, Some(&cond)] {
            let out = d.denoise(&x, 0, 1e-6, c).unwrap();
            let diff: f64 = out
                .data()
                .iter()
                .zip(x.data())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let norm: f64 = x.data().iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(diff / norm < 1e-9, "case {case}: {:e}", diff / norm);
        }
    }
}

/// Euler over a Gaussian prior is linear in the initial noise: each step
/// scales by `(v + s_i·s_{i+1}) / (v + s_i²)`.
fn euler_gain(s: &SigmaSchedule, v: f64) -> f64 {
    s.sigmas()
        .windows(2)
        .fold(s.sigma_max(), |g, p| g * (v + p[0] * p[1]) / (v + p[0] * p[0]))
}

#[test]
fn scalar_prior_samples_follow_the_euler_map() {
    let prior =
        Arc::new(LinearGaussianPrior::new(Dims::new(1, 1, 1, 1), DMatrix::from_element(1, 1, 1.0), vec![0.0]).unwrap());
    let d = AnalyticDenoiser::new(prior, 0.0, 1).unwrap();
    let s = SigmaSchedule::default_svd();
    let g = euler_gain(&s, 1.0);
    assert!((g - 0.854_553_506_564_7).abs() < 1e-9, "{g}");
    let mut xs = Vec::new();
    for i in 0..1000 {
        let seed = NoiseSeed(7).child(i);
        let x = sample_clean(&d, &s, 1, 0, None, seed).unwrap().data()[0];
        let eps = seed.normals(StreamLabel::new(Purpose::InitialNoise, 0, 0), 1)[0];
        assert!((x - g * eps).abs() <= 1e-9 * (1.0 + x.abs()), "sample {i}");
        xs.push(x);
    }
    let mean = xs.iter().sum::<f64>() / 1000.0;
    let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 999.0).sqrt();
    assert!(mean.abs() < 0.1, "mean {mean}");
    assert!((std - g).abs() < 4.0 * g / (2.0f64 * 999.0).sqrt(), "std {std}");
}

#[test]
fn toy_prior_samples_lie_on_the_manifold() {
    let spec = CorpusSpec::default();
    let prior = Arc::new(build_prior(&spec).unwrap());
    let f = spec.total_frames();
    let d = AnalyticDenoiser::new(Arc::clone(&prior), 1e8, f).unwrap();
    let s = SigmaSchedule::default_svd();
    for i in 0..5 {
        let z = sample_clean(&d, &s, f, 0, None, NoiseSeed(11).child(i)).unwrap();
        let r = prior.off_manifold_rms(&z).unwrap();
        assert!(r < 1e-6, "sample {i}: residual {r:e}");
    }
    let cond = ConditionSpec::new(LatentVideo::filled(Dims::new(1, 1, 8, 8), 0.55), 0, 0, 0).unwrap();
    let z = sample_clean(&d, &s, f, 0, Some(&cond), NoiseSeed(12)).unwrap();
    assert!(prior.off_manifold_rms(&z).unwrap() < 1e-6);
}
