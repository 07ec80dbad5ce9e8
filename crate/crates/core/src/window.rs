//! Keyframe-anchored sliding windows and overlap fusion.

use std::time::Instant;

use rayon::prelude::*;

use crate::denoise::{euler_step, ConditionSpec, Denoiser, StepRequest};
use crate::error::{Error, Result};
use crate::latent::{KeyframePlan, LatentVideo};

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub start: usize,
    pub width: usize,
    pub condition: ConditionSpec,
    /// True for the extra window pulled back to `F − width` to cover the tail.
    pub clamped: bool,
}

impl Window {
    pub fn end(&self) -> usize {
        self.start + self.width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowLayout {
    windows: Vec<Window>,
    stride: usize,
    total_frames: usize,
    coverage: Vec<usize>,
}

impl WindowLayout {
    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn total_frames(&self) -> usize {
        self.total_frames
    }

    pub fn coverage_counts(&self) -> &[usize] {
        &self.coverage
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Attaches the same metadata to every window's condition.
    pub fn set_metadata(&mut self, metadata: &std::collections::BTreeMap<String, String>) {
        for w in &mut self.windows {
            w.condition
                .metadata
                .extend(metadata.iter().map(|(k, v)| (k.clone(), v.clone())));
        }
    }

    /// A single window spanning the whole video, conditioned on keyframe 0.
    pub fn full(total_frames: usize, first_keyframe: LatentVideo) -> Result<Self> {
        let condition = ConditionSpec::new(first_keyframe, 0, 0, 0)?;
        Ok(Self {
            windows: vec![Window {
                start: 0,
                width: total_frames,
                condition,
                clamped: false,
            }],
            stride: total_frames,
            total_frames,
            coverage: vec![1; total_frames],
        })
    }
}

/// Lays out one window per keyframe at `start = i·stride` while it fits, plus
/// one window clamped to `F − width` if the tail is left uncovered.
///
/// `keyframes` holds the clean keyframe latents (`plan.n_keyframes()` frames).
/// Regular windows are conditioned on their first frame; the clamped window on
/// the first keyframe inside it.
pub fn plan_windows(
    total_frames: usize,
    plan: &KeyframePlan,
    keyframes: &LatentVideo,
    width: usize,
    stride: usize,
) -> Result<WindowLayout> {
    if width == 0 || stride == 0 {
        return Err(Error::invalid("window width and stride must be >= 1"));
    }
    if width > total_frames {
        return Err(Error::invalid(format!(
            "window width {width} exceeds video length {total_frames}"
        )));
    }
    if stride > width {
        return Err(Error::invalid(format!(
            "stride {stride} exceeds window width {width}; frames would be skipped"
        )));
    }
    if keyframes.frames() != plan.n_keyframes() {
        return Err(Error::invalid(format!(
            "plan has {} keyframes but {} keyframe latents were given",
            plan.n_keyframes(),
            keyframes.frames()
        )));
    }
    let kf_index = plan.keyframe_indices();
    if kf_index.last().is_some_and(|&l| l >= total_frames) {
        return Err(Error::invalid("keyframe index outside video"));
    }

    let mut windows = Vec::new();
    for ordinal in 0..plan.n_keyframes() {
        let start = ordinal * stride;
        if start + width > total_frames {
            break;
        }
        // With stride == factor keyframe `ordinal` is the window's first frame.
        // Otherwise fall back to the first keyframe inside the window.
        let inside = |t: usize| t >= start && t < start + width;
        let kf = if inside(kf_index[ordinal]) {
            ordinal
        } else {
            kf_index
                .iter()
                .position(|&t| inside(t))
                .ok_or_else(|| Error::invalid(format!("window at {start} contains no keyframe")))?
        };
        windows.push(Window {
            start,
            width,
            condition: ConditionSpec::new(keyframes.frame(kf)?, kf, start, kf_index[kf] - start)?,
            clamped: false,
        });
    }

    if windows.last().is_none_or(|w| w.end() < total_frames) {
        let start = total_frames - width;
        let kf = kf_index
            .iter()
            .position(|&t| t >= start && t < total_frames)
            .ok_or_else(|| Error::invalid(format!("tail window at {start} contains no keyframe")))?;
        windows.push(Window {
            start,
            width,
            condition: ConditionSpec::new(keyframes.frame(kf)?, kf, start, kf_index[kf] - start)?,
            clamped: true,
        });
    }

    let mut coverage = vec![0usize; total_frames];
    for w in &windows {
        for c in &mut coverage[w.start..w.end()] {
            *c += 1;
        }
    }
    if let Some(gap) = coverage.iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!(
            "frame {gap} not covered; keyframe spacing {} too wide for stride {stride}",
            plan.factor()
        )));
    }

    Ok(WindowLayout {
        windows,
        stride,
        total_frames,
        coverage,
    })
}

/// Per-window wall time of the last round, in milliseconds.
pub type WindowTimings = Vec<f64>;

/// Advances every window of `z` one solver step and averages overlaps.
///
/// Windows may run concurrently on the current rayon pool; fusion sums window
/// estimates in ascending window order so the result does not depend on
/// scheduling.
pub fn denoise_round(
    layout: &WindowLayout,
    z: &LatentVideo,
    d: &dyn Denoiser,
    sigma_from: f64,
    sigma_to: f64,
) -> Result<(LatentVideo, WindowTimings)> {
    if z.frames() != layout.total_frames {
        return Err(Error::invalid(format!(
            "latent has {} frames, layout expects {}",
            z.frames(),
            layout.total_frames
        )));
    }
    if !(sigma_from > sigma_to && sigma_to >= 0.0) {
        return Err(Error::invalid(format!(
            "need sigma_from > sigma_to >= 0, got {sigma_from} -> {sigma_to}"
        )));
    }

    let results: Vec<Result<(LatentVideo, f64)>> = layout
        .windows
        .par_iter()
        .enumerate()
        .map(|(index, w)| {
            let t0 = Instant::now();
            let slice = z.slice_frames(w.start, w.width)?;
            let out = euler_step(
                d,
                &StepRequest {
                    window: &slice,
                    window_start: w.start,
                    sigma_from,
                    sigma_to,
                    cond: Some(&w.condition),
                },
            )
            .map_err(|e| Error::Window {
                index,
                source: Box::new(e),
            })?;
            Ok((out, t0.elapsed().as_secs_f64() * 1e3))
        })
        .collect();

    let mut outputs = Vec::with_capacity(results.len());
    let mut timings = Vec::with_capacity(results.len());
    for r in results {
        let (out, ms) = r?;
        outputs.push(out);
        timings.push(ms);
    }
    Ok((fuse(layout, z, &outputs)?, timings))
}

/// Per-frame mean of the window estimates, accumulated in window order.
pub fn fuse(layout: &WindowLayout, z: &LatentVideo, outputs: &[LatentVideo]) -> Result<LatentVideo> {
    let dims = z.dims();
    let plane = dims.frame_len();
    let mut acc = vec![0.0; dims.len()];
    for (w, out) in layout.windows.iter().zip(outputs) {
        for ch in 0..dims.c {
            for local in 0..w.width {
                let dst = dims.index(ch, w.start + local, 0, 0);
                for (a, v) in acc[dst..dst + plane].iter_mut().zip(out.plane(ch, local)) {
                    *a += v;
                }
            }
        }
    }
    for ch in 0..dims.c {
        for t in 0..dims.frames {
            let n = layout.coverage[t] as f64;
            let dst = dims.index(ch, t, 0, 0);
            for a in &mut acc[dst..dst + plane] {
                *a /= n;
            }
        }
    }
    LatentVideo::new(dims, acc)
}
