//! Latent video container, keyframe interpolation and noise injection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{NoiseSeed, StreamLabel};

/// Shape of a latent video: channels, frames, height, width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub c: usize,
    pub frames: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub fn new(c: usize, frames: usize, h: usize, w: usize) -> Self {
        Self { c, frames, h, w }
    }

    pub fn len(&self) -> usize {
        self.c * self.frames * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn frame_len(&self) -> usize {
        self.h * self.w
    }

    pub fn with_frames(self, frames: usize) -> Self {
        Self { frames, ..self }
    }

    /// Flat row-major index of `(channel, frame, y, x)`.
    #[inline]
    pub fn index(&self, ch: usize, t: usize, y: usize, x: usize) -> usize {
        ((ch * self.frames + t) * self.h + y) * self.w + x
    }
}

/// A `c × F × h × w` real tensor, row-major, all elements finite.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVideo {
    dims: Dims,
    data: Vec<f64>,
}

impl LatentVideo {
    pub fn new(dims: Dims, data: Vec<f64>) -> Result<Self> {
        if dims.c == 0 || dims.frames == 0 || dims.h == 0 || dims.w == 0 {
            return Err(Error::invalid(format!("all dims must be positive: {dims:?}")));
        }
        if data.len() != dims.len() {
            return Err(Error::invalid(format!(
                "data length {} does not match dims {:?} ({})",
                data.len(),
                dims,
                dims.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite element at {i}")));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Dims) -> Self {
        Self::filled(dims, 0.0)
    }

    pub fn filled(dims: Dims, value: f64) -> Self {
        assert!(value.is_finite());
        Self {
            dims,
            data: vec![value; dims.len()],
        }
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.len());
        for ch in 0..dims.c {
            for t in 0..dims.frames {
                for y in 0..dims.h {
                    for x in 0..dims.w {
                        data.push(f(ch, t, y, x));
                    }
                }
            }
        }
        Self::new(dims, data)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn frames(&self) -> usize {
        self.dims.frames
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Contiguous values of one frame in one channel.
    pub fn plane(&self, ch: usize, t: usize) -> &[f64] {
        let start = self.dims.index(ch, t, 0, 0);
        &self.data[start..start + self.dims.frame_len()]
    }

    /// Frames `[start, start + len)` as a new video.
    pub fn slice_frames(&self, start: usize, len: usize) -> Result<LatentVideo> {
        if len == 0 || start + len > self.dims.frames {
            return Err(Error::invalid(format!(
                "frame range [{start}, {}) outside video of {} frames",
                start + len,
                self.dims.frames
            )));
        }
        let dims = self.dims.with_frames(len);
        let mut data = Vec::with_capacity(dims.len());
        for ch in 0..self.dims.c {
            for t in start..start + len {
                data.extend_from_slice(self.plane(ch, t));
            }
        }
        Ok(LatentVideo { dims, data })
    }

    pub fn frame(&self, t: usize) -> Result<LatentVideo> {
        self.slice_frames(t, 1)
    }

    /// Picks the listed frames, in order.
    pub fn select_frames(&self, indices: &[usize]) -> Result<LatentVideo> {
        if indices.is_empty() {
            return Err(Error::invalid("no frames selected"));
        }
        if let Some(&bad) = indices.iter().find(|&&t| t >= self.dims.frames) {
            return Err(Error::invalid(format!(
                "frame {bad} outside video of {} frames",
                self.dims.frames
            )));
        }
        let dims = self.dims.with_frames(indices.len());
        let mut data = Vec::with_capacity(dims.len());
        for ch in 0..self.dims.c {
            for &t in indices {
                data.extend_from_slice(self.plane(ch, t));
            }
        }
        Ok(LatentVideo { dims, data })
    }

    /// Elementwise `self + scale * other`.
    pub fn add_scaled(&self, other: &[f64], scale: f64) -> Result<LatentVideo> {
        if other.len() != self.data.len() {
            return Err(Error::invalid("length mismatch in add_scaled"));
        }
        let data = self.data.iter().zip(other).map(|(a, b)| a + scale * b).collect();
        LatentVideo::new(self.dims, data)
    }

    pub fn max_abs_diff(&self, other: &LatentVideo) -> f64 {
        assert_eq!(self.dims, other.dims);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Keyframe layout of an `r`× frame-rate expansion of `f` keyframes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyframePlan {
    factor: usize,
    n_keyframes: usize,
}

impl KeyframePlan {
    pub fn new(factor: usize, n_keyframes: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::invalid("interpolation factor must be >= 1"));
        }
        if n_keyframes == 0 {
            return Err(Error::invalid("need at least one keyframe"));
        }
        Ok(Self { factor, n_keyframes })
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn n_keyframes(&self) -> usize {
        self.n_keyframes
    }

    pub fn total_frames(&self) -> usize {
        self.factor * self.n_keyframes
    }

    pub fn tail_dups(&self) -> usize {
        self.factor - 1
    }

    /// Frame position of keyframe `ordinal` (0-based).
    pub fn keyframe_index(&self, ordinal: usize) -> usize {
        ordinal * self.factor
    }

    pub fn keyframe_indices(&self) -> Vec<usize> {
        (0..self.n_keyframes).map(|i| self.keyframe_index(i)).collect()
    }
}

/// Expands `f` keyframes to `r·f` frames.
///
/// Keyframe `i` lands at frame `i·r` unchanged. The `r − 1` frames after it are
/// convex blends toward keyframe `i + 1` weighted by their relative time
/// position, and the last keyframe is repeated `r − 1` times to fill the tail.
pub fn interpolate(low: &LatentVideo, factor: usize) -> Result<LatentVideo> {
    let f = low.frames();
    if factor == 0 {
        return Err(Error::invalid("interpolation factor must be >= 1"));
    }
    if f < 2 {
        return Err(Error::invalid(format!(
            "interpolation needs at least 2 keyframes, got {f}"
        )));
    }
    let dims = low.dims().with_frames(f * factor);
    let plane = dims.frame_len();
    let mut data = Vec::with_capacity(dims.len());
    for ch in 0..dims.c {
        for k in 0..f {
            let cur = low.plane(ch, k);
            data.extend_from_slice(cur);
            let next = if k + 1 < f { Some(low.plane(ch, k + 1)) } else { None };
            for t in 1..factor {
                match next {
                    Some(next) => {
                        let a = t as f64 / factor as f64;
                        data.extend((0..plane).map(|p| (1.0 - a) * cur[p] + a * next[p]));
                    }
                    None => data.extend_from_slice(cur),
                }
            }
        }
    }
    LatentVideo::new(dims, data)
}

/// `z + sigma·ε` with `ε` drawn from the labelled substream.
pub fn inject_noise(z: &LatentVideo, sigma: f64, seed: NoiseSeed, label: StreamLabel) -> Result<LatentVideo> {
    if !sigma.is_finite() {
        return Err(Error::invalid(format!("noise level must be finite, got {sigma}")));
    }
    if sigma < 0.0 {
        return Err(Error::invalid(format!("noise level must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(z.clone());
    }
    let eps = seed.normals(label, z.data().len());
    z.add_scaled(&eps, sigma)
}
