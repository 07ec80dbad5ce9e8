//! `LVT1` tensor files and PGM frame export.
//!
//! Layout (all little-endian):
//!
//! ```text
//! "LVT1" | version u8 = 1 | dtype u8 = 0 (f32) | ndim u8 | ndim × u32 dims | f32 payload
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::latent::{Dims, LatentVideo};

pub const MAGIC: &[u8; 4] = b"LVT1";
pub const VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 0;
const HEADER_LEN: usize = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.is_empty() || dims.len() > u8::MAX as usize {
            return Err(Error::invalid(format!("unsupported rank {}", dims.len())));
        }
        if dims.iter().any(|&d| d == 0 || d > u32::MAX as usize) {
            return Err(Error::invalid(format!("dims must be nonzero u32: {dims:?}")));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::invalid(format!("{} values for dims {dims:?}", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("tensor contains non-finite values"));
        }
        Ok(Self { dims, data })
    }

    pub fn from_latent(z: &LatentVideo) -> Self {
        let d = z.dims();
        Self {
            dims: vec![d.c, d.frames, d.h, d.w],
            data: z.data().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_latent(&self) -> Result<LatentVideo> {
        let &[c, f, h, w] = self.dims.as_slice() else {
            return Err(Error::Format(format!(
                "latent videos are 4-d, file has dims {:?}",
                self.dims
            )));
        };
        LatentVideo::new(Dims::new(c, f, h, w), self.data.iter().map(|&v| v as f64).collect())
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + 4 * self.dims.len() + 4 * self.data.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(DTYPE_F32);
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format("file shorter than header".into()));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format(format!("bad magic {:?}", &bytes[..4])));
        }
        if bytes[4] != VERSION {
            return Err(Error::Format(format!("unsupported version {}", bytes[4])));
        }
        if bytes[5] != DTYPE_F32 {
            return Err(Error::Format(format!("unsupported dtype {}", bytes[5])));
        }
        let ndim = bytes[6] as usize;
        if ndim == 0 {
            return Err(Error::Format("zero-rank tensor".into()));
        }
        let dims_end = HEADER_LEN + 4 * ndim;
        if bytes.len() < dims_end {
            return Err(Error::Format("truncated dims".into()));
        }
        let dims: Vec<usize> = bytes[HEADER_LEN..dims_end]
            .chunks_exact(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
            .collect();
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format("dims overflow".into()))?;
        let payload = &bytes[dims_end..];
        if count.checked_mul(4) != Some(payload.len()) {
            return Err(Error::Format(format!(
                "payload is {} bytes, dims {dims:?} need {}",
                payload.len(),
                count.saturating_mul(4)
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Tensor::new(dims, data).map_err(|e| Error::Format(e.to_string()))
    }
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    if t.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("refusing to write non-finite values"));
    }
    fs::write(path, t.encode())?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    Tensor::decode(&fs::read(path)?)
}

pub fn write_latent(path: impl AsRef<Path>, z: &LatentVideo) -> Result<()> {
    write_tensor(path, &Tensor::from_latent(z))
}

pub fn read_latent(path: impl AsRef<Path>) -> Result<LatentVideo> {
    read_tensor(path)?.to_latent()
}

/// `[0, 1]` → byte, rounding half up.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Binary PGM bytes of one single-channel frame.
pub fn pgm_bytes(plane: &[f64], h: usize, w: usize) -> Vec<u8> {
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(plane.iter().map(|&v| quantize(v)));
    out
}

/// Writes `frame_%04d.pgm` for every frame of a single-channel video.
pub fn export_frames(z: &LatentVideo, dir: impl AsRef<Path>) -> Result<()> {
    let d = z.dims();
    if d.c != 1 {
        return Err(Error::Unsupported(format!(
            "PGM export needs one channel, video has {}",
            d.c
        )));
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for t in 0..d.frames {
        let mut f = fs::File::create(dir.join(format!("frame_{t:04}.pgm")))?;
        f.write_all(&pgm_bytes(z.plane(0, t), d.h, d.w))?;
    }
    Ok(())
}
