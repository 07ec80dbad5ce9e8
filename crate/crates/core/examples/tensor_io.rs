//! Writes a latent video as an LVT1 tensor, reads it back and exports its
//! frames as PGM images.

use diffuseslide::tensor_io::{export_frames, read_latent, write_latent, Tensor};
use diffuseslide::{Dims, LatentVideo, Result};

fn main() -> Result<()> {
    let dims = Dims::new(1, 4, 8, 8);
    let z = LatentVideo::from_fn(dims, |_, t, y, x| ((x + y + 2 * t) % 8) as f64 / 7.0)?;
    let dir = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("diffuseslide-io"));
    std::fs::create_dir_all(&dir)?;

    let path = dir.join("video.lvt");
    write_latent(&path, &z)?;
    let back = read_latent(&path)?;
    println!(
        "{} bytes on disk, round-trip max error {:.1e}",
        Tensor::from_latent(&z).encoded_len(),
        back.max_abs_diff(&z)
    );
    export_frames(&back, dir.join("frames"))?;
    println!("frames written to {}", dir.join("frames").display());
    Ok(())
}
