//! 8-bit grayscale snapshots written as binary PGM.

use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::raster::{RealRaster, Semantic};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stretch {
    /// Raster minimum to 0, maximum to 255; a constant raster renders 128.
    MinMax,
    /// `(−π, π]` onto `[0, 255]`.
    Phase,
    Fixed {
        lo: f64,
        hi: f64,
    },
}

impl Stretch {
    /// Phase rasters use the phase interval, everything else min/max.
    pub fn for_semantic(semantic: Semantic) -> Self {
        match semantic {
            Semantic::Phase => Stretch::Phase,
            _ => Stretch::MinMax,
        }
    }
}

pub fn to_gray(raster: &RealRaster, stretch: Stretch) -> Vec<u8> {
    let (lo, hi) = match stretch {
        Stretch::MinMax => raster.min_max(),
        Stretch::Phase => (-std::f64::consts::PI, std::f64::consts::PI),
        Stretch::Fixed { lo, hi } => (lo, hi),
    };
    let span = hi - lo;
    raster
        .values()
        .iter()
        .map(|&v| {
            if !(span > 0.0) || !v.is_finite() {
                128
            } else {
                ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
            }
        })
        .collect()
}

pub fn encode_pgm(raster: &RealRaster, stretch: Stretch) -> Vec<u8> {
    let shape = raster.shape();
    let mut out = format!("P5\n{} {}\n255\n", shape.cols, shape.rows).into_bytes();
    out.extend(to_gray(raster, stretch));
    out
}

pub fn render_raster(raster: &RealRaster, path: impl AsRef<Path>, stretch: Stretch) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&encode_pgm(raster, stretch))?;
    f.flush()?;
    Ok(())
}
