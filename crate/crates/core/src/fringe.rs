//! Local fringe frequency estimation from zero-padded block spectra.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::raster::{ComplexRaster, GridShape, RealRaster, Semantic};

/// Per-pixel linear phase rate in radians per pixel along range (columns)
/// and azimuth (rows).
#[derive(Debug, Clone, PartialEq)]
pub struct FringeField {
    pub f_range: RealRaster,
    pub f_azimuth: RealRaster,
}

impl FringeField {
    pub fn new(f_range: RealRaster, f_azimuth: RealRaster) -> Result<Self> {
        f_range.shape().check_same(&f_azimuth.shape())?;
        for r in [&f_range, &f_azimuth] {
            if r.semantic() != Semantic::Frequency {
                return Err(Error::param("fringe", "expected frequency rasters"));
            }
            r.validate()?;
        }
        Ok(Self { f_range, f_azimuth })
    }

    pub fn constant(shape: GridShape, f_range: f64, f_azimuth: f64) -> Self {
        Self {
            f_range: RealRaster::filled(shape, Semantic::Frequency, f_range).expect("valid frequency"),
            f_azimuth: RealRaster::filled(shape, Semantic::Frequency, f_azimuth).expect("valid frequency"),
        }
    }

    pub fn shape(&self) -> GridShape {
        self.f_range.shape()
    }

    /// `(f_range, f_azimuth)` at a pixel.
    #[inline]
    pub fn at(&self, row: usize, col: usize) -> (f64, f64) {
        (self.f_range.at(row, col), self.f_azimuth.at(row, col))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeParams {
    pub block: usize,
    pub fft: usize,
    /// Width of the Gaussian smoothing kernel in pixels; 0 disables it.
    pub sigma_smooth: f64,
    /// Parabolic sub-bin interpolation of the peak along each axis. The
    /// offset is clamped to half a bin, so the estimate stays within one bin
    /// width of the true frequency.
    pub refine: bool,
}

impl Default for FringeParams {
    fn default() -> Self {
        Self { block: 32, fft: 64, sigma_smooth: 8.0, refine: true }
    }
}

impl FringeParams {
    pub fn validate(&self) -> Result<()> {
        if self.block == 0 {
            return Err(Error::param("fringe_block", "must be positive"));
        }
        if !self.fft.is_power_of_two() || self.fft < self.block {
            return Err(Error::param("fringe_fft", "must be a power of two not smaller than the block"));
        }
        if !(self.sigma_smooth >= 0.0) {
            return Err(Error::param("sigma_smooth", "must be non-negative"));
        }
        Ok(())
    }
}

/// Signed frequency in radians per sample of DFT bin `k` out of `n`.
#[inline]
pub fn bin_frequency(k: usize, n: usize) -> f64 {
    let signed = if k >= n / 2 { k as isize - n as isize } else { k as isize };
    2.0 * PI * signed as f64 / n as f64
}

/// Vertex offset in bins of the parabola through three magnitudes centred
/// on a peak, clamped to `[−½, ½]`.
#[inline]
pub fn parabolic_offset(left: f64, peak: f64, right: f64) -> f64 {
    let curv = left - 2.0 * peak + right;
    // symmetric up to rounding: keep the bin centre exactly
    if (left - right).abs() <= 1e-12 * peak.abs() {
        0.0
    } else if curv < 0.0 {
        (0.5 * (left - right) / curv).clamp(-0.5, 0.5)
    } else {
        0.0
    }
}

/// Wraps a frequency into `[−π, π)`.
#[inline]
fn wrap_frequency(f: f64) -> f64 {
    (f + PI).rem_euclid(2.0 * PI) - PI
}

/// Peak frequencies `(f_range, f_azimuth)` of every block, row-major over
/// the block grid.
pub fn block_frequencies(z: &ComplexRaster, params: &FringeParams) -> Result<(usize, usize, Vec<(f64, f64)>)> {
    params.validate()?;
    let shape = z.shape();
    let (b, n) = (params.block, params.fft);
    let brows = shape.rows.div_ceil(b);
    let bcols = shape.cols.div_ceil(b);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let peaks = (0..brows * bcols)
        .into_par_iter()
        .map(|k| {
            let (r0, c0) = ((k / bcols) * b, (k % bcols) * b);
            let mut buf = vec![Complex64::new(0.0, 0.0); n * n];
            for r in r0..(r0 + b).min(shape.rows) {
                for c in c0..(c0 + b).min(shape.cols) {
                    buf[(r - r0) * n + (c - c0)] = z.at(r, c);
                }
            }
            // rows, then columns through a transpose
            fft.process(&mut buf);
            let mut t = vec![Complex64::new(0.0, 0.0); n * n];
            for r in 0..n {
                for c in 0..n {
                    t[c * n + r] = buf[r * n + c];
                }
            }
            fft.process(&mut t);
            // t[c·n + r] holds bin (k_az = r, k_r = c)
            let mut best = (0usize, f64::NEG_INFINITY);
            for k_az in 0..n {
                for k_r in 0..n {
                    let m = t[k_r * n + k_az].norm_sqr();
                    if m > best.1 {
                        best = (k_az * n + k_r, m);
                    }
                }
            }
            let (k_az, k_r) = (best.0 / n, best.0 % n);
            let (mut f_r, mut f_az) = (bin_frequency(k_r, n), bin_frequency(k_az, n));
            if params.refine {
                let mag = |a: usize, r: usize| t[(r % n) * n + a % n].norm();
                let peak = mag(k_az, k_r);
                let d_r = parabolic_offset(mag(k_az, k_r + n - 1), peak, mag(k_az, k_r + 1));
                let d_az = parabolic_offset(mag(k_az + n - 1, k_r), peak, mag(k_az + 1, k_r));
                let bin = 2.0 * PI / n as f64;
                f_r = wrap_frequency(f_r + d_r * bin);
                f_az = wrap_frequency(f_az + d_az * bin);
            }
            (f_r, f_az)
        })
        .collect();
    Ok((brows, bcols, peaks))
}

/// Normalized separable Gaussian smoothing, truncated at 3σ and clipped at
/// the raster borders.
pub fn gaussian_smooth(values: &[f64], shape: GridShape, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return values.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let pass = |src: &[f64], along_rows: bool| -> Vec<f64> {
        let mut out = vec![0.0; src.len()];
        out.par_chunks_mut(shape.cols).enumerate().for_each(|(r, row)| {
            for (c, o) in row.iter_mut().enumerate() {
                let (mut num, mut den) = (0.0, 0.0);
                for (j, w) in kernel.iter().enumerate() {
                    let k = j as isize - radius;
                    let (dr, dc) = if along_rows { (k, 0) } else { (0, k) };
                    if let Some((rr, cc)) = shape.offset(r, c, dr, dc) {
                        num += w * src[shape.index(rr, cc)];
                        den += w;
                    }
                }
                *o = num / den;
            }
        });
        out
    };
    let h = pass(values, false);
    pass(&h, true)
}

/// Block-wise DFT peak estimate of the local fringe frequency, expanded to
/// every pixel of its block and smoothed.
pub fn estimate_fringe_field(z: &ComplexRaster, params: &FringeParams) -> Result<FringeField> {
    let shape = z.shape();
    let (_, bcols, peaks) = block_frequencies(z, params)?;
    let b = params.block;
    let mut fr = vec![0.0; shape.len()];
    let mut faz = vec![0.0; shape.len()];
    for r in 0..shape.rows {
        for c in 0..shape.cols {
            let (a, bz) = peaks[(r / b) * bcols + c / b];
            fr[shape.index(r, c)] = a;
            faz[shape.index(r, c)] = bz;
        }
    }
    let fr = gaussian_smooth(&fr, shape, params.sigma_smooth);
    let faz = gaussian_smooth(&faz, shape, params.sigma_smooth);
    FringeField::new(
        RealRaster::new(shape, Semantic::Frequency, fr)?,
        RealRaster::new(shape, Semantic::Frequency, faz)?,
    )
}
