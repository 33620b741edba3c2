//! Synthetic scenes and correlated speckle for bistatic interferograms.
//!
//! Random draws come from a counter-based generator: every pixel owns a
//! ChaCha stream selected by `(row, col)` under the scene seed, so samples
//! do not depend on traversal order or on the number of worker threads.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::{wrap_phase, ComplexRaster, GridShape, RealRaster, Semantic, SlcPair};

/// Default number of Monte-Carlo repetitions for full-scale experiments.
pub const PAPER_TRIALS: usize = 10_000;

/// Seed for all random draws of one simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SimSeed(pub u64);

impl SimSeed {
    /// Independent child seed, e.g. for trial `index` of an experiment.
    pub fn derive(self, index: u64) -> SimSeed {
        SimSeed(splitmix64(splitmix64(self.0) ^ index.wrapping_mul(0xA24B_AED4_963E_E407)))
    }

    /// Generator for pixel `(row, col)`.
    pub fn pixel_rng(self, row: usize, col: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(((row as u64) << 32) | col as u64);
        rng
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Circular complex normal sample with unit variance.
pub fn complex_normal<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Ground truth of a synthetic scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub amplitude: RealRaster,
    pub coherence: RealRaster,
    pub true_phase: RealRaster,
}

impl SceneSpec {
    pub fn new(amplitude: RealRaster, coherence: RealRaster, true_phase: RealRaster) -> Result<Self> {
        let shape = amplitude.shape();
        shape.check_same(&coherence.shape())?;
        shape.check_same(&true_phase.shape())?;
        let scene = Self { amplitude, coherence, true_phase };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        for (r, s) in [
            (&self.amplitude, Semantic::Amplitude),
            (&self.coherence, Semantic::Coherence),
            (&self.true_phase, Semantic::Phase),
        ] {
            if r.semantic() != s {
                return Err(Error::param("scene", format!("expected {} raster", s.as_str())));
            }
            r.validate()?;
        }
        Ok(())
    }

    pub fn shape(&self) -> GridShape {
        self.amplitude.shape()
    }

    /// Constant amplitude and coherence with the given phase.
    pub fn homogeneous(phase: RealRaster, amplitude: f64, coherence: f64) -> Result<Self> {
        let shape = phase.shape();
        Self::new(
            RealRaster::filled(shape, Semantic::Amplitude, amplitude)?,
            RealRaster::filled(shape, Semantic::Coherence, coherence)?,
            phase,
        )
    }
}

/// Draws a master/slave pair with per-pixel covariance
/// `A² [[1, γe^{jφ}], [γe^{−jφ}, 1]]` via its Cholesky factor.
pub fn sample_slc_pair(scene: &SceneSpec, seed: SimSeed) -> Result<SlcPair> {
    scene.validate()?;
    let shape = scene.shape();
    let n = shape.len();
    let mut master = vec![Complex64::new(0.0, 0.0); n];
    let mut slave = vec![Complex64::new(0.0, 0.0); n];
    let amp = scene.amplitude.values();
    let coh = scene.coherence.values();
    let phase = scene.true_phase.values();
    master.par_chunks_mut(shape.cols).zip(slave.par_chunks_mut(shape.cols)).enumerate().for_each(
        |(r, (m_row, s_row))| {
            for c in 0..shape.cols {
                let i = shape.index(r, c);
                let mut rng = seed.pixel_rng(r, c);
                let r1 = complex_normal(&mut rng);
                let r2 = complex_normal(&mut rng);
                let g = coh[i];
                let rot = Complex64::from_polar(g, -phase[i]);
                m_row[c] = r1 * amp[i];
                s_row[c] = (rot * r1 + r2 * (1.0 - g * g).max(0.0).sqrt()) * amp[i];
            }
        },
    );
    SlcPair::new(ComplexRaster::new(shape, master)?, ComplexRaster::new(shape, slave)?)
}

/// Linear phase ramp `wrap(f_range·col + f_azimuth·row)` at unit amplitude.
pub fn make_ramp(shape: GridShape, f_range: f64, f_azimuth: f64, coherence: f64) -> Result<SceneSpec> {
    let phase =
        RealRaster::from_fn(shape, Semantic::Phase, |r, c| wrap_phase(f_range * c as f64 + f_azimuth * r as f64))?;
    SceneSpec::homogeneous(phase, 1.0, coherence)
}

/// Vertical phase edge between two half-planes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSpec {
    pub left_phase: f64,
    pub right_phase: f64,
    pub left_coherence: f64,
    pub right_coherence: f64,
    /// Intensity of the right half relative to the left half.
    pub intensity_ratio: f64,
}

impl Default for StepSpec {
    fn default() -> Self {
        Self {
            left_phase: -PI / 3.0,
            right_phase: PI / 3.0,
            left_coherence: 0.7,
            right_coherence: 0.7,
            intensity_ratio: 1.0,
        }
    }
}

impl StepSpec {
    /// Phase edge accompanied by a coherence step 0.6 → 0.8 and a 6 dB
    /// intensity step.
    pub fn intensity_coherence() -> Self {
        Self { left_coherence: 0.6, right_coherence: 0.8, intensity_ratio: 10f64.powf(0.6), ..Self::default() }
    }
}

/// First column of the right half-plane.
pub fn step_edge_column(shape: GridShape) -> usize {
    shape.cols / 2
}

pub fn make_step(shape: GridShape, spec: &StepSpec) -> Result<SceneSpec> {
    if !(spec.intensity_ratio > 0.0) {
        return Err(Error::param("intensity_ratio", "must be positive"));
    }
    let edge = step_edge_column(shape);
    let right_amp = spec.intensity_ratio.sqrt();
    let side = |c: usize| c >= edge;
    SceneSpec::new(
        RealRaster::from_fn(shape, Semantic::Amplitude, |_, c| if side(c) { right_amp } else { 1.0 })?,
        RealRaster::from_fn(shape, Semantic::Coherence, |_, c| {
            if side(c) {
                spec.right_coherence
            } else {
                spec.left_coherence
            }
        })?,
        RealRaster::from_fn(shape, Semantic::Phase, |_, c| {
            wrap_phase(if side(c) { spec.right_phase } else { spec.left_phase })
        })?,
    )
}

/// Diamond-square terrain parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractalSpec {
    /// Grid is `(2^levels + 1)²`.
    pub levels: u32,
    /// Perturbation amplitude at the coarsest level; halved at every level.
    pub roughness: f64,
    /// Peak-to-peak extent of the unwrapped phase after rescaling. `None`
    /// keeps the raw heightfield (in radians).
    pub phase_span: Option<f64>,
    pub coherence: f64,
}

impl Default for FractalSpec {
    fn default() -> Self {
        Self { levels: 8, roughness: 1.0, phase_span: Some(4.0 * PI), coherence: 0.7 }
    }
}

/// Raw diamond-square heightfield of side `2^levels + 1` with zero corners.
pub fn diamond_square(levels: u32, roughness: f64, seed: SimSeed) -> Result<RealRaster> {
    if levels > 14 {
        return Err(Error::param("levels", "at most 14"));
    }
    let n = (1usize << levels) + 1;
    let shape = GridShape::new(n, n)?;
    let mut h = vec![0.0f64; n * n];
    let key = seed.derive(0xD1A3_0D5A);
    let jitter = |r: usize, c: usize| -> f64 { key.pixel_rng(r, c).gen_range(-1.0..1.0) };
    let mut step = n - 1;
    let mut amp = roughness;
    while step > 1 {
        let half = step / 2;
        // diamond: square centers
        for r in (half..n).step_by(step) {
            for c in (half..n).step_by(step) {
                let avg = (h[(r - half) * n + c - half]
                    + h[(r - half) * n + c + half]
                    + h[(r + half) * n + c - half]
                    + h[(r + half) * n + c + half])
                    / 4.0;
                h[r * n + c] = avg + amp * jitter(r, c);
            }
        }
        // square: edge midpoints
        for r in (0..n).step_by(half) {
            let start = if (r / half) % 2 == 0 { half } else { 0 };
            for c in (start..n).step_by(step) {
                let mut sum = 0.0;
                let mut cnt = 0.0;
                for (dr, dc) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
                    if let Some((rr, cc)) = shape.offset(r, c, dr * half as isize, dc * half as isize) {
                        sum += h[rr * n + cc];
                        cnt += 1.0;
                    }
                }
                h[r * n + c] = sum / cnt + amp * jitter(r, c);
            }
        }
        step = half;
        amp *= 0.5;
    }
    RealRaster::new(shape, Semantic::Generic, h)
}

/// Unwrapped terrain phase cropped to `shape` and rescaled to `phase_span`
/// (centered on zero).
pub fn fractal_surface(shape: GridShape, spec: &FractalSpec, seed: SimSeed) -> Result<RealRaster> {
    let grid = diamond_square(spec.levels, spec.roughness, seed)?;
    let side = grid.shape().rows;
    if shape.rows > side || shape.cols > side {
        return Err(Error::param("shape", format!("{shape} exceeds the {side}x{side} terrain grid")));
    }
    let crop: Vec<f64> =
        (0..shape.rows).flat_map(|r| (0..shape.cols).map(move |c| (r, c))).map(|(r, c)| grid.at(r, c)).collect();
    let values = match spec.phase_span {
        None => crop,
        Some(span) => {
            let (lo, hi) = crop.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            if hi > lo {
                crop.iter().map(|v| (v - lo) / (hi - lo) * span - span / 2.0).collect()
            } else {
                crop.iter().map(|v| v - lo).collect()
            }
        }
    };
    RealRaster::new(shape, Semantic::Generic, values)
}

pub fn make_fractal(shape: GridShape, spec: &FractalSpec, seed: SimSeed) -> Result<SceneSpec> {
    let surface = fractal_surface(shape, spec, seed)?;
    let phase = RealRaster::new(shape, Semantic::Phase, surface.values().iter().map(|&v| wrap_phase(v)).collect())?;
    SceneSpec::homogeneous(phase, 1.0, spec.coherence)
}
