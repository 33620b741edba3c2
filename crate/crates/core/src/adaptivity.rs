//! Local phase heterogeneity and the quantities it is built from: local
//! unwrapping, weighted phase variance, speckle-moment coherence and the
//! single-look phase variance expected for a given coherence.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::raster::{wrap_phase, GridShape, RealRaster, Semantic, SlcPair};

/// Half width of the block whose circular mean references local unwrapping.
pub const UNWRAP_REFERENCE_HALF: usize = 2;
/// Largest heterogeneity reported; keeps `η < 1` through an `f32` round trip.
pub const MAX_ETA: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct HeterogeneityMap {
    pub eta: RealRaster,
}

impl HeterogeneityMap {
    pub fn new(eta: RealRaster) -> Result<Self> {
        if eta.semantic() != Semantic::Heterogeneity {
            return Err(Error::param("eta", "expected a heterogeneity raster"));
        }
        eta.validate()?;
        Ok(Self { eta })
    }

    /// Gaussian window width per pixel.
    pub fn sigma(&self) -> RealRaster {
        RealRaster::new(self.eta.shape(), Semantic::Sigma, self.eta.values().iter().map(|&e| eta_to_sigma(e)).collect())
            .expect("sigma in (1, 3]")
    }
}

/// Argument of the mean phasor over the 5×5 block (clipped) around `center`.
pub fn unwrap_reference(phase: &RealRaster, center: (usize, usize)) -> f64 {
    let shape = phase.shape();
    let h = UNWRAP_REFERENCE_HALF as isize;
    let mut acc = Complex64::new(0.0, 0.0);
    for dr in -h..=h {
        for dc in -h..=h {
            if let Some((r, c)) = shape.offset(center.0, center.1, dr, dc) {
                acc += Complex64::from_polar(1.0, phase.at(r, c));
            }
        }
    }
    acc.arg()
}

/// Locally unwrapped phases of a search window.
#[derive(Debug, Clone, PartialEq)]
pub struct UnwrappedWindow {
    pub reference: f64,
    /// Row-major over the window; `None` outside the raster.
    pub values: Vec<Option<f64>>,
}

/// Unwraps the search window around `center` relative to the local
/// reference phase, so every value lies in `(ρ − π, ρ + π]`.
pub fn local_unwrap(phase: &RealRaster, center: (usize, usize), search_half: usize) -> Result<UnwrappedWindow> {
    if search_half < UNWRAP_REFERENCE_HALF {
        return Err(Error::param("search_half", "window must be at least 5x5"));
    }
    let shape = phase.shape();
    let rho = unwrap_reference(phase, center);
    let h = search_half as isize;
    let values = (-h..=h)
        .flat_map(|dr| (-h..=h).map(move |dc| (dr, dc)))
        .map(|(dr, dc)| shape.offset(center.0, center.1, dr, dc).map(|(r, c)| unwrap_to(phase.at(r, c), rho)))
        .collect();
    Ok(UnwrappedWindow { reference: rho, values })
}

#[inline]
pub fn unwrap_to(phi: f64, reference: f64) -> f64 {
    reference + wrap_phase(phi - reference)
}

/// `Σ w φ² − (Σ w φ)²` for normalized weights, clamped at zero.
pub fn weighted_phase_variance(values: &[f64], weights: &[f64]) -> f64 {
    let (m1, m2) = values.iter().zip(weights).fold((0.0, 0.0), |(a, b), (v, w)| (a + w * v, b + w * v * v));
    (m2 - m1 * m1).max(0.0)
}

/// Density of the single-look interferometric phase at coherence `gamma`
/// with zero true phase.
pub fn single_look_phase_pdf(phi: f64, gamma: f64) -> f64 {
    let beta = gamma * phi.cos();
    let one_m_b2 = 1.0 - beta * beta;
    (1.0 - gamma * gamma) / (2.0 * PI) / one_m_b2 * (1.0 + beta * (-beta).acos() / one_m_b2.sqrt())
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let (fa, fb) = (f(a), f(b));
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Variance of the single-look phase for coherence `gamma` ∈ [0, 1),
/// by numerical integration of the phase density.
pub fn expected_phase_variance(gamma: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::param("gamma", format!("{gamma} outside [0, 1)")));
    }
    let f = |phi: f64| phi * phi * single_look_phase_pdf(phi, gamma);
    // symmetric density; split near the peak to help the adaptive rule
    let split = (1.0 - gamma * gamma).sqrt().min(1.0);
    Ok(2.0 * (adaptive_simpson(&f, 0.0, split, 1e-13) + adaptive_simpson(&f, split, PI, 1e-13)))
}

/// Tabulated single-look phase variance on 1024 coherence points in [0, 1)
/// with linear interpolation; the value at γ = 1 is zero.
#[derive(Debug, Clone)]
pub struct SigmaTable {
    values: Vec<f64>,
}

impl SigmaTable {
    pub const POINTS: usize = 1024;

    pub fn build() -> Self {
        let mut values: Vec<f64> = (0..Self::POINTS)
            .map(|i| expected_phase_variance(i as f64 / Self::POINTS as f64).expect("grid inside [0,1)"))
            .collect();
        values.push(0.0);
        Self { values }
    }

    /// Shared process-wide table.
    pub fn global() -> &'static SigmaTable {
        static TABLE: OnceLock<SigmaTable> = OnceLock::new();
        TABLE.get_or_init(SigmaTable::build)
    }

    pub fn grid_values(&self) -> &[f64] {
        &self.values[..Self::POINTS]
    }

    /// σ0² for a coherence clamped to [0, 1].
    pub fn variance(&self, gamma: f64) -> f64 {
        let t = gamma.clamp(0.0, 1.0) * Self::POINTS as f64;
        let i = (t.floor() as usize).min(Self::POINTS - 1);
        let frac = t - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }
}

/// Speckle-moment coherence estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentCoherence {
    /// `Σw|u1|²|u2|² / sqrt(Σw|u1|⁴ Σw|u2|⁴)`, which is `(1+γ²)/2` under
    /// fully developed speckle.
    pub ratio: f64,
    /// `sqrt(2r − 1)` clamped to [0, 1].
    pub coherence: f64,
}

impl MomentCoherence {
    pub fn from_sums(cross: f64, fourth1: f64, fourth2: f64) -> Self {
        let den = (fourth1 * fourth2).sqrt();
        let ratio = if den > 0.0 { cross / den } else { 0.0 };
        Self { ratio, coherence: (2.0 * ratio - 1.0).max(0.0).sqrt().min(1.0) }
    }
}

/// Weighted moment coherence over a search window. `weights` is row-major
/// over the `(2·search_half+1)²` window around `center`; entries falling
/// outside the raster are ignored.
pub fn moment_coherence(
    pair: &SlcPair,
    weights: &[f64],
    center: (usize, usize),
    search_half: usize,
) -> Result<MomentCoherence> {
    let side = 2 * search_half + 1;
    if weights.len() != side * side {
        return Err(Error::param("weights", "length must match the search window"));
    }
    let shape = pair.shape();
    let h = search_half as isize;
    let (mut cross, mut f1, mut f2) = (0.0, 0.0, 0.0);
    for (k, w) in weights.iter().enumerate() {
        let (dr, dc) = (k as isize / side as isize - h, k as isize % side as isize - h);
        if let Some((r, c)) = shape.offset(center.0, center.1, dr, dc) {
            let p1 = pair.master().at(r, c).norm_sqr();
            let p2 = pair.slave().at(r, c).norm_sqr();
            cross += w * p1 * p2;
            f1 += w * p1 * p1;
            f2 += w * p2 * p2;
        }
    }
    Ok(MomentCoherence::from_sums(cross, f1, f2))
}

/// `η = (Var − σ0²)/Var`, zero when the observed variance does not exceed
/// the noise variance.
pub fn heterogeneity_index(variance: f64, sigma0_sq: f64) -> f64 {
    if variance > sigma0_sq && variance > 0.0 {
        ((variance - sigma0_sq) / variance).min(MAX_ETA)
    } else {
        0.0
    }
}

/// Gaussian window width for a heterogeneity level, in (1, 3].
pub fn eta_to_sigma(eta: f64) -> f64 {
    2.0 * (1.0 - eta) + 1.0
}

/// Full-raster heterogeneity from explicit per-pixel weight windows, each
/// renormalized over its in-raster entries. The filter computes the same
/// quantity in a fused pass.
pub fn heterogeneity_map(
    pair: &SlcPair,
    weights: impl Fn(usize, usize) -> Vec<f64>,
    search_half: usize,
) -> Result<HeterogeneityMap> {
    let shape: GridShape = pair.shape();
    let phase = pair.interferogram().phase();
    let table = SigmaTable::global();
    let mut eta = Vec::with_capacity(shape.len());
    for r in 0..shape.rows {
        for c in 0..shape.cols {
            let w = weights(r, c);
            let win = local_unwrap(&phase, (r, c), search_half)?;
            let (vals, ws): (Vec<f64>, Vec<f64>) =
                win.values.iter().zip(&w).filter_map(|(v, w)| v.map(|v| (v, *w))).unzip();
            let total: f64 = ws.iter().sum();
            let ws: Vec<f64> = ws.iter().map(|w| w / total).collect();
            let var = weighted_phase_variance(&vals, &ws);
            let gamma = moment_coherence(pair, &w, (r, c), search_half)?.coherence;
            eta.push(heterogeneity_index(var, table.variance(gamma)));
        }
    }
    HeterogeneityMap::new(RealRaster::new(shape, Semantic::Heterogeneity, eta)?)
}
