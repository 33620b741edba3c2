//! The two-stage filter: likelihood-weighted guidance estimation, then
//! adaptive Gaussian-window re-weighting with fringe compensation.
//!
//! Both stages share one aggregation rule. A patch centered at `p` with
//! normalized search weights `w(p, d)` and look count `L_p` contributes to
//! every pixel `x` it covers, so the estimate at `x` is
//!
//! `ẑ_x = Σ_p Σ_d L_p g_p(x−p) w(p, d) z(x+d) e^{−j dᵀf_x} / Σ_p Σ_d L_p g_p(x−p) w(p, d)`
//!
//! where `g_p ≡ 1` in stage 1 and samples `x+d` outside the raster are
//! dropped from both sums. Intensity and the per-image powers are
//! aggregated with the same coefficients.

mod calibration;
mod engine;

use num_complex::Complex64;

pub use calibration::{
    build_table, calibrate_xi, fit_quadratic, CalibrationEntry, CalibrationTable, XiCalibration, XiModel,
    CALIBRATION_LEVELS, DEFAULT_SIGMA_GRID,
};

use crate::adaptivity::HeterogeneityMap;
use crate::error::{Error, Result};
use crate::fringe::{estimate_fringe_field, FringeField, FringeParams};
use crate::raster::{EstimateBundle, RealRaster, Semantic, SlcPair};
use crate::similarity::{patch_dissim_stage1, weights_from_dissim, PatchGeometry};

#[derive(Debug, Clone, PartialEq)]
pub struct FilterParams {
    pub search_half: usize,
    pub patch_half_stage1: usize,
    pub patch_half_stage2: usize,
    pub h1: f64,
    pub h2: f64,
    pub fringe_block: usize,
    pub fringe_fft: usize,
    pub sigma_smooth: f64,
    /// Sub-bin refinement of the fringe peak.
    pub fringe_refine: bool,
    /// `ξ(t) = c0 + c1·t + c2·t²`; `None` selects from the shipped
    /// calibration table by median stage-1 moment coherence.
    pub xi_coeffs: Option<[f64; 3]>,
    pub fringe_compensation: bool,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            search_half: 10,
            patch_half_stage1: 3,
            patch_half_stage2: 5,
            h1: 4.0,
            h2: 2.0,
            fringe_block: 32,
            fringe_fft: 64,
            sigma_smooth: 8.0,
            fringe_refine: true,
            xi_coeffs: None,
            fringe_compensation: true,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        if self.search_half < crate::adaptivity::UNWRAP_REFERENCE_HALF {
            return Err(Error::param("search_half", "must be at least 2"));
        }
        if !(self.h1 > 0.0 && self.h1.is_finite()) {
            return Err(Error::param("h1", "must be positive"));
        }
        if !(self.h2 > 0.0 && self.h2.is_finite()) {
            return Err(Error::param("h2", "must be positive"));
        }
        self.fringe_params().validate()?;
        if let Some(c) = self.xi_coeffs {
            XiModel::new(c)?;
        }
        Ok(())
    }

    pub fn fringe_params(&self) -> FringeParams {
        FringeParams {
            block: self.fringe_block,
            fft: self.fringe_fft,
            sigma_smooth: self.sigma_smooth,
            refine: self.fringe_refine,
        }
    }

    pub fn search_len(&self) -> usize {
        (2 * self.search_half + 1).pow(2)
    }
}

/// `(Σw)² / Σw²`.
pub fn enl_from_weights(weights: &[f64]) -> f64 {
    let (s, s2) = weights.iter().fold((0.0, 0.0), |(a, b), w| (a + w, b + w * w));
    if s2 > 0.0 {
        s * s / s2
    } else {
        0.0
    }
}

/// Patch-wise weighted means for one search window.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchEstimate {
    pub geometry: PatchGeometry,
    /// Per patch offset (row-major); `None` where no weighted sample exists.
    pub z: Vec<Option<Complex64>>,
    pub intensity: Vec<Option<f64>>,
    pub enl: f64,
}

/// Weighted means of the interferogram and intensity over a search window
/// for every offset of the patch around `center`. `weights` is row-major
/// over the search window. With a fringe field, each candidate sample is
/// detrended by `e^{−j dᵀ f}` with `f` taken at the patch pixel.
pub fn patch_weighted_mean(
    pair: &SlcPair,
    weights: &[f64],
    search_half: usize,
    center: (usize, usize),
    geom: PatchGeometry,
    fringe: Option<&FringeField>,
) -> Result<PatchEstimate> {
    let side = 2 * search_half + 1;
    if weights.len() != side * side {
        return Err(Error::param("weights", "length must match the search window"));
    }
    let shape = pair.shape();
    let h = search_half as isize;
    let (m, s) = (pair.master(), pair.slave());
    let mut z = Vec::with_capacity(geom.len());
    let mut intensity = Vec::with_capacity(geom.len());
    for (or, oc) in geom.offsets() {
        let Some(xo) = shape.offset(center.0, center.1, or, oc) else {
            z.push(None);
            intensity.push(None);
            continue;
        };
        let f = fringe.map(|f| f.at(xo.0, xo.1));
        let (mut acc, mut acc_i, mut den) = (Complex64::new(0.0, 0.0), 0.0, 0.0);
        for (k, &w) in weights.iter().enumerate() {
            let (dr, dc) = (k as isize / side as isize - h, k as isize % side as isize - h);
            let Some(q) = shape.offset(xo.0, xo.1, dr, dc) else { continue };
            if shape.offset(center.0, center.1, dr, dc).is_none() {
                continue;
            }
            let (u1, u2) = (m.at(q.0, q.1), s.at(q.0, q.1));
            let mut v = u1 * u2.conj();
            if let Some((f_r, f_az)) = f {
                v *= Complex64::from_polar(1.0, -(dr as f64 * f_az + dc as f64 * f_r));
            }
            acc += v * w;
            acc_i += w * 0.5 * (u1.norm_sqr() + u2.norm_sqr());
            den += w;
        }
        if den > 0.0 {
            z.push(Some(acc / den));
            intensity.push(Some(acc_i / den));
        } else {
            z.push(None);
            intensity.push(None);
        }
    }
    Ok(PatchEstimate { geometry: geom, z, intensity, enl: enl_from_weights(weights) })
}

/// Normalized stage-1 weights of one search window (row-major, zero outside
/// the raster), computed directly from patch dissimilarities. The center
/// pixel gets the largest weight found among its neighbours.
pub fn stage1_weights(pair: &SlcPair, params: &FilterParams, center: (usize, usize)) -> Result<Vec<f64>> {
    params.validate()?;
    let shape = pair.shape();
    let h = params.search_half as isize;
    let geom = PatchGeometry::new(params.patch_half_stage1);
    let mut dissim = Vec::with_capacity(params.search_len());
    for dr in -h..=h {
        for dc in -h..=h {
            dissim.push(match shape.offset(center.0, center.1, dr, dc) {
                Some(y) => patch_dissim_stage1(pair, center, y, geom)?,
                None => f64::INFINITY,
            });
        }
    }
    // the zero offset takes the best dissimilarity of the other offsets
    let center = dissim.len() / 2;
    let best = dissim.iter().enumerate().filter(|&(k, _)| k != center).map(|(_, &d)| d).fold(f64::INFINITY, f64::min);
    if best.is_finite() {
        dissim[center] = best;
    }
    weights_from_dissim(&dissim, params.h1, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Output {
    pub guidance: EstimateBundle,
    pub heterogeneity: HeterogeneityMap,
    /// Weighted moment coherence behind η; insensitive to local fringes.
    pub moment_coherence: RealRaster,
}

/// Likelihood-weighted guidance estimate and the heterogeneity index,
/// both from the stage-1 weights.
pub fn stage1_filter(pair: &SlcPair, params: &FilterParams) -> Result<Stage1Output> {
    params.validate()?;
    let mut maps = engine::stage1(pair, params);
    let shape = pair.shape();
    let eta = std::mem::take(&mut maps.eta);
    let moment_coherence = RealRaster::new(shape, Semantic::Coherence, std::mem::take(&mut maps.moment_coherence))?;
    let guidance = maps.bundle(shape)?;
    let heterogeneity = HeterogeneityMap::new(RealRaster::new(shape, Semantic::Heterogeneity, eta)?)?;
    Ok(Stage1Output { guidance, heterogeneity, moment_coherence })
}

/// Adaptive second stage on the raw pair, with similarities measured on the
/// guidance estimate.
pub fn stage2_filter(
    pair: &SlcPair,
    guidance: &EstimateBundle,
    heterogeneity: &HeterogeneityMap,
    fringe: &FringeField,
    params: &FilterParams,
    xi: XiModel,
) -> Result<EstimateBundle> {
    params.validate()?;
    let shape = pair.shape();
    for s in [guidance.shape(), heterogeneity.eta.shape(), fringe.shape()] {
        shape.check_same(&s)?;
    }
    let sigma = heterogeneity.sigma();
    engine::stage2(pair, guidance, sigma.values(), fringe, params, xi).bundle(shape)
}

/// All products of a full run.
#[derive(Debug, Clone, PartialEq)]
pub struct NlswagOutput {
    pub stage1: EstimateBundle,
    pub heterogeneity: HeterogeneityMap,
    pub fringe: FringeField,
    pub xi: XiModel,
    pub estimate: EstimateBundle,
}

/// ξ for a stage-1 run: explicit coefficients, or the shipped table entry
/// nearest to the median moment coherence. The plain guidance coherence is
/// not used because residual fringes inside the window depress it.
pub fn select_xi(params: &FilterParams, stage1: &Stage1Output) -> Result<XiModel> {
    match params.xi_coeffs {
        Some(c) => XiModel::new(c),
        None => {
            let mut coh = stage1.moment_coherence.values().to_vec();
            coh.sort_by(f64::total_cmp);
            let n = coh.len();
            let median = if n % 2 == 1 { coh[n / 2] } else { 0.5 * (coh[n / 2 - 1] + coh[n / 2]) };
            Ok(CalibrationTable::shipped().nearest(median).model())
        }
    }
}

pub fn nlswag(pair: &SlcPair, params: &FilterParams) -> Result<NlswagOutput> {
    let s1 = stage1_filter(pair, params)?;
    let xi = select_xi(params, &s1)?;
    let Stage1Output { guidance, heterogeneity, .. } = s1;
    let fringe = if params.fringe_compensation {
        estimate_fringe_field(&pair.interferogram(), &params.fringe_params())?
    } else {
        FringeField::constant(pair.shape(), 0.0, 0.0)
    };
    let estimate = stage2_filter(pair, &guidance, &heterogeneity, &fringe, params, xi)?;
    Ok(NlswagOutput { stage1: guidance, heterogeneity, fringe, xi, estimate })
}

#[cfg(test)]
mod tests;
