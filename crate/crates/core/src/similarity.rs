//! Pixel and patch similarity statistics for both filter stages, and the
//! exponential kernel that turns dissimilarities into weights.
//!
//! The functions here are the reference, one-pair-at-a-time forms. The
//! filter engine evaluates the same quantities for whole search windows at
//! once (see `filter`), sharing [`log_delta1_from_parts`] and
//! [`delta2_parts`] with this module.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fringe::FringeField;
use crate::raster::{EstimateBundle, SlcPair};

/// Relative clamp keeping `C/A` inside `[ε, 1 − ε]`.
pub const EPS_C: f64 = 1e-12;
/// Largest coherence admitted by the stage-2 divergence.
pub const MAX_GUIDE_COHERENCE: f64 = 1.0 - 1e-9;
/// Floor for `log δ¹` when an amplitude is exactly zero.
pub const LOG_DELTA1_FLOOR: f64 = -700.0;

/// Square patch of side `2·half_width + 1` centered on its pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGeometry {
    pub half_width: usize,
}

impl PatchGeometry {
    pub fn new(half_width: usize) -> Self {
        Self { half_width }
    }

    pub fn side(&self) -> usize {
        2 * self.half_width + 1
    }

    pub fn len(&self) -> usize {
        self.side() * self.side()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Offsets `(d_row, d_col)` in row-major order.
    pub fn offsets(&self) -> impl Iterator<Item = (isize, isize)> {
        let h = self.half_width as isize;
        (-h..=h).flat_map(move |r| (-h..=h).map(move |c| (r, c)))
    }
}

/// Gaussian weights over a patch, `g(o) = exp(−|o|²/(2σ²))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianWindow {
    sigma: f64,
    geometry: PatchGeometry,
    weights: Vec<f64>,
}

impl GaussianWindow {
    pub fn new(sigma: f64, geometry: PatchGeometry) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::param("sigma", "must be positive"));
        }
        let weights = geometry.offsets().map(|(r, c)| gaussian_weight(sigma, (r * r + c * c) as f64)).collect();
        Ok(Self { sigma, geometry, weights })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn geometry(&self) -> PatchGeometry {
        self.geometry
    }

    /// Weights in the order of [`PatchGeometry::offsets`].
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

#[inline]
pub fn gaussian_weight(sigma: f64, squared_distance: f64) -> f64 {
    (-squared_distance / (2.0 * sigma * sigma)).exp()
}

/// `g(q) = δ¹ / (B/A)^{3/2}` as a function of `q = C/A`.
#[inline]
fn likelihood_shape(q: f64, one_minus_q: f64) -> f64 {
    if q < 0.01 {
        // Taylor series; the closed form cancels catastrophically here.
        const K: [f64; 8] =
            [4.0 / 3.0, 4.0 / 5.0, 9.0 / 14.0, 5.0 / 9.0, 175.0 / 352.0, 189.0 / 416.0, 539.0 / 1280.0, 429.0 / 1088.0];
        K.iter().rev().fold(0.0, |acc, k| acc * q + k)
    } else {
        let s = q.sqrt();
        ((1.0 + q) * (q / one_minus_q).sqrt() - s.asin()) / (q * s)
    }
}

/// `(C/A, 1 − C/A)` with `C` clamped to `[EPS_C, A(1 − EPS_C)]`; the upper
/// clamp pins `1 − q` exactly.
#[inline]
fn clamped_ratio(c: f64, a: f64) -> (f64, f64) {
    if c >= a * (1.0 - EPS_C) {
        (1.0 - EPS_C, EPS_C)
    } else {
        let c = c.max(EPS_C);
        (c / a, (a - c) / a)
    }
}

/// `log δ¹` from per-pixel quantities: the power sums `|u1|²+|u2|²`, the
/// interferogram values `z = u1·conj(u2)` and `log |z|` of the two pixels.
#[inline]
pub fn log_delta1_from_parts(
    power_x: f64,
    power_y: f64,
    z_x: Complex64,
    z_y: Complex64,
    log_abs_z_x: f64,
    log_abs_z_y: f64,
) -> f64 {
    let sqrt_a = power_x + power_y;
    let a = sqrt_a * sqrt_a;
    if !(a > 0.0) {
        return LOG_DELTA1_FLOOR;
    }
    let c = 4.0 * (z_x + z_y).norm_sqr();
    let (q, one_minus_q) = clamped_ratio(c, a);
    let v = 1.5 * (log_abs_z_x + log_abs_z_y - 2.0 * sqrt_a.ln()) + likelihood_shape(q, one_minus_q).ln();
    v.max(LOG_DELTA1_FLOOR)
}

/// Likelihood that two pixels share intensity, coherence and phase, from
/// the master/slave values at `x` and `y`.
pub fn delta1_pixel(u1x: Complex64, u2x: Complex64, u1y: Complex64, u2y: Complex64) -> Result<f64> {
    let a1x = u1x.norm();
    let a2x = u2x.norm();
    let a1y = u1y.norm();
    let a2y = u2y.norm();
    let sum_sq = a1x * a1x + a2x * a2x + a1y * a1y + a2y * a2y;
    if sum_sq == 0.0 {
        return Err(Error::Undefined("delta1 with all amplitudes zero"));
    }
    let a = sum_sq * sum_sq;
    let b = a1x * a2x * a1y * a2y;
    let zx = u1x * u2x.conj();
    let zy = u1y * u2y.conj();
    let (q, one_minus_q) = clamped_ratio(4.0 * (zx + zy).norm_sqr(), a);
    Ok((b / a).powf(1.5) * likelihood_shape(q, one_minus_q))
}

/// Symmetric Kullback–Leibler divergence between two zero-mean circular
/// Gaussian pixel pairs described by intensity, coherence and phase.
pub fn delta2_pixel(ix: f64, gx: f64, phx: f64, iy: f64, gy: f64, phy: f64) -> Result<f64> {
    if !(ix > 0.0 && iy > 0.0) {
        return Err(Error::param("intensity", "must be positive"));
    }
    let (a, b) = delta2_parts(ix, gx, iy, gy);
    Ok(delta2_from_parts(a, b, (phx - phy).cos()))
}

/// Splits δ² into `(4/π)(a − b·cos Δφ − 2)`; returns `(a, b)`.
#[inline]
pub fn delta2_parts(ix: f64, gx: f64, iy: f64, gy: f64) -> (f64, f64) {
    let gx = gx.clamp(0.0, MAX_GUIDE_COHERENCE);
    let gy = gy.clamp(0.0, MAX_GUIDE_COHERENCE);
    let ratio = ix / iy;
    let a = ratio / (1.0 - gy * gy) + 1.0 / (ratio * (1.0 - gx * gx));
    (a, gx * gy * a)
}

#[inline]
pub fn delta2_from_parts(a: f64, b: f64, cos_dphi: f64) -> f64 {
    (4.0 / PI * (a - b * cos_dphi - 2.0)).max(0.0)
}

fn require_inside(shape: crate::raster::GridShape, p: (usize, usize)) -> Result<()> {
    if p.0 >= shape.rows || p.1 >= shape.cols {
        return Err(Error::param("pixel", format!("{p:?} outside {shape}")));
    }
    Ok(())
}

/// Stage-1 patch dissimilarity `−Σ log δ¹` over the patch offsets valid for
/// both centers, rescaled to the full patch size at raster borders.
pub fn patch_dissim_stage1(pair: &SlcPair, x: (usize, usize), y: (usize, usize), geom: PatchGeometry) -> Result<f64> {
    let shape = pair.shape();
    require_inside(shape, x)?;
    require_inside(shape, y)?;
    let m = pair.master();
    let s = pair.slave();
    let mut sum = 0.0;
    let mut count = 0usize;
    for (dr, dc) in geom.offsets() {
        let (Some(px), Some(py)) = (shape.offset(x.0, x.1, dr, dc), shape.offset(y.0, y.1, dr, dc)) else {
            continue;
        };
        let v = match delta1_pixel(m.at(px.0, px.1), s.at(px.0, px.1), m.at(py.0, py.1), s.at(py.0, py.1)) {
            Ok(d) if d > 0.0 => d.ln().max(LOG_DELTA1_FLOOR),
            _ => LOG_DELTA1_FLOOR,
        };
        sum -= v;
        count += 1;
    }
    Ok(sum * geom.len() as f64 / count as f64)
}

/// Stage-2 patch dissimilarity: Gaussian-weighted mean of δ² on the
/// guidance estimates. With a fringe field, the linear phase trend at `x` is
/// removed from the candidate patch before comparison.
pub fn patch_dissim_stage2(
    guide: &EstimateBundle,
    x: (usize, usize),
    y: (usize, usize),
    win: &GaussianWindow,
    fringe: Option<&FringeField>,
) -> Result<f64> {
    let shape = guide.shape();
    require_inside(shape, x)?;
    require_inside(shape, y)?;
    let trend = match fringe {
        Some(f) => {
            let (f_r, f_az) = f.at(x.0, x.1);
            (y.0 as f64 - x.0 as f64) * f_az + (y.1 as f64 - x.1 as f64) * f_r
        }
        None => 0.0,
    };
    let (mut num, mut den) = (0.0, 0.0);
    for ((dr, dc), g) in win.geometry().offsets().zip(win.weights()) {
        let (Some(px), Some(py)) = (shape.offset(x.0, x.1, dr, dc), shape.offset(y.0, y.1, dr, dc)) else {
            continue;
        };
        let phy = (guide.phase.at(py.0, py.1) - trend).rem_euclid(2.0 * PI);
        let d = delta2_pixel(
            guide.intensity.at(px.0, px.1).max(f64::MIN_POSITIVE),
            guide.coherence.at(px.0, px.1),
            guide.phase.at(px.0, px.1),
            guide.intensity.at(py.0, py.1).max(f64::MIN_POSITIVE),
            guide.coherence.at(py.0, py.1),
            phy,
        )?;
        num += g * d;
        den += g;
    }
    Ok(num / den)
}

/// `w = exp(−Δ/(h·scale))`, normalized to unit sum. Infinite
/// dissimilarities get zero weight.
pub fn weights_from_dissim(dissim: &[f64], h: f64, scale: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::param("h", "must be positive"));
    }
    if !(scale > 0.0) {
        return Err(Error::param("scale", "must be positive"));
    }
    if dissim.iter().any(|d| d.is_nan()) {
        return Err(Error::param("dissim", "NaN dissimilarity"));
    }
    let min = dissim.iter().copied().filter(|d| d.is_finite()).fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::param("dissim", "no finite dissimilarity"));
    }
    let hs = h * scale;
    let mut w: Vec<f64> = dissim.iter().map(|&d| if d.is_finite() { (-(d - min) / hs).exp() } else { 0.0 }).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{ComplexRaster, GridShape, RealRaster, Semantic};
    use crate::simulate::{make_ramp, sample_slc_pair, SceneSpec, SimSeed};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn polar(a: f64, p: f64) -> Complex64 {
        Complex64::from_polar(a, p)
    }

    /// δ¹ in the printed closed form, with the clamp, no rearrangement.
    fn delta1_closed_form(a1x: f64, a2x: f64, a1y: f64, a2y: f64, dphi: f64) -> f64 {
        let a = (a1x * a1x + a2x * a2x + a1y * a1y + a2y * a2y).powi(2);
        let b = a1x * a2x * a1y * a2y;
        let cc = 4.0 * (a1x * a1x * a2x * a2x + a1y * a1y * a2y * a2y + 2.0 * b * dphi.cos());
        let cc = cc.max(EPS_C).min(a * (1.0 - EPS_C));
        (b / cc).powf(1.5) * ((a + cc) / a * (cc / (a - cc)).sqrt() - (cc / a).sqrt().asin())
    }

    #[test]
    fn delta1_matches_high_precision_values() {
        // mpmath, 50 digits
        let v = delta1_pixel(polar(0.8, 0.0), polar(1.3, -0.4), polar(1.1, 0.0), polar(0.6, 1.2)).unwrap();
        assert!((v - 0.017_172_701_314_976_59).abs() < 1e-15, "{v}");
        let v = delta1_pixel(polar(2.0, 0.0), polar(0.5, -2.5), polar(1.5, 0.0), polar(1.0, -0.1)).unwrap();
        assert!((v - 0.006_079_586_268_849_093).abs() < 1e-15, "{v}");
    }

    #[test]
    fn delta1_opposite_phase_hits_lower_clamp() {
        let v = delta1_pixel(c(1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0)).unwrap();
        // mpmath at C = 1e−12 (limit (4/3)(B/A)^{3/2} = 1/48)
        assert!((v - 0.020_833_333_333_334_115).abs() < 1e-15, "{v}");
    }

    #[test]
    fn delta1_identical_pixels_hit_upper_clamp() {
        let one = c(1.0, 0.0);
        let v = delta1_pixel(one, one, one, one).unwrap();
        assert!(v.is_finite());
        assert!((v - 31_249.975_456_338_644).abs() < 1e-6 * v, "{v}");
        // the unrearranged form loses digits to 1 − q here
        assert!((v - delta1_closed_form(1.0, 1.0, 1.0, 1.0, 0.0)).abs() < 1e-4 * v);
    }

    #[test]
    fn delta1_all_zero_is_undefined() {
        let z = c(0.0, 0.0);
        assert!(delta1_pixel(z, z, z, z).is_err());
        assert_eq!(delta1_pixel(z, c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn series_and_closed_form_agree_at_switch() {
        let q: f64 = 0.01;
        let s = q.sqrt();
        let closed = ((1.0 + q) * (q / (1.0 - q)).sqrt() - s.asin()) / (q * s);
        let below = q - 1e-15;
        assert!((likelihood_shape(below, 1.0 - below) - closed).abs() < 1e-12);
    }

    #[test]
    fn delta2_values() {
        assert_eq!(delta2_pixel(2.0, 0.5, 0.3, 2.0, 0.5, 0.3).unwrap(), 0.0);
        let v = delta2_pixel(1.0, 0.7, PI, 1.0, 0.7, 0.0).unwrap();
        assert!((v - 4.893_234_328_786_115).abs() < 1e-12);
        assert!(delta2_pixel(0.0, 0.5, 0.0, 1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn delta2_monotone_in_phase_difference() {
        for g in [0.2, 0.5, 0.7, 0.95] {
            let mut prev = -1.0;
            for k in 0..=100 {
                let d = delta2_pixel(1.0, g, 0.0, 1.0, g, PI * k as f64 / 100.0).unwrap();
                assert!(d >= prev);
                prev = d;
            }
        }
    }

    fn noisy_pair(rows: usize, cols: usize, seed: u64) -> SlcPair {
        let scene = make_ramp(GridShape::new(rows, cols).unwrap(), 0.2, 0.1, 0.7).unwrap();
        sample_slc_pair(&scene, SimSeed(seed)).unwrap()
    }

    #[test]
    fn stage1_single_pixel_patch_and_self_comparison() {
        let pair = noisy_pair(9, 9, 4);
        let m = pair.master();
        let s = pair.slave();
        let x = (4, 4);
        let y = (2, 6);
        let d = patch_dissim_stage1(&pair, x, y, PatchGeometry::new(0)).unwrap();
        let single = delta1_pixel(m.at(4, 4), s.at(4, 4), m.at(2, 6), s.at(2, 6)).unwrap();
        assert!((d + single.ln()).abs() < 1e-12);

        // self comparison is the sum of the self-pair terms
        let geom = PatchGeometry::new(1);
        let self_d = patch_dissim_stage1(&pair, x, x, geom).unwrap();
        let mut expect = 0.0;
        for (dr, dc) in geom.offsets() {
            let (r, cc) = ((4 + dr) as usize, (4 + dc) as usize);
            expect -= delta1_pixel(m.at(r, cc), s.at(r, cc), m.at(r, cc), s.at(r, cc)).unwrap().ln();
        }
        assert!((self_d - expect).abs() < 1e-9);
    }

    #[test]
    fn stage1_self_comparison_is_extremal_for_balanced_amplitudes() {
        // |u1| = |u2| everywhere puts every self term at the upper clamp
        let shape = GridShape::new(7, 7).unwrap();
        let pair = noisy_pair(7, 7, 8);
        let m = ComplexRaster::new(shape, pair.master().values().iter().map(|u| u / u.norm()).collect()).unwrap();
        let s = ComplexRaster::new(shape, pair.slave().values().iter().map(|u| u / u.norm()).collect()).unwrap();
        let pair = SlcPair::new(m, s).unwrap();
        let geom = PatchGeometry::new(1);
        let x = (3, 3);
        let self_d = patch_dissim_stage1(&pair, x, x, geom).unwrap();
        for r in 1..6 {
            for cc in 1..6 {
                assert!(self_d <= patch_dissim_stage1(&pair, x, (r, cc), geom).unwrap());
            }
        }
    }

    #[test]
    fn stage1_constant_scene_sums_nine_terms() {
        let shape = GridShape::new(5, 5).unwrap();
        let u1 = ComplexRaster::new(shape, vec![c(1.0, 0.0); 25]).unwrap();
        let u2 = ComplexRaster::new(shape, vec![polar(2.0, -0.4); 25]).unwrap();
        let pair = SlcPair::new(u1, u2).unwrap();
        let single = delta1_pixel(c(1.0, 0.0), polar(2.0, -0.4), c(1.0, 0.0), polar(2.0, -0.4)).unwrap();
        let d = patch_dissim_stage1(&pair, (2, 2), (1, 3), PatchGeometry::new(1)).unwrap();
        assert!((d + 9.0 * single.ln()).abs() < 1e-12);
        // clipped at the border: 4 valid offsets rescaled to 9
        let corner = patch_dissim_stage1(&pair, (0, 0), (0, 0), PatchGeometry::new(1)).unwrap();
        assert!((corner + 9.0 * single.ln()).abs() < 1e-12);
    }

    fn bundle_from(phase: Vec<f64>, intensity: Vec<f64>, coherence: Vec<f64>, shape: GridShape) -> EstimateBundle {
        EstimateBundle::new(
            RealRaster::new(shape, Semantic::Phase, phase).unwrap(),
            RealRaster::new(shape, Semantic::Intensity, intensity).unwrap(),
            RealRaster::new(shape, Semantic::Coherence, coherence).unwrap(),
            RealRaster::filled(shape, Semantic::Enl, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn stage2_self_uniform_limit_and_ramp_compensation() {
        let shape = GridShape::new(9, 9).unwrap();
        let pair = noisy_pair(9, 9, 21);
        let phase: Vec<f64> = pair.interferogram().values().iter().map(|z| z.arg()).collect();
        let inten: Vec<f64> = pair.master().values().iter().map(|u| u.norm_sqr() + 0.1).collect();
        let coh: Vec<f64> = (0..81).map(|k| 0.3 + 0.6 * ((k * 37 % 81) as f64 / 81.0)).collect();
        let guide = bundle_from(phase, inten, coh, shape);
        let geom = PatchGeometry::new(1);
        let wide = GaussianWindow::new(1e9, geom).unwrap();
        assert!(patch_dissim_stage2(&guide, (4, 4), (4, 4), &wide, None).unwrap().abs() < 1e-12);

        let (x, y) = ((4, 4), (3, 6));
        let mut mean = 0.0;
        for (dr, dc) in geom.offsets() {
            let px = ((4 + dr) as usize, (4 + dc) as usize);
            let py = ((3 + dr) as usize, (6 + dc) as usize);
            mean += delta2_pixel(
                guide.intensity.at(px.0, px.1),
                guide.coherence.at(px.0, px.1),
                guide.phase.at(px.0, px.1),
                guide.intensity.at(py.0, py.1),
                guide.coherence.at(py.0, py.1),
                guide.phase.at(py.0, py.1),
            )
            .unwrap()
                / 9.0;
        }
        let d = patch_dissim_stage2(&guide, x, y, &wide, None).unwrap();
        assert!((d - mean).abs() < 1e-12 * mean.max(1.0));

        // noise-free ramp with its exact fringe field
        let (fr, faz) = (0.45, -0.3);
        let ramp = make_ramp(shape, fr, faz, 0.9).unwrap();
        let guide = bundle_from(ramp.true_phase.values().to_vec(), vec![1.0; 81], vec![0.9; 81], shape);
        let field = FringeField::constant(shape, fr, faz);
        let win = GaussianWindow::new(2.0, PatchGeometry::new(2)).unwrap();
        for r in 0..9 {
            for cc in 0..9 {
                let d = patch_dissim_stage2(&guide, (4, 4), (r, cc), &win, Some(&field)).unwrap();
                assert!(d < 1e-9, "{d} at {r},{cc}");
            }
        }
    }

    #[test]
    fn weight_kernel_values() {
        let w = weights_from_dissim(&[3.0, 3.0, 3.0, 3.0], 2.0, 1.5).unwrap();
        assert!(w.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let w = weights_from_dissim(&[0.0, f64::INFINITY], 2.0, 1.0).unwrap();
        assert_eq!(w, vec![1.0, 0.0]);
        let w = weights_from_dissim(&[0.0, 6.0], 2.0, 3.0).unwrap();
        assert!((w[0] - 0.731_058_578_630_004_9).abs() < 1e-15);
        assert!((w[1] - 0.268_941_421_369_995_1).abs() < 1e-15);
        assert!(weights_from_dissim(&[1.0], 0.0, 1.0).is_err());
        assert!(weights_from_dissim(&[f64::INFINITY], 1.0, 1.0).is_err());
    }

    #[test]
    fn gaussian_window_shape() {
        let w = GaussianWindow::new(1.5, PatchGeometry::new(5)).unwrap();
        assert_eq!(w.weights().len(), 121);
        assert_eq!(w.weights()[60], 1.0);
        assert!(w.weights().iter().all(|&g| g > 0.0 && g <= 1.0));
        assert!(GaussianWindow::new(0.0, PatchGeometry::new(1)).is_err());
    }

    proptest! {
        #[test]
        fn delta1_exchange_symmetry(
            a in prop::collection::vec(0.05f64..3.0, 4),
            p in prop::collection::vec(-PI..PI, 4),
        ) {
            let u = |k: usize| polar(a[k], p[k]);
            let xy = delta1_pixel(u(0), u(1), u(2), u(3)).unwrap();
            let yx = delta1_pixel(u(2), u(3), u(0), u(1)).unwrap();
            prop_assert!((xy - yx).abs() <= 1e-12 * xy.abs().max(1e-300));
            let parts = log_delta1_from_parts(
                a[0] * a[0] + a[1] * a[1],
                a[2] * a[2] + a[3] * a[3],
                u(0) * u(1).conj(),
                u(2) * u(3).conj(),
                (a[0] * a[1]).ln(),
                (a[2] * a[3]).ln(),
            );
            prop_assert!((parts - xy.ln()).abs() < 1e-10);
        }

        #[test]
        fn delta2_nonnegative_symmetric_and_invariant(
            ix in 0.1f64..10.0, iy in 0.1f64..10.0,
            gx in 0.0f64..0.99, gy in 0.0f64..0.99,
            px in -PI..PI, py in -PI..PI,
            k in 0.01f64..100.0, shift in -PI..PI,
        ) {
            let d = delta2_pixel(ix, gx, px, iy, gy, py).unwrap();
            prop_assert!(d >= 0.0);
            let r = delta2_pixel(iy, gy, py, ix, gx, px).unwrap();
            prop_assert!((d - r).abs() <= 1e-9 * d.max(1.0));
            let t = delta2_pixel(k * ix, gx, px + shift, k * iy, gy, py + shift).unwrap();
            prop_assert!((d - t).abs() <= 1e-9 * d.max(1.0));
        }

        #[test]
        fn stage1_patch_symmetry(seed in 0u64..1000, x in (0usize..8, 0usize..8), y in (0usize..8, 0usize..8)) {
            let pair = noisy_pair(8, 8, seed);
            let geom = PatchGeometry::new(1);
            let xy = patch_dissim_stage1(&pair, x, y, geom).unwrap();
            let yx = patch_dissim_stage1(&pair, y, x, geom).unwrap();
            prop_assert!((xy - yx).abs() <= 1e-9 * xy.abs().max(1.0));
        }

        #[test]
        fn weights_normalized(d in prop::collection::vec(-50.0f64..500.0, 1..60), h in 0.1f64..10.0) {
            let w = weights_from_dissim(&d, h, 1.0).unwrap();
            prop_assert!(w.iter().all(|&v| v >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn homogeneous_scene_helper_is_valid() {
        let shape = GridShape::new(3, 3).unwrap();
        assert!(SceneSpec::homogeneous(RealRaster::filled(shape, Semantic::Phase, 0.0).unwrap(), 1.0, 0.5).is_ok());
    }
}
