use std::f64::consts::PI;

use num_complex::Complex64;

use super::*;
use crate::adaptivity::{eta_to_sigma, heterogeneity_map};
use crate::raster::{wrap_phase, ComplexRaster, GridShape};
use crate::similarity::{patch_dissim_stage2, GaussianWindow};
use crate::simulate::{make_fractal, make_ramp, sample_slc_pair, FractalSpec, SceneSpec, SimSeed};

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

fn homogeneous(rows: usize, cols: usize, phase: f64, coherence: f64, seed: u64) -> SlcPair {
    let shape = GridShape::new(rows, cols).unwrap();
    let scene =
        SceneSpec::homogeneous(RealRaster::filled(shape, Semantic::Phase, phase).unwrap(), 1.0, coherence).unwrap();
    sample_slc_pair(&scene, SimSeed(seed)).unwrap()
}

fn fractal_pair(side: usize, seed: u64) -> SlcPair {
    let shape = GridShape::new(side, side).unwrap();
    let spec = FractalSpec { levels: 6, ..FractalSpec::default() };
    let scene = make_fractal(shape, &spec, SimSeed(seed)).unwrap();
    sample_slc_pair(&scene, SimSeed(seed + 1)).unwrap()
}

/// Direct quadruple loop over centers, patches and offsets.
fn oracle_aggregate(
    pair: &SlcPair,
    params: &FilterParams,
    weights: &[Vec<f64>],
    patch_half: usize,
    patch_gain: impl Fn((usize, usize), (isize, isize)) -> f64,
    fringe: Option<&FringeField>,
) -> (Vec<Complex64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let shape = pair.shape();
    let side = 2 * params.search_half + 1;
    let h = params.search_half as isize;
    let ph = patch_half as isize;
    let looks: Vec<f64> = weights.iter().map(|w| 1.0 / w.iter().map(|v| v * v).sum::<f64>()).collect();
    let (mut zs, mut is, mut cs, mut ls) = (vec![], vec![], vec![], vec![]);
    for xr in 0..shape.rows {
        for xc in 0..shape.cols {
            let (mut z, mut i, mut p1, mut p2, mut den) = (Complex64::new(0.0, 0.0), 0.0, 0.0, 0.0, 0.0);
            let (mut enl_num, mut enl_den) = (0.0, 0.0);
            for or in -ph..=ph {
                for oc in -ph..=ph {
                    let Some(p) = shape.offset(xr, xc, -or, -oc) else { continue };
                    let pi = shape.index(p.0, p.1);
                    let gain = looks[pi] * patch_gain(p, (or, oc));
                    enl_num += gain * looks[pi];
                    enl_den += gain;
                    for k in 0..side * side {
                        let (dr, dc) = (k as isize / side as isize - h, k as isize % side as isize - h);
                        let Some(y) = shape.offset(xr, xc, dr, dc) else { continue };
                        let coef = gain * weights[pi][k];
                        let (u1, u2) = (pair.master().at(y.0, y.1), pair.slave().at(y.0, y.1));
                        let mut v = u1 * u2.conj();
                        if let Some(f) = fringe {
                            let (f_r, f_az) = f.at(xr, xc);
                            v *= Complex64::from_polar(1.0, -(dr as f64 * f_az + dc as f64 * f_r));
                        }
                        z += v * coef;
                        i += coef * 0.5 * (u1.norm_sqr() + u2.norm_sqr());
                        p1 += coef * u1.norm_sqr();
                        p2 += coef * u2.norm_sqr();
                        den += coef;
                    }
                }
            }
            let zhat = z / den;
            zs.push(zhat);
            is.push(i / den);
            cs.push(zhat.norm() / ((p1 / den) * (p2 / den)).sqrt());
            ls.push(enl_num / enl_den);
        }
    }
    (zs, is, cs, ls)
}

fn assert_bundle_matches(b: &EstimateBundle, oracle: &(Vec<Complex64>, Vec<f64>, Vec<f64>, Vec<f64>)) {
    for (k, z) in oracle.0.iter().enumerate() {
        let dphi = wrap_phase(b.phase.values()[k] - z.arg()).abs();
        assert!(dphi < 1e-12, "phase at {k}: {dphi}");
        assert!(close(b.intensity.values()[k], oracle.1[k], 1e-12), "intensity at {k}");
        assert!(close(b.coherence.values()[k], oracle.2[k], 1e-12), "coherence at {k}");
        assert!(close(b.enl.values()[k], oracle.3[k], 1e-12), "enl at {k}");
    }
}

fn small_params() -> FilterParams {
    FilterParams { search_half: 4, ..FilterParams::default() }
}

#[test]
fn enl_examples() {
    assert_eq!(enl_from_weights(&[0.0, 1.0, 0.0]), 1.0);
    assert!((enl_from_weights(&[0.2; 5]) - 5.0).abs() < 1e-12);
    assert!((enl_from_weights(&[0.5, 0.25, 0.25]) - 8.0 / 3.0).abs() < 1e-12);
}

#[test]
fn params_validation() {
    assert!(FilterParams::default().validate().is_ok());
    let bad = [
        FilterParams { h1: 0.0, ..FilterParams::default() },
        FilterParams { h2: -1.0, ..FilterParams::default() },
        FilterParams { search_half: 1, ..FilterParams::default() },
        FilterParams { fringe_fft: 16, ..FilterParams::default() },
        FilterParams { xi_coeffs: Some([-1.0, 0.0, 0.0]), ..FilterParams::default() },
    ];
    for p in bad {
        assert!(p.validate().is_err(), "{p:?}");
    }
}

#[test]
fn stage1_matches_direct_summation() {
    let pair = fractal_pair(16, 5);
    let params = FilterParams::default();
    let out = stage1_filter(&pair, &params).unwrap();
    let shape = pair.shape();
    let weights: Vec<Vec<f64>> =
        (0..shape.len()).map(|i| stage1_weights(&pair, &params, (i / shape.cols, i % shape.cols)).unwrap()).collect();
    for w in &weights {
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let oracle = oracle_aggregate(&pair, &params, &weights, params.patch_half_stage1, |_, _| 1.0, None);
    assert_bundle_matches(&out.guidance, &oracle);
    assert!(out.guidance.enl.values().iter().all(|l| (1.0..=441.0).contains(l)));

    let eta = heterogeneity_map(&pair, |r, c| weights[shape.index(r, c)].clone(), params.search_half).unwrap();
    for (a, b) in out.heterogeneity.eta.values().iter().zip(eta.eta.values()) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn stage2_matches_direct_summation() {
    let pair = fractal_pair(16, 9);
    let params = FilterParams::default();
    let shape = pair.shape();
    let s1 = stage1_filter(&pair, &params).unwrap();
    // spread the window widths over their full range
    let eta = RealRaster::from_fn(shape, Semantic::Heterogeneity, |r, c| ((r * 7 + c * 3) % 10) as f64 / 10.5).unwrap();
    let het = HeterogeneityMap::new(eta).unwrap();
    let fringe = FringeField::constant(shape, 0.4, -0.25);
    let xi = XiModel::new([0.5, 0.8, 0.3]).unwrap();
    let out = stage2_filter(&pair, &s1.guidance, &het, &fringe, &params, xi).unwrap();

    let geom = PatchGeometry::new(params.patch_half_stage2);
    let h = params.search_half as isize;
    let sigma = het.sigma();
    let weights: Vec<Vec<f64>> = (0..shape.len())
        .map(|i| {
            let p = (i / shape.cols, i % shape.cols);
            let sp = sigma.at(p.0, p.1);
            let win = GaussianWindow::new(sp, geom).unwrap();
            let mut dis = vec![];
            for dr in -h..=h {
                for dc in -h..=h {
                    dis.push(match shape.offset(p.0, p.1, dr, dc) {
                        Some(y) => patch_dissim_stage2(&s1.guidance, p, y, &win, Some(&fringe)).unwrap(),
                        None => f64::INFINITY,
                    });
                }
            }
            weights_from_dissim(&dis, params.h2, xi.eval(1.0 / sp)).unwrap()
        })
        .collect();
    for w in &weights {
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let gain = |p: (usize, usize), o: (isize, isize)| {
        let s = sigma.at(p.0, p.1);
        (-((o.0 * o.0 + o.1 * o.1) as f64) / (2.0 * s * s)).exp()
    };
    let oracle = oracle_aggregate(&pair, &params, &weights, params.patch_half_stage2, gain, Some(&fringe));
    assert_bundle_matches(&out, &oracle);
}

#[test]
fn patch_mean_identity_and_ramp_coherent_sum() {
    let pair = homogeneous(12, 12, 0.3, 0.5, 3);
    let side = 9;
    let mut w = vec![0.0; side * side];
    w[side * side / 2] = 1.0;
    let geom = PatchGeometry::new(1);
    let est = patch_weighted_mean(&pair, &w, 4, (6, 6), geom, None).unwrap();
    for ((or, oc), z) in geom.offsets().zip(&est.z) {
        let q = ((6 + or) as usize, (6 + oc) as usize);
        let expect = pair.master().at(q.0, q.1) * pair.slave().at(q.0, q.1).conj();
        assert!((z.unwrap() - expect).norm() < 1e-15);
    }
    assert_eq!(est.enl, 1.0);

    let shape = GridShape::new(20, 20).unwrap();
    let ramp = sample_slc_pair(&make_ramp(shape, 0.6, -0.35, 1.0).unwrap(), SimSeed(1)).unwrap();
    let norm = ComplexRaster::new(shape, ramp.master().values().iter().map(|v| v / v.norm()).collect()).unwrap();
    let ramp = SlcPair::new(
        norm.clone(),
        ComplexRaster::new(
            shape,
            ramp.interferogram().values().iter().zip(norm.values()).map(|(z, u)| u * z.conj() / z.norm()).collect(),
        )
        .unwrap(),
    )
    .unwrap();
    let raw: Vec<f64> = (0..side * side).map(|k| 1.0 + (k % 7) as f64).collect();
    let total: f64 = raw.iter().sum();
    let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let fringe = FringeField::constant(shape, 0.6, -0.35);
    let est = patch_weighted_mean(&ramp, &w, 4, (10, 10), geom, Some(&fringe)).unwrap();
    let truth = ramp.interferogram();
    for ((or, oc), z) in geom.offsets().zip(&est.z) {
        let z = z.unwrap();
        let q = ((10 + or) as usize, (10 + oc) as usize);
        assert!((z.norm() - 1.0).abs() < 1e-12);
        assert!(wrap_phase(z.arg() - truth.at(q.0, q.1).arg()).abs() < 1e-12);
    }
}

#[test]
fn constant_noise_free_scene_is_reproduced() {
    let shape = GridShape::new(32, 32).unwrap();
    let pair = SlcPair::new(
        ComplexRaster::from_fn(shape, |_, _| Complex64::new(1.0, 0.0)).unwrap(),
        ComplexRaster::from_fn(shape, |_, _| Complex64::from_polar(1.0, -1.1)).unwrap(),
    )
    .unwrap();
    let out = stage1_filter(&pair, &FilterParams::default()).unwrap();
    for v in out.guidance.phase.values() {
        assert!((v - 1.1).abs() < 1e-12);
    }
    assert!((out.guidance.enl.at(16, 16) - 441.0).abs() < 1e-9);
    assert!(out.guidance.coherence.values().iter().all(|g| (g - 1.0).abs() < 1e-12));

    let full = nlswag(&pair, &FilterParams::default()).unwrap();
    for v in full.estimate.phase.values() {
        assert!((v - 1.1).abs() < 1e-12);
    }
    assert!((full.estimate.enl.at(16, 16) - 441.0).abs() < 1e-6);
}

#[test]
fn stage2_reproduces_noise_free_ramp() {
    let shape = GridShape::new(40, 40).unwrap();
    let (f_r, f_az) = (0.7, -0.3);
    let pair = sample_slc_pair(&make_ramp(shape, f_r, f_az, 1.0).unwrap(), SimSeed(2)).unwrap();
    let params = FilterParams::default();
    let s1 = stage1_filter(&pair, &params).unwrap();
    let fringe = FringeField::constant(shape, f_r, f_az);
    let xi = select_xi(&params, &s1).unwrap();
    let out = stage2_filter(&pair, &s1.guidance, &s1.heterogeneity, &fringe, &params, xi).unwrap();
    let truth = pair.interferogram().phase();
    for r in 12..28 {
        for c in 12..28 {
            let e = wrap_phase(out.phase.at(r, c) - truth.at(r, c)).abs();
            assert!(e < 1e-6, "({r},{c}) {e}");
        }
    }
}

#[test]
fn single_pixel_raster_is_trivial() {
    let pair = homogeneous(1, 1, -0.4, 0.3, 8);
    let out = nlswag(&pair, &FilterParams::default()).unwrap();
    let z = pair.interferogram().at(0, 0);
    assert!((out.estimate.phase.at(0, 0) - z.arg()).abs() < 1e-15);
    assert_eq!(out.estimate.enl.at(0, 0), 1.0);
    assert_eq!(out.heterogeneity.eta.at(0, 0), 0.0);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let pair = fractal_pair(40, 21);
    let params = small_params();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| nlswag(&pair, &params).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a, b);
}

#[test]
fn global_phase_offset_rotates_output() {
    let pair = fractal_pair(32, 13);
    let c = 1.3;
    let rot = Complex64::from_polar(1.0, c);
    let rotated = SlcPair::new(
        ComplexRaster::new(pair.shape(), pair.master().values().iter().map(|v| v * rot).collect()).unwrap(),
        pair.slave().clone(),
    )
    .unwrap();
    let params = small_params();
    let a = nlswag(&pair, &params).unwrap().estimate;
    let b = nlswag(&rotated, &params).unwrap().estimate;
    for (x, y) in a.phase.values().iter().zip(b.phase.values()) {
        assert!(wrap_phase(y - x - c).abs() < 1e-9);
    }
}

/// Output ENL is roughly flat in coherence: ξ is calibrated per level so
/// the dissimilarity spread, and with it the weight spread, stays similar.
#[test]
fn looks_are_comparable_across_coherence() {
    let params = small_params();
    let mean_enl = |g| {
        let pair = homogeneous(32, 32, 0.0, g, 4);
        nlswag(&pair, &params).unwrap().estimate.enl.mean()
    };
    let ratio = mean_enl(0.9) / mean_enl(0.5);
    assert!((0.6..1.6).contains(&ratio), "{ratio}");
}

#[test]
fn output_invariants_on_fractal_scene() {
    let pair = fractal_pair(48, 2);
    let params = FilterParams::default();
    let out = nlswag(&pair, &params).unwrap();
    let max_enl = params.search_len() as f64;
    for b in [&out.stage1, &out.estimate] {
        assert!(b.coherence.values().iter().all(|g| (0.0..=1.0).contains(g)));
        assert!(b.enl.values().iter().all(|l| (1.0..=max_enl).contains(l)));
        assert!(b.phase.values().iter().all(|p| *p > -PI && *p <= PI));
    }
    assert!(out.heterogeneity.eta.values().iter().all(|e| (0.0..1.0).contains(e)));
}

#[test]
fn stage1_reduces_single_look_noise() {
    let gamma = 0.7;
    let pair = homogeneous(256, 256, 0.0, gamma, 77);
    let out = stage1_filter(&pair, &FilterParams::default()).unwrap();
    let circ_std = |v: &[f64]| {
        let (s, c) = v.iter().fold((0.0, 0.0), |(s, c), p| (s + p.sin(), c + p.cos()));
        let r = (s * s + c * c).sqrt() / v.len() as f64;
        (-2.0 * r.ln()).sqrt()
    };
    let input = circ_std(pair.interferogram().phase().values());
    let expected = crate::adaptivity::SigmaTable::global().variance(gamma).sqrt();
    assert!((input - expected).abs() < 0.1 * expected);
    let output = circ_std(out.guidance.phase.values());
    assert!(output * 4.0 < input, "{output} vs {input}");
}

#[test]
fn eta_to_sigma_range_in_pipeline() {
    let het = HeterogeneityMap::new(
        RealRaster::from_fn(GridShape::new(2, 2).unwrap(), Semantic::Heterogeneity, |r, c| (r + 2 * c) as f64 * 0.3)
            .unwrap(),
    )
    .unwrap();
    let s = het.sigma();
    for (e, v) in het.eta.values().iter().zip(s.values()) {
        assert_eq!(*v, eta_to_sigma(*e));
    }
}

#[test]
fn quadratic_fit_cases() {
    let t = [1.0, 2.0 / 3.0, 0.5, 0.4, 1.0 / 3.0];
    let c = fit_quadratic(&t, &[0.7; 5]).unwrap();
    assert!((c[0] - 0.7).abs() < 1e-12 && c[1].abs() < 1e-12 && c[2].abs() < 1e-12);
    let v: Vec<f64> = t.iter().map(|t| 0.2 - 0.5 * t + 1.5 * t * t).collect();
    let c = fit_quadratic(&t, &v).unwrap();
    assert!((c[0] - 0.2).abs() < 1e-10 && (c[1] + 0.5).abs() < 1e-10 && (c[2] - 1.5).abs() < 1e-10);
    assert!(fit_quadratic(&t[..2], &v[..2]).is_err());
    assert!(calibrate_xi(0.7, &[1.0, 2.0], SimSeed(0), &FilterParams::default()).is_err());
}

#[test]
fn calibration_table_text_round_trip() {
    let table = CalibrationTable::new(vec![
        CalibrationEntry { coherence: 0.7, coeffs: [0.1, 0.5, 0.25] },
        CalibrationEntry { coherence: 0.3, coeffs: [1.0, 0.0, 0.0] },
    ])
    .unwrap();
    let parsed = CalibrationTable::parse(&table.to_text()).unwrap();
    assert_eq!(parsed, table);
    assert_eq!(parsed.nearest(0.55).coherence, 0.7);
    assert_eq!(parsed.nearest(0.45).coherence, 0.3);
    assert!(CalibrationTable::parse("0.3 1 0 0\n").is_err());
    assert!(CalibrationTable::parse("version 2\n0.3 1 0 0\n").is_err());
    assert!(CalibrationTable::parse("version 1\n0.3 1 0\n").is_err());
    assert!(!CalibrationTable::shipped().entries.is_empty());
}

#[test]
fn calibration_is_decreasing_and_well_fitted() {
    let cal = calibrate_xi(0.7, &DEFAULT_SIGMA_GRID, SimSeed(11), &FilterParams::default()).unwrap();
    assert!(cal.sigma_delta.windows(2).all(|w| w[0] > w[1]), "{:?}", cal.sigma_delta);
    let model = cal.model().unwrap();
    for (s, v) in cal.sigma_grid.iter().zip(&cal.sigma_delta) {
        assert!((model.eval(1.0 / s) - v).abs() < 0.1 * v);
    }
}
