//! Scale of the stage-2 dissimilarity as a function of the Gaussian window
//! width, measured on homogeneous simulated data.

use std::fmt::Write as _;
use std::sync::OnceLock;

use rand::Rng;

use super::{stage1_filter, FilterParams};
use crate::error::{Error, Result};
use crate::raster::{GridShape, RealRaster, Semantic};
use crate::similarity::{patch_dissim_stage2, GaussianWindow, PatchGeometry};
use crate::simulate::{sample_slc_pair, SceneSpec, SimSeed};

pub const DEFAULT_SIGMA_GRID: [f64; 5] = [1.0, 1.5, 2.0, 2.5, 3.0];
pub const CALIBRATION_LEVELS: [f64; 4] = [0.3, 0.5, 0.7, 0.9];
pub const TABLE_VERSION: u32 = 1;
const CALIBRATION_SIDE: usize = 128;
const CALIBRATION_PAIRS: usize = 4000;
const SHIPPED_TABLE: &str = include_str!("../../data/xi_calibration.txt");

/// `ξ(t) = c0 + c1·t + c2·t²` with `t = 1/σ_Gauss`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiModel {
    coeffs: [f64; 3],
}

impl XiModel {
    /// Requires `ξ > 0` on `t ∈ [1/3, 1]`.
    pub fn new(coeffs: [f64; 3]) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::param("xi_coeffs", "must be finite"));
        }
        let model = Self { coeffs };
        let [_, c1, c2] = coeffs;
        let mut probes = vec![1.0 / 3.0, 1.0];
        if c2 != 0.0 {
            let vertex = -c1 / (2.0 * c2);
            if (1.0 / 3.0..=1.0).contains(&vertex) {
                probes.push(vertex);
            }
        }
        if probes.iter().any(|&t| !(model.eval(t) > 0.0)) {
            return Err(Error::param("xi_coeffs", "xi must be positive for t in [1/3, 1]"));
        }
        Ok(model)
    }

    pub fn coeffs(&self) -> [f64; 3] {
        self.coeffs
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        let [c0, c1, c2] = self.coeffs;
        c0 + t * (c1 + t * c2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct XiCalibration {
    pub coherence_level: f64,
    pub sigma_grid: Vec<f64>,
    /// Standard deviation of the stage-2 dissimilarity per grid width.
    pub sigma_delta: Vec<f64>,
    pub coeffs: [f64; 3],
}

impl XiCalibration {
    pub fn model(&self) -> Result<XiModel> {
        XiModel::new(self.coeffs)
    }
}

/// Least-squares quadratic through `(t, v)`.
pub fn fit_quadratic(t: &[f64], v: &[f64]) -> Result<[f64; 3]> {
    if t.len() != v.len() {
        return Err(Error::param("fit", "abscissae and values differ in length"));
    }
    if t.len() < 3 {
        return Err(Error::param("sigma_grid", "at least 3 points are needed for a quadratic fit"));
    }
    // normal equations on centered abscissae for conditioning
    let mean = t.iter().sum::<f64>() / t.len() as f64;
    let mut m = [[0.0; 4]; 3];
    for (&ti, &vi) in t.iter().zip(v) {
        let u = ti - mean;
        let basis = [1.0, u, u * u];
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] += basis[r] * basis[c];
            }
            m[r][3] += basis[r] * vi;
        }
    }
    for col in 0..3 {
        let pivot = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs())).expect("non-empty");
        m.swap(col, pivot);
        if m[col][col].abs() < 1e-300 {
            return Err(Error::param("sigma_grid", "grid points must be distinct"));
        }
        for r in 0..3 {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in col..4 {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    let [b0, b1, b2] = [m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]];
    // expand b0 + b1 (t − μ) + b2 (t − μ)²
    Ok([b0 - b1 * mean + b2 * mean * mean, b1 - 2.0 * b2 * mean, b2])
}

fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Measures the spread of stage-2 dissimilarities between random pixel
/// pairs of a homogeneous zero-phase scene, per Gaussian width, and fits
/// `ξ(1/σ)`.
pub fn calibrate_xi(
    coherence_level: f64,
    sigma_grid: &[f64],
    seed: SimSeed,
    params: &FilterParams,
) -> Result<XiCalibration> {
    if sigma_grid.len() < 3 {
        return Err(Error::param("sigma_grid", "at least 3 points are needed for a quadratic fit"));
    }
    if sigma_grid.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::param("sigma_grid", "widths must be positive"));
    }
    if !(0.0..1.0).contains(&coherence_level) {
        return Err(Error::param("coherence_level", "must lie in [0, 1)"));
    }
    let shape = GridShape::new(CALIBRATION_SIDE, CALIBRATION_SIDE)?;
    let scene = SceneSpec::homogeneous(RealRaster::filled(shape, Semantic::Phase, 0.0)?, 1.0, coherence_level)?;
    let pair = sample_slc_pair(&scene, seed)?;
    let guide = stage1_filter(&pair, params)?.guidance;

    let mut rng = seed.derive(1).pixel_rng(0, 0);
    let h = params.search_half as isize;
    let mut pairs = Vec::with_capacity(CALIBRATION_PAIRS);
    while pairs.len() < CALIBRATION_PAIRS {
        let x = (rng.gen_range(0..shape.rows), rng.gen_range(0..shape.cols));
        let (dr, dc) = (rng.gen_range(-h..=h), rng.gen_range(-h..=h));
        if (dr, dc) == (0, 0) {
            continue;
        }
        if let Some(y) = shape.offset(x.0, x.1, dr, dc) {
            pairs.push((x, y));
        }
    }
    let geom = PatchGeometry::new(params.patch_half_stage2);
    let mut sigma_delta = Vec::with_capacity(sigma_grid.len());
    for &sigma in sigma_grid {
        let win = GaussianWindow::new(sigma, geom)?;
        let values =
            pairs.iter().map(|&(x, y)| patch_dissim_stage2(&guide, x, y, &win, None)).collect::<Result<Vec<f64>>>()?;
        sigma_delta.push(population_std(&values));
    }
    let t: Vec<f64> = sigma_grid.iter().map(|s| 1.0 / s).collect();
    let coeffs = fit_quadratic(&t, &sigma_delta)?;
    Ok(XiCalibration { coherence_level, sigma_grid: sigma_grid.to_vec(), sigma_delta, coeffs })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationEntry {
    pub coherence: f64,
    pub coeffs: [f64; 3],
}

impl CalibrationEntry {
    pub fn model(&self) -> XiModel {
        XiModel::new(self.coeffs).expect("table entries are validated on parse")
    }
}

/// ξ coefficients per coherence level, stored as versioned plain text.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTable {
    pub entries: Vec<CalibrationEntry>,
}

impl CalibrationTable {
    pub fn new(mut entries: Vec<CalibrationEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Calibration("table has no entries".into()));
        }
        for e in &entries {
            XiModel::new(e.coeffs).map_err(|err| Error::Calibration(format!("coherence {}: {err}", e.coherence)))?;
        }
        entries.sort_by(|a, b| a.coherence.total_cmp(&b.coherence));
        Ok(Self { entries })
    }

    /// The table compiled into the library.
    pub fn shipped() -> &'static CalibrationTable {
        static TABLE: OnceLock<CalibrationTable> = OnceLock::new();
        TABLE.get_or_init(|| CalibrationTable::parse(SHIPPED_TABLE).expect("shipped calibration table parses"))
    }

    /// Entry with the closest coherence level; ties go to the lower level.
    pub fn nearest(&self, coherence: f64) -> CalibrationEntry {
        *self
            .entries
            .iter()
            .min_by(|a, b| (a.coherence - coherence).abs().total_cmp(&(b.coherence - coherence).abs()))
            .expect("non-empty table")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        match lines.next().map(|l| l.split_whitespace().collect::<Vec<_>>()) {
            Some(v) if v.len() == 2 && v[0] == "version" => {
                if v[1].parse::<u32>().ok() != Some(TABLE_VERSION) {
                    return Err(Error::Calibration(format!("unsupported version `{}`", v[1])));
                }
            }
            _ => return Err(Error::Calibration("missing `version` line".into())),
        }
        let mut entries = Vec::new();
        for line in lines {
            let fields = line
                .split_whitespace()
                .map(|f| f.parse::<f64>().map_err(|_| Error::Calibration(format!("bad number `{f}`"))))
                .collect::<Result<Vec<f64>>>()?;
            if fields.len() != 4 {
                return Err(Error::Calibration(format!("expected 4 columns in `{line}`")));
            }
            entries.push(CalibrationEntry { coherence: fields[0], coeffs: [fields[1], fields[2], fields[3]] });
        }
        Self::new(entries)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("# spread of the stage-2 dissimilarity: xi(t) = c0 + c1*t + c2*t^2, t = 1/sigma_gauss\n");
        s.push_str("# coherence c0 c1 c2\n");
        let _ = writeln!(s, "version {TABLE_VERSION}");
        for e in &self.entries {
            let _ = writeln!(s, "{} {:e} {:e} {:e}", e.coherence, e.coeffs[0], e.coeffs[1], e.coeffs[2]);
        }
        s
    }
}

/// Calibrates every standard coherence level.
pub fn build_table(seed: SimSeed, params: &FilterParams) -> Result<CalibrationTable> {
    let entries = CALIBRATION_LEVELS
        .iter()
        .enumerate()
        .map(|(i, &level)| {
            calibrate_xi(level, &DEFAULT_SIGMA_GRID, seed.derive(i as u64), params)
                .map(|c| CalibrationEntry { coherence: level, coeffs: c.coeffs })
        })
        .collect::<Result<Vec<_>>>()?;
    CalibrationTable::new(entries)
}
