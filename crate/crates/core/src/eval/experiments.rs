use std::path::Path;

use num_complex::Complex64;

use super::{for_each_trial, CircularAccumulator, ExperimentReport, Method, ReportRow, TrialStats};
use crate::error::{Error, Result};
use crate::filter::FilterParams;
use crate::raster::{wrap_phase, GridShape, RealRaster};
use crate::simulate::{
    make_fractal, make_ramp, make_step, sample_slc_pair, step_edge_column, FractalSpec, SceneSpec, SimSeed, StepSpec,
};

pub const DEFAULT_SLOPE_FREQUENCIES: [f64; 16] =
    [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5];

fn check_common(trials: usize, methods: &[Method], params: &FilterParams) -> Result<()> {
    if trials == 0 {
        return Err(Error::param("trials", "must be at least 1"));
    }
    if methods.is_empty() {
        return Err(Error::param("methods", "at least one method is required"));
    }
    params.validate()
}

/// Filters `trials` noise draws of `scene` with every method and collects
/// per-method statistics. Draw `t` uses `seed.derive(t)`.
fn monte_carlo(
    scene: &SceneSpec,
    trials: usize,
    seed: SimSeed,
    methods: &[Method],
    params: &FilterParams,
) -> Result<Vec<TrialStats>> {
    let mut accs: Vec<CircularAccumulator> =
        methods.iter().map(|_| CircularAccumulator::new(&scene.true_phase)).collect();
    for_each_trial(
        trials,
        |t| {
            let pair = sample_slc_pair(scene, seed.derive(t as u64))?;
            methods.iter().map(|m| m.run(&pair, params)).collect::<Result<Vec<_>>>()
        },
        |_, outputs| {
            for (acc, out) in accs.iter_mut().zip(&outputs) {
                acc.add(&out.phase, Some(&out.enl))?;
            }
            Ok(())
        },
    )?;
    accs.iter().map(CircularAccumulator::finish).collect()
}

#[derive(Debug, Clone)]
pub struct FractalConfig {
    pub size: usize,
    pub trials: usize,
    pub coherence: f64,
    /// Peak-to-peak unwrapped terrain phase in radians.
    pub phase_span: f64,
    pub seed: SimSeed,
    pub methods: Vec<Method>,
    pub params: FilterParams,
    /// Border excluded from the reported means and bias.
    pub margin: usize,
}

impl Default for FractalConfig {
    fn default() -> Self {
        Self {
            size: 256,
            trials: 200,
            coherence: 0.7,
            phase_span: FractalSpec::default().phase_span.expect("default span is set"),
            seed: SimSeed(1),
            methods: vec![Method::Boxcar(5), Method::Nlswag],
            params: FilterParams::default(),
            margin: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FractalResult {
    pub truth: RealRaster,
    pub stats: Vec<(Method, TrialStats)>,
    pub report: ExperimentReport,
}

/// Fixed fractal terrain, repeated speckle draws.
pub fn fractal_experiment(cfg: &FractalConfig) -> Result<FractalResult> {
    check_common(cfg.trials, &cfg.methods, &cfg.params)?;
    if cfg.size < 2 {
        return Err(Error::param("size", "must be at least 2"));
    }
    if !(cfg.phase_span >= 0.0 && cfg.phase_span.is_finite()) {
        return Err(Error::param("phase_span", "must be finite and non-negative"));
    }
    let shape = GridShape::new(cfg.size, cfg.size)?;
    let levels = (usize::BITS - (cfg.size - 1).leading_zeros()).max(1);
    let spec =
        FractalSpec { levels, coherence: cfg.coherence, phase_span: Some(cfg.phase_span), ..FractalSpec::default() };
    let scene = make_fractal(shape, &spec, cfg.seed.derive(0))?;
    let stats = monte_carlo(&scene, cfg.trials, cfg.seed.derive(1), &cfg.methods, &cfg.params)?;
    let rows = cfg
        .methods
        .iter()
        .zip(&stats)
        .map(|(m, s)| ReportRow {
            condition: None,
            method: m.name(),
            values: vec![s.mean_std(cfg.margin), s.mean_enl(cfg.margin), s.max_abs_bias(cfg.margin)],
        })
        .collect();
    let report = ExperimentReport {
        id: "fractal".into(),
        parameters: vec![
            ("size".into(), cfg.size.to_string()),
            ("trials".into(), cfg.trials.to_string()),
            ("coherence".into(), cfg.coherence.to_string()),
            ("phase_span".into(), cfg.phase_span.to_string()),
            ("seed".into(), cfg.seed.0.to_string()),
            ("margin".into(), cfg.margin.to_string()),
        ],
        condition: None,
        metrics: vec!["std_rad".into(), "enl".into(), "max_abs_bias_rad".into()],
        rows,
        files: Vec::new(),
    };
    Ok(FractalResult { truth: scene.true_phase, stats: cfg.methods.iter().copied().zip(stats).collect(), report })
}

#[derive(Debug, Clone)]
pub struct SlopeConfig {
    pub frequencies: Vec<f64>,
    pub coherence: f64,
    pub rows: usize,
    pub cols: usize,
    pub trials: usize,
    pub seed: SimSeed,
    pub methods: Vec<Method>,
    pub params: FilterParams,
    pub margin: usize,
}

impl Default for SlopeConfig {
    fn default() -> Self {
        Self {
            frequencies: DEFAULT_SLOPE_FREQUENCIES.to_vec(),
            coherence: 0.7,
            rows: 64,
            cols: 64,
            trials: 16,
            seed: SimSeed(1),
            methods: vec![Method::Boxcar(5), Method::Nlswag, Method::NlswagFlat],
            params: FilterParams::default(),
            margin: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SlopeResult {
    pub report: ExperimentReport,
}

/// Range-direction phase ramps of increasing frequency at fixed coherence.
pub fn slope_sweep(cfg: &SlopeConfig) -> Result<SlopeResult> {
    check_common(cfg.trials, &cfg.methods, &cfg.params)?;
    if cfg.frequencies.iter().any(|f| !f.is_finite()) {
        return Err(Error::param("frequencies", "must be finite"));
    }
    let shape = GridShape::new(cfg.rows, cfg.cols)?;
    let mut rows = Vec::new();
    for (i, &f) in cfg.frequencies.iter().enumerate() {
        let scene = make_ramp(shape, f, 0.0, cfg.coherence)?;
        let stats = monte_carlo(&scene, cfg.trials, cfg.seed.derive(i as u64), &cfg.methods, &cfg.params)?;
        for (m, s) in cfg.methods.iter().zip(&stats) {
            rows.push(ReportRow {
                condition: Some(f),
                method: m.name(),
                values: vec![s.mean_std(cfg.margin), s.mean_enl(cfg.margin)],
            });
        }
    }
    Ok(SlopeResult {
        report: ExperimentReport {
            id: "slope".into(),
            parameters: vec![
                ("rows".into(), cfg.rows.to_string()),
                ("cols".into(), cfg.cols.to_string()),
                ("trials".into(), cfg.trials.to_string()),
                ("coherence".into(), cfg.coherence.to_string()),
                ("seed".into(), cfg.seed.0.to_string()),
                ("margin".into(), cfg.margin.to_string()),
            ],
            condition: Some("freq_rad_per_px".into()),
            metrics: vec!["std_rad".into(), "enl".into()],
            rows,
            files: Vec::new(),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepVariant {
    /// Phase edge only.
    Plain,
    /// Phase edge with a coherence and intensity step.
    IntensityCoherence,
}

impl StepVariant {
    pub fn spec(&self) -> StepSpec {
        match self {
            StepVariant::Plain => StepSpec::default(),
            StepVariant::IntensityCoherence => StepSpec::intensity_coherence(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepConfig {
    pub variant: StepVariant,
    pub rows: usize,
    pub cols: usize,
    pub trials: usize,
    pub seed: SimSeed,
    pub methods: Vec<Method>,
    pub params: FilterParams,
    /// Rows excluded at the top and bottom of the column profiles.
    pub row_margin: usize,
    /// Columns excluded at the left and right borders.
    pub col_margin: usize,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            variant: StepVariant::Plain,
            rows: 32,
            cols: 64,
            trials: 1000,
            seed: SimSeed(1),
            methods: vec![Method::Boxcar(5), Method::Nlswag],
            params: FilterParams::default(),
            row_margin: 8,
            col_margin: 6,
        }
    }
}

/// Column profile of one method.
#[derive(Debug, Clone, PartialEq)]
pub struct StepProfile {
    pub method: Method,
    /// Circular mean estimate per column.
    pub mean: Vec<f64>,
    /// Row-averaged circular std per column.
    pub std: Vec<f64>,
    /// 50 % → 90 % crossing distance of the normalized phase step.
    pub transition: f64,
    pub plateau_left: f64,
    pub plateau_right: f64,
    /// Longest run of columns whose std exceeds 1.5× the plateau of its side.
    pub halo: usize,
    /// Largest |mean − truth| at least one stage-2 patch width from the edge.
    pub far_bias: f64,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub edge: usize,
    pub truth: Vec<f64>,
    pub profiles: Vec<StepProfile>,
    pub report: ExperimentReport,
}

impl StepResult {
    /// `column,method,truth_rad,mean_rad,std_rad`.
    pub fn write_profiles(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["column", "method", "truth_rad", "mean_rad", "std_rad"])?;
        for p in &self.profiles {
            for c in 0..self.truth.len() {
                w.write_record([
                    c.to_string(),
                    p.method.name(),
                    self.truth[c].to_string(),
                    p.mean[c].to_string(),
                    p.std[c].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Distance between the 50 % and 90 % crossings of the normalized step
/// `wrap(μ − left) / wrap(right − left)`, scanning rightwards from `start`,
/// with linear interpolation between columns. `None` if a level is never
/// reached.
pub fn transition_distance(mean: &[f64], left: f64, right: f64, start: usize) -> Option<f64> {
    let jump = wrap_phase(right - left);
    let s: Vec<f64> = mean.iter().map(|m| wrap_phase(m - left) / jump).collect();
    let crossing = |level: f64| -> Option<f64> {
        (start.max(1)..s.len()).find(|&c| s[c] >= level).map(|c| {
            if s[c - 1] >= level {
                c as f64
            } else {
                (c - 1) as f64 + (level - s[c - 1]) / (s[c] - s[c - 1])
            }
        })
    };
    Some(crossing(0.9)? - crossing(0.5)?)
}

fn longest_run(flags: impl Iterator<Item = bool>) -> usize {
    let (mut best, mut cur) = (0, 0);
    for f in flags {
        cur = if f { cur + 1 } else { 0 };
        best = best.max(cur);
    }
    best
}

/// Phase edge between two half planes; profiles across the edge.
pub fn step_response(cfg: &StepConfig) -> Result<StepResult> {
    check_common(cfg.trials, &cfg.methods, &cfg.params)?;
    if cfg.rows <= 2 * cfg.row_margin || cfg.cols <= 2 * cfg.col_margin + 4 {
        return Err(Error::param("shape", "scene too small for the requested margins"));
    }
    let shape = GridShape::new(cfg.rows, cfg.cols)?;
    let spec = cfg.variant.spec();
    let scene = make_step(shape, &spec)?;
    let edge = step_edge_column(shape);
    let stats = monte_carlo(&scene, cfg.trials, cfg.seed, &cfg.methods, &cfg.params)?;
    let truth: Vec<f64> = (0..cfg.cols).map(|c| scene.true_phase.at(0, c)).collect();
    let (left, right) = (truth[0], truth[cfg.cols - 1]);
    let row_range = cfg.row_margin..cfg.rows - cfg.row_margin;
    let col_range = cfg.col_margin..cfg.cols - cfg.col_margin;
    let far = cfg.params.patch_half_stage2 * 2 + 1;
    let plateau_dist = far.min(cfg.cols / 4);

    let mut profiles = Vec::with_capacity(stats.len());
    for (&method, s) in cfg.methods.iter().zip(&stats) {
        let n_rows = row_range.len() as f64;
        let (mut mean, mut std) = (Vec::with_capacity(cfg.cols), Vec::with_capacity(cfg.cols));
        for c in 0..cfg.cols {
            let phasor: Complex64 =
                row_range.clone().map(|r| Complex64::from_polar(1.0, truth[c] + s.bias.at(r, c))).sum();
            mean.push(wrap_phase(phasor.arg()));
            std.push(row_range.clone().map(|r| s.std.at(r, c)).sum::<f64>() / n_rows);
        }
        let plateau = |cols: Vec<usize>| cols.iter().map(|&c| std[c]).sum::<f64>() / cols.len().max(1) as f64;
        let plateau_left = plateau(col_range.clone().filter(|&c| c + plateau_dist <= edge).collect());
        let plateau_right = plateau(col_range.clone().filter(|&c| c >= edge + plateau_dist).collect());
        let halo = longest_run(col_range.clone().map(|c| {
            let p = if c < edge { plateau_left } else { plateau_right };
            std[c] > 1.5 * p
        }));
        let far_bias = col_range
            .clone()
            .filter(|&c| c + far <= edge || c >= edge + far)
            .map(|c| wrap_phase(mean[c] - truth[c]).abs())
            .fold(0.0, f64::max);
        let transition = transition_distance(&mean, left, right, cfg.col_margin).unwrap_or(f64::INFINITY);
        profiles.push(StepProfile { method, mean, std, transition, plateau_left, plateau_right, halo, far_bias });
    }
    let rows = profiles
        .iter()
        .map(|p| ReportRow {
            condition: None,
            method: p.method.name(),
            values: vec![p.transition, p.halo as f64, p.plateau_left, p.plateau_right, p.far_bias],
        })
        .collect();
    let variant = match cfg.variant {
        StepVariant::Plain => "plain",
        StepVariant::IntensityCoherence => "intensity-coherence",
    };
    let report = ExperimentReport {
        id: "step".into(),
        parameters: vec![
            ("variant".into(), variant.into()),
            ("rows".into(), cfg.rows.to_string()),
            ("cols".into(), cfg.cols.to_string()),
            ("trials".into(), cfg.trials.to_string()),
            ("seed".into(), cfg.seed.0.to_string()),
        ],
        condition: None,
        metrics: vec![
            "transition_px".into(),
            "halo_px".into(),
            "plateau_std_left_rad".into(),
            "plateau_std_right_rad".into(),
            "max_far_bias_rad".into(),
        ],
        rows,
        files: Vec::new(),
    };
    Ok(StepResult { edge, truth, profiles, report })
}
