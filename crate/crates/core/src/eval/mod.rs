//! Monte-Carlo harness: circular error statistics over repeated noise
//! draws, the synthetic experiments built on them, and their CSV reports.

mod experiments;

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;

pub use experiments::{
    fractal_experiment, slope_sweep, step_response, transition_distance, FractalConfig, FractalResult, SlopeConfig,
    SlopeResult, StepConfig, StepProfile, StepResult, StepVariant, DEFAULT_SLOPE_FREQUENCIES,
};

use crate::baselines::boxcar;
use crate::error::{Error, Result};
use crate::filter::{nlswag, stage1_filter, FilterParams};
use crate::raster::{wrap_phase, EstimateBundle, GridShape, RealRaster, Semantic, SlcPair};

/// Circular std reported for pixels whose mean resultant length vanishes.
pub const STD_CAP: f64 = std::f64::consts::PI;

/// Filters compared by the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Boxcar(usize),
    Stage1,
    Nlswag,
    /// NL-SWAG with the fringe field fixed at zero.
    NlswagFlat,
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Boxcar(k) => format!("boxcar{k}x{k}"),
            Method::Stage1 => "stage1".into(),
            Method::Nlswag => "nlswag".into(),
            Method::NlswagFlat => "nlswag_nocomp".into(),
        }
    }

    pub fn run(&self, pair: &SlcPair, params: &FilterParams) -> Result<EstimateBundle> {
        match *self {
            Method::Boxcar(k) => boxcar(pair, k),
            Method::Stage1 => Ok(stage1_filter(pair, params)?.guidance),
            Method::Nlswag => Ok(nlswag(pair, params)?.estimate),
            Method::NlswagFlat => {
                let p = FilterParams { fringe_compensation: false, ..params.clone() };
                Ok(nlswag(pair, &p)?.estimate)
            }
        }
    }
}

/// Per-pixel circular error statistics over trials.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialStats {
    /// `arg Σ e^{j e_t}`.
    pub bias: RealRaster,
    /// `√(−2 ln |mean e^{j e_t}|)`, capped at [`STD_CAP`].
    pub std: RealRaster,
    pub mean_enl: RealRaster,
    /// Pixels whose std hit the cap.
    pub capped: Vec<bool>,
    pub trials: usize,
}

impl TrialStats {
    pub fn mean_std(&self, margin: usize) -> f64 {
        interior_mean(&self.std, margin)
    }

    pub fn mean_enl(&self, margin: usize) -> f64 {
        interior_mean(&self.mean_enl, margin)
    }

    pub fn max_abs_bias(&self, margin: usize) -> f64 {
        interior(self.bias.shape(), margin).map(|(r, c)| self.bias.at(r, c).abs()).fold(0.0, f64::max)
    }
}

/// Pixels at least `margin` away from every border.
pub fn interior(shape: GridShape, margin: usize) -> impl Iterator<Item = (usize, usize)> {
    let (r1, c1) = (shape.rows.saturating_sub(margin), shape.cols.saturating_sub(margin));
    (margin..r1).flat_map(move |r| (margin..c1).map(move |c| (r, c)))
}

pub fn interior_mean(raster: &RealRaster, margin: usize) -> f64 {
    let (s, n) = interior(raster.shape(), margin).fold((0.0, 0usize), |(s, n), (r, c)| (s + raster.at(r, c), n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Running sums for [`TrialStats`]; trials must be added in a fixed order
/// for reproducible results.
#[derive(Debug, Clone)]
pub struct CircularAccumulator {
    truth: RealRaster,
    phasor: Vec<Complex64>,
    enl: Vec<f64>,
    trials: usize,
}

impl CircularAccumulator {
    pub fn new(truth: &RealRaster) -> Self {
        let n = truth.shape().len();
        Self { truth: truth.clone(), phasor: vec![Complex64::new(0.0, 0.0); n], enl: vec![0.0; n], trials: 0 }
    }

    pub fn add(&mut self, estimate: &RealRaster, enl: Option<&RealRaster>) -> Result<()> {
        self.truth.shape().check_same(&estimate.shape())?;
        for ((acc, est), truth) in self.phasor.iter_mut().zip(estimate.values()).zip(self.truth.values()) {
            *acc += Complex64::from_polar(1.0, wrap_phase(est - truth));
        }
        if let Some(l) = enl {
            self.truth.shape().check_same(&l.shape())?;
            self.enl.iter_mut().zip(l.values()).for_each(|(a, v)| *a += v);
        }
        self.trials += 1;
        Ok(())
    }

    pub fn finish(&self) -> Result<TrialStats> {
        if self.trials == 0 {
            return Err(Error::Undefined("circular statistics of zero trials"));
        }
        let shape = self.truth.shape();
        let n = self.trials as f64;
        let r_min = (-0.5 * STD_CAP * STD_CAP).exp();
        let mut capped = Vec::with_capacity(shape.len());
        let mut std = Vec::with_capacity(shape.len());
        let mut bias = Vec::with_capacity(shape.len());
        for p in &self.phasor {
            let r = (p.norm() / n).min(1.0);
            let hit = r <= r_min;
            capped.push(hit);
            std.push(if hit { STD_CAP } else { (-2.0 * r.ln()).sqrt() });
            bias.push(if p.norm() > 0.0 { wrap_phase(p.arg()) } else { 0.0 });
        }
        Ok(TrialStats {
            bias: RealRaster::new(shape, Semantic::Phase, bias)?,
            std: RealRaster::new(shape, Semantic::Generic, std)?,
            mean_enl: RealRaster::new(shape, Semantic::Generic, self.enl.iter().map(|v| v / n).collect())?,
            capped,
            trials: self.trials,
        })
    }
}

pub fn circular_stats(estimates: &[RealRaster], truth: &RealRaster) -> Result<TrialStats> {
    let mut acc = CircularAccumulator::new(truth);
    for e in estimates {
        acc.add(e, None)?;
    }
    acc.finish()
}

/// Runs `trial(t)` for `t ∈ [0, n)` in parallel batches and hands the
/// results to `sink` in trial order.
pub(crate) fn for_each_trial<T: Send>(
    n: usize,
    trial: impl Fn(usize) -> Result<T> + Sync,
    mut sink: impl FnMut(usize, T) -> Result<()>,
) -> Result<()> {
    let batch = 2 * rayon::current_num_threads().max(1);
    let mut start = 0;
    while start < n {
        let end = (start + batch).min(n);
        let results: Vec<Result<T>> = (start..end).into_par_iter().map(&trial).collect();
        for (t, r) in (start..end).zip(results) {
            sink(t, r?)?;
        }
        start = end;
    }
    Ok(())
}

/// Metrics of one experiment; one row per (method, condition).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub id: String,
    pub parameters: Vec<(String, String)>,
    /// Name of the condition column, if the experiment sweeps one.
    pub condition: Option<String>,
    pub metrics: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub condition: Option<f64>,
    pub method: String,
    pub values: Vec<f64>,
}

impl ExperimentReport {
    pub fn row(&self, method: &str, condition: Option<f64>) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method && r.condition == condition)
    }

    pub fn metric(&self, method: &str, condition: Option<f64>, metric: &str) -> Option<f64> {
        let k = self.metrics.iter().position(|m| m == metric)?;
        self.row(method, condition).map(|r| r.values[k])
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<&str> = self.condition.iter().map(String::as_str).collect();
        header.push("method");
        header.extend(self.metrics.iter().map(String::as_str));
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec: Vec<String> = row.condition.iter().map(|c| c.to_string()).collect();
            rec.push(row.method.clone());
            rec.extend(row.values.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
