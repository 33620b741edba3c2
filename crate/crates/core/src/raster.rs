//! Raster containers shared by every processing stage.
//!
//! All rasters are row-major with the row index along azimuth and the column
//! index along range.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Slack allowed on range checks for values that went through an `f32`
/// round trip (π rounds up in single precision).
const RANGE_SLACK: f64 = 4e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridShape {
    pub rows: usize,
    pub cols: usize,
}

impl GridShape {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidShape { rows, cols });
        }
        Ok(Self { rows, cols })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    /// Pixel at `(row + dr, col + dc)` if it lies inside the grid.
    #[inline]
    pub fn offset(&self, row: usize, col: usize, dr: isize, dc: isize) -> Option<(usize, usize)> {
        let r = row as isize + dr;
        let c = col as isize + dc;
        if r < 0 || c < 0 || r >= self.rows as isize || c >= self.cols as isize {
            None
        } else {
            Some((r as usize, c as usize))
        }
    }

    pub(crate) fn check_same(&self, other: &GridShape) -> Result<()> {
        if self != other {
            return Err(Error::ShapeMismatch { left: self.to_string(), right: other.to_string() });
        }
        Ok(())
    }
}

impl fmt::Display for GridShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

/// Physical meaning of a real raster, which fixes its admissible range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Semantic {
    Phase,
    Intensity,
    Amplitude,
    Coherence,
    Enl,
    Heterogeneity,
    Sigma,
    Frequency,
    Generic,
}

impl Semantic {
    pub fn as_str(&self) -> &'static str {
        match self {
            Semantic::Phase => "phase",
            Semantic::Intensity => "intensity",
            Semantic::Amplitude => "amplitude",
            Semantic::Coherence => "coherence",
            Semantic::Enl => "enl",
            Semantic::Heterogeneity => "heterogeneity",
            Semantic::Sigma => "sigma",
            Semantic::Frequency => "frequency",
            Semantic::Generic => "generic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "phase" => Semantic::Phase,
            "intensity" => Semantic::Intensity,
            "amplitude" => Semantic::Amplitude,
            "coherence" => Semantic::Coherence,
            "enl" => Semantic::Enl,
            "heterogeneity" => Semantic::Heterogeneity,
            "sigma" => Semantic::Sigma,
            "frequency" => Semantic::Frequency,
            "generic" => Semantic::Generic,
            _ => return None,
        })
    }

    /// Whether `v` is admissible for this semantic.
    pub fn admits(&self, v: f64) -> bool {
        if !v.is_finite() {
            return false;
        }
        match self {
            Semantic::Phase => v > -PI - RANGE_SLACK && v <= PI + RANGE_SLACK,
            Semantic::Intensity | Semantic::Amplitude => v >= 0.0,
            Semantic::Coherence => (0.0..=1.0 + RANGE_SLACK).contains(&v),
            Semantic::Enl => v >= 1.0 - RANGE_SLACK,
            Semantic::Heterogeneity => (0.0..1.0).contains(&v),
            Semantic::Sigma => v > 0.0,
            Semantic::Frequency => v.abs() <= PI + RANGE_SLACK,
            Semantic::Generic => true,
        }
    }
}

/// Wraps a phase to the principal interval (−π, π].
#[inline]
pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi - 2.0 * PI * ((phi + PI) / (2.0 * PI)).floor();
    // `w` is in [−π, π); move the lower end to the upper one.
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexRaster {
    shape: GridShape,
    values: Vec<Complex64>,
}

impl ComplexRaster {
    pub fn new(shape: GridShape, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::ShapeMismatch { left: shape.to_string(), right: format!("{} values", values.len()) });
        }
        if let Some(i) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::OutOfRange { semantic: "complex", index: i, value: f64::NAN });
        }
        Ok(Self { shape, values })
    }

    pub fn from_fn(shape: GridShape, mut f: impl FnMut(usize, usize) -> Complex64) -> Result<Self> {
        let mut values = Vec::with_capacity(shape.len());
        for r in 0..shape.rows {
            for c in 0..shape.cols {
                values.push(f(r, c));
            }
        }
        Self::new(shape, values)
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> Complex64 {
        self.values[self.shape.index(row, col)]
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// Principal phase of every pixel.
    pub fn phase(&self) -> RealRaster {
        RealRaster {
            shape: self.shape,
            semantic: Semantic::Phase,
            values: self.values.iter().map(|z| z.arg()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealRaster {
    shape: GridShape,
    semantic: Semantic,
    values: Vec<f64>,
}

impl RealRaster {
    /// Builds a raster and validates every pixel against `semantic`.
    pub fn new(shape: GridShape, semantic: Semantic, values: Vec<f64>) -> Result<Self> {
        let r = Self::new_unchecked(shape, semantic, values)?;
        r.validate()?;
        Ok(r)
    }

    /// Builds a raster checking only the length.
    pub fn new_unchecked(shape: GridShape, semantic: Semantic, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::ShapeMismatch { left: shape.to_string(), right: format!("{} values", values.len()) });
        }
        Ok(Self { shape, semantic, values })
    }

    pub fn filled(shape: GridShape, semantic: Semantic, value: f64) -> Result<Self> {
        Self::new(shape, semantic, vec![value; shape.len()])
    }

    pub fn from_fn(shape: GridShape, semantic: Semantic, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(shape.len());
        for r in 0..shape.rows {
            for c in 0..shape.cols {
                values.push(f(r, c));
            }
        }
        Self::new(shape, semantic, values)
    }

    pub fn validate(&self) -> Result<()> {
        match self.values.iter().position(|&v| !self.semantic.admits(v)) {
            Some(i) => Err(Error::OutOfRange { semantic: self.semantic.as_str(), index: i, value: self.values[i] }),
            None => Ok(()),
        }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn semantic(&self) -> Semantic {
        self.semantic
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[self.shape.index(row, col)]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Co-registered master/slave single-look images.
#[derive(Debug, Clone, PartialEq)]
pub struct SlcPair {
    master: ComplexRaster,
    slave: ComplexRaster,
}

impl SlcPair {
    pub fn new(master: ComplexRaster, slave: ComplexRaster) -> Result<Self> {
        master.shape().check_same(&slave.shape())?;
        Ok(Self { master, slave })
    }

    pub fn shape(&self) -> GridShape {
        self.master.shape()
    }

    pub fn master(&self) -> &ComplexRaster {
        &self.master
    }

    pub fn slave(&self) -> &ComplexRaster {
        &self.slave
    }

    pub fn interferogram(&self) -> ComplexRaster {
        let values = self.master.values().iter().zip(self.slave.values()).map(|(a, b)| a * b.conj()).collect();
        ComplexRaster { shape: self.shape(), values }
    }
}

/// `z = u1 · conj(u2)` per pixel.
pub fn form_interferogram(pair: &SlcPair) -> ComplexRaster {
    pair.interferogram()
}

/// Filter output: phase, intensity, coherence and equivalent number of looks.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateBundle {
    pub phase: RealRaster,
    pub intensity: RealRaster,
    pub coherence: RealRaster,
    pub enl: RealRaster,
}

impl EstimateBundle {
    pub fn new(phase: RealRaster, intensity: RealRaster, coherence: RealRaster, enl: RealRaster) -> Result<Self> {
        let shape = phase.shape();
        for r in [&intensity, &coherence, &enl] {
            shape.check_same(&r.shape())?;
        }
        let expect = [
            (&phase, Semantic::Phase),
            (&intensity, Semantic::Intensity),
            (&coherence, Semantic::Coherence),
            (&enl, Semantic::Enl),
        ];
        for (r, s) in expect {
            if r.semantic() != s {
                return Err(Error::param("bundle", format!("expected {} raster", s.as_str())));
            }
            r.validate()?;
        }
        Ok(Self { phase, intensity, coherence, enl })
    }

    pub fn shape(&self) -> GridShape {
        self.phase.shape()
    }
}
