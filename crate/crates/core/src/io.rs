//! On-disk raster format: `<name>.bin` holds a flat little-endian payload and
//! `<name>.json` the header (`rows`, `cols`, `dtype`, `semantic`, `version`).
//!
//! `c64` pixels are two `f32` (real, imaginary); `f32` pixels are one `f32`.
//! In-memory rasters are `f64`, so writing quantizes to single precision and
//! a read followed by a write reproduces the files byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ComplexRaster, GridShape, RealRaster, Semantic};

pub const FORMAT_VERSION: u32 = 1;
const COMPLEX_SEMANTIC: &str = "complex";

#[derive(Debug, Clone, PartialEq)]
pub enum Raster {
    Complex(ComplexRaster),
    Real(RealRaster),
}

impl Raster {
    pub fn shape(&self) -> GridShape {
        match self {
            Raster::Complex(r) => r.shape(),
            Raster::Real(r) => r.shape(),
        }
    }

    pub fn into_complex(self) -> Option<ComplexRaster> {
        match self {
            Raster::Complex(r) => Some(r),
            Raster::Real(_) => None,
        }
    }

    pub fn into_real(self) -> Option<RealRaster> {
        match self {
            Raster::Real(r) => Some(r),
            Raster::Complex(_) => None,
        }
    }
}

impl From<ComplexRaster> for Raster {
    fn from(r: ComplexRaster) -> Self {
        Raster::Complex(r)
    }
}

impl From<RealRaster> for Raster {
    fn from(r: RealRaster) -> Self {
        Raster::Real(r)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    rows: usize,
    cols: usize,
    dtype: String,
    semantic: String,
    version: u32,
}

/// `(payload, sidecar)` paths for a raster path given with or without extension.
pub fn raster_paths(path: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let path = path.as_ref();
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("bin") | Some("json") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut bin = stem.clone().into_os_string();
    bin.push(".bin");
    let mut json = stem.into_os_string();
    json.push(".json");
    (PathBuf::from(bin), PathBuf::from(json))
}

pub fn write_raster(raster: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let (bin, json) = raster_paths(path);
    let shape = raster.shape();
    let (dtype, semantic, payload) = match raster {
        Raster::Complex(r) => {
            let mut bytes = Vec::with_capacity(shape.len() * 8);
            for z in r.values() {
                bytes.extend_from_slice(&(z.re as f32).to_le_bytes());
                bytes.extend_from_slice(&(z.im as f32).to_le_bytes());
            }
            ("c64", COMPLEX_SEMANTIC, bytes)
        }
        Raster::Real(r) => {
            let mut bytes = Vec::with_capacity(shape.len() * 4);
            for v in r.values() {
                bytes.extend_from_slice(&(*v as f32).to_le_bytes());
            }
            ("f32", r.semantic().as_str(), bytes)
        }
    };
    let header = Header {
        rows: shape.rows,
        cols: shape.cols,
        dtype: dtype.to_string(),
        semantic: semantic.to_string(),
        version: FORMAT_VERSION,
    };
    let mut text = serde_json::to_string_pretty(&header).expect("header serializes");
    text.push('\n');
    if let Some(dir) = bin.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&bin, payload)?;
    fs::write(&json, text)?;
    Ok(())
}

/// Reads a raster; with `validate` set, real rasters are range-checked
/// against their semantic.
pub fn read_raster(path: impl AsRef<Path>, validate: bool) -> Result<Raster> {
    let (bin, json) = raster_paths(path);
    for p in [&json, &bin] {
        if !p.exists() {
            return Err(Error::MissingFile(p.clone()));
        }
    }
    let malformed = |reason: String| Error::MalformedHeader { path: json.clone(), reason };
    let text = fs::read_to_string(&json)?;
    let header: Header = serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;
    if header.version != FORMAT_VERSION {
        return Err(malformed(format!("unsupported version {}", header.version)));
    }
    let shape = GridShape::new(header.rows, header.cols).map_err(|e| malformed(e.to_string()))?;
    let pixel_bytes = match header.dtype.as_str() {
        "c64" => 8,
        "f32" => 4,
        other => return Err(Error::UnknownDtype(other.to_string())),
    };
    let payload = fs::read(&bin)?;
    let expected = shape.len() * pixel_bytes;
    if payload.len() != expected {
        return Err(Error::TruncatedPayload { path: bin, expected, found: payload.len() });
    }
    let f32_at = |i: usize| f32::from_le_bytes(payload[i..i + 4].try_into().unwrap()) as f64;
    if pixel_bytes == 8 {
        if header.semantic != COMPLEX_SEMANTIC {
            return Err(malformed(format!("semantic `{}` for c64", header.semantic)));
        }
        let values = (0..shape.len()).map(|k| Complex64::new(f32_at(8 * k), f32_at(8 * k + 4))).collect();
        Ok(Raster::Complex(ComplexRaster::new(shape, values)?))
    } else {
        let semantic = Semantic::parse(&header.semantic)
            .ok_or_else(|| malformed(format!("unknown semantic `{}`", header.semantic)))?;
        let values = (0..shape.len()).map(|k| f32_at(4 * k)).collect();
        let raster = RealRaster::new_unchecked(shape, semantic, values)?;
        if validate {
            raster.validate()?;
        }
        Ok(Raster::Real(raster))
    }
}

pub fn read_complex(path: impl AsRef<Path>) -> Result<ComplexRaster> {
    let path = path.as_ref();
    read_raster(path, true)?
        .into_complex()
        .ok_or_else(|| Error::MalformedHeader { path: raster_paths(path).1, reason: "expected a c64 raster".into() })
}

pub fn read_real(path: impl AsRef<Path>, validate: bool) -> Result<RealRaster> {
    let path = path.as_ref();
    read_raster(path, validate)?
        .into_real()
        .ok_or_else(|| Error::MalformedHeader { path: raster_paths(path).1, reason: "expected an f32 raster".into() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bytes_of(base: &Path) -> (Vec<u8>, Vec<u8>) {
        let (b, j) = raster_paths(base);
        (fs::read(b).unwrap(), fs::read(j).unwrap())
    }

    #[test]
    fn complex_round_trip_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let shape = GridShape::new(2, 2).unwrap();
        let r = ComplexRaster::new(
            shape,
            vec![
                Complex64::new(1.0, -0.5),
                Complex64::new(0.25, 3.0),
                Complex64::new(-2.0, 0.0),
                Complex64::new(0.0009765625, 7.5),
            ],
        )
        .unwrap();
        let a = dir.path().join("a");
        write_raster(&r.clone().into(), &a).unwrap();
        let back = read_raster(&a, true).unwrap();
        assert_eq!(back, Raster::Complex(r));
        let b = dir.path().join("b.bin");
        write_raster(&back, &b).unwrap();
        assert_eq!(bytes_of(&a).0, bytes_of(&b).0);
        assert_eq!(bytes_of(&a).1, bytes_of(&b).1);
        assert_eq!(bytes_of(&a).0.len(), 32);
    }

    #[test]
    fn truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t");
        let r = RealRaster::filled(GridShape::new(3, 3).unwrap(), Semantic::Intensity, 1.0).unwrap();
        write_raster(&r.into(), &p).unwrap();
        let (bin, _) = raster_paths(&p);
        let mut bytes = fs::read(&bin).unwrap();
        bytes.truncate(20);
        fs::write(&bin, bytes).unwrap();
        assert!(matches!(read_raster(&p, true), Err(Error::TruncatedPayload { expected: 36, found: 20, .. })));
    }

    #[test]
    fn malformed_and_unknown_dtype() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m");
        let (bin, json) = raster_paths(&p);
        fs::write(&bin, [0u8; 4]).unwrap();
        fs::write(&json, r#"{"rows":1,"cols":1,"dtype":"f64","semantic":"phase","version":1}"#).unwrap();
        assert!(matches!(read_raster(&p, true), Err(Error::UnknownDtype(_))));
        fs::write(&json, r#"{"rows":1,"cols":1,"dtype":"f32"}"#).unwrap();
        assert!(matches!(read_raster(&p, true), Err(Error::MalformedHeader { .. })));
        fs::write(&json, r#"{"rows":1,"cols":1,"dtype":"f32","semantic":"phase","version":2}"#).unwrap();
        assert!(matches!(read_raster(&p, true), Err(Error::MalformedHeader { .. })));
        assert!(matches!(read_raster(dir.path().join("nope"), true), Err(Error::MissingFile(_))));
    }

    #[test]
    fn coherence_range_validation_on_read() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("coh");
        let r = RealRaster::new_unchecked(GridShape::new(1, 2).unwrap(), Semantic::Coherence, vec![0.5, 1.5]).unwrap();
        write_raster(&r.into(), &p).unwrap();
        assert!(matches!(read_raster(&p, true), Err(Error::OutOfRange { .. })));
        assert!(read_raster(&p, false).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn round_trip_identity_for_single_precision_values(
            rows in 1usize..6,
            cols in 1usize..6,
            seed in prop::collection::vec(-1e4f32..1e4, 72),
        ) {
            let dir = tempfile::tempdir().unwrap();
            let shape = GridShape::new(rows, cols).unwrap();
            let n = shape.len();
            let cplx = ComplexRaster::new(
                shape,
                (0..n).map(|k| Complex64::new(seed[2 * k] as f64, seed[2 * k + 1] as f64)).collect(),
            ).unwrap();
            let real = RealRaster::new(shape, Semantic::Generic, (0..n).map(|k| seed[k] as f64).collect()).unwrap();
            for (i, r) in [Raster::from(cplx), Raster::from(real)].into_iter().enumerate() {
                let p = dir.path().join(format!("r{i}"));
                write_raster(&r, &p).unwrap();
                prop_assert_eq!(read_raster(&p, true).unwrap(), r);
            }
        }
    }
}
