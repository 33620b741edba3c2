//! Boxcar multilook reference filter.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::{wrap_phase, EstimateBundle, RealRaster, Semantic, SlcPair};

/// Uniform `k×k` mean of the interferogram and both powers, window clipped
/// at the borders.
pub fn boxcar(pair: &SlcPair, k: usize) -> Result<EstimateBundle> {
    if k == 0 || k % 2 == 0 {
        return Err(Error::param("k", format!("window size must be odd and positive, got {k}")));
    }
    let shape = pair.shape();
    let (rows, cols) = (shape.rows, shape.cols);
    let h = (k / 2) as isize;
    let (m, s) = (pair.master().values(), pair.slave().values());
    let z: Vec<Complex64> = m.iter().zip(s).map(|(a, b)| a * b.conj()).collect();
    let p1: Vec<f64> = m.iter().map(|a| a.norm_sqr()).collect();
    let p2: Vec<f64> = s.iter().map(|b| b.norm_sqr()).collect();

    // horizontal sums, then vertical, in fixed order per pixel
    let horiz = |r: usize| {
        let mut out = vec![(Complex64::new(0.0, 0.0), 0.0, 0.0); cols];
        for (c, o) in out.iter_mut().enumerate() {
            let lo = (c as isize - h).max(0) as usize;
            let hi = ((c as isize + h) as usize).min(cols - 1);
            for j in lo..=hi {
                let i = r * cols + j;
                o.0 += z[i];
                o.1 += p1[i];
                o.2 += p2[i];
            }
        }
        out
    };
    let rows_h: Vec<_> = (0..rows).into_par_iter().map(horiz).collect();

    let per_row: Vec<Vec<(f64, f64, f64, f64)>> = (0..rows)
        .into_par_iter()
        .map(|r| {
            let lo = (r as isize - h).max(0) as usize;
            let hi = ((r as isize + h) as usize).min(rows - 1);
            (0..cols)
                .map(|c| {
                    let (mut sz, mut s1, mut s2) = (Complex64::new(0.0, 0.0), 0.0, 0.0);
                    for row in &rows_h[lo..=hi] {
                        sz += row[c].0;
                        s1 += row[c].1;
                        s2 += row[c].2;
                    }
                    let wc = ((c as isize + h).min(cols as isize - 1) - (c as isize - h).max(0) + 1) as f64;
                    let n = (hi - lo + 1) as f64 * wc;
                    let (mz, m1, m2) = (sz / n, s1 / n, s2 / n);
                    let norm = (m1 * m2).sqrt();
                    let coh = if norm > 0.0 { (mz.norm() / norm).min(1.0) } else { 0.0 };
                    (wrap_phase(mz.arg()), 0.5 * (m1 + m2), coh, n)
                })
                .collect()
        })
        .collect();
    let flat: Vec<_> = per_row.into_iter().flatten().collect();
    EstimateBundle::new(
        RealRaster::new(shape, Semantic::Phase, flat.iter().map(|v| v.0).collect())?,
        RealRaster::new(shape, Semantic::Intensity, flat.iter().map(|v| v.1).collect())?,
        RealRaster::new(shape, Semantic::Coherence, flat.iter().map(|v| v.2).collect())?,
        RealRaster::new(shape, Semantic::Enl, flat.iter().map(|v| v.3).collect())?,
    )
}
