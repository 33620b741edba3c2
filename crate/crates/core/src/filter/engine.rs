//! Fused per-offset evaluation of both stages.
//!
//! Every loop runs over a search offset `d` first and then over pixels, so
//! the inner loops are contiguous column sweeps. Output rows are split into
//! tiles with halos; every per-pixel sum is evaluated in an order fixed by
//! raster coordinates only, which makes results independent of the tiling
//! and the thread count.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use super::{FilterParams, XiModel};
use crate::adaptivity::{heterogeneity_index, MomentCoherence, SigmaTable, UNWRAP_REFERENCE_HALF};
use crate::error::Result;
use crate::fringe::FringeField;
use crate::raster::{wrap_phase, EstimateBundle, GridShape, RealRaster, Semantic, SlcPair};
use crate::similarity::{log_delta1_from_parts, MAX_GUIDE_COHERENCE};

/// Upper bound on the per-tile dissimilarity store.
const TILE_BUDGET_BYTES: usize = 256 << 20;

pub(super) struct Maps {
    pub phase: Vec<f64>,
    pub intensity: Vec<f64>,
    pub coherence: Vec<f64>,
    pub enl: Vec<f64>,
    pub eta: Vec<f64>,
    /// Stage-1 weighted moment coherence; empty after stage 2.
    pub moment_coherence: Vec<f64>,
}

impl Maps {
    fn with_capacity(n: usize) -> Self {
        Self {
            phase: Vec::with_capacity(n),
            intensity: Vec::with_capacity(n),
            coherence: Vec::with_capacity(n),
            enl: Vec::with_capacity(n),
            eta: Vec::with_capacity(n),
            moment_coherence: Vec::with_capacity(n),
        }
    }

    fn extend(&mut self, other: Maps) {
        self.phase.extend(other.phase);
        self.intensity.extend(other.intensity);
        self.coherence.extend(other.coherence);
        self.enl.extend(other.enl);
        self.eta.extend(other.eta);
        self.moment_coherence.extend(other.moment_coherence);
    }

    pub fn bundle(self, shape: GridShape) -> Result<EstimateBundle> {
        EstimateBundle::new(
            RealRaster::new(shape, Semantic::Phase, self.phase)?,
            RealRaster::new(shape, Semantic::Intensity, self.intensity)?,
            RealRaster::new(shape, Semantic::Coherence, self.coherence)?,
            RealRaster::new(shape, Semantic::Enl, self.enl)?,
        )
    }
}

/// Raw per-pixel quantities of the SLC pair.
struct Pixels {
    rows: usize,
    cols: usize,
    z: Vec<Complex64>,
    p1: Vec<f64>,
    p2: Vec<f64>,
    intensity: Vec<f64>,
}

impl Pixels {
    fn new(pair: &SlcPair) -> Self {
        let shape = pair.shape();
        let (m, s) = (pair.master().values(), pair.slave().values());
        let p1: Vec<f64> = m.iter().map(|u| u.norm_sqr()).collect();
        let p2: Vec<f64> = s.iter().map(|u| u.norm_sqr()).collect();
        Self {
            rows: shape.rows,
            cols: shape.cols,
            z: m.iter().zip(s).map(|(a, b)| a * b.conj()).collect(),
            intensity: p1.iter().zip(&p2).map(|(a, b)| 0.5 * (a + b)).collect(),
            p1,
            p2,
        }
    }
}

fn search_offsets(half: usize) -> Vec<(isize, isize)> {
    let h = half as isize;
    (-h..=h).flat_map(|r| (-h..=h).map(move |c| (r, c))).collect()
}

/// Indices `i` in `[0, n)` with `i + d` also in `[0, n)`.
#[inline]
fn valid_range(n: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d).clamp(0, n as isize) as usize;
    (lo.min(hi), hi)
}

#[inline]
fn shifted(p: usize, d: isize, n: usize) -> Option<usize> {
    let q = p as isize + d;
    (q >= 0 && (q as usize) < n).then_some(q as usize)
}

/// Offsets `o ∈ [−h, h]` with `p + o` and `p + d + o` both inside `[0, n)`,
/// as an inclusive range.
#[inline]
fn overlap(p: usize, d: isize, h: usize, n: usize) -> (isize, isize) {
    let (p, n, h) = (p as isize, n as isize, h as isize);
    let lo = (-h).max(-p).max(-p - d);
    let hi = h.min(n - 1 - p).min(n - 1 - p - d);
    (lo, hi)
}

fn plan_tiles(rows: usize, cols: usize, n_off: usize, halo: usize) -> Vec<(usize, usize)> {
    let per_row = n_off * cols * std::mem::size_of::<f64>();
    let budget = (TILE_BUDGET_BYTES / per_row).saturating_sub(2 * halo).max(8);
    let parallel = rows.div_ceil(rayon::current_num_threads()).max(8);
    let t = budget.min(parallel);
    (0..rows).step_by(t).map(|r0| (r0, (r0 + t).min(rows))).collect()
}

/// Uniform box sum of half width `h` for output rows `[out0, out1)`. `plane`
/// holds rows starting at `plane_r0` and must cover every in-raster row
/// within `h` of the outputs; rows outside the raster count as zero.
fn box_sum(plane: &[f64], plane_r0: usize, out0: usize, out1: usize, h: usize, rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; (out1 - out0) * cols];
    let mut vert = vec![0.0; cols];
    let h = h as isize;
    for r in out0..out1 {
        vert.iter_mut().for_each(|v| *v = 0.0);
        for o in -h..=h {
            if let Some(rr) = shifted(r, o, rows) {
                let src = &plane[(rr - plane_r0) * cols..][..cols];
                vert.iter_mut().zip(src).for_each(|(v, s)| *v += s);
            }
        }
        let dst = &mut out[(r - out0) * cols..][..cols];
        for o in -h..=h {
            let (lo, hi) = valid_range(cols, o);
            if lo >= hi {
                continue;
            }
            let src = &vert[(lo as isize + o) as usize..(hi as isize + o) as usize];
            dst[lo..hi].iter_mut().zip(src).for_each(|(d, s)| *d += s);
        }
    }
    out
}

/// Converts dissimilarities (`∞` = invalid) stored offset-major into
/// normalized weights in place; returns `L = 1/Σw²` per pixel.
/// `scale(i)` divides the min-shifted dissimilarity of pixel `i`.
fn normalize_weights(store: &mut [f64], np: usize, scale: &[f64]) -> Vec<f64> {
    let mut min = vec![f64::INFINITY; np];
    for block in store.chunks_exact(np) {
        min.iter_mut().zip(block).for_each(|(m, v)| *m = m.min(*v));
    }
    let mut sum = vec![0.0; np];
    for block in store.chunks_exact_mut(np) {
        for i in 0..np {
            let w = (-(block[i] - min[i]) / scale[i]).exp();
            block[i] = w;
            sum[i] += w;
        }
    }
    let mut sq = vec![0.0; np];
    for block in store.chunks_exact_mut(np) {
        for i in 0..np {
            let w = block[i] / sum[i];
            block[i] = w;
            sq[i] += w * w;
        }
    }
    sq.iter().map(|s| 1.0 / s).collect()
}

/// Replaces the dissimilarity of the zero offset (block `center`) by the
/// smallest dissimilarity among the other offsets of the same pixel.
fn cap_self_dissim(store: &mut [f64], np: usize, center: usize) {
    let mut best = vec![f64::INFINITY; np];
    for (k, block) in store.chunks_exact(np).enumerate() {
        if k != center {
            best.iter_mut().zip(block).for_each(|(m, v)| *m = m.min(*v));
        }
    }
    let own = &mut store[center * np..][..np];
    own.iter_mut().zip(&best).filter(|(_, b)| b.is_finite()).for_each(|(v, b)| *v = *b);
}

/// Running sums of the aggregation for one tile.
struct Accumulator {
    z: Vec<Complex64>,
    intensity: Vec<f64>,
    p1: Vec<f64>,
    p2: Vec<f64>,
    den: Vec<f64>,
}

impl Accumulator {
    fn new(n: usize) -> Self {
        Self {
            z: vec![Complex64::new(0.0, 0.0); n],
            intensity: vec![0.0; n],
            p1: vec![0.0; n],
            p2: vec![0.0; n],
            den: vec![0.0; n],
        }
    }

    #[inline]
    fn add(&mut self, i: usize, c: f64, z: Complex64, px: &Pixels, j: usize) {
        self.z[i] += z * c;
        self.intensity[i] += c * px.intensity[j];
        self.p1[i] += c * px.p1[j];
        self.p2[i] += c * px.p2[j];
        self.den[i] += c;
    }

    fn finish(self, enl: Vec<f64>, eta: Vec<f64>, moment_coherence: Vec<f64>) -> Maps {
        let n = self.den.len();
        let mut maps = Maps::with_capacity(n);
        for i in 0..n {
            let d = self.den[i];
            let z = self.z[i] / d;
            let (p1, p2) = (self.p1[i] / d, self.p2[i] / d);
            let norm = (p1 * p2).sqrt();
            maps.phase.push(wrap_phase(z.arg()));
            maps.intensity.push(self.intensity[i] / d);
            maps.coherence.push(if norm > 0.0 { (z.norm() / norm).min(1.0) } else { 0.0 });
            maps.enl.push(enl[i].max(1.0));
        }
        maps.eta = eta;
        maps.moment_coherence = moment_coherence;
        maps
    }
}

// ---------------------------------------------------------------- stage 1

struct Stage1Ctx<'a> {
    px: &'a Pixels,
    power: Vec<f64>,
    log_abs_z: Vec<f64>,
    phase: Vec<f64>,
    reference: Vec<f64>,
    params: &'a FilterParams,
    table: &'a SigmaTable,
}

pub(super) fn stage1(pair: &SlcPair, params: &FilterParams) -> Maps {
    let px = Pixels::new(pair);
    let phase: Vec<f64> = px.z.iter().map(|z| z.arg()).collect();
    let ctx = Stage1Ctx {
        power: px.p1.iter().zip(&px.p2).map(|(a, b)| a + b).collect(),
        log_abs_z: px.z.iter().map(|z| z.norm().ln()).collect(),
        reference: unwrap_references(&phase, px.rows, px.cols),
        phase,
        px: &px,
        params,
        table: SigmaTable::global(),
    };
    let halo = params.patch_half_stage1;
    let tiles = plan_tiles(px.rows, px.cols, params.search_len(), halo);
    let parts: Vec<Maps> = tiles.par_iter().map(|&(r0, r1)| stage1_tile(&ctx, r0, r1)).collect();
    let mut maps = Maps::with_capacity(px.rows * px.cols);
    parts.into_iter().for_each(|m| maps.extend(m));
    maps
}

fn unwrap_references(phase: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let h = UNWRAP_REFERENCE_HALF as isize;
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = Complex64::new(0.0, 0.0);
            for dr in -h..=h {
                let Some(rr) = shifted(r, dr, rows) else { continue };
                for dc in -h..=h {
                    if let Some(cc) = shifted(c, dc, cols) {
                        acc += Complex64::from_polar(1.0, phase[rr * cols + cc]);
                    }
                }
            }
            out.push(acc.arg());
        }
    }
    out
}

/// Phase difference of two principal values, wrapped to (−π, π].
#[inline]
fn wrap_difference(a: f64, b: f64) -> f64 {
    let d = a - b;
    if d > PI {
        d - 2.0 * PI
    } else if d <= -PI {
        d + 2.0 * PI
    } else {
        d
    }
}

fn stage1_tile(ctx: &Stage1Ctx, r0: usize, r1: usize) -> Maps {
    let px = ctx.px;
    let (rows, cols) = (px.rows, px.cols);
    let (s, ph) = (ctx.params.search_half, ctx.params.patch_half_stage1);
    let offsets = search_offsets(s);
    let n_off = offsets.len();
    let patch_len = ((2 * ph + 1) * (2 * ph + 1)) as f64;

    let src0 = r0.saturating_sub(ph);
    let src1 = (r1 + ph).min(rows);
    let q0 = src0.saturating_sub(ph);
    let q1 = (src1 + ph).min(rows);
    let l0 = q0.saturating_sub(s);

    // δ¹ is symmetric in its two pixels, so ℓ_{−d}(q) = ℓ_d(q − d): only the
    // half plane `d_r > 0 ∨ (d_r = 0 ∧ d_c ≥ 0)` is evaluated.
    let is_half = |(dr, dc): (isize, isize)| dr > 0 || (dr == 0 && dc >= 0);
    let mut half_slot = vec![usize::MAX; n_off];
    let mut half_planes: Vec<Vec<f64>> = Vec::new();
    for (k, &(dr, dc)) in offsets.iter().enumerate() {
        if !is_half((dr, dc)) {
            continue;
        }
        half_slot[k] = half_planes.len();
        let mut plane = vec![0.0; (q1 - l0) * cols];
        let (c_lo, c_hi) = valid_range(cols, dc);
        for row in l0..q1 {
            let Some(r2) = shifted(row, dr, rows) else { continue };
            let out = &mut plane[(row - l0) * cols..][..cols];
            for c in c_lo..c_hi {
                let i = row * cols + c;
                let j = r2 * cols + (c as isize + dc) as usize;
                out[c] = log_delta1_from_parts(
                    ctx.power[i],
                    ctx.power[j],
                    px.z[i],
                    px.z[j],
                    ctx.log_abs_z[i],
                    ctx.log_abs_z[j],
                );
            }
        }
        half_planes.push(plane);
    }
    let mirror = |k: usize| -> usize {
        let (dr, dc) = offsets[k];
        let m = offsets.iter().position(|&o| o == (-dr, -dc)).expect("symmetric window");
        half_slot[m]
    };

    // Δ¹(p, d) for patch centers in [src0, src1)
    let np = (src1 - src0) * cols;
    let mut store = vec![0.0; n_off * np];
    let mut plane = vec![0.0; (q1 - q0) * cols];
    let col_counts: Vec<Vec<f64>> = offsets
        .iter()
        .map(|&(_, dc)| {
            (0..cols)
                .map(|c| {
                    let (lo, hi) = overlap(c, dc, ph, cols);
                    (hi - lo + 1).max(0) as f64
                })
                .collect()
        })
        .collect();
    for (k, &(dr, dc)) in offsets.iter().enumerate() {
        let view: &[f64] = if is_half((dr, dc)) {
            &half_planes[half_slot[k]][(q0 - l0) * cols..]
        } else {
            let src = &half_planes[mirror(k)];
            plane.iter_mut().for_each(|v| *v = 0.0);
            let (c_lo, c_hi) = valid_range(cols, dc);
            for row in q0..q1 {
                let Some(r2) = shifted(row, dr, rows) else { continue };
                let from = &src[(r2 - l0) * cols..][..cols];
                let to = &mut plane[(row - q0) * cols..][..cols];
                for c in c_lo..c_hi {
                    to[c] = from[(c as isize + dc) as usize];
                }
            }
            &plane
        };
        let sums = box_sum(view, q0, src0, src1, ph, rows, cols);
        let block = &mut store[k * np..][..np];
        let (c_lo, c_hi) = valid_range(cols, dc);
        for pr in src0..src1 {
            let row = &mut block[(pr - src0) * cols..][..cols];
            if shifted(pr, dr, rows).is_none() {
                row.iter_mut().for_each(|v| *v = f64::INFINITY);
                continue;
            }
            let (lo, hi) = overlap(pr, dr, ph, rows);
            let nr = (hi - lo + 1) as f64;
            let srow = &sums[(pr - src0) * cols..][..cols];
            for c in 0..cols {
                row[c] =
                    if c >= c_lo && c < c_hi { -srow[c] * patch_len / (nr * col_counts[k][c]) } else { f64::INFINITY };
            }
        }
    }
    drop(half_planes);

    let center = n_off / 2;
    cap_self_dissim(&mut store, np, center);
    let scale = vec![ctx.params.h1; np];
    let looks = normalize_weights(&mut store, np, &scale);

    // heterogeneity for own rows
    let own = (r1 - r0) * cols;
    let own_off = (r0 - src0) * cols;
    let (mut m1, mut m2) = (vec![0.0; own], vec![0.0; own]);
    let (mut cross, mut f1, mut f2) = (vec![0.0; own], vec![0.0; own], vec![0.0; own]);
    for (k, &(dr, dc)) in offsets.iter().enumerate() {
        let block = &store[k * np + own_off..][..own];
        let (c_lo, c_hi) = valid_range(cols, dc);
        for xr in r0..r1 {
            let Some(yr) = shifted(xr, dr, rows) else { continue };
            for c in c_lo..c_hi {
                let i = (xr - r0) * cols + c;
                let w = block[i];
                let x = xr * cols + c;
                let y = yr * cols + (c as isize + dc) as usize;
                let e = wrap_difference(ctx.phase[y], ctx.reference[x]);
                m1[i] += w * e;
                m2[i] += w * e * e;
                let (a, b) = (px.p1[y], px.p2[y]);
                cross[i] += w * a * b;
                f1[i] += w * a * a;
                f2[i] += w * b * b;
            }
        }
    }
    let gamma: Vec<f64> = (0..own).map(|i| MomentCoherence::from_sums(cross[i], f1[i], f2[i]).coherence).collect();
    let eta: Vec<f64> =
        (0..own).map(|i| heterogeneity_index((m2[i] - m1[i] * m1[i]).max(0.0), ctx.table.variance(gamma[i]))).collect();

    // aggregation
    let mut acc = Accumulator::new(own);
    let mut y = vec![0.0; np];
    for (k, &(dr, dc)) in offsets.iter().enumerate() {
        let block = &store[k * np..][..np];
        y.iter_mut().zip(block).zip(&looks).for_each(|((y, w), l)| *y = l * w);
        let coef = box_sum(&y, src0, r0, r1, ph, rows, cols);
        let (c_lo, c_hi) = valid_range(cols, dc);
        for xr in r0..r1 {
            let Some(yr) = shifted(xr, dr, rows) else { continue };
            for c in c_lo..c_hi {
                let i = (xr - r0) * cols + c;
                let j = yr * cols + (c as isize + dc) as usize;
                acc.add(i, coef[i], px.z[j], px, j);
            }
        }
    }
    let sq: Vec<f64> = looks.iter().map(|l| l * l).collect();
    let num = box_sum(&sq, src0, r0, r1, ph, rows, cols);
    let den = box_sum(&looks, src0, r0, r1, ph, rows, cols);
    let enl = num.iter().zip(&den).map(|(a, b)| a / b).collect();
    acc.finish(enl, eta, gamma)
}

// ---------------------------------------------------------------- stage 2

struct Stage2Ctx<'a> {
    px: Pixels,
    /// Guidance intensity, coherence and phasor.
    g_int: Vec<f64>,
    g_coh: Vec<f64>,
    g_cos: Vec<f64>,
    g_sin: Vec<f64>,
    /// `1 / ((1 − γ²) I)` of the guidance.
    g_m: Vec<f64>,
    sigma: &'a [f64],
    fringe: &'a FringeField,
    params: &'a FilterParams,
    xi: XiModel,
}

pub(super) fn stage2(
    pair: &SlcPair,
    guide: &EstimateBundle,
    sigma: &[f64],
    fringe: &FringeField,
    params: &FilterParams,
    xi: XiModel,
) -> Maps {
    let g_int: Vec<f64> = guide.intensity.values().iter().map(|v| v.max(f64::MIN_POSITIVE)).collect();
    let g_coh: Vec<f64> = guide.coherence.values().iter().map(|g| g.clamp(0.0, MAX_GUIDE_COHERENCE)).collect();
    let g_m = g_int.iter().zip(&g_coh).map(|(i, g)| 1.0 / ((1.0 - g * g) * i)).collect();
    let ctx = Stage2Ctx {
        px: Pixels::new(pair),
        g_cos: guide.phase.values().iter().map(|p| p.cos()).collect(),
        g_sin: guide.phase.values().iter().map(|p| p.sin()).collect(),
        g_int,
        g_coh,
        g_m,
        sigma,
        fringe,
        params,
        xi,
    };
    let (rows, cols) = (ctx.px.rows, ctx.px.cols);
    let tiles = plan_tiles(rows, cols, params.search_len(), params.patch_half_stage2);
    let parts: Vec<Maps> = tiles.par_iter().map(|&(r0, r1)| stage2_tile(&ctx, r0, r1)).collect();
    let mut maps = Maps::with_capacity(rows * cols);
    parts.into_iter().for_each(|m| maps.extend(m));
    maps
}

fn stage2_tile(ctx: &Stage2Ctx, r0: usize, r1: usize) -> Maps {
    let px = &ctx.px;
    let (rows, cols) = (px.rows, px.cols);
    let (s, ph) = (ctx.params.search_half, ctx.params.patch_half_stage2);
    let offsets = search_offsets(s);
    let n_off = offsets.len();
    let src0 = r0.saturating_sub(ph);
    let src1 = (r1 + ph).min(rows);
    let q0 = src0.saturating_sub(ph);
    let q1 = (src1 + ph).min(rows);
    let np = (src1 - src0) * cols;
    let at = |pr: usize, c: usize| pr * cols + c;

    // per-center tables over [src0, src1)
    let nk = ph + 1;
    let mut g1 = vec![vec![0.0; np]; nk];
    let mut gfull = vec![0.0; np];
    let mut scale = vec![0.0; np];
    let n_pow = 2 * s + 1;
    let mut pow_az = vec![vec![Complex64::new(0.0, 0.0); np]; n_pow];
    let mut pow_r = vec![vec![Complex64::new(0.0, 0.0); np]; n_pow];
    for i in 0..np {
        let g = (src0 * cols) + i;
        let sigma = ctx.sigma[g];
        let mut full = 0.0;
        for (j, plane) in g1.iter_mut().enumerate() {
            plane[i] = (-((j * j) as f64) / (2.0 * sigma * sigma)).exp();
        }
        for o in -(ph as isize)..=(ph as isize) {
            full += g1[o.unsigned_abs()][i];
        }
        gfull[i] = full;
        scale[i] = ctx.params.h2 * ctx.xi.eval(1.0 / sigma);
        let (f_r, f_az) = (ctx.fringe.f_range.values()[g], ctx.fringe.f_azimuth.values()[g]);
        for k in 0..n_pow {
            let m = k as f64 - s as f64;
            pow_az[k][i] = Complex64::from_polar(1.0, m * f_az);
            pow_r[k][i] = Complex64::from_polar(1.0, m * f_r);
        }
    }
    // separable per-center Gaussian weights g(j)·g(k)
    let mut g2 = vec![vec![0.0; np]; nk * nk];
    for j in 0..nk {
        for k in 0..nk {
            let plane = &mut g2[j * nk + k];
            for i in 0..np {
                plane[i] = g1[j][i] * g1[k][i];
            }
        }
    }

    // Δ²(p, d)
    let pad = ph;
    let width = cols + 2 * pad;
    let qrows = q1 - q0;
    let mut img = [vec![0.0; qrows * width], vec![0.0; qrows * width], vec![0.0; qrows * width]];
    let mut pairs = vec![vec![0.0; qrows * cols]; 3 * nk];
    let mut store = vec![0.0; n_off * np];
    let mut inner = vec![0.0; cols];
    let mut nums = [vec![0.0; cols], vec![0.0; cols], vec![0.0; cols]];
    for (k, &(dr, dc)) in offsets.iter().enumerate() {
        img.iter_mut().for_each(|p| p.iter_mut().for_each(|v| *v = 0.0));
        let (c_lo, c_hi) = valid_range(cols, dc);
        for row in q0..q1 {
            let Some(r2) = shifted(row, dr, rows) else { continue };
            let base = (row - q0) * width + pad;
            for c in c_lo..c_hi {
                let x = at(row, c);
                let y = at(r2, (c as isize + dc) as usize);
                let a = ctx.g_int[x] * ctx.g_m[y] + ctx.g_int[y] * ctx.g_m[x];
                let b = ctx.g_coh[x] * ctx.g_coh[y] * a;
                let cos = ctx.g_cos[x] * ctx.g_cos[y] + ctx.g_sin[x] * ctx.g_sin[y];
                let sin = ctx.g_sin[x] * ctx.g_cos[y] - ctx.g_cos[x] * ctx.g_sin[y];
                img[0][base + c] = a;
                img[1][base + c] = b * cos;
                img[2][base + c] = b * sin;
            }
        }
        // horizontal pair sums T_k(c) = X(c + k) + X(c − k), T_0 = X
        for (m, image) in img.iter().enumerate() {
            for row in 0..qrows {
                let src = &image[row * width..][..width];
                for kk in 0..nk {
                    let dst = &mut pairs[m * nk + kk][row * cols..][..cols];
                    if kk == 0 {
                        dst.copy_from_slice(&src[pad..pad + cols]);
                    } else {
                        let (plus, minus) = (&src[pad + kk..pad + kk + cols], &src[pad - kk..pad - kk + cols]);
                        for c in 0..cols {
                            dst[c] = plus[c] + minus[c];
                        }
                    }
                }
            }
        }
        let block = &mut store[k * np..][..np];
        for pr in src0..src1 {
            let prow = (pr - src0) * cols;
            let out = &mut block[prow..][..cols];
            if shifted(pr, dr, rows).is_none() {
                out.iter_mut().for_each(|v| *v = f64::INFINITY);
                continue;
            }
            for (m, num) in nums.iter_mut().enumerate() {
                num.iter_mut().for_each(|v| *v = 0.0);
                for kk in 0..nk {
                    let tk = &pairs[m * nk..][kk];
                    inner.copy_from_slice(&tk[(pr - q0) * cols..][..cols]);
                    let g0 = &g1[0][prow..][..cols];
                    inner.iter_mut().zip(g0).for_each(|(v, g)| *v *= g);
                    for j in 1..=ph {
                        let gj = &g1[j][prow..][..cols];
                        match (shifted(pr, j as isize, rows), shifted(pr, -(j as isize), rows)) {
                            (Some(up), Some(dn)) => {
                                let a = &tk[(up - q0) * cols..][..cols];
                                let b = &tk[(dn - q0) * cols..][..cols];
                                for c in 0..cols {
                                    inner[c] += gj[c] * (a[c] + b[c]);
                                }
                            }
                            (Some(r), None) | (None, Some(r)) => {
                                let a = &tk[(r - q0) * cols..][..cols];
                                for c in 0..cols {
                                    inner[c] += gj[c] * a[c];
                                }
                            }
                            (None, None) => {}
                        }
                    }
                    let gk = &g1[kk][prow..][..cols];
                    for c in 0..cols {
                        num[c] += gk[c] * inner[c];
                    }
                }
            }
            let (rlo, rhi) = overlap(pr, dr, ph, rows);
            let full_rows = rlo == -(ph as isize) && rhi == ph as isize;
            for c in 0..cols {
                if c < c_lo || c >= c_hi {
                    out[c] = f64::INFINITY;
                    continue;
                }
                let i = prow + c;
                let sum_over = |lo: isize, hi: isize| (lo..=hi).map(|o| g1[o.unsigned_abs()][i]).sum::<f64>();
                let gr = if full_rows { gfull[i] } else { sum_over(rlo, rhi) };
                let (clo, chi) = overlap(c, dc, ph, cols);
                let gc = if clo == -(ph as isize) && chi == ph as isize { gfull[i] } else { sum_over(clo, chi) };
                let den = gr * gc;
                let e = pow_az[(dr + s as isize) as usize][i] * pow_r[(dc + s as isize) as usize][i];
                let v = nums[0][c] - e.re * nums[1][c] + e.im * nums[2][c] - 2.0 * den;
                out[c] = (4.0 / PI * v / den).max(0.0);
            }
        }
    }
    drop(pairs);

    let looks = normalize_weights(&mut store, np, &scale);

    // aggregation with per-source Gaussian weights
    let own = (r1 - r0) * cols;
    let mut acc = Accumulator::new(own);
    let mut y = vec![0.0; np];
    let mut h = vec![vec![0.0; np]; nk];
    for (k, &(dr, dc)) in offsets.iter().enumerate() {
        let block = &store[k * np..][..np];
        y.iter_mut().zip(block).zip(&looks).for_each(|((y, w), l)| *y = l * w);
        let coef = gaussian_gather(&y, &g2, &mut h, nk, src0, src1, r0, r1, rows, cols);
        let (c_lo, c_hi) = valid_range(cols, dc);
        let (ka, kr) = ((dr + s as isize) as usize, (dc + s as isize) as usize);
        for xr in r0..r1 {
            let Some(yr) = shifted(xr, dr, rows) else { continue };
            for c in c_lo..c_hi {
                let i = (xr - r0) * cols + c;
                let p = (xr - src0) * cols + c;
                let j = yr * cols + (c as isize + dc) as usize;
                let comp = (pow_az[ka][p] * pow_r[kr][p]).conj();
                acc.add(i, coef[i], px.z[j] * comp, px, j);
            }
        }
    }
    let sq: Vec<f64> = looks.iter().map(|l| l * l).collect();
    let num = gaussian_gather(&sq, &g2, &mut h, nk, src0, src1, r0, r1, rows, cols);
    let den = gaussian_gather(&looks, &g2, &mut h, nk, src0, src1, r0, r1, rows, cols);
    let enl = num.iter().zip(&den).map(|(a, b)| a / b).collect();
    acc.finish(enl, Vec::new(), Vec::new())
}

/// `C(x) = Σ_o g_p(o) Y(p)` with `p = x − o`, for outputs `[r0, r1)` and
/// sources stored over `[src0, src1)`; `g2[j·nk + k]` holds `g_p(j)·g_p(k)`.
#[allow(clippy::too_many_arguments)]
fn gaussian_gather(
    y: &[f64],
    g2: &[Vec<f64>],
    h: &mut [Vec<f64>],
    nk: usize,
    src0: usize,
    src1: usize,
    r0: usize,
    r1: usize,
    rows: usize,
    cols: usize,
) -> Vec<f64> {
    let ph = (nk - 1) as isize;
    // horizontal pass: H_j(p_r, c) = Σ_{o_c} Y(p_r, c − o_c)·g(j)g(|o_c|)
    for (j, hj) in h.iter_mut().enumerate() {
        hj.iter_mut().for_each(|v| *v = 0.0);
        for pr in src0..src1 {
            let base = (pr - src0) * cols;
            let yr = &y[base..][..cols];
            let out = &mut hj[base..][..cols];
            for o in -ph..=ph {
                let g = &g2[j * nk + o.unsigned_abs()][base..][..cols];
                let (lo, hi) = valid_range(cols, -o);
                for c in lo..hi {
                    let src = (c as isize - o) as usize;
                    out[c] += yr[src] * g[src];
                }
            }
        }
    }
    let mut out = vec![0.0; (r1 - r0) * cols];
    for xr in r0..r1 {
        let dst = &mut out[(xr - r0) * cols..][..cols];
        for o in -ph..=ph {
            let Some(pr) = shifted(xr, -o, rows) else { continue };
            let src = &h[o.unsigned_abs()][(pr - src0) * cols..][..cols];
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
        }
    }
    out
}
