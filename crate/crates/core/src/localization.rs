//! MUSIC-type subspace localization from a noisy MSR matrix and the
//! two-target resolution study.
//!
//! The imaging functional at a search point `z` is
//! `I(z) = [sum_i |P g_i(z)|^2]^{-1/2}` where `g_i(z)` collects the
//! `e_i`-components of the source-side steering fields `D^2 G(z, s_m) p`
//! and `P` projects onto the orthogonal complement of the estimated
//! signal subspace. `I` peaks near target centers.

use nalgebra::{DMatrix, Vector3};
use rayon::prelude::*;
use std::io::Write;

use crate::error::{Error, Result};
use crate::forward::{add_noise, green_hessian, msr_forward_multi, MsrMatrix, SensorArray, TargetInstance};
use crate::tensor::{CptTensor, PhysicalConfig};
use crate::util::derive_seed;

/// How many right singular directions are attributed to signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankRule {
    /// Keep exactly `r` directions (use `3k` for `k` known targets).
    Fixed(usize),
    /// Keep directions with singular value above `tau * sigma_1`.
    Threshold(f64),
}

/// Orthogonal projector onto the estimated noise subspace of the source
/// side, stored through its signal basis: `P = I - V V^T`.
#[derive(Debug, Clone)]
pub struct NoiseProjector {
    /// `M x r` orthonormal signal basis (right singular vectors).
    v: DMatrix<f64>,
    /// All singular values of the data matrix, descending.
    sigma: Vec<f64>,
    m: usize,
}

impl NoiseProjector {
    pub fn signal_rank(&self) -> usize {
        self.v.ncols()
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn sigma1(&self) -> f64 {
        self.sigma.first().copied().unwrap_or(0.0)
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.sigma
    }

    /// Materializes `P = I - V V^T` (for diagnostics and invariant
    /// checks; the functional never forms it).
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::identity(self.m, self.m) - &self.v * self.v.transpose()
    }

    /// `|P g|^2 = |g|^2 - |V^T g|^2` without forming `P`.
    pub fn residual_norm_sq(&self, g: &[f64]) -> f64 {
        debug_assert_eq!(g.len(), self.m);
        let total: f64 = g.iter().map(|x| x * x).sum();
        let mut proj = 0.0;
        for k in 0..self.v.ncols() {
            let mut c = 0.0;
            for (i, gi) in g.iter().enumerate() {
                c += self.v[(i, k)] * gi;
            }
            proj += c * c;
        }
        (total - proj).max(0.0)
    }

    pub(crate) fn basis(&self) -> &DMatrix<f64> {
        &self.v
    }
}

/// Estimates the signal subspace of `A` from the eigendecomposition of
/// `A^T A` (the right-singular factor of `A`) and returns the noise
/// projector.
pub fn noise_projector(msr: &MsrMatrix, rule: RankRule) -> Result<NoiseProjector> {
    let m = msr.ncols();
    let n = msr.nrows();
    let ata = msr.a.transpose() * &msr.a;
    let eig = ata.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let sigma: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0).sqrt()).collect();
    let rank = match rule {
        RankRule::Fixed(r) => r,
        RankRule::Threshold(tau) => {
            if !(tau > 0.0 && tau < 1.0) {
                return Err(Error::Rank(format!("threshold must lie in (0, 1), got {tau}")));
            }
            sigma.iter().filter(|&&s| s > tau * sigma[0]).count().max(1)
        }
    };
    if rank >= n.min(m) {
        return Err(Error::Rank(format!("signal rank {rank} must be below min(N, M) = {}", n.min(m))));
    }
    let mut v = DMatrix::zeros(m, rank);
    for (k, &i) in order.iter().take(rank).enumerate() {
        v.set_column(k, &eig.eigenvectors.column(i));
    }
    Ok(NoiseProjector { v, sigma, m })
}

/// Steering residual at one point: feeds `g_i(z)` for `i = 1, 2, 3`
/// through the projector and returns `[sum_i |P g_i|^2]^{-1/2}`.
pub fn music_functional(
    proj: &NoiseProjector,
    z: &Vector3<f64>,
    sources: &[Vector3<f64>],
    p: &Vector3<f64>,
) -> Result<f64> {
    if sources.len() != proj.dim() {
        return Err(Error::InconsistentInputs(format!(
            "projector dimension {} does not match {} sources",
            proj.dim(),
            sources.len()
        )));
    }
    let r = proj.v.ncols();
    let mut total = 0.0;
    let mut coeff = vec![0.0f64; 3 * r];
    for (m_idx, s) in sources.iter().enumerate() {
        let v = green_hessian(z, s)? * p;
        total += v.norm_squared();
        for k in 0..r {
            let w = proj.v[(m_idx, k)];
            coeff[3 * k] += w * v[0];
            coeff[3 * k + 1] += w * v[1];
            coeff[3 * k + 2] += w * v[2];
        }
    }
    let removed: f64 = coeff.iter().map(|c| c * c).sum();
    let res = (total - removed).max(f64::MIN_POSITIVE);
    Ok(1.0 / res.sqrt())
}

/// A rectangular lattice of search points; planar by default, volume
/// grids carry several z-levels.
#[derive(Debug, Clone)]
pub struct SearchGrid {
    pub step: f64,
    nx: usize,
    ny: usize,
    x0: f64,
    y0: f64,
    z_levels: Vec<f64>,
    points: Vec<Vector3<f64>>,
}

impl SearchGrid {
    /// Symmetric plane grid `[-half, half]^2 x {z}` with lattice points
    /// at integer multiples of `step` (the origin is always a node).
    pub fn plane(half_extent: f64, step: f64, z: f64) -> Result<Self> {
        if !(step > 0.0 && half_extent >= step) {
            return Err(Error::Domain(format!("invalid grid: half_extent {half_extent}, step {step}")));
        }
        let k = (half_extent / step).floor() as i64;
        let n = (2 * k + 1) as usize;
        let x0 = -(k as f64) * step;
        let mut points = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                points.push(Vector3::new(x0 + i as f64 * step, x0 + j as f64 * step, z));
            }
        }
        Ok(Self { step, nx: n, ny: n, x0, y0: x0, z_levels: vec![z], points })
    }

    /// Volume grid spanning `[-half, half]^2 x [z_min, z_max]` on the
    /// same lattice convention.
    pub fn volume(half_extent: f64, step: f64, z_min: f64, z_max: f64) -> Result<Self> {
        if z_max < z_min {
            return Err(Error::Domain("z_max must be at least z_min".into()));
        }
        let base = Self::plane(half_extent, step, 0.0)?;
        let levels = ((z_max - z_min) / step).floor() as usize + 1;
        let z_levels: Vec<f64> = (0..levels).map(|k| z_min + k as f64 * step).collect();
        let mut points = Vec::with_capacity(base.points.len() * levels);
        for &z in &z_levels {
            points.extend(base.points.iter().map(|p| Vector3::new(p.x, p.y, z)));
        }
        Ok(Self { z_levels, points, ..base })
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.z_levels.len())
    }

    fn index_of(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.nx + i) * self.ny + j
    }

    /// Index of the lattice node nearest to `(x, y)` in plane `k`.
    fn nearest_index(&self, x: f64, y: f64, k: usize) -> usize {
        let i = (((x - self.x0) / self.step).round().max(0.0) as usize).min(self.nx - 1);
        let j = (((y - self.y0) / self.step).round().max(0.0) as usize).min(self.ny - 1);
        self.index_of(i, j, k)
    }
}

/// Imaging result: the located maximum and the full map for export.
#[derive(Debug, Clone)]
pub struct LocateResult {
    pub z_hat: Vector3<f64>,
    pub peak_value: f64,
    pub grid: SearchGrid,
    pub values: Vec<f64>,
}

impl LocateResult {
    /// Writes `x,y,value` lines (plane grids) or `x,y,z,value`.
    pub fn write_map_csv(&self, w: &mut dyn Write) -> Result<()> {
        let planar = self.grid.z_levels.len() == 1;
        for (pt, v) in self.grid.points().iter().zip(&self.values) {
            if planar {
                writeln!(w, "{},{},{:.12e}", pt.x, pt.y, v)?;
            } else {
                writeln!(w, "{},{},{},{:.12e}", pt.x, pt.y, pt.z, v)?;
            }
        }
        Ok(())
    }
}

/// Evaluates the functional over a point set in parallel.
pub fn eval_music_map(
    proj: &NoiseProjector,
    points: &[Vector3<f64>],
    sources: &[Vector3<f64>],
    p: &Vector3<f64>,
) -> Result<Vec<f64>> {
    points.par_iter().map(|z| music_functional(proj, z, sources, p)).collect()
}

/// Runs the functional over a grid and reports the argmax (ties broken
/// by grid order, which is deterministic).
pub fn locate(
    msr: &MsrMatrix,
    grid: &SearchGrid,
    sources: &[Vector3<f64>],
    p: &Vector3<f64>,
    rule: RankRule,
) -> Result<LocateResult> {
    let proj = noise_projector(msr, rule)?;
    let values = eval_music_map(&proj, grid.points(), sources, p)?;
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    Ok(LocateResult { z_hat: grid.points()[best], peak_value: values[best], grid: grid.clone(), values })
}

// ---------------------------------------------------------------------
// Two-target resolution study
// ---------------------------------------------------------------------

/// Thresholds of the two-peak differentiation test.
#[derive(Debug, Clone, Copy)]
pub struct DifferentiationCriterion {
    /// Local maxima must exceed this fraction of the global maximum.
    pub peak_rel: f64,
    /// The midpoint value must fall below this fraction of the smaller
    /// peak.
    pub valley_rel: f64,
}

impl Default for DifferentiationCriterion {
    fn default() -> Self {
        Self { peak_rel: 0.5, valley_rel: 0.75 }
    }
}

/// Configuration of the resolution study at one plate distance `L`.
#[derive(Debug, Clone)]
pub struct ResolutionParams {
    /// Distance of the source and receiver planes from z = 0.
    pub l: f64,
    /// Noise levels (reciprocal SNR), each in (0, 1).
    pub noise_levels: Vec<f64>,
    /// Trials per bisection step; majority vote decides.
    pub trials: usize,
    pub seed_base: u64,
    /// Imaging lattice step near the targets.
    pub map_step: f64,
    /// Sensor grid is `n_side^2` per plate.
    pub n_side: usize,
    /// Tensor shared by the two identical targets.
    pub cpt: CptTensor,
    pub config: PhysicalConfig,
    pub criterion: DifferentiationCriterion,
    pub bisection_iters: usize,
}

impl ResolutionParams {
    pub fn new(l: f64, noise_levels: Vec<f64>, trials: usize, cpt: CptTensor, config: PhysicalConfig) -> Self {
        Self {
            l,
            noise_levels,
            trials,
            seed_base: 0x5eed,
            map_step: 0.01,
            n_side: 16,
            cpt,
            config,
            criterion: DifferentiationCriterion::default(),
            bisection_iters: 8,
        }
    }
}

/// One row of the study output.
#[derive(Debug, Clone, Copy)]
pub struct ResolutionRow {
    pub noise_level: f64,
    pub snr: f64,
    pub d_min: f64,
}

/// Minimum separations per noise level at fixed `L`.
#[derive(Debug, Clone)]
pub struct ResolutionTable {
    pub l: f64,
    pub rows: Vec<ResolutionRow>,
}

impl ResolutionTable {
    /// `d_min` should not decrease as noise grows.
    pub fn is_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].d_min >= w[0].d_min - 1e-12)
    }

    /// Least-squares slope of `ln d_min` against `ln SNR`.
    pub fn log_log_slope(&self) -> f64 {
        let n = self.rows.len() as f64;
        let xs: Vec<f64> = self.rows.iter().map(|r| r.snr.ln()).collect();
        let ys: Vec<f64> = self.rows.iter().map(|r| r.d_min.ln()).collect();
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        cov / var
    }

    /// Two CSV lines mirroring the reference layout: noise levels, then
    /// `d_min` values.
    pub fn write_csv(&self, w: &mut dyn Write) -> Result<()> {
        let head: Vec<String> = self.rows.iter().map(|r| format!("{}", r.noise_level)).collect();
        let vals: Vec<String> = self.rows.iter().map(|r| format!("{:.4}", r.d_min)).collect();
        writeln!(w, "noise_level,{}", head.join(","))?;
        writeln!(w, "d_min,{}", vals.join(","))?;
        Ok(())
    }
}

/// Local maxima of a plane map above `floor`, with plateau clustering:
/// candidate nodes (not below any 8-neighbor) that touch are merged and
/// represented by their maximal node.
fn plane_local_maxima(grid: &SearchGrid, values: &[f64], floor: f64) -> Vec<(usize, f64)> {
    let (nx, ny, _) = grid.shape();
    let mut candidate = vec![false; values.len()];
    for i in 0..nx {
        for j in 0..ny {
            let idx = grid.index_of(i, j, 0);
            let v = values[idx];
            if v < floor {
                continue;
            }
            let mut is_cand = true;
            'nb: for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (ii, jj) = (i as i64 + di, j as i64 + dj);
                    if ii >= 0
                        && jj >= 0
                        && (ii as usize) < nx
                        && (jj as usize) < ny
                        && values[grid.index_of(ii as usize, jj as usize, 0)] > v
                    {
                        is_cand = false;
                        break 'nb;
                    }
                }
            }
            candidate[idx] = is_cand;
        }
    }
    let mut seen = vec![false; values.len()];
    let mut peaks = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            let idx = grid.index_of(i, j, 0);
            if !candidate[idx] || seen[idx] {
                continue;
            }
            let mut stack = vec![(i, j)];
            let mut best = (idx, values[idx]);
            seen[idx] = true;
            while let Some((ci, cj)) = stack.pop() {
                for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        let (ii, jj) = (ci as i64 + di, cj as i64 + dj);
                        if ii < 0 || jj < 0 || ii as usize >= nx || jj as usize >= ny {
                            continue;
                        }
                        let nidx = grid.index_of(ii as usize, jj as usize, 0);
                        if candidate[nidx] && !seen[nidx] {
                            seen[nidx] = true;
                            stack.push((ii as usize, jj as usize));
                            if values[nidx] > best.1 {
                                best = (nidx, values[nidx]);
                            }
                        }
                    }
                }
            }
            peaks.push(best);
        }
    }
    peaks
}

/// Applies the two-peak test to a noisy two-target MSR with centers at
/// `(+-d/2, 0, 0)`: exactly two local maxima above `peak_rel` of the
/// global maximum, one near each center, with the midpoint value below
/// `valley_rel` of the smaller peak.
fn differentiated(
    msr: &MsrMatrix,
    d: f64,
    array: &SensorArray,
    map_step: f64,
    crit: &DifferentiationCriterion,
) -> Result<bool> {
    let proj = noise_projector(msr, RankRule::Fixed(6))?;
    let ext = d / 2.0 + (0.3f64).max(4.0 * map_step);
    let grid = SearchGrid::plane(ext, map_step, 0.0)?;
    let values = eval_music_map(&proj, grid.points(), &array.sources, &array.p)?;
    let gmax = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let peaks = plane_local_maxima(&grid, &values, crit.peak_rel * gmax);
    if peaks.len() != 2 {
        return Ok(false);
    }
    let z1 = Vector3::new(-d / 2.0, 0.0, 0.0);
    let z2 = Vector3::new(d / 2.0, 0.0, 0.0);
    let tol = (2.0 * map_step).max(d / 4.0);
    let p0 = grid.points()[peaks[0].0];
    let p1 = grid.points()[peaks[1].0];
    let (first, second) = if p0.x <= p1.x { (0, 1) } else { (1, 0) };
    let near1 = (grid.points()[peaks[first].0] - z1).norm() <= tol;
    let near2 = (grid.points()[peaks[second].0] - z2).norm() <= tol;
    if !(near1 && near2) {
        return Ok(false);
    }
    let mid = values[grid.nearest_index(0.0, 0.0, 0)];
    Ok(mid < crit.valley_rel * peaks[0].1.min(peaks[1].1))
}

/// Builds the clean two-target MSR at separation `d` along x.
fn clean_pair(d: f64, array: &SensorArray, cpt: &CptTensor, config: &PhysicalConfig) -> Result<MsrMatrix> {
    let t1 = TargetInstance { z: Vector3::new(-d / 2.0, 0.0, 0.0), cpt: cpt.clone(), config: *config };
    let t2 = TargetInstance { z: Vector3::new(d / 2.0, 0.0, 0.0), cpt: cpt.clone(), config: *config };
    msr_forward_multi(&[t1, t2], array)
}

/// Imaging lattice step used when probing separation `d`: the configured
/// step near the spot-check scales, coarser for very wide separations
/// where differentiation is easy.
fn probe_step(d: f64, map_step: f64) -> f64 {
    (d / 40.0).clamp(map_step, 0.05)
}

/// Bisects the separation of two identical targets per noise level and
/// reports the smallest separation the majority of noisy trials can
/// differentiate.
pub fn resolution_study(params: &ResolutionParams) -> Result<ResolutionTable> {
    for &nl in &params.noise_levels {
        if !(nl > 0.0 && nl < 1.0) {
            return Err(Error::Domain(format!("noise level must lie in (0, 1), got {nl}")));
        }
    }
    if !(params.l > 0.0) {
        return Err(Error::Domain(format!("plate distance must be positive, got {}", params.l)));
    }
    let array = SensorArray::plates(params.l, params.n_side)?;
    let mut rows = Vec::new();
    for (level_idx, &nl) in params.noise_levels.iter().enumerate() {
        let majority = |d: f64| -> Result<bool> {
            let clean = clean_pair(d, &array, &params.cpt, &params.config)?;
            let sigma_noise = nl * clean.sigma1();
            let step = probe_step(d, params.map_step);
            let passes: Result<Vec<bool>> = (0..params.trials)
                .into_par_iter()
                .map(|t| {
                    let seed = derive_seed(params.seed_base, &[level_idx as u64, t as u64]);
                    let noisy = add_noise(&clean, sigma_noise, seed)?;
                    differentiated(&noisy, d, &array, step, &params.criterion)
                })
                .collect();
            let passes = passes?;
            Ok(2 * passes.iter().filter(|&&b| b).count() >= params.trials)
        };
        let mut lo = params.map_step;
        let mut hi = 4.0 * params.l;
        if !majority(hi)? {
            return Err(Error::BisectionFailure(format!(
                "no differentiable separation in [{lo}, {hi}] at noise level {nl}"
            )));
        }
        for _ in 0..params.bisection_iters {
            let mid = 0.5 * (lo + hi);
            if majority(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        rows.push(ResolutionRow { noise_level: nl, snr: 1.0 / nl, d_min: hi });
    }
    Ok(ResolutionTable { l: params.l, rows })
}
