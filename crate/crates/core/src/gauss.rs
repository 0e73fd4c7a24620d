//! Gaussian limit of the scaled bound walk: the process
//! `Z(t) - B mu t` with `Cov Z(s, t) = mu c_A^2 min(s, t) + Cov_D(s, t)`,
//! where `Cov_D` comes from the service variance function `V(t)` through
//! the stationary-increments identity.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::dist::{norm_sf, DistSpec};
use crate::error::{Error, Result};
use crate::par::{self, Policy};
use crate::renewal::{self, ArithmeticGrid};
use crate::rng::StreamKey;
use crate::stats::{self, TailEstimate};

/// Default grid spacing in scaled time.
pub const DEFAULT_SPACING: f64 = 0.05;
/// Default exponent-fit window.
pub const DEFAULT_FIT_WINDOW: (f64, f64) = (2.0, 4.0);
/// Repair may move an eigenvalue by at most this fraction of the trace.
pub const REPAIR_LIMIT: f64 = 1e-6;
/// Gaussian vectors are drawn in batches of this many columns.
pub const SAMPLE_BATCH: usize = 1024;

/// Record of the eigenvalue clipping applied to the covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RepairLog {
    pub min_eigenvalue: f64,
    pub clipped: usize,
    /// Largest amount any eigenvalue was moved.
    pub max_shift: f64,
    pub trace: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussGrid {
    pub grid: ArithmeticGrid,
    pub times: Vec<f64>,
    pub cov: DMatrix<f64>,
    pub drift: Vec<f64>,
    /// Lower-triangular factor with `factor * factor^T = cov` after repair.
    pub factor: DMatrix<f64>,
    pub repair: RepairLog,
    /// Drift rate `B mu`.
    pub c: f64,
    /// Limiting variance rate `mu (c_A^2 + c_S^2)`.
    pub sigma2: f64,
}

/// Clips negative eigenvalues of a symmetric matrix to zero.
pub fn psd_repair(cov: &DMatrix<f64>) -> Result<(DMatrix<f64>, RepairLog)> {
    let trace = cov.trace();
    let eig = SymmetricEigen::new(cov.clone());
    let min_eigenvalue = eig.eigenvalues.min();
    let negative: Vec<f64> = eig.eigenvalues.iter().copied().filter(|&l| l < 0.0).collect();
    let max_shift = negative.iter().fold(0.0f64, |m, l| m.max(-l));
    let log = RepairLog {
        min_eigenvalue,
        clipped: negative.len(),
        max_shift,
        trace,
    };
    if max_shift > REPAIR_LIMIT * trace {
        return Err(Error::numeric(
            "psd_repair",
            format!(
                "eigenvalue {min_eigenvalue:e} needs a shift above {REPAIR_LIMIT:e} x trace {trace:e}; \
                 the variance estimate is too noisy"
            ),
        ));
    }
    if negative.is_empty() {
        return Ok((cov.clone(), log));
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let q = &eig.eigenvectors;
    let mut repaired = q * DMatrix::from_diagonal(&clipped) * q.transpose();
    repaired = (&repaired + repaired.transpose()) * 0.5;
    Ok((repaired, log))
}

/// Cholesky factor of a positive semidefinite matrix. Pivots below
/// `1e-12` times the largest diagonal entry are treated as zero and their
/// columns left empty.
pub fn semidefinite_cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = a.nrows();
    if a.ncols() != m {
        return Err(Error::validation("cov", "must be square"));
    }
    let scale = a.diagonal().iter().fold(0.0f64, |s, &d| s.max(d.abs()));
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut l = DMatrix::<f64>::zeros(m, m);
    for j in 0..m {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= tol {
            if d < -1e-8 * scale {
                return Err(Error::numeric(
                    "semidefinite_cholesky",
                    format!("pivot {j} is {d:e}; matrix is not positive semidefinite"),
                ));
            }
            continue;
        }
        let root = d.sqrt();
        l[(j, j)] = root;
        for i in (j + 1)..m {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / root;
        }
    }
    Ok(l)
}

impl GaussGrid {
    /// Assembles the grid from the arrival scv, the service variance function
    /// values `v[i] = V(t_i)` on `grid`, the excess parameter and the rate.
    pub fn from_variance(c2a: f64, c2s: f64, b: f64, mu: f64, grid: ArithmeticGrid, v: &[f64]) -> Result<Self> {
        if !(c2a >= 0.0 && c2a.is_finite()) {
            return Err(Error::validation("c2a", "must be non-negative"));
        }
        if !(b > 0.0 && mu > 0.0) {
            return Err(Error::validation("B", "B and mu must be positive"));
        }
        let times = grid.times();
        let cov_d = renewal::covariance_matrix(&times, v)?;
        let m = times.len();
        let cov = DMatrix::from_fn(m, m, |i, j| mu * c2a * times[i].min(times[j]) + cov_d[(i, j)]);
        let (repaired, repair) = psd_repair(&cov)?;
        let factor = semidefinite_cholesky(&repaired)?;
        let c = b * mu;
        Ok(Self {
            grid,
            drift: times.iter().map(|t| -c * t).collect(),
            times,
            cov,
            factor,
            repair,
            c,
            sigma2: mu * (c2a + c2s),
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.grid.spacing
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    /// `Sigma(t, t)` for each grid time.
    pub fn variances(&self) -> Vec<f64> {
        self.cov.diagonal().iter().copied().collect()
    }

    pub fn write_grid_csv<W: Write>(&self, out: W, seed: u64) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "drift", "variance", "seed"])?;
        for i in 0..self.len() {
            w.write_record([
                self.times[i].to_string(),
                self.drift[i].to_string(),
                self.cov[(i, i)].to_string(),
                seed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_covariance_csv<W: Write>(&self, out: W, seed: u64) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s", "t", "cov", "seed"])?;
        for i in 0..self.len() {
            for j in 0..self.len() {
                w.write_record([
                    self.times[i].to_string(),
                    self.times[j].to_string(),
                    self.cov[(i, j)].to_string(),
                    seed.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Builds the grid for service law `s`. Exponential service uses the exact
/// Brownian covariance `mu (c_A^2 + 1) min(s, t)`; any other law uses a
/// Monte Carlo variance function with `reps_for_v` replications.
pub fn build_grid(
    c2a: f64,
    s: &DistSpec,
    b: f64,
    mu: f64,
    grid: ArithmeticGrid,
    reps_for_v: u64,
    key: StreamKey,
) -> Result<GaussGrid> {
    if (s.rate() - mu).abs() > 1e-9 * mu {
        return Err(Error::validation(
            "mu",
            format!("service rate {} differs from mu = {mu}", s.rate()),
        ));
    }
    let times = grid.times();
    let v: Vec<f64> = if s.is_exponential() {
        times.iter().map(|t| mu * t).collect()
    } else {
        renewal::variance_function(s, &times, reps_for_v, key)?.v_hat
    };
    GaussGrid::from_variance(c2a, s.scv(), b, mu, grid, &v)
}

/// Maxima of sampled paths over the full grid and over coarser subgrids.
#[derive(Debug, Clone, PartialEq)]
pub struct SupSamples {
    /// Subgrid strides; stride `k` keeps grid indices `0, k, 2k, ...`.
    pub strides: Vec<usize>,
    /// `sups[s][r]`: supremum of replication `r` over subgrid `strides[s]`.
    pub sups: Vec<Vec<f64>>,
}

fn sample_batch(grid: &GaussGrid, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let m = grid.len();
    let z = DMatrix::<f64>::from_fn(m, cols, |_, _| rng.sample(StandardNormal));
    // Row block i of L Z only needs the first (i+1) column blocks of L.
    const BLOCK: usize = 64;
    let mut y = DMatrix::<f64>::zeros(m, cols);
    let mut start = 0;
    while start < m {
        let rows = BLOCK.min(m - start);
        let inner = start + rows;
        let lhs = grid.factor.view((start, 0), (rows, inner));
        let rhs = z.view((0, 0), (inner, cols));
        y.view_mut((start, 0), (rows, cols)).gemm(1.0, &lhs, &rhs, 0.0);
        start = inner;
    }
    for (i, d) in grid.drift.iter().enumerate() {
        y.row_mut(i).add_scalar_mut(*d);
    }
    y
}

/// `reps` sampled paths `Z(t_i) - c t_i`, one per column.
pub fn sample_paths(grid: &GaussGrid, reps: usize, key: StreamKey) -> DMatrix<f64> {
    let mut rng = key.rng(0);
    sample_batch(grid, reps, &mut rng)
}

/// Samples `reps` paths in fixed batches and records their grid maxima
/// (including `t = 0`) for each subgrid stride.
pub fn sup_samples(policy: Policy, grid: &GaussGrid, reps: u64, strides: &[usize], key: StreamKey) -> Result<SupSamples> {
    if strides.is_empty() || strides.contains(&0) {
        return Err(Error::validation("strides", "must be non-empty and positive"));
    }
    let batches = (reps as usize).div_ceil(SAMPLE_BATCH);
    let parts = par::map_indexed(policy, batches, |b| {
        let cols = SAMPLE_BATCH.min(reps as usize - b * SAMPLE_BATCH);
        let mut rng = key.with_replication(b as u64).rng(0);
        let y = sample_batch(grid, cols, &mut rng);
        strides
            .iter()
            .map(|&k| {
                (0..cols)
                    .map(|c| {
                        let col = y.column(c);
                        (0..col.len()).step_by(k).fold(0.0f64, |m, i| m.max(col[i]))
                    })
                    .collect::<Vec<f64>>()
            })
            .collect::<Vec<_>>()
    });
    let mut sups = vec![Vec::with_capacity(reps as usize); strides.len()];
    for part in parts {
        for (s, v) in part.into_iter().enumerate() {
            sups[s].extend(v);
        }
    }
    Ok(SupSamples {
        strides: strides.to_vec(),
        sups,
    })
}

/// Estimates `P(max_i (Z(t_i) - c t_i) > x)` for each threshold.
pub fn sample_sup(grid: &GaussGrid, reps: u64, thresholds: &[f64], key: StreamKey) -> Result<TailEstimate> {
    stats::check_thresholds(thresholds)?;
    let s = sup_samples(Policy::default(), grid, reps, &[1], key)?;
    TailEstimate::from_samples(thresholds, &s.sups[0], grid.horizon())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointwiseTail {
    pub thresholds: Vec<f64>,
    pub p: Vec<f64>,
    pub argmax_t: Vec<f64>,
    pub warnings: Vec<String>,
}

/// `max_i P(Z(t_i) - c t_i > x)` in closed form.
pub fn pointwise_sup_tail(grid: &GaussGrid, thresholds: &[f64]) -> Result<PointwiseTail> {
    stats::check_thresholds(thresholds)?;
    let mut out = PointwiseTail {
        thresholds: thresholds.to_vec(),
        p: Vec::new(),
        argmax_t: Vec::new(),
        warnings: Vec::new(),
    };
    for &x in thresholds {
        let mut best = (if x < 0.0 { 1.0 } else { 0.0 }, 0.0);
        for i in 0..grid.len() {
            let var = grid.cov[(i, i)];
            if var <= 0.0 {
                continue;
            }
            let p = norm_sf((x - grid.drift[i]) / var.sqrt());
            if p > best.0 {
                best = (p, grid.times[i]);
            }
        }
        let target = x / grid.c;
        if target > grid.horizon() + grid.spacing() {
            out.warnings.push(format!(
                "threshold {x}: the maximizing time {target} lies beyond the grid horizon {}",
                grid.horizon()
            ));
        }
        out.p.push(best.0);
        out.argmax_t.push(best.1);
    }
    Ok(out)
}

/// Large-deviation exponent `-2 B / (c_A^2 + c_S^2)`.
pub fn ld_exponent(b: f64, c2a: f64, c2s: f64) -> f64 {
    -2.0 * b / (c2a + c2s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentFit {
    pub x_lo: f64,
    pub x_hi: f64,
    pub points: usize,
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
    pub target: f64,
    pub z_score: f64,
    pub rel_error: f64,
}

/// Minimum expected exceedance count for a threshold to enter the fit.
pub const FIT_MIN_COUNT: f64 = 50.0;

/// Weighted least-squares slope of `log p_hat` against `x` on the window.
///
/// Weights are inverse variances of `log p_hat` (delta method from the
/// binomial half-widths). Exact inputs (zero half-widths) get equal weights
/// and a residual-based standard error.
pub fn fit_exponent(tail: &TailEstimate, window: (f64, f64), target: f64) -> Result<ExponentFit> {
    let mut pts = Vec::new();
    for j in 0..tail.thresholds.len() {
        let (x, p) = (tail.thresholds[j], tail.p_hat[j]);
        if x < window.0 || x > window.1 || !(p > 0.0) || p * (tail.reps as f64) < FIT_MIN_COUNT {
            continue;
        }
        let se_log = tail.half_width[j] / stats::Z99 / p;
        pts.push((x, p.ln(), se_log));
    }
    if pts.len() < 4 {
        return Err(Error::validation(
            "thresholds",
            format!(
                "{} usable thresholds in [{}, {}]; at least 4 needed",
                pts.len(),
                window.0,
                window.1
            ),
        ));
    }
    let exact = pts.iter().any(|p| p.2 == 0.0);
    let w: Vec<f64> = pts.iter().map(|p| if exact { 1.0 } else { 1.0 / (p.2 * p.2) }).collect();
    let sw: f64 = w.iter().sum();
    let xm = pts.iter().zip(&w).map(|(p, w)| w * p.0).sum::<f64>() / sw;
    let ym = pts.iter().zip(&w).map(|(p, w)| w * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().zip(&w).map(|(p, w)| w * (p.0 - xm).powi(2)).sum();
    let sxy: f64 = pts.iter().zip(&w).map(|(p, w)| w * (p.0 - xm) * (p.1 - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let slope_se = if exact {
        let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        (rss / (pts.len() as f64 - 2.0) / sxx).sqrt()
    } else {
        (1.0 / sxx).sqrt()
    };
    let diff = slope - target;
    let z_score = if slope_se > 0.0 {
        diff / slope_se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    };
    Ok(ExponentFit {
        x_lo: window.0,
        x_hi: window.1,
        points: pts.len(),
        slope,
        slope_se,
        intercept,
        target,
        z_score,
        rel_error: (diff / target).abs(),
    })
}

impl TailEstimate {
    /// Exact tail values, treated as noise-free by [`fit_exponent`].
    pub fn exact(thresholds: &[f64], p: &[f64]) -> Result<Self> {
        stats::check_thresholds(thresholds)?;
        if p.len() != thresholds.len() {
            return Err(Error::validation("p", "length must match thresholds"));
        }
        Ok(Self {
            thresholds: thresholds.to_vec(),
            p_hat: p.to_vec(),
            half_width: vec![0.0; p.len()],
            reps: u64::MAX,
            horizon: f64::INFINITY,
        })
    }
}

#[derive(Serialize)]
struct FitRow {
    x: f64,
    p_hat: f64,
    ci: f64,
    slope: f64,
    slope_se: f64,
    target: f64,
    seed: u64,
}

pub fn write_fit_csv<W: Write>(tail: &TailEstimate, fit: &ExponentFit, out: W, seed: u64) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for j in 0..tail.thresholds.len() {
        w.serialize(FitRow {
            x: tail.thresholds[j],
            p_hat: tail.p_hat[j],
            ci: tail.half_width[j],
            slope: fit.slope,
            slope_se: fit.slope_se,
            target: fit.target,
            seed,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// `P(G >= y)` for a standard normal `G`.
pub fn gaussian_tail(y: f64) -> f64 {
    norm_sf(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailBoundCheck {
    pub y: f64,
    pub tail: f64,
    /// `sqrt(2/pi) exp(-y^2/2) / (y + sqrt(y^2 + 4))`.
    pub ratio_bound: f64,
    /// `exp(-y^2/2 - y)`.
    pub exp_bound: f64,
}

impl TailBoundCheck {
    pub fn ratio_holds(&self) -> bool {
        self.tail >= self.ratio_bound
    }

    pub fn exp_holds(&self) -> bool {
        self.tail >= self.exp_bound
    }

    pub fn holds(&self) -> bool {
        self.ratio_holds() && self.exp_holds()
    }
}

/// Evaluates both Gaussian tail lower bounds at `y`.
pub fn tail_lower_bound_check(y: f64) -> TailBoundCheck {
    let h = -0.5 * y * y;
    TailBoundCheck {
        y,
        tail: gaussian_tail(y),
        ratio_bound: (2.0 / std::f64::consts::PI).sqrt() * h.exp() / (y + (y * y + 4.0).sqrt()),
        exp_bound: (h - y).exp(),
    }
}
