//! Bound processes for the steady-state queue.
//!
//! The upper bound is the supremum of the walk `A(t) - sum_i N_i(t)` built
//! from an equilibrium arrival stream (time-scaled by `lambda_n`) and `n`
//! equilibrium service streams. Pooled stream 0 is the arrival stream and
//! stream `i` in `1..=n` is server `i`; the same indices address the random
//! generators, so walks that share a [`StreamKey`] share their randomness.

use std::collections::VecDeque;

use serde::Serialize;

use crate::dist::{norm_sf, DistSpec, HWScaling};
use crate::error::{Error, Result};
use crate::numeric;
use crate::par::{self, Policy};
use crate::qsim::{self, ArrivalFeed, Init, QueueConfig};
use crate::renewal::{equilibrium_streams, Mode, PooledStreams, RenewalStream};
use crate::rng::StreamKey;
use crate::stats::{self, TailEstimate};

/// Default truncation safety factor.
pub const DEFAULT_KAPPA: f64 = 20.0;

/// Inter-arrival law `A / lambda_n`.
pub fn arrival_law(a: &DistSpec, scaling: &HWScaling) -> Result<DistSpec> {
    a.scaled(1.0 / scaling.lambda_n())
}

fn pooled(a: &DistSpec, s: &DistSpec, scaling: &HWScaling, arrivals: Mode, key: StreamKey) -> Result<PooledStreams> {
    let mut streams = Vec::with_capacity(scaling.n() + 1);
    streams.push(RenewalStream::new(arrival_law(a, scaling)?, arrivals, key.rng(0)));
    streams.extend(equilibrium_streams(s, scaling.n(), key, 1));
    PooledStreams::new(streams)
}

fn check_horizon(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::validation("T", format!("horizon must be positive, got {t}")))
    }
}

/// The pooled walk sampled at its jump epochs.
///
/// Index 0 is time 0 with every process at 0. `excess[k]` is the modified
/// queue's `Q~(tau_k) - n`, advanced by the one-step reflection rule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WalkPath {
    pub n: usize,
    pub times: Vec<f64>,
    pub sources: Vec<usize>,
    pub walk: Vec<i64>,
    pub running_sup: Vec<i64>,
    pub excess: Vec<i64>,
}

impl WalkPath {
    fn start(n: usize) -> Self {
        Self {
            n,
            times: vec![0.0],
            sources: vec![usize::MAX],
            walk: vec![0],
            running_sup: vec![0],
            excess: vec![0],
        }
    }

    fn push(&mut self, time: f64, source: usize) {
        let step = if source == 0 { 1 } else { -1 };
        let k = self.walk.len() - 1;
        let x = self.walk[k] + step;
        self.times.push(time);
        self.sources.push(source);
        self.walk.push(x);
        self.running_sup.push(self.running_sup[k].max(x));
        self.excess.push((self.excess[k] + step).max(0));
    }

    /// Number of jump epochs after time 0.
    pub fn epochs(&self) -> usize {
        self.walk.len() - 1
    }

    pub fn sup(&self) -> i64 {
        *self.running_sup.last().expect("walk has an origin")
    }

    /// `sup / sqrt(n)`.
    pub fn scaled_sup(&self) -> f64 {
        self.sup() as f64 / (self.n as f64).sqrt()
    }

    /// `max_{j <= k} (X_k - X_j)`, via the running minimum.
    pub fn unfolded(&self) -> Vec<i64> {
        let mut min = i64::MAX;
        self.walk
            .iter()
            .map(|&x| {
                min = min.min(x);
                x - min
            })
            .collect()
    }

    /// Index of the first epoch where the recursion and the unfolded
    /// maximum disagree.
    pub fn first_identity_failure(&self) -> Option<usize> {
        self.unfolded().iter().zip(&self.excess).position(|(u, e)| u != e)
    }
}

fn walk_until(
    a: &DistSpec,
    s: &DistSpec,
    scaling: &HWScaling,
    arrivals: Mode,
    key: StreamKey,
    stop: impl Fn(f64, usize) -> bool,
) -> Result<WalkPath> {
    let mut p = pooled(a, s, scaling, arrivals, key)?;
    let mut path = WalkPath::start(scaling.n());
    loop {
        let t = p.peek_time().expect("pooled process is non-empty");
        if stop(t, path.epochs()) {
            return Ok(path);
        }
        let e = p.next_event()?;
        path.push(e.time, e.source);
    }
}

/// The walk `A(t) - sum_i N_i(t)` on `[0, T]` with its running supremum.
/// `arrivals` selects the arrival stream mode; the bound uses
/// [`Mode::Equilibrium`].
pub fn upper_walk_sup(
    a: &DistSpec,
    s: &DistSpec,
    scaling: &HWScaling,
    horizon: f64,
    arrivals: Mode,
    key: StreamKey,
) -> Result<WalkPath> {
    check_horizon(horizon)?;
    walk_until(a, s, scaling, arrivals, key, |t, _| t > horizon)
}

/// The walk over its first `epochs` jump epochs.
pub fn upper_walk_epochs(
    a: &DistSpec,
    s: &DistSpec,
    scaling: &HWScaling,
    epochs: usize,
    key: StreamKey,
) -> Result<WalkPath> {
    walk_until(a, s, scaling, Mode::Equilibrium, key, |_, k| k >= epochs)
}

/// `sup_{0 <= t <= T} (A(t) - sum_i N_i(t))` without storing the path.
pub fn walk_sup_value(
    a: &DistSpec,
    s: &DistSpec,
    scaling: &HWScaling,
    horizon: f64,
    arrivals: Mode,
    key: StreamKey,
) -> Result<i64> {
    let mut p = pooled(a, s, scaling, arrivals, key)?;
    let (mut x, mut sup) = (0i64, 0i64);
    while p.peek_time().expect("pooled process is non-empty") <= horizon {
        if p.next_event()?.source == 0 {
            x += 1;
            sup = sup.max(x);
        } else {
            x -= 1;
        }
    }
    Ok(sup)
}

/// `T = kappa * x_max / (B mu)` in scaled time.
pub fn truncation_horizon(scaling: &HWScaling, mu: f64, x_max: f64, kappa: f64) -> Result<f64> {
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return Err(Error::validation("kappa", format!("must be at least 1, got {kappa}")));
    }
    if !(x_max > 0.0 && x_max.is_finite()) {
        return Err(Error::validation("x_max", format!("must be positive, got {x_max}")));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::validation("mu", "must be positive"));
    }
    Ok(kappa * x_max / (scaling.b() * mu))
}

/// Diffusion-limit probability that the scaled walk is positive at some time
/// after `T`: `2 Phi_bar(c sqrt(T) / sigma)` for drift `-c` and variance
/// `sigma^2` per unit time. This bounds the mass a truncated estimate can miss.
pub fn truncation_leak(c: f64, sigma2: f64, horizon: f64) -> f64 {
    (2.0 * norm_sf(c * horizon.sqrt() / sigma2.sqrt())).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpperTail {
    pub tail: TailEstimate,
    pub horizon: f64,
    pub kappa: f64,
    pub leak: f64,
}

fn check_drift(a: &DistSpec, s: &DistSpec, scaling: &HWScaling) -> Result<f64> {
    let drift = scaling.lambda_n() / a.mean() - scaling.n() as f64 / s.mean();
    if drift < 0.0 {
        Ok(drift)
    } else {
        Err(Error::validation(
            "B",
            format!("walk drift lambda_n mu_A - n mu_S = {drift} is not negative"),
        ))
    }
}

/// Threshold fed to the truncation rule. Small thresholds are floored at
/// one unscaled step and at `sigma^2 / (2 B mu)`, the mean of the diffusion
/// supremum: below that scale the time to exceed `x` is governed by the
/// typical excursion, not by `x`.
fn effective_x_max(thresholds: &[f64], scaling: &HWScaling, mu: f64, sigma2: f64) -> f64 {
    let c = scaling.b() * mu;
    thresholds
        .last()
        .copied()
        .unwrap_or(0.0)
        .max(1.0 / scaling.sqrt_n())
        .max(sigma2 / (2.0 * c))
}

/// Estimates `P(sup_{t >= 0} walk > x sqrt(n))` by truncating at the rule's
/// horizon for the largest threshold.
pub fn steady_upper_tail(
    a: &DistSpec,
    s: &DistSpec,
    scaling: &HWScaling,
    thresholds: &[f64],
    reps: u64,
    kappa: f64,
    key: StreamKey,
) -> Result<UpperTail> {
    steady_upper_tail_with(Policy::default(), a, s, scaling, thresholds, reps, kappa, key)
}

#[allow(clippy::too_many_arguments)]
pub fn steady_upper_tail_with(
    policy: Policy,
    a: &DistSpec,
    s: &DistSpec,
    scaling: &HWScaling,
    thresholds: &[f64],
    reps: u64,
    kappa: f64,
    key: StreamKey,
) -> Result<UpperTail> {
    stats::check_thresholds(thresholds)?;
    check_drift(a, s, scaling)?;
    let mu = s.rate();
    let sigma2 = mu * (a.scv() + s.scv());
    let x_max = effective_x_max(thresholds, scaling, mu, sigma2);
    let horizon = truncation_horizon(scaling, mu, x_max, kappa)?;
    let sups = sup_samples(policy, a, s, scaling, horizon, reps, key)?;
    let tail = TailEstimate::from_samples(thresholds, &sups, horizon)?;
    Ok(UpperTail {
        tail,
        horizon,
        kappa,
        leak: truncation_leak(scaling.b() * mu, sigma2, horizon),
    })
}

/// Scaled truncated suprema of `reps` independent walks.
pub fn sup_samples(
    policy: Policy,
    a: &DistSpec,
    s: &DistSpec,
    scaling: &HWScaling,
    horizon: f64,
    reps: u64,
    key: StreamKey,
) -> Result<Vec<f64>> {
    check_horizon(horizon)?;
    if reps == 0 {
        return Err(Error::validation("reps", "must be positive"));
    }
    let root_n = scaling.sqrt_n();
    par::map_indexed(policy, reps as usize, |r| {
        walk_sup_value(a, s, scaling, horizon, Mode::Equilibrium, key.with_replication(r as u64))
            .map(|v| v as f64 / root_n)
    })
    .into_iter()
    .collect()
}

/// `P(Z >= n)` for `Z ~ Poisson(mean)`.
pub fn poisson_at_least(n: usize, mean: f64) -> f64 {
    numeric::poisson_upper_tail(n as u64, mean)
}

/// Time grid for the pointwise maximum of the lower bound.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeGrid {
    /// `points` geometrically spaced times on `[x/(5 B mu), 5 x/(B mu)]`.
    Geometric { points: usize },
    Explicit(Vec<f64>),
}

impl TimeGrid {
    fn times(&self, x: f64, c: f64) -> Result<Vec<f64>> {
        match self {
            TimeGrid::Geometric { points } => {
                if *points < 2 {
                    return Err(Error::validation("t_grid", "needs at least 2 points"));
                }
                if !(x > 0.0) {
                    return Err(Error::validation(
                        "thresholds",
                        "the geometric time grid needs positive thresholds",
                    ));
                }
                let (lo, hi) = (x / (5.0 * c), 5.0 * x / c);
                let r = (hi / lo).powf(1.0 / (*points - 1) as f64);
                Ok((0..*points).map(|i| lo * r.powi(i as i32)).collect())
            }
            TimeGrid::Explicit(ts) => {
                if ts.is_empty() {
                    return Err(Error::validation("t_grid", "must not be empty"));
                }
                if ts.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
                    return Err(Error::validation("t_grid", "times must be positive"));
                }
                Ok(ts.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerTail {
    /// `P(Z >= n) * max_t p_hat(t)` with half-widths scaled by the same factor.
    pub tail: TailEstimate,
    /// `P(Z >= n)`, `Z ~ Poisson(lambda_n)`.
    pub factor: f64,
    /// The `n -> infinity` limit of the factor, `P(G >= B)`.
    pub limit_factor: f64,
    /// Time attaining the maximum, per threshold.
    pub argmax_t: Vec<f64>,
    /// Full-grid maximum minus the maximum over every other grid point.
    pub sensitivity: Vec<f64>,
}

/// Lower bound `P(Z >= n) * sup_t P(A(t) - sum_i N_i(t) > x sqrt(n))` for
/// Poisson arrivals of rate `lambda_n mu`.
pub fn lower_tail(
    s: &DistSpec,
    scaling: &HWScaling,
    t_grid: &TimeGrid,
    thresholds: &[f64],
    reps: u64,
    key: StreamKey,
) -> Result<LowerTail> {
    lower_tail_with(Policy::default(), s, scaling, t_grid, thresholds, reps, key)
}

pub fn lower_tail_with(
    policy: Policy,
    s: &DistSpec,
    scaling: &HWScaling,
    t_grid: &TimeGrid,
    thresholds: &[f64],
    reps: u64,
    key: StreamKey,
) -> Result<LowerTail> {
    stats::check_thresholds(thresholds)?;
    if reps == 0 {
        return Err(Error::validation("reps", "must be positive"));
    }
    let mu = s.rate();
    let a = DistSpec::exponential(mu)?;
    let c = scaling.b() * mu;
    let grids: Vec<Vec<f64>> = thresholds.iter().map(|&x| t_grid.times(x, c)).collect::<Result<_>>()?;
    let mut all: Vec<f64> = grids.iter().flatten().copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    let root_n = scaling.sqrt_n();
    // Per replication, the scaled walk at every grid time.
    let paths: Vec<Vec<f64>> = par::map_indexed(policy, reps as usize, |r| -> Result<Vec<f64>> {
        let mut p = pooled(&a, s, scaling, Mode::Equilibrium, key.with_replication(r as u64))?;
        let mut x = 0i64;
        let mut out = Vec::with_capacity(all.len());
        for &t in &all {
            while p.peek_time().expect("non-empty") <= t {
                x += if p.next_event()?.source == 0 { 1 } else { -1 };
            }
            out.push(x as f64 / root_n);
        }
        Ok(out)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let factor = poisson_at_least(scaling.n(), scaling.lambda_n());
    let (mut p_hat, mut half_width, mut argmax_t, mut sensitivity) = (vec![], vec![], vec![], vec![]);
    for (&x, grid) in thresholds.iter().zip(&grids) {
        let pointwise: Vec<f64> = grid
            .iter()
            .map(|t| {
                let j = all.partition_point(|u| u < t);
                paths.iter().filter(|v| v[j] > x).count() as f64 / reps as f64
            })
            .collect();
        let (best, &pmax) = pointwise
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty grid");
        let even = pointwise.iter().step_by(2).copied().fold(0.0, f64::max);
        p_hat.push(factor * pmax);
        half_width.push(factor * stats::binomial_half_width(pmax, reps));
        argmax_t.push(grid[best]);
        sensitivity.push(pmax - even);
    }
    Ok(LowerTail {
        tail: TailEstimate {
            thresholds: thresholds.to_vec(),
            p_hat,
            half_width,
            reps,
            horizon: all.last().copied().unwrap_or(0.0),
        },
        factor,
        limit_factor: norm_sf(scaling.b()),
        argmax_t,
        sensitivity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LindleySup {
    /// `max_{0 <= k <= K} W_k`.
    pub sup: i64,
    /// `sup / sqrt(n)`.
    pub scaled: f64,
    /// `1 - (n / lambda_n)(mu_S / mu_A)`.
    pub drift: f64,
    /// Time of the `K`-th arrival (0 when `K = 0`).
    pub last_arrival: f64,
}

/// Drift `a_n` of the Lindley walk per arrival.
pub fn lindley_drift(a: &DistSpec, s: &DistSpec, scaling: &HWScaling) -> f64 {
    1.0 - scaling.n() as f64 / scaling.lambda_n() * (a.mean() / s.mean())
}

/// Supremum of `W_k = k - sum_i N_i(t_k)` over the first `K` arrival epochs
/// `t_k` of an ordinary arrival stream, each server count advanced
/// separately.
pub fn lindley_sup(a: &DistSpec, s: &DistSpec, scaling: &HWScaling, steps: u64, key: StreamKey) -> Result<LindleySup> {
    let mut arrivals = RenewalStream::new(arrival_law(a, scaling)?, Mode::Ordinary, key.rng(0));
    let mut servers = equilibrium_streams(s, scaling.n(), key, 1);
    let (mut sup, mut t) = (0i64, 0.0);
    for k in 1..=steps {
        t = arrivals.next_event()?;
        let mut served = 0u64;
        for srv in servers.iter_mut() {
            served += srv.count_at(t)?;
        }
        sup = sup.max(k as i64 - served as i64);
    }
    Ok(LindleySup {
        sup,
        scaled: sup as f64 / scaling.sqrt_n(),
        drift: lindley_drift(a, s, scaling),
        last_arrival: t,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochViolation {
    pub time: f64,
    pub queue: usize,
    pub modified: usize,
}

/// Outcome of one coupled run of the real queue and the modified queue.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledRun {
    pub epochs: usize,
    pub real_arrivals: usize,
    pub artificial_arrivals: usize,
    /// Epochs where the real queue exceeds the modified queue.
    pub violations: Vec<EpochViolation>,
    /// Epochs where the event engine replaying the modified queue's
    /// arrivals disagrees with the recursion.
    pub replay_mismatches: usize,
    /// Epochs where the recursion and the unfolded maximum disagree.
    pub identity_failures: usize,
}

/// Builds the modified queue job by job from the pooled streams on `[0, T]`,
/// feeds its real arrivals with their assigned processing times to the
/// event engine, and compares the two at every pooled epoch.
///
/// Both queues start with one job per server whose processing time is that
/// server's first (residual) interval. In the modified queue the `j`-th job
/// started on server `i` is processed for the server's `(j+1)`-th interval;
/// a server event with no one waiting triggers an artificial arrival.
pub fn coupled_dominance(
    a: &DistSpec,
    s: &DistSpec,
    scaling: &HWScaling,
    horizon: f64,
    key: StreamKey,
) -> Result<CoupledRun> {
    check_horizon(horizon)?;
    let n = scaling.n();
    let mut p = pooled(a, s, scaling, Mode::Equilibrium, key)?;
    let initial: Vec<f64> = (1..=n).map(|i| p.stream_mut(i).pending_interval()).collect::<Result<_>>()?;

    // Real jobs: arrival time and processing time once started.
    let mut real: Vec<(f64, Option<f64>)> = Vec::new();
    let mut waiting: VecDeque<usize> = VecDeque::new();
    // Every arrival to the modified queue: (time, real job index or None, processing).
    let mut tilde_arrivals: Vec<(f64, Option<usize>, f64)> = Vec::new();
    let mut path = WalkPath::start(n);
    let mut unstarted = 0usize;
    loop {
        let t = p.peek_time().expect("non-empty");
        if t > horizon && unstarted == 0 {
            break;
        }
        let e = p.next_event()?;
        let in_window = e.time <= horizon;
        if e.source == 0 {
            if in_window {
                real.push((e.time, None));
                tilde_arrivals.push((e.time, Some(real.len() - 1), f64::NAN));
                waiting.push_back(real.len() - 1);
                unstarted += 1;
            } else {
                waiting.push_back(usize::MAX);
            }
        } else {
            let next = p.stream_mut(e.source).pending_interval()?;
            match waiting.pop_front() {
                Some(usize::MAX) => {}
                Some(job) => {
                    real[job].1 = Some(next);
                    unstarted -= 1;
                }
                None if in_window => tilde_arrivals.push((e.time, None, next)),
                None => {}
            }
        }
        if in_window {
            path.push(e.time, e.source);
        }
    }

    let times: Vec<f64> = real.iter().map(|r| r.0).collect();
    let services: Vec<f64> = real.iter().map(|r| r.1.expect("every real job started")).collect();
    let real_cfg = QueueConfig::new(
        n,
        ArrivalFeed::Explicit {
            times,
            services: Some(services),
        },
        *s,
        Init::Explicit {
            processing: initial.clone(),
        },
        horizon,
        key.seed,
    );
    let q = qsim::simulate(&real_cfg)?;
    let tilde_cfg = QueueConfig {
        arrival: ArrivalFeed::Explicit {
            times: tilde_arrivals.iter().map(|a| a.0).collect(),
            services: Some(
                tilde_arrivals
                    .iter()
                    .map(|a| match a.1 {
                        Some(job) => real[job].1.expect("started"),
                        None => a.2,
                    })
                    .collect(),
            ),
        },
        ..real_cfg.clone()
    };
    let q_tilde = qsim::simulate(&tilde_cfg)?;

    let mut violations = Vec::new();
    let mut replay_mismatches = 0;
    for (k, &t) in path.times.iter().enumerate() {
        let modified = n + path.excess[k] as usize;
        let queue = q.q_at(t);
        if queue > modified {
            violations.push(EpochViolation { time: t, queue, modified });
        }
        if q_tilde.q_at(t) != modified {
            replay_mismatches += 1;
        }
    }
    let identity_failures = path
        .unfolded()
        .iter()
        .zip(&path.excess)
        .filter(|(u, e)| u != e)
        .count();
    Ok(CoupledRun {
        epochs: path.epochs(),
        real_arrivals: real.len(),
        artificial_arrivals: tilde_arrivals.iter().filter(|a| a.1.is_none()).count(),
        violations,
        replay_mismatches,
        identity_failures,
    })
}
