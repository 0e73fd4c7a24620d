//! One function per experiment kind. Each writes its CSVs through
//! [`Outputs`] and returns a JSON summary for the run record.

use std::io::Write;

use hwlab::bounds::{self, TimeGrid};
use hwlab::gauss::{self, GaussGrid};
use hwlab::qsim::{self, ArrivalFeed, Init, QueueConfig, StrideSampler};
use hwlab::renewal::{self, ArithmeticGrid, Mode};
use hwlab::rng::{experiment, StreamKey};
use hwlab::stats::TailEstimate;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Experiment, Validated};
use crate::error::{CliError, Result};
use crate::output::Outputs;
use crate::sandwich;

/// What an experiment hands back to the runner.
pub struct Report {
    pub summary: Value,
    /// `Some(false)` when a self-checking experiment found a violation.
    pub check_passed: Option<bool>,
}

impl Report {
    fn plain(summary: Value) -> Self {
        Self {
            summary,
            check_passed: None,
        }
    }
}

fn key(v: &Validated, exp: u64) -> StreamKey {
    StreamKey::new(v.config.seed, exp, 0)
}

pub(crate) fn csv_rows<R: Serialize>(out: &mut dyn Write, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Other(e.into()))?;
    }
    w.flush().map_err(|source| CliError::Io {
        context: "writing csv".into(),
        source,
    })
}

pub fn run(v: &Validated, out: &mut Outputs) -> Result<Report> {
    match v.config.experiment {
        Experiment::Simulate => simulate(v, out).map(|(s, _)| Report::plain(s)),
        Experiment::BoundUpper => bound_upper(v, out).map(|(s, _)| Report::plain(s)),
        Experiment::BoundLower => bound_lower(v, out).map(|(s, _)| Report::plain(s)),
        Experiment::Lindley => lindley(v, out).map(Report::plain),
        Experiment::Gaussian => gaussian(v, out).map(Report::plain),
        Experiment::FitExponent => fit_exponent(v, out).map(Report::plain),
        Experiment::CheckMoments => check_moments(v, out).map(Report::plain),
        Experiment::Dominance => dominance(v, out),
        Experiment::Sandwich => sandwich::run(v, out),
    }
}

#[derive(Serialize)]
struct EmpiricalRow {
    x: f64,
    p_hat: f64,
    ci_low: f64,
    ci_high: f64,
    samples: u64,
    seed: u64,
}

/// Simulates the queue with the scaled arrival law and samples `(Q - n)^+`
/// every stride after burn-in; `reps` is the number of samples.
pub fn simulate(v: &Validated, out: &mut Outputs) -> Result<(Value, qsim::EmpiricalTail)> {
    let c = &v.config;
    let n = v.scaling.n();
    let mu = v.service.rate();
    let (t0_default, stride_default) = qsim::default_window(n, mu);
    let sim = c.sim.unwrap_or_default();
    let t0 = sim.t0.unwrap_or(t0_default);
    let stride = sim.stride.unwrap_or(stride_default);
    let horizon = t0 + stride * c.reps as f64;
    let feed = ArrivalFeed::Renewal {
        dist: bounds::arrival_law(&v.arrival, &v.scaling)?,
        mode: Mode::Equilibrium,
    };
    let qc = QueueConfig::new(n, feed, v.service, Init::AllBusyResidual, horizon, c.seed);
    let mut sampler = StrideSampler::new(n, t0, stride, horizon)?;
    let summary = qsim::simulate_with(&qc, &mut sampler)?;
    let batches = sim.batches.unwrap_or(50);
    let tail = qsim::empirical_tail(&sampler.samples, &c.thresholds, batches)?;
    out.write("samples.csv", |w| {
        qsim::write_samples_csv(&sampler.samples, w, c.seed).map_err(CliError::from)
    })?;
    let rows: Vec<EmpiricalRow> = (0..tail.thresholds.len())
        .map(|j| EmpiricalRow {
            x: tail.thresholds[j],
            p_hat: tail.p_hat[j],
            ci_low: (tail.p_hat[j] - tail.half_width[j]).max(0.0),
            ci_high: (tail.p_hat[j] + tail.half_width[j]).min(1.0),
            samples: tail.samples,
            seed: c.seed,
        })
        .collect();
    out.write("empirical_tail.csv", |w| csv_rows(w, &rows))?;
    Ok((
        json!({
            "run": summary,
            "t0": t0,
            "stride": stride,
            "horizon": horizon,
            "batches": batches,
            "samples": tail.samples,
        }),
        tail,
    ))
}

pub fn bound_upper(v: &Validated, out: &mut Outputs) -> Result<(Value, TailEstimate)> {
    let c = &v.config;
    let kappa = c.kappa.unwrap_or(bounds::DEFAULT_KAPPA);
    let (tail, horizon, leak) = match c.horizon {
        None => {
            let up = bounds::steady_upper_tail(
                &v.arrival,
                &v.service,
                &v.scaling,
                &c.thresholds,
                c.reps,
                kappa,
                key(v, experiment::UPPER_WALK),
            )?;
            (up.tail, up.horizon, up.leak)
        }
        Some(h) => {
            let sups = bounds::sup_samples(
                hwlab::par::Policy::default(),
                &v.arrival,
                &v.service,
                &v.scaling,
                h,
                c.reps,
                key(v, experiment::UPPER_WALK),
            )?;
            let mu = v.service.rate();
            let sigma2 = mu * (v.arrival.scv() + v.service.scv());
            let leak = bounds::truncation_leak(v.scaling.b() * mu, sigma2, h);
            (TailEstimate::from_samples(&c.thresholds, &sups, h)?, h, leak)
        }
    };
    out.write("upper_tail.csv", |w| tail.write_csv(w, c.seed).map_err(CliError::from))?;
    Ok((json!({ "horizon": horizon, "kappa": kappa, "leak": leak }), tail))
}

#[derive(Serialize)]
struct LowerRow {
    x: f64,
    p_hat: f64,
    ci_low: f64,
    ci_high: f64,
    reps: u64,
    factor: f64,
    argmax_t: f64,
    sensitivity: f64,
    seed: u64,
}

pub fn bound_lower(v: &Validated, out: &mut Outputs) -> Result<(Value, TailEstimate)> {
    let c = &v.config;
    if !v.arrival.is_exponential() {
        return Err(CliError::validation("arrival", "the lower bound needs Poisson arrivals"));
    }
    let grid = TimeGrid::Geometric {
        points: c.t_grid_points.unwrap_or(30),
    };
    let lo = bounds::lower_tail(
        &v.service,
        &v.scaling,
        &grid,
        &c.thresholds,
        c.reps,
        key(v, experiment::LOWER_WALK),
    )?;
    let rows: Vec<LowerRow> = (0..c.thresholds.len())
        .map(|j| {
            let (ci_low, ci_high) = lo.tail.ci(j);
            LowerRow {
                x: c.thresholds[j],
                p_hat: lo.tail.p_hat[j],
                ci_low,
                ci_high,
                reps: c.reps,
                factor: lo.factor,
                argmax_t: lo.argmax_t[j],
                sensitivity: lo.sensitivity[j],
                seed: c.seed,
            }
        })
        .collect();
    out.write("lower_tail.csv", |w| csv_rows(w, &rows))?;
    Ok((
        json!({ "factor": lo.factor, "limit_factor": lo.limit_factor }),
        lo.tail,
    ))
}

#[derive(Serialize)]
struct LindleyRow {
    x: f64,
    p_hat: f64,
    ci_low: f64,
    ci_high: f64,
    reps: u64,
    steps: u64,
    drift: f64,
    seed: u64,
}

pub fn lindley(v: &Validated, out: &mut Outputs) -> Result<Value> {
    let c = &v.config;
    let steps = c.steps.unwrap_or(10_000);
    let base = key(v, experiment::LINDLEY);
    let sups = hwlab::par::try_map_indexed(c.reps as usize, |r| {
        bounds::lindley_sup(&v.arrival, &v.service, &v.scaling, steps, base.with_replication(r as u64))
    })?;
    let scaled: Vec<f64> = sups.iter().map(|s| s.scaled).collect();
    let tail = TailEstimate::from_samples(&c.thresholds, &scaled, f64::NAN)?;
    let drift = bounds::lindley_drift(&v.arrival, &v.service, &v.scaling);
    let rows: Vec<LindleyRow> = (0..c.thresholds.len())
        .map(|j| {
            let (ci_low, ci_high) = tail.ci(j);
            LindleyRow {
                x: c.thresholds[j],
                p_hat: tail.p_hat[j],
                ci_low,
                ci_high,
                reps: c.reps,
                steps,
                drift,
                seed: c.seed,
            }
        })
        .collect();
    out.write("lindley_tail.csv", |w| csv_rows(w, &rows))?;
    Ok(json!({ "steps": steps, "drift": drift }))
}

fn gauss_grid(v: &Validated) -> Result<GaussGrid> {
    let c = &v.config;
    let mu = v.service.rate();
    let horizon = match c.horizon {
        Some(h) => h,
        None => {
            let x_max = c.thresholds.last().copied().unwrap_or(1.0).max(1.0);
            bounds::truncation_horizon(&v.scaling, mu, x_max, c.kappa.unwrap_or(5.0))?
        }
    };
    let grid = ArithmeticGrid::covering(c.spacing.unwrap_or(gauss::DEFAULT_SPACING), horizon)?;
    Ok(gauss::build_grid(
        v.arrival.scv(),
        &v.service,
        v.scaling.b(),
        mu,
        grid,
        c.variance_reps.unwrap_or(200_000),
        key(v, experiment::VARIANCE),
    )?)
}

#[derive(Serialize)]
struct GaussRow {
    x: f64,
    p_hat: f64,
    ci_low: f64,
    ci_high: f64,
    reps: u64,
    pointwise: f64,
    argmax_t: f64,
    seed: u64,
}

fn gauss_common(v: &Validated, out: &mut Outputs) -> Result<(GaussGrid, TailEstimate, Value)> {
    let c = &v.config;
    let grid = gauss_grid(v)?;
    let tail = gauss::sample_sup(&grid, c.reps, &c.thresholds, key(v, experiment::GAUSS))?;
    let pw = gauss::pointwise_sup_tail(&grid, &c.thresholds)?;
    out.write("grid.csv", |w| grid.write_grid_csv(w, c.seed).map_err(CliError::from))?;
    out.write("covariance.csv", |w| grid.write_covariance_csv(w, c.seed).map_err(CliError::from))?;
    let rows: Vec<GaussRow> = (0..c.thresholds.len())
        .map(|j| {
            let (ci_low, ci_high) = tail.ci(j);
            GaussRow {
                x: c.thresholds[j],
                p_hat: tail.p_hat[j],
                ci_low,
                ci_high,
                reps: c.reps,
                pointwise: pw.p[j],
                argmax_t: pw.argmax_t[j],
                seed: c.seed,
            }
        })
        .collect();
    out.write("gauss_tail.csv", |w| csv_rows(w, &rows))?;
    let summary = json!({
        "points": grid.len(),
        "spacing": grid.spacing(),
        "horizon": grid.horizon(),
        "repair": grid.repair,
        "warnings": pw.warnings,
    });
    Ok((grid, tail, summary))
}

pub fn gaussian(v: &Validated, out: &mut Outputs) -> Result<Value> {
    gauss_common(v, out).map(|(_, _, s)| s)
}

pub fn fit_exponent(v: &Validated, out: &mut Outputs) -> Result<Value> {
    let c = &v.config;
    let (_, tail, mut summary) = gauss_common(v, out)?;
    let target = gauss::ld_exponent(v.scaling.b(), v.arrival.scv(), v.service.scv());
    let fit = gauss::fit_exponent(&tail, c.fit_window.unwrap_or(gauss::DEFAULT_FIT_WINDOW), target)?;
    out.write("fit.csv", |w| gauss::write_fit_csv(&tail, &fit, w, c.seed).map_err(CliError::from))?;
    summary["fit"] = serde_json::to_value(fit).expect("fit serializes");
    Ok(summary)
}

#[derive(Serialize)]
struct MomentRow {
    n: usize,
    t: f64,
    r: u32,
    estimate: f64,
    stderr: f64,
    reps: u64,
    seed: u64,
}

/// Centered moments of superposed equilibrium service renewals over an
/// `(n, t)` grid, with the log-log slope against `n t`.
pub fn check_moments(v: &Validated, out: &mut Outputs) -> Result<Value> {
    let c = &v.config;
    let m = c.moments.as_ref().expect("validated");
    let mut rows = Vec::new();
    for &n in &m.n {
        for &t in &m.t {
            let est = renewal::centered_moment_mc(&v.service, n, t, m.r, c.reps, key(v, experiment::MOMENTS))?;
            rows.push(MomentRow {
                n,
                t,
                r: m.r,
                estimate: est.estimate,
                stderr: est.std_err,
                reps: c.reps,
                seed: c.seed,
            });
        }
    }
    out.write("moments.csv", |w| csv_rows(w, &rows))?;
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.estimate > 0.0 && r.t > 0.0)
        .map(|r| ((r.n as f64 * r.t).ln(), r.estimate.ln()))
        .collect();
    let slope = if pts.len() >= 2 {
        let k = pts.len() as f64;
        let xm = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let ym = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxx: f64 = pts.iter().map(|p| (p.0 - xm).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
        Some(sxy / sxx)
    } else {
        None
    };
    Ok(json!({ "r": m.r, "log_log_slope": slope, "expected_slope": m.r as f64 / 2.0 }))
}

#[derive(Serialize)]
struct DominanceRow {
    replication: u64,
    epochs: usize,
    real_arrivals: usize,
    artificial_arrivals: usize,
    violations: usize,
    replay_mismatches: usize,
    identity_failures: usize,
    seed: u64,
}

/// Coupled real and modified queues; fails its check on any violation.
pub fn dominance(v: &Validated, out: &mut Outputs) -> Result<Report> {
    let c = &v.config;
    let horizon = c
        .horizon
        .unwrap_or(1.2e4 / (v.scaling.lambda_n() + v.scaling.n() as f64) / v.service.mean());
    let base = key(v, experiment::QUEUE);
    let runs = hwlab::par::try_map_indexed(c.reps as usize, |r| {
        bounds::coupled_dominance(&v.arrival, &v.service, &v.scaling, horizon, base.with_replication(r as u64))
    })?;
    let rows: Vec<DominanceRow> = runs
        .iter()
        .enumerate()
        .map(|(r, run)| DominanceRow {
            replication: r as u64,
            epochs: run.epochs,
            real_arrivals: run.real_arrivals,
            artificial_arrivals: run.artificial_arrivals,
            violations: run.violations.len(),
            replay_mismatches: run.replay_mismatches,
            identity_failures: run.identity_failures,
            seed: c.seed,
        })
        .collect();
    out.write("dominance.csv", |w| csv_rows(w, &rows))?;
    let bad: usize = rows
        .iter()
        .map(|r| r.violations + r.replay_mismatches + r.identity_failures)
        .sum();
    let epochs: usize = rows.iter().map(|r| r.epochs).sum();
    Ok(Report {
        summary: json!({ "horizon": horizon, "epochs": epochs, "failures": bad }),
        check_passed: Some(bad == 0),
    })
}
