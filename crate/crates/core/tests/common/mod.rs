//! Closed-form oracles, computed independently of the library.
#![allow(dead_code)]

use hwlab::rng::{experiment, StreamKey};

pub fn key(experiment: u64, rep: u64) -> StreamKey {
    StreamKey::new(20_240_601, experiment, rep)
}

pub fn dist_key(rep: u64) -> StreamKey {
    key(experiment::DIST, rep)
}

/// `P(Z >= n)` for `Z ~ Poisson(mean)` by pmf summation. Weights are built
/// by the ratio recursion outward from the mode, so no large logarithms
/// cancel, and normalized by their total.
pub fn poisson_tail_by_summation(n: usize, mean: f64) -> f64 {
    let mode = mean.floor() as usize;
    let hi = mode + (40.0 * mean.sqrt()) as usize + 60;
    let mut w = vec![0.0; hi + 1];
    w[mode] = 1.0;
    for k in mode + 1..=hi {
        w[k] = w[k - 1] * mean / k as f64;
    }
    for k in (0..mode).rev() {
        w[k] = w[k + 1] * (k + 1) as f64 / mean;
    }
    // Add small terms first.
    let total: f64 = {
        let mut v = w.clone();
        v.sort_by(f64::total_cmp);
        v.iter().sum()
    };
    let above: f64 = w.iter().skip(n).rev().sum();
    let below: f64 = w.iter().take(n).sum();
    if above < below {
        above / total
    } else {
        1.0 - below / total
    }
}

pub fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// Standard normal upper tail by composite Simpson integration of the
/// density on `[y, y + 40]`.
pub fn normal_tail_by_quadrature(y: f64) -> f64 {
    let steps = 200_000;
    let h = 40.0 / steps as f64;
    let f = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = f(y) + f(y + 40.0);
    for i in 1..steps {
        let x = y + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

/// Stationary distribution of the M/M/n birth-death chain truncated at `max`.
pub fn mmn_stationary(n: usize, lambda: f64, mu: f64, max: usize) -> Vec<f64> {
    let mut w = vec![1.0f64];
    for q in 1..=max {
        let death = mu * q.min(n) as f64;
        w.push(w[q - 1] * lambda / death);
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

/// Erlang-C probability of waiting for offered load `a = lambda/mu` on `n` servers.
pub fn erlang_c(n: usize, a: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..n {
        term *= a / k as f64;
        sum += term;
    }
    let last = term * a / n as f64 * n as f64 / (n as f64 - a);
    last / (sum + last)
}

/// `{t}(1 - {t})`, the count variance of a unit-lattice equilibrium process.
pub fn lattice_variance(t: f64) -> f64 {
    let f = t - t.floor();
    f * (1.0 - f)
}

/// Exact variance of the equilibrium Erlang(2, 2) count at `t`, using
/// `N(t) = floor((P + U) / 2)` with `P ~ Poisson(2t)` phases and `U` a
/// fair bit for the phase in progress at time 0.
pub fn erlang2_equilibrium_variance(t: f64) -> f64 {
    let mean = 2.0 * t;
    let (mut m1, mut m2) = (0.0, 0.0);
    let mut log_p = -mean;
    let kmax = (mean + 40.0 * mean.sqrt() + 50.0) as usize;
    for k in 0..=kmax {
        if k > 0 {
            log_p += mean.ln() - (k as f64).ln();
        }
        let p = log_p.exp();
        for u in 0..2 {
            let c = ((k + u) / 2) as f64;
            m1 += 0.5 * p * c;
            m2 += 0.5 * p * c * c;
        }
    }
    m2 - m1 * m1
}

/// Geometric stationary law of M/M/1 at load `rho`: `P(Q <= k)`.
pub fn mm1_cdf(rho: f64, k: usize) -> f64 {
    1.0 - rho.powi(k as i32 + 1)
}
