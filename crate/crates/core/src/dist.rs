//! Parametric inter-arrival and service laws with exact moments and
//! residual-life distributions.
//!
//! The residual life `R(X)` of a positive law `X` has survival
//! `P(R > z) = E[(X - z)^+] / E[X]`; it is the first-interval law of an
//! equilibrium renewal process.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_ur};

use crate::error::{Error, Result};
use crate::numeric;

/// Absolute tolerance of numeric residual inversion and quadrature.
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum Family {
    Exponential { rate: f64 },
    Deterministic { value: f64 },
    Erlang { k: u32, rate: f64 },
    /// Rate `rate1` with probability `p`, else rate `rate2`.
    Hyperexponential { p: f64, rate1: f64, rate2: f64 },
    /// `exp(mu + sigma G)` with `G` standard normal.
    Lognormal { mu: f64, sigma: f64 },
    Weibull { shape: f64, scale: f64 },
}

/// A validated distribution with cached mean and variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Family", into = "Family")]
pub struct DistSpec {
    family: Family,
    mean: f64,
    variance: f64,
}

impl TryFrom<Family> for DistSpec {
    type Error = Error;
    fn try_from(family: Family) -> Result<Self> {
        DistSpec::new(family)
    }
}

impl From<DistSpec> for Family {
    fn from(d: DistSpec) -> Family {
        d.family
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(
            format!("params.{field}"),
            format!("must be a positive finite number, got {v}"),
        ))
    }
}

/// Standard normal upper tail.
pub(crate) fn norm_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

impl DistSpec {
    pub fn new(family: Family) -> Result<Self> {
        let (mean, variance) = match family {
            Family::Exponential { rate } => {
                positive("rate", rate)?;
                (1.0 / rate, 1.0 / (rate * rate))
            }
            Family::Deterministic { value } => {
                positive("value", value)?;
                (value, 0.0)
            }
            Family::Erlang { k, rate } => {
                if k == 0 {
                    return Err(Error::validation("params.k", "must be at least 1"));
                }
                positive("rate", rate)?;
                let k = k as f64;
                (k / rate, k / (rate * rate))
            }
            Family::Hyperexponential { p, rate1, rate2 } => {
                if !(p > 0.0 && p < 1.0) {
                    return Err(Error::validation(
                        "params.p",
                        format!("must lie in (0, 1), got {p}"),
                    ));
                }
                positive("rate1", rate1)?;
                positive("rate2", rate2)?;
                let m = p / rate1 + (1.0 - p) / rate2;
                let m2 = 2.0 * p / (rate1 * rate1) + 2.0 * (1.0 - p) / (rate2 * rate2);
                (m, m2 - m * m)
            }
            Family::Lognormal { mu, sigma } => {
                if !mu.is_finite() {
                    return Err(Error::validation("params.mu", "must be finite"));
                }
                positive("sigma", sigma)?;
                let s2 = sigma * sigma;
                ((mu + 0.5 * s2).exp(), s2.exp_m1() * (2.0 * mu + s2).exp())
            }
            Family::Weibull { shape, scale } => {
                positive("shape", shape)?;
                positive("scale", scale)?;
                let g1 = gamma(1.0 + 1.0 / shape);
                let g2 = gamma(1.0 + 2.0 / shape);
                (scale * g1, scale * scale * (g2 - g1 * g1))
            }
        };
        if !(mean.is_finite() && variance.is_finite()) {
            return Err(Error::validation(
                "params",
                "moments overflow for these parameters",
            ));
        }
        Ok(Self {
            family,
            mean,
            variance: variance.max(0.0),
        })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(Family::Exponential { rate })
    }

    pub fn deterministic(value: f64) -> Result<Self> {
        Self::new(Family::Deterministic { value })
    }

    pub fn erlang(k: u32, rate: f64) -> Result<Self> {
        Self::new(Family::Erlang { k, rate })
    }

    pub fn hyperexponential(p: f64, rate1: f64, rate2: f64) -> Result<Self> {
        Self::new(Family::Hyperexponential { p, rate1, rate2 })
    }

    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(Family::Lognormal { mu, sigma })
    }

    pub fn weibull(shape: f64, scale: f64) -> Result<Self> {
        Self::new(Family::Weibull { shape, scale })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Renewal rate `1 / E[X]`.
    pub fn rate(&self) -> f64 {
        1.0 / self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Squared coefficient of variation.
    pub fn scv(&self) -> f64 {
        self.variance / (self.mean * self.mean)
    }

    /// `(mean, variance, scv)`.
    pub fn moments(&self) -> (f64, f64, f64) {
        (self.mean, self.variance, self.scv())
    }

    pub fn second_moment(&self) -> f64 {
        self.variance + self.mean * self.mean
    }

    /// `E[R(X)] = E[X^2] / (2 E[X])`.
    pub fn residual_mean(&self) -> f64 {
        self.second_moment() / (2.0 * self.mean)
    }

    pub fn is_exponential(&self) -> bool {
        matches!(self.family, Family::Exponential { .. })
    }

    /// Every supported family has all moments finite.
    pub fn has_finite_moment(&self, _order: u32) -> bool {
        true
    }

    /// Whether `P(X <= t) / t` stays bounded as `t -> 0`. Only Weibull with
    /// shape below one has an unbounded density at the origin.
    pub fn small_time_density_bounded(&self) -> bool {
        !matches!(self.family, Family::Weibull { shape, .. } if shape < 1.0)
    }

    /// The law of `factor * X`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        positive("scale factor", factor)?;
        let family = match self.family {
            Family::Exponential { rate } => Family::Exponential { rate: rate / factor },
            Family::Deterministic { value } => Family::Deterministic {
                value: value * factor,
            },
            Family::Erlang { k, rate } => Family::Erlang {
                k,
                rate: rate / factor,
            },
            Family::Hyperexponential { p, rate1, rate2 } => Family::Hyperexponential {
                p,
                rate1: rate1 / factor,
                rate2: rate2 / factor,
            },
            Family::Lognormal { mu, sigma } => Family::Lognormal {
                mu: mu + factor.ln(),
                sigma,
            },
            Family::Weibull { shape, scale } => Family::Weibull {
                shape,
                scale: scale * factor,
            },
        };
        Self::new(family)
    }

    /// One draw of `X`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            Family::Exponential { rate } => rng.sample::<f64, _>(Exp1) / rate,
            Family::Deterministic { value } => value,
            Family::Erlang { k, rate } => {
                (0..k).map(|_| rng.sample::<f64, _>(Exp1)).sum::<f64>() / rate
            }
            Family::Hyperexponential { p, rate1, rate2 } => {
                let rate = if rng.random::<f64>() < p { rate1 } else { rate2 };
                rng.sample::<f64, _>(Exp1) / rate
            }
            Family::Lognormal { mu, sigma } => {
                (mu + sigma * rng.sample::<f64, _>(StandardNormal)).exp()
            }
            Family::Weibull { shape, scale } => {
                scale * rng.sample::<f64, _>(Exp1).powf(1.0 / shape)
            }
        }
    }

    /// `P(X > y)`.
    pub fn survival(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 1.0;
        }
        match self.family {
            Family::Exponential { rate } => (-rate * y).exp(),
            Family::Deterministic { value } => {
                if y < value {
                    1.0
                } else {
                    0.0
                }
            }
            Family::Erlang { k, rate } => erlang_survival(k, rate, y),
            Family::Hyperexponential { p, rate1, rate2 } => {
                p * (-rate1 * y).exp() + (1.0 - p) * (-rate2 * y).exp()
            }
            Family::Lognormal { mu, sigma } => norm_sf((y.ln() - mu) / sigma),
            Family::Weibull { shape, scale } => (-(y / scale).powf(shape)).exp(),
        }
    }

    /// `P(R(X) > z)` in closed form.
    pub fn residual_survival(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 1.0;
        }
        match self.family {
            Family::Exponential { rate } => (-rate * z).exp(),
            Family::Deterministic { value } => (1.0 - z / value).max(0.0),
            Family::Erlang { k, rate } => {
                // (e^{-rz}/k) * sum_{i<k} (k - i) (rz)^i / i!
                let x = rate * z;
                let mut term = 1.0;
                let mut sum = 0.0;
                for i in 0..k {
                    if i > 0 {
                        term *= x / i as f64;
                    }
                    sum += (k - i) as f64 * term;
                }
                ((-x).exp() * sum / k as f64).min(1.0)
            }
            Family::Hyperexponential { p, rate1, rate2 } => {
                let w1 = p / rate1 / self.mean;
                w1 * (-rate1 * z).exp() + (1.0 - w1) * (-rate2 * z).exp()
            }
            Family::Lognormal { mu, sigma } => {
                let d1 = (mu + sigma * sigma - z.ln()) / sigma;
                let d2 = d1 - sigma;
                (norm_sf(-d1) - z / self.mean * norm_sf(-d2)).clamp(0.0, 1.0)
            }
            Family::Weibull { shape, scale } => {
                let u = (z / scale).powf(shape);
                gamma_ur(1.0 / shape, u).clamp(0.0, 1.0)
            }
        }
    }

    /// `P(R(X) <= z)`.
    pub fn residual_cdf(&self, z: f64) -> Result<f64> {
        if !(z >= 0.0) {
            return Err(Error::validation("z", format!("must be non-negative, got {z}")));
        }
        Ok(1.0 - self.residual_survival(z))
    }

    /// `P(R(X) <= z)` by adaptive quadrature of the survival function.
    pub fn residual_cdf_quadrature(&self, z: f64) -> Result<f64> {
        if !(z >= 0.0) {
            return Err(Error::validation("z", format!("must be non-negative, got {z}")));
        }
        let tol = RESIDUAL_TOL * self.mean;
        let tail = match self.family {
            // Integrate the finite support only; the jump at `value` is the end point.
            Family::Deterministic { value } if z < value => {
                numeric::integrate(|y| self.survival(y), z, value, tol)?
            }
            Family::Deterministic { .. } => 0.0,
            _ => numeric::integrate_to_inf(|y| self.survival(y), z, tol)?,
        };
        Ok(1.0 - tail / self.mean)
    }

    /// One draw of `R(X)`.
    pub fn residual_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        Ok(match self.family {
            Family::Exponential { .. } => self.sample(rng),
            Family::Deterministic { value } => value * (1.0 - rng.random::<f64>()),
            // R is a uniform mixture of Erlang(j, rate), j = 1..=k.
            Family::Erlang { k, rate } => {
                let j = rng.random_range(1..=k);
                (0..j).map(|_| rng.sample::<f64, _>(Exp1)).sum::<f64>() / rate
            }
            // R is hyperexponential with phase weights proportional to p_i / rate_i.
            Family::Hyperexponential { p, rate1, rate2 } => {
                let w1 = p / rate1 / self.mean;
                let rate = if rng.random::<f64>() < w1 { rate1 } else { rate2 };
                rng.sample::<f64, _>(Exp1) / rate
            }
            Family::Lognormal { .. } | Family::Weibull { .. } => {
                let u: f64 = rng.random();
                numeric::invert_increasing(
                    |z| 1.0 - self.residual_survival(z),
                    u,
                    self.residual_mean(),
                    RESIDUAL_TOL,
                )?
            }
        })
    }
}

fn erlang_survival(k: u32, rate: f64, y: f64) -> f64 {
    let x = rate * y;
    let mut term = 1.0;
    let mut sum = 1.0;
    for i in 1..k {
        term *= x / i as f64;
        sum += term;
    }
    (-x).exp() * sum
}

/// Halfin-Whitt scaling: `n` servers and arrival rate `lambda_n = n - B sqrt(n)`
/// in units of the common service rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScaling", into = "RawScaling")]
pub struct HWScaling {
    n: usize,
    b: f64,
}

#[derive(Serialize, Deserialize)]
struct RawScaling {
    n: usize,
    #[serde(rename = "B")]
    b: f64,
}

impl TryFrom<RawScaling> for HWScaling {
    type Error = Error;
    fn try_from(r: RawScaling) -> Result<Self> {
        HWScaling::new(r.n, r.b)
    }
}

impl From<HWScaling> for RawScaling {
    fn from(s: HWScaling) -> Self {
        RawScaling { n: s.n, b: s.b }
    }
}

impl HWScaling {
    pub fn new(n: usize, b: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::validation("n", "must be at least 1"));
        }
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::validation("B", format!("must be positive, got {b}")));
        }
        let s = Self { n, b };
        if s.lambda_n() <= 0.0 {
            return Err(Error::validation(
                "B",
                format!("lambda_n = n - B sqrt(n) must be positive (n={n}, B={b})"),
            ));
        }
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn sqrt_n(&self) -> f64 {
        (self.n as f64).sqrt()
    }

    pub fn lambda_n(&self) -> f64 {
        self.n as f64 - self.b * self.sqrt_n()
    }
}
