//! Adaptive quadrature and bracketed root finding.

use crate::error::{Error, Result};

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol` by global
/// interval bisection.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    const MAX_INTERVALS: usize = 2000;
    if a == b {
        return Ok(0.0);
    }
    let mut parts = vec![(a, b, gk15(&f, a, b))];
    loop {
        let (total, err) = parts
            .iter()
            .fold((0.0, 0.0), |(s, e), (_, _, (v, ev))| (s + v, e + ev));
        if !total.is_finite() {
            return Err(Error::numeric(
                "integrate",
                format!("non-finite integrand on [{a}, {b}]"),
            ));
        }
        if err <= tol {
            return Ok(total);
        }
        if parts.len() >= MAX_INTERVALS {
            return Err(Error::numeric(
                "integrate",
                format!(
                    "no convergence on [{a}, {b}] after {MAX_INTERVALS} intervals: \
                     estimate {total:e}, error {err:e}, tolerance {tol:e}"
                ),
            ));
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .map(|(i, _)| i)
            .expect("at least one interval");
        let (lo, hi, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        parts.push((lo, mid, gk15(&f, lo, mid)));
        parts.push((mid, hi, gk15(&f, mid, hi)));
    }
}

/// Integrates `f` over `[a, ∞)` via the substitution `y = a + u/(1-u)`.
pub fn integrate_to_inf<F: Fn(f64) -> f64>(f: F, a: f64, tol: f64) -> Result<f64> {
    integrate(
        |u| {
            if u >= 1.0 {
                return 0.0;
            }
            let w = 1.0 - u;
            let v = f(a + u / w) / (w * w);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        tol,
    )
}

/// Finds `z >= 0` with `g(z) = target` for non-decreasing `g` with `g(0) <= target`,
/// to absolute tolerance `tol` in `z`. The upper bracket starts at `hint` and doubles.
pub fn invert_increasing<G: Fn(f64) -> f64>(g: G, target: f64, hint: f64, tol: f64) -> Result<f64> {
    let mut lo = 0.0;
    let mut hi = hint.max(tol);
    let mut doublings = 0;
    while g(hi) < target {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 || !hi.is_finite() {
            return Err(Error::numeric(
                "invert_increasing",
                format!("could not bracket target {target} (last upper point {hi:e})"),
            ));
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `ln(n!) - [(n + 1/2) ln n - n + ln sqrt(2 pi)]`, the Stirling remainder.
fn stirling_error(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15.0 {
        // Small arguments: lgamma is accurate and the values are O(1).
        return libm::lgamma(n + 1.0) - (n + 0.5) * n.ln() + n - 0.5 * (2.0 * std::f64::consts::PI).ln();
    }
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// Deviance term `x ln(x / m) + m - x`, computed without cancellation when
/// `x` is close to `m`.
fn deviance(x: f64, m: f64) -> f64 {
    if (x - m).abs() < 0.1 * (x + m) {
        let v = (x - m) / (x + m);
        let mut s = (x - m) * v;
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let next = s + ej / (2 * j + 1) as f64;
            if next == s {
                return s;
            }
            s = next;
        }
        s
    } else {
        x * (x / m).ln() + m - x
    }
}

/// Poisson probability `P(Z = k)` by the saddle-point form, accurate to a
/// few ulps for large `k` and `mean` where the naive log-space formula loses
/// digits.
pub fn poisson_pmf(k: u64, mean: f64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if k == 0 {
        return (-mean).exp();
    }
    let x = k as f64;
    (-stirling_error(x) - deviance(x, mean)).exp() / (2.0 * std::f64::consts::PI * x).sqrt()
}

/// `P(Z >= n)` for `Z ~ Poisson(mean)`. Sums the pmf over the short side of
/// the mode using the ratio recursion.
pub fn poisson_upper_tail(n: u64, mean: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    if mean < n as f64 {
        // Terms above n decay at least geometrically.
        let mut term = poisson_pmf(n, mean);
        let mut sum = 0.0;
        let mut k = n;
        while term > sum * 1e-17 {
            sum += term;
            k += 1;
            term *= mean / k as f64;
        }
        sum
    } else {
        let mut term = poisson_pmf(n - 1, mean);
        let mut sum = 0.0;
        let mut k = n - 1;
        loop {
            sum += term;
            if k == 0 || term <= sum * 1e-17 {
                break;
            }
            term *= k as f64 / mean;
            k -= 1;
        }
        1.0 - sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|x| 3.0 * x * x, 0.0, 2.0, 1e-12).unwrap();
        assert_abs_diff_eq!(v, 8.0, epsilon = 1e-12);
    }

    #[test]
    fn exponential_tail() {
        let v = integrate_to_inf(|y| (-y).exp(), 1.0, 1e-10).unwrap();
        assert_abs_diff_eq!(v, (-1.0f64).exp(), epsilon = 1e-10);
    }

    #[test]
    fn kinked_integrand() {
        let v = integrate(|x: f64| (x - 0.3).abs(), 0.0, 1.0, 1e-10).unwrap();
        assert_abs_diff_eq!(v, 0.5 * (0.09 + 0.49), epsilon = 1e-10);
    }

    #[test]
    fn nan_integrand_is_an_error() {
        assert!(integrate(|_| f64::NAN, 0.0, 1.0, 1e-10).is_err());
    }

    #[test]
    fn inverts_cdf() {
        let z = invert_increasing(|z| 1.0 - (-z).exp(), 0.5, 1.0, 1e-12).unwrap();
        assert_abs_diff_eq!(z, 2f64.ln(), epsilon = 1e-11);
    }

    #[test]
    fn poisson_pmf_small_cases() {
        assert!((poisson_pmf(0, 2.0) - (-2.0f64).exp()).abs() < 1e-16);
        assert!((poisson_pmf(3, 2.0) - 8.0 / 6.0 * (-2.0f64).exp()).abs() < 1e-15);
        let total: f64 = (0..60).map(|k| poisson_pmf(k, 7.5)).sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn poisson_tail_both_sides() {
        // P(Z >= 1) = 1 - e^{-m}
        assert!((poisson_upper_tail(1, 0.3) - (1.0 - (-0.3f64).exp())).abs() < 1e-15);
        assert!((poisson_upper_tail(2, 5.0) - (1.0 - 6.0 * (-5.0f64).exp())).abs() < 1e-14);
        assert_eq!(poisson_upper_tail(0, 5.0), 1.0);
    }
}
