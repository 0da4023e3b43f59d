//! Error function inverses accurate to a few ulps, including the tails.
//!
//! A polynomial initial guess is refined by Halley steps until the update
//! stalls; two steps suffice in the bulk, the far tail needs up to four.

use std::f64::consts::{FRAC_2_SQRT_PI, SQRT_2};

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Polynomial initial guess `p(w) · z` with `w = -ln((1 - z)(1 + z))`.
fn initial_guess(z: f64, w: f64) -> f64 {
    let p = if w < 5.0 {
        let w = w - 2.5;
        [
            2.81022636e-08,
            3.43273939e-07,
            -3.5233877e-06,
            -4.39150654e-06,
            0.00021858087,
            -0.00125372503,
            -0.00417768164,
            0.246640727,
            1.50140941,
        ]
        .iter()
        .fold(0.0, |acc, &c| c + acc * w)
    } else {
        let w = w.sqrt() - 3.0;
        [
            -0.000200214257,
            0.000100950558,
            0.00134934322,
            -0.00367342844,
            0.00573950773,
            -0.0076224613,
            0.00943887047,
            1.00167406,
            2.83297682,
        ]
        .iter()
        .fold(0.0, |acc, &c| c + acc * w)
    };
    p * z
}

/// Tail guess from `erfc(x) ≈ e^{-x²}(1 - 1/(2x²)) / (x√π)`, used where the
/// polynomial guess degrades (`u < e^{-25}`).
fn tail_guess(u: f64) -> f64 {
    let l = -u.ln();
    let mut x = l.sqrt();
    for _ in 0..4 {
        let x2 = l - (x * std::f64::consts::PI.sqrt()).ln() + (1.0 - 0.5 / (x * x)).ln();
        x = x2.sqrt();
    }
    x
}

const MAX_HALLEY: usize = 8;

/// Halley step for `f(x) = 0` where `f' = ±(2/√π)e^{-x²}` and `f'' = -2x f'`.
#[inline]
fn halley(x: f64, f: f64, df: f64) -> f64 {
    x - f / (df + x * f)
}

/// Inverse of `erf` on `(-1, 1)`; `±∞` at `±1`, NaN outside `[-1, 1]`.
pub fn erfinv(z: f64) -> f64 {
    if z.is_nan() || z.abs() > 1.0 {
        return f64::NAN;
    }
    if z.abs() == 1.0 {
        return z * f64::INFINITY;
    }
    if z.abs() > 0.5 {
        // 1 - |z| is exact here; the tail is refined on erfc.
        return z.signum() * erfcinv_small(1.0 - z.abs());
    }
    let w = -((1.0 - z) * (1.0 + z)).ln();
    let mut x = initial_guess(z, w);
    for _ in 0..MAX_HALLEY {
        let f = erf(x) - z;
        let next = halley(x, f, FRAC_2_SQRT_PI * (-x * x).exp());
        let done = (next - x).abs() <= 1e-16 * x.abs();
        x = next;
        if done {
            break;
        }
    }
    x
}

/// Inverse of `erfc` on `(0, 2)`; accurate for arguments near `0` and `2`.
pub fn erfcinv(u: f64) -> f64 {
    if u.is_nan() || !(0.0..=2.0).contains(&u) {
        return f64::NAN;
    }
    if u < 0.5 {
        erfcinv_small(u)
    } else if u > 1.5 {
        -erfcinv_small(2.0 - u)
    } else {
        erfinv(1.0 - u)
    }
}

fn erfcinv_small(u: f64) -> f64 {
    if u == 0.0 {
        return f64::INFINITY;
    }
    let w = -(u * (2.0 - u)).ln();
    let mut x = if w < 25.0 {
        initial_guess(1.0 - u, w)
    } else {
        tail_guess(u)
    };
    for _ in 0..MAX_HALLEY {
        let f = erfc(x) - u;
        let next = halley(x, f, -FRAC_2_SQRT_PI * (-x * x).exp());
        let done = (next - x).abs() <= 1e-16 * x;
        x = next;
        if done {
            break;
        }
    }
    x
}

/// Standard normal quantile `Φ⁻¹(p)`.
pub fn normal_quantile(p: f64) -> f64 {
    -SQRT_2 * erfcinv(2.0 * p)
}

/// `Φ⁻¹(1 - q)`, accurate for small upper-tail mass `q`.
pub fn normal_quantile_upper(q: f64) -> f64 {
    SQRT_2 * erfcinv(2.0 * q)
}

pub fn normal_cdf(y: f64) -> f64 {
    0.5 * erfc(-y / SQRT_2)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Three-term recurrence for P_n(z) and its derivative.
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    // erfc has relative condition number about 2x² in the tail.
    fn tail_tol(x: f64) -> f64 {
        8.0 * f64::EPSILON * (1.0 + 2.0 * x * x)
    }

    fn bisect_erfc(u: f64) -> f64 {
        let (mut lo, mut hi) = (0.0f64, 40.0f64);
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if erfc(m) > u {
                lo = m;
            } else {
                hi = m;
            }
        }
        lo
    }

    #[test]
    fn erfinv_round_trips() {
        for i in -999..=999 {
            let z = i as f64 / 1000.0;
            let x = erfinv(z);
            if z != 0.0 {
                assert!(rel(erf(x), z) < 1e-14, "z = {z}");
            }
        }
        for e in 1..=15 {
            let u = 10f64.powi(-e);
            let z = 1.0 - u;
            let x = erfinv(z);
            assert!(rel(erfc(x), 1.0 - z) < tail_tol(x), "u = {u}");
        }
    }

    #[test]
    fn erfcinv_tail() {
        for e in 1..=300 {
            let u = 10f64.powi(-e);
            let x = erfcinv(u);
            assert!(rel(erfc(x), u) < tail_tol(x), "u = {u}");
            assert!(rel(x, bisect_erfc(u)) < 4.0 * f64::EPSILON, "u = {u}");
            let mirrored = 2.0 - (2.0 - u);
            if mirrored > 0.0 {
                assert_eq!(erfcinv(2.0 - u), -erfcinv(mirrored));
            }
        }
        assert_eq!(erfcinv(1.0), 0.0);
        assert_eq!(erfinv(1.0), f64::INFINITY);
        assert!(erfinv(1.5).is_nan());
    }

    #[test]
    fn known_quantiles() {
        assert!((normal_quantile(0.75) - 0.674489750196082).abs() < 1e-14);
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-14);
        assert!((normal_quantile_upper(1e-10) - 6.361340902404056).abs() < 1e-12);
        assert!((normal_cdf(normal_quantile(0.3)) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [1, 2, 5, 12, 40] {
            let (x, w) = gauss_legendre(n);
            for deg in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n = {n}, degree {deg}: {q}");
            }
        }
    }
}
