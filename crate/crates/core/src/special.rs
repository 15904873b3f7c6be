//! Special functions used by the closure constants and their oracles.

use std::f64::consts::PI;

/// Gamma function on the real line, including negative non-integers.
pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

/// Exponentially scaled modified Bessel function `e^{-x} I_n(x)` for `x >= 0`.
pub fn bessel_i_scaled(n: u32, x: f64) -> f64 {
    assert!(x >= 0.0, "bessel_i_scaled needs x >= 0");
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    if x < 40.0 {
        series_scaled(n, x)
    } else {
        asymptotic_scaled(n, x)
    }
}

// Ascending series; all terms positive so there is no cancellation.
fn series_scaled(n: u32, x: f64) -> f64 {
    {
        let half = 0.5 * x;
        let mut term = half.powi(n as i32) / factorial(n);
        let mut sum = term;
        let q = half * half;
        let mut k = 1.0;
        loop {
            term *= q / (k * (k + n as f64));
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
            k += 1.0;
        }
        sum * (-x).exp()
    }
}

// Large-argument expansion, mu = 4 n^2.
fn asymptotic_scaled(n: u32, x: f64) -> f64 {
    {
        let mu = 4.0 * (n as f64).powi(2);
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..60 {
            let k = k as f64;
            term *= -(mu - (2.0 * k - 1.0).powi(2)) / (k * 8.0 * x);
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        sum / (2.0 * PI * x).sqrt()
    }
}

/// `I_1(κ)/I_0(κ)`: the mean resultant length of a von Mises law.
pub fn bessel_ratio_i1_i0(kappa: f64) -> f64 {
    if kappa == 0.0 {
        return 0.0;
    }
    bessel_i_scaled(1, kappa) / bessel_i_scaled(0, kappa)
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}
