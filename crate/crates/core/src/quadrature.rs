//! Adaptive Gauss–Kronrod (7/15) quadrature.

use crate::error::{Error, Result};

/// Default absolute tolerance used for every closure integral.
pub const ABS_TOL: f64 = 1e-12;
/// Default relative tolerance used for every closure integral.
pub const REL_TOL: f64 = 1e-10;

const MAX_INTERVALS: usize = 4000;

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
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Integrate `f` over `[a, b]` to `max(abs_tol, rel_tol*|I|)` by global bisection
/// of the interval with the largest error estimate.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Integral> {
    let mut intervals = vec![(a, b, gk15(&f, a, b))];
    let mut evaluations = 15;
    loop {
        let (value, error) = intervals
            .iter()
            .fold((0.0, 0.0), |(v, e), (_, _, (iv, ie))| (v + iv, e + ie));
        if value.is_finite() && error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(Integral {
                value,
                error,
                evaluations,
            });
        }
        if intervals.len() >= MAX_INTERVALS || !value.is_finite() {
            return Err(Error::Quadrature {
                what: format!("integral over [{a}, {b}]"),
                error,
            });
        }
        let worst = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .map(|(i, _)| i)
            .unwrap();
        let (lo, hi, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Err(Error::Quadrature {
                what: format!("integral over [{a}, {b}] (interval underflow)"),
                error,
            });
        }
        intervals.push((lo, mid, gk15(&f, lo, mid)));
        intervals.push((mid, hi, gk15(&f, mid, hi)));
        evaluations += 30;
    }
}

/// Integrate over consecutive breakpoints, summing the pieces.
pub fn integrate_pieces<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Integral> {
    let mut total = Integral {
        value: 0.0,
        error: 0.0,
        evaluations: 0,
    };
    let pieces = breaks.len().saturating_sub(1).max(1) as f64;
    for w in breaks.windows(2) {
        let part = integrate(&f, w[0], w[1], abs_tol / pieces, rel_tol)?;
        total.value += part.value;
        total.error += part.error;
        total.evaluations += part.evaluations;
    }
    Ok(total)
}

/// Shorthand with the crate-wide default tolerances.
pub fn integrate_default<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> Result<Integral> {
    integrate(f, a, b, ABS_TOL, REL_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate_default(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0).unwrap();
        assert!((r.value - (64.0 / 6.0 - 1.0 / 6.0 - 9.0)).abs() < 1e-13);
        assert_eq!(r.evaluations, 15);
    }

    #[test]
    fn oscillatory_and_kinked() {
        let r = integrate_default(|x| (x - 1.0).abs(), 0.0, PI).unwrap();
        let exact = 0.5 + 0.5 * (PI - 1.0).powi(2);
        assert!((r.value - exact).abs() < 1e-11);
        let r = integrate_default(|x| (10.0 * x).sin().powi(2), 0.0, 2.0 * PI).unwrap();
        assert!((r.value - PI).abs() < 1e-11);
    }

    #[test]
    fn divergent_integrand_reports_failure() {
        let r = integrate(|x: f64| 1.0 / x, 0.0, 1.0, 1e-12, 1e-12);
        assert!(matches!(r, Err(Error::Quadrature { .. })), "{r:?}");
    }
}
