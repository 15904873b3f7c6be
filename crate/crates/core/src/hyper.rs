//! Explicit solver for the hyperbolic swarming system
//!
//! ```text
//! ∂_t u + z c₀(1−ζ) ∇·(uΛ) = 0
//! u (C₀ ∂_tΛ + C₁ Λ·∇Λ) + C₂ P_⊥∇u = 0,   P_⊥ = I − Λ⊗Λ
//! ```
//!
//! on a periodic grid. Density uses a conservative upwind flux; the direction
//! uses central differences followed by projection back onto the unit circle.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coefficients::{ClosureCoeffs, DirectionLaw, DEGENERATE_C0};
use crate::error::{Error, Result};
use crate::fracpde::{BoundaryMode, Field2D, VectorField2D};

/// Floor applied to `u` in the `1/u` factor.
pub const DENSITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperState {
    pub u: Field2D,
    pub lambda: VectorField2D,
    pub time: f64,
}

impl HyperState {
    pub fn new(u: Field2D, lambda: VectorField2D) -> Result<Self> {
        if u.grid != lambda.grid {
            return Err(Error::invalid("lambda", "grid differs from density grid"));
        }
        if u.grid.boundary != BoundaryMode::Periodic {
            return Err(Error::invalid("boundary", "the hyperbolic solver is periodic only"));
        }
        let mut lambda = lambda;
        for k in 0..u.grid.len() {
            let n = lambda.norm_at(k);
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::invalid("lambda", format!("cannot normalize direction at cell {k}")));
            }
            if n != 1.0 {
                lambda.x[k] /= n;
                lambda.y[k] /= n;
            }
        }
        Ok(HyperState { u, lambda, time: 0.0 })
    }

    /// Largest `||Λ| − 1|` over the grid.
    pub fn unit_defect(&self) -> f64 {
        (0..self.u.grid.len()).map(|k| (self.lambda.norm_at(k) - 1.0).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct HyperStepInfo {
    /// Cells where the density floor was active in the `1/u` factor.
    pub floored_cells: usize,
    pub min_u: f64,
}

/// Transport speed `z c₀ (1−ζ) = c₀ C₀`.
pub fn transport_speed(coeffs: &ClosureCoeffs) -> f64 {
    coeffs.c0 * coeffs.cc0
}

/// Largest stable step, `0.5·min(dx, dy)/|c₀C₀|`.
pub fn max_stable_dt(coeffs: &ClosureCoeffs, grid: &crate::fracpde::Grid2D) -> f64 {
    0.5 * grid.dx().min(grid.dy()) / transport_speed(coeffs).abs()
}

/// The hyperbolic system is a limit of the kinetic model only for `α > 3/2`.
pub fn check_limit_regime(alpha: f64) -> Result<()> {
    if alpha > 1.5 && alpha < 2.0 {
        Ok(())
    } else {
        Err(Error::Constraint(format!("α = {alpha} not > 3/2 for the hyperbolic limit")))
    }
}

pub fn hyper_step(state: &HyperState, coeffs: &ClosureCoeffs, dt: f64) -> Result<HyperState> {
    Ok(hyper_step_with_info(state, coeffs, dt)?.0)
}

pub fn hyper_step_with_info(state: &HyperState, coeffs: &ClosureCoeffs, dt: f64) -> Result<(HyperState, HyperStepInfo)> {
    if coeffs.cc0.abs() < DEGENERATE_C0 {
        return Err(Error::DegenerateClosure { c0: coeffs.cc0 });
    }
    let g = state.u.grid;
    if g.boundary != BoundaryMode::Periodic {
        return Err(Error::invalid("boundary", "the hyperbolic solver is periodic only"));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("dt", format!("{dt} must be positive")));
    }
    let speed = transport_speed(coeffs);
    if speed.abs() * dt > 0.5 * g.dx().min(g.dy()) {
        return Err(Error::Cfl(format!("|z c0 (1-zeta)| dt = {} exceeds half a cell {}", speed.abs() * dt, 0.5 * g.dx().min(g.dy()))));
    }
    let (nx, ny) = (g.nx, g.ny);
    let (dx, dy) = (g.dx(), g.dy());
    let u = &state.u.values;
    let (lx, ly) = (&state.lambda.x, &state.lambda.y);
    let idx = |i: usize, j: usize| i + nx * j;
    let upwind = |v: f64, left: f64, right: f64| if v >= 0.0 { v * left } else { v * right };

    // Face fluxes: fx[idx(i,j)] at (i+½, j), fy[idx(i,j)] at (i, j+½).
    let mut fx = vec![0.0; g.len()];
    let mut fy = vec![0.0; g.len()];
    for j in 0..ny {
        for i in 0..nx {
            let k = idx(i, j);
            let kr = idx((i + 1) % nx, j);
            let ku = idx(i, (j + 1) % ny);
            fx[k] = upwind(speed * 0.5 * (lx[k] + lx[kr]), u[k], u[kr]);
            fy[k] = upwind(speed * 0.5 * (ly[k] + ly[ku]), u[k], u[ku]);
        }
    }

    let mut next = state.clone();
    let mut info = HyperStepInfo {
        floored_cells: 0,
        min_u: f64::INFINITY,
    };
    let c1 = coeffs.cc1 / coeffs.cc0;
    let c2 = coeffs.cc2 / coeffs.cc0;
    for j in 0..ny {
        let (jm, jp) = ((j + ny - 1) % ny, (j + 1) % ny);
        for i in 0..nx {
            let (im, ip) = ((i + nx - 1) % nx, (i + 1) % nx);
            let k = idx(i, j);
            let (kl, kr, kd, ku) = (idx(im, j), idx(ip, j), idx(i, jm), idx(i, jp));
            next.u.values[k] = u[k] - dt * ((fx[k] - fx[kl]) / dx + (fy[k] - fy[kd]) / dy);

            let (ax, ay) = (lx[k], ly[k]);
            let dlx_dx = (lx[kr] - lx[kl]) / (2.0 * dx);
            let dlx_dy = (lx[ku] - lx[kd]) / (2.0 * dy);
            let dly_dx = (ly[kr] - ly[kl]) / (2.0 * dx);
            let dly_dy = (ly[ku] - ly[kd]) / (2.0 * dy);
            let gx = (u[kr] - u[kl]) / (2.0 * dx);
            let gy = (u[ku] - u[kd]) / (2.0 * dy);
            // P_⊥∇u
            let along = ax * gx + ay * gy;
            let (px, py) = (gx - along * ax, gy - along * ay);
            let inv_u = if u[k] > DENSITY_FLOOR {
                1.0 / u[k]
            } else {
                info.floored_cells += 1;
                1.0 / DENSITY_FLOOR
            };
            let inc_x = -c1 * (ax * dlx_dx + ay * dlx_dy) - c2 * inv_u * px;
            let inc_y = -c1 * (ax * dly_dx + ay * dly_dy) - c2 * inv_u * py;
            if inc_x != 0.0 || inc_y != 0.0 {
                let (bx, by) = (ax + dt * inc_x, ay + dt * inc_y);
                let n = bx.hypot(by);
                if !(n > 0.0 && n.is_finite()) {
                    return Err(Error::invalid("lambda", format!("direction collapsed at cell ({i}, {j})")));
                }
                next.lambda.x[k] = bx / n;
                next.lambda.y[k] = by / n;
            }
            info.min_u = info.min_u.min(next.u.values[k]);
        }
    }
    next.time = state.time + dt;
    Ok((next, info))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosureCheckReport {
    pub n_samples: usize,
    pub empirical: [f64; 2],
    pub expected: [f64; 2],
    pub tolerance: f64,
    pub pass: bool,
}

/// Sample the leading-order direction law `Φ_ζ = (1−ζ)Φ(Λ·θ) + ζ/|S|` and
/// compare its first moment with `z(1−ζ)Λ`.
pub fn closure_check<R: Rng + ?Sized>(align: &DirectionLaw, zeta: f64, direction: [f64; 2], n_samples: usize, rng: &mut R) -> Result<ClosureCheckReport> {
    if !(0.0..=1.0).contains(&zeta) {
        return Err(Error::invalid("zeta", format!("{zeta} not in [0, 1]")));
    }
    if n_samples == 0 {
        return Err(Error::invalid("n_samples", "must be positive"));
    }
    let norm = direction[0].hypot(direction[1]);
    if !(norm > 0.0) {
        return Err(Error::invalid("direction", "must be nonzero"));
    }
    let base = direction[1].atan2(direction[0]);
    let z = crate::coefficients::closure_z(align)?;
    let mut sum = [0.0, 0.0];
    for _ in 0..n_samples {
        let offset = if rng.random::<f64>() < zeta {
            DirectionLaw::Uniform.sample_offset(rng)
        } else {
            align.sample_offset(rng)
        };
        let a = base + offset;
        sum[0] += a.cos();
        sum[1] += a.sin();
    }
    let n = n_samples as f64;
    let empirical = [sum[0] / n, sum[1] / n];
    let s = z * (1.0 - zeta) / norm;
    let expected = [s * direction[0], s * direction[1]];
    let tolerance = 3.0 / n.sqrt() + 1e-3;
    let err = (empirical[0] - expected[0]).hypot(empirical[1] - expected[1]);
    Ok(ClosureCheckReport {
        n_samples,
        empirical,
        expected,
        tolerance,
        pass: err <= tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::ModelParams;
    use crate::fracpde::Grid2D;
    use rand::SeedableRng;
    use std::f64::consts::PI;

    fn coeffs(alpha: f64) -> ClosureCoeffs {
        let mut p = ModelParams::epuck(alpha, 20).unwrap();
        p.zeta = 0.3;
        p.kappa_align = 2.0;
        p.c0 = 1.0;
        ClosureCoeffs::compute(&p).unwrap()
    }

    fn torus(n: usize) -> Grid2D {
        Grid2D::new(n, n, 2.0 * PI, 2.0 * PI, BoundaryMode::Periodic).unwrap()
    }

    fn wavy(g: Grid2D) -> HyperState {
        let u = Field2D::from_fn(g, |x, y| 1.0 + 0.3 * (x + 2.0 * y).sin() * x.cos());
        let l = VectorField2D::from_fn(g, |x, y| [(0.5 * y.sin()).cos(), (0.5 * y.sin() + x.cos()).sin()]);
        HyperState::new(u, l).unwrap()
    }

    #[test]
    fn uniform_aligned_state_is_stationary() {
        let g = torus(32);
        let s0 = HyperState::new(Field2D::from_fn(g, |_, _| 0.7), VectorField2D::from_fn(g, |_, _| [0.6, 0.8])).unwrap();
        let c = coeffs(1.5);
        let mut s = s0.clone();
        for _ in 0..100 {
            s = hyper_step(&s, &c, 0.01).unwrap();
        }
        assert_eq!(s.u, s0.u);
        assert_eq!(s.lambda, s0.lambda);
    }

    #[test]
    fn single_step_oracle() {
        let g = torus(256);
        let c = coeffs(1.7);
        let s0 = HyperState::new(Field2D::from_fn(g, |_, y| 1.0 + 0.1 * y.sin()), VectorField2D::from_fn(g, |_, _| [1.0, 0.0])).unwrap();
        let dt = 0.01;
        let s1 = hyper_step(&s0, &c, dt).unwrap();
        let r = c.cc2 / c.cc0;
        for j in 0..g.ny {
            let [_, y] = g.center(0, j);
            let (bx, by): (f64, f64) = (1.0, -dt * r * 0.1 * y.cos() / (1.0 + 0.1 * y.sin()));
            let n = bx.hypot(by);
            let k = g.index(5, j);
            assert!((s1.lambda.x[k] - bx / n).abs() < 1e-6);
            assert!((s1.lambda.y[k] - by / n).abs() < 1e-6);
        }
        // u advects along x only and is x-independent: unchanged.
        assert!(s1.u.max_abs_diff(&s0.u) < 1e-15);
    }

    #[test]
    fn mass_and_unit_length_are_preserved() {
        let g = torus(32);
        let c = coeffs(1.6);
        let dt = 0.5 * max_stable_dt(&c, &g);
        let mut s = wavy(g);
        let m0 = s.u.mass();
        for _ in 0..1000 {
            s = hyper_step(&s, &c, dt).unwrap();
            assert!(s.unit_defect() < 1e-12);
        }
        assert!(((s.u.mass() - m0) / m0).abs() < 1e-10);
    }

    #[test]
    fn independent_of_alpha() {
        let g = torus(32);
        let s0 = wavy(g);
        let outs: Vec<HyperState> = [1.2, 1.5, 1.8].iter().map(|&a| hyper_step(&s0, &coeffs(a), 0.01).unwrap()).collect();
        assert_eq!(outs[0], outs[1]);
        assert_eq!(outs[1], outs[2]);
    }

    #[test]
    fn commutes_with_quarter_turn() {
        let g = torus(32);
        let n = g.nx;
        let c = coeffs(1.6);
        // (x, y) -> (−y, x) on cell indices, vectors rotated likewise.
        let rot = |s: &HyperState| {
            let mut r = s.clone();
            for j in 0..n {
                for i in 0..n {
                    let src = g.index(i, j);
                    let dst = g.index(n - 1 - j, i);
                    r.u.values[dst] = s.u.values[src];
                    r.lambda.x[dst] = -s.lambda.y[src];
                    r.lambda.y[dst] = s.lambda.x[src];
                }
            }
            r
        };
        let s0 = wavy(g);
        let a = rot(&hyper_step(&s0, &c, 0.02).unwrap());
        let b = hyper_step(&rot(&s0), &c, 0.02).unwrap();
        assert!(a.u.max_abs_diff(&b.u) < 1e-10);
        assert!(a.lambda.max_abs_diff(&b.lambda) < 1e-10);
    }

    #[test]
    fn rejects_degenerate_and_cfl() {
        let g = torus(32);
        let mut c = coeffs(1.6);
        let s = wavy(g);
        assert!(matches!(hyper_step(&s, &c, 10.0), Err(Error::Cfl(_))));
        c.cc0 = 0.0;
        assert!(matches!(hyper_step(&s, &c, 0.01), Err(Error::DegenerateClosure { .. })));
        assert!(check_limit_regime(1.4).is_err());
        assert!(check_limit_regime(1.6).is_ok());
    }

    #[test]
    fn closure_moments() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let vm = DirectionLaw::VonMises { kappa: 2.0 };
        let r = closure_check(&vm, 0.0, [1.0, 0.0], 1_000_000, &mut rng).unwrap();
        assert!(r.pass);
        assert!((r.empirical[0] - 0.6978).abs() < 0.003 && r.empirical[1].abs() < 0.003);
        let r = closure_check(&vm, 0.5, [0.0, 2.0], 1_000_000, &mut rng).unwrap();
        assert!(r.pass);
        assert!((r.empirical[1] - 0.5 * 0.6978).abs() < 0.003);
        let r = closure_check(&vm, 1.0, [1.0, 1.0], 100_000, &mut rng).unwrap();
        assert!(r.pass);
        assert!(r.empirical[0].hypot(r.empirical[1]) <= 3.0 / (1e5f64).sqrt());
    }
}
