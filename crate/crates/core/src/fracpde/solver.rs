use serde::{Deserialize, Serialize};

use super::coverage::Observer;
use super::grid::{Field2D, Grid2D, VectorField2D};
use super::spectral::{Spectral, C64};
use crate::coefficients::ClosureCoeffs;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MobilityMode {
    /// `F ≡ f_const`, the dilute (collision-free) mobility.
    Constant,
    /// `F(u) = f_const + f_slope·u`, lagged at the previous step.
    #[default]
    Nonlinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    pub coeffs: ClosureCoeffs,
    pub linear_solver_tol: f64,
    pub linear_solver_max_iter: usize,
    pub mobility_mode: MobilityMode,
    /// Store every k-th step; the endpoints are always stored.
    pub store_every: usize,
}

impl SolverConfig {
    pub fn new(coeffs: ClosureCoeffs, dt: f64, t_end: f64) -> Self {
        SolverConfig {
            dt,
            t_end,
            coeffs,
            linear_solver_tol: 1e-10,
            linear_solver_max_iter: 500,
            mobility_mode: MobilityMode::Nonlinear,
            store_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", format!("{} must be positive", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::invalid("t_end", format!("{} must be nonnegative", self.t_end)));
        }
        if !(self.linear_solver_tol > 0.0) || self.linear_solver_max_iter == 0 {
            return Err(Error::invalid("linear_solver", "tolerance and iteration cap must be positive"));
        }
        if self.store_every == 0 {
            return Err(Error::invalid("store_every", "must be at least 1"));
        }
        check_order(self.coeffs.alpha)?;
        if !(self.coeffs.c_alpha.is_finite()) {
            return Err(Error::invalid("c_alpha", "not finite"));
        }
        Ok(())
    }

    /// Number of steps to reach `t_end`; the last step is not shortened.
    pub fn n_steps(&self) -> usize {
        let n = self.t_end / self.dt;
        let r = n.round();
        if (n - r).abs() < 1e-9 * n.max(1.0) {
            r as usize
        } else {
            n.ceil() as usize
        }
    }
}

fn check_order(alpha: f64) -> Result<()> {
    if alpha > 1.0 && alpha <= 2.0 {
        Ok(())
    } else {
        Err(Error::invalid("alpha", format!("{alpha} not in (1, 2]")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub iterations: usize,
    /// `‖r‖/‖u_n‖` of the accepted linear solve.
    pub residual: f64,
    pub min_value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub steps: usize,
    pub total_iterations: usize,
    pub max_iterations: usize,
    pub max_residual: f64,
    /// Most negative value seen; undershoots are reported, not clipped.
    pub min_value: f64,
    pub max_relative_mass_drift: f64,
}

impl SolveStats {
    pub(crate) fn record(&mut self, s: &StepStats, drift: f64) {
        self.steps += 1;
        self.total_iterations += s.iterations;
        self.max_iterations = self.max_iterations.max(s.iterations);
        self.max_residual = self.max_residual.max(s.residual);
        self.min_value = self.min_value.min(s.min_value);
        self.max_relative_mass_drift = self.max_relative_mass_drift.max(drift);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub fields: Vec<Field2D>,
    pub stats: SolveStats,
}

impl Trajectory {
    pub fn last(&self) -> &Field2D {
        self.fields.last().expect("trajectory is never empty")
    }
}

/// Implicit-Euler solver for `∂_t u = ∇·((C_α/F(u)) ∇^{α−1}u)`.
///
/// With `m = C_α/F(uⁿ)` and `m̄ = min m`, the step operator is split as
/// `L v = m̄(−Δ)^{α/2} v − ∇·((m − m̄)∇^{α−1} v)`. The first part is diagonal
/// in frequency and also serves as preconditioner; the second is applied
/// matrix-free. `L` is self-adjoint and nonnegative in the inner product
/// weighted by `|ξ|^{α−2}`, which is where the conjugate-gradient iteration runs.
#[derive(Debug)]
pub struct FracSolver {
    pub spectral: Spectral,
    pub config: SolverConfig,
    abs_alpha: Vec<f64>,
    weight: Vec<f64>,
}

impl FracSolver {
    pub fn new(grid: Grid2D, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let spectral = Spectral::new(grid);
        let alpha = config.coeffs.alpha;
        let abs_alpha = spectral.abs_xi_pow(alpha);
        let weight = spectral.abs_xi_pow(alpha - 2.0);
        Ok(FracSolver {
            spectral,
            config,
            abs_alpha,
            weight,
        })
    }

    pub fn grid(&self) -> Grid2D {
        self.spectral.grid
    }

    fn check_grid(&self, u: &Field2D) -> Result<()> {
        if u.grid != self.spectral.grid {
            return Err(Error::invalid("field", "grid does not match the solver grid"));
        }
        Ok(())
    }

    /// Mobility `C_α/F(u)` on the computational grid.
    pub fn mobility(&self, u: &Field2D) -> Result<Vec<f64>> {
        let c = &self.config.coeffs;
        let ext = self.spectral.extend(&u.values, false, false);
        let f: Vec<f64> = match self.config.mobility_mode {
            MobilityMode::Constant => vec![c.f_const; ext.len()],
            MobilityMode::Nonlinear => ext.iter().map(|&v| c.f_const + c.f_slope * v).collect(),
        };
        let min_f = f.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min_f > 0.0) {
            return Err(Error::SingularMobility { min_f });
        }
        Ok(f.iter().map(|&fv| c.c_alpha / fv).collect())
    }

    pub fn frac_gradient(&mut self, u: &Field2D) -> Result<VectorField2D> {
        self.check_grid(u)?;
        frac_gradient_with(&mut self.spectral, u, self.config.coeffs.alpha)
    }

    /// `∇·((C_α/F(u)) ∇^{α−1}u)`.
    pub fn apply_generator(&mut self, u: &Field2D) -> Result<Field2D> {
        self.check_grid(u)?;
        let m = self.mobility(u)?;
        let m_bar = m.iter().copied().fold(f64::INFINITY, f64::min);
        let dm: Vec<f64> = m.iter().map(|v| v - m_bar).collect();
        let hat = self.spectral.field_hat(u);
        let lv = self.split_operator(&hat, m_bar, &dm);
        let neg: Vec<C64> = lv.iter().map(|v| -v).collect();
        Ok(self.spectral.field_from_hat(&neg))
    }

    // L v in frequency space.
    fn split_operator(&mut self, v: &[C64], m_bar: f64, dm: &[f64]) -> Vec<C64> {
        let mut out: Vec<C64> = v.iter().zip(&self.abs_alpha).map(|(x, s)| x * (m_bar * s)).collect();
        if dm.iter().any(|&d| d != 0.0) {
            let (gx, gy) = self.spectral.frac_gradient_hat(v, self.config.coeffs.alpha);
            let (mut rx, mut ry) = self.spectral.pair_real(&gx, &gy);
            for k in 0..dm.len() {
                rx[k] *= dm[k];
                ry[k] *= dm[k];
            }
            let (fx, fy) = self.spectral.pair_hat(&rx, &ry);
            let div = self.spectral.divergence_hat(&fx, &fy);
            out.iter_mut().zip(&div).for_each(|(o, d)| *o -= d);
        }
        out
    }

    fn weighted_dot(&self, a: &[C64], b: &[C64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.weight)
            .skip(1)
            .map(|((x, y), w)| w * (x.re * y.re + x.im * y.im))
            .sum()
    }

    /// One implicit-Euler step `(I + Δt L(uⁿ)) uⁿ⁺¹ = uⁿ`.
    pub fn step(&mut self, u: &Field2D) -> Result<(Field2D, StepStats)> {
        self.step_with_rhs(u, u)
    }

    /// Solve `(I + Δt L(u)) v = rhs` with the mobility frozen at `u`.
    pub fn step_with_rhs(&mut self, u: &Field2D, rhs: &Field2D) -> Result<(Field2D, StepStats)> {
        self.check_grid(u)?;
        self.check_grid(rhs)?;
        if rhs.values.iter().all(|&v| v == rhs.values[0]) {
            return Ok((
                rhs.clone(),
                StepStats {
                    iterations: 0,
                    residual: 0.0,
                    min_value: rhs.values[0],
                },
            ));
        }
        let dt = self.config.dt;
        let m = self.mobility(u)?;
        let m_bar = m.iter().copied().fold(f64::INFINITY, f64::min);
        let dm: Vec<f64> = m.iter().map(|v| v - m_bar).collect();
        let b = self.spectral.field_hat(rhs);
        let precond: Vec<f64> = self.abs_alpha.iter().map(|s| 1.0 / (1.0 + dt * m_bar * s)).collect();

        let mut x: Vec<C64> = b.iter().zip(&precond).map(|(v, p)| v * p).collect();
        let mut iterations = 0;
        let mut residual = 0.0;
        if dm.iter().any(|&d| d != 0.0) {
            let b_norm = l2(&b);
            let apply = |s: &mut Self, v: &[C64]| -> Vec<C64> {
                let lv = s.split_operator(v, m_bar, &dm);
                v.iter().zip(&lv).map(|(a, l)| a + dt * l).collect()
            };
            let ax = apply(self, &x);
            let mut r: Vec<C64> = b.iter().zip(&ax).map(|(a, c)| a - c).collect();
            r[0] = C64::default();
            residual = l2(&r) / b_norm;
            let mut z: Vec<C64> = r.iter().zip(&precond).map(|(v, p)| v * p).collect();
            let mut p = z.clone();
            let mut rz = self.weighted_dot(&r, &z);
            while residual > self.config.linear_solver_tol {
                if iterations >= self.config.linear_solver_max_iter {
                    return Err(Error::LinearSolve { iterations, residual });
                }
                iterations += 1;
                let ap = apply(self, &p);
                let step = rz / self.weighted_dot(&p, &ap);
                for k in 1..x.len() {
                    x[k] += p[k] * step;
                    r[k] -= ap[k] * step;
                }
                residual = l2(&r) / b_norm;
                z = r.iter().zip(&precond).map(|(v, p)| v * p).collect();
                let rz_new = self.weighted_dot(&r, &z);
                let beta = rz_new / rz;
                rz = rz_new;
                p.iter_mut().zip(&z).for_each(|(pk, zk)| *pk = zk + *pk * beta);
            }
        }
        let next = self.spectral.field_from_hat(&x);
        let min_value = next.min();
        Ok((
            next,
            StepStats {
                iterations,
                residual,
                min_value,
            },
        ))
    }

    /// March to `t_end`, calling every observer on the initial state and after each step.
    pub fn solve(&mut self, u0: &Field2D, observers: &mut [&mut dyn Observer]) -> Result<Trajectory> {
        self.check_grid(u0)?;
        let n_steps = self.config.n_steps();
        let mass0 = u0.mass();
        let mut stats = SolveStats {
            min_value: u0.min(),
            ..Default::default()
        };
        let mut traj = Trajectory {
            times: vec![0.0],
            fields: vec![u0.clone()],
            stats: SolveStats::default(),
        };
        for obs in observers.iter_mut() {
            obs.observe(0, 0.0, u0)?;
        }
        let mut u = u0.clone();
        for step in 1..=n_steps {
            let (next, s) = self.step(&u).map_err(|e| e.at_step(step))?;
            u = next;
            let drift = if mass0 != 0.0 { ((u.mass() - mass0) / mass0).abs() } else { u.mass().abs() };
            stats.record(&s, drift);
            let t = step as f64 * self.config.dt;
            for obs in observers.iter_mut() {
                obs.observe(step, t, &u).map_err(|e| e.at_step(step))?;
            }
            if step % self.config.store_every == 0 || step == n_steps {
                traj.times.push(t);
                traj.fields.push(u.clone());
            }
        }
        traj.stats = stats;
        Ok(traj)
    }
}

fn l2(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn frac_gradient_with(sp: &mut Spectral, u: &Field2D, alpha: f64) -> Result<VectorField2D> {
    check_order(alpha)?;
    let hat = sp.field_hat(u);
    let (gx, gy) = sp.frac_gradient_hat(&hat, alpha);
    let (x, y) = sp.pair_real(&gx, &gy);
    Ok(VectorField2D {
        grid: u.grid,
        x: sp.restrict(&x),
        y: sp.restrict(&y),
    })
}

/// `∇^{α−1}u`, the field with Fourier multiplier `iξ|ξ|^{α−2}`.
pub fn frac_gradient(u: &Field2D, alpha: f64) -> Result<VectorField2D> {
    frac_gradient_with(&mut Spectral::new(u.grid), u, alpha)
}

pub fn apply_generator(u: &Field2D, coeffs: &ClosureCoeffs, mode: MobilityMode) -> Result<Field2D> {
    let mut config = SolverConfig::new(coeffs.clone(), 1.0, 0.0);
    config.mobility_mode = mode;
    FracSolver::new(u.grid, config)?.apply_generator(u)
}

pub fn step_implicit(u: &Field2D, config: &SolverConfig) -> Result<Field2D> {
    Ok(FracSolver::new(u.grid, config.clone())?.step(u)?.0)
}

pub fn solve(u0: &Field2D, config: &SolverConfig, observers: &mut [&mut dyn Observer]) -> Result<Trajectory> {
    FracSolver::new(u0.grid, config.clone())?.solve(u0, observers)
}
