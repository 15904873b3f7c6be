//! Field-level alignment: nonlocal flux, mean direction and the coupled solve.
//!
//! The kernel is normalized to unit mass over its cutoff disk. Only the
//! direction of the flux enters the model, so the prefactor of the flux is
//! irrelevant. Where `|J|` vanishes the alignment term is dropped.

use serde::{Deserialize, Serialize};

use crate::coefficients::ClosureCoeffs;
use crate::error::{Error, Result};
use crate::fracpde::spectral::{Spectral, C64};
use crate::fracpde::{Field2D, FracSolver, Observer, SolveStats, SolverConfig, Trajectory, VectorField2D};

pub const DEGENERATE_FLUX: f64 = 1e-12;
pub const FIXED_POINT_DAMPING: f64 = 0.5;
pub const FIXED_POINT_TOL: f64 = 1e-8;
pub const FIXED_POINT_MAX_ITER: usize = 100;

/// Exponential influence kernel `K(r) ∝ e^{−r/R}` truncated at `cutoff`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfluenceKernelSpec {
    pub range: f64,
    pub cutoff: f64,
}

impl InfluenceKernelSpec {
    pub fn new(range: f64, cutoff: f64) -> Result<Self> {
        let k = InfluenceKernelSpec { range, cutoff };
        k.validate()?;
        Ok(k)
    }

    /// Kernel with the smallest admissible cutoff, `5R`.
    pub fn with_range(range: f64) -> Result<Self> {
        Self::new(range, 5.0 * range)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.range > 0.0 && self.range.is_finite()) {
            return Err(Error::invalid("kernel range", format!("{} must be positive", self.range)));
        }
        if !(self.cutoff >= 5.0 * self.range) || !self.cutoff.is_finite() {
            return Err(Error::invalid("kernel cutoff", format!("{} must be at least 5·range", self.cutoff)));
        }
        Ok(())
    }

    /// Kernel value at distance `r`; integrates to 1 over the cutoff disk.
    pub fn value(&self, r: f64) -> f64 {
        if r > self.cutoff {
            return 0.0;
        }
        let q = self.cutoff / self.range;
        let truncated_mass = 1.0 - (-q).exp() * (1.0 + q);
        (-r / self.range).exp() / (2.0 * std::f64::consts::PI * self.range * self.range * truncated_mass)
    }

    /// Sampled kernel spectrum on the computational grid of `sp`. The kernel
    /// must fit inside half a period so that minimum-image distances are exact.
    pub fn spectrum(&self, sp: &mut Spectral) -> Result<Vec<f64>> {
        self.validate()?;
        let (lx, ly) = sp.grid.extended_lengths();
        if self.cutoff >= 0.5 * lx.min(ly) {
            return Err(Error::invalid("kernel cutoff", format!("{} exceeds half the periodic domain", self.cutoff)));
        }
        let (dx, dy) = (sp.grid.dx(), sp.grid.dy());
        let area = dx * dy;
        let mut samples = vec![0.0; sp.len()];
        for j in 0..sp.ny {
            let y = dy * (if j <= sp.ny / 2 { j as f64 } else { j as f64 - sp.ny as f64 });
            for i in 0..sp.nx {
                let x = dx * (if i <= sp.nx / 2 { i as f64 } else { i as f64 - sp.nx as f64 });
                samples[sp.index(i, j)] = self.value(x.hypot(y)) * area;
            }
        }
        Ok(sp.to_hat(&samples).iter().map(|c| c.re).collect())
    }
}

fn convolve(sp: &mut Spectral, khat: &[f64], w: &VectorField2D) -> VectorField2D {
    let (mut xh, mut yh) = sp.vector_hat(w);
    for k in 0..khat.len() {
        xh[k] *= khat[k];
        yh[k] *= khat[k];
    }
    let (x, y) = sp.pair_real(&xh, &yh);
    VectorField2D {
        grid: w.grid,
        x: sp.restrict(&x),
        y: sp.restrict(&y),
    }
}

/// `J = K * w`.
pub fn nonlocal_flux(w: &VectorField2D, kernel: &InfluenceKernelSpec) -> Result<VectorField2D> {
    let mut sp = Spectral::new(w.grid);
    let khat = kernel.spectrum(&mut sp)?;
    Ok(convolve(&mut sp, &khat, w))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanDirection {
    pub lambda: VectorField2D,
    /// Cells with `|J| <` [`DEGENERATE_FLUX`]; `lambda` is zero there.
    pub degenerate: Vec<bool>,
}

impl MeanDirection {
    pub fn degenerate_count(&self) -> usize {
        self.degenerate.iter().filter(|&&d| d).count()
    }
}

/// Pointwise `J/|J|`.
pub fn normalize_flux(j: &VectorField2D) -> MeanDirection {
    let mut lambda = VectorField2D::zeros(j.grid);
    let mut degenerate = vec![false; j.grid.len()];
    for k in 0..j.grid.len() {
        let n = j.norm_at(k);
        if n < DEGENERATE_FLUX {
            degenerate[k] = true;
        } else {
            lambda.x[k] = j.x[k] / n;
            lambda.y[k] = j.y[k] / n;
        }
    }
    MeanDirection { lambda, degenerate }
}

/// `Λ^w = (K * w)/|K * w|`.
pub fn lambda_w(w: &VectorField2D, kernel: &InfluenceKernelSpec) -> Result<MeanDirection> {
    Ok(normalize_flux(&nonlocal_flux(w, kernel)?))
}

fn mobility_f(u: &Field2D, c: &ClosureCoeffs) -> Result<Vec<f64>> {
    let f: Vec<f64> = u.values.iter().map(|&v| c.f_const + c.f_slope * v).collect();
    let min_f = f.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min_f > 0.0) {
        return Err(Error::SingularMobility { min_f });
    }
    Ok(f)
}

/// Weak-alignment closure `w = −(C_α/F)∇^{α−1}u + ℓ(G/F)Λ^u`, with `Λ^u` the
/// direction of `J^u = −C_α K * (∇^{α−1}u/F)`.
pub fn weak_alignment_w(u: &Field2D, coeffs: &ClosureCoeffs, ell: f64, kernel: &InfluenceKernelSpec) -> Result<VectorField2D> {
    check_ell(ell)?;
    let f = mobility_f(u, coeffs)?;
    let mut sp = Spectral::new(u.grid);
    let grad = crate::fracpde::solver::frac_gradient_with(&mut sp, u, coeffs.alpha)?;
    let mut q = grad.clone();
    for k in 0..f.len() {
        q.x[k] *= -coeffs.c_alpha / f[k];
        q.y[k] *= -coeffs.c_alpha / f[k];
    }
    let khat = kernel.spectrum(&mut sp)?;
    let dir = normalize_flux(&convolve(&mut sp, &khat, &q));
    let mut w = q;
    for k in 0..f.len() {
        let s = ell * coeffs.g_slope * u.values[k] / f[k];
        w.x[k] += s * dir.lambda.x[k];
        w.y[k] += s * dir.lambda.y[k];
    }
    Ok(w)
}

fn check_ell(ell: f64) -> Result<()> {
    if ell >= 0.0 && ell.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("ell", format!("{ell} must be nonnegative")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FixedPointStats {
    pub iterations: Vec<usize>,
    /// Residual history of the last solve.
    pub last_history: Vec<f64>,
    pub max_degenerate_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedTrajectory {
    pub trajectory: Trajectory,
    pub fixed_point: FixedPointStats,
}

#[derive(Debug, Clone)]
pub struct ResolvedFlux {
    pub w: VectorField2D,
    /// `ℓ(G/F)Λ^w`, zero on degenerate cells.
    pub alignment: VectorField2D,
    pub history: Vec<f64>,
    pub degenerate: usize,
}

/// Coupled solver for `∂_t u + ∇·w = 0`, `w − ℓ(G/F)Λ^w = −(C_α/F)∇^{α−1}u`.
///
/// Each step resolves `w` by damped fixed-point iteration, then advances `u`
/// with the diffusive part implicit and the alignment flux explicit. At
/// `ℓ = 0` this reduces to [`FracSolver`] exactly.
#[derive(Debug)]
pub struct AlignedSolver {
    pub solver: FracSolver,
    pub ell: f64,
    pub kernel: InfluenceKernelSpec,
    khat: Vec<f64>,
}

impl AlignedSolver {
    pub fn new(grid: crate::fracpde::Grid2D, config: SolverConfig, ell: f64, kernel: InfluenceKernelSpec) -> Result<Self> {
        check_ell(ell)?;
        let mut solver = FracSolver::new(grid, config)?;
        let khat = kernel.spectrum(&mut solver.spectral)?;
        Ok(AlignedSolver { solver, ell, kernel, khat })
    }

    /// Resolve `w` at the current density.
    pub fn resolve_flux(&mut self, u: &Field2D) -> Result<ResolvedFlux> {
        let c = self.solver.config.coeffs.clone();
        let f = mobility_f(u, &c)?;
        let mut diffusive = self.solver.frac_gradient(u)?;
        for k in 0..f.len() {
            diffusive.x[k] *= -c.c_alpha / f[k];
            diffusive.y[k] *= -c.c_alpha / f[k];
        }
        let strength: Vec<f64> = (0..f.len()).map(|k| self.ell * c.g_slope * u.values[k] / f[k]).collect();
        let mut w = diffusive.clone();
        let mut history = Vec::new();
        loop {
            let dir = normalize_flux(&convolve(&mut self.solver.spectral, &self.khat, &w));
            let mut alignment = dir.lambda;
            for k in 0..f.len() {
                alignment.x[k] *= strength[k];
                alignment.y[k] *= strength[k];
            }
            let mut update = 0.0f64;
            for k in 0..f.len() {
                let tx = alignment.x[k] + diffusive.x[k];
                let ty = alignment.y[k] + diffusive.y[k];
                let dx = FIXED_POINT_DAMPING * (tx - w.x[k]);
                let dy = FIXED_POINT_DAMPING * (ty - w.y[k]);
                w.x[k] += dx;
                w.y[k] += dy;
                update = update.max(dx.hypot(dy));
            }
            history.push(update);
            if update < FIXED_POINT_TOL {
                let degenerate = dir.degenerate.iter().filter(|&&d| d).count();
                return Ok(ResolvedFlux {
                    w,
                    alignment,
                    history,
                    degenerate,
                });
            }
            if history.len() >= FIXED_POINT_MAX_ITER {
                return Err(Error::FixedPoint { history });
            }
        }
    }

    pub fn step(&mut self, u: &Field2D) -> Result<(Field2D, ResolvedFlux, crate::fracpde::StepStats)> {
        let flux = self.resolve_flux(u)?;
        let dt = self.solver.config.dt;
        let rhs = if flux.alignment.x.iter().chain(&flux.alignment.y).all(|&v| v == 0.0) {
            u.clone()
        } else {
            let sp = &mut self.solver.spectral;
            let (xh, yh) = sp.vector_hat(&flux.alignment);
            let div: Vec<C64> = sp.divergence_hat(&xh, &yh);
            let d = sp.field_from_hat(&div);
            Field2D {
                grid: u.grid,
                values: u.values.iter().zip(&d.values).map(|(a, b)| a - dt * b).collect(),
            }
        };
        let (next, stats) = self.solver.step_with_rhs(u, &rhs)?;
        Ok((next, flux, stats))
    }

    pub fn solve(&mut self, u0: &Field2D, observers: &mut [&mut dyn Observer]) -> Result<AlignedTrajectory> {
        let cfg = self.solver.config.clone();
        let n_steps = cfg.n_steps();
        let mass0 = u0.mass();
        let mut stats = SolveStats {
            min_value: u0.min(),
            ..Default::default()
        };
        let mut fp = FixedPointStats::default();
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
            let (next, flux, s) = self.step(&u).map_err(|e| e.at_step(step))?;
            u = next;
            let drift = if mass0 != 0.0 { ((u.mass() - mass0) / mass0).abs() } else { u.mass().abs() };
            stats.record(&s, drift);
            fp.iterations.push(flux.history.len());
            fp.max_degenerate_cells = fp.max_degenerate_cells.max(flux.degenerate);
            fp.last_history = flux.history;
            let t = step as f64 * cfg.dt;
            for obs in observers.iter_mut() {
                obs.observe(step, t, &u).map_err(|e| e.at_step(step))?;
            }
            if step % cfg.store_every == 0 || step == n_steps {
                traj.times.push(t);
                traj.fields.push(u.clone());
            }
        }
        traj.stats = stats;
        Ok(AlignedTrajectory { trajectory: traj, fixed_point: fp })
    }
}

pub fn solve_aligned(u0: &Field2D, config: &SolverConfig, ell: f64, kernel: &InfluenceKernelSpec) -> Result<AlignedTrajectory> {
    AlignedSolver::new(u0.grid, config.clone(), ell, *kernel)?.solve(u0, &mut [])
}
