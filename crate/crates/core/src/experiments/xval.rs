//! Micro/macro cross-validation: free Lévy walkers in a periodic box against
//! the fractional diffusion limit, both at unit mass.
//!
//! Three PDE arms run from the same initial density: the closure generator
//! `C_α/F` on the main grid, the same on a refined control grid, and the
//! small-wavenumber generator of the walk itself as a diagnostic.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

use super::config::XvalSection;
use crate::coefficients::{Arena, ClosureCoeffs, ModelParams};
use crate::error::{Error, Result};
use crate::fracpde::{BoundaryMode, Field2D, FracSolver, Grid2D, MobilityMode, SolverConfig};
use crate::microsim::{histogram, place_from_density, step, Counters, HistogramMass, MicroBoundary, MicroConfig, MicroUnits, SwarmState};

pub const MIN_WALKERS: usize = 10_000;

/// `K` in `∂ₜu = −K(−Δ)^{α/2}u` for a planar walk with speed `c`, run-time
/// survival `(a/(a+τ))^α` and uniform reorientation:
/// `K = (α−1)a^{α−1}c^α · π E|cos φ|^α / (2 sin(πα/2) Γ(α))`.
pub fn levy_walk_generator_constant(alpha: f64, a: f64, c: f64) -> f64 {
    let mean_abs_cos_pow = gamma(0.5 * (alpha + 1.0)) / (PI.sqrt() * gamma(0.5 * alpha + 1.0));
    (alpha - 1.0) * a.powf(alpha - 1.0) * c.powf(alpha) * PI * mean_abs_cos_pow / (2.0 * (0.5 * PI * alpha).sin() * gamma(alpha))
}

/// Generator constant `C_α/F` of the closure with constant mobility.
pub fn closure_generator_constant(coeffs: &ClosureCoeffs) -> f64 {
    coeffs.c_alpha / coeffs.f_const
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XvalOptions {
    pub hist_n: usize,
    pub control_refinement: usize,
    pub pde_dt: f64,
    pub micro_dt: f64,
    pub init_width: f64,
    pub seed: u64,
    pub tolerance: f64,
    pub control_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XvalCheckpoint {
    pub t: f64,
    /// Histogram against the closure PDE.
    pub l1: f64,
    /// Histogram against the walk-generator PDE.
    pub l1_levy_walk: f64,
    /// Main grid against the refined control grid.
    pub control: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XvalReport {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub n_walkers: usize,
    pub run_scale: f64,
    pub speed: f64,
    pub closure_generator: f64,
    pub levy_walk_generator: f64,
    /// Histogram of the initial positions against the initial density.
    pub t0_distance: f64,
    pub checkpoints: Vec<XvalCheckpoint>,
    pub tolerance: f64,
    pub control_tolerance: f64,
    /// All closure distances within `tolerance` and all control distances
    /// within `control_tolerance`.
    pub pass: bool,
    pub control_pass: bool,
    /// All walk-generator distances within `tolerance`.
    pub levy_walk_pass: bool,
    pub counters: Counters,
}

/// Fields at each checkpoint on the histogram grid, for output.
#[derive(Debug, Clone)]
pub struct XvalFields {
    pub histograms: Vec<Field2D>,
    pub closure: Vec<Field2D>,
    pub levy_walk: Vec<Field2D>,
}

pub struct XvalOutcome {
    pub report: XvalReport,
    pub fields: XvalFields,
}

impl XvalSection {
    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(
            self.alpha,
            self.sigma0,
            self.c0 * self.epsilon.powf(-self.gamma),
            self.epsilon,
            self.gamma,
            1.0,
            0.0,
            0.0,
            0.01 * self.box_size,
            self.n_walkers,
            Arena {
                width: self.box_size,
                height: self.box_size,
            },
        )
    }

    pub fn grid(&self) -> Result<Grid2D> {
        Grid2D::new(self.pde_n, self.pde_n, self.box_size, self.box_size, BoundaryMode::Periodic)
    }

    pub fn options(&self, seed: u64) -> XvalOptions {
        XvalOptions {
            hist_n: self.hist_n,
            control_refinement: self.control_refinement,
            pde_dt: self.pde_dt,
            micro_dt: self.micro_dt,
            init_width: self.init_width,
            seed,
            tolerance: self.tolerance,
            control_tolerance: self.control_tolerance,
        }
    }
}

/// Unit-mass periodic Gaussian centred in the box.
pub fn periodic_gaussian(grid: Grid2D, width: f64) -> Field2D {
    let (cx, cy) = (0.5 * grid.lx, 0.5 * grid.ly);
    let s2 = 2.0 * width * width;
    Field2D::from_fn(grid, |x, y| {
        let mut v = 0.0;
        for m in -1..=1 {
            for n in -1..=1 {
                let dx = x - cx + m as f64 * grid.lx;
                let dy = y - cy + n as f64 * grid.ly;
                v += (-(dx * dx + dy * dy) / s2).exp();
            }
        }
        v
    })
    .normalized_mass()
}

fn steps_for(t: f64, dt: f64) -> Result<usize> {
    let k = (t / dt).round();
    if !(t > 0.0) || (k * dt - t).abs() > 1e-9 * t {
        return Err(Error::invalid("checkpoints", format!("{t} is not a positive multiple of the step {dt}")));
    }
    Ok(k as usize)
}

/// Unit-mass PDE fields at each checkpoint step.
fn pde_checkpoints(u0: &Field2D, coeffs: ClosureCoeffs, dt: f64, steps: &[usize]) -> Result<Vec<Field2D>> {
    let t_end = *steps.last().expect("checkpoints") as f64 * dt;
    let mut cfg = SolverConfig::new(coeffs, dt, t_end);
    cfg.mobility_mode = MobilityMode::Constant;
    let mut solver = FracSolver::new(u0.grid, cfg)?;
    let mut u = u0.clone();
    let mut out = Vec::with_capacity(steps.len());
    let mut k = 0;
    for &target in steps {
        while k < target {
            u = solver.step(&u).map_err(|e| e.at_step(k + 1))?.0;
            k += 1;
        }
        out.push(u.normalized_mass());
    }
    Ok(out)
}

pub fn run_cross_validation(params: &ModelParams, n_walkers: usize, grid: Grid2D, t_checkpoints: &[f64], opts: &XvalOptions) -> Result<XvalOutcome> {
    if params.zeta != 1.0 {
        return Err(Error::invalid("zeta", format!("{} must be 1: cross-validation runs without alignment", params.zeta)));
    }
    if grid.boundary != BoundaryMode::Periodic {
        return Err(Error::invalid("boundary", "cross-validation needs a periodic box"));
    }
    if n_walkers < MIN_WALKERS {
        return Err(Error::invalid("n_walkers", format!("{n_walkers} below {MIN_WALKERS}")));
    }
    if t_checkpoints.is_empty() || t_checkpoints.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("checkpoints", "must be non-empty and increasing"));
    }
    if opts.hist_n == 0 || !grid.nx.is_multiple_of(opts.hist_n) || !grid.ny.is_multiple_of(opts.hist_n) {
        return Err(Error::invalid("hist_n", format!("{} must divide the grid {}x{}", opts.hist_n, grid.nx, grid.ny)));
    }
    if opts.control_refinement < 2 {
        return Err(Error::invalid("control_refinement", "must be at least 2"));
    }
    let mut params = params.clone();
    params.arena = Arena {
        width: grid.lx,
        height: grid.ly,
    };
    params.n_robots = n_walkers;
    // Scaling violations abort here, before any simulation.
    let mut micro = MicroConfig::new(params.clone(), opts.micro_dt, opts.seed, MicroUnits::Scaled, false)?;
    micro.boundary = MicroBoundary::Periodic;
    let pde_steps = t_checkpoints.iter().map(|&t| steps_for(t, opts.pde_dt)).collect::<Result<Vec<_>>>()?;
    let micro_steps = t_checkpoints.iter().map(|&t| steps_for(t, opts.micro_dt)).collect::<Result<Vec<_>>>()?;

    let coeffs = ClosureCoeffs::compute(&params)?;
    let closure_k = closure_generator_constant(&coeffs);
    let walk_k = levy_walk_generator_constant(params.alpha, micro.run_scale, micro.speed);
    let mut walk_coeffs = coeffs.clone();
    walk_coeffs.c_alpha = walk_k * coeffs.f_const;

    let u0 = periodic_gaussian(grid, opts.init_width);
    let r = opts.control_refinement;
    let fine = Grid2D::new(grid.nx * r, grid.ny * r, grid.lx, grid.ly, BoundaryMode::Periodic)?;
    let closure = pde_checkpoints(&u0, coeffs.clone(), opts.pde_dt, &pde_steps)?;
    let control = pde_checkpoints(&periodic_gaussian(fine, opts.init_width), coeffs, opts.pde_dt, &pde_steps)?;
    let walk = pde_checkpoints(&u0, walk_coeffs, opts.pde_dt, &pde_steps)?;

    let hist_grid = Grid2D::new(opts.hist_n, opts.hist_n, grid.lx, grid.ly, BoundaryMode::Periodic)?;
    let f = grid.nx / opts.hist_n;
    let to_hist = |u: &Field2D| -> Result<Field2D> { Ok(Field2D { grid: hist_grid, values: u.coarsen(f, f)?.values }) };

    let positions = place_from_density(&u0, n_walkers, opts.seed)?;
    let mut state = SwarmState::new(&positions, &micro)?;
    let t0_distance = histogram(&state, hist_grid, HistogramMass::Unit).1.l1_distance(&to_hist(&u0)?);
    let mut histograms = Vec::with_capacity(micro_steps.len());
    for &target in &micro_steps {
        while (state.step as usize) < target {
            state = step(&state, &micro).map_err(|e| e.at_step(state.step as usize + 1))?;
        }
        histograms.push(histogram(&state, hist_grid, HistogramMass::Unit).1);
    }

    let mut checkpoints = Vec::with_capacity(t_checkpoints.len());
    let mut fields = XvalFields {
        histograms: Vec::new(),
        closure: Vec::new(),
        levy_walk: Vec::new(),
    };
    for (k, &t) in t_checkpoints.iter().enumerate() {
        let c = to_hist(&closure[k])?;
        let w = to_hist(&walk[k])?;
        let coarse_control = control[k].coarsen(r, r)?;
        checkpoints.push(XvalCheckpoint {
            t,
            l1: histograms[k].l1_distance(&c),
            l1_levy_walk: histograms[k].l1_distance(&w),
            control: closure[k].l1_distance(&coarse_control),
        });
        fields.closure.push(c);
        fields.levy_walk.push(w);
    }
    fields.histograms = histograms;
    let control_pass = checkpoints.iter().all(|c| c.control <= opts.control_tolerance);
    let report = XvalReport {
        alpha: params.alpha,
        gamma: params.gamma,
        epsilon: params.epsilon,
        n_walkers,
        run_scale: micro.run_scale,
        speed: micro.speed,
        closure_generator: closure_k,
        levy_walk_generator: walk_k,
        t0_distance,
        pass: control_pass && checkpoints.iter().all(|c| c.l1 <= opts.tolerance),
        levy_walk_pass: checkpoints.iter().all(|c| c.l1_levy_walk <= opts.tolerance),
        control_pass,
        checkpoints,
        tolerance: opts.tolerance,
        control_tolerance: opts.control_tolerance,
        counters: state.counters,
    };
    Ok(XvalOutcome { report, fields })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate_default;

    /// `∫₀^∞ (1 − cos u) u^{−α−1} du`: quadrature over whole periods plus the
    /// tail `X^{−α}/α` of the non-oscillating part.
    fn one_minus_cos_moment(alpha: f64) -> f64 {
        let periods = 400;
        // Near zero 1 − cos u = u²/2 − u⁴/24 + O(u⁶), integrated in closed form.
        let delta: f64 = 1e-2;
        let mut total = delta.powf(2.0 - alpha) / (2.0 * (2.0 - alpha)) - delta.powf(4.0 - alpha) / (24.0 * (4.0 - alpha));
        for k in 0..periods {
            let (lo, hi) = (if k == 0 { delta } else { 2.0 * PI * k as f64 }, 2.0 * PI * (k + 1) as f64);
            total += integrate_default(|u| (1.0 - u.cos()) * u.powf(-alpha - 1.0), lo, hi).unwrap().value;
        }
        let x = 2.0 * PI * periods as f64;
        total + x.powf(-alpha) / alpha
    }

    #[test]
    fn walk_generator_matches_quadrature() {
        for (alpha, a, c) in [(1.3f64, 1.0f64, 1.0f64), (1.5, 0.2, 3.0), (1.8, 2.0, 0.5)] {
            // Stop rate times the small-k limit of E[1 − cos(cτ k·θ)] / |k|^α.
            let e_abs_cos = integrate_default(|p: f64| p.cos().abs().powf(alpha), 0.0, 2.0 * PI).unwrap().value / (2.0 * PI);
            let oracle = (alpha - 1.0) / a * alpha * a.powf(alpha) * c.powf(alpha) * one_minus_cos_moment(alpha) * e_abs_cos;
            let k = levy_walk_generator_constant(alpha, a, c);
            assert!((k / oracle - 1.0).abs() < 1e-4, "alpha {alpha}: {k} vs {oracle}");
        }
    }

    #[test]
    fn checkpoint_steps() {
        assert_eq!(steps_for(0.02, 1e-4).unwrap(), 200);
        assert_eq!(steps_for(0.005, 5e-4).unwrap(), 10);
        assert!(steps_for(0.0101, 1e-3).is_err());
        assert!(steps_for(0.0, 1e-3).is_err());
    }

    #[test]
    fn periodic_gaussian_is_unit_and_symmetric() {
        let g = Grid2D::new(32, 32, 1.0, 1.0, BoundaryMode::Periodic).unwrap();
        let u = periodic_gaussian(g, 0.1);
        assert!((u.mass() - 1.0).abs() < 1e-12);
        assert!((u.at(3, 7) - u.at(31 - 3, 31 - 7)).abs() < 1e-12);
        assert!((u.at(3, 7) - u.at(7, 3)).abs() < 1e-12);
    }

    fn small_section() -> XvalSection {
        XvalSection {
            n_walkers: 10_000,
            pde_n: 32,
            hist_n: 16,
            checkpoints: vec![0.002],
            pde_dt: 1e-4,
            micro_dt: 5e-4,
            ..XvalSection::default()
        }
    }

    #[test]
    fn preconditions() {
        let s = small_section();
        let opts = s.options(1);
        let g = s.grid().unwrap();
        let mut p = s.params().unwrap();
        assert!(run_cross_validation(&p, 9_999, g, &s.checkpoints, &opts).is_err());
        assert!(run_cross_validation(&p, 10_000, g.with_boundary(BoundaryMode::NeumannMirror), &s.checkpoints, &opts).is_err());
        p.zeta = 0.5;
        assert!(run_cross_validation(&p, 10_000, g, &s.checkpoints, &opts).is_err());
        // γ below (α−1)/α violates the scaling constraints.
        let bad = XvalSection { gamma: 0.2, ..small_section() };
        let e = run_cross_validation(&bad.params().unwrap(), 10_000, g, &bad.checkpoints, &opts).err().unwrap();
        assert!(matches!(e, Error::Constraint(_)), "{e}");
    }

    #[test]
    fn initial_binning_error_is_small() {
        let s = small_section();
        let out = run_cross_validation(&s.params().unwrap(), s.n_walkers, s.grid().unwrap(), &s.checkpoints, &s.options(3)).unwrap();
        assert!(out.report.t0_distance <= 0.01, "{}", out.report.t0_distance);
        assert_eq!(out.report.checkpoints.len(), 1);
        assert!((out.fields.histograms[0].mass() - 1.0).abs() < 1e-12);
        assert!(out.report.counters.tumbles > 0 && out.report.counters.aligns == 0);
    }
}
