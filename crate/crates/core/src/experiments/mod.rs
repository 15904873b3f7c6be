//! Reproducible studies and the run drivers behind the command-line tool.
//!
//! Each `run_*` function takes the effective configuration, optionally
//! writes the standard run directory, and returns its results.

pub mod config;
pub mod output;
pub mod study;
pub mod xval;

use serde::{Deserialize, Serialize};
use serde_json::json;

pub use config::{EPuckScenario, ExperimentConfig, HyperSection, MicroSection, ModelSection, PdeSection, Placement, StudySection, XvalSection};
pub use output::{Manifest, RunDir};
pub use study::{initial_density, run_coverage_study, separated_centers, solve_pde, write_study, StudyPoint, StudyResult, StudySummary};
pub use xval::{levy_walk_generator_constant, run_cross_validation, XvalOptions, XvalOutcome, XvalReport};

use crate::coefficients::{validate_scaling, ClosureCoeffs, ModelParams};
use crate::error::Result;
use crate::fracpde::{covered_mass, initial_condition, initial_mass, BoundaryMode, Field2D, Grid2D, VectorField2D};
use crate::hyper::{check_limit_regime, hyper_step_with_info, max_stable_dt, HyperState};
use crate::microsim::{self, HistogramMass, MicroConfig, SwarmState};

/// Closure and scaling constants with the input echo and the formulas used.
pub fn emit_coefficients(params: &ModelParams) -> Result<serde_json::Value> {
    let coeffs = ClosureCoeffs::compute(params)?;
    let scaling = validate_scaling(params.alpha, params.gamma, params.epsilon)?;
    Ok(json!({
        "input": params,
        "closure": coeffs,
        "scaling": scaling,
        "generator_constant": coeffs.c_alpha / coeffs.f_const,
        "formulas": {
            "c_alpha": "-sigma0^(alpha-2) c0^(alpha-1) (alpha-1)^2 pi / (sin(pi alpha) Gamma(alpha)) * (|S| - 4 zeta nu1) / |S|^2",
            "f_const": "(alpha-1) n (1 - zeta nu1) / (sigma0 |S|)",
            "f_slope": "k b c0 / |S|^2, k the collision prefactor",
            "g_slope": "(1 - zeta) |S| z (alpha-1) / sigma0",
            "z": "integral over s of Phi(cos s) cos s",
            "b": "integral over theta2 of |theta1 - theta2| on the unit circle",
            "a0": "integral over s of Phi(cos s) cos^2 s",
            "a1": "integral over s of Phi(cos s) sin^2 s",
            "a3": "a0 - a1",
            "cc0": "z (1 - zeta)",
            "cc1": "c0 (1 - zeta) a3",
            "cc2": "c0 (1 - zeta) a1 + c0 pi zeta",
            "big_a": "(alpha-1) / sigma0",
            "big_b": "-sigma0^(alpha-2) (alpha-1)^2 Gamma(1-alpha)",
            "s_area": "|S| = 2 pi",
            "mu": "(1 - alpha (1 - gamma)) / (alpha - 1)",
            "eta": "-gamma",
            "xi_minus_theta": "1 - gamma / (alpha - 1)",
            "generator_constant": "c_alpha / f_const",
        },
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeSummary {
    pub coeffs: ClosureCoeffs,
    pub stats: crate::fracpde::SolveStats,
    pub final_coverage: f64,
    pub final_time_averaged: f64,
    pub initial_mass: f64,
    pub fixed_point: Option<crate::alignment::FixedPointStats>,
}

pub fn run_pde(cfg: &ExperimentConfig, dir: Option<&RunDir>) -> Result<PdeSummary> {
    let params = cfg.model.params()?;
    let u0 = initial_density(&params, &cfg.pde)?;
    let run = solve_pde(&params, &cfg.pde, &u0)?;
    let c = &run.coverage;
    let summary = PdeSummary {
        coeffs: run.coeffs.clone(),
        stats: run.trajectory.stats.clone(),
        final_coverage: *c.instantaneous.last().unwrap_or(&0.0),
        final_time_averaged: *c.time_averaged.last().unwrap_or(&0.0),
        initial_mass: u0.mass(),
        fixed_point: run.fixed_point.clone(),
    };
    if let Some(dir) = dir {
        dir.write_coverage("coverage.csv", c)?;
        let mut rows = Vec::new();
        for (t, u) in run.trajectory.times.iter().zip(&run.trajectory.fields) {
            let step = (t / cfg.pde.dt).round() as usize;
            dir.write_field(step, u)?;
            rows.push(vec![*t, u.mass(), u.min(), u.max(), covered_mass(u)]);
        }
        dir.write_csv("observables.csv", &["t", "mass", "min", "max", "covered_mass"], rows)?;
        dir.write_manifest(&Manifest::new("pde", cfg, serde_json::to_value(&summary)?)?)?;
    }
    Ok(summary)
}

/// Micro configuration from the model and micro sections.
pub fn micro_config(cfg: &ExperimentConfig) -> Result<MicroConfig> {
    let m = &cfg.micro;
    let mut mc = MicroConfig::new(cfg.model.params()?, m.dt, cfg.seed, m.units, m.collisions)?;
    mc.boundary = m.boundary;
    mc.collision_resets_clock = m.collision_resets_clock;
    if let Some(r) = m.kernel_range {
        mc.kernel_range = r;
    }
    if let Some(s) = m.sensing_radius {
        mc.sensing_radius = s;
    }
    mc.validate()?;
    Ok(mc)
}

pub fn initial_positions(cfg: &ExperimentConfig, mc: &MicroConfig) -> Result<Vec<[f64; 2]>> {
    let p = &mc.params;
    match cfg.micro.placement {
        Placement::Cluster => microsim::place_cluster(p.n_robots, [0.5 * mc.domain[0], 0.5 * mc.domain[1]], mc),
        Placement::Density => microsim::place_from_density(&initial_density(p, &cfg.pde)?, p.n_robots, cfg.seed),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroSummary {
    pub steps: usize,
    pub counters: microsim::Counters,
    pub final_msd: f64,
    pub final_polarization: f64,
    pub final_covered_mass: f64,
    pub speed: f64,
    pub run_scale: f64,
}

pub fn run_micro(cfg: &ExperimentConfig, dir: Option<&RunDir>) -> Result<MicroSummary> {
    let mc = micro_config(cfg)?;
    let boundary = match mc.boundary {
        microsim::MicroBoundary::Periodic => BoundaryMode::Periodic,
        microsim::MicroBoundary::Reflecting => BoundaryMode::NeumannMirror,
    };
    let grid = Grid2D::new(cfg.micro.hist[0], cfg.micro.hist[1], mc.domain[0], mc.domain[1], boundary)?;
    let mass = if cfg.pde.normalize_mass {
        HistogramMass::Unit
    } else {
        HistogramMass::Total(initial_mass(mc.params.rho_diam, mc.params.n_robots))
    };
    let mut state = SwarmState::new(&initial_positions(cfg, &mc)?, &mc)?;
    let every = cfg.micro.snapshot_every.max(1);
    let mut observables = Vec::new();
    let mut trajectory = Vec::new();
    let mut record = |s: &SwarmState, force: bool| -> Result<()> {
        let o = microsim::observe(s, &mc, grid, mass);
        observables.push(vec![o.time, o.msd, o.polarization, o.covered_mass]);
        let k = s.step as usize;
        if force || k.is_multiple_of(every) {
            for (id, a) in s.agents.iter().enumerate() {
                trajectory.push(vec![k as f64, id as f64, a.position[0], a.position[1], a.direction[0], a.direction[1]]);
            }
            if let Some(dir) = dir {
                dir.write_field(k, &o.density)?;
            }
        }
        Ok(())
    };
    record(&state, true)?;
    for k in 0..cfg.micro.steps {
        state = microsim::step(&state, &mc).map_err(|e| e.at_step(k + 1))?;
        record(&state, k + 1 == cfg.micro.steps)?;
    }
    let last = microsim::observe(&state, &mc, grid, mass);
    let summary = MicroSummary {
        steps: cfg.micro.steps,
        counters: state.counters,
        final_msd: last.msd,
        final_polarization: last.polarization,
        final_covered_mass: last.covered_mass,
        speed: mc.speed,
        run_scale: mc.run_scale,
    };
    if let Some(dir) = dir {
        dir.write_csv("observables.csv", &["t", "msd", "polarization", "covered_mass"], observables)?;
        dir.write_csv("trajectory.csv", &["step", "id", "x", "y", "thx", "thy"], trajectory)?;
        dir.write_manifest(&Manifest::new("micro", cfg, serde_json::to_value(&summary)?)?)?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperSummary {
    pub steps: usize,
    pub dt: f64,
    pub max_mass_drift: f64,
    pub max_unit_defect: f64,
    pub max_floored_cells: usize,
}

/// Initial direction field: heading rotating `twist` full turns across the width.
pub fn twisted_directions(grid: Grid2D, heading: f64, twist: f64) -> VectorField2D {
    VectorField2D::from_fn(grid, |x, _| {
        let a = heading + 2.0 * std::f64::consts::PI * twist * x / grid.lx;
        [a.cos(), a.sin()]
    })
}

pub fn run_hyper(cfg: &ExperimentConfig, dir: Option<&RunDir>) -> Result<HyperSummary> {
    let params = cfg.model.params()?;
    check_limit_regime(params.alpha)?;
    let coeffs = ClosureCoeffs::compute(&params)?;
    let h: &HyperSection = &cfg.hyper;
    let grid = Grid2D::new(h.nx, h.ny, params.arena.width, params.arena.height, BoundaryMode::Periodic)?;
    if !(h.background >= 0.0) {
        return Err(crate::error::Error::Config(format!("hyper.background = {} must be non-negative", h.background)));
    }
    let bump = initial_condition(grid, params.rho_diam, params.n_robots)?;
    let u0 = Field2D::from_values(grid, bump.values.iter().map(|v| v + h.background).collect())?;
    let mut state = HyperState::new(u0, twisted_directions(grid, h.heading, h.twist))?;
    let dt = h.dt.unwrap_or_else(|| 0.5 * max_stable_dt(&coeffs, &grid));
    let steps = match h.t_end {
        Some(t) if t > 0.0 => (t / dt).ceil() as usize,
        Some(t) => return Err(crate::error::Error::Config(format!("hyper.t_end = {t} must be positive"))),
        None => h.steps,
    };
    let m0 = state.u.mass();
    let every = h.snapshot_every.max(1);
    let mut summary = HyperSummary {
        steps,
        dt,
        max_mass_drift: 0.0,
        max_unit_defect: state.unit_defect(),
        max_floored_cells: 0,
    };
    let mut rows = Vec::new();
    let polarization = |s: &HyperState| {
        let (mut px, mut py) = (0.0, 0.0);
        for k in 0..s.u.values.len() {
            px += s.u.values[k] * s.lambda.x[k];
            py += s.u.values[k] * s.lambda.y[k];
        }
        f64::hypot(px, py) / s.u.values.iter().sum::<f64>()
    };
    let write_snapshot = |k: usize, s: &HyperState| -> Result<()> {
        if let Some(dir) = dir {
            let rows = (0..grid.ny).flat_map(|j| {
                (0..grid.nx).map(move |i| {
                    let c = grid.center(i, j);
                    let idx = grid.index(i, j);
                    vec![c[0], c[1], s.u.values[idx], s.lambda.x[idx], s.lambda.y[idx]]
                })
            });
            dir.write_csv(&format!("fields/step_{k:06}.csv"), &["x", "y", "u", "lx", "ly"], rows)?;
        }
        Ok(())
    };
    rows.push(vec![0.0, m0, state.unit_defect(), polarization(&state), 0.0]);
    write_snapshot(0, &state)?;
    for k in 1..=steps {
        let (next, info) = hyper_step_with_info(&state, &coeffs, dt).map_err(|e| e.at_step(k))?;
        state = next;
        let drift = (state.u.mass() - m0).abs() / m0;
        summary.max_mass_drift = summary.max_mass_drift.max(drift);
        summary.max_unit_defect = summary.max_unit_defect.max(state.unit_defect());
        summary.max_floored_cells = summary.max_floored_cells.max(info.floored_cells);
        rows.push(vec![state.time, state.u.mass(), state.unit_defect(), polarization(&state), info.floored_cells as f64]);
        if k % every == 0 || k == steps {
            write_snapshot(k, &state)?;
        }
    }
    if let Some(dir) = dir {
        dir.write_csv("observables.csv", &["t", "mass", "unit_defect", "polarization", "floored_cells"], rows)?;
        dir.write_manifest(&Manifest::new("hyper", cfg, serde_json::to_value(&summary)?)?)?;
    }
    Ok(summary)
}

pub fn run_study(cfg: &ExperimentConfig, dir: Option<&RunDir>) -> Result<StudyResult> {
    let scenario = EPuckScenario::from_model(&cfg.model, cfg.study.alphas.clone())?;
    let result = run_coverage_study(&scenario, &cfg.study.n_robots, &cfg.pde, &cfg.study)?;
    if let Some(dir) = dir {
        write_study(dir, &result)?;
        dir.write_manifest(&Manifest::new("coverage-study", cfg, serde_json::to_value(&result.summary)?)?)?;
    }
    Ok(result)
}

pub fn run_xval(cfg: &ExperimentConfig, dir: Option<&RunDir>) -> Result<XvalReport> {
    let x = &cfg.xval;
    let out = run_cross_validation(&x.params()?, x.n_walkers, x.grid()?, &x.checkpoints, &x.options(cfg.seed))?;
    if let Some(dir) = dir {
        let r = &out.report;
        let rows = r.checkpoints.iter().map(|c| vec![c.t, c.l1, c.l1_levy_walk, c.control]);
        dir.write_csv("observables.csv", &["t", "l1", "l1_levy_walk", "control"], rows)?;
        for (k, c) in r.checkpoints.iter().enumerate() {
            let g = out.fields.histograms[k].grid;
            let f = &out.fields;
            let rows = (0..g.ny).flat_map(|j| {
                (0..g.nx).map(move |i| {
                    let p = g.center(i, j);
                    vec![p[0], p[1], f.histograms[k].at(i, j), f.closure[k].at(i, j), f.levy_walk[k].at(i, j)]
                })
            });
            let step = (c.t / x.pde_dt).round() as usize;
            dir.write_csv(&format!("fields/step_{step:06}.csv"), &["x", "y", "micro", "closure", "levy_walk"], rows)?;
        }
        dir.write_json("report.json", r)?;
        dir.write_manifest(&Manifest::new("xval", cfg, serde_json::to_value(r)?)?)?;
    }
    Ok(out.report)
}

/// Run-time Laplace residuals at `λ = 2^{-k}`, `k = 2..12`.
pub fn laplace_residuals(params: &ModelParams) -> Result<crate::levy::LaplaceReport> {
    let lambdas: Vec<f64> = (2..=12).map(|k| 0.5f64.powi(k)).collect();
    crate::levy::verify_laplace_expansion(params.alpha, params.sigma0, &lambdas)
}

/// Coefficient document, with the Laplace residual report when `residuals` is set.
pub fn run_coeffs(cfg: &ExperimentConfig, residuals: bool, dir: Option<&RunDir>) -> Result<serde_json::Value> {
    let params = cfg.model.params()?;
    let mut doc = emit_coefficients(&params)?;
    if residuals {
        doc["laplace_residuals"] = serde_json::to_value(laplace_residuals(&params)?)?;
    }
    if let Some(dir) = dir {
        dir.write_json("coefficients.json", &doc)?;
        dir.write_manifest(&Manifest::new("coeffs", cfg, doc.clone())?)?;
    }
    Ok(doc)
}
