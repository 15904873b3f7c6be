//! Coverage sweep over `(α, N)` and the PDE run shared with the `pde` command.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{EPuckScenario, PdeSection, StudySection};
use super::output::RunDir;
use crate::alignment::{AlignedSolver, FixedPointStats, InfluenceKernelSpec};
use crate::coefficients::{ClosureCoeffs, ModelParams};
use crate::error::{Error, Result};
use crate::fracpde::{initial_condition, initial_condition_clusters, CoverageAccumulator, CoverageCurve, Field2D, FracSolver, Grid2D, SolveStats, SolverConfig, Trajectory};

pub struct PdeRun {
    pub coeffs: ClosureCoeffs,
    pub trajectory: Trajectory,
    pub coverage: CoverageCurve,
    pub fixed_point: Option<FixedPointStats>,
}

pub fn pde_grid(params: &ModelParams, pde: &PdeSection) -> Result<Grid2D> {
    Grid2D::new(pde.nx, pde.ny, params.arena.width, params.arena.height, pde.boundary)
}

/// Initial density: one centred cluster, or one cluster of `n_robots` at each
/// configured centre.
pub fn initial_density(params: &ModelParams, pde: &PdeSection) -> Result<Field2D> {
    let grid = pde_grid(params, pde)?;
    let u0 = if pde.cluster_centers.is_empty() {
        initial_condition(grid, params.rho_diam, params.n_robots)?
    } else {
        initial_condition_clusters(grid, params.rho_diam, params.n_robots, &pde.cluster_centers)?
    };
    Ok(if pde.normalize_mass { u0.normalized_mass() } else { u0 })
}

/// `k` cluster centres spread evenly along the mid-line of the arena.
pub fn separated_centers(params: &ModelParams, k: usize) -> Vec<[f64; 2]> {
    let (w, h) = (params.arena.width, params.arena.height);
    (0..k).map(|i| [(i as f64 + 0.5) * w / k as f64, 0.5 * h]).collect()
}

pub fn solver_config(coeffs: ClosureCoeffs, pde: &PdeSection) -> SolverConfig {
    let mut cfg = SolverConfig::new(coeffs, pde.dt, pde.t_end);
    cfg.mobility_mode = pde.mobility;
    cfg.linear_solver_tol = pde.linear_solver_tol;
    cfg.linear_solver_max_iter = pde.linear_solver_max_iter;
    cfg.store_every = pde.store_every.max(1);
    cfg
}

/// Solve from `u0`, with the alignment closure when `ell > 0`.
pub fn solve_pde(params: &ModelParams, pde: &PdeSection, u0: &Field2D) -> Result<PdeRun> {
    let coeffs = ClosureCoeffs::compute(params)?;
    let config = solver_config(coeffs.clone(), pde);
    let mut acc = CoverageAccumulator::default();
    let (trajectory, fixed_point) = if params.ell > 0.0 {
        let kernel = InfluenceKernelSpec::with_range(pde.kernel_range)?;
        let r = AlignedSolver::new(u0.grid, config, params.ell, kernel)?.solve(u0, &mut [&mut acc])?;
        (r.trajectory, Some(r.fixed_point))
    } else {
        (FracSolver::new(u0.grid, config)?.solve(u0, &mut [&mut acc])?, None)
    };
    let mut coverage = acc.curve;
    coverage.alpha = Some(params.alpha);
    coverage.n_robots = Some(params.n_robots);
    Ok(PdeRun {
        coeffs,
        trajectory,
        coverage,
        fixed_point,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyPoint {
    pub alpha: f64,
    pub n_robots: usize,
    pub curve: Option<CoverageCurve>,
    pub stats: Option<SolveStats>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaValue {
    pub alpha: f64,
    pub value: Option<f64>,
}

/// Time-averaged coverage across `α` at one time, in increasing `α`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ordering {
    pub n_robots: usize,
    pub t: f64,
    pub coverage: Vec<AlphaValue>,
    /// Every value present and each strictly below the previous.
    pub strictly_decreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceOrdering {
    pub alpha_ref: f64,
    pub level: f64,
    /// First time the largest-`α` curve reaches `level`; `None` if it never does.
    pub ordering: Option<Ordering>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub reference: Vec<ReferenceOrdering>,
    pub probes: Vec<Ordering>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub points: Vec<StudyPoint>,
    pub summary: StudySummary,
}

impl StudyResult {
    pub fn curve(&self, alpha: f64, n_robots: usize) -> Option<&CoverageCurve> {
        self.points.iter().find(|p| p.alpha == alpha && p.n_robots == n_robots)?.curve.as_ref()
    }
}

fn ordering_at(points: &[StudyPoint], alphas: &[f64], n_robots: usize, t: f64) -> Ordering {
    let coverage: Vec<AlphaValue> = alphas
        .iter()
        .map(|&alpha| AlphaValue {
            alpha,
            value: points.iter().find(|p| p.alpha == alpha && p.n_robots == n_robots).and_then(|p| p.curve.as_ref()).and_then(|c| c.time_averaged_at(t)),
        })
        .collect();
    let strictly_decreasing = coverage.iter().all(|v| v.value.is_some()) && coverage.windows(2).all(|w| w[0].value > w[1].value);
    Ordering {
        n_robots,
        t,
        coverage,
        strictly_decreasing,
    }
}

fn validate(scenario: &EPuckScenario, n_list: &[usize], study: &StudySection) -> Result<()> {
    if scenario.alphas.is_empty() || n_list.is_empty() {
        return Err(Error::invalid("study", "alpha and robot-count lists must be non-empty"));
    }
    if scenario.alphas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("alphas", "must be strictly increasing"));
    }
    if let Some(k) = study.cluster_size {
        if k == 0 || n_list.iter().any(|n| n % k != 0) {
            return Err(Error::invalid("cluster_size", format!("{k} must divide every robot count")));
        }
    }
    Ok(())
}

/// One PDE solve per `(α, N)`, run in parallel. Failed points are recorded
/// and skipped; the summary is assembled in `(α, N)` order.
pub fn run_coverage_study(scenario: &EPuckScenario, n_list: &[usize], pde: &PdeSection, study: &StudySection) -> Result<StudyResult> {
    validate(scenario, n_list, study)?;
    let jobs: Vec<(f64, usize)> = scenario.alphas.iter().flat_map(|&a| n_list.iter().map(move |&n| (a, n))).collect();
    let points: Vec<StudyPoint> = jobs
        .par_iter()
        .map(|&(alpha, n_robots)| {
            let run = || -> Result<PdeRun> {
                let params = scenario.params(alpha, n_robots)?;
                let mut pde = pde.clone();
                if let Some(k) = study.cluster_size {
                    pde.cluster_centers = separated_centers(&params, n_robots / k);
                    let mut p = params.clone();
                    p.n_robots = k;
                    let u0 = initial_density(&p, &pde)?;
                    return solve_pde(&params, &pde, &u0);
                }
                let u0 = initial_density(&params, &pde)?;
                solve_pde(&params, &pde, &u0)
            };
            match run() {
                Ok(r) => StudyPoint {
                    alpha,
                    n_robots,
                    curve: Some(r.coverage),
                    stats: Some(r.trajectory.stats),
                    error: None,
                },
                Err(e) => StudyPoint {
                    alpha,
                    n_robots,
                    curve: None,
                    stats: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let alpha_ref = *scenario.alphas.last().expect("non-empty");
    let mut summary = StudySummary {
        reference: Vec::new(),
        probes: Vec::new(),
        failures: points.iter().filter_map(|p| p.error.as_ref().map(|e| format!("alpha={} n={}: {e}", p.alpha, p.n_robots))).collect(),
    };
    for &n in n_list {
        let t_ref = points.iter().find(|p| p.alpha == alpha_ref && p.n_robots == n).and_then(|p| p.curve.as_ref()).and_then(|c| c.time_to_reach(study.reference_level));
        summary.reference.push(ReferenceOrdering {
            alpha_ref,
            level: study.reference_level,
            ordering: t_ref.map(|t| ordering_at(&points, &scenario.alphas, n, t)),
        });
        for &f in &study.probe_fractions {
            summary.probes.push(ordering_at(&points, &scenario.alphas, n, f * pde.t_end));
        }
    }
    Ok(StudyResult { points, summary })
}

/// `coverage.csv` in long format, one CSV per curve under `curves/`, and
/// `summary.json`.
pub fn write_study(dir: &RunDir, result: &StudyResult) -> Result<()> {
    let mut rows = Vec::new();
    for p in &result.points {
        if let Some(c) = &p.curve {
            for k in 0..c.times.len() {
                rows.push(vec![p.alpha, p.n_robots as f64, c.times[k], c.instantaneous[k], c.time_averaged[k]]);
            }
            dir.write_coverage(&format!("curves/alpha_{}_n_{}.csv", p.alpha, p.n_robots), c)?;
        }
    }
    dir.write_csv("coverage.csv", &["alpha", "n_robots", "t", "instantaneous", "time_averaged"], rows)?;
    dir.write_json("summary.json", &result.summary)
}
