use serde::{Deserialize, Serialize};

use super::grid::Field2D;
use super::solver::Trajectory;
use crate::error::Result;

/// Receives the state after every time step.
pub trait Observer {
    fn observe(&mut self, step: usize, t: f64, u: &Field2D) -> Result<()>;
}

/// Instantaneous covered mass `∫ min(u⁺, 1/|Ω|) dx` by the midpoint rule.
/// Negative undershoots cover nothing, so the value lies in `[0, 1]`; the
/// final clamp removes summation round-off.
pub fn covered_mass(u: &Field2D) -> f64 {
    let cap = 1.0 / u.grid.area();
    (u.values.iter().map(|&v| v.clamp(0.0, cap)).sum::<f64>() * u.grid.cell_area()).min(1.0)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageCurve {
    pub times: Vec<f64>,
    pub instantaneous: Vec<f64>,
    /// `(1/t)∫₀ᵗ m ds` by the trapezoid rule; equals `m(0)` at `t = 0`.
    pub time_averaged: Vec<f64>,
    pub alpha: Option<f64>,
    pub n_robots: Option<usize>,
    pub seed: Option<u64>,
}

impl CoverageCurve {
    pub fn push(&mut self, t: f64, m: f64) {
        let avg = match (self.times.last(), self.time_averaged.last(), self.instantaneous.last()) {
            (Some(&t0), Some(&a0), Some(&m0)) if t > 0.0 => (a0 * t0 + 0.5 * (m + m0) * (t - t0)) / t,
            _ => m,
        };
        self.times.push(t);
        self.instantaneous.push(m);
        self.time_averaged.push(avg);
    }

    /// Linear interpolation of the time-averaged coverage at `t`.
    pub fn time_averaged_at(&self, t: f64) -> Option<f64> {
        interpolate(&self.times, &self.time_averaged, t)
    }

    /// First time the time-averaged coverage reaches `level`.
    pub fn time_to_reach(&self, level: f64) -> Option<f64> {
        let k = self.time_averaged.iter().position(|&v| v >= level)?;
        if k == 0 {
            return Some(self.times[0]);
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let (v0, v1) = (self.time_averaged[k - 1], self.time_averaged[k]);
        Some(t0 + (level - v0) / (v1 - v0) * (t1 - t0))
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    if xs.is_empty() || x < xs[0] || x > *xs.last()? {
        return None;
    }
    let k = xs.partition_point(|&v| v < x);
    if k == 0 {
        return Some(ys[0]);
    }
    let w = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
    Some(ys[k - 1] + w * (ys[k] - ys[k - 1]))
}

/// Coverage of a stored trajectory.
pub fn coverage(traj: &Trajectory) -> CoverageCurve {
    let mut c = CoverageCurve::default();
    for (t, u) in traj.times.iter().zip(&traj.fields) {
        c.push(*t, covered_mass(u));
    }
    c
}

/// Accumulates coverage at every step, independent of trajectory decimation.
#[derive(Debug, Clone, Default)]
pub struct CoverageAccumulator {
    pub curve: CoverageCurve,
}

impl Observer for CoverageAccumulator {
    fn observe(&mut self, _step: usize, t: f64, u: &Field2D) -> Result<()> {
        self.curve.push(t, covered_mass(u));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracpde::grid::{BoundaryMode, Grid2D};

    fn grid() -> Grid2D {
        Grid2D::new(20, 16, 200.0, 160.0, BoundaryMode::NeumannMirror).unwrap()
    }

    #[test]
    fn saturated_and_empty() {
        let g = grid();
        let rho = 1.0 / g.area();
        let full = Field2D::from_fn(g, |_, _| 3.0 * rho);
        assert!((covered_mass(&full) - 1.0).abs() < 1e-12);
        assert_eq!(covered_mass(&Field2D::zeros(g)), 0.0);
    }

    #[test]
    fn half_domain_at_twice_uniform() {
        let g = grid();
        let rho = 1.0 / g.area();
        let u = Field2D::from_fn(g, |x, _| if x < 100.0 { 2.0 * rho } else { 0.0 });
        assert!((covered_mass(&u) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_running_average() {
        let mut c = CoverageCurve::default();
        c.push(0.0, 0.0);
        c.push(1.0, 1.0);
        c.push(2.0, 1.0);
        assert_eq!(c.time_averaged, vec![0.0, 0.5, 0.75]);
        assert_eq!(c.time_to_reach(0.5), Some(1.0));
        assert!((c.time_averaged_at(1.5).unwrap() - 0.625).abs() < 1e-15);
    }
}
