//! Spectral solver for the fractional diffusion limit and the coverage functional.
//!
//! `∇^{α−1}` is the Fourier multiplier `iξ|ξ|^{α−2}`, so `∇·∇^{α−1} = −(−Δ)^{α/2}`
//! and a positive `C_α` diffuses. Reflecting walls are approximated by even
//! mirror extension; this is not a true nonlocal Neumann condition.

pub mod coverage;
pub mod grid;
pub mod solver;
pub mod spectral;

pub use coverage::{coverage, covered_mass, CoverageAccumulator, CoverageCurve, Observer};
pub use grid::{initial_condition, initial_condition_clusters, initial_mass, initial_support_radius, BoundaryMode, Field2D, Grid2D, VectorField2D};
pub use solver::{apply_generator, frac_gradient, solve, step_implicit, FracSolver, MobilityMode, SolveStats, SolverConfig, StepStats, Trajectory};
pub use spectral::Spectral;
