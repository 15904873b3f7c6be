//! Sectioned TOML run configuration. Every field has a default, so an empty
//! file is the E-Puck preset.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coefficients::{Arena, CollisionPrefactor, ModelParams};
use crate::error::{Error, Result};
use crate::fracpde::{BoundaryMode, MobilityMode};
use crate::microsim::{MicroBoundary, MicroUnits};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub alpha: f64,
    pub sigma0: f64,
    pub c: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub zeta: f64,
    pub kappa_tumble: f64,
    pub kappa_align: f64,
    pub ell: f64,
    pub rho_diam: f64,
    pub n_robots: usize,
    /// Width and height.
    pub arena: [f64; 2],
    pub collision_prefactor: CollisionPrefactor,
}

impl Default for ModelSection {
    fn default() -> Self {
        let s = EPuckScenario::preset();
        ModelSection {
            alpha: 1.3,
            sigma0: s.sigma0,
            c: s.c,
            epsilon: s.epsilon,
            gamma: s.gamma,
            zeta: 1.0,
            kappa_tumble: 0.0,
            kappa_align: 0.0,
            ell: 0.0,
            rho_diam: s.rho_diam,
            n_robots: s.n_robots,
            arena: [s.arena.width, s.arena.height],
            collision_prefactor: CollisionPrefactor::default(),
        }
    }
}

impl ModelSection {
    pub fn params(&self) -> Result<ModelParams> {
        let mut p = ModelParams::new(
            self.alpha,
            self.sigma0,
            self.c,
            self.epsilon,
            self.gamma,
            self.zeta,
            self.kappa_tumble,
            self.kappa_align,
            self.rho_diam,
            self.n_robots,
            Arena {
                width: self.arena[0],
                height: self.arena[1],
            },
        )?;
        p.ell = self.ell;
        p.collision_prefactor = self.collision_prefactor;
        p.validate()?;
        Ok(p)
    }
}

/// The E-Puck arena experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EPuckScenario {
    pub arena: Arena,
    pub rho_diam: f64,
    pub c: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub c0: f64,
    pub sigma0: f64,
    pub n_robots: usize,
    pub alphas: Vec<f64>,
}

impl EPuckScenario {
    pub fn preset() -> Self {
        EPuckScenario {
            arena: Arena {
                width: 200.0,
                height: 160.0,
            },
            rho_diam: 7.5,
            c: 3.0,
            epsilon: 0.005,
            gamma: 0.5,
            c0: 3.0 * 0.005f64.sqrt(),
            sigma0: 1.0,
            n_robots: 20,
            alphas: vec![1.3, 1.5, 1.7, 1.9],
        }
    }

    /// The scenario described by a model section (its `alpha` is replaced
    /// by the sweep list).
    pub fn from_model(m: &ModelSection, alphas: Vec<f64>) -> Result<Self> {
        let p = m.params()?;
        Ok(EPuckScenario {
            arena: p.arena,
            rho_diam: p.rho_diam,
            c: p.c,
            epsilon: p.epsilon,
            gamma: p.gamma,
            c0: p.c0,
            sigma0: p.sigma0,
            n_robots: p.n_robots,
            alphas,
        })
    }

    /// Pure tumbling with a uniform kernel at the given `α` and `N`.
    pub fn params(&self, alpha: f64, n_robots: usize) -> Result<ModelParams> {
        ModelParams::new(alpha, self.sigma0, self.c, self.epsilon, self.gamma, 1.0, 0.0, 0.0, self.rho_diam, n_robots, self.arena)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeSection {
    pub nx: usize,
    pub ny: usize,
    pub dt: f64,
    pub t_end: f64,
    pub boundary: BoundaryMode,
    pub mobility: MobilityMode,
    /// Rescale the initial density to unit mass.
    pub normalize_mass: bool,
    /// Field snapshot interval in steps; endpoints are always written.
    pub store_every: usize,
    pub linear_solver_tol: f64,
    pub linear_solver_max_iter: usize,
    /// Decay length of the alignment kernel, used when `ell > 0`.
    pub kernel_range: f64,
    /// Centres of separate robot clusters of `n_robots` each; empty places one
    /// cluster in the middle of the arena.
    pub cluster_centers: Vec<[f64; 2]>,
}

impl Default for PdeSection {
    fn default() -> Self {
        PdeSection {
            nx: 100,
            ny: 80,
            dt: 0.1,
            t_end: 30.0,
            boundary: BoundaryMode::NeumannMirror,
            mobility: MobilityMode::Nonlinear,
            normalize_mass: false,
            store_every: 50,
            linear_solver_tol: 1e-10,
            linear_solver_max_iter: 500,
            kernel_range: 7.5,
            cluster_centers: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Non-overlapping cluster in the middle of the arena.
    #[default]
    Cluster,
    /// Stratified sample of the PDE initial density.
    Density,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MicroSection {
    pub dt: f64,
    pub steps: usize,
    pub units: MicroUnits,
    pub boundary: MicroBoundary,
    pub collisions: bool,
    pub collision_resets_clock: bool,
    /// Defaults to `5ϱ` when absent.
    pub sensing_radius: Option<f64>,
    /// Defaults to `ϱ` when absent.
    pub kernel_range: Option<f64>,
    pub placement: Placement,
    /// Histogram bins in x and y.
    pub hist: [usize; 2],
    /// Snapshot interval in steps.
    pub snapshot_every: usize,
}

impl Default for MicroSection {
    fn default() -> Self {
        MicroSection {
            dt: 1.0,
            steps: 600,
            units: MicroUnits::Physical,
            boundary: MicroBoundary::Reflecting,
            collisions: true,
            collision_resets_clock: true,
            sensing_radius: None,
            kernel_range: None,
            placement: Placement::Cluster,
            hist: [20, 16],
            snapshot_every: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperSection {
    pub nx: usize,
    pub ny: usize,
    /// Defaults to half the stable step when absent.
    pub dt: Option<f64>,
    pub steps: usize,
    /// Overrides `steps` with `ceil(t_end / dt)` when present.
    pub t_end: Option<f64>,
    pub snapshot_every: usize,
    /// Initial heading of `Λ` at `x = 0`, radians.
    pub heading: f64,
    /// Full turns of the initial `Λ` across the width.
    pub twist: f64,
    /// Uniform density added to the initial bump; keeps `u` off the floor.
    pub background: f64,
}

impl Default for HyperSection {
    fn default() -> Self {
        HyperSection {
            nx: 100,
            ny: 80,
            dt: None,
            steps: 400,
            t_end: None,
            snapshot_every: 50,
            heading: 0.0,
            twist: 1.0,
            background: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    pub alphas: Vec<f64>,
    pub n_robots: Vec<usize>,
    /// Coverage level that fixes the reference time on the largest-`α` curve.
    pub reference_level: f64,
    /// Fractions of `t_end` at which the `α`-ordering is recorded.
    pub probe_fractions: Vec<f64>,
    /// Split `N` robots into separated clusters of this size.
    pub cluster_size: Option<usize>,
}

impl Default for StudySection {
    fn default() -> Self {
        StudySection {
            alphas: vec![1.3, 1.5, 1.7, 1.9],
            n_robots: vec![20],
            reference_level: 0.5,
            probe_fractions: vec![0.25, 0.5, 0.75],
            cluster_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct XvalSection {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub sigma0: f64,
    pub c0: f64,
    /// Side of the periodic square.
    pub box_size: f64,
    pub n_walkers: usize,
    pub pde_n: usize,
    /// Control grid is `pde_n · control_refinement` per side.
    pub control_refinement: usize,
    /// Histogram bins per side; must divide `pde_n`.
    pub hist_n: usize,
    pub checkpoints: Vec<f64>,
    pub pde_dt: f64,
    pub micro_dt: f64,
    /// Standard deviation of the periodic Gaussian initial density.
    pub init_width: f64,
    pub tolerance: f64,
    pub control_tolerance: f64,
}

impl Default for XvalSection {
    fn default() -> Self {
        XvalSection {
            alpha: 1.3,
            gamma: 0.5,
            epsilon: 0.005,
            sigma0: 1.0,
            c0: 1.0,
            box_size: 1.0,
            n_walkers: 100_000,
            pde_n: 128,
            control_refinement: 2,
            hist_n: 16,
            checkpoints: vec![0.005, 0.01, 0.02],
            pde_dt: 1e-4,
            micro_dt: 5e-4,
            init_width: 0.08,
            tolerance: 0.05,
            control_tolerance: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Worker threads; results do not depend on it.
    pub threads: Option<usize>,
    pub model: ModelSection,
    pub pde: PdeSection,
    pub micro: MicroSection,
    pub hyper: HyperSection,
    pub study: StudySection,
    pub xval: XvalSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            threads: None,
            model: ModelSection::default(),
            pde: PdeSection::default(),
            micro: MicroSection::default(),
            hyper: HyperSection::default(),
            study: StudySection::default(),
            xval: XvalSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Git-style content hash of the canonical TOML: SHA-256 over
    /// `"blob <len>\0" + text`, hex encoded.
    pub fn content_hash(&self) -> Result<String> {
        let text = self.to_toml()?;
        let mut h = Sha256::new();
        h.update(format!("blob {}\0", text.len()).as_bytes());
        h.update(text.as_bytes());
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }
}
