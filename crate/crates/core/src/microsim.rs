//! Agent-based simulator: constant-speed runs with Lévy run times, tumble or
//! align at each stop, elastic pair collisions and wall reflection.
//!
//! A step is two-phase. Agents first move in parallel, each reading only the
//! state at the start of the step and its own random stream, so the result
//! does not depend on thread count. Collisions are then resolved by a
//! sequential sweep over pairs in canonical index order.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{validate_scaling, wrap_angle, DirectionLaw, ModelParams};
use crate::error::{Error, Result};
use crate::fracpde::{covered_mass, Field2D, Grid2D};
use crate::levy::{RngStream, RunTimeLaw, MAX_EPOCH};

/// Relative overlap tolerance for pair distances.
pub const OVERLAP_TOL: f64 = 1e-9;
pub const MAX_COLLISION_SWEEPS: usize = 10;
/// Pairs are pushed apart to `ϱ(1 + SEPARATION_MARGIN)` so chains of
/// contacts settle within a few sweeps.
pub const SEPARATION_MARGIN: f64 = 1e-2;
/// Below this `|J|` an agent keeps its own direction.
pub const ZERO_FLUX: f64 = 1e-12;

const INIT_EPOCH: u64 = MAX_EPOCH;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MicroBoundary {
    #[default]
    Reflecting,
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroConfig {
    pub params: ModelParams,
    pub dt: f64,
    pub boundary: MicroBoundary,
    /// Alignment neighbourhood radius.
    pub sensing_radius: f64,
    /// Decay length of the exponential influence kernel.
    pub kernel_range: f64,
    pub seed: u64,
    /// Speed used for motion.
    pub speed: f64,
    /// Time scale `a` of the run-time law.
    pub run_scale: f64,
    pub collisions: bool,
    /// Draw a fresh run time for an agent after each reflecting collision.
    pub collision_resets_clock: bool,
    /// Rectangle `[0, w] × [0, h]`.
    pub domain: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MicroUnits {
    /// Speed `c` and run scale `ς₀`.
    #[default]
    Physical,
    /// Run scale `ς₀ε^{1+μ}` and speed `c₀ε^{−γ}`: one time unit is one unit
    /// of the macroscopic clock.
    Scaled,
}

impl MicroConfig {
    /// Arena from `params`, reflecting walls, kernel range `ϱ` and sensing
    /// radius `5ϱ`.
    pub fn new(params: ModelParams, dt: f64, seed: u64, units: MicroUnits, collisions: bool) -> Result<Self> {
        params.validate()?;
        let (speed, run_scale) = match units {
            MicroUnits::Physical => (params.c, params.sigma0),
            MicroUnits::Scaled => {
                let s = validate_scaling(params.alpha, params.gamma, params.epsilon)?;
                (params.c0 * s.epsilon.powf(-s.gamma), params.sigma0 * s.epsilon.powf(1.0 + s.mu))
            }
        };
        let cfg = MicroConfig {
            dt,
            boundary: MicroBoundary::Reflecting,
            sensing_radius: 5.0 * params.rho_diam,
            kernel_range: params.rho_diam,
            seed,
            speed,
            run_scale,
            collisions,
            collision_resets_clock: true,
            domain: [params.arena.width, params.arena.height],
            params,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn physical(params: ModelParams, dt: f64, seed: u64) -> Result<Self> {
        Self::new(params, dt, seed, MicroUnits::Physical, true)
    }

    pub fn scaled(params: ModelParams, dt: f64, seed: u64) -> Result<Self> {
        Self::new(params, dt, seed, MicroUnits::Scaled, true)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", format!("{} must be positive", self.dt)));
        }
        if !(self.speed > 0.0 && self.run_scale > 0.0) {
            return Err(Error::invalid("speed", "speed and run scale must be positive"));
        }
        if !(self.domain[0] > 0.0 && self.domain[1] > 0.0) {
            return Err(Error::invalid("domain", "must have positive size"));
        }
        if !(self.kernel_range > 0.0) || self.sensing_radius < self.kernel_range {
            return Err(Error::invalid("sensing_radius", format!("{} must be at least the kernel range {}", self.sensing_radius, self.kernel_range)));
        }
        if self.collisions && self.dt * self.speed >= 0.5 * self.params.rho_diam {
            return Err(Error::invalid("dt", format!("c·dt = {} must be below ϱ/2 = {}", self.dt * self.speed, 0.5 * self.params.rho_diam)));
        }
        Ok(())
    }

    pub fn run_law(&self) -> Result<RunTimeLaw> {
        RunTimeLaw::new(self.params.alpha, self.run_scale)
    }

    pub fn area(&self) -> f64 {
        self.domain[0] * self.domain[1]
    }

    fn cell_size(&self) -> f64 {
        self.params.rho_diam.max(self.sensing_radius)
    }

    /// Kernel weight `e^{−r/R}` for `r` within the sensing radius.
    pub fn kernel(&self, r: f64) -> f64 {
        if r <= self.sensing_radius {
            (-r / self.kernel_range).exp()
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub position: [f64; 2],
    pub direction: [f64; 2],
    pub time_to_stop: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub tumbles: u64,
    pub aligns: u64,
    /// Reflecting pair collisions.
    pub collisions: u64,
    /// Alignment events where the flux vanished and the own direction was kept.
    pub align_fallbacks: u64,
}

impl Counters {
    fn add(&mut self, o: &Counters) {
        self.tumbles += o.tumbles;
        self.aligns += o.aligns;
        self.collisions += o.collisions;
        self.align_fallbacks += o.align_fallbacks;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmState {
    pub agents: Vec<Agent>,
    pub time: f64,
    pub step: u64,
    /// Positions at time 0, for displacement statistics.
    pub origin: Vec<[f64; 2]>,
    /// Periodic image counts, so `position + image·L` is the unwrapped path.
    pub image: Vec<[i64; 2]>,
    pub counters: Counters,
}

impl SwarmState {
    /// Agents at the given positions with uniformly random directions and
    /// fresh run clocks.
    pub fn new(positions: &[[f64; 2]], config: &MicroConfig) -> Result<Self> {
        config.validate()?;
        let law = config.run_law()?;
        let agents = positions
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                if !(p[0] >= 0.0 && p[0] <= config.domain[0] && p[1] >= 0.0 && p[1] <= config.domain[1]) {
                    return Err(Error::invalid("positions", format!("agent {i} at {p:?} is outside the domain")));
                }
                let mut rng = RngStream::for_agent(config.seed, i, INIT_EPOCH);
                let a: f64 = std::f64::consts::PI * (2.0 * rng.random::<f64>() - 1.0);
                Ok(Agent {
                    position: p,
                    direction: [a.cos(), a.sin()],
                    time_to_stop: law.sample(&mut rng),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_agents(agents))
    }

    pub fn from_agents(agents: Vec<Agent>) -> Self {
        SwarmState {
            origin: agents.iter().map(|a| a.position).collect(),
            image: vec![[0, 0]; agents.len()],
            agents,
            time: 0.0,
            step: 0,
            counters: Counters::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn unwrapped(&self, i: usize, domain: [f64; 2]) -> [f64; 2] {
        let p = self.agents[i].position;
        let m = self.image[i];
        [p[0] + m[0] as f64 * domain[0], p[1] + m[1] as f64 * domain[1]]
    }

    /// Mean squared displacement from the initial positions (unwrapped).
    pub fn msd(&self, domain: [f64; 2]) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let s: f64 = (0..self.len())
            .map(|i| {
                let p = self.unwrapped(i, domain);
                (p[0] - self.origin[i][0]).powi(2) + (p[1] - self.origin[i][1]).powi(2)
            })
            .sum();
        s / self.len() as f64
    }

    pub fn polarization(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let (sx, sy) = self.agents.iter().fold((0.0, 0.0), |(x, y), a| (x + a.direction[0], y + a.direction[1]));
        sx.hypot(sy) / self.len() as f64
    }

    /// Smallest pairwise centre distance (`O(N²)`; for tests and checks).
    pub fn min_pair_distance(&self, config: &MicroConfig) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                let d = separation(self.agents[i].position, self.agents[j].position, config);
                best = best.min(d[0].hypot(d[1]));
            }
        }
        best
    }
}

/// Vector `a − b`, by minimum image for periodic domains.
fn separation(a: [f64; 2], b: [f64; 2], config: &MicroConfig) -> [f64; 2] {
    let mut d = [a[0] - b[0], a[1] - b[1]];
    if config.boundary == MicroBoundary::Periodic {
        for k in 0..2 {
            let l = config.domain[k];
            d[k] -= l * (d[k] / l).round();
        }
    }
    d
}

/// Uniform cell list over the domain with cells at least `size` wide.
#[derive(Debug, Clone)]
pub struct CellList {
    ncx: usize,
    ncy: usize,
    wx: f64,
    wy: f64,
    periodic: bool,
    starts: Vec<usize>,
    items: Vec<usize>,
}

impl CellList {
    pub fn build(positions: impl Iterator<Item = [f64; 2]> + Clone, size: f64, domain: [f64; 2], periodic: bool) -> Self {
        let ncx = ((domain[0] / size).floor() as usize).max(1);
        let ncy = ((domain[1] / size).floor() as usize).max(1);
        let (wx, wy) = (domain[0] / ncx as f64, domain[1] / ncy as f64);
        let cell_of = |p: [f64; 2]| {
            let i = ((p[0] / wx).floor().max(0.0) as usize).min(ncx - 1);
            let j = ((p[1] / wy).floor().max(0.0) as usize).min(ncy - 1);
            i + ncx * j
        };
        let mut counts = vec![0usize; ncx * ncy + 1];
        for p in positions.clone() {
            counts[cell_of(p) + 1] += 1;
        }
        for c in 1..counts.len() {
            counts[c] += counts[c - 1];
        }
        let mut fill = counts.clone();
        let mut items = vec![0; counts[ncx * ncy]];
        for (idx, p) in positions.enumerate() {
            let c = cell_of(p);
            items[fill[c]] = idx;
            fill[c] += 1;
        }
        CellList {
            ncx,
            ncy,
            wx,
            wy,
            periodic,
            starts: counts,
            items,
        }
    }

    /// Indices in the 3×3 block of cells around `p`, each listed once.
    pub fn neighbours(&self, p: [f64; 2], out: &mut Vec<usize>) {
        out.clear();
        let ci = ((p[0] / self.wx).floor().max(0.0) as i64).min(self.ncx as i64 - 1);
        let cj = ((p[1] / self.wy).floor().max(0.0) as i64).min(self.ncy as i64 - 1);
        let mut cells = Vec::with_capacity(9);
        for dj in -1..=1 {
            for di in -1..=1 {
                let (mut i, mut j) = (ci + di, cj + dj);
                if self.periodic {
                    i = i.rem_euclid(self.ncx as i64);
                    j = j.rem_euclid(self.ncy as i64);
                } else if i < 0 || j < 0 || i >= self.ncx as i64 || j >= self.ncy as i64 {
                    continue;
                }
                let c = i as usize + self.ncx * j as usize;
                if !cells.contains(&c) {
                    cells.push(c);
                }
            }
        }
        for c in cells {
            out.extend_from_slice(&self.items[self.starts[c]..self.starts[c + 1]]);
        }
    }
}

/// Fold a coordinate into `[0, l]` by specular reflection; returns the
/// number of wall hits.
fn fold(x: f64, l: f64) -> (f64, i64) {
    let m = (x / l).floor();
    let r = x - m * l;
    let hits = m as i64;
    if hits.rem_euclid(2) == 0 {
        (r.clamp(0.0, l), hits)
    } else {
        ((l - r).clamp(0.0, l), hits)
    }
}

/// Move along the current direction, reflecting at walls or wrapping.
fn advance(agent: &mut Agent, image: &mut [i64; 2], dist: f64, config: &MicroConfig) {
    for k in 0..2 {
        let l = config.domain[k];
        let x = agent.position[k] + dist * agent.direction[k];
        match config.boundary {
            MicroBoundary::Reflecting => {
                let (p, hits) = fold(x, l);
                agent.position[k] = p;
                if hits.rem_euclid(2) != 0 {
                    agent.direction[k] = -agent.direction[k];
                }
            }
            MicroBoundary::Periodic => {
                let m = (x / l).floor();
                agent.position[k] = (x - m * l).clamp(0.0, l);
                if agent.position[k] == l {
                    agent.position[k] = 0.0;
                }
                image[k] += m as i64;
            }
        }
    }
}

fn rotate(d: [f64; 2], angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    unit([c * d[0] - s * d[1], s * d[0] + c * d[1]])
}

fn unit(d: [f64; 2]) -> [f64; 2] {
    let n = d[0].hypot(d[1]);
    [d[0] / n, d[1] / n]
}

/// New direction drawn from the tumble kernel about the old one.
pub fn tumble<R: Rng + ?Sized>(direction: [f64; 2], kappa_tumble: f64, rng: &mut R) -> [f64; 2] {
    rotate(direction, DirectionLaw::from_kappa(kappa_tumble).sample_offset(rng))
}

/// New direction drawn from the alignment law centred on `lambda`.
pub fn align_direction<R: Rng + ?Sized>(lambda: [f64; 2], kappa_align: f64, rng: &mut R) -> [f64; 2] {
    rotate(lambda, DirectionLaw::from_kappa(kappa_align).sample_offset(rng))
}

/// Kernel-weighted mean direction of the neighbours of agent `i`, or its own
/// direction when the flux vanishes. The flag reports the fallback.
pub fn local_mean_direction(state: &SwarmState, i: usize, config: &MicroConfig, cells: &CellList, scratch: &mut Vec<usize>) -> ([f64; 2], bool) {
    let p = state.agents[i].position;
    cells.neighbours(p, scratch);
    let mut j_sum = [0.0, 0.0];
    for &j in scratch.iter() {
        if j == i {
            continue;
        }
        let d = separation(state.agents[j].position, p, config);
        let w = config.kernel(d[0].hypot(d[1]));
        if w > 0.0 {
            j_sum[0] += w * state.agents[j].direction[0];
            j_sum[1] += w * state.agents[j].direction[1];
        }
    }
    let n = j_sum[0].hypot(j_sum[1]);
    if n < ZERO_FLUX {
        (state.agents[i].direction, true)
    } else {
        ([j_sum[0] / n, j_sum[1] / n], false)
    }
}

fn build_cells(state: &SwarmState, config: &MicroConfig) -> CellList {
    CellList::build(state.agents.iter().map(|a| a.position), config.cell_size(), config.domain, config.boundary == MicroBoundary::Periodic)
}

/// Advance the swarm by one time step.
pub fn step(state: &SwarmState, config: &MicroConfig) -> Result<SwarmState> {
    let law = config.run_law()?;
    let epoch = 2 * state.step;
    if epoch + 1 >= MAX_EPOCH {
        return Err(Error::invalid("steps", format!("step count exceeds {}", MAX_EPOCH / 2)));
    }
    let p = &config.params;
    let needs_neighbours = p.zeta < 1.0;
    let cells = needs_neighbours.then(|| build_cells(state, config));
    let tumble_law = p.tumble_law();
    let align_law = p.align_law();

    let moved: Vec<(Agent, [i64; 2], Counters)> = (0..state.len())
        .into_par_iter()
        .map_init(Vec::new, |scratch, i| {
            let mut rng = RngStream::for_agent(config.seed, i, epoch);
            let mut a = state.agents[i];
            let mut image = state.image[i];
            let mut counters = Counters::default();
            let mut remaining = config.dt;
            loop {
                if a.time_to_stop > remaining {
                    advance(&mut a, &mut image, remaining * config.speed, config);
                    a.time_to_stop -= remaining;
                    break;
                }
                let run = a.time_to_stop;
                advance(&mut a, &mut image, run * config.speed, config);
                remaining -= run;
                if rng.random::<f64>() < p.zeta {
                    counters.tumbles += 1;
                    a.direction = rotate(a.direction, tumble_law.sample_offset(&mut rng));
                } else {
                    counters.aligns += 1;
                    let cells = cells.as_ref().expect("cell list exists when zeta < 1");
                    let (mut lambda, fallback) = local_mean_direction(state, i, config, cells, scratch);
                    if fallback {
                        counters.align_fallbacks += 1;
                        lambda = a.direction;
                    }
                    a.direction = rotate(lambda, align_law.sample_offset(&mut rng));
                }
                a.time_to_stop = law.sample(&mut rng);
            }
            (a, image, counters)
        })
        .collect();

    let mut next = SwarmState {
        agents: Vec::with_capacity(state.len()),
        time: state.time + config.dt,
        step: state.step + 1,
        origin: state.origin.clone(),
        image: Vec::with_capacity(state.len()),
        counters: state.counters,
    };
    for (a, im, c) in moved {
        next.agents.push(a);
        next.image.push(im);
        next.counters.add(&c);
    }
    if config.collisions {
        resolve_collisions(&mut next, config, epoch + 1, &law)?;
    }
    Ok(next)
}

/// Reflect `θ` across the plane normal to `nu`.
pub fn reflect(theta: [f64; 2], nu: [f64; 2]) -> [f64; 2] {
    let d = theta[0] * nu[0] + theta[1] * nu[1];
    unit([theta[0] - 2.0 * d * nu[0], theta[1] - 2.0 * d * nu[1]])
}

/// Directions after an elastic collision along the unit centre line `nu`.
pub fn collide(theta1: [f64; 2], theta2: [f64; 2], nu: [f64; 2]) -> ([f64; 2], [f64; 2]) {
    (reflect(theta1, nu), reflect(theta2, nu))
}

/// True when `d/dt |x₁ − x₂|² < 0`.
pub fn approaching(x1_minus_x2: [f64; 2], theta1: [f64; 2], theta2: [f64; 2]) -> bool {
    x1_minus_x2[0] * (theta1[0] - theta2[0]) + x1_minus_x2[1] * (theta1[1] - theta2[1]) < 0.0
}

fn place(agent: &mut Agent, image: &mut [i64; 2], shift: [f64; 2], config: &MicroConfig) {
    for k in 0..2 {
        let l = config.domain[k];
        let x = agent.position[k] + shift[k];
        match config.boundary {
            MicroBoundary::Reflecting => agent.position[k] = x.clamp(0.0, l),
            MicroBoundary::Periodic => {
                let m = (x / l).floor();
                agent.position[k] = (x - m * l).clamp(0.0, l);
                if agent.position[k] == l {
                    agent.position[k] = 0.0;
                }
                image[k] += m as i64;
            }
        }
    }
}

fn overlapping_pairs(state: &SwarmState, config: &MicroConfig) -> Vec<(usize, usize)> {
    let rho = config.params.rho_diam;
    let limit = rho * (1.0 - OVERLAP_TOL);
    let cells = build_cells(state, config);
    let mut scratch = Vec::new();
    let mut pairs = Vec::new();
    for i in 0..state.len() {
        cells.neighbours(state.agents[i].position, &mut scratch);
        for &j in &scratch {
            if j > i {
                let d = separation(state.agents[i].position, state.agents[j].position, config);
                if d[0].hypot(d[1]) < limit {
                    pairs.push((i, j));
                }
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Sequential collision sweeps in canonical pair order. Approaching pairs are
/// reflected; every overlapping pair is pushed apart symmetrically.
pub fn resolve_collisions(state: &mut SwarmState, config: &MicroConfig, epoch: u64, law: &RunTimeLaw) -> Result<()> {
    let rho = config.params.rho_diam;
    let limit = rho * (1.0 - OVERLAP_TOL);
    let mut streams: std::collections::HashMap<usize, RngStream> = std::collections::HashMap::new();
    for _ in 0..MAX_COLLISION_SWEEPS {
        let pairs = overlapping_pairs(state, config);
        if pairs.is_empty() {
            return Ok(());
        }
        for (i, j) in pairs {
            let d = separation(state.agents[i].position, state.agents[j].position, config);
            let dist = d[0].hypot(d[1]);
            if dist >= limit {
                continue;
            }
            let nu = if dist > 0.0 { [d[0] / dist, d[1] / dist] } else { [1.0, 0.0] };
            let (ti, tj) = (state.agents[i].direction, state.agents[j].direction);
            if approaching(d, ti, tj) {
                let (a, b) = collide(ti, tj, nu);
                state.agents[i].direction = a;
                state.agents[j].direction = b;
                state.counters.collisions += 1;
                if config.collision_resets_clock {
                    for k in [i, j] {
                        let s = streams.entry(k).or_insert_with(|| RngStream::for_agent(config.seed, k, epoch));
                        state.agents[k].time_to_stop = law.sample(s);
                    }
                }
            }
            let gap = rho * (1.0 + SEPARATION_MARGIN) - dist;
            let (mut ii, mut ij) = (state.image[i], state.image[j]);
            // A wall may block part of one agent's share; the partner takes the rest.
            let before = state.agents[i].position;
            place(&mut state.agents[i], &mut ii, [0.5 * gap * nu[0], 0.5 * gap * nu[1]], config);
            let after = state.agents[i].position;
            let moved = if config.boundary == MicroBoundary::Reflecting {
                (after[0] - before[0]) * nu[0] + (after[1] - before[1]) * nu[1]
            } else {
                0.5 * gap
            };
            let rest = gap - moved;
            place(&mut state.agents[j], &mut ij, [-rest * nu[0], -rest * nu[1]], config);
            state.image[i] = ii;
            state.image[j] = ij;
        }
    }
    if let Some(&(i, j)) = overlapping_pairs(state, config).first() {
        let d = separation(state.agents[i].position, state.agents[j].position, config);
        return Err(Error::Overlap {
            i,
            j,
            distance: d[0].hypot(d[1]),
            sweeps: MAX_COLLISION_SWEEPS,
        });
    }
    Ok(())
}

/// Run `n_steps` steps, calling `observer` after each.
pub fn run(state: &SwarmState, config: &MicroConfig, n_steps: usize, mut observer: impl FnMut(&SwarmState) -> Result<()>) -> Result<SwarmState> {
    let mut s = state.clone();
    for k in 0..n_steps {
        s = step(&s, config).map_err(|e| e.at_step(k + 1))?;
        observer(&s)?;
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistogramMass {
    /// Histogram integrates to 1.
    Unit,
    /// Histogram integrates to the given mass (e.g. that of the PDE initial field).
    Total(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub time: f64,
    pub counts: Vec<u64>,
    pub density: Field2D,
    pub msd: f64,
    pub polarization: f64,
    pub covered_mass: f64,
}

/// Histogram of agent positions on `grid`, with the chosen mass convention.
pub fn histogram(state: &SwarmState, grid: Grid2D, mass: HistogramMass) -> (Vec<u64>, Field2D) {
    let mut counts = vec![0u64; grid.len()];
    for a in &state.agents {
        let (i, j) = grid.locate(a.position);
        counts[grid.index(i, j)] += 1;
    }
    let total = match mass {
        HistogramMass::Unit => 1.0,
        HistogramMass::Total(m) => m,
    };
    let scale = if state.is_empty() { 0.0 } else { total / (state.len() as f64 * grid.cell_area()) };
    let density = Field2D {
        grid,
        values: counts.iter().map(|&c| c as f64 * scale).collect(),
    };
    (counts, density)
}

pub fn observe(state: &SwarmState, config: &MicroConfig, grid: Grid2D, mass: HistogramMass) -> Observables {
    let (counts, density) = histogram(state, grid, mass);
    Observables {
        time: state.time,
        covered_mass: covered_mass(&density),
        counts,
        density,
        msd: state.msd(config.domain),
        polarization: state.polarization(),
    }
}

/// Deterministic stratified placement: each cell of `density` receives its
/// share of `n` agents by largest remainder, placed uniformly inside the cell.
pub fn place_from_density(density: &Field2D, n: usize, seed: u64) -> Result<Vec<[f64; 2]>> {
    if density.values.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::invalid("density", "must be nonnegative"));
    }
    let total: f64 = density.values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("density", "has no mass"));
    }
    let shares: Vec<f64> = density.values.iter().map(|v| v / total * n as f64).collect();
    let mut counts: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let mut rest: Vec<usize> = (0..shares.len()).collect();
    rest.sort_by(|&a, &b| (shares[b] - shares[b].floor()).total_cmp(&(shares[a] - shares[a].floor())).then(a.cmp(&b)));
    let missing = n - counts.iter().sum::<usize>();
    for &k in rest.iter().take(missing) {
        counts[k] += 1;
    }
    let g = density.grid;
    let mut rng = RngStream::for_agent(seed, 0, INIT_EPOCH - 1);
    let mut out = Vec::with_capacity(n);
    for j in 0..g.ny {
        for i in 0..g.nx {
            for _ in 0..counts[g.index(i, j)] {
                out.push([(i as f64 + rng.random::<f64>()) * g.dx(), (j as f64 + rng.random::<f64>()) * g.dy()]);
            }
        }
    }
    Ok(out)
}

/// `n` non-overlapping discs of diameter `ϱ` around `center`, by rejection
/// sampling in a disc that grows until the agents fit.
pub fn place_cluster(n: usize, center: [f64; 2], config: &MicroConfig) -> Result<Vec<[f64; 2]>> {
    let rho = config.params.rho_diam;
    let mut rng = RngStream::for_agent(config.seed, 0, INIT_EPOCH - 2);
    let mut radius = rho * (n as f64).sqrt();
    let mut out: Vec<[f64; 2]> = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n {
        attempts += 1;
        if attempts.is_multiple_of(200 * n.max(1)) {
            radius *= 1.25;
        }
        let r = radius * rng.random::<f64>().sqrt();
        let a = 2.0 * std::f64::consts::PI * rng.random::<f64>();
        let p = [center[0] + r * a.cos(), center[1] + r * a.sin()];
        if p[0] < 0.0 || p[1] < 0.0 || p[0] > config.domain[0] || p[1] > config.domain[1] {
            continue;
        }
        if out.iter().all(|q| {
            let d = separation(p, *q, config);
            d[0].hypot(d[1]) >= rho
        }) {
            out.push(p);
        }
        if radius > config.domain[0].hypot(config.domain[1]) {
            return Err(Error::invalid("n_robots", format!("cannot place {n} robots without overlap")));
        }
    }
    Ok(out)
}

/// Angle of a direction vector, in `(−π, π]`.
pub fn heading(d: [f64; 2]) -> f64 {
    wrap_angle(d[1].atan2(d[0]))
}
