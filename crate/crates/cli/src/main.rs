//! `levyswarm`: run the coefficient, micro, PDE, hyperbolic, coverage and
//! cross-validation drivers from a TOML config with flag overrides.
//!
//! Exit codes: 0 success, 2 config or validation error, 3 solver failure,
//! 4 cross-validation check failed.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use levyswarm::error::Error;
use levyswarm::experiments::{self, ExperimentConfig, RunDir};
use levyswarm::fracpde::BoundaryMode;

#[derive(Parser, Debug)]
#[command(name = "levyswarm", version, about = "Lévy-walk swarm models: kinetic simulation and fractional PDE closure")]
struct Cli {
    /// TOML config; absent keys take the E-Puck preset defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Run directory; without it only the JSON summary is printed.
    #[arg(long, alias = "out-prefix", global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "LEVYSWARM_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct ModelArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    n_robots: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Boundary {
    Periodic,
    NeumannMirror,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closure coefficients and scaling exponents as JSON.
    Coeffs {
        #[command(flatten)]
        model: ModelArgs,
        /// Include the run-time Laplace residual report.
        #[arg(long)]
        residuals: bool,
    },
    /// Agent-based simulation.
    Micro {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Fractional PDE closure.
    Pde {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        /// Cells as `nx,ny`.
        #[arg(long, value_parser = parse_grid)]
        grid: Option<[usize; 2]>,
        #[arg(long, value_enum)]
        boundary: Option<Boundary>,
        #[arg(long)]
        normalize_mass: bool,
        /// Alignment kernel radius; positive values enable alignment.
        #[arg(long)]
        ell: Option<f64>,
        #[arg(long)]
        kernel_range: Option<f64>,
    },
    /// Hyperbolic alignment limit on a periodic grid.
    Hyper {
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, value_parser = parse_grid)]
        grid: Option<[usize; 2]>,
    },
    /// Coverage sweep over α and robot counts.
    CoverageStudy {
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        n_robots: Option<Vec<usize>>,
        #[arg(long)]
        t_end: Option<f64>,
        /// Split each swarm into separated clusters of this size.
        #[arg(long)]
        cluster_size: Option<usize>,
    },
    /// Micro histogram against the PDE solution in a periodic box.
    Xval {
        #[arg(long)]
        n_walkers: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
    },
}

fn parse_grid(s: &str) -> Result<[usize; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    match parts.as_slice() {
        [a, b] => Ok([a.trim().parse().map_err(|e| format!("{e}"))?, b.trim().parse().map_err(|e| format!("{e}"))?]),
        _ => Err(format!("expected nx,ny, got `{s}`")),
    }
}

fn apply_model(cfg: &mut ExperimentConfig, m: &ModelArgs) {
    if let Some(a) = m.alpha {
        cfg.model.alpha = a;
    }
    if let Some(n) = m.n_robots {
        cfg.model.n_robots = n;
    }
}

/// Merge flags into the file config; flags win.
fn effective_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    match &cli.command {
        Command::Coeffs { model, .. } => apply_model(&mut cfg, model),
        Command::Micro { model, steps } => {
            apply_model(&mut cfg, model);
            if let Some(s) = steps {
                cfg.micro.steps = *s;
            }
        }
        Command::Pde {
            model,
            t_end,
            dt,
            grid,
            boundary,
            normalize_mass,
            ell,
            kernel_range,
        } => {
            apply_model(&mut cfg, model);
            let p = &mut cfg.pde;
            if let Some(t) = t_end {
                p.t_end = *t;
            }
            if let Some(d) = dt {
                p.dt = *d;
            }
            if let Some([nx, ny]) = grid {
                (p.nx, p.ny) = (*nx, *ny);
            }
            if let Some(b) = boundary {
                p.boundary = match b {
                    Boundary::Periodic => BoundaryMode::Periodic,
                    Boundary::NeumannMirror => BoundaryMode::NeumannMirror,
                };
            }
            p.normalize_mass |= *normalize_mass;
            if let Some(r) = kernel_range {
                p.kernel_range = *r;
            }
            if let Some(l) = ell {
                cfg.model.ell = *l;
            }
        }
        Command::Hyper { t_end, dt, grid } => {
            let h = &mut cfg.hyper;
            if t_end.is_some() {
                h.t_end = *t_end;
            }
            if dt.is_some() {
                h.dt = *dt;
            }
            if let Some([nx, ny]) = grid {
                (h.nx, h.ny) = (*nx, *ny);
            }
        }
        Command::CoverageStudy {
            alphas,
            n_robots,
            t_end,
            cluster_size,
        } => {
            if let Some(a) = alphas {
                cfg.study.alphas = a.clone();
            }
            if let Some(n) = n_robots {
                cfg.study.n_robots = n.clone();
            }
            if let Some(t) = t_end {
                cfg.pde.t_end = *t;
            }
            if cluster_size.is_some() {
                cfg.study.cluster_size = *cluster_size;
            }
        }
        Command::Xval { n_walkers, alpha } => {
            if let Some(n) = n_walkers {
                cfg.xval.n_walkers = *n;
            }
            if let Some(a) = alpha {
                cfg.xval.alpha = *a;
            }
        }
    }
    Ok(cfg)
}

enum Outcome {
    Done(serde_json::Value),
    CheckFailed(serde_json::Value),
}

fn execute(cli: &Cli, cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Outcome, Error> {
    let dir = out.map(RunDir::create).transpose()?;
    let dir = dir.as_ref();
    let value = match &cli.command {
        Command::Coeffs { residuals, .. } => experiments::run_coeffs(cfg, *residuals, dir)?,
        Command::Micro { .. } => serde_json::to_value(experiments::run_micro(cfg, dir)?)?,
        Command::Pde { .. } => serde_json::to_value(experiments::run_pde(cfg, dir)?)?,
        Command::Hyper { .. } => serde_json::to_value(experiments::run_hyper(cfg, dir)?)?,
        Command::CoverageStudy { .. } => serde_json::to_value(experiments::run_study(cfg, dir)?.summary)?,
        Command::Xval { .. } => {
            let report = experiments::run_xval(cfg, dir)?;
            let value = serde_json::to_value(&report)?;
            if !report.pass {
                return Ok(Outcome::CheckFailed(value));
            }
            value
        }
    };
    Ok(Outcome::Done(value))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match effective_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cfg.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    // A closed stdout (e.g. piped into `head`) is not an error.
    let print = |v: &serde_json::Value| {
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(v).expect("serializable"));
    };
    match execute(&cli, &cfg, cli.out.as_deref()) {
        Ok(Outcome::Done(v)) => {
            print(&v);
            ExitCode::SUCCESS
        }
        Ok(Outcome::CheckFailed(v)) => {
            print(&v);
            eprintln!("cross-validation check failed");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
