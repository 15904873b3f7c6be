//! Lévy run-time law and reproducible random streams.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coefficients::check_alpha;
use crate::error::{Error, Result};
use crate::quadrature::integrate_pieces;
use crate::special::gamma;

/// Survival `ψ(τ) = (a/(a+τ))^α` of a single run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunTimeLaw {
    pub alpha: f64,
    /// Time scale: `ς₀` unscaled, `ς₀ ε^μ` in scaled runs.
    pub a: f64,
}

impl RunTimeLaw {
    pub fn new(alpha: f64, a: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::invalid("a", format!("{a} must be positive")));
        }
        Ok(RunTimeLaw { alpha, a })
    }

    fn check_tau(tau: f64) -> Result<()> {
        if tau >= 0.0 {
            Ok(())
        } else {
            Err(Error::invalid("tau", format!("{tau} is negative")))
        }
    }

    pub fn survival(&self, tau: f64) -> Result<f64> {
        Self::check_tau(tau)?;
        Ok(self.survival_unchecked(tau))
    }

    #[inline]
    fn survival_unchecked(&self, tau: f64) -> f64 {
        (self.a / (self.a + tau)).powf(self.alpha)
    }

    /// Stopping frequency `β(τ) = −ψ'/ψ = α/(a+τ)`.
    pub fn stopping_rate(&self, tau: f64) -> Result<f64> {
        Self::check_tau(tau)?;
        Ok(self.alpha / (self.a + tau))
    }

    /// Run-time density `φ = −ψ' = βψ`.
    pub fn density(&self, tau: f64) -> f64 {
        self.alpha / (self.a + tau) * self.survival_unchecked(tau)
    }

    /// Inverse of the survival function for `u ∈ (0, 1]`.
    #[inline]
    pub fn quantile(&self, u: f64) -> f64 {
        self.a * (u.powf(-1.0 / self.alpha) - 1.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(uniform_open_closed(rng))
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.alpha - 1.0)
    }
}

/// Uniform draw on `(0, 1]`.
#[inline]
pub fn uniform_open_closed<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Key of an independent substream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub agent: u64,
    pub epoch: u64,
}

/// Counter-based random stream: the draws depend only on
/// `(seed, agent, epoch, draw index)`.
///
/// The seed selects the ChaCha key, the agent selects the ChaCha stream and the
/// epoch selects a block of `2^40` words inside it.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    key: StreamKey,
    rng: ChaCha8Rng,
}

const EPOCH_WORDS: u128 = 1 << 40;

/// Largest usable epoch: the ChaCha word position has 68 bits.
pub const MAX_EPOCH: u64 = (1 << 28) - 1;

impl RngStream {
    pub fn new(seed: u64, key: StreamKey) -> Self {
        assert!(key.epoch <= MAX_EPOCH, "epoch {} exceeds {MAX_EPOCH}", key.epoch);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(key.agent);
        rng.set_word_pos(u128::from(key.epoch) * EPOCH_WORDS);
        RngStream { seed, key, rng }
    }

    pub fn for_agent(seed: u64, agent: usize, epoch: u64) -> Self {
        Self::new(
            seed,
            StreamKey {
                agent: agent as u64,
                epoch,
            },
        )
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn key(&self) -> StreamKey {
        self.key
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaplacePoint {
    pub lambda: f64,
    /// `φ̂(λ)/ψ̂(λ)` by quadrature.
    pub exact: f64,
    /// Three-term small-`λ` truncation.
    pub truncation: f64,
    pub residual: f64,
    pub relative_residual: f64,
    /// Residual after also including the `λ^{2α−2}` term the three-term
    /// truncation leaves out.
    pub corrected_residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaplaceReport {
    pub alpha: f64,
    pub sigma0: f64,
    pub points: Vec<LaplacePoint>,
    /// `r(λ)/r(λ/2)` for consecutive grid points ordered by decreasing `λ`.
    pub ratios: Vec<f64>,
    pub corrected_ratios: Vec<f64>,
    /// `2^α`, the ratio expected of an `O(λ^α)` remainder.
    pub expected_ratio: f64,
}

impl LaplaceReport {
    /// Largest relative deviation of the residual ratios from `2^α`.
    pub fn worst_ratio_deviation(&self) -> f64 {
        self.ratios
            .iter()
            .map(|r| (r / self.expected_ratio - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Three-term small-`λ` truncation of `φ̂/ψ̂`.
pub fn laplace_truncation(alpha: f64, a: f64, lambda: f64) -> f64 {
    (alpha - 1.0) / a
        - lambda / (2.0 - alpha)
        - a.powf(alpha - 2.0)
            * lambda.powf(alpha - 1.0)
            * (alpha - 1.0).powi(2)
            * gamma(1.0 - alpha)
}

/// The `λ^{2α−2}` term of the small-`λ` expansion of `φ̂/ψ̂`.
pub fn laplace_second_order(alpha: f64, a: f64, lambda: f64) -> f64 {
    (alpha - 1.0).powi(3)
        * gamma(1.0 - alpha).powi(2)
        * a.powf(2.0 * alpha - 3.0)
        * lambda.powf(2.0 * alpha - 2.0)
}

/// Laplace transforms `(φ̂(λ), ψ̂(λ))` by quadrature.
pub fn laplace_transforms(law: &RunTimeLaw, lambda: f64) -> Result<(f64, f64)> {
    let a = law.a;
    // ψ(τ_max) = 1e-12
    let tau_max = a * (1e12f64.powf(1.0 / law.alpha) - 1.0);
    let mut breaks = vec![0.0, a];
    let mut t = 10.0 * a;
    while t < tau_max {
        breaks.push(t);
        t *= 10.0;
    }
    breaks.push(tau_max);
    let wrap = |e: Error| match e {
        Error::Quadrature { error, .. } => Error::Quadrature {
            what: format!("Laplace transform at lambda = {lambda}"),
            error,
        },
        other => other,
    };
    let psi = integrate_pieces(
        |t| (-lambda * t).exp() * law.survival_unchecked(t),
        &breaks,
        1e-14,
        1e-13,
    )
    .map_err(wrap)?;
    let phi = integrate_pieces(
        |t| (-lambda * t).exp() * law.density(t),
        &breaks,
        1e-14,
        1e-13,
    )
    .map_err(wrap)?;
    Ok((phi.value, psi.value))
}

/// Compare `φ̂/ψ̂` computed by quadrature with its three-term expansion.
pub fn verify_laplace_expansion(
    alpha: f64,
    sigma0: f64,
    lambda_grid: &[f64],
) -> Result<LaplaceReport> {
    let law = RunTimeLaw::new(alpha, sigma0)?;
    let mut lambdas = lambda_grid.to_vec();
    if lambdas.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::invalid("lambda_grid", "values must be positive"));
    }
    lambdas.sort_by(|x, y| y.total_cmp(x));
    let mut points = Vec::with_capacity(lambdas.len());
    for &lambda in &lambdas {
        let (phi, psi) = laplace_transforms(&law, lambda)?;
        let exact = phi / psi;
        let truncation = laplace_truncation(alpha, sigma0, lambda);
        let residual = (exact - truncation).abs();
        points.push(LaplacePoint {
            lambda,
            exact,
            truncation,
            residual,
            relative_residual: residual / exact.abs(),
            corrected_residual: (exact - truncation - laplace_second_order(alpha, sigma0, lambda))
                .abs(),
        });
    }
    let ratios = points
        .windows(2)
        .map(|w| w[0].residual / w[1].residual)
        .collect();
    let corrected_ratios = points
        .windows(2)
        .map(|w| w[0].corrected_residual / w[1].corrected_residual)
        .collect();
    Ok(LaplaceReport {
        alpha,
        sigma0,
        points,
        ratios,
        corrected_ratios,
        expected_ratio: 2f64.powf(alpha),
    })
}
