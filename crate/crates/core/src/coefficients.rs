//! Derived constants of the macroscopic theory.
//!
//! Everything here is a pure function of [`ModelParams`]. Closure integrals over
//! the circle are evaluated by adaptive quadrature; the direction laws are
//! normalized so that `∫_0^{2π} Φ(cos s) ds = 1`, and the `|S|` factors are kept
//! explicit in every formula.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_default, ABS_TOL, REL_TOL};
use crate::special::{bessel_i_scaled, bessel_ratio_i1_i0, gamma};

/// Surface area of the unit circle, `|S|` for dimension 2.
pub const SPHERE_AREA: f64 = 2.0 * PI;

/// Normalization tolerance for a user supplied direction density.
pub const NORMALIZATION_TOL: f64 = 1e-8;

/// Below this `|C0|` the hyperbolic direction equation is ill-posed.
pub const DEGENERATE_C0: f64 = 1e-12;

/// Concentration above which von Mises draws use the normal approximation.
pub const VON_MISES_NORMAL_KAPPA: f64 = 1e6;

/// Map an angle to `(−π, π]`.
pub fn wrap_angle(s: f64) -> f64 {
    let w = s.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// A direction law on the circle, as a function of the angle to its mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DirectionLaw {
    Uniform,
    VonMises { kappa: f64 },
}

impl DirectionLaw {
    /// `κ = 0` is the uniform law.
    pub fn from_kappa(kappa: f64) -> Self {
        if kappa == 0.0 {
            DirectionLaw::Uniform
        } else {
            DirectionLaw::VonMises { kappa }
        }
    }

    pub fn kappa(&self) -> f64 {
        match *self {
            DirectionLaw::Uniform => 0.0,
            DirectionLaw::VonMises { kappa } => kappa,
        }
    }

    /// Density at angle `s` from the mean direction.
    pub fn density(&self, s: f64) -> f64 {
        match *self {
            DirectionLaw::Uniform => 1.0 / SPHERE_AREA,
            DirectionLaw::VonMises { kappa } => {
                (kappa * (s.cos() - 1.0)).exp() / (SPHERE_AREA * bessel_i_scaled(0, kappa))
            }
        }
    }

    /// Analytic mean cosine `I1(κ)/I0(κ)`; the preset for `ν₁` of a tumble kernel.
    pub fn mean_cosine(&self) -> f64 {
        bessel_ratio_i1_i0(self.kappa())
    }

    /// Draw an angle offset from the mean direction, in `(−π, π]`.
    ///
    /// Von Mises draws use the Best–Fisher rejection sampler; above
    /// [`VON_MISES_NORMAL_KAPPA`] the law is replaced by `N(0, 1/κ)`.
    pub fn sample_offset<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DirectionLaw::Uniform => PI * (2.0 * rng.random::<f64>() - 1.0),
            DirectionLaw::VonMises { kappa } if kappa > VON_MISES_NORMAL_KAPPA => {
                let s: f64 = Normal::new(0.0, kappa.sqrt().recip()).expect("finite sd").sample(rng);
                wrap_angle(s)
            }
            DirectionLaw::VonMises { kappa } => {
                let tau = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
                let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * kappa);
                let r = (1.0 + rho * rho) / (2.0 * rho);
                loop {
                    let u1: f64 = rng.random();
                    let u2: f64 = 1.0 - rng.random::<f64>();
                    let u3: f64 = rng.random();
                    let z = (PI * u1).cos();
                    let f = (1.0 + r * z) / (r + z);
                    let c = kappa * (r - f);
                    if c * (2.0 - c) > u2 || (c / u2).ln() + 1.0 - c >= 0.0 {
                        let theta = f.clamp(-1.0, 1.0).acos();
                        return if u3 < 0.5 { -theta } else { theta };
                    }
                }
            }
        }
    }

    fn integrate_moment(&self, weight: impl Fn(f64) -> f64) -> Result<f64> {
        // Centre the peak so the adaptive rule sees it in the interior.
        let f = |s: f64| self.density(s) * weight(s);
        Ok(integrate(f, -PI, 0.0, ABS_TOL / 2.0, REL_TOL)?.value
            + integrate(f, 0.0, PI, ABS_TOL / 2.0, REL_TOL)?.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arena {
    pub width: f64,
    pub height: f64,
}

impl Arena {
    pub fn area(&self) -> f64 {
        self.width * self.height
    }
}

/// Prefactor of the collision term in the mobility `F(u)`.
///
/// The density equation carries `8b/(3|S|²)` while the intermediate momentum
/// balance carries `4b/(3|S|²)`; the former is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionPrefactor {
    FourThirds,
    #[default]
    EightThirds,
}

impl CollisionPrefactor {
    pub fn value(self) -> f64 {
        match self {
            CollisionPrefactor::FourThirds => 4.0 / 3.0,
            CollisionPrefactor::EightThirds => 8.0 / 3.0,
        }
    }
}

/// Microscopic and physical parameters of the robot swarm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Lévy tail exponent, `1 < α < 2`.
    pub alpha: f64,
    /// Run-time scale `ς₀`.
    pub sigma0: f64,
    /// Microscopic speed.
    pub c: f64,
    pub epsilon: f64,
    pub gamma: f64,
    /// Scaled speed `c·ε^γ`.
    pub c0: f64,
    /// Probability of tumbling (vs aligning) at a stop.
    pub zeta: f64,
    /// Second eigenvalue of the tumble operator.
    pub nu1: f64,
    /// Alignment strength.
    pub ell: f64,
    pub kappa_tumble: f64,
    pub kappa_align: f64,
    pub rho_diam: f64,
    pub n_robots: usize,
    pub arena: Arena,
    pub dim: usize,
    #[serde(default)]
    pub collision_prefactor: CollisionPrefactor,
}

impl ModelParams {
    /// Parameters with `c0` derived from `c`, `epsilon` and `gamma`, and `ν₁`
    /// taken from the tumble kernel preset.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        alpha: f64,
        sigma0: f64,
        c: f64,
        epsilon: f64,
        gamma: f64,
        zeta: f64,
        kappa_tumble: f64,
        kappa_align: f64,
        rho_diam: f64,
        n_robots: usize,
        arena: Arena,
    ) -> Result<Self> {
        let p = ModelParams {
            alpha,
            sigma0,
            c,
            epsilon,
            gamma,
            c0: c * epsilon.powf(gamma),
            zeta,
            nu1: DirectionLaw::from_kappa(kappa_tumble).mean_cosine(),
            ell: 0.0,
            kappa_tumble,
            kappa_align,
            rho_diam,
            n_robots,
            arena,
            dim: 2,
            collision_prefactor: CollisionPrefactor::default(),
        };
        p.validate()?;
        Ok(p)
    }

    /// The E-Puck arena: 200 cm × 160 cm, ϱ = 7.5 cm, c = 3 cm/s, ε = 0.005,
    /// γ = 1/2, ς₀ = 1 s, pure tumbling with a uniform kernel.
    pub fn epuck(alpha: f64, n_robots: usize) -> Result<Self> {
        ModelParams::new(
            alpha,
            1.0,
            3.0,
            0.005,
            0.5,
            1.0,
            0.0,
            0.0,
            7.5,
            n_robots,
            Arena {
                width: 200.0,
                height: 160.0,
            },
        )
    }

    pub fn align_law(&self) -> DirectionLaw {
        DirectionLaw::from_kappa(self.kappa_align)
    }

    pub fn tumble_law(&self) -> DirectionLaw {
        DirectionLaw::from_kappa(self.kappa_tumble)
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if self.dim != 2 {
            return Err(Error::UnsupportedDimension(self.dim));
        }
        let positive = [
            ("sigma0", self.sigma0),
            ("c", self.c),
            ("c0", self.c0),
            ("rho_diam", self.rho_diam),
            ("epsilon", self.epsilon),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(
                    name,
                    format!("{v} must be positive and finite"),
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.zeta) {
            return Err(Error::invalid(
                "zeta",
                format!("{} not in [0, 1]", self.zeta),
            ));
        }
        if !(-1.0..=1.0).contains(&self.nu1) {
            return Err(Error::invalid(
                "nu1",
                format!("{} not in [-1, 1]", self.nu1),
            ));
        }
        for (name, v) in [
            ("ell", self.ell),
            ("kappa_tumble", self.kappa_tumble),
            ("kappa_align", self.kappa_align),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("{v} must be >= 0")));
            }
        }
        if !(self.arena.width > 0.0 && self.arena.height > 0.0) {
            return Err(Error::invalid("arena", "dimensions must be positive"));
        }
        Ok(())
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 1.0 && alpha < 2.0 {
        Ok(())
    } else {
        Err(Error::invalid(
            "alpha",
            format!("{alpha} not in the open interval (1, 2)"),
        ))
    }
}

/// Scaling exponents linking the microscopic and macroscopic scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub epsilon: f64,
    pub gamma: f64,
    pub mu: f64,
    pub eta: f64,
    pub xi_minus_theta: f64,
}

/// Solve the scaling relations for `μ`, `η`, `ξ−ϑ` and check their constraints.
pub fn validate_scaling(alpha: f64, gamma: f64, epsilon: f64) -> Result<ScalingParams> {
    check_alpha(alpha)?;
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid("gamma", format!("{gamma} not in (0, 1)")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid(
            "epsilon",
            format!("{epsilon} must be positive"),
        ));
    }
    let mu = (1.0 - alpha * (1.0 - gamma)) / (alpha - 1.0);
    let xi_minus_theta = 1.0 - gamma / (alpha - 1.0);
    if mu <= 0.0 {
        return Err(Error::Constraint(format!(
            "μ = {mu} not > 0 (requires γ > (α−1)/α)"
        )));
    }
    if xi_minus_theta >= 0.0 {
        return Err(Error::Constraint(format!("ξ−ϑ = {xi_minus_theta} not < 0")));
    }
    Ok(ScalingParams {
        epsilon,
        gamma,
        mu,
        eta: -gamma,
        xi_minus_theta,
    })
}

/// Fractional diffusion constant `C_α`.
pub fn diffusion_constant(params: &ModelParams) -> Result<f64> {
    check_alpha(params.alpha)?;
    let a = params.alpha;
    let s = SPHERE_AREA;
    Ok(
        -params.sigma0.powf(a - 2.0) * params.c0.powf(a - 1.0) * (a - 1.0).powi(2) * PI
            / ((PI * a).sin() * gamma(a))
            * (s - 4.0 * params.zeta * params.nu1)
            / (s * s),
    )
}

/// Coefficients of `F(u) = f_const + f_slope·u` and `G(u) = g_slope·u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobilityTerms {
    pub f_const: f64,
    pub f_slope: f64,
    pub g_slope: f64,
}

impl MobilityTerms {
    pub fn f(&self, u: f64) -> f64 {
        self.f_const + self.f_slope * u
    }

    pub fn g(&self, u: f64) -> f64 {
        self.g_slope * u
    }
}

pub fn mobility_terms(params: &ModelParams, b: f64, z: f64) -> Result<MobilityTerms> {
    params.validate()?;
    let s = SPHERE_AREA;
    let n = params.dim as f64;
    let a = params.alpha;
    Ok(MobilityTerms {
        f_const: (a - 1.0) * n * (1.0 - params.zeta * params.nu1) / (params.sigma0 * s),
        f_slope: params.collision_prefactor.value() * b * params.c0 / (s * s),
        g_slope: (1.0 - params.zeta) * s * z * (a - 1.0) / params.sigma0,
    })
}

fn check_normalized(density: &dyn Fn(f64) -> f64) -> Result<()> {
    let total = integrate(density, -PI, PI, ABS_TOL, REL_TOL)?.value;
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::NotNormalized { integral: total });
    }
    Ok(())
}

/// `z = ∫ Φ(cos s) cos s ds` for an arbitrary density of the angle `s`.
pub fn closure_z_density(density: &dyn Fn(f64) -> f64) -> Result<f64> {
    check_normalized(density)?;
    Ok(integrate(|s| density(s) * s.cos(), -PI, PI, ABS_TOL, REL_TOL)?.value)
}

pub fn closure_z(law: &DirectionLaw) -> Result<f64> {
    law.integrate_moment(f64::cos)
}

/// Coefficients of the hyperbolic (swarming) system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicCoeffs {
    pub cc0: f64,
    pub cc1: f64,
    pub cc2: f64,
    pub a0: f64,
    pub a1: f64,
    pub a3: f64,
    /// Set when `|C0|` is below [`DEGENERATE_C0`].
    pub degenerate: bool,
}

pub fn hyperbolic_coeffs(law: &DirectionLaw, zeta: f64, c0: f64) -> Result<HyperbolicCoeffs> {
    if !(0.0..=1.0).contains(&zeta) {
        return Err(Error::invalid("zeta", format!("{zeta} not in [0, 1]")));
    }
    let z = closure_z(law)?;
    let a0 = law.integrate_moment(|s| s.cos().powi(2))?;
    let a1 = law.integrate_moment(|s| s.sin().powi(2))?;
    let a3 = a0 - a1;
    let cc0 = z * (1.0 - zeta);
    Ok(HyperbolicCoeffs {
        cc0,
        cc1: c0 * (1.0 - zeta) * a3,
        cc2: c0 * (1.0 - zeta) * a1 + c0 * PI * zeta,
        a0,
        a1,
        a3,
        degenerate: cc0.abs() < DEGENERATE_C0,
    })
}

/// `b = ∫_S |θ₁ − θ₂| dθ₂`, which is `∫_0^{2π} 2|sin(s/2)| ds` on the circle.
pub fn collision_b(dim: usize) -> Result<f64> {
    if dim != 2 {
        return Err(Error::UnsupportedDimension(dim));
    }
    Ok(integrate_default(|s| 2.0 * (0.5 * s).sin().abs(), 0.0, 2.0 * PI)?.value)
}

/// Leading coefficients `A`, `B` of the run-time operator expansion.
pub fn laplace_ab(alpha: f64, sigma0: f64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    if !(sigma0 > 0.0) {
        return Err(Error::invalid(
            "sigma0",
            format!("{sigma0} must be positive"),
        ));
    }
    let a = (alpha - 1.0) / sigma0;
    let b = -sigma0.powf(alpha - 2.0) * (alpha - 1.0).powi(2) * gamma(1.0 - alpha);
    Ok((a, b))
}

/// All derived constants for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosureCoeffs {
    /// Order of the fractional operator.
    pub alpha: f64,
    /// Scaled speed, carried for the hyperbolic transport term.
    pub c0: f64,
    pub c_alpha: f64,
    pub f_const: f64,
    pub f_slope: f64,
    pub g_slope: f64,
    pub z: f64,
    pub a0: f64,
    pub a1: f64,
    pub a3: f64,
    pub cc0: f64,
    pub cc1: f64,
    pub cc2: f64,
    pub b: f64,
    pub big_a: f64,
    pub big_b: f64,
    pub s_area: f64,
    pub hyperbolic_degenerate: bool,
}

impl ClosureCoeffs {
    pub fn compute(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let law = params.align_law();
        let b = collision_b(params.dim)?;
        let z = closure_z(&law)?;
        let mobility = mobility_terms(params, b, z)?;
        let hyper = hyperbolic_coeffs(&law, params.zeta, params.c0)?;
        let (big_a, big_b) = laplace_ab(params.alpha, params.sigma0)?;
        Ok(ClosureCoeffs {
            alpha: params.alpha,
            c0: params.c0,
            c_alpha: diffusion_constant(params)?,
            f_const: mobility.f_const,
            f_slope: mobility.f_slope,
            g_slope: mobility.g_slope,
            z,
            a0: hyper.a0,
            a1: hyper.a1,
            a3: hyper.a3,
            cc0: hyper.cc0,
            cc1: hyper.cc1,
            cc2: hyper.cc2,
            b,
            big_a,
            big_b,
            s_area: SPHERE_AREA,
            hyperbolic_degenerate: hyper.degenerate,
        })
    }

    pub fn mobility(&self) -> MobilityTerms {
        MobilityTerms {
            f_const: self.f_const,
            f_slope: self.f_slope,
            g_slope: self.g_slope,
        }
    }

    pub fn hyperbolic(&self) -> HyperbolicCoeffs {
        HyperbolicCoeffs {
            cc0: self.cc0,
            cc1: self.cc1,
            cc2: self.cc2,
            a0: self.a0,
            a1: self.a1,
            a3: self.a3,
            degenerate: self.hyperbolic_degenerate,
        }
    }
}
