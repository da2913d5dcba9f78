//! Integral functionals of a test function, reduced to radial integrals.
//!
//! For `u = Σ a_n(r) P_n(σ)` with orthonormal harmonics,
//! `|∇u|² = Σ a_n'² P_n² + (a_n²/ψ²)|∇_σ P_n|²` integrates mode by mode:
//! every functional here is a sum of one radial integral per term.
//! Constants from the inequalities are left to the caller.

use crate::error::Result;
use crate::profiles::{Term, TestFunction};
use crate::quadrature::{integrate_radial, QuadratureSpec};

/// Value of a functional with its per-mode split.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalValue {
    pub value: f64,
    /// `(n, contribution)` in the order the terms were given.
    pub per_mode: Vec<(usize, f64)>,
    pub quadrature_converged: bool,
    pub panels: usize,
    pub error_estimate: f64,
}

impl FunctionalValue {
    pub fn zero() -> Self {
        Self {
            value: 0.0,
            per_mode: Vec::new(),
            quadrature_converged: true,
            panels: 0,
            error_estimate: 0.0,
        }
    }

    /// Contribution of degree `n` (zero when absent).
    pub fn mode(&self, n: usize) -> f64 {
        self.per_mode.iter().find(|(m, _)| *m == n).map_or(0.0, |(_, v)| *v)
    }

    /// `Σ c(n) · contribution_n`.
    pub fn weighted_sum(&self, c: impl Fn(usize) -> f64) -> f64 {
        self.per_mode.iter().map(|&(n, v)| c(n) * v).sum()
    }
}

/// One radial integral per term of `u` over that term's support; `integrand`
/// receives `(term, r, a, a')` and must include the volume density.
fn modewise<F>(u: &TestFunction, spec: &QuadratureSpec, integrand: F) -> Result<FunctionalValue>
where
    F: Fn(&Term, f64, f64, f64) -> f64,
{
    let mut out = FunctionalValue::zero();
    for term in u.terms() {
        let support = term.profile.support();
        let res = integrate_radial(
            |r| {
                let (a, da) = term.profile.jet(r);
                if a == 0.0 && da == 0.0 {
                    return 0.0;
                }
                integrand(term, r, a, da)
            },
            support,
            spec,
        )?;
        out.per_mode.push((term.mode.n, res.value));
        out.quadrature_converged &= res.converged;
        out.panels += res.panels_used;
        out.error_estimate += res.error_estimate;
    }
    out.value = out.per_mode.iter().map(|(_, v)| v).sum();
    Ok(out)
}

/// `∫ V |∇u|² dv = Σ ∫ V (a_n'² + λ_n a_n²/ψ²) ψ^{N-1} dr`.
pub fn dirichlet(u: &TestFunction, v: impl Fn(f64) -> f64, spec: &QuadratureSpec) -> Result<FunctionalValue> {
    let m = u.manifold();
    modewise(u, spec, |t, r, a, da| {
        let psi = m.psi(r);
        v(r) * (da * da + t.mode.lambda() * a * a / (psi * psi)) * m.volume_density(r)
    })
}

/// `∫ V (∂u/∂r)² dv`.
pub fn radial_dirichlet(u: &TestFunction, v: impl Fn(f64) -> f64, spec: &QuadratureSpec) -> Result<FunctionalValue> {
    let m = u.manifold();
    modewise(u, spec, |_, r, _, da| v(r) * da * da * m.volume_density(r))
}

/// `∫ W u² dv`.
pub fn mass(u: &TestFunction, w: impl Fn(f64) -> f64, spec: &QuadratureSpec) -> Result<FunctionalValue> {
    let m = u.manifold();
    modewise(u, spec, |_, r, a, _| w(r) * a * a * m.volume_density(r))
}

/// `∫ V u²/ψ² dv`.
pub fn mass_over_psi2(u: &TestFunction, v: impl Fn(f64) -> f64, spec: &QuadratureSpec) -> Result<FunctionalValue> {
    let m = u.manifold();
    modewise(u, spec, |_, r, a, _| {
        let psi = m.psi(r);
        v(r) * a * a / (psi * psi) * m.volume_density(r)
    })
}

/// `∫ V f² |∇_r(u/f)|² dv` for `f > 0`, given `log_deriv = f'/f`.
///
/// Uses `f² (d/dr(a/f))² = (a' - a f'/f)²`, which never forms `a/f`.
pub fn remainder(
    u: &TestFunction,
    v: impl Fn(f64) -> f64,
    log_deriv: impl Fn(f64) -> f64,
    spec: &QuadratureSpec,
) -> Result<FunctionalValue> {
    let m = u.manifold();
    modewise(u, spec, |_, r, a, da| {
        let d = da - a * log_deriv(r);
        v(r) * d * d * m.volume_density(r)
    })
}

/// `∫ V f² |∇(u/f)|² dv` with the full gradient: [`remainder`] plus the
/// angular part `Σ λ_n ∫ V a_n²/ψ² dv`.
pub fn remainder_full(
    u: &TestFunction,
    v: impl Fn(f64) -> f64,
    log_deriv: impl Fn(f64) -> f64,
    spec: &QuadratureSpec,
) -> Result<FunctionalValue> {
    let m = u.manifold();
    modewise(u, spec, |t, r, a, da| {
        let d = da - a * log_deriv(r);
        let psi = m.psi(r);
        v(r) * (d * d + t.mode.lambda() * a * a / (psi * psi)) * m.volume_density(r)
    })
}

/// `∫ V (f'/f)(ψ'/ψ - 1/r) u² dv`; on hyperbolic space `ψ'/ψ = coth r`.
pub fn coth_term(
    u: &TestFunction,
    v: impl Fn(f64) -> f64,
    log_deriv: impl Fn(f64) -> f64,
    spec: &QuadratureSpec,
) -> Result<FunctionalValue> {
    let m = u.manifold();
    if m.is_euclidean() {
        return Ok(zero_like(u));
    }
    modewise(u, spec, |_, r, a, _| {
        v(r) * log_deriv(r) * m.log_psi_prime_minus_inv(r) * a * a * m.volume_density(r)
    })
}

fn zero_like(u: &TestFunction) -> FunctionalValue {
    FunctionalValue {
        per_mode: u.terms().iter().map(|t| (t.mode.n, 0.0)).collect(),
        ..FunctionalValue::zero()
    }
}

/// The three integrals of the CKN inequalities.
#[derive(Debug, Clone, PartialEq)]
pub struct CknTerms {
    /// `∫ r^{-α} (∂u/∂r)² dv`
    pub radial_energy: FunctionalValue,
    /// `∫ r^{α-2β+2} u² dv`
    pub weighted_mass: FunctionalValue,
    /// `∫ r^{-β} u² dv`
    pub mass: FunctionalValue,
}

pub fn ckn_terms(u: &TestFunction, alpha: f64, beta: f64, spec: &QuadratureSpec) -> Result<CknTerms> {
    Ok(CknTerms {
        radial_energy: radial_dirichlet(u, |r| r.powf(-alpha), spec)?,
        weighted_mass: mass(u, |r| r.powf(alpha - 2.0 * beta + 2.0), spec)?,
        mass: mass(u, |r| r.powf(-beta), spec)?,
    })
}

/// `D_m(u) = ∫ u u_r r^{1-m} dv + ((N-m)/2) ∫ u² r^{-m} dv`.
///
/// Integration by parts makes this vanish when `dv = r^{N-1} dr dσ`; on
/// other models it measures the failure of that step.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceResidual {
    pub value: f64,
    /// `∫ u u_r r^{1-m} dv`
    pub flux: FunctionalValue,
    /// `((N-m)/2) ∫ u² r^{-m} dv`
    pub mass: FunctionalValue,
    /// `∫ |u u_r| r^{1-m} dv`, the size of the flux integrand.
    pub flux_magnitude: f64,
}

impl DivergenceResidual {
    pub fn scale(&self) -> f64 {
        self.flux_magnitude + self.mass.value.abs()
    }

    pub fn converged(&self) -> bool {
        self.flux.quadrature_converged && self.mass.quadrature_converged
    }
}

pub fn divergence_residual(u: &TestFunction, m_exp: f64, spec: &QuadratureSpec) -> Result<DivergenceResidual> {
    let m = u.manifold();
    let c = (u.dimension() as f64 - m_exp) / 2.0;
    let flux = modewise(u, spec, |_, r, a, da| a * da * r.powf(1.0 - m_exp) * m.volume_density(r))?;
    let mass = modewise(u, spec, |_, r, a, _| c * a * a * r.powf(-m_exp) * m.volume_density(r))?;
    let magnitude = modewise(u, spec, |_, r, a, da| (a * da).abs() * r.powf(1.0 - m_exp) * m.volume_density(r))?;
    Ok(DivergenceResidual {
        value: flux.value + mass.value,
        flux,
        mass,
        flux_magnitude: magnitude.value,
    })
}
