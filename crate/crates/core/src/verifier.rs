//! Assembles each inequality or identity from functional values and judges
//! it numerically.
//!
//! Every report lists its assembled summands in `terms` (so that
//! `scale = Σ |terms|`), the two sides, the gap or residual, and any
//! secondary checks. Informational values that are not summands go to
//! `extras`.

use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;

use crate::besselpairs::{poincare_pair, power_pair, BesselPair, PoincareWeight};
use crate::error::{Error, Result};
use crate::functionals::{
    ckn_terms, coth_term, dirichlet, divergence_residual, mass, mass_over_psi2, radial_dirichlet, remainder,
    remainder_full, FunctionalValue,
};
use crate::geometry::{coth_minus_inv, mode_eigenvalue};
use crate::profiles::TestFunction;
use crate::quadrature::QuadratureSpec;

/// Relative tolerance for identities.
pub const IDENTITY_TOL: f64 = 1e-6;
/// Inequalities fail only below `-INEQUALITY_TOL · scale`.
pub const INEQUALITY_TOL: f64 = 1e-9;
/// Tolerance for the exact mode-wise surplus of the ground-state inequality.
pub const SURPLUS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Eq12,
    Thm21,
    Thm22,
    Cor23,
    Cor23Remark,
    Cor24,
    Ckn25,
    Ckn26,
    Model27,
    Model28,
}

impl Target {
    pub const ALL: [Target; 10] = [
        Target::Eq12,
        Target::Thm21,
        Target::Thm22,
        Target::Cor23,
        Target::Cor23Remark,
        Target::Cor24,
        Target::Ckn25,
        Target::Ckn26,
        Target::Model27,
        Target::Model28,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Target::Eq12 => "eq12",
            Target::Thm21 => "thm21",
            Target::Thm22 => "thm22",
            Target::Cor23 => "cor23",
            Target::Cor23Remark => "cor23_remark",
            Target::Cor24 => "cor24",
            Target::Ckn25 => "ckn25",
            Target::Ckn26 => "ckn26",
            Target::Model27 => "model27",
            Target::Model28 => "model28",
        }
    }
}

impl std::str::FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Target::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::invalid("target", format!("unknown target `{s}`")))
    }
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Inequality,
    Identity,
    Measured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Measured,
}

/// Ordered name → value map, serialized as a JSON object in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Terms(Vec<(String, f64)>);

impl Terms {
    pub fn push(&mut self, name: impl Into<String>, value: f64) {
        self.0.push((name.into(), value));
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(n, v)| (n.as_str(), *v))
    }

    pub fn abs_sum(&self) -> f64 {
        self.0.iter().map(|(_, v)| v.abs()).sum()
    }
}

impl Serialize for Terms {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Parameters {
    #[serde(rename = "N")]
    pub dimension: usize,
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub j: Option<i64>,
    pub manifold: String,
}

impl Parameters {
    fn of(u: &TestFunction) -> Self {
        Self {
            dimension: u.dimension(),
            lambda: None,
            alpha: None,
            beta: None,
            j: None,
            manifold: u.manifold().name().to_string(),
        }
    }
}

/// A secondary assertion carried by a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub kind: Kind,
    pub value: f64,
    pub scale: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn identity(name: &str, value: f64, scale: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            kind: Kind::Identity,
            value,
            scale,
            tolerance,
            passed: value.abs() <= tolerance * scale,
        }
    }

    fn inequality(name: &str, gap: f64, scale: f64) -> Self {
        Self {
            name: name.to_string(),
            kind: Kind::Inequality,
            value: gap,
            scale,
            tolerance: INEQUALITY_TOL,
            passed: gap >= -INEQUALITY_TOL * scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureInfo {
    pub rel_tol: f64,
    pub panels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub target: Target,
    pub parameters: Parameters,
    pub terms: Terms,
    pub extras: Terms,
    pub lhs: f64,
    pub rhs: f64,
    pub gap_or_residual: f64,
    pub kind: Kind,
    pub verdict: Verdict,
    pub scale: f64,
    pub tolerance: f64,
    pub checks: Vec<Check>,
    pub quadrature: QuadratureInfo,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.verdict != Verdict::Fail
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("reports contain only finite-or-null numbers and strings")
    }
}

/// Collects functional values while tracking quadrature work.
struct Ledger<'a> {
    spec: &'a QuadratureSpec,
    support: (f64, f64),
    panels: usize,
}

impl<'a> Ledger<'a> {
    fn new(u: &TestFunction, spec: &'a QuadratureSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            support: u.support().unwrap_or((0.0, 0.0)),
            panels: 0,
        })
    }

    fn take(&mut self, fv: Result<FunctionalValue>) -> Result<FunctionalValue> {
        let fv = fv?;
        self.panels += fv.panels;
        if !fv.quadrature_converged {
            return Err(Error::QuadratureNotConverged {
                a: self.support.0,
                b: self.support.1,
                error_estimate: fv.error_estimate,
                panels: fv.panels,
            });
        }
        Ok(fv)
    }
}

struct Draft {
    target: Target,
    parameters: Parameters,
    terms: Terms,
    extras: Terms,
    lhs: f64,
    rhs: f64,
    kind: Kind,
    checks: Vec<Check>,
}

impl Draft {
    fn new(target: Target, parameters: Parameters, kind: Kind) -> Self {
        Self {
            target,
            parameters,
            terms: Terms::default(),
            extras: Terms::default(),
            lhs: 0.0,
            rhs: 0.0,
            kind,
            checks: Vec::new(),
        }
    }

    fn finish(self, ledger: &Ledger) -> VerificationReport {
        let scale = self.terms.abs_sum();
        let gap = self.lhs - self.rhs;
        let (tolerance, primary_ok) = match self.kind {
            Kind::Identity => (IDENTITY_TOL, gap.abs() <= IDENTITY_TOL * scale),
            Kind::Inequality => (INEQUALITY_TOL, gap >= -INEQUALITY_TOL * scale),
            Kind::Measured => (0.0, true),
        };
        let verdict = if self.kind == Kind::Measured {
            Verdict::Measured
        } else if primary_ok && self.checks.iter().all(|c| c.passed) {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        VerificationReport {
            target: self.target,
            parameters: self.parameters,
            terms: self.terms,
            extras: self.extras,
            lhs: self.lhs,
            rhs: self.rhs,
            gap_or_residual: gap,
            kind: self.kind,
            verdict,
            scale,
            tolerance,
            checks: self.checks,
            quadrature: QuadratureInfo {
                rel_tol: ledger.spec.rel_tol,
                panels: ledger.panels,
            },
        }
    }
}

fn require_hyperbolic(u: &TestFunction, target: Target) -> Result<()> {
    if u.manifold().is_hyperbolic() {
        Ok(())
    } else {
        Err(Error::ManifoldMismatch(format!(
            "{target} is stated on hyperbolic space, got `{}`",
            u.manifold().name()
        )))
    }
}

fn require_subspace(u: &TestFunction, j: i64) -> Result<()> {
    if j < -1 {
        return Err(Error::invalid("j", format!("subspace index must be >= -1, got {j}")));
    }
    if !u.lies_in(j) {
        return Err(Error::invalid(
            "modes",
            format!("test function has mode {:?} below j + 1 = {}", u.min_mode(), j + 1),
        ));
    }
    Ok(())
}

fn check_pair(u: &TestFunction, pair: &BesselPair) -> Result<()> {
    if pair.dimension() != u.dimension() {
        return Err(Error::invalid(
            "N",
            format!("pair dimension {} differs from N = {}", pair.dimension(), u.dimension()),
        ));
    }
    if let Some((s0, s1)) = u.support() {
        let (lo, hi) = pair.interval();
        if !(s0 >= lo && s1 <= hi) {
            return Err(Error::invalid(
                "support",
                format!("support ({s0}, {s1}) leaves the pair's interval ({lo}, {hi})"),
            ));
        }
    }
    Ok(())
}

/// `λ_{j+1} = (j+1)(N+j-1)`, the smallest harmonic eigenvalue in `H_j`.
pub fn subspace_constant(dimension: usize, j: i64) -> f64 {
    let j = j as f64;
    (j + 1.0) * (dimension as f64 + j - 1.0)
}

fn lambda_n(dimension: usize, n: usize) -> f64 {
    mode_eigenvalue(dimension, n).map(|v| v as f64).unwrap_or(f64::INFINITY)
}

/// Identity obtained from the ground state `Ψ_λ` on hyperbolic space, with
/// the full-gradient remainder.
pub fn verify_eq12(u: &TestFunction, lambda: f64, spec: &QuadratureSpec) -> Result<VerificationReport> {
    require_hyperbolic(u, Target::Eq12)?;
    let pw = PoincareWeight::new(u.dimension(), lambda)?;
    let mut l = Ledger::new(u, spec)?;
    let n = u.dimension() as f64;
    let (g, h) = (pw.gamma(), pw.h());
    let ld = |r: f64| pw.log_derivative(r);

    let energy = l.take(dirichlet(u, |_| 1.0, spec))?.value;
    let m = l.take(mass(u, |_| 1.0, spec))?.value;
    let hardy = l.take(mass(u, |r| 1.0 / (r * r), spec))?.value;
    let sinh = l.take(mass_over_psi2(u, |_| 1.0, spec))?.value;
    let curv = l.take(mass(u, |r| coth_minus_inv(r) / r, spec))?.value;
    let rem = l.take(remainder_full(u, |_| 1.0, ld, spec))?.value;

    let mut params = Parameters::of(u);
    params.lambda = Some(lambda);
    let mut d = Draft::new(Target::Eq12, params, Kind::Identity);
    d.terms.push("dirichlet", energy);
    d.terms.push("lambda_mass", lambda * m);
    d.terms.push("hardy", h * h * hardy);
    d.terms.push("sinh", ((n - 2.0).powi(2) / 4.0 - h * h) * sinh);
    d.terms.push("curvature", g * h * curv);
    d.terms.push("remainder", rem);
    d.lhs = energy;
    d.rhs = lambda * m + h * h * hardy + ((n - 2.0).powi(2) / 4.0 - h * h) * sinh + g * h * curv + rem;
    Ok(d.finish(&l))
}

fn ground_state(
    u: &TestFunction,
    pair: &BesselPair,
    j: i64,
    target: Target,
    spec: &QuadratureSpec,
) -> Result<VerificationReport> {
    require_subspace(u, j)?;
    check_pair(u, pair)?;
    let mut l = Ledger::new(u, spec)?;
    let dim = u.dimension();
    let v = |r: f64| pair.v(r);
    let ld = |r: f64| pair.log_derivative(r);

    let energy = l.take(dirichlet(u, v, spec))?.value;
    let w_mass = l.take(mass(u, |r| pair.w(r), spec))?.value;
    let mpsi2 = l.take(mass_over_psi2(u, v, spec))?;
    let rem = l.take(remainder(u, v, ld, spec))?.value;
    let curv = l.take(coth_term(u, v, ld, spec))?.value;

    let lj = subspace_constant(dim, j);
    let nm1 = dim as f64 - 1.0;
    let mut params = Parameters::of(u);
    params.j = Some(j);
    let mut d = Draft::new(target, params, Kind::Inequality);
    d.terms.push("dirichlet", energy);
    d.terms.push("potential", w_mass);
    d.terms.push("subspace", lj * mpsi2.value);
    d.terms.push("remainder", rem);
    d.terms.push("curvature", -nm1 * curv);
    d.lhs = energy;
    d.rhs = w_mass + lj * mpsi2.value + rem - nm1 * curv;

    let surplus = mpsi2.weighted_sum(|n| lambda_n(dim, n) - lj);
    d.extras.push("surplus", surplus);
    let scale = d.terms.abs_sum();
    d.checks.push(Check::identity("gap_equals_surplus", d.lhs - d.rhs - surplus, scale, SURPLUS_TOL));
    Ok(d.finish(&l))
}

/// Ground-state inequality on hyperbolic space for `u ∈ H_j` and a Bessel
/// pair. Besides the sign of the gap, checks that it equals the mode-wise
/// surplus `Σ (λ_n - λ_{j+1}) ∫ V a_n²/ψ² dv`.
pub fn verify_thm21(
    u: &TestFunction,
    pair: &BesselPair,
    j: i64,
    spec: &QuadratureSpec,
) -> Result<VerificationReport> {
    require_hyperbolic(u, Target::Thm21)?;
    ground_state(u, pair, j, Target::Thm21, spec)
}

/// The same inequality on any model manifold, with `coth r` replaced by
/// `ψ'/ψ` and `sinh r` by `ψ`.
pub fn verify_model(
    u: &TestFunction,
    pair: &BesselPair,
    j: i64,
    spec: &QuadratureSpec,
) -> Result<VerificationReport> {
    ground_state(u, pair, j, Target::Model27, spec)
}

fn angular(
    u: &TestFunction,
    v: impl Fn(f64) -> f64 + Copy,
    j: i64,
    target: Target,
    spec: &QuadratureSpec,
) -> Result<VerificationReport> {
    require_subspace(u, j)?;
    let mut l = Ledger::new(u, spec)?;
    let dim = u.dimension();
    let energy = l.take(dirichlet(u, v, spec))?.value;
    let radial = l.take(radial_dirichlet(u, v, spec))?.value;
    let mpsi2 = l.take(mass_over_psi2(u, v, spec))?;
    let lj = subspace_constant(dim, j);
    let exact = mpsi2.weighted_sum(|n| lambda_n(dim, n));

    let mut params = Parameters::of(u);
    params.j = Some(j);
    let mut d = Draft::new(target, params, Kind::Identity);
    d.terms.push("dirichlet", energy);
    d.terms.push("radial_dirichlet", -radial);
    d.terms.push("modewise", exact);
    d.lhs = energy - radial;
    d.rhs = exact;
    d.extras.push("stated_rhs", lj * mpsi2.value);
    d.extras.push("stated_gap", d.lhs - lj * mpsi2.value);
    let scale = energy.abs() + radial.abs() + (lj * mpsi2.value).abs();
    d.checks.push(Check::inequality("stated_form", d.lhs - lj * mpsi2.value, scale));
    Ok(d.finish(&l))
}

/// Angular energy identity on hyperbolic space:
/// `∫ V|∇u|² - ∫ V u_r² = Σ λ_n ∫ V a_n²/ψ² dv`. The stated form with
/// `λ_{j+1}` in place of every `λ_n` is carried as an inequality check.
pub fn verify_thm22(
    u: &TestFunction,
    v: impl Fn(f64) -> f64 + Copy,
    j: i64,
    spec: &QuadratureSpec,
) -> Result<VerificationReport> {
    require_hyperbolic(u, Target::Thm22)?;
    angular(u, v, j, Target::Thm22, spec)
}

/// [`verify_thm22`] on any model manifold.
pub fn verify_model_identity(
    u: &TestFunction,
    v: impl Fn(f64) -> f64 + Copy,
    j: i64,
    spec: &QuadratureSpec,
) -> Result<VerificationReport> {
    angular(u, v, j, Target::Model28, spec)
}

/// Improved Poincaré–Hardy inequality on `H_j`, from the pair
/// `(1, W_λ)`. The remainder is the radial one, as produced by the
/// ground-state inequality; its full-gradient excess is reported in
/// `extras`.
pub fn verify_cor23(u: &TestFunction, lambda: f64, j: i64, spec: &QuadratureSpec) -> Result<VerificationReport> {
    require_hyperbolic(u, Target::Cor23)?;
    require_subspace(u, j)?;
    let pw = PoincareWeight::new(u.dimension(), lambda)?;
    let mut l = Ledger::new(u, spec)?;
    let dim = u.dimension();
    let n = dim as f64;
    let (g, h) = (pw.gamma(), pw.h());
    let jf = j as f64;
    let ld = |r: f64| pw.log_derivative(r);

    let energy = l.take(dirichlet(u, |_| 1.0, spec))?.value;
    let m = l.take(mass(u, |_| 1.0, spec))?.value;
    let hardy = l.take(mass(u, |r| 1.0 / (r * r), spec))?.value;
    let sinh = l.take(mass_over_psi2(u, |_| 1.0, spec))?;
    let curv = l.take(mass(u, |r| coth_minus_inv(r) / r, spec))?.value;
    let rem = l.take(remainder(u, |_| 1.0, ld, spec))?.value;

    let coeff = n * n / 4.0 - h * h + jf * (n + jf);
    let mut params = Parameters::of(u);
    params.lambda = Some(lambda);
    params.j = Some(j);
    let mut d = Draft::new(Target::Cor23, params, Kind::Inequality);
    d.terms.push("dirichlet", energy);
    d.terms.push("lambda_mass", lambda * m);
    d.terms.push("hardy", h * h * hardy);
    d.terms.push("sinh", coeff * sinh.value);
    d.terms.push("curvature", g * h * curv);
    d.terms.push("remainder", rem);
    d.lhs = energy;
    d.rhs = lambda * m + h * h * hardy + coeff * sinh.value + g * h * curv + rem;
    d.extras.push("sinh_coefficient", coeff);
    d.extras.push("full_gradient_excess", sinh.weighted_sum(|k| lambda_n(dim, k)));
    let surplus = sinh.weighted_sum(|k| lambda_n(dim, k) - subspace_constant(dim, j));
    d.extras.push("surplus", surplus);
    Ok(d.finish(&l))
}

/// `∫ |∇u|² ≥ (N²/4) ∫ u²/r²` for `u ∈ H_0` on hyperbolic space.
pub fn verify_cor23_remark(u: &TestFunction, spec: &QuadratureSpec) -> Result<VerificationReport> {
    require_hyperbolic(u, Target::Cor23Remark)?;
    require_subspace(u, 0)?;
    let mut l = Ledger::new(u, spec)?;
    let n = u.dimension() as f64;
    let energy = l.take(dirichlet(u, |_| 1.0, spec))?.value;
    let hardy = l.take(mass(u, |r| 1.0 / (r * r), spec))?.value;
    let mut params = Parameters::of(u);
    params.lambda = Some(0.0);
    params.j = Some(0);
    let mut d = Draft::new(Target::Cor23Remark, params, Kind::Inequality);
    d.terms.push("dirichlet", energy);
    d.terms.push("hardy", n * n / 4.0 * hardy);
    d.lhs = energy;
    d.rhs = n * n / 4.0 * hardy;
    Ok(d.finish(&l))
}

/// Weighted Hardy inequality on `H_j` from the power pair with weight
/// `r^{-α}`; radial remainder as in [`verify_cor23`].
pub fn verify_cor24(u: &TestFunction, alpha: f64, j: i64, spec: &QuadratureSpec) -> Result<VerificationReport> {
    require_hyperbolic(u, Target::Cor24)?;
    require_subspace(u, j)?;
    let pair = power_pair(u.dimension(), alpha)?;
    let mut l = Ledger::new(u, spec)?;
    let dim = u.dimension();
    let n = dim as f64;
    let c = (n - alpha - 2.0) / 2.0;
    let v = |r: f64| r.powf(-alpha);
    let ld = |r: f64| pair.log_derivative(r);

    let energy = l.take(dirichlet(u, v, spec))?.value;
    let hardy = l.take(mass(u, |r| r.powf(-alpha - 2.0), spec))?.value;
    let sinh = l.take(mass_over_psi2(u, v, spec))?;
    let rem = l.take(remainder(u, v, ld, spec))?.value;
    let curv = l.take(mass(u, |r| coth_minus_inv(r) * r.powf(-alpha - 1.0), spec))?.value;

    let lj = subspace_constant(dim, j);
    let curv_coeff = (n - 1.0) * (n - alpha - 2.0) / 2.0;
    let mut params = Parameters::of(u);
    params.alpha = Some(alpha);
    params.j = Some(j);
    let mut d = Draft::new(Target::Cor24, params, Kind::Inequality);
    d.terms.push("dirichlet", energy);
    d.terms.push("hardy", c * c * hardy);
    d.terms.push("subspace", lj * sinh.value);
    d.terms.push("remainder", rem);
    d.terms.push("curvature", curv_coeff * curv);
    d.lhs = energy;
    d.rhs = c * c * hardy + lj * sinh.value + rem + curv_coeff * curv;
    d.extras.push("hardy_constant", c * c);
    d.extras.push("curvature_coefficient", curv_coeff);
    d.extras.push("full_gradient_excess", sinh.weighted_sum(|k| lambda_n(dim, k)));
    d.extras.push("surplus", sinh.weighted_sum(|k| lambda_n(dim, k) - lj));
    Ok(d.finish(&l))
}

/// `max{(N-β)²/4, (N-2α+β-4)²/4}`: the two discriminant bounds obtained
/// from `s = 0` and `s = N-α-2`.
pub fn ckn_constant(dimension: usize, alpha: f64, beta: f64) -> f64 {
    let n = dimension as f64;
    ((n - beta).powi(2) / 4.0).max((n - 2.0 * alpha + beta - 4.0).powi(2) / 4.0)
}

/// `max{(N-β)²/4, (N-2α-β-4)²/4}`, the variant with the sign of `β`
/// flipped in the second entry. Reported for comparison only.
pub fn ckn_constant_displayed(dimension: usize, alpha: f64, beta: f64) -> f64 {
    let n = dimension as f64;
    ((n - beta).powi(2) / 4.0).max((n - 2.0 * alpha - beta - 4.0).powi(2) / 4.0)
}

fn ckn_kind(u: &TestFunction) -> Kind {
    if u.manifold().is_euclidean() {
        Kind::Inequality
    } else {
        Kind::Measured
    }
}

fn ckn_params(u: &TestFunction, alpha: f64, beta: f64) -> Result<Parameters> {
    if !alpha.is_finite() {
        return Err(Error::invalid("alpha", "must be finite"));
    }
    if !beta.is_finite() {
        return Err(Error::invalid("beta", "must be finite"));
    }
    let mut p = Parameters::of(u);
    p.alpha = Some(alpha);
    p.beta = Some(beta);
    Ok(p)
}

fn push_divergence(d: &mut Draft, l: &mut Ledger, u: &TestFunction, m: f64, name: &str) -> Result<()> {
    let dr = divergence_residual(u, m, l.spec)?;
    l.take(Ok(dr.flux.clone()))?;
    l.take(Ok(dr.mass.clone()))?;
    d.extras.push(name, dr.value);
    d.extras.push(format!("{name}_scale"), dr.scale());
    Ok(())
}

/// CKN product inequality `A · I₂ ≥ C · I₃²`. A pass/fail verdict on the
/// Euclidean model; elsewhere the gap is `measured` together with the
/// divergence residuals `D_β` and `D_{α+2}` that the argument relies on.
pub fn verify_ckn(u: &TestFunction, alpha: f64, beta: f64, spec: &QuadratureSpec) -> Result<VerificationReport> {
    let params = ckn_params(u, alpha, beta)?;
    let mut l = Ledger::new(u, spec)?;
    let t = ckn_terms(u, alpha, beta, spec)?;
    let a = l.take(Ok(t.radial_energy))?.value;
    let i2 = l.take(Ok(t.weighted_mass))?.value;
    let i3 = l.take(Ok(t.mass))?.value;
    let dim = u.dimension();
    let c = ckn_constant(dim, alpha, beta);
    let c_disp = ckn_constant_displayed(dim, alpha, beta);

    let mut d = Draft::new(Target::Ckn25, params, ckn_kind(u));
    d.terms.push("energy_product", a * i2);
    d.terms.push("constant_term", c * i3 * i3);
    d.lhs = a * i2;
    d.rhs = c * i3 * i3;
    d.extras.push("radial_energy", a);
    d.extras.push("weighted_mass", i2);
    d.extras.push("mass", i3);
    d.extras.push("constant", c);
    d.extras.push("constant_displayed", c_disp);
    d.extras.push("gap_displayed", a * i2 - c_disp * i3 * i3);
    if !u.manifold().is_euclidean() {
        push_divergence(&mut d, &mut l, u, beta, "divergence_beta")?;
        push_divergence(&mut d, &mut l, u, alpha + 2.0, "divergence_alpha_plus_2")?;
    }
    Ok(d.finish(&l))
}

/// CKN identity with explicit remainder
/// `A·I₂ - ((N-β)²/4) I₃² = I₂ ∫ (r^{-α/2} u_r + t r^{α/2-β+1} u)² dv`,
/// `t = ((N-β)/2) I₃/I₂`. The variant with `-t` is reported in `extras`.
pub fn verify_ckn_remainder(
    u: &TestFunction,
    alpha: f64,
    beta: f64,
    spec: &QuadratureSpec,
) -> Result<VerificationReport> {
    let params = ckn_params(u, alpha, beta)?;
    let mut l = Ledger::new(u, spec)?;
    let n = u.dimension() as f64;
    let t = ckn_terms(u, alpha, beta, spec)?;
    let a = l.take(Ok(t.radial_energy))?.value;
    let i2 = l.take(Ok(t.weighted_mass))?.value;
    let i3 = l.take(Ok(t.mass))?.value;
    let tt = if i2 > 0.0 { (n - beta) / 2.0 * i3 / i2 } else { 0.0 };

    // (w1 a' + s t w2 a)² = w1² (a' - a ℓ)² with ℓ = -s t w2/w1
    let square = |sign: f64| {
        remainder(
            u,
            |r| r.powf(-alpha),
            move |r| -sign * tt * r.powf(alpha - beta + 1.0),
            spec,
        )
    };
    let rem = l.take(square(1.0))?.value;
    let rem_minus = l.take(square(-1.0))?.value;

    let kind = if u.manifold().is_euclidean() {
        Kind::Identity
    } else {
        Kind::Measured
    };
    let c = (n - beta).powi(2) / 4.0;
    let mut d = Draft::new(Target::Ckn26, params, kind);
    d.terms.push("energy_product", a * i2);
    d.terms.push("constant_term", -c * i3 * i3);
    d.terms.push("remainder", i2 * rem);
    d.lhs = a * i2 - c * i3 * i3;
    d.rhs = i2 * rem;
    d.extras.push("radial_energy", a);
    d.extras.push("weighted_mass", i2);
    d.extras.push("mass", i3);
    d.extras.push("t", tt);
    d.extras.push("remainder_opposite_sign", i2 * rem_minus);
    if !u.manifold().is_euclidean() {
        push_divergence(&mut d, &mut l, u, beta, "divergence_beta")?;
        push_divergence(&mut d, &mut l, u, alpha + 2.0, "divergence_alpha_plus_2")?;
    }
    Ok(d.finish(&l))
}

/// Pair `(1, W_λ)` used by [`verify_cor23`], exposed for custom runs.
pub fn poincare_ground_pair(dimension: usize, lambda: f64) -> Result<BesselPair> {
    Ok(poincare_pair(&PoincareWeight::new(dimension, lambda)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ModelManifold;
    use crate::profiles::{hardy_trial_profile, make_bump, make_testfunction, random_testfunction};
    use approx::assert_relative_eq;

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    fn hyp(n: usize) -> ModelManifold {
        ModelManifold::hyperbolic(n).unwrap()
    }

    fn bump_modes(m: &ModelManifold, modes: &[usize], j: i64) -> TestFunction {
        let terms = modes.iter().map(|&n| (n, make_bump(1.0, 3.0).unwrap())).collect();
        make_testfunction(m, terms, j).unwrap()
    }

    fn zero(m: &ModelManifold) -> TestFunction {
        make_testfunction(m, vec![], -1).unwrap()
    }

    #[test]
    fn eq12_is_an_identity() {
        let r = verify_eq12(&bump_modes(&hyp(3), &[0], -1), 0.0, &spec()).unwrap();
        assert_eq!(r.kind, Kind::Identity);
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(r.gap_or_residual.abs() <= 1e-6 * r.scale);

        let r = verify_eq12(&bump_modes(&hyp(3), &[0, 2], -1), 1.0, &spec()).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);

        let r = verify_eq12(&zero(&hyp(3)), 0.5, &spec()).unwrap();
        assert_eq!(r.gap_or_residual, 0.0);
        assert!(r.terms.iter().all(|(_, v)| v == 0.0));
    }

    #[test]
    fn eq12_rejects_bad_lambda_and_manifold() {
        assert!(matches!(
            verify_eq12(&bump_modes(&hyp(3), &[0], -1), 5.0, &spec()),
            Err(Error::InvalidParameter { field: "lambda", .. })
        ));
        let e = ModelManifold::euclidean(3).unwrap();
        assert!(matches!(
            verify_eq12(&bump_modes(&e, &[0], -1), 0.0, &spec()),
            Err(Error::ManifoldMismatch(_))
        ));
    }

    #[test]
    fn thm21_saturates_on_lowest_mode() {
        let pair = poincare_ground_pair(3, 0.4).unwrap();
        let r = verify_thm21(&bump_modes(&hyp(3), &[1], 0), &pair, 0, &spec()).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(r.gap_or_residual.abs() <= 1e-8 * r.scale, "{r:?}");
        assert_eq!(r.extras.get("surplus"), Some(0.0));
    }

    #[test]
    fn thm21_gap_matches_surplus() {
        let pair = poincare_ground_pair(3, 1.0).unwrap();
        let r = verify_thm21(&bump_modes(&hyp(3), &[1, 2], 0), &pair, 0, &spec()).unwrap();
        let surplus = r.extras.get("surplus").unwrap();
        assert!(surplus > 0.0);
        assert_relative_eq!(r.gap_or_residual, surplus, max_relative = 1e-8);

        let r = verify_thm21(&zero(&hyp(3)), &pair, 0, &spec()).unwrap();
        assert_eq!(r.gap_or_residual, 0.0);
    }

    #[test]
    fn thm21_checks_subspace() {
        let pair = poincare_ground_pair(3, 1.0).unwrap();
        assert!(verify_thm21(&bump_modes(&hyp(3), &[0, 1], -1), &pair, 0, &spec()).is_err());
    }

    #[test]
    fn thm22_exact_and_stated_forms() {
        let r = verify_thm22(&bump_modes(&hyp(3), &[1], 0), |_| 1.0, 0, &spec()).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(r.extras.get("stated_gap").unwrap().abs() <= 1e-8 * r.scale);

        let r = verify_thm22(&bump_modes(&hyp(3), &[1, 3], 0), |r: f64| 1.0 + r, 0, &spec()).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(r.extras.get("stated_gap").unwrap() > 1e-3 * r.scale);

        let r = verify_thm22(&bump_modes(&hyp(3), &[0], -1), |_| 1.0, -1, &spec()).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert_eq!(r.rhs, 0.0);
    }

    #[test]
    fn cor23_coefficient_and_sign() {
        for n in 2..6 {
            let r = verify_cor23(&bump_modes(&hyp(n), &[1], 0), 0.0, 0, &spec()).unwrap();
            assert!(r.extras.get("sinh_coefficient").unwrap().abs() < 1e-14);
        }
        let r = verify_cor23(&bump_modes(&hyp(3), &[1], 0), 0.5, 0, &spec()).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(r.gap_or_residual >= -1e-9 * r.scale);
    }

    #[test]
    fn cor23_full_gradient_variant_would_fail() {
        // adding the angular part of the remainder overshoots by λ_{j+1} Σ ∫ a²/ψ²
        let r = verify_cor23(&bump_modes(&hyp(3), &[1], 0), 0.5, 0, &spec()).unwrap();
        let excess = r.extras.get("full_gradient_excess").unwrap();
        assert!(r.gap_or_residual - excess < -1e-3 * r.scale);
    }

    #[test]
    fn remark_inequality_holds() {
        for n in 2..5 {
            let u = random_testfunction(&hyp(n), &[1, 2], (0.2, 3.0), 9, 0).unwrap();
            let r = verify_cor23_remark(&u, &spec()).unwrap();
            assert_eq!(r.verdict, Verdict::Pass);
        }
    }

    #[test]
    fn cor24_degenerate_weight() {
        let r = verify_cor24(&bump_modes(&hyp(4), &[1], 0), 2.0, 0, &spec()).unwrap();
        assert_eq!(r.extras.get("hardy_constant"), Some(0.0));
        assert_eq!(r.extras.get("curvature_coefficient"), Some(0.0));
        let r = verify_cor24(&bump_modes(&hyp(3), &[1], 0), 0.0, 0, &spec()).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        let r = verify_cor24(&zero(&hyp(3)), 0.0, 0, &spec()).unwrap();
        assert_eq!(r.gap_or_residual, 0.0);
    }

    #[test]
    fn ckn_euclidean() {
        let e = ModelManifold::euclidean(3).unwrap();
        let u = bump_modes(&e, &[0], -1);
        let r = verify_ckn_remainder(&u, 0.0, 2.0, &spec()).unwrap();
        assert_eq!(r.kind, Kind::Identity);
        assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
        let r = verify_ckn(&u, 0.0, 2.0, &spec()).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert_eq!(ckn_constant(3, 0.0, 2.0), 0.25);
        assert_eq!(ckn_constant_displayed(3, 0.0, 2.0), 2.25);

        let r = verify_ckn(&zero(&e), 0.0, 2.0, &spec()).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
    }

    #[test]
    fn ckn_displayed_constant_is_violated_by_hardy_trial() {
        // with α = 0, β = 2 the product inequality is Hardy's, sharp at 1/4
        let e = ModelManifold::euclidean(3).unwrap();
        let u = make_testfunction(&e, vec![(0, hardy_trial_profile(3, 1e-2).unwrap())], -1).unwrap();
        let r = verify_ckn(&u, 0.0, 2.0, &spec()).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(r.extras.get("gap_displayed").unwrap() < 0.0);
    }

    #[test]
    fn ckn_hyperbolic_is_measured() {
        let u = bump_modes(&hyp(3), &[0], -1);
        let r = verify_ckn_remainder(&u, 0.0, 2.0, &spec()).unwrap();
        assert_eq!(r.verdict, Verdict::Measured);
        let d2 = r.extras.get("divergence_beta").unwrap();
        assert!(d2.abs() > 0.0);
        // the identity fails by exactly -2 t I₂ D_β
        let t = r.extras.get("t").unwrap();
        let i2 = r.extras.get("weighted_mass").unwrap();
        assert_relative_eq!(r.gap_or_residual, -2.0 * t * i2 * d2, max_relative = 1e-7);
    }

    #[test]
    fn model_reports_match_hyperbolic_reports() {
        let pair = poincare_ground_pair(3, 0.3).unwrap();
        let u = bump_modes(&hyp(3), &[1, 2], 0);
        let a = verify_thm21(&u, &pair, 0, &spec()).unwrap();
        let b = verify_model(&u, &pair, 0, &spec()).unwrap();
        assert_eq!(a.terms, b.terms);
        assert_eq!(a.gap_or_residual, b.gap_or_residual);
    }

    #[test]
    fn model_euclidean_has_no_curvature_term() {
        let e = ModelManifold::euclidean(3).unwrap();
        let pair = power_pair(3, 0.0).unwrap();
        let r = verify_model(&bump_modes(&e, &[1], 0), &pair, 0, &spec()).unwrap();
        assert_eq!(r.terms.get("curvature").map(f64::abs), Some(0.0));
    }

    #[test]
    fn model_curvature_minus_four() {
        let m = ModelManifold::custom(
            3,
            "sinh(2r)/2",
            |r: f64| (2.0 * r).sinh() / 2.0,
            |r: f64| (2.0 * r).cosh(),
            |r: f64| 2.0 * (2.0 * r).sinh(),
        )
        .unwrap();
        let pair = power_pair(3, 0.0).unwrap();
        let r = verify_model(&bump_modes(&m, &[1], 0), &pair, 0, &spec()).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(r.gap_or_residual >= -1e-9 * r.scale);
    }

    #[test]
    fn reports_are_deterministic() {
        let u = random_testfunction(&hyp(4), &[0, 1, 3], (0.5, 5.0), 42, -1).unwrap();
        let a = verify_eq12(&u, 1.2, &spec()).unwrap().to_json();
        let b = verify_eq12(&u, 1.2, &spec()).unwrap().to_json();
        assert_eq!(a, b);
        assert!(a.starts_with("{\"target\":\"eq12\""));
    }

    #[test]
    fn target_names_round_trip() {
        for t in Target::ALL {
            assert_eq!(t.as_str().parse::<Target>().unwrap(), t);
            assert_eq!(serde_json::to_string(&t).unwrap(), format!("\"{}\"", t.as_str()));
        }
        assert!("thm99".parse::<Target>().is_err());
    }
}
