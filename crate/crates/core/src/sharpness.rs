//! Best-constant estimates for single-mode Rayleigh quotients
//!
//! `inf ∫ (V (a'² + λ_n a²/ψ²) + P a²) ψ^{N-1} dr / ∫ W a² ψ^{N-1} dr`
//!
//! discretized with piecewise-linear elements on a geometric mesh with
//! Dirichlet conditions at both ends. The smallest eigenvalue of the
//! resulting tridiagonal pencil is found by shifted inverse iteration, and
//! a ladder of levels is Richardson-extrapolated.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{mass, radial_dirichlet};
use crate::geometry::{Mode, ModelManifold, RadialFn};
use crate::profiles::{hardy_trial_profile, make_testfunction};
use crate::quadrature::{GaussLegendre, QuadratureSpec};

const ELEMENT_RULE: usize = 8;
const MAX_ITERATIONS: usize = 500;
const CONVERGENCE_TOL: f64 = 1e-10;

/// Symmetric tridiagonal matrix: `diag[i]` and `off[i] = M[i][i+1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self {
            diag: vec![0.0; n],
            off: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s += self.off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.off[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    fn quad(&self, x: &[f64]) -> f64 {
        dot(x, &self.mul(x))
    }

    fn scaled(&self, d: &[f64]) -> Self {
        Self {
            diag: self.diag.iter().zip(d).map(|(a, s)| a * s * s).collect(),
            off: self.off.iter().enumerate().map(|(i, a)| a * d[i] * d[i + 1]).collect(),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `LDLᵀ` factor of a symmetric tridiagonal matrix.
struct Ldl {
    d: Vec<f64>,
    l: Vec<f64>,
}

impl Ldl {
    fn new(t: &Tridiagonal) -> Self {
        let n = t.len();
        let mut d = Vec::with_capacity(n);
        let mut l = Vec::with_capacity(n.saturating_sub(1));
        let tiny = f64::EPSILON * t.diag.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
        let mut prev = t.diag[0];
        for i in 0..n {
            if i > 0 {
                let li = t.off[i - 1] / d[i - 1];
                l.push(li);
                prev = t.diag[i] - li * t.off[i - 1];
            }
            if prev == 0.0 {
                prev = tiny;
            }
            d.push(prev);
        }
        Self { d, l }
    }

    /// Number of negative pivots, i.e. eigenvalues below the shift.
    fn negative_count(&self) -> usize {
        self.d.iter().filter(|&&x| x < 0.0).count()
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.d.len();
        let mut x = b.to_vec();
        for i in 1..n {
            x[i] -= self.l[i - 1] * x[i - 1];
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.l[i] * x[i + 1];
        }
        x
    }
}

/// Checks that `m` is positive definite via its `LDLᵀ` pivots.
pub fn check_positive_definite(m: &Tridiagonal) -> Result<()> {
    if m.is_empty() {
        return Ok(());
    }
    let f = Ldl::new(m);
    match f.d.iter().position(|&x| !(x > 0.0)) {
        Some(row) => Err(Error::NotPositiveDefinite { row, pivot: f.d[row] }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub value: f64,
    /// Interior nodal values, normalized to `xᵀBx = 1` and positive sum.
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Smallest eigenvalue of `A x = μ B x` for symmetric tridiagonal `A` and
/// positive definite `B`.
///
/// Inverse iteration starting from shift 0; when the Rayleigh quotient
/// stagnates the shift moves toward it, and the inertia of `A - σB` keeps
/// the shift below the smallest eigenvalue.
pub fn smallest_eigenvalue(a: &Tridiagonal, b: &Tridiagonal) -> Result<Eigenpair> {
    let n = a.len();
    if n == 0 || b.len() != n {
        return Err(Error::invalid("matrix", "pencil must be non-empty and square"));
    }
    check_positive_definite(b)?;
    let s: Vec<f64> = b.diag.iter().map(|x| x.sqrt().recip()).collect();
    let a = a.scaled(&s);
    let b = b.scaled(&s);

    let shifted = |sigma: f64| Tridiagonal {
        diag: a.diag.iter().zip(&b.diag).map(|(x, y)| x - sigma * y).collect(),
        off: a.off.iter().zip(&b.off).map(|(x, y)| x - sigma * y).collect(),
    };

    let mut sigma = 0.0;
    let mut fact = Ldl::new(&shifted(sigma));
    let mut step = 1.0;
    while fact.negative_count() > 0 {
        sigma = -step;
        step *= 2.0;
        if !sigma.is_finite() {
            return Err(Error::invalid("matrix", "could not find a shift below the spectrum"));
        }
        fact = Ldl::new(&shifted(sigma));
    }

    let mut x = vec![1.0; n];
    let norm = b.quad(&x).sqrt();
    x.iter_mut().for_each(|v| *v /= norm);
    let mut mu = a.quad(&x);
    let mut last_change = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut y = fact.solve(&b.mul(&x));
        let norm = b.quad(&y).sqrt();
        y.iter_mut().for_each(|v| *v /= norm);
        x = y;
        let next = a.quad(&x);
        let change = (next - mu).abs();
        mu = next;
        if change <= CONVERGENCE_TOL * mu.abs() {
            converged = true;
            break;
        }
        if change > 0.1 * last_change && mu > sigma {
            let mut theta = 0.9;
            for _ in 0..20 {
                let candidate = sigma + theta * (mu - sigma);
                let f = Ldl::new(&shifted(candidate));
                if f.negative_count() == 0 {
                    sigma = candidate;
                    fact = f;
                    break;
                }
                theta *= 0.5;
            }
        }
        last_change = change;
    }

    let mut vector: Vec<f64> = x.iter().zip(&s).map(|(v, s)| v * s).collect();
    if vector.iter().sum::<f64>() < 0.0 {
        vector.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(Eigenpair {
        value: mu,
        vector,
        iterations,
        converged,
    })
}

/// `count` nodes `r_min (r_max/r_min)^{i/(count-1)}`.
pub fn geometric_mesh(r_min: f64, r_max: f64, count: usize) -> Result<Vec<f64>> {
    if !(r_min > 0.0 && r_max > r_min && r_max.is_finite()) {
        return Err(Error::invalid("domain", format!("need 0 < rmin < rmax, got ({r_min}, {r_max})")));
    }
    if count < 3 {
        return Err(Error::invalid("nodes", "need at least 3 nodes"));
    }
    let ratio = (r_max / r_min).ln() / (count - 1) as f64;
    Ok((0..count)
        .map(|i| match i {
            0 => r_min,
            _ if i + 1 == count => r_max,
            _ => r_min * (ratio * i as f64).exp(),
        })
        .collect())
}

/// `count` equally spaced nodes on `[a, b]`.
pub fn uniform_mesh(a: f64, b: f64, count: usize) -> Result<Vec<f64>> {
    if !(a >= 0.0 && b > a && b.is_finite()) {
        return Err(Error::invalid("domain", format!("need 0 <= a < b, got ({a}, {b})")));
    }
    if count < 3 {
        return Err(Error::invalid("nodes", "need at least 3 nodes"));
    }
    let h = (b - a) / (count - 1) as f64;
    Ok((0..count).map(|i| if i + 1 == count { b } else { a + h * i as f64 }).collect())
}

/// A single-mode Rayleigh quotient on a mesh with Dirichlet ends.
#[derive(Clone)]
pub struct RayleighProblem {
    pub manifold: ModelManifold,
    pub mode: Mode,
    /// Weight `V` of the Dirichlet energy.
    pub energy_weight: RadialFn,
    /// Extra zeroth-order numerator weight `P`.
    pub potential: Option<RadialFn>,
    /// Denominator weight `W`.
    pub denominator: RadialFn,
    pub mesh: Vec<f64>,
}

impl fmt::Debug for RayleighProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RayleighProblem")
            .field("manifold", &self.manifold)
            .field("mode", &self.mode)
            .field("nodes", &self.mesh.len())
            .field("domain", &self.domain())
            .finish()
    }
}

impl RayleighProblem {
    pub fn domain(&self) -> (f64, f64) {
        (self.mesh[0], self.mesh[self.mesh.len() - 1])
    }

    fn validate(&self) -> Result<()> {
        if self.mesh.len() < 3 {
            return Err(Error::invalid("nodes", "need at least 3 nodes"));
        }
        if !self.mesh.windows(2).all(|w| w[0] < w[1]) || !(self.mesh[0] >= 0.0) {
            return Err(Error::invalid("mesh", "nodes must be non-negative and strictly increasing"));
        }
        Ok(())
    }
}

/// Stiffness and mass matrices of `p` on its interior nodes.
pub fn assemble_forms(p: &RayleighProblem) -> Result<(Tridiagonal, Tridiagonal)> {
    p.validate()?;
    let m = p.mesh.len();
    let unknowns = m - 2;
    let mut a = Tridiagonal::zeros(unknowns);
    let mut b = Tridiagonal::zeros(unknowns);
    let rule = GaussLegendre::cached(ELEMENT_RULE);
    let lambda = p.mode.lambda();

    for e in 0..m - 1 {
        let (r0, r1) = (p.mesh[e], p.mesh[e + 1]);
        let h = r1 - r0;
        let (mut kv, mut k00, mut k01, mut k11) = (0.0, 0.0, 0.0, 0.0);
        let (mut b00, mut b01, mut b11) = (0.0, 0.0, 0.0);
        for (&x, &w) in rule.nodes().iter().zip(rule.weights()) {
            let r = r0 + 0.5 * h * (x + 1.0);
            let wt = 0.5 * h * w;
            let rho = p.manifold.volume_density(r);
            let v = (p.energy_weight)(r);
            let psi = p.manifold.psi(r);
            let mut q = v * lambda / (psi * psi);
            if let Some(pot) = &p.potential {
                q += pot(r);
            }
            let den = (p.denominator)(r);
            let (phi0, phi1) = ((r1 - r) / h, (r - r0) / h);
            let vals = [v * rho, q * rho, den * rho];
            if !vals.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFiniteIntegrand { r, value: vals.iter().sum() });
            }
            kv += wt * vals[0];
            k00 += wt * vals[1] * phi0 * phi0;
            k01 += wt * vals[1] * phi0 * phi1;
            k11 += wt * vals[1] * phi1 * phi1;
            b00 += wt * vals[2] * phi0 * phi0;
            b01 += wt * vals[2] * phi0 * phi1;
            b11 += wt * vals[2] * phi1 * phi1;
        }
        let stiff = kv / (h * h);
        // global node e ↦ unknown e - 1
        if e >= 1 {
            a.diag[e - 1] += stiff + k00;
            b.diag[e - 1] += b00;
        }
        if e < unknowns {
            a.diag[e] += stiff + k11;
            b.diag[e] += b11;
        }
        if e >= 1 && e < unknowns {
            a.off[e - 1] += -stiff + k01;
            b.off[e - 1] += b01;
        }
    }
    if let Some(row) = b.diag.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::invalid(
            "denominator",
            format!("weight is not positive near r = {}", p.mesh[row + 1]),
        ));
    }
    Ok((a, b))
}

/// One level of a refinement ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderLevel {
    pub nodes: usize,
    pub r_min: f64,
    pub r_max: f64,
}

/// How successive levels differ. Every kind doubles the node count; the
/// domain is either fixed, or its logarithmic extent doubles (about the
/// geometric centre, or toward zero with the outer end fixed) so that the
/// last level is the given domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LadderKind {
    Refine,
    Expand,
    ExpandInward,
}

pub fn ladder(kind: LadderKind, r_min: f64, r_max: f64, final_nodes: usize, levels: usize) -> Result<Vec<LadderLevel>> {
    if levels == 0 {
        return Err(Error::invalid("levels", "need at least one level"));
    }
    if !(r_min > 0.0 && r_max > r_min && r_max.is_finite()) {
        return Err(Error::invalid("rmin", format!("need 0 < rmin < rmax, got ({r_min}, {r_max})")));
    }
    let shrink = 1usize << (levels - 1);
    if final_nodes / shrink < 3 {
        return Err(Error::invalid("nodes", format!("{final_nodes} nodes cannot be halved {} times", levels - 1)));
    }
    let (lo, hi) = (r_min.ln(), r_max.ln());
    Ok((0..levels)
        .map(|k| {
            let frac = 0.5f64.powi((levels - 1 - k) as i32);
            let last = k + 1 == levels;
            let (a, b) = match kind {
                LadderKind::Refine => (r_min, r_max),
                LadderKind::Expand if !last => {
                    let c = 0.5 * (lo + hi);
                    let half = 0.5 * (hi - lo) * frac;
                    ((c - half).exp(), (c + half).exp())
                }
                LadderKind::ExpandInward if !last => ((hi - (hi - lo) * frac).exp(), r_max),
                _ => (r_min, r_max),
            };
            LadderLevel {
                nodes: final_nodes >> (levels - 1 - k),
                r_min: a,
                r_max: b,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantEstimate {
    /// Extrapolated value when there are at least two levels, else the
    /// single level's value.
    pub value: f64,
    pub levels: Vec<LadderLevel>,
    pub values_per_level: Vec<f64>,
    pub extrapolated: f64,
    pub trial_family_upper_bound: Option<f64>,
    /// Set when the ladder is not monotone beyond noise or an eigensolve
    /// hit its iteration limit.
    pub flagged: bool,
}

/// `μ_L + (μ_L - μ_{L-1})/3`: removes an error term that drops fourfold per level.
pub fn richardson(values: &[f64]) -> f64 {
    match values {
        [] => f64::NAN,
        [v] => *v,
        [.., p, l] => l + (l - p) / 3.0,
    }
}

/// Solves `template(level)` for every level (in parallel, results in
/// order) and extrapolates.
pub fn estimate_constant<F>(template: F, levels: &[LadderLevel]) -> Result<ConstantEstimate>
where
    F: Fn(&LadderLevel) -> Result<(RayleighProblem, fn(f64) -> f64)> + Sync,
{
    let solved: Vec<(f64, bool)> = levels
        .par_iter()
        .map(|lvl| {
            let (problem, to_constant) = template(lvl)?;
            let (a, b) = assemble_forms(&problem)?;
            let eig = smallest_eigenvalue(&a, &b)?;
            Ok((to_constant(eig.value), eig.converged))
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = solved.iter().map(|(v, _)| *v).collect();
    let mut flagged = solved.iter().any(|(_, c)| !c);
    let changes: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    if let [.., p, l] = changes[..] {
        let noise = 1e-9 * values.last().unwrap().abs();
        flagged |= l > p + noise;
    }
    let extrapolated = richardson(&values);
    Ok(ConstantEstimate {
        value: extrapolated,
        levels: levels.to_vec(),
        values_per_level: values,
        extrapolated,
        trial_family_upper_bound: None,
        flagged,
    })
}

/// Named best-constant problems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SharpnessTarget {
    /// `∫|∇u|² ≥ c ∫u²/r²` on Euclidean space.
    Hardy,
    /// `∫|∇u|² ≥ c ∫u²` on hyperbolic space.
    Poincare,
    /// `∫|∇u|² ≥ c ∫u²/r²` on hyperbolic space restricted to one mode `n ≥ 1`.
    H0Hardy,
    /// Radial CKN product `A · I₂ ≥ c I₃²`.
    Ckn { alpha: f64, beta: f64 },
}

impl SharpnessTarget {
    pub fn name(&self) -> &'static str {
        match self {
            SharpnessTarget::Hardy => "hardy",
            SharpnessTarget::Poincare => "poincare",
            SharpnessTarget::H0Hardy => "h0-hardy",
            SharpnessTarget::Ckn { .. } => "ckn",
        }
    }

    pub fn default_manifold(&self, dimension: usize) -> Result<ModelManifold> {
        match self {
            SharpnessTarget::Hardy | SharpnessTarget::Ckn { .. } => ModelManifold::euclidean(dimension),
            SharpnessTarget::Poincare | SharpnessTarget::H0Hardy => ModelManifold::hyperbolic(dimension),
        }
    }

    pub fn default_mode(&self) -> usize {
        match self {
            SharpnessTarget::H0Hardy => 1,
            _ => 0,
        }
    }

    /// Ladder used when none is given: the final level has 1600 nodes.
    pub fn default_ladder(&self) -> (LadderKind, f64, f64) {
        match self {
            SharpnessTarget::Hardy => (LadderKind::Expand, 1e-10, 1e10),
            SharpnessTarget::Poincare => (LadderKind::Refine, 1e-3, 40.0),
            SharpnessTarget::H0Hardy => (LadderKind::ExpandInward, 1e-20, 1.0),
            SharpnessTarget::Ckn { alpha, beta } if is_degenerate_ckn(*alpha, *beta) => {
                (LadderKind::Expand, 1e-10, 1e10)
            }
            SharpnessTarget::Ckn { .. } => (LadderKind::Refine, 1e-8, 40.0),
        }
    }
}

impl FromStr for SharpnessTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hardy" => Ok(SharpnessTarget::Hardy),
            "poincare" => Ok(SharpnessTarget::Poincare),
            "h0-hardy" => Ok(SharpnessTarget::H0Hardy),
            "ckn" => Ok(SharpnessTarget::Ckn { alpha: 0.0, beta: 0.0 }),
            _ => Err(Error::invalid("target", format!("unknown sharpness target `{s}`"))),
        }
    }
}

/// With `β = α + 2` the two masses coincide and the product inequality
/// reduces to the weighted Hardy quotient `A / I₃`.
fn is_degenerate_ckn(alpha: f64, beta: f64) -> bool {
    (beta - alpha - 2.0).abs() < 1e-12
}

fn identity(x: f64) -> f64 {
    x
}

fn quarter_square(x: f64) -> f64 {
    x * x / 4.0
}

/// Problem for `target` on one ladder level, together with the map from
/// the pencil's smallest eigenvalue to the constant.
///
/// For the CKN product, `A·I₂ ≥ c I₃²` for all `u` is equivalent (by
/// dilation, on Euclidean space) to `A + I₂ ≥ 2√c I₃`, so `c = μ²/4`.
pub fn problem_for(
    target: SharpnessTarget,
    manifold: &ModelManifold,
    mode: usize,
    level: &LadderLevel,
) -> Result<(RayleighProblem, fn(f64) -> f64)> {
    let mesh = geometric_mesh(level.r_min, level.r_max, level.nodes)?;
    let mode = Mode::new(manifold.dimension(), mode)?;
    let one: RadialFn = Arc::new(|_| 1.0);
    let inv_r2: RadialFn = Arc::new(|r| 1.0 / (r * r));
    let (energy_weight, potential, denominator, map): (RadialFn, Option<RadialFn>, RadialFn, fn(f64) -> f64) =
        match target {
            SharpnessTarget::Hardy | SharpnessTarget::H0Hardy => (one, None, inv_r2, identity),
            SharpnessTarget::Poincare => (one.clone(), None, one, identity),
            SharpnessTarget::Ckn { alpha, beta } => {
                let v: RadialFn = Arc::new(move |r: f64| r.powf(-alpha));
                let den: RadialFn = Arc::new(move |r: f64| r.powf(-beta));
                if is_degenerate_ckn(alpha, beta) {
                    (v, None, den, identity)
                } else {
                    let pot: RadialFn = Arc::new(move |r: f64| r.powf(alpha - 2.0 * beta + 2.0));
                    (v, Some(pot), den, quarter_square)
                }
            }
        };
    if matches!(target, SharpnessTarget::H0Hardy) && mode.n == 0 {
        return Err(Error::invalid("mode", "the H_0 problem needs mode >= 1"));
    }
    Ok((
        RayleighProblem {
            manifold: manifold.clone(),
            mode,
            energy_weight,
            potential,
            denominator,
            mesh,
        },
        map,
    ))
}

/// Runs `target` on `manifold` over `levels`; for the Euclidean Hardy
/// target also evaluates the trial family `u_ε` as an upper bound.
pub fn estimate_target(
    target: SharpnessTarget,
    manifold: &ModelManifold,
    mode: usize,
    levels: &[LadderLevel],
) -> Result<ConstantEstimate> {
    let mut est = estimate_constant(|lvl| problem_for(target, manifold, mode, lvl), levels)?;
    if matches!(target, SharpnessTarget::Hardy) && manifold.is_euclidean() && mode == 0 {
        let q = hardy_trial_quotients(manifold, &[1e-2, 1e-4, 1e-6], &QuadratureSpec::default())?;
        est.trial_family_upper_bound = q.iter().map(|(_, v)| *v).reduce(f64::min);
    }
    Ok(est)
}

/// Hardy quotients `∫|u_ε'|² dv / ∫u_ε²/r² dv` of the trial family.
pub fn hardy_trial_quotients(manifold: &ModelManifold, eps: &[f64], spec: &QuadratureSpec) -> Result<Vec<(f64, f64)>> {
    eps.iter()
        .map(|&e| {
            let u = make_testfunction(manifold, vec![(0, hardy_trial_profile(manifold.dimension(), e)?)], -1)?;
            let num = radial_dirichlet(&u, |_| 1.0, spec)?.value;
            let den = mass(&u, |r| 1.0 / (r * r), spec)?.value;
            Ok((e, num / den))
        })
        .collect()
}
