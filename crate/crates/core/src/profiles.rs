//! Smooth compactly supported radial profiles and the mode-decomposed test
//! functions `u = Σ a_n(r) P_n(σ)` built from them.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Mode, ModelManifold};

/// Value and first derivative of a profile at one radius.
pub type ProfileJet = (f64, f64);

type JetFn = Arc<dyn Fn(f64) -> ProfileJet + Send + Sync>;

#[derive(Clone)]
enum ProfileKind {
    Bump,
    Chebyshev(Vec<f64>),
    HardyTrial { exponent: f64, eps: f64 },
    Scaled(f64, Box<RadialProfile>),
    Custom(JetFn),
}

/// A radial profile `a(r)` with analytic derivative, identically zero
/// outside `support`.
#[derive(Clone)]
pub struct RadialProfile {
    support: (f64, f64),
    kind: ProfileKind,
}

impl fmt::Debug for RadialProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            ProfileKind::Bump => "bump".to_string(),
            ProfileKind::Chebyshev(c) => format!("chebyshev({} coeffs)", c.len()),
            ProfileKind::HardyTrial { eps, .. } => format!("hardy-trial(eps={eps})"),
            ProfileKind::Scaled(c, _) => format!("scaled({c})"),
            ProfileKind::Custom(_) => "custom".to_string(),
        };
        f.debug_struct("RadialProfile")
            .field("support", &self.support)
            .field("kind", &kind)
            .finish()
    }
}

fn bump_jet(r: f64, s0: f64, s1: f64) -> ProfileJet {
    if r <= s0 || r >= s1 {
        return (0.0, 0.0);
    }
    let q = (r - s0) * (s1 - r);
    let a = (-1.0 / q).exp();
    if a == 0.0 {
        return (0.0, 0.0);
    }
    let dq = s0 + s1 - 2.0 * r;
    (a, a * dq / (q * q))
}

/// `exp(-1/t)` for `t > 0`, with derivative.
fn edge(t: f64) -> (f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0);
    }
    let g = (-1.0 / t).exp();
    if g == 0.0 {
        (0.0, 0.0)
    } else {
        (g, g / (t * t))
    }
}

/// C^∞ step rising from 0 at `t = 0` to 1 at `t = 1`.
pub(crate) fn smooth_step(t: f64) -> (f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0);
    }
    let (g, dg) = edge(t);
    let (h, dh) = edge(1.0 - t);
    let den = g + h;
    (g / den, (dg * h + g * dh) / (den * den))
}

impl RadialProfile {
    /// Lower and upper end of the support.
    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.jet(r).0
    }

    pub fn deriv(&self, r: f64) -> f64 {
        self.jet(r).1
    }

    /// `(a(r), a'(r))`.
    pub fn jet(&self, r: f64) -> ProfileJet {
        let (s0, s1) = self.support;
        if r <= s0 || r >= s1 {
            return (0.0, 0.0);
        }
        match &self.kind {
            ProfileKind::Bump => bump_jet(r, s0, s1),
            ProfileKind::Chebyshev(coeffs) => {
                let (b, db) = bump_jet(r, s0, s1);
                let scale = 2.0 / (s1 - s0);
                let xi = (2.0 * r - s0 - s1) / (s1 - s0);
                let (p, dp) = chebyshev_series(coeffs, xi);
                (p * b, dp * scale * b + p * db)
            }
            ProfileKind::HardyTrial { exponent, eps } => {
                let (c, dc) = plateau_cutoff(r, *eps);
                let pw = r.powf(*exponent);
                (pw * c, pw * (exponent * c / r + dc))
            }
            ProfileKind::Scaled(c, inner) => {
                let (a, da) = inner.jet(r);
                (c * a, c * da)
            }
            ProfileKind::Custom(f) => f(r),
        }
    }

    /// `c · a(r)`.
    pub fn scaled(&self, c: f64) -> RadialProfile {
        RadialProfile {
            support: self.support,
            kind: ProfileKind::Scaled(c, Box::new(self.clone())),
        }
    }

    /// Profile given by an arbitrary closure returning `(a, a')`. The closure
    /// is only called strictly inside `support`.
    pub fn custom(
        support: (f64, f64),
        jet: impl Fn(f64) -> ProfileJet + Send + Sync + 'static,
    ) -> Result<RadialProfile> {
        check_support(support)?;
        Ok(RadialProfile {
            support,
            kind: ProfileKind::Custom(Arc::new(jet)),
        })
    }
}

fn check_support((s0, s1): (f64, f64)) -> Result<()> {
    if !(s0 >= 0.0 && s0 < s1 && s1.is_finite()) {
        return Err(Error::invalid(
            "support",
            format!("need 0 <= s0 < s1 < inf, got ({s0}, {s1})"),
        ));
    }
    Ok(())
}

/// `Σ c_k T_k(ξ)` and its `ξ`-derivative.
fn chebyshev_series(coeffs: &[f64], xi: f64) -> (f64, f64) {
    let (mut t_prev, mut t) = (1.0, xi);
    let (mut d_prev, mut d) = (0.0, 1.0);
    let mut value = 0.0;
    let mut deriv = 0.0;
    for (k, c) in coeffs.iter().enumerate() {
        match k {
            0 => value += c,
            1 => {
                value += c * t;
                deriv += c * d;
            }
            _ => {
                let t_next = 2.0 * xi * t - t_prev;
                let d_next = 2.0 * t + 2.0 * xi * d - d_prev;
                t_prev = t;
                t = t_next;
                d_prev = d;
                d = d_next;
                value += c * t;
                deriv += c * d;
            }
        }
    }
    (value, deriv)
}

/// Cutoff equal to 1 on `[2ε, 1/(2ε)]`, supported in `(ε, 1/ε)`.
fn plateau_cutoff(r: f64, eps: f64) -> (f64, f64) {
    let outer = 1.0 / eps;
    let (up, dup) = smooth_step((r - eps) / eps);
    let half = 0.5 * outer;
    let (down, ddown) = smooth_step((outer - r) / half);
    (up * down, dup / eps * down - up * ddown / half)
}

/// `exp(-1/((r - s0)(s1 - r)))` on `(s0, s1)`, zero elsewhere.
pub fn make_bump(s0: f64, s1: f64) -> Result<RadialProfile> {
    check_support((s0, s1))?;
    Ok(RadialProfile {
        support: (s0, s1),
        kind: ProfileKind::Bump,
    })
}

/// Bump-windowed Chebyshev series with `n_knots` coefficients drawn from
/// uniform `[-1, 1]` by a seeded ChaCha8 stream.
pub fn make_random_profile(seed: u64, support: (f64, f64), n_knots: usize) -> Result<RadialProfile> {
    check_support(support)?;
    if n_knots < 3 {
        return Err(Error::invalid("n_knots", format!("need at least 3, got {n_knots}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = (0..n_knots).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    Ok(RadialProfile {
        support,
        kind: ProfileKind::Chebyshev(coeffs),
    })
}

/// Trial profile `r^{-(N-2)/2 + ε}` times a smooth plateau equal to one on
/// `[2ε, 1/(2ε)]`; its Hardy quotient approaches `(N-2)²/4` as `ε -> 0`.
pub fn hardy_trial_profile(dimension: usize, eps: f64) -> Result<RadialProfile> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::invalid("eps", format!("need 0 < eps < 1/2, got {eps}")));
    }
    Ok(RadialProfile {
        support: (eps, 1.0 / eps),
        kind: ProfileKind::HardyTrial {
            exponent: -(dimension as f64 - 2.0) / 2.0 + eps,
            eps,
        },
    })
}

/// One mode of a test function.
#[derive(Debug, Clone)]
pub struct Term {
    pub mode: Mode,
    pub profile: RadialProfile,
}

/// `u(r, σ) = Σ a_n(r) P_n(σ)` on a model manifold, one orthonormal
/// harmonic per listed degree. `subspace_index = j` records membership in
/// `H_j` (every degree is at least `j + 1`; `j = -1` means unconstrained).
#[derive(Debug, Clone)]
pub struct TestFunction {
    manifold: ModelManifold,
    terms: Vec<Term>,
    subspace_index: i64,
}

impl TestFunction {
    pub fn manifold(&self) -> &ModelManifold {
        &self.manifold
    }

    pub fn dimension(&self) -> usize {
        self.manifold.dimension()
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn subspace_index(&self) -> i64 {
        self.subspace_index
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Smallest harmonic degree present, if any.
    pub fn min_mode(&self) -> Option<usize> {
        self.terms.iter().map(|t| t.mode.n).min()
    }

    /// Whether every degree is at least `j + 1`.
    pub fn lies_in(&self, j: i64) -> bool {
        self.terms.iter().all(|t| t.mode.n as i64 > j)
    }

    /// Hull of all profile supports, `None` for `u ≡ 0`.
    pub fn support(&self) -> Option<(f64, f64)> {
        self.terms.iter().map(|t| t.profile.support()).reduce(|x, y| (x.0.min(y.0), x.1.max(y.1)))
    }

    /// `c · u`.
    pub fn scaled(&self, c: f64) -> TestFunction {
        TestFunction {
            manifold: self.manifold.clone(),
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    mode: t.mode,
                    profile: t.profile.scaled(c),
                })
                .collect(),
            subspace_index: self.subspace_index,
        }
    }

    /// The single-term function made of term `index`.
    pub fn component(&self, index: usize) -> TestFunction {
        TestFunction {
            manifold: self.manifold.clone(),
            terms: vec![self.terms[index].clone()],
            subspace_index: self.subspace_index,
        }
    }

    /// The same profiles placed on another manifold of the same dimension.
    pub fn on_manifold(&self, manifold: ModelManifold) -> Result<TestFunction> {
        if manifold.dimension() != self.dimension() {
            return Err(Error::ManifoldMismatch(format!(
                "dimension {} != {}",
                manifold.dimension(),
                self.dimension()
            )));
        }
        Ok(TestFunction {
            manifold,
            terms: self.terms.clone(),
            subspace_index: self.subspace_index,
        })
    }
}

/// Assembles a test function in `H_j`. Every profile must vanish near the
/// pole (`s0 > 0`), degrees must be distinct and at least `j + 1`.
pub fn make_testfunction(
    manifold: &ModelManifold,
    terms: Vec<(usize, RadialProfile)>,
    j: i64,
) -> Result<TestFunction> {
    if j < -1 {
        return Err(Error::invalid("j", format!("subspace index must be >= -1, got {j}")));
    }
    let mut out: Vec<Term> = Vec::with_capacity(terms.len());
    for (n, profile) in terms {
        if (n as i64) < j + 1 {
            return Err(Error::invalid(
                "modes",
                format!("mode {n} is not allowed in H_{j} (need n >= {})", j + 1),
            ));
        }
        if out.iter().any(|t| t.mode.n == n) {
            return Err(Error::invalid("modes", format!("mode {n} listed twice")));
        }
        if !(profile.support().0 > 0.0) {
            return Err(Error::invalid(
                "support",
                "profiles must vanish near the pole (s0 > 0)",
            ));
        }
        out.push(Term {
            mode: Mode::new(manifold.dimension(), n)?,
            profile,
        });
    }
    Ok(TestFunction {
        manifold: manifold.clone(),
        terms: out,
        subspace_index: j,
    })
}

/// Seed of the profile attached to mode `n` of a randomly generated test
/// function.
pub fn mode_seed(seed: u64, n: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(n as u64)
}

/// Random test function: one [`make_random_profile`] per mode, all on the
/// same support.
pub fn random_testfunction(
    manifold: &ModelManifold,
    modes: &[usize],
    support: (f64, f64),
    seed: u64,
    j: i64,
) -> Result<TestFunction> {
    let terms = modes
        .iter()
        .map(|&n| make_random_profile(mode_seed(seed, n), support, 5).map(|p| (n, p)))
        .collect::<Result<Vec<_>>>()?;
    make_testfunction(manifold, terms, j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bump_examples() {
        let b = make_bump(1.0, 3.0).unwrap();
        assert_relative_eq!(b.eval(2.0), (-1f64).exp(), max_relative = 1e-15);
        assert_eq!(b.eval(1.0), 0.0);
        assert_eq!(b.deriv(1.0), 0.0);
        assert_eq!(b.deriv(2.0), 0.0);
        assert_eq!(b.eval(0.5), 0.0);
        assert!(make_bump(3.0, 3.0).is_err());
        assert!(make_bump(3.0, 1.0).is_err());
    }

    #[test]
    fn bump_is_flat_at_edges() {
        let b = make_bump(1.0, 3.0).unwrap();
        let h: f64 = 1e-2;
        for r in [1.0 + h, 3.0 - h] {
            assert!(b.eval(r).abs() <= h.powi(10));
            assert!(b.deriv(r).abs() <= h.powi(8));
        }
        for i in 1..100 {
            assert!(b.eval(1.0 + 0.02 * i as f64) > 0.0);
        }
    }

    fn check_derivative(p: &RadialProfile) {
        let (s0, s1) = p.support();
        for i in 1..=50 {
            let r = s0 + (s1 - s0) * (0.1 + 0.8 * i as f64 / 51.0);
            let h = 1e-6 * (s1 - s0);
            let fd = (p.eval(r + h) - p.eval(r - h)) / (2.0 * h);
            let d = p.deriv(r);
            assert!(
                (fd - d).abs() <= 1e-6 * d.abs().max(p.eval(r).abs()).max(1e-3),
                "r = {r}: fd {fd} vs analytic {d}"
            );
        }
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        check_derivative(&make_bump(1.0, 3.0).unwrap());
        check_derivative(&make_bump(0.5, 6.0).unwrap());
        for seed in 0..5 {
            check_derivative(&make_random_profile(seed, (0.7, 4.0), 6).unwrap());
        }
        check_derivative(&hardy_trial_profile(3, 0.1).unwrap());
        check_derivative(&make_bump(1.0, 2.0).unwrap().scaled(-2.5));
    }

    #[test]
    fn random_profile_is_deterministic() {
        let p = make_random_profile(42, (1.0, 3.0), 5).unwrap();
        let q = make_random_profile(42, (1.0, 3.0), 5).unwrap();
        for i in 0..100 {
            let r = 0.9 + 2.2 * i as f64 / 99.0;
            assert_eq!(p.eval(r).to_bits(), q.eval(r).to_bits());
        }
        assert_eq!(p.eval(0.99), 0.0);
        assert_eq!(p.eval(3.5), 0.0);
        assert!(make_random_profile(1, (1.0, 3.0), 2).is_err());
    }

    #[test]
    fn random_profile_regression_value() {
        let p = make_random_profile(7, (1.0, 3.0), 5).unwrap();
        assert_eq!(p.eval(2.0), RANDOM_PROFILE_SEED7_AT_2);
    }

    // Frozen from the first run of make_random_profile(7, (1, 3), 5).eval(2).
    const RANDOM_PROFILE_SEED7_AT_2: f64 = -0.32757531693021136;

    #[test]
    fn chebyshev_series_matches_cosine_form() {
        let coeffs = [0.3, -0.2, 0.5, 0.1, -0.7];
        for xi in [-0.9, -0.3, 0.0, 0.4, 0.95] {
            let th: f64 = f64::acos(xi);
            let direct: f64 = coeffs.iter().enumerate().map(|(k, c)| c * (k as f64 * th).cos()).sum();
            let ddirect: f64 = coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c * k as f64 * (k as f64 * th).sin() / th.sin())
                .sum();
            let (v, d) = chebyshev_series(&coeffs, xi);
            assert_relative_eq!(v, direct, epsilon = 1e-14);
            assert_relative_eq!(d, ddirect, epsilon = 1e-12);
        }
    }

    #[test]
    fn hardy_trial_plateau() {
        let p = hardy_trial_profile(3, 0.05).unwrap();
        assert_eq!(p.support(), (0.05, 20.0));
        for r in [0.1, 1.0, 5.0, 10.0] {
            assert_relative_eq!(p.eval(r), r.powf(-0.45), max_relative = 1e-14);
        }
        assert_eq!(p.eval(0.04), 0.0);
        assert_eq!(p.eval(21.0), 0.0);
    }

    #[test]
    fn testfunction_membership() {
        let h3 = ModelManifold::hyperbolic(3).unwrap();
        let bump = make_bump(1.0, 3.0).unwrap();
        let u = make_testfunction(&h3, vec![(1, bump.clone())], 0).unwrap();
        assert_eq!(u.subspace_index(), 0);
        assert!(make_testfunction(&h3, vec![(0, bump.clone())], 0).is_err());

        let e4 = ModelManifold::euclidean(4).unwrap();
        let v = make_testfunction(&e4, vec![(2, bump.clone()), (5, bump.clone())], 1).unwrap();
        assert_eq!(v.subspace_index(), 1);
        assert_eq!(v.min_mode(), Some(2));
        assert_eq!(v.terms()[1].mode.eigenvalue, 35);

        assert!(make_testfunction(&h3, vec![(1, bump.clone()), (1, bump.clone())], -1).is_err());
        assert!(make_testfunction(&h3, vec![(1, make_bump(0.0, 1.0).unwrap())], -1).is_err());
        assert!(make_testfunction(&h3, vec![], -2).is_err());
        assert!(make_testfunction(&h3, vec![], 3).unwrap().is_zero());
    }
}
