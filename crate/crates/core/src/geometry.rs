//! Rotationally symmetric model manifolds `dr² + ψ(r)² dω²` and the
//! spherical-harmonic bookkeeping on `S^{N-1}`.
//!
//! Every manifold carries closed-form `ψ`, `ψ'` and `ψ''`; nothing in the
//! crate differentiates `ψ` numerically.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Shared radial callable.
pub type RadialFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Below this radius `coth r - 1/r` is evaluated from its Laurent series.
pub const COTH_SERIES_SWITCH: f64 = 0.1;

/// `coth r - 1/r`, accurate down to `r -> 0` where it behaves like `r/3`.
pub fn coth_minus_inv(r: f64) -> f64 {
    if r.abs() < COTH_SERIES_SWITCH {
        // r/3 - r^3/45 + 2r^5/945 - r^7/4725 + 2r^9/93555 - 1382r^11/638512875 + 4r^13/18243225
        let x2 = r * r;
        let poly = 1.0 / 3.0
            + x2 * (-1.0 / 45.0
                + x2 * (2.0 / 945.0
                    + x2 * (-1.0 / 4725.0
                        + x2 * (2.0 / 93555.0
                            + x2 * (-1382.0 / 638_512_875.0 + x2 * (4.0 / 18_243_225.0))))));
        r * poly
    } else {
        1.0 / r.tanh() - 1.0 / r
    }
}

/// `ln sinh r` for `r > 0`, valid without overflow for large `r`.
pub fn ln_sinh(r: f64) -> f64 {
    r - std::f64::consts::LN_2 + (-(-2.0 * r).exp_m1()).ln()
}

#[derive(Clone)]
enum Warping {
    Euclidean,
    Hyperbolic,
    Custom {
        name: String,
        psi: RadialFn,
        psi_prime: RadialFn,
        psi_second: RadialFn,
    },
}

/// An `N`-dimensional Riemannian model `(M, g, ψ)` with a pole at `r = 0`.
#[derive(Clone)]
pub struct ModelManifold {
    dimension: usize,
    warping: Warping,
}

impl fmt::Debug for ModelManifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelManifold")
            .field("dimension", &self.dimension)
            .field("name", &self.name())
            .finish()
    }
}

fn check_dimension(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::invalid("N", format!("dimension must be >= 2, got {n}")));
    }
    Ok(())
}

impl ModelManifold {
    /// Euclidean space, `ψ(r) = r`.
    pub fn euclidean(dimension: usize) -> Result<Self> {
        check_dimension(dimension)?;
        Ok(Self {
            dimension,
            warping: Warping::Euclidean,
        })
    }

    /// Hyperbolic space of curvature `-1`, `ψ(r) = sinh r`.
    pub fn hyperbolic(dimension: usize) -> Result<Self> {
        check_dimension(dimension)?;
        Ok(Self {
            dimension,
            warping: Warping::Hyperbolic,
        })
    }

    /// Looks up `euclidean` or `hyperbolic` by name.
    pub fn by_name(name: &str, dimension: usize) -> Result<Self> {
        match name {
            "euclidean" => Self::euclidean(dimension),
            "hyperbolic" => Self::hyperbolic(dimension),
            other => Err(Error::invalid(
                "manifold",
                format!("expected `hyperbolic` or `euclidean`, got `{other}`"),
            )),
        }
    }

    /// A user-supplied warping function with analytic first and second
    /// derivatives.
    ///
    /// The pole conditions `ψ(0) = 0`, `ψ'(0) = 1` are checked by a first
    /// order Taylor comparison at `r = 1e-6` and `r = 1e-4`, and `ψ > 0` is
    /// checked on a sample grid in `(0, 50]`.
    pub fn custom(
        dimension: usize,
        name: impl Into<String>,
        psi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        psi_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
        psi_second: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        check_dimension(dimension)?;
        const TOL: f64 = 1e-8;
        for r in [1e-6, 1e-4] {
            let p = psi(r);
            let dp = psi_prime(r);
            let ddp = psi_second(r);
            // ψ'(r) = 1 + O(r ψ''), ψ(r) = r + O(r (ψ'(r) - 1)).
            let slope_err = (dp - 1.0).abs();
            if slope_err > TOL + ddp.abs() * r {
                return Err(Error::invalid(
                    "psi",
                    format!("psi'({r:e}) = {dp} is not consistent with psi'(0) = 1"),
                ));
            }
            if (p - r).abs() > TOL * r + slope_err * r {
                return Err(Error::invalid(
                    "psi",
                    format!("psi({r:e}) = {p:e} is not consistent with psi(0) = 0, psi'(0) = 1"),
                ));
            }
        }
        for i in 1..=500 {
            let r = i as f64 * 0.1;
            let p = psi(r);
            if !(p > 0.0) {
                return Err(Error::invalid("psi", format!("psi({r}) = {p} is not positive")));
            }
        }
        Ok(Self {
            dimension,
            warping: Warping::Custom {
                name: name.into(),
                psi: Arc::new(psi),
                psi_prime: Arc::new(psi_prime),
                psi_second: Arc::new(psi_second),
            },
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn name(&self) -> &str {
        match &self.warping {
            Warping::Euclidean => "euclidean",
            Warping::Hyperbolic => "hyperbolic",
            Warping::Custom { name, .. } => name,
        }
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.warping, Warping::Euclidean)
    }

    pub fn is_hyperbolic(&self) -> bool {
        matches!(self.warping, Warping::Hyperbolic)
    }

    pub fn psi(&self, r: f64) -> f64 {
        match &self.warping {
            Warping::Euclidean => r,
            Warping::Hyperbolic => r.sinh(),
            Warping::Custom { psi, .. } => psi(r),
        }
    }

    pub fn psi_prime(&self, r: f64) -> f64 {
        match &self.warping {
            Warping::Euclidean => 1.0,
            Warping::Hyperbolic => r.cosh(),
            Warping::Custom { psi_prime, .. } => psi_prime(r),
        }
    }

    pub fn psi_second(&self, r: f64) -> f64 {
        match &self.warping {
            Warping::Euclidean => 0.0,
            Warping::Hyperbolic => r.sinh(),
            Warping::Custom { psi_second, .. } => psi_second(r),
        }
    }

    /// `ψ'(r)/ψ(r) - 1/r`: the curvature correction that replaces
    /// `coth r - 1/r` on a general model. Identically zero on Euclidean space.
    pub fn log_psi_prime_minus_inv(&self, r: f64) -> f64 {
        match &self.warping {
            Warping::Euclidean => 0.0,
            Warping::Hyperbolic => coth_minus_inv(r),
            Warping::Custom { psi, psi_prime, .. } => psi_prime(r) / psi(r) - 1.0 / r,
        }
    }

    /// Radial volume density `ψ(r)^{N-1}`.
    pub fn volume_density(&self, r: f64) -> f64 {
        self.psi(r).powi(self.dimension as i32 - 1)
    }
}

/// Validated entry point for [`ModelManifold::volume_density`].
pub fn volume_density(manifold: &ModelManifold, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::invalid("r", format!("radius must be >= 0, got {r}")));
    }
    Ok(manifold.volume_density(r))
}

/// Eigenvalue `λ_n = n² + (N-2)n` of `-Δ` on `S^{N-1}`.
pub fn mode_eigenvalue(dimension: usize, n: usize) -> Result<u64> {
    check_dimension(dimension)?;
    let n = n as u64;
    n.checked_mul(n)
        .and_then(|sq| (dimension as u64 - 2).checked_mul(n).and_then(|l| sq.checked_add(l)))
        .ok_or(Error::Overflow { what: "mode eigenvalue" })
}

fn binomial(top: u64, k: u64) -> Option<u128> {
    if k > top {
        return Some(0);
    }
    let mut c: u128 = 1;
    // C(top - k + i, i) stays integral at every step.
    for i in 1..=k as u128 {
        c = c.checked_mul(top as u128 - k as u128 + i)? / i;
    }
    Some(c)
}

/// Dimension `d_n` of the degree-`n` spherical harmonics on `S^{N-1}`.
pub fn mode_multiplicity(dimension: usize, n: usize) -> Result<u64> {
    check_dimension(dimension)?;
    let overflow = Error::Overflow { what: "mode multiplicity" };
    match n {
        0 => Ok(1),
        1 => Ok(dimension as u64),
        _ => {
            let big_n = dimension as u64;
            let n = n as u64;
            let top = big_n
                .checked_add(n - 1)
                .ok_or_else(|| overflow.clone())?;
            let a = binomial(top, n).ok_or_else(|| overflow.clone())?;
            let b = binomial(top - 2, n - 2).ok_or_else(|| overflow.clone())?;
            u64::try_from(a - b).map_err(|_| overflow)
        }
    }
}

/// A spherical-harmonic degree together with its eigenvalue and multiplicity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mode {
    pub n: usize,
    pub eigenvalue: u64,
    pub multiplicity: u64,
}

impl Mode {
    pub fn new(dimension: usize, n: usize) -> Result<Self> {
        Ok(Self {
            n,
            eigenvalue: mode_eigenvalue(dimension, n)?,
            multiplicity: mode_multiplicity(dimension, n)?,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.eigenvalue as f64
    }
}

/// Radial integration range: `inner < truncation <= outer`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationDomain {
    pub inner: f64,
    pub outer: f64,
    pub truncation: f64,
}

impl IntegrationDomain {
    pub fn new(inner: f64, outer: f64, truncation: f64) -> Result<Self> {
        if !(inner >= 0.0) {
            return Err(Error::invalid("r_min", format!("must be >= 0, got {inner}")));
        }
        if !(inner < truncation && truncation <= outer && truncation.is_finite()) {
            return Err(Error::invalid(
                "domain",
                format!("need r_min < R_trunc <= R with finite R_trunc, got ({inner}, {truncation}, {outer})"),
            ));
        }
        Ok(Self {
            inner,
            outer,
            truncation,
        })
    }

    /// Whether `(s0, s1)` lies inside `(inner, truncation)`.
    pub fn contains_support(&self, support: (f64, f64)) -> bool {
        support.0 >= self.inner && support.1 <= self.truncation
    }
}
