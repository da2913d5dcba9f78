//! Bessel pairs: radial weights `(V, W)` such that
//! `(r^{N-1} V y')' + r^{N-1} W y = 0` has a positive solution on `(0, R)`.
//!
//! The catalog ships the power-weight pair and the Poincaré family
//! `(1, W_λ)` with ground state `Ψ_λ`, both with closed-form derivatives.
//! [`solve_pair`] integrates user pairs numerically to certify positivity.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{coth_minus_inv, ln_sinh, RadialFn};

/// Value, first and second derivative of a radial function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub first: f64,
    pub second: f64,
}

/// Spectral parameter of the Poincaré family together with
/// `γ_N(λ) = sqrt((N-1)² - 4λ)` and `h_N(λ) = (γ + 1)/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoincareWeight {
    dimension: usize,
    lambda: f64,
    gamma: f64,
    h: f64,
}

/// Bottom of the spectrum of `-Δ` on `H^N`, `((N-1)/2)²`.
pub fn poincare_constant(dimension: usize) -> f64 {
    let half = (dimension as f64 - 1.0) / 2.0;
    half * half
}

impl PoincareWeight {
    pub fn new(dimension: usize, lambda: f64) -> Result<Self> {
        if dimension < 2 {
            return Err(Error::invalid("N", format!("dimension must be >= 2, got {dimension}")));
        }
        let top = poincare_constant(dimension);
        if !(0.0..=top).contains(&lambda) {
            return Err(Error::invalid(
                "lambda",
                format!("must lie in [0, {top}] for N = {dimension}, got {lambda}"),
            ));
        }
        let nm1 = dimension as f64 - 1.0;
        let gamma = (nm1 * nm1 - 4.0 * lambda).max(0.0).sqrt();
        Ok(Self {
            dimension,
            lambda,
            gamma,
            h: (gamma + 1.0) / 2.0,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Exponent `(N - 1 + γ)/2` of `(sinh r / r)` in `Ψ_λ`.
    fn k(&self) -> f64 {
        (self.dimension as f64 - 1.0 + self.gamma) / 2.0
    }

    /// `Ψ_λ'/Ψ_λ = -(N-2)/(2r) - k (coth r - 1/r)`.
    pub fn log_derivative(&self, r: f64) -> f64 {
        -(self.dimension as f64 - 2.0) / (2.0 * r) - self.k() * coth_minus_inv(r)
    }

    fn jet_unchecked(&self, r: f64) -> Jet {
        let k = self.k();
        let h = self.h;
        let g = self.gamma;
        // Ψ = r^h sinh(r)^{-k}
        let value = (h * r.ln() - k * ln_sinh(r)).exp();
        let first = value * self.log_derivative(r);
        let n = self.dimension as f64;
        let s = r.sinh();
        // Ψ''/Ψ = k² + h(h-1)/r² + k(N+1+γ)/(2 sinh²r) - 2hk coth(r)/r
        let bracket = k * k + (g * g - 1.0) / (4.0 * r * r) + k * (n + 1.0 + g) / (2.0 * s * s)
            - 2.0 * h * k / (r * r.tanh());
        Jet {
            value,
            first,
            second: value * bracket,
        }
    }

    fn w_unchecked(&self, r: f64) -> f64 {
        let n = self.dimension as f64;
        let h2 = self.h * self.h;
        let s = r.sinh();
        self.lambda
            + h2 / (r * r)
            + ((n - 2.0) * (n - 2.0) / 4.0 - h2) / (s * s)
            + (self.gamma * self.h / r + (n - 1.0) * self.log_derivative(r)) * coth_minus_inv(r)
    }
}

fn check_radius(r: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid("r", format!("radius must be > 0, got {r}")));
    }
    Ok(())
}

/// `(Ψ_λ, Ψ_λ', Ψ_λ'')` with `Ψ_λ(r) = r^{-(N-2)/2} (sinh r / r)^{-(N-1+γ)/2}`.
pub fn psi_lambda(pw: &PoincareWeight, r: f64) -> Result<Jet> {
    check_radius(r)?;
    Ok(pw.jet_unchecked(r))
}

/// The potential
/// `W_λ = λ + h²/r² + ((N-2)²/4 - h²)/sinh²r + (γh/r + (N-1)Ψ'/Ψ)(coth r - 1/r)`.
pub fn w_lambda(pw: &PoincareWeight, r: f64) -> Result<f64> {
    check_radius(r)?;
    Ok(pw.w_unchecked(r))
}

/// A Bessel pair `(r^{N-1}V, r^{N-1}W)` with a candidate solution `f`.
///
/// `V`, `V'`, `W` and `f` with two derivatives are closed-form callables.
#[derive(Clone)]
pub struct BesselPair {
    name: String,
    dimension: usize,
    interval: (f64, f64),
    v: RadialFn,
    v_prime: RadialFn,
    w: RadialFn,
    solution: Arc<dyn Fn(f64) -> Jet + Send + Sync>,
    log_deriv: RadialFn,
}

impl fmt::Debug for BesselPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BesselPair")
            .field("name", &self.name)
            .field("dimension", &self.dimension)
            .field("interval", &self.interval)
            .finish()
    }
}

impl BesselPair {
    /// A user pair. `f'/f` is derived from `solution`.
    pub fn custom(
        name: impl Into<String>,
        dimension: usize,
        interval: (f64, f64),
        v: impl Fn(f64) -> f64 + Send + Sync + 'static,
        v_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
        w: impl Fn(f64) -> f64 + Send + Sync + 'static,
        solution: impl Fn(f64) -> Jet + Send + Sync + 'static,
    ) -> Result<Self> {
        if dimension < 2 {
            return Err(Error::invalid("N", format!("dimension must be >= 2, got {dimension}")));
        }
        if !(interval.0 >= 0.0 && interval.0 < interval.1) {
            return Err(Error::invalid("interval", format!("invalid interval {interval:?}")));
        }
        let solution: Arc<dyn Fn(f64) -> Jet + Send + Sync> = Arc::new(solution);
        let s = solution.clone();
        Ok(Self {
            name: name.into(),
            dimension,
            interval,
            v: Arc::new(v),
            v_prime: Arc::new(v_prime),
            w: Arc::new(w),
            solution,
            log_deriv: Arc::new(move |r| {
                let j = s(r);
                j.first / j.value
            }),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn v(&self, r: f64) -> f64 {
        (self.v)(r)
    }

    pub fn v_prime(&self, r: f64) -> f64 {
        (self.v_prime)(r)
    }

    pub fn w(&self, r: f64) -> f64 {
        (self.w)(r)
    }

    pub fn solution(&self, r: f64) -> Jet {
        (self.solution)(r)
    }

    /// `f'(r)/f(r)`.
    pub fn log_derivative(&self, r: f64) -> f64 {
        (self.log_deriv)(r)
    }

    /// Same pair with `f` replaced; used to probe the residual detector.
    pub fn with_solution(&self, solution: impl Fn(f64) -> Jet + Send + Sync + 'static) -> Self {
        let solution: Arc<dyn Fn(f64) -> Jet + Send + Sync> = Arc::new(solution);
        let s = solution.clone();
        Self {
            name: format!("{}*", self.name),
            solution,
            log_deriv: Arc::new(move |r| {
                let j = s(r);
                j.first / j.value
            }),
            ..self.clone()
        }
    }
}

/// `((N - α - 2)/2)²`, the Hardy coefficient of the power-weight pair.
pub fn power_pair_coefficient(dimension: usize, alpha: f64) -> f64 {
    let c = (dimension as f64 - alpha - 2.0) / 2.0;
    c * c
}

/// The pair `(r^{N-1} r^{-α}, r^{N-1} ((N-α-2)/2)² r^{-α-2})` on `(0, ∞)`
/// with solution `f = r^{-(N-α-2)/2}`.
pub fn power_pair(dimension: usize, alpha: f64) -> Result<BesselPair> {
    if dimension < 2 {
        return Err(Error::invalid("N", format!("dimension must be >= 2, got {dimension}")));
    }
    if !alpha.is_finite() {
        return Err(Error::invalid("alpha", "must be finite"));
    }
    let c = (dimension as f64 - alpha - 2.0) / 2.0;
    let coeff = c * c;
    Ok(BesselPair {
        name: format!("power(alpha={alpha})"),
        dimension,
        interval: (0.0, f64::INFINITY),
        v: Arc::new(move |r: f64| r.powf(-alpha)),
        v_prime: Arc::new(move |r: f64| -alpha * r.powf(-alpha - 1.0)),
        w: Arc::new(move |r: f64| coeff * r.powf(-alpha - 2.0)),
        solution: Arc::new(move |r: f64| {
            let value = r.powf(-c);
            Jet {
                value,
                first: -c * value / r,
                second: c * (c + 1.0) * value / (r * r),
            }
        }),
        log_deriv: Arc::new(move |r: f64| -c / r),
    })
}

/// The Poincaré pair `(r^{N-1}, r^{N-1} W_λ)` with solution `Ψ_λ`.
pub fn poincare_pair(pw: &PoincareWeight) -> BesselPair {
    let (a, b, c) = (*pw, *pw, *pw);
    BesselPair {
        name: format!("poincare(lambda={})", pw.lambda),
        dimension: pw.dimension,
        interval: (0.0, f64::INFINITY),
        v: Arc::new(|_| 1.0),
        v_prime: Arc::new(|_| 0.0),
        w: Arc::new(move |r| a.w_unchecked(r)),
        solution: Arc::new(move |r| b.jet_unchecked(r)),
        log_deriv: Arc::new(move |r| c.log_derivative(r)),
    }
}

/// Largest relative ODE residual over a grid and where it occurs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairValidation {
    pub max_residual: f64,
    pub worst_radius: f64,
}

/// Relative residual of `(r^{N-1} V f')' + r^{N-1} W f` at `r`, the outer
/// derivative expanded by the product rule. The common factor
/// `r^{N-1} f` is divided out; the scale is `|V f''| + |W f|`.
pub fn pair_residual(bp: &BesselPair, r: f64) -> f64 {
    let jet = bp.solution(r);
    let v = bp.v(r);
    let dv = bp.v_prime(r);
    let w = bp.w(r);
    let ld = jet.first / jet.value;
    let q = jet.second / jet.value;
    let radial = (bp.dimension as f64 - 1.0) / r * v * ld;
    let num = v * q + radial + dv * ld + w;
    let scale = (v * q).abs() + w.abs();
    let floor = f64::EPSILON * (scale + radial.abs() + (dv * ld).abs()) + f64::MIN_POSITIVE;
    num.abs() / (scale + floor)
}

/// Maximum relative residual over `grid`. A non-positive candidate is
/// reported as [`Error::NotPositive`], separately from a large residual.
pub fn validate_pair(bp: &BesselPair, grid: &[f64]) -> Result<PairValidation> {
    let (lo, hi) = bp.interval;
    let mut best = PairValidation {
        max_residual: 0.0,
        worst_radius: f64::NAN,
    };
    for &r in grid {
        if !(r > lo && r < hi) {
            return Err(Error::invalid(
                "grid",
                format!("radius {r} outside the pair's interval ({lo}, {hi})"),
            ));
        }
        let f = bp.solution(r).value;
        if !(f > 0.0) {
            return Err(Error::NotPositive { r, value: f });
        }
        let res = pair_residual(bp, r);
        if !(res <= best.max_residual) {
            best = PairValidation {
                max_residual: res,
                worst_radius: r,
            };
        }
    }
    Ok(best)
}

/// `count` geometrically spaced radii in `[lo, hi]`.
pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2 && lo > 0.0 && hi > lo);
    let ratio = (hi / lo).ln() / (count - 1) as f64;
    (0..count)
        .map(|i| if i + 1 == count { hi } else { lo * (ratio * i as f64).exp() })
        .collect()
}

/// Tolerances of the embedded Runge–Kutta integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-11,
            abs_tol: 1e-14,
            max_steps: 1_000_000,
        }
    }
}

/// Numerical solution of a Bessel-pair ODE.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub r: Vec<f64>,
    pub y: Vec<f64>,
    pub dy: Vec<f64>,
    /// Location of the first sign change of `y`, linearly interpolated
    /// between the bracketing accepted steps.
    pub first_sign_change: Option<f64>,
    /// `false` when integration stopped early; `flagged_range` then holds the
    /// part of the interval that was not reached.
    pub complete: bool,
    pub flagged_range: Option<(f64, f64)>,
}

impl OdeSolution {
    pub fn stays_positive(&self) -> bool {
        self.first_sign_change.is_none() && self.y.iter().all(|&y| y > 0.0)
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates `(r^{N-1} V y')' + r^{N-1} W y = 0` from `r0` to `r_end` as the
/// first-order system in `(y, r^{N-1} V y')` with adaptive Dormand–Prince
/// steps. Step-size underflow (typically near a singular endpoint) stops
/// the integration and flags the unreached range.
#[allow(clippy::too_many_arguments)]
pub fn solve_pair<V, W>(
    v: V,
    w: W,
    dimension: usize,
    interval: (f64, f64),
    r0: f64,
    initial: (f64, f64),
    r_end: f64,
    options: &OdeOptions,
) -> Result<OdeSolution>
where
    V: Fn(f64) -> f64,
    W: Fn(f64) -> f64,
{
    let (lo, hi) = interval;
    for (name, r) in [("r0", r0), ("r_end", r_end)] {
        if !(r > lo && r < hi) {
            return Err(Error::invalid(name, format!("{r} must lie inside ({lo}, {hi})")));
        }
    }
    if r0 == r_end {
        return Err(Error::invalid("r_end", "must differ from r0"));
    }
    let nm1 = dimension as i32 - 1;
    let rho = |r: f64| r.powi(nm1);
    let v0 = v(r0);
    if !(v0 > 0.0) {
        return Err(Error::invalid("V", format!("V({r0}) = {v0} must be positive")));
    }
    let rhs = |r: f64, s: [f64; 2]| -> [f64; 2] {
        let rv = rho(r) * v(r);
        [s[1] / rv, -rho(r) * w(r) * s[0]]
    };

    let dir = (r_end - r0).signum();
    let mut r = r0;
    let mut state = [initial.0, rho(r0) * v0 * initial.1];
    let mut h = dir * (r_end - r0).abs().min(r0.abs().max(1e-3)) * 1e-3;
    let mut sol = OdeSolution {
        r: vec![r0],
        y: vec![initial.0],
        dy: vec![initial.1],
        first_sign_change: None,
        complete: false,
        flagged_range: None,
    };
    let mut steps = 0usize;

    while (r_end - r) * dir > 0.0 {
        if steps >= options.max_steps {
            sol.flagged_range = Some(ordered(r, r_end));
            return Ok(sol);
        }
        steps += 1;
        if (r + h - r_end) * dir > 0.0 {
            h = r_end - r;
        }
        if h.abs() < 1e-14 * r.abs().max(1e-300) {
            sol.flagged_range = Some(ordered(r, r_end));
            return Ok(sol);
        }
        let (next, err) = dp_step(&rhs, r, state, h, options);
        if !next.iter().all(|x| x.is_finite()) {
            h *= 0.2;
            continue;
        }
        if err <= 1.0 {
            let r_next = r + h;
            if sol.first_sign_change.is_none() && state[0] * next[0] < 0.0 {
                sol.first_sign_change = Some(locate_zero(&rhs, r, state, h, next[0], options));
            }
            r = r_next;
            state = next;
            sol.r.push(r);
            sol.y.push(state[0]);
            sol.dy.push(state[1] / (rho(r) * v(r)));
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    sol.complete = true;
    Ok(sol)
}

fn dp_step(
    rhs: &impl Fn(f64, [f64; 2]) -> [f64; 2],
    r: f64,
    state: [f64; 2],
    h: f64,
    options: &OdeOptions,
) -> ([f64; 2], f64) {
    let mut k = [[0.0; 2]; 7];
    for stage in 0..7 {
        let mut s = state;
        for (prev, a) in A[stage].iter().enumerate().take(stage) {
            s[0] += h * a * k[prev][0];
            s[1] += h * a * k[prev][1];
        }
        k[stage] = rhs(r + C[stage] * h, s);
    }
    let mut next = state;
    let mut err = 0.0f64;
    for comp in 0..2 {
        let mut hi5 = 0.0;
        let mut lo4 = 0.0;
        for stage in 0..7 {
            hi5 += B5[stage] * k[stage][comp];
            lo4 += B4[stage] * k[stage][comp];
        }
        next[comp] = state[comp] + h * hi5;
        let scale = options.abs_tol + options.rel_tol * state[comp].abs().max(next[comp].abs());
        err = err.max((h * (hi5 - lo4)).abs() / scale);
    }
    (next, err)
}

/// Root of `y` inside an accepted step, by Illinois iteration on partial
/// steps taken from the left end.
fn locate_zero(
    rhs: &impl Fn(f64, [f64; 2]) -> [f64; 2],
    r: f64,
    state: [f64; 2],
    h: f64,
    y_end: f64,
    options: &OdeOptions,
) -> f64 {
    let (mut a, mut fa) = (0.0, state[0]);
    let (mut b, mut fb) = (h, y_end);
    for _ in 0..100 {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = dp_step(rhs, r, state, c, options).0[0];
        if fc == 0.0 || (b - a).abs() <= 1e-15 * r.abs().max(h.abs()) {
            return r + c;
        }
        if fc * fb < 0.0 {
            a = b;
            fa = fb;
        } else {
            fa *= 0.5;
        }
        b = c;
        fb = fc;
    }
    r + (a * fb - b * fa) / (fb - fa)
}

fn ordered(a: f64, b: f64) -> (f64, f64) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // Oracle values: 40-digit evaluation of the closed form and its
    // derivatives by numerical differentiation at working precision 1e-40.
    const PSI_ORACLE: [(usize, f64, f64, [f64; 4]); 4] = [
        (3, 1.0, 2.0, [0.3899277621254252249, -0.30699586714169696669, 0.22260441711893739436, 0.21642842141517994531]),
        (2, 0.0, 1.0, [0.85091812823932154513, -0.26636739920995262635, -0.1514185401006125406, 0.49098253456537297809]),
        (3, 0.0, 1.0, [0.72406166096631046641, -0.81534452800257328387, 0.88057356452161169518, 1.0359828891954502379]),
        (5, 2.8, 0.37, [4.1415503382422249448, -18.356950282765621349, 122.58485134300509948, 18.318904523960117709]),
    ];

    #[test]
    fn psi_and_w_match_high_precision_oracle() {
        for (n, lambda, r, [psi, d1, d2, w]) in PSI_ORACLE {
            let lambda = if n == 5 { 0.7 * 4.0 } else { lambda };
            let pw = PoincareWeight::new(n, lambda).unwrap();
            let jet = psi_lambda(&pw, r).unwrap();
            assert_relative_eq!(jet.value, psi, max_relative = 1e-14);
            assert_relative_eq!(jet.first, d1, max_relative = 1e-13);
            assert_relative_eq!(jet.second, d2, max_relative = 1e-12);
            assert_relative_eq!(w_lambda(&pw, r).unwrap(), w, max_relative = 1e-12);
        }
    }

    #[test]
    fn psi_n2_lambda0_is_r_over_sinh() {
        let pw = PoincareWeight::new(2, 0.0).unwrap();
        assert_relative_eq!(psi_lambda(&pw, 1.0).unwrap().value, 1.0 / 1f64.sinh(), max_relative = 1e-15);
        assert_relative_eq!(psi_lambda(&pw, 1.0).unwrap().value, 0.8509181282393216, max_relative = 1e-15);
    }

    #[test]
    fn gamma_and_h_at_endpoints() {
        for n in 2..9 {
            let pw = PoincareWeight::new(n, 0.0).unwrap();
            assert_eq!(pw.gamma(), n as f64 - 1.0);
            assert_eq!(pw.h(), n as f64 / 2.0);
        }
        let pw = PoincareWeight::new(3, 1.0).unwrap();
        assert_eq!(pw.gamma(), 0.0);
        assert_eq!(pw.h(), 0.5);
        assert!(PoincareWeight::new(3, 1.0 + 1e-12).is_err());
        assert!(PoincareWeight::new(3, -1e-12).is_err());
        assert!(psi_lambda(&pw, 0.0).is_err());
        assert!(w_lambda(&pw, -1.0).is_err());
    }

    #[test]
    fn gamma_identity_on_sampled_lambdas() {
        for n in 2..6 {
            let top = poincare_constant(n);
            for i in 0..50 {
                let lambda = top * i as f64 / 49.0;
                let pw = PoincareWeight::new(n, lambda).unwrap();
                let nm1 = n as f64 - 1.0;
                assert!((pw.gamma().powi(2) + 4.0 * lambda - nm1 * nm1).abs() <= 1e-12);
                assert!(pw.gamma() >= 0.0 && pw.gamma() <= nm1);
                assert!(pw.h() >= 0.5 && pw.h() <= n as f64 / 2.0);
            }
        }
    }

    #[test]
    fn psi_derivatives_match_finite_differences() {
        for n in 2..6 {
            for frac in [0.0, 0.3, 0.7, 1.0] {
                let pw = PoincareWeight::new(n, frac * poincare_constant(n)).unwrap();
                for r in geometric_grid(0.1, 10.0, 40) {
                    let h = 1e-5 * r;
                    let p = |x: f64| psi_lambda(&pw, x).unwrap();
                    let fd1 = (p(r + h).value - p(r - h).value) / (2.0 * h);
                    let fd2 = (p(r + h).first - p(r - h).first) / (2.0 * h);
                    let jet = p(r);
                    assert!((fd1 - jet.first).abs() <= 1e-7 * jet.first.abs().max(jet.value));
                    assert!((fd2 - jet.second).abs() <= 1e-6 * jet.second.abs().max(jet.value));
                }
            }
        }
    }

    #[test]
    fn w_lambda_leading_singularity() {
        // W_λ r² -> (N-2)²/4 as r -> 0
        let pw = PoincareWeight::new(4, 0.0).unwrap();
        let r = 1e-4;
        assert_relative_eq!(w_lambda(&pw, r).unwrap() * r * r, 1.0, max_relative = 1e-6);
    }

    #[test]
    fn w_lambda_far_field() {
        let pw = PoincareWeight::new(3, 1.0).unwrap();
        // 1 + 0.25/2500 + 2 (1/100 - coth 50)(coth 50 - 1/50), coth 50 = 1 to double precision
        let expected = 1.0 + 0.25 / 2500.0 + 2.0 * (0.01 - 1.0) * (1.0 - 0.02);
        assert_relative_eq!(w_lambda(&pw, 50.0).unwrap(), expected, max_relative = 1e-14);
        assert_relative_eq!(expected, -0.9403, max_relative = 1e-14);
    }

    #[test]
    fn power_pair_catalog() {
        assert_eq!(power_pair_coefficient(4, 0.0), 1.0);
        assert_eq!(power_pair_coefficient(3, 1.0), 0.0);
        assert_eq!(power_pair_coefficient(5, -1.0), 4.0);

        let p = power_pair(4, 0.0).unwrap();
        assert_eq!(p.v(2.0), 1.0);
        assert_relative_eq!(p.w(2.0) * 4.0, 1.0);

        let p = power_pair(3, 1.0).unwrap();
        assert_eq!(p.w(1.7), 0.0);
        assert_eq!(p.solution(1.7).value, 1.0);
        assert_eq!(p.solution(1.7).first, 0.0);

        let p = power_pair(5, -1.0).unwrap();
        assert_relative_eq!(p.solution(3.0).value, 1.0 / 9.0, max_relative = 1e-15);
    }

    #[test]
    fn power_pair_residual_is_tiny() {
        let grid: Vec<f64> = (1..=100).map(|i| 0.1 * i as f64).collect();
        let p = power_pair(3, 0.0).unwrap();
        assert!(validate_pair(&p, &grid).unwrap().max_residual < 1e-12);
        for alpha in [-2.0, -1.0, 0.5, 1.0, 2.0, 3.7] {
            for n in 2..7 {
                let v = validate_pair(&power_pair(n, alpha).unwrap(), &grid).unwrap();
                assert!(v.max_residual < 1e-12, "N={n} alpha={alpha}: {v:?}");
            }
        }
    }

    #[test]
    fn poincare_pair_residual_is_small() {
        let grid = geometric_grid(1e-2, 20.0, 200);
        for n in 2..6 {
            for frac in [0.0, 0.3, 0.7, 1.0] {
                let pw = PoincareWeight::new(n, frac * poincare_constant(n)).unwrap();
                let v = validate_pair(&poincare_pair(&pw), &grid).unwrap();
                assert!(v.max_residual < 1e-8, "N={n} frac={frac}: {v:?}");
            }
        }
    }

    #[test]
    fn perturbed_solution_is_detected() {
        let pw = PoincareWeight::new(3, 0.0).unwrap();
        let pair = poincare_pair(&pw);
        let perturbed = pair.with_solution(move |r| {
            let j = pw.jet_unchecked(r);
            Jet {
                value: j.value + 0.01 * r,
                first: j.first + 0.01,
                second: j.second,
            }
        });
        let grid: Vec<f64> = (1..=100).map(|i| 0.1 * i as f64).collect();
        let v = validate_pair(&perturbed, &grid).unwrap();
        assert!(v.max_residual > 1e-4, "{v:?}");
    }

    #[test]
    fn non_positive_candidate_is_reported_separately() {
        let pair = power_pair(3, 0.0).unwrap().with_solution(|r| Jet {
            value: 1.0 - r,
            first: -1.0,
            second: 0.0,
        });
        match validate_pair(&pair, &[0.5, 1.5]) {
            Err(Error::NotPositive { r, .. }) => assert_eq!(r, 1.5),
            other => panic!("unexpected {other:?}"),
        }
    }

    // Euclidean Hardy weight W = c/r², V = 1: solutions of Euler type r^p with
    // p² + (N-2)p + c = 0 when c <= (N-2)²/4, oscillating otherwise.
    #[test]
    fn subcritical_hardy_weight_stays_positive() {
        let (n, c) = (3usize, 0.2);
        let p = (-(n as f64 - 2.0) + ((n as f64 - 2.0).powi(2) - 4.0 * c).sqrt()) / 2.0;
        let r0 = 0.1;
        let sol = solve_pair(
            |_| 1.0,
            move |r: f64| c / (r * r),
            n,
            (0.0, f64::INFINITY),
            r0,
            (r0.powf(p), p * r0.powf(p - 1.0)),
            100.0,
            &OdeOptions::default(),
        )
        .unwrap();
        assert!(sol.complete);
        assert!(sol.stays_positive());
        for (r, y) in sol.r.iter().zip(&sol.y) {
            assert_relative_eq!(*y, r.powf(p), max_relative = 1e-8);
        }
        // generic data: still one-signed in the subcritical regime
        let sol = solve_pair(|_| 1.0, move |r: f64| c / (r * r), n, (0.0, f64::INFINITY), r0, (1.0, 0.0), 100.0, &OdeOptions::default()).unwrap();
        assert!(sol.stays_positive());
    }

    #[test]
    fn supercritical_hardy_weight_changes_sign() {
        let (n, c) = (3usize, 1.0);
        let r0: f64 = 0.1;
        let sol = solve_pair(|_| 1.0, move |r: f64| c / (r * r), n, (0.0, f64::INFINITY), r0, (1.0, 0.0), 100.0, &OdeOptions::default()).unwrap();
        let zero = sol.first_sign_change.expect("oscillatory regime");
        // y = r^{-1/2}(A cos ωt + B sin ωt), t = ln(r/r0), ω = sqrt(4c - 1)/2, B = A/(2ω)
        let omega = (4.0 * c - 1.0).sqrt() / 2.0;
        let theta = std::f64::consts::PI - (2.0 * omega).atan();
        let exact = r0 * (theta / omega).exp();
        assert_relative_eq!(zero, exact, max_relative = 1e-6);
    }

    #[test]
    fn power_solution_reproduced() {
        let pair = power_pair(3, 0.0).unwrap();
        let r0 = 0.5;
        let f0 = pair.solution(r0);
        let (pv, pw) = (pair.clone(), pair.clone());
        let sol = solve_pair(
            move |r| pv.v(r),
            move |r| pw.w(r),
            3,
            pair.interval(),
            r0,
            (f0.value, f0.first),
            10.0 * r0,
            &OdeOptions::default(),
        )
        .unwrap();
        assert!(sol.complete);
        for (r, y) in sol.r.iter().zip(&sol.y) {
            assert_relative_eq!(*y, pair.solution(*r).value, max_relative = 1e-8);
        }
    }

    #[test]
    fn solver_flags_unreachable_range() {
        // V vanishing like r^8 drives the step size to zero when integrating toward 0
        let sol = solve_pair(
            |r: f64| r.powi(8),
            |_| 1.0,
            2,
            (0.0, 10.0),
            1.0,
            (1.0, 1.0),
            1e-200,
            &OdeOptions { max_steps: 20_000, ..OdeOptions::default() },
        )
        .unwrap();
        assert!(!sol.complete);
        assert!(sol.flagged_range.is_some());
    }
}
