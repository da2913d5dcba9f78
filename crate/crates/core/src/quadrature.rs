//! Adaptive composite Gauss–Legendre quadrature on radial intervals.
//!
//! Each panel is integrated with a `k`-node and a `2k`-node rule; the
//! difference is the panel error estimate and the `2k` value is kept. The
//! worst panel is split until the summed estimate meets
//! `max(rel_tol * |value|, abs_tol)`. The initial partition and every split
//! of the panel touching the left endpoint are graded geometrically, which
//! handles integrable power singularities at `a` without variable changes.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of trapezoid nodes in the angular direction of [`integrate_2d_polar`].
pub const POLAR_THETA_POINTS: usize = 128;

const INITIAL_PANELS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
    /// Gauss–Legendre nodes of the low-order rule on each panel.
    pub base_rule: usize,
    /// Strength of the grading toward the left endpoint.
    pub grading_exponent: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            max_subdivisions: 1 << 16,
            base_rule: 16,
            grading_exponent: 3.0,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) {
            return Err(Error::invalid("rel_tol", "must be > 0"));
        }
        if !(self.abs_tol > 0.0) {
            return Err(Error::invalid("abs_tol", "must be > 0"));
        }
        if self.base_rule < 2 {
            return Err(Error::invalid("quad_nodes", "need at least 2 nodes"));
        }
        if self.max_subdivisions < INITIAL_PANELS {
            return Err(Error::invalid("max_subdivisions", format!("must be >= {INITIAL_PANELS}")));
        }
        if !(self.grading_exponent >= 1.0) {
            return Err(Error::invalid("grading_exponent", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralResult {
    pub value: f64,
    pub error_estimate: f64,
    pub panels_used: usize,
    pub converged: bool,
}

impl IntegralResult {
    pub fn zero() -> Self {
        Self {
            value: 0.0,
            error_estimate: 0.0,
            panels_used: 0,
            converged: true,
        }
    }

    /// Turns a non-converged result into an error.
    pub fn require_converged(self, a: f64, b: f64) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::QuadratureNotConverged {
                a,
                b,
                error_estimate: self.error_estimate,
                panels: self.panels_used,
            })
        }
    }
}

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(k: usize) -> Self {
        assert!(k >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; k];
        let mut weights = vec![0.0; k];
        let m = k.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(k, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(k, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[k - 1 - i] = x;
            weights[i] = w;
            weights[k - 1 - i] = w;
        }
        if k % 2 == 1 {
            nodes[k / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Cached rule with `k` nodes.
    pub fn cached(k: usize) -> Arc<Self> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("quadrature rule cache poisoned");
        guard.entry(k).or_insert_with(|| Arc::new(GaussLegendre::new(k))).clone()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Single-panel rule on `[a, b]` with a finiteness check on every sample.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, f: &mut F, a: f64, b: f64) -> Result<f64> {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut sum = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let r = mid + half * x;
            let v = f(r);
            if !v.is_finite() {
                return Err(Error::NonFiniteIntegrand { r, value: v });
            }
            sum += w * v;
        }
        Ok(sum * half)
    }
}

fn legendre_with_derivative(k: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 2..=k {
        let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = k as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    seq: usize,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    // Largest error first; ties broken by creation order so the heap is
    // fully deterministic.
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Adaptive integration of `f` over `(a, b)`.
///
/// `f` is never evaluated at the endpoints, so integrable singularities at
/// `a` are allowed. Non-convergence is reported through
/// [`IntegralResult::converged`]; a non-finite sample is a hard error.
pub fn integrate_radial<F: FnMut(f64) -> f64>(
    mut f: F,
    domain: (f64, f64),
    spec: &QuadratureSpec,
) -> Result<IntegralResult> {
    let (a, b) = domain;
    if !(a >= 0.0 && a < b && b.is_finite()) {
        return Err(Error::invalid("domain", format!("need 0 <= a < b < inf, got ({a}, {b})")));
    }
    spec.validate()?;
    let low = GaussLegendre::cached(spec.base_rule);
    let high = GaussLegendre::cached(2 * spec.base_rule);
    let g = spec.grading_exponent;
    let width = b - a;

    let mut seq = 0usize;
    let eval_panel = |f: &mut F, pa: f64, pb: f64, seq: &mut usize| -> Result<Panel> {
        let lo = low.integrate(f, pa, pb)?;
        let hi = high.integrate(f, pa, pb)?;
        *seq += 1;
        Ok(Panel {
            a: pa,
            b: pb,
            value: hi,
            error: (hi - lo).abs(),
            seq: *seq,
        })
    };

    let mut heap = BinaryHeap::with_capacity(2 * INITIAL_PANELS);
    let mut total = 0.0;
    let mut total_err = 0.0;
    let mut prev = a;
    for i in 1..=INITIAL_PANELS {
        let next = if i == INITIAL_PANELS {
            b
        } else {
            a + width * (i as f64 / INITIAL_PANELS as f64).powf(g)
        };
        let p = eval_panel(&mut f, prev, next, &mut seq)?;
        total += p.value;
        total_err += p.error;
        heap.push(p);
        prev = next;
    }

    let tolerance = |v: f64| (spec.rel_tol * v.abs()).max(spec.abs_tol);
    let mut converged = false;
    loop {
        if total_err <= tolerance(total) {
            // Recompute the sums exactly before accepting.
            let (v, e) = exact_sums(&heap);
            total = v;
            total_err = e;
            if total_err <= tolerance(total) {
                converged = true;
                break;
            }
        }
        if heap.len() >= spec.max_subdivisions {
            break;
        }
        let worst = heap.pop().expect("panel heap is never empty");
        let split = if worst.a == a {
            a + (worst.b - a) * 0.5f64.powf(g)
        } else {
            0.5 * (worst.a + worst.b)
        };
        if !(split > worst.a && split < worst.b) {
            // Panel can no longer be split in floating point.
            heap.push(worst);
            break;
        }
        let left = eval_panel(&mut f, worst.a, split, &mut seq)?;
        let right = eval_panel(&mut f, split, worst.b, &mut seq)?;
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }

    let (value, error_estimate) = exact_sums(&heap);
    Ok(IntegralResult {
        value,
        error_estimate,
        panels_used: heap.len(),
        converged,
    })
}

fn exact_sums(heap: &BinaryHeap<Panel>) -> (f64, f64) {
    let mut panels: Vec<&Panel> = heap.iter().collect();
    panels.sort_by(|p, q| p.a.total_cmp(&q.a));
    panels
        .iter()
        .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error))
}

/// Integrates `f(r, θ) ψ(r)` over `(a, b) × [0, 2π)`: trapezoid rule in `θ`
/// (spectrally accurate for smooth periodic integrands) and the adaptive
/// radial rule in `r`.
pub fn integrate_2d_polar<F, P>(
    f: F,
    psi: P,
    r_domain: (f64, f64),
    spec: &QuadratureSpec,
) -> Result<IntegralResult>
where
    F: Fn(f64, f64) -> f64,
    P: Fn(f64) -> f64,
{
    let m = POLAR_THETA_POINTS;
    let dtheta = 2.0 * PI / m as f64;
    let thetas: Vec<f64> = (0..m).map(|k| k as f64 * dtheta).collect();
    integrate_radial(
        |r| {
            let ring: f64 = thetas.iter().map(|&t| f(r, t)).sum();
            ring * dtheta * psi(r)
        },
        r_domain,
        spec,
    )
}
