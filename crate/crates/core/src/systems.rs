//! Expanding circle maps given by lifts, and time-dependent sequences of them.
//!
//! A map is a composition chain of closed-form stages
//! `F(x) = d*x + a*sin(2*pi*x)/(2*pi)`; a single stage is the usual
//! linear/perturbed family, longer chains arise from power systems.  All
//! bounds (expansion factor, C^2 norm) are certified at construction from
//! the closed form, never estimated.

use std::f64::consts::TAU;

use crate::circle;
use crate::error::{NdsError, Result};

const BISECT_ITERS: usize = 60;
const NEWTON_POLISH: usize = 2;

/// One closed-form stage of a map chain.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Stage {
    degree: u32,
    amplitude: f64,
}

impl Stage {
    #[inline]
    fn lift(&self, x: f64) -> f64 {
        self.degree as f64 * x + self.amplitude * (TAU * x).sin() / TAU
    }

    #[inline]
    fn derivative(&self, x: f64) -> f64 {
        self.degree as f64 + self.amplitude * (TAU * x).cos()
    }
}

/// Family tag of a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum MapFamily {
    Identity,
    Linear,
    PerturbedTrig,
    Composite,
}

/// A smooth circle self-map represented by its lift to the real line.
///
/// Invariants certified at construction:
/// * `F'(x) >= lambda` everywhere, with `lambda > 1` except for the identity;
/// * `|F'| <= gamma` and `|F''| <= gamma`;
/// * `F(x + 1) = F(x) + degree`.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleMap {
    stages: Vec<Stage>,
    degree: u64,
    lambda: f64,
    deriv_sup: f64,
    second_sup: f64,
}

impl CircleMap {
    /// The identity map (degree 1). Permitted as a degenerate sequence member
    /// for expansivity experiments; operations that need expansion check
    /// `lambda > 1` themselves.
    pub fn identity() -> Self {
        CircleMap {
            stages: vec![Stage {
                degree: 1,
                amplitude: 0.0,
            }],
            degree: 1,
            lambda: 1.0,
            deriv_sup: 1.0,
            second_sup: 0.0,
        }
    }

    /// Linear map `x -> d*x (mod 1)` of degree `d >= 2`.
    pub fn linear(degree: u32) -> Result<Self> {
        Self::perturbed(degree, 0.0)
    }

    /// Perturbed map with lift `d*x + a*sin(2*pi*x)/(2*pi)`.
    ///
    /// Requires `d >= 2` and `d - |a| > 1` so the certified expansion factor
    /// `lambda = d - |a|` exceeds one.
    pub fn perturbed(degree: u32, amplitude: f64) -> Result<Self> {
        if degree < 2 {
            return Err(NdsError::InvalidInput(format!(
                "map degree must be at least 2 (got {degree}); use the identity family for degree 1"
            )));
        }
        if !amplitude.is_finite() {
            return Err(NdsError::InvalidInput("amplitude must be finite".into()));
        }
        let lambda = degree as f64 - amplitude.abs();
        if lambda <= 1.0 {
            return Err(NdsError::InvalidInput(format!(
                "expansion bound d - |a| = {lambda} must exceed 1"
            )));
        }
        Ok(CircleMap {
            stages: vec![Stage { degree, amplitude }],
            degree: degree as u64,
            lambda,
            deriv_sup: degree as f64 + amplitude.abs(),
            second_sup: TAU * amplitude.abs(),
        })
    }

    /// Composition chain; `parts[0]` is applied first.
    pub fn composed(parts: &[CircleMap]) -> Result<Self> {
        if parts.is_empty() {
            return Err(NdsError::InvalidInput(
                "composition needs at least one map".into(),
            ));
        }
        let mut stages = Vec::new();
        let mut degree: u64 = 1;
        let mut lambda = 1.0;
        let mut deriv_sup = 1.0;
        let mut second_sup = 0.0;
        for p in parts {
            for s in &p.stages {
                stages.push(*s);
            }
            degree = degree.saturating_mul(p.degree);
            lambda *= p.lambda;
            // |(g o f)''| <= |g''| |f'|^2 + |g'| |f''|, chained stage by stage.
            second_sup = p.second_sup * deriv_sup * deriv_sup + p.deriv_sup * second_sup;
            deriv_sup *= p.deriv_sup;
        }
        Ok(CircleMap {
            stages,
            degree,
            lambda,
            deriv_sup,
            second_sup,
        })
    }

    pub fn family(&self) -> MapFamily {
        if self.stages.len() > 1 {
            MapFamily::Composite
        } else if self.degree == 1 {
            MapFamily::Identity
        } else if self.stages[0].amplitude == 0.0 {
            MapFamily::Linear
        } else {
            MapFamily::PerturbedTrig
        }
    }

    /// Covering degree (product over the chain).
    pub fn degree(&self) -> u64 {
        self.degree
    }

    /// Certified lower bound for `F'`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Certified bound for both `|F'|` and `|F''|`.
    pub fn gamma(&self) -> f64 {
        self.deriv_sup.max(self.second_sup).max(self.lambda)
    }

    /// Perturbation amplitude for single-stage maps.
    pub fn amplitude(&self) -> Option<f64> {
        if self.stages.len() == 1 {
            Some(self.stages[0].amplitude)
        } else {
            None
        }
    }

    pub fn is_identity(&self) -> bool {
        self.degree == 1 && self.stages.iter().all(|s| s.amplitude == 0.0)
    }

    /// Lift value `F(x)` for any real `x`; satisfies `F(x+1) = F(x) + degree`.
    pub fn lift(&self, x: f64) -> f64 {
        let mut u = x;
        for s in &self.stages {
            u = s.lift(u);
        }
        u
    }

    /// Circle evaluation `F(x) mod 1`.
    pub fn eval(&self, x: f64) -> f64 {
        circle::wrap(self.lift(x))
    }

    /// Lift derivative `F'(x)` via the chain rule; 1-periodic in `x`.
    pub fn derivative(&self, x: f64) -> f64 {
        let mut u = x;
        let mut d = 1.0;
        for s in &self.stages {
            d *= s.derivative(u);
            u = s.lift(u);
        }
        d
    }

    /// Solve `lift(t) = target` for `t` in `[0, 1]`; the lift is strictly
    /// increasing with `lift(0) = 0` and `lift(1) = degree`.
    fn solve_lift(&self, target: f64) -> f64 {
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..BISECT_ITERS {
            let mid = 0.5 * (lo + hi);
            if self.lift(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut t = 0.5 * (lo + hi);
        for _ in 0..NEWTON_POLISH {
            let d = self.derivative(t);
            if d > 0.0 {
                let step = (self.lift(t) - target) / d;
                let next = t - step;
                if next >= lo && next <= hi {
                    t = next;
                }
            }
        }
        t
    }

    /// The `degree` preimages of a circle point, sorted, solved branch by
    /// branch on the monotone lift (bisection plus Newton polish).
    pub fn branch_preimages(&self, x: f64, tol: f64) -> Result<Vec<f64>> {
        debug_assert!((0.0..1.0).contains(&x));
        let mut out = Vec::with_capacity(self.degree as usize);
        for j in 0..self.degree {
            let y = circle::wrap(self.solve_lift(x + j as f64));
            let residual = circle::dist(self.eval(y), x);
            if residual > tol {
                return Err(NdsError::NonConvergence { residual, tol });
            }
            out.push(y);
        }
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(out)
    }

    /// Global monotone inverse of the lift: the unique `w` with `lift(w) = v`.
    pub fn lift_inverse(&self, v: f64) -> f64 {
        let d = self.degree as f64;
        let m = (v / d).floor();
        let mut r = v - d * m;
        // Guard against rounding pushing the branch target out of [0, d).
        if r < 0.0 {
            r = 0.0;
        }
        if r >= d {
            r = d;
        }
        self.solve_lift(r) + m
    }
}

/// A time-dependent system: finite prefix of maps plus a repeated tail map.
///
/// Indexing is total; `map_at(n)` falls through to the tail for `n` past the
/// prefix. Uniform expansion/derivative bounds are the min/max over members.
#[derive(Debug, Clone, PartialEq)]
pub struct NdsSequence {
    prefix: Vec<CircleMap>,
    tail: CircleMap,
    uniform_lambda: f64,
    uniform_gamma: f64,
}

impl NdsSequence {
    pub fn new(prefix: Vec<CircleMap>, tail: CircleMap) -> Self {
        let mut lambda = tail.lambda();
        let mut gamma = tail.gamma();
        for m in &prefix {
            lambda = lambda.min(m.lambda());
            gamma = gamma.max(m.gamma());
        }
        NdsSequence {
            prefix,
            tail,
            uniform_lambda: lambda,
            uniform_gamma: gamma,
        }
    }

    /// Constant (autonomous) sequence.
    pub fn constant(map: CircleMap) -> Self {
        Self::new(Vec::new(), map)
    }

    /// Periodic sequence realized by prefix unrolling: `pattern` repeated
    /// `repeats` times, with `pattern[0]` as the tail.
    pub fn periodic(pattern: &[CircleMap], repeats: usize) -> Result<Self> {
        if pattern.is_empty() {
            return Err(NdsError::InvalidInput("empty periodic pattern".into()));
        }
        let mut prefix = Vec::with_capacity(pattern.len() * repeats);
        for _ in 0..repeats {
            prefix.extend_from_slice(pattern);
        }
        Ok(Self::new(prefix, pattern[0].clone()))
    }

    /// Blocks `(id)_1, (f)_1, (id)_2, (f)_2, ..., (id)_blocks, (f)_blocks`
    /// followed by a constant `f` tail.
    pub fn alternating_blocks(expanding: CircleMap, blocks: usize) -> Self {
        let mut prefix = Vec::new();
        for b in 1..=blocks {
            for _ in 0..b {
                prefix.push(CircleMap::identity());
            }
            for _ in 0..b {
                prefix.push(expanding.clone());
            }
        }
        Self::new(prefix, expanding)
    }

    /// Linear maps of growing degree `2, 3, 4, ...` (`count` prefix members),
    /// with the last degree repeated as the tail.
    pub fn growing_degree(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(NdsError::InvalidInput(
                "growing-degree prefix must be nonempty".into(),
            ));
        }
        let prefix: Result<Vec<_>> = (0..count).map(|i| CircleMap::linear(i as u32 + 2)).collect();
        let prefix = prefix?;
        let tail = prefix.last().unwrap().clone();
        Ok(Self::new(prefix, tail))
    }

    pub fn map_at(&self, n: usize) -> &CircleMap {
        self.prefix.get(n).unwrap_or(&self.tail)
    }

    pub fn prefix_len(&self) -> usize {
        self.prefix.len()
    }

    pub fn tail(&self) -> &CircleMap {
        &self.tail
    }

    /// Smallest certified expansion factor over all members.
    pub fn uniform_lambda(&self) -> f64 {
        self.uniform_lambda
    }

    /// Largest certified C^2 bound over all members.
    pub fn uniform_gamma(&self) -> f64 {
        self.uniform_gamma
    }

    pub fn is_uniformly_expanding(&self) -> bool {
        self.uniform_lambda > 1.0
    }

    /// `f_k^n(x)`: `n` steps starting at time `k`; `n = 0` is the identity.
    pub fn compose_eval(&self, k: usize, n: usize, x: f64) -> f64 {
        let mut u = x;
        for i in 0..n {
            u = self.map_at(k + i).eval(u);
        }
        u
    }

    /// Orbit `x, f_k(x), ..., f_k^n(x)` as circle points (length `n + 1`).
    pub fn orbit(&self, k: usize, n: usize, x: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(n + 1);
        let mut u = x;
        out.push(u);
        for i in 0..n {
            u = self.map_at(k + i).eval(u);
            out.push(u);
        }
        out
    }

    /// `sum_{i=0}^{n-1} log F_{k+i}'(f_k^i(x))`, the log of the orbit-map
    /// derivative over `n` steps from time `k`.
    pub fn log_jacobian_sum_from(&self, k: usize, n: usize, x: f64) -> f64 {
        let mut u = x;
        let mut acc = 0.0;
        for i in 0..n {
            let map = self.map_at(k + i);
            acc += map.derivative(u).ln();
            u = map.eval(u);
        }
        acc
    }

    /// Log-Jacobian sum from time 0.
    pub fn log_jacobian_sum(&self, n: usize, x: f64) -> f64 {
        self.log_jacobian_sum_from(0, n, x)
    }
}
