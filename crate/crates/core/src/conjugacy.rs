//! Equi-conjugacy between a time-dependent sequence and one autonomous map,
//! built as the fixed point of a contraction on lift space.
//!
//! On the circle the universal cover is the real line and deck
//! transformations are integer shifts, so homeomorphisms commuting with the
//! deck group are exactly `h(x) = x + p(x)` with `p` 1-periodic.  Every lift
//! in the closed-form family fixes 0, which anchors the whole construction:
//! displacement grids keep `p(0) = 0` automatically.

use serde::Serialize;

use crate::circle;
use crate::error::{NdsError, Result};
use crate::systems::{CircleMap, NdsSequence};

/// Orientation-preserving circle homeomorphism as a periodic displacement on
/// a uniform grid: `h(x) = x + p(x)` with linear interpolation of `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftHomeo {
    displacement: Vec<f64>,
}

impl LiftHomeo {
    pub fn identity(grid: usize) -> Self {
        LiftHomeo {
            displacement: vec![0.0; grid],
        }
    }

    /// Wraps a displacement grid, requiring strict monotonicity of
    /// `x + p(x)` across grid nodes.
    pub fn from_displacement(displacement: Vec<f64>) -> Result<Self> {
        let h = LiftHomeo { displacement };
        if !h.is_strictly_increasing() {
            return Err(NdsError::NonMonotone { slot: 0 });
        }
        Ok(h)
    }

    pub fn grid(&self) -> usize {
        self.displacement.len()
    }

    pub fn displacement(&self) -> &[f64] {
        &self.displacement
    }

    fn is_strictly_increasing(&self) -> bool {
        let n = self.displacement.len();
        let spacing = 1.0 / n as f64;
        for j in 0..n {
            let a = self.displacement[j];
            let b = self.displacement[(j + 1) % n];
            if b - a <= -spacing {
                return false;
            }
        }
        true
    }

    fn interp(&self, x: f64) -> f64 {
        let n = self.displacement.len();
        let t = circle::wrap(x) * n as f64;
        let j = t.floor() as usize % n;
        let frac = t - t.floor();
        let a = self.displacement[j];
        let b = self.displacement[(j + 1) % n];
        a + (b - a) * frac
    }

    /// Lift evaluation `h(u) = u + p(u)`; commutes with integer shifts.
    pub fn eval(&self, u: f64) -> f64 {
        u + self.interp(u)
    }

    /// Projected circle map.
    pub fn eval_circle(&self, x: f64) -> f64 {
        circle::wrap(self.eval(x))
    }

    /// Monotone inverse: the unique `w` with `h(w) = v`.
    pub fn inverse(&self, v: f64) -> f64 {
        let bound = self
            .displacement
            .iter()
            .fold(0.0_f64, |m, p| m.max(p.abs()))
            + 1.0;
        let (mut lo, mut hi) = (v - bound, v + bound);
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            if self.eval(mid) < v {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn max_abs_displacement(&self) -> f64 {
        self.displacement.iter().fold(0.0_f64, |m, p| m.max(p.abs()))
    }

    fn sup_distance(&self, other: &LiftHomeo) -> f64 {
        self.displacement
            .iter()
            .zip(&other.displacement)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Finite-horizon state of the lift-space iteration: homeomorphism slots
/// `h_0 .. h_T`, with `h_T` pinned to the identity (exact when the sequence
/// tail equals the target map).
#[derive(Debug, Clone)]
pub struct ConjugacyState {
    pub homeos: Vec<LiftHomeo>,
}

impl ConjugacyState {
    pub fn identity(horizon: usize, grid: usize) -> Self {
        ConjugacyState {
            homeos: vec![LiftHomeo::identity(grid); horizon + 1],
        }
    }

    pub fn horizon(&self) -> usize {
        self.homeos.len() - 1
    }

    pub fn sup_distance(&self, other: &ConjugacyState) -> f64 {
        self.homeos
            .iter()
            .zip(&other.homeos)
            .fold(0.0_f64, |m, (a, b)| m.max(a.sup_distance(b)))
    }
}

/// One application of the lift-space contraction:
/// `h_k <- f_k^{-1} o h_{k+1} o f` for `k < T`, identity tail kept fixed.
pub fn sigma_step(
    state: &ConjugacyState,
    seq: &NdsSequence,
    target: &CircleMap,
) -> Result<ConjugacyState> {
    let horizon = state.horizon();
    let grid = state.homeos[0].grid();
    let mut next = Vec::with_capacity(horizon + 1);
    for k in 0..horizon {
        let mut displacement = Vec::with_capacity(grid);
        let inner = &state.homeos[k + 1];
        let map_k = seq.map_at(k);
        for j in 0..grid {
            let x = j as f64 / grid as f64;
            let u = target.lift(x);
            let v = inner.eval(u);
            let w = map_k.lift_inverse(v);
            displacement.push(w - x);
        }
        let h = LiftHomeo { displacement };
        if !h.is_strictly_increasing() {
            return Err(NdsError::NonMonotone { slot: k });
        }
        next.push(h);
    }
    next.push(LiftHomeo::identity(grid));
    Ok(ConjugacyState { homeos: next })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConjugacyReport {
    pub iterations: usize,
    pub residual: f64,
    pub contraction_trace: Vec<f64>,
    pub tol: f64,
    pub grid: usize,
}

#[derive(Debug, Clone)]
pub struct ConjugacySolution {
    /// Circle homeomorphisms `pi_0 .. pi_T`.
    pub homeos: Vec<LiftHomeo>,
    pub report: ConjugacyReport,
}

/// Solve for the equi-conjugacy between `seq` and the autonomous `target`:
/// iterate the contraction from the identity state until successive states
/// are `tol`-close in sup distance.
///
/// Preconditions: all member degrees equal the target degree, the tail *is*
/// the target (finite-horizon truncation is then exact), and everything is
/// uniformly expanding.
pub fn solve_equiconjugacy(
    seq: &NdsSequence,
    target: &CircleMap,
    horizon: usize,
    tol: f64,
    max_iter: usize,
    grid: usize,
) -> Result<ConjugacySolution> {
    if horizon == 0 {
        return Err(NdsError::InvalidInput("horizon must be at least 1".into()));
    }
    if grid < 128 {
        return Err(NdsError::InvalidInput(
            "conjugacy grid must have at least 128 nodes".into(),
        ));
    }
    if !seq.is_uniformly_expanding() || target.lambda() <= 1.0 {
        return Err(NdsError::InvalidInput(
            "conjugacy construction requires uniformly expanding maps".into(),
        ));
    }
    for index in 0..=horizon {
        let found = seq.map_at(index).degree();
        if found != target.degree() {
            return Err(NdsError::DegreeMismatch {
                index,
                found,
                expected: target.degree(),
            });
        }
    }
    if seq.tail() != target {
        return Err(NdsError::TailMismatch);
    }

    let mut state = ConjugacyState::identity(horizon, grid);
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let next = sigma_step(&state, seq, target)?;
        let delta = state.sup_distance(&next);
        trace.push(delta);
        state = next;
        iterations += 1;
        if delta < tol {
            break;
        }
        if iterations >= max_iter {
            return Err(NdsError::NoConvergence {
                max_iter,
                last_delta: delta,
                trace,
            });
        }
    }
    let residual = conjugacy_residual(&state.homeos, seq, target, 4 * grid);
    Ok(ConjugacySolution {
        homeos: state.homeos,
        report: ConjugacyReport {
            iterations,
            residual,
            contraction_trace: trace,
            tol,
            grid,
        },
    })
}

/// Max over sample points and slots of the circle distance between
/// `pi_{k+1}(f(x))` and `f_k(pi_k(x))`.
///
/// Samples sit at cell midpoints: the intertwining relation holds exactly at
/// the displacement nodes by construction, so off-node points are the ones
/// that see the interpolation error.
pub fn conjugacy_residual(
    homeos: &[LiftHomeo],
    seq: &NdsSequence,
    target: &CircleMap,
    samples: usize,
) -> f64 {
    let mut worst = 0.0_f64;
    for k in 0..homeos.len().saturating_sub(1) {
        let pi_k = &homeos[k];
        let pi_next = &homeos[k + 1];
        let map_k = seq.map_at(k);
        for j in 0..samples {
            let x = (j as f64 + 0.5) / samples as f64;
            let lhs = pi_next.eval_circle(target.eval(x));
            let rhs = map_k.eval(pi_k.eval_circle(x));
            worst = worst.max(circle::dist(lhs, rhs));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn perturbed_prefix_seq() -> (NdsSequence, CircleMap) {
        let target = CircleMap::linear(2).unwrap();
        let seq = NdsSequence::new(
            vec![
                CircleMap::perturbed(2, 0.2).unwrap(),
                CircleMap::perturbed(2, -0.2).unwrap(),
                CircleMap::perturbed(2, 0.15).unwrap(),
                CircleMap::perturbed(2, -0.1).unwrap(),
            ],
            target.clone(),
        );
        (seq, target)
    }

    #[test]
    fn identity_system_is_a_fixed_point() {
        let target = CircleMap::linear(2).unwrap();
        let seq = NdsSequence::constant(target.clone());
        let state = ConjugacyState::identity(4, 256);
        let next = sigma_step(&state, &seq, &target).unwrap();
        assert_eq!(state.sup_distance(&next), 0.0);

        let sol = solve_equiconjugacy(&seq, &target, 4, 1e-10, 50, 256).unwrap();
        assert_eq!(sol.report.iterations, 1);
        assert!(sol.report.residual < 1e-14);
        for h in &sol.homeos {
            assert_eq!(h.max_abs_displacement(), 0.0);
        }
    }

    #[test]
    fn one_step_state_matches_direct_branch_solve() {
        // T = 1: the updated h_0 must be f_0^{-1} o f on the lift
        let target = CircleMap::linear(2).unwrap();
        let f0 = CircleMap::perturbed(2, 0.2).unwrap();
        let seq = NdsSequence::new(vec![f0.clone()], target.clone());
        let state = ConjugacyState::identity(1, 1024);
        let next = sigma_step(&state, &seq, &target).unwrap();
        for j in 0..1024usize {
            let x = j as f64 / 1024.0;
            let expected = f0.lift_inverse(target.lift(x));
            assert!((next.homeos[0].eval(x) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn solver_converges_with_small_residual() {
        let (seq, target) = perturbed_prefix_seq();
        let sol = solve_equiconjugacy(&seq, &target, 8, 1e-10, 45, 8192).unwrap();
        assert!(sol.report.iterations <= 15, "iterations {}", sol.report.iterations);
        assert!(sol.report.residual < 1e-7, "residual {}", sol.report.residual);
        // contraction with additive interpolation slack
        let lambda_inv = 1.0 / seq.uniform_lambda();
        let slack = 2.0 / 8192.0;
        let t = &sol.report.contraction_trace;
        for w in t.windows(2) {
            assert!(w[1] <= lambda_inv * w[0] + slack, "trace {:?}", w);
        }
    }

    #[test]
    fn homeomorphisms_round_trip() {
        let (seq, target) = perturbed_prefix_seq();
        let sol = solve_equiconjugacy(&seq, &target, 8, 1e-10, 45, 8192).unwrap();
        for h in &sol.homeos {
            for j in 0..64 {
                let x = j as f64 / 64.0;
                let back = h.inverse(h.eval(x));
                assert!((back - x).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn truncated_iteration_has_larger_residual() {
        let (seq, target) = perturbed_prefix_seq();
        let full = solve_equiconjugacy(&seq, &target, 8, 1e-10, 45, 4096).unwrap();
        // two sigma steps only
        let mut state = ConjugacyState::identity(8, 4096);
        state = sigma_step(&state, &seq, &target).unwrap();
        state = sigma_step(&state, &seq, &target).unwrap();
        let truncated = conjugacy_residual(&state.homeos, &seq, &target, 4096);
        assert!(
            truncated > 10.0 * full.report.residual,
            "truncated {truncated} vs converged {}",
            full.report.residual
        );
    }

    #[test]
    fn distinct_initial_states_converge_together() {
        let (seq, target) = perturbed_prefix_seq();
        let grid = 2048;
        let run = |init: ConjugacyState| -> ConjugacyState {
            let mut state = init;
            for _ in 0..30 {
                state = sigma_step(&state, &seq, &target).unwrap();
            }
            state
        };
        let a = run(ConjugacyState::identity(8, grid));
        let warped = LiftHomeo::from_displacement(
            (0..grid)
                .map(|j| 0.05 * (TAU * j as f64 / grid as f64).sin())
                .collect(),
        )
        .unwrap();
        let b = run(ConjugacyState {
            homeos: {
                let mut hs = vec![warped; 8];
                hs.push(LiftHomeo::identity(grid));
                hs
            },
        });
        assert!(a.sup_distance(&b) <= 10.0 / grid as f64);
    }

    #[test]
    fn degree_mismatch_is_rejected() {
        let target = CircleMap::linear(2).unwrap();
        let seq = NdsSequence::new(vec![CircleMap::linear(3).unwrap()], target.clone());
        let err = solve_equiconjugacy(&seq, &target, 4, 1e-10, 50, 256).unwrap_err();
        assert_eq!(err.kind(), "DegreeMismatch");
    }

    #[test]
    fn tail_mismatch_is_rejected() {
        let target = CircleMap::linear(2).unwrap();
        let seq = NdsSequence::constant(CircleMap::perturbed(2, 0.1).unwrap());
        let err = solve_equiconjugacy(&seq, &target, 4, 1e-10, 50, 256).unwrap_err();
        assert_eq!(err.kind(), "TailMismatch");
    }

    #[test]
    fn iteration_budget_violation_reports_no_convergence() {
        let (seq, target) = perturbed_prefix_seq();
        let err = solve_equiconjugacy(&seq, &target, 8, 1e-12, 2, 1024).unwrap_err();
        match err {
            NdsError::NoConvergence { max_iter, trace, .. } => {
                assert_eq!(max_iter, 2);
                assert_eq!(trace.len(), 2);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn alternating_perturbations_have_bounded_oscillation() {
        let target = CircleMap::linear(2).unwrap();
        let prefix: Vec<CircleMap> = (0..16)
            .map(|i| CircleMap::perturbed(2, if i % 2 == 0 { 0.2 } else { -0.2 }).unwrap())
            .collect();
        let seq = NdsSequence::new(prefix, target.clone());
        let sol = solve_equiconjugacy(&seq, &target, 16, 1e-10, 60, 8192).unwrap();
        // the 16-fold composition has large curvature, so the interpolation
        // floor sits orders of magnitude above the short-prefix case
        assert!(sol.report.residual < 1e-4, "residual {}", sol.report.residual);
        // slot-independent modulus of continuity over windows of width delta
        let delta = 1.0 / 64.0;
        let mut worst = 0.0_f64;
        for h in &sol.homeos {
            for j in 0..256 {
                let x = j as f64 / 256.0;
                let osc = circle::dist(h.eval_circle(x), h.eval_circle(circle::wrap(x + delta)));
                worst = worst.max(osc);
            }
        }
        // 2 c lambda^{-n} + lambda^{-n} d mechanism: small uniform bound
        assert!(worst < 0.1, "oscillation {worst}");
    }
}
