//! Topological and metric pressure, power systems, and the variational-gap
//! check.

use serde::Serialize;

use crate::circle;
use crate::entropy::{self, PartitionSequence, RefinementOptions};
use crate::error::{NdsError, Result};
use crate::estimator::{self, EstimatorTrace};
use crate::metrics;
use crate::systems::{CircleMap, NdsSequence};
use crate::transfer::{self, GridDensity};

/// A 1-periodic function carried as grid samples with linear interpolation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridFunction {
    values: Vec<f64>,
}

impl GridFunction {
    pub fn from_fn(grid: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if grid < 2 {
            return Err(NdsError::InvalidInput(
                "potential grid needs at least two samples".into(),
            ));
        }
        let values: Vec<f64> = (0..grid).map(|j| f(j as f64 / grid as f64)).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(NdsError::InvalidInput(
                "potential samples must be finite".into(),
            ));
        }
        Ok(GridFunction { values })
    }

    pub fn constant(value: f64, grid: usize) -> Result<Self> {
        Self::from_fn(grid, |_| value)
    }

    pub fn zero(grid: usize) -> Result<Self> {
        Self::constant(0.0, grid)
    }

    /// `-log F'` sampled on the grid.
    pub fn neg_log_derivative(map: &CircleMap, grid: usize) -> Result<Self> {
        Self::from_fn(grid, |x| -map.derivative(x).ln())
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let t = circle::wrap(x) * n as f64;
        let j = t.floor() as usize % n;
        let frac = t - t.floor();
        let a = self.values[j];
        let b = self.values[(j + 1) % n];
        a + (b - a) * frac
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Grid estimate of the Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        let n = self.values.len();
        let mut best = 0.0_f64;
        for j in 0..n {
            let d = (self.values[(j + 1) % n] - self.values[j]).abs() * n as f64;
            best = best.max(d);
        }
        best
    }
}

/// Uniformly bounded, equicontinuous potential sequence (prefix + tail).
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSequence {
    prefix: Vec<GridFunction>,
    tail: GridFunction,
    uniform_bound: f64,
    modulus: f64,
}

impl PotentialSequence {
    pub fn new(prefix: Vec<GridFunction>, tail: GridFunction) -> Self {
        let mut bound = tail.sup_norm();
        let mut modulus = tail.lipschitz();
        for f in &prefix {
            bound = bound.max(f.sup_norm());
            modulus = modulus.max(f.lipschitz());
        }
        PotentialSequence {
            prefix,
            tail,
            uniform_bound: bound,
            modulus,
        }
    }

    pub fn constant(f: GridFunction) -> Self {
        Self::new(Vec::new(), f)
    }

    pub fn at(&self, n: usize) -> &GridFunction {
        self.prefix.get(n).unwrap_or(&self.tail)
    }

    pub fn prefix_len(&self) -> usize {
        self.prefix.len()
    }

    pub fn uniform_bound(&self) -> f64 {
        self.uniform_bound
    }

    /// Uniform Lipschitz bound; the modulus over a distance `d` is
    /// `modulus * d`.
    pub fn modulus(&self) -> f64 {
        self.modulus
    }
}

/// Birkhoff sum `S_n phi(x) = sum_{i<n} phi_i(f_0^i(x))`.
pub fn birkhoff_sum(seq: &NdsSequence, pot: &PotentialSequence, n: usize, x: f64) -> f64 {
    let mut u = x;
    let mut acc = 0.0;
    for i in 0..n {
        acc += pot.at(i).eval(u);
        u = seq.map_at(i).eval(u);
    }
    acc
}

/// Outcome of a greedy weighted packing/cover: the achieved `log sum` of
/// `exp(S_n phi)` over the chosen grid points.
#[derive(Debug, Clone, Serialize)]
pub struct GreedySelection {
    pub log_sum: f64,
    pub chosen: Vec<usize>,
}

fn log_sum_exp(weights: &[f64], chosen: &[usize]) -> f64 {
    let peak = chosen
        .iter()
        .map(|&i| weights[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = chosen.iter().map(|&i| (weights[i] - peak).exp()).sum();
    peak + sum.ln()
}

fn birkhoff_weights(
    pot: &PotentialSequence,
    orbits: &metrics::GridOrbits,
    n: usize,
) -> Vec<f64> {
    let resolution = orbits.points.len();
    let mut weights = vec![0.0_f64; resolution];
    for (i, row) in orbits.orbit[..n].iter().enumerate() {
        let f = pot.at(i);
        for (w, &u) in weights.iter_mut().zip(row) {
            *w += f.eval(u);
        }
    }
    weights
}

/// Greedy maximizer proxy for the separated pressure sum: grid points sorted
/// by descending Birkhoff weight (ties by grid index), first-fit packed.
/// Returns a certified lower bound of `log S(n, eps)`.
pub fn pressure_separated(
    seq: &NdsSequence,
    pot: &PotentialSequence,
    n: usize,
    eps: f64,
    resolution: usize,
) -> GreedySelection {
    assert!(
        resolution as f64 >= 10.0 / eps,
        "resolution {resolution} too coarse for eps {eps}"
    );
    let orbits = metrics::grid_orbits(seq, n, resolution);
    let weights = birkhoff_weights(pot, &orbits, n);
    let mut order: Vec<usize> = (0..resolution).collect();
    order.sort_by(|&a, &b| {
        weights[b]
            .partial_cmp(&weights[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let chosen = metrics::greedy_separated(&orbits, n, eps, Some(&order));
    GreedySelection {
        log_sum: log_sum_exp(&weights, &chosen),
        chosen,
    }
}

/// Greedy minimizer proxy for the spanning pressure sum: cover steps pick the
/// candidate covering the most uncovered grid points, ties broken by smaller
/// weight then smaller index. Returns `log` of the achieved sum (an
/// upper-bound heuristic for the infimum).
pub fn pressure_spanning(
    seq: &NdsSequence,
    pot: &PotentialSequence,
    n: usize,
    eps: f64,
    resolution: usize,
) -> GreedySelection {
    assert!(
        resolution as f64 >= 10.0 / eps,
        "resolution {resolution} too coarse for eps {eps}"
    );
    let orbits = metrics::grid_orbits(seq, n, resolution);
    let weights = birkhoff_weights(pot, &orbits, n);
    let chosen = metrics::greedy_spanning(&orbits, n, eps, Some(&weights));
    GreedySelection {
        log_sum: log_sum_exp(&weights, &chosen),
        chosen,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PressureRow {
    pub n: usize,
    pub eps: f64,
    pub log_s: f64,
    pub log_r: f64,
}

/// Pressure table across horizons and radii.
#[derive(Debug, Clone, Serialize)]
pub struct PressureTable {
    pub rows: Vec<PressureRow>,
    /// `(eps, (1/n_max) log S)` per radius.
    pub per_eps: Vec<(f64, f64)>,
    /// Reading at the smallest radius and the full horizon.
    pub headline: f64,
}

/// Table of `(1/n) log` separated/spanning pressure sums. The headline is
/// the smallest-radius reading at the full horizon.
pub fn top_pressure_estimate(
    seq: &NdsSequence,
    pot: &PotentialSequence,
    eps_list: &[f64],
    n_max: usize,
    resolution: usize,
) -> PressureTable {
    assert!(!eps_list.is_empty());
    let mut rows = Vec::new();
    let mut per_eps = Vec::new();
    for &eps in eps_list {
        let mut last = f64::NAN;
        for n in 1..=n_max {
            let sep = pressure_separated(seq, pot, n, eps, resolution);
            let span = pressure_spanning(seq, pot, n, eps, resolution);
            rows.push(PressureRow {
                n,
                eps,
                log_s: sep.log_sum,
                log_r: span.log_sum,
            });
            if n == n_max {
                last = sep.log_sum / n as f64;
            }
        }
        per_eps.push((eps, last));
    }
    let headline = per_eps
        .iter()
        .fold((f64::INFINITY, f64::NAN), |acc, &(eps, v)| {
            if eps < acc.0 {
                (eps, v)
            } else {
                acc
            }
        })
        .1;
    PressureTable {
        rows,
        per_eps,
        headline,
    }
}

/// Metric pressure report. The entropy part is evaluated at the supplied
/// partition sequence only, so the value is a lower bound for the
/// admissible-class quantity; `partition_restricted` flags that.
#[derive(Debug, Clone, Serialize)]
pub struct MetricPressureReport {
    pub value: f64,
    pub entropy: EstimatorTrace,
    pub average: EstimatorTrace,
    pub partition_restricted: bool,
}

/// Metric pressure: partition entropy estimate plus the liminf proxy of the
/// averaged potential integrals along the pushforward densities.
pub fn metric_pressure(
    seq: &NdsSequence,
    pot: &PotentialSequence,
    mu: &GridDensity,
    parts: &PartitionSequence,
    n_max: usize,
    opts: &RefinementOptions,
) -> Result<MetricPressureReport> {
    if mu.min_value() <= 0.0 {
        return Err(NdsError::NonPositiveDensity {
            min: mu.min_value(),
        });
    }
    let entropy_trace = entropy::metric_entropy_estimate(seq, parts, mu, n_max, opts)?;

    let trace = transfer::evolve(seq, mu, n_max.saturating_sub(1))?;
    let grid = mu.len();
    let mut integrals = Vec::with_capacity(n_max);
    for (i, density) in trace.densities.iter().enumerate() {
        let f = pot.at(i);
        let mut acc = 0.0;
        for (j, v) in density.values().iter().enumerate() {
            acc += f.eval(j as f64 / grid as f64) * v;
        }
        integrals.push(acc / grid as f64);
    }
    let mut partial = 0.0;
    let mut per_n = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        partial += integrals[n - 1];
        per_n.push((n, partial / n as f64));
    }
    let average = estimator::liminf_proxy(&per_n, opts.window_frac);

    Ok(MetricPressureReport {
        value: entropy_trace.estimate + average.estimate,
        entropy: entropy_trace,
        average,
        partition_restricted: true,
    })
}

/// The `k`-th power system together with the matching block potential
/// `psi_n = sum_{j<k} phi_{nk+j} o f_{nk}^j` sampled on the potential grid.
pub fn power_system(
    seq: &NdsSequence,
    pot: &PotentialSequence,
    k: usize,
) -> Result<(NdsSequence, PotentialSequence)> {
    if k == 0 {
        return Err(NdsError::InvalidInput("power exponent must be >= 1".into()));
    }
    let blocks = seq.prefix_len().div_ceil(k).max(pot.prefix_len().div_ceil(k));
    let block_map = |b: usize| -> Result<CircleMap> {
        let maps: Vec<CircleMap> = (0..k).map(|j| seq.map_at(b * k + j).clone()).collect();
        CircleMap::composed(&maps)
    };
    let mut prefix_maps = Vec::with_capacity(blocks);
    for b in 0..blocks {
        prefix_maps.push(block_map(b)?);
    }
    let tail_map = CircleMap::composed(&vec![seq.tail().clone(); k])?;

    let grid = pot.at(0).values.len();
    let block_pot = |b: usize| -> Result<GridFunction> {
        GridFunction::from_fn(grid, |x| {
            let mut acc = 0.0;
            let mut u = x;
            for j in 0..k {
                acc += pot.at(b * k + j).eval(u);
                u = seq.map_at(b * k + j).eval(u);
            }
            acc
        })
    };
    let mut prefix_pots = Vec::with_capacity(blocks);
    for b in 0..blocks {
        prefix_pots.push(block_pot(b)?);
    }
    // beyond every prefix the block potential is time-invariant
    let tail_pot = GridFunction::from_fn(grid, |x| {
        let mut acc = 0.0;
        let mut u = x;
        for _ in 0..k {
            acc += pot.tail.eval(u);
            u = seq.tail().eval(u);
        }
        acc
    })?;

    Ok((
        NdsSequence::new(prefix_maps, tail_map),
        PotentialSequence::new(prefix_pots, tail_pot),
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub top_pressure: f64,
    pub metric_pressure: f64,
    pub gap: f64,
}

/// Variational gap `P_top - P_mu`; nonnegative up to estimator tolerance.
#[allow(clippy::too_many_arguments)]
pub fn variational_gap(
    seq: &NdsSequence,
    pot: &PotentialSequence,
    mu: &GridDensity,
    parts: &PartitionSequence,
    eps: f64,
    n_max: usize,
    resolution: usize,
    opts: &RefinementOptions,
) -> Result<GapReport> {
    let top = top_pressure_estimate(seq, pot, &[eps], n_max, resolution).headline;
    let metric = metric_pressure(seq, pot, mu, parts, n_max, opts)?;
    Ok(GapReport {
        top_pressure: top,
        metric_pressure: metric.value,
        gap: top - metric.value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::IntervalPartition;
    use std::f64::consts::TAU;

    fn doubling() -> NdsSequence {
        NdsSequence::constant(CircleMap::linear(2).unwrap())
    }

    fn zero_pot() -> PotentialSequence {
        PotentialSequence::constant(GridFunction::zero(512).unwrap())
    }

    #[test]
    fn birkhoff_sum_examples() {
        let seq = doubling();
        assert_eq!(birkhoff_sum(&seq, &zero_pot(), 7, 0.3), 0.0);

        let c = PotentialSequence::constant(GridFunction::constant(0.4, 512).unwrap());
        assert!((birkhoff_sum(&seq, &c, 5, 0.3) - 2.0).abs() < 1e-12);

        let neg = PotentialSequence::constant(
            GridFunction::neg_log_derivative(seq.map_at(0), 512).unwrap(),
        );
        let expected = -(seq.log_jacobian_sum(6, 0.3));
        assert!((birkhoff_sum(&seq, &neg, 6, 0.3) - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_potential_collapses_to_counting() {
        let seq = doubling();
        for n in [1usize, 3, 5] {
            let sel = pressure_separated(&seq, &zero_pot(), n, 0.02, 1024);
            let count = metrics::count_separated(&seq, n, 0.02, 1024);
            assert_eq!(sel.chosen.len(), count);
            assert!((sel.log_sum - (count as f64).ln()).abs() < 1e-12);

            let span = pressure_spanning(&seq, &zero_pot(), n, 0.02, 1024);
            let span_count = metrics::count_spanning(&seq, n, 0.02, 1024);
            assert_eq!(span.chosen.len(), span_count);
        }
    }

    #[test]
    fn constant_shift_preserves_packing() {
        let seq = NdsSequence::constant(CircleMap::perturbed(2, 0.2).unwrap());
        let base = PotentialSequence::constant(
            GridFunction::from_fn(512, |x| 0.3 * (TAU * x).sin()).unwrap(),
        );
        let shifted = PotentialSequence::constant(
            GridFunction::from_fn(512, |x| 0.3 * (TAU * x).sin() + 0.7).unwrap(),
        );
        let n = 4;
        let a = pressure_separated(&seq, &base, n, 0.02, 1024);
        let b = pressure_separated(&seq, &shifted, n, 0.02, 1024);
        let mut ca = a.chosen.clone();
        let mut cb = b.chosen.clone();
        ca.sort_unstable();
        cb.sort_unstable();
        assert_eq!(ca, cb, "same packing must be selected");
        assert!((b.log_sum - (a.log_sum + n as f64 * 0.7)).abs() < 1e-9);
    }

    #[test]
    fn pressure_monotone_in_eps() {
        let seq = doubling();
        let pot = PotentialSequence::constant(
            GridFunction::from_fn(512, |x| 0.2 * (TAU * x).cos()).unwrap(),
        );
        let n = 5;
        let small = pressure_separated(&seq, &pot, n, 0.02, 1024).log_sum;
        let large = pressure_separated(&seq, &pot, n, 0.08, 1024).log_sum;
        assert!(large <= small + 1e-12);
    }

    #[test]
    fn spanning_single_point_large_radius() {
        let seq = doubling();
        let pot = PotentialSequence::constant(GridFunction::zero(512).unwrap());
        let sel = pressure_spanning(&seq, &pot, 0, 0.51, 1024);
        assert_eq!(sel.chosen.len(), 1);
        assert!(sel.log_sum.abs() < 1e-12);
    }

    #[test]
    fn spanning_separated_two_sided_relation() {
        let seq = NdsSequence::constant(CircleMap::perturbed(2, 0.15).unwrap());
        let pot = PotentialSequence::constant(
            GridFunction::from_fn(512, |x| 0.4 * (TAU * x + 0.9).sin()).unwrap(),
        );
        for n in 1..=4usize {
            for eps in [0.04, 0.08] {
                let s = pressure_separated(&seq, &pot, n, eps, 2048).log_sum;
                let r_half = pressure_spanning(&seq, &pot, n, eps / 2.0, 2048).log_sum;
                let r = pressure_spanning(&seq, &pot, n, eps, 2048).log_sum;
                let delta = pot.modulus() * eps / 2.0 * n as f64;
                // certified direction
                assert!(r_half >= s - delta - 1e-9, "n={n} eps={eps}");
                // empirical companion at matching radius
                assert!(r <= s + delta + 1e-9, "n={n} eps={eps}");
            }
        }
    }

    #[test]
    fn doubling_neg_log_derivative_pressure_drifts_to_zero() {
        let seq = doubling();
        let pot = PotentialSequence::constant(
            GridFunction::neg_log_derivative(seq.map_at(0), 512).unwrap(),
        );
        let n = 12;
        let sel = pressure_separated(&seq, &pot, n, 0.01, 4096);
        let drift = sel.log_sum / n as f64;
        assert!(drift.abs() <= 0.05, "drift {drift}");
    }

    #[test]
    fn top_pressure_reduces_to_entropy_table_for_zero_potential() {
        let seq = doubling();
        let table = top_pressure_estimate(&seq, &zero_pot(), &[0.02], 6, 1024);
        let counts = crate::entropy::top_entropy_separated(&seq, &[0.02], 6, 1024);
        for (p, c) in table.rows.iter().zip(&counts.rows) {
            assert_eq!(p.n, c.n);
            assert!((p.log_s - (c.count as f64).ln()).abs() < 1e-12);
        }
        assert!((table.headline - counts.headline()).abs() < 1e-12);
    }

    #[test]
    fn constant_potential_shifts_headline() {
        let seq = doubling();
        let c = 0.3;
        let pot = PotentialSequence::constant(GridFunction::constant(c, 512).unwrap());
        let shifted = top_pressure_estimate(&seq, &pot, &[0.02], 6, 1024);
        let base = top_pressure_estimate(&seq, &zero_pot(), &[0.02], 6, 1024);
        assert!((shifted.headline - (base.headline + c)).abs() < 1e-9);
    }

    #[test]
    fn metric_pressure_examples() {
        let seq = doubling();
        let uniform = GridDensity::uniform(512).unwrap();
        let parts = PartitionSequence::constant(IntervalPartition::halves());

        let opts = RefinementOptions::default();
        let zero = metric_pressure(&seq, &zero_pot(), &uniform, &parts, 8, &opts).unwrap();
        assert!((zero.value - 2.0_f64.ln()).abs() < 1e-9);

        let c = PotentialSequence::constant(GridFunction::constant(0.25, 512).unwrap());
        let shifted = metric_pressure(&seq, &c, &uniform, &parts, 8, &opts).unwrap();
        assert!((shifted.value - (zero.value + 0.25)).abs() < 1e-9);

        let neg = PotentialSequence::constant(
            GridFunction::neg_log_derivative(seq.map_at(0), 512).unwrap(),
        );
        let balanced = metric_pressure(&seq, &neg, &uniform, &parts, 8, &opts).unwrap();
        assert!(balanced.value.abs() < 1e-9, "value {}", balanced.value);
    }

    #[test]
    fn power_system_identity_and_degree() {
        let seq = NdsSequence::constant(CircleMap::perturbed(2, 0.1).unwrap());
        let pot = PotentialSequence::constant(
            GridFunction::from_fn(512, |x| 0.2 * (TAU * x).sin()).unwrap(),
        );
        let (s1, p1) = power_system(&seq, &pot, 1).unwrap();
        assert_eq!(s1.map_at(0).degree(), 2);
        for x in [0.0, 0.3, 0.77] {
            assert!((s1.map_at(5).eval(x) - seq.map_at(5).eval(x)).abs() < 1e-14);
            assert!((p1.at(3).eval(x) - pot.at(3).eval(x)).abs() < 1e-12);
        }

        let (s3, _) = power_system(&seq, &pot, 3).unwrap();
        assert_eq!(s3.map_at(0).degree(), 8);
        assert!((s3.uniform_lambda() - seq.uniform_lambda().powi(3)).abs() < 1e-9);
    }

    #[test]
    fn power_rule_on_linear_system() {
        let seq = doubling();
        let c = 0.2;
        let pot = PotentialSequence::constant(GridFunction::constant(c, 512).unwrap());
        let base = top_pressure_estimate(&seq, &pot, &[0.01], 12, 4096).headline;
        let (s2, p2) = power_system(&seq, &pot, 2).unwrap();
        let powered = top_pressure_estimate(&s2, &p2, &[0.01], 6, 4096).headline;
        assert!(
            (powered - 2.0 * base).abs() <= 0.1,
            "powered {powered} vs 2x base {base}"
        );
    }

    #[test]
    fn variational_gap_examples() {
        let uniform = GridDensity::uniform(512).unwrap();
        let parts = PartitionSequence::constant(IntervalPartition::halves());
        let seq = doubling();

        let opts = RefinementOptions::default();
        let zero = variational_gap(&seq, &zero_pot(), &uniform, &parts, 0.01, 12, 4096, &opts)
            .unwrap();
        assert!(zero.gap.abs() < 0.02, "gap {}", zero.gap);

        let c = PotentialSequence::constant(GridFunction::constant(5.0, 512).unwrap());
        let shifted =
            variational_gap(&seq, &c, &uniform, &parts, 0.01, 12, 4096, &opts).unwrap();
        assert!((shifted.gap - zero.gap).abs() < 1e-6, "constants must cancel");
    }
}
