//! Entropy estimators: partition refinement, integral formulas, and
//! separated-set counting tables.

use serde::Serialize;

use crate::error::{NdsError, Result};
use crate::estimator::{self, EstimatorTrace};
use crate::metrics;
use crate::systems::NdsSequence;
use crate::transfer::{ArcIntegrator, GridDensity, DEFAULT_PREIMAGE_TOL};

/// Default ceiling on joined-partition cells.
pub const DEFAULT_CELL_BUDGET: usize = 1 << 22;

const BREAKPOINT_DEDUP: f64 = 1e-12;

/// Knobs for the partition-refinement estimators.
#[derive(Debug, Clone, Copy)]
pub struct RefinementOptions {
    /// Ceiling on joined-partition cells before `CellBlowup`.
    pub cell_budget: usize,
    /// Terminal-window fraction for the limsup/liminf proxies.
    pub window_frac: f64,
    /// Residual tolerance for the branch solves pulling breakpoints back.
    pub preimage_tol: f64,
}

impl Default for RefinementOptions {
    fn default() -> Self {
        RefinementOptions {
            cell_budget: DEFAULT_CELL_BUDGET,
            window_frac: estimator::DEFAULT_WINDOW_FRAC,
            preimage_tol: DEFAULT_PREIMAGE_TOL,
        }
    }
}

/// Finite partition of the circle into arcs between sorted breakpoints.
///
/// `k` breakpoints define `k` arcs; a single breakpoint is the whole circle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalPartition {
    breakpoints: Vec<f64>,
}

impl IntervalPartition {
    pub fn new(mut breakpoints: Vec<f64>) -> Result<Self> {
        if breakpoints.is_empty() {
            return Err(NdsError::InvalidInput(
                "a partition needs at least one breakpoint".into(),
            ));
        }
        if breakpoints.iter().any(|b| !(0.0..1.0).contains(b)) {
            return Err(NdsError::InvalidInput(
                "breakpoints must lie in [0, 1)".into(),
            ));
        }
        breakpoints.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for w in breakpoints.windows(2) {
            if w[1] - w[0] <= 0.0 {
                return Err(NdsError::InvalidInput(
                    "breakpoints must be strictly increasing".into(),
                ));
            }
        }
        Ok(IntervalPartition { breakpoints })
    }

    /// The two half-circle arcs split at 0 and 1/2.
    pub fn halves() -> Self {
        IntervalPartition {
            breakpoints: vec![0.0, 0.5],
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn len(&self) -> usize {
        self.breakpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Arcs as `(start, length)` pairs covering the circle disjointly.
    pub fn cells(&self) -> Vec<(f64, f64)> {
        let k = self.breakpoints.len();
        (0..k)
            .map(|i| {
                let start = self.breakpoints[i];
                let end = if i + 1 < k {
                    self.breakpoints[i + 1]
                } else {
                    self.breakpoints[0] + 1.0
                };
                (start, end - start)
            })
            .collect()
    }
}

/// Partition for every time step: finite prefix plus a repeated tail.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSequence {
    prefix: Vec<IntervalPartition>,
    tail: IntervalPartition,
}

impl PartitionSequence {
    pub fn new(prefix: Vec<IntervalPartition>, tail: IntervalPartition) -> Self {
        PartitionSequence { prefix, tail }
    }

    pub fn constant(partition: IntervalPartition) -> Self {
        Self::new(Vec::new(), partition)
    }

    pub fn at(&self, n: usize) -> &IntervalPartition {
        self.prefix.get(n).unwrap_or(&self.tail)
    }

    /// Largest member cardinality (finite by the prefix + tail shape).
    pub fn max_cells(&self) -> usize {
        self.prefix
            .iter()
            .map(IntervalPartition::len)
            .chain([self.tail.len()])
            .max()
            .unwrap()
    }
}

fn dedup_circle_sorted(points: &mut Vec<f64>) {
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    points.dedup_by(|a, b| (*a - *b).abs() < BREAKPOINT_DEDUP);
    if points.len() > 1 {
        let first = points[0];
        let last = *points.last().unwrap();
        if (first + 1.0 - last).abs() < BREAKPOINT_DEDUP {
            points.pop();
        }
    }
}

/// Common refinement `P_0 v f_0^{-1} P_1 v ... v f_0^{-(n-1)} P_{n-1}`,
/// realized by pulling breakpoints back through the branch inverses.
pub fn joined_partition(
    seq: &NdsSequence,
    parts: &PartitionSequence,
    n: usize,
    opts: &RefinementOptions,
) -> Result<IntervalPartition> {
    assert!(n >= 1, "joined partition needs at least one step");
    let mut points: Vec<f64> = parts.at(n - 1).breakpoints().to_vec();
    for j in (0..n - 1).rev() {
        let map = seq.map_at(j);
        let mut pulled = Vec::with_capacity(points.len() * map.degree() as usize);
        for &b in &points {
            pulled.extend(map.branch_preimages(b, opts.preimage_tol)?);
        }
        pulled.extend_from_slice(parts.at(j).breakpoints());
        if pulled.len() > opts.cell_budget {
            return Err(NdsError::CellBlowup {
                cells: pulled.len(),
                budget: opts.cell_budget,
            });
        }
        points = pulled;
    }
    dedup_circle_sorted(&mut points);
    IntervalPartition::new(points)
}

/// Shannon entropy `-sum mu(P) log mu(P)` of a partition under a density,
/// with cell measures integrated exactly against the piecewise-linear
/// density (grid cells split at breakpoints).
pub fn partition_entropy(mu: &GridDensity, partition: &IntervalPartition) -> f64 {
    let integrator = ArcIntegrator::new(mu);
    let total = integrator.total();
    let mut h = 0.0;
    for (start, len) in partition.cells() {
        let mass = integrator.arc(start, len) / total;
        if mass > 0.0 {
            h -= mass * mass.ln();
        }
    }
    h
}

/// Partition-refinement entropy estimate: trace of `(1/n) H(join_n)` with a
/// terminal-window max as the limsup proxy.
pub fn metric_entropy_estimate(
    seq: &NdsSequence,
    parts: &PartitionSequence,
    mu: &GridDensity,
    n_max: usize,
    opts: &RefinementOptions,
) -> Result<EstimatorTrace> {
    assert!(n_max >= 2, "horizon must be at least 2");
    let mut per_n = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let joined = joined_partition(seq, parts, n, opts)?;
        let h = partition_entropy(mu, &joined);
        per_n.push((n, h / n as f64));
    }
    Ok(estimator::limsup_proxy(&per_n, opts.window_frac))
}

/// Midpoint-quadrature trace of `(1/n) int log |det Df_0^n| dm` with the
/// terminal-window max as the limsup proxy.
pub fn metric_entropy_formula(
    seq: &NdsSequence,
    n_max: usize,
    quad_points: usize,
    window_frac: f64,
) -> EstimatorTrace {
    assert!(quad_points >= 128, "quadrature grid too coarse");
    let q = quad_points;
    let mut positions: Vec<f64> = (0..q).map(|j| (j as f64 + 0.5) / q as f64).collect();
    let mut logdet = vec![0.0_f64; q];
    let mut per_n = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let map = seq.map_at(n - 1);
        for (pos, acc) in positions.iter_mut().zip(logdet.iter_mut()) {
            *acc += map.derivative(*pos).ln();
            *pos = map.eval(*pos);
        }
        let mean = logdet.iter().sum::<f64>() / q as f64;
        per_n.push((n, mean / n as f64));
    }
    estimator::limsup_proxy(&per_n, window_frac)
}

/// Trace of `(1/n) log int |det Df_0^n| dm` (log-domain accumulation) with
/// the terminal-window max as the limsup proxy.
pub fn top_entropy_formula(
    seq: &NdsSequence,
    n_max: usize,
    quad_points: usize,
    window_frac: f64,
) -> EstimatorTrace {
    assert!(quad_points >= 128, "quadrature grid too coarse");
    let q = quad_points;
    let mut positions: Vec<f64> = (0..q).map(|j| (j as f64 + 0.5) / q as f64).collect();
    let mut logdet = vec![0.0_f64; q];
    let mut per_n = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let map = seq.map_at(n - 1);
        for (pos, acc) in positions.iter_mut().zip(logdet.iter_mut()) {
            *acc += map.derivative(*pos).ln();
            *pos = map.eval(*pos);
        }
        let peak = logdet.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean_exp = logdet.iter().map(|l| (l - peak).exp()).sum::<f64>() / q as f64;
        let log_integral = peak + mean_exp.ln();
        per_n.push((n, log_integral / n as f64));
    }
    estimator::limsup_proxy(&per_n, window_frac)
}

/// One row of a separated-count table.
#[derive(Debug, Clone, Serialize)]
pub struct CountRow {
    pub n: usize,
    pub eps: f64,
    pub count: usize,
    /// `(1/n) log count`.
    pub value: f64,
}

/// Separated-count table across horizons and radii.
#[derive(Debug, Clone, Serialize)]
pub struct SeparatedTable {
    pub rows: Vec<CountRow>,
    /// Headline value per radius: the `(1/n) log count` reading at the full
    /// horizon `n_max` (counting estimators saturate from below, so the
    /// deepest horizon is the informative one).
    pub estimates: Vec<(f64, f64)>,
}

impl SeparatedTable {
    /// Headline at the smallest radius.
    pub fn headline(&self) -> f64 {
        self.estimates
            .iter()
            .fold((f64::INFINITY, f64::NAN), |acc, &(eps, v)| {
                if eps < acc.0 {
                    (eps, v)
                } else {
                    acc
                }
            })
            .1
    }
}

/// Entropy from separated-set growth: `(1/n) log count_separated(n, eps)`
/// for every horizon and radius. Counts are checked to be nonincreasing in
/// the radius at fixed horizon.
pub fn top_entropy_separated(
    seq: &NdsSequence,
    eps_list: &[f64],
    n_max: usize,
    resolution: usize,
) -> SeparatedTable {
    assert!(!eps_list.is_empty());
    for &eps in eps_list {
        assert!(
            resolution as f64 >= 10.0 / eps,
            "resolution {resolution} too coarse for eps {eps}"
        );
    }
    let orbits = metrics::grid_orbits(seq, n_max, resolution);
    let mut rows = Vec::new();
    let mut estimates = Vec::new();
    for &eps in eps_list {
        let mut final_value = f64::NAN;
        for n in 1..=n_max {
            let count = metrics::greedy_separated(&orbits, n, eps, None).len();
            let value = (count as f64).ln() / n as f64;
            rows.push(CountRow {
                n,
                eps,
                count,
                value,
            });
            if n == n_max {
                final_value = value;
            }
        }
        estimates.push((eps, final_value));
    }
    // sanity: counts nonincreasing in eps at fixed n
    for n in 1..=n_max {
        let mut prev: Option<(f64, usize)> = None;
        for row in rows.iter().filter(|r| r.n == n) {
            if let Some((peps, pcount)) = prev {
                if row.eps > peps {
                    assert!(
                        row.count <= pcount,
                        "count not monotone in eps at n={n}: {pcount}@{peps} -> {}@{}",
                        row.count,
                        row.eps
                    );
                }
            }
            prev = Some((row.eps, row.count));
        }
    }
    SeparatedTable { rows, estimates }
}
