//! Expansivity certificates on finite nets and the Frink metrization
//! pipeline producing adapted expanding metrics.
//!
//! All checks run exhaustively on a finite net with a finite horizon:
//! positive results are certificates on the net, failures carry explicit
//! witnesses.

use serde::Serialize;

use crate::circle;
use crate::error::{NdsError, Result};
use crate::systems::NdsSequence;

/// Uniform net `k / size` on the circle.
pub fn circle_net(size: usize) -> Vec<f64> {
    (0..size).map(|k| k as f64 / size as f64).collect()
}

/// Outcome of a strong-uniform-expansivity search.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome")]
pub enum SueOutcome {
    /// Smallest `N` such that `d_{i,N}(x, y) < delta` forces
    /// `d_i(x, y) < eps` for all checked base times and net pairs.
    Horizon { n: usize },
    /// A pair that stays `delta`-close through the whole budget while
    /// starting at distance `>= eps`.
    Failure { time: usize, x: f64, y: f64 },
}

/// Search for the smallest horizon at which `delta`-closeness over the
/// window forces `eps`-closeness at the start, over all base times
/// `i <= time_window` and all pairs of a uniform net.
pub fn sue_horizon(
    seq: &NdsSequence,
    delta: f64,
    eps: f64,
    n_max: usize,
    time_window: usize,
    net_size: usize,
) -> SueOutcome {
    assert!(
        0.0 < eps && eps < delta && delta <= 0.5,
        "need 0 < eps < delta <= 1/2"
    );
    let net = circle_net(net_size);
    let mut required = 0usize;
    for i in 0..=time_window {
        // orbit rows for this base time
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n_max + 1);
        rows.push(net.clone());
        for j in 0..n_max {
            let map = seq.map_at(i + j);
            rows.push(rows[j].iter().map(|&u| map.eval(u)).collect());
        }
        for p in 0..net_size {
            for q in (p + 1)..net_size {
                if circle::dist(net[p], net[q]) < eps {
                    continue;
                }
                // first step at which the pair escapes the delta tube
                let mut killed = None;
                for (j, row) in rows.iter().enumerate() {
                    if circle::dist(row[p], row[q]) >= delta {
                        killed = Some(j);
                        break;
                    }
                }
                match killed {
                    Some(j) => required = required.max(j),
                    None => {
                        return SueOutcome::Failure {
                            time: i,
                            x: net[p],
                            y: net[q],
                        }
                    }
                }
            }
        }
    }
    SueOutcome::Horizon { n: required }
}

/// Symmetric boolean relation on net points, stored as row bitsets.
#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    n: usize,
    words: usize,
    rows: Vec<u64>,
}

impl Relation {
    pub fn full(n: usize) -> Self {
        let words = n.div_ceil(64);
        let mut rel = Relation {
            n,
            words,
            rows: vec![!0u64; words * n],
        };
        // clear padding bits
        let tail_bits = n % 64;
        if tail_bits != 0 {
            let mask = (1u64 << tail_bits) - 1;
            for i in 0..n {
                rel.rows[i * words + words - 1] &= mask;
            }
        }
        rel
    }

    pub fn diagonal(n: usize) -> Self {
        let words = n.div_ceil(64);
        let mut rel = Relation {
            n,
            words,
            rows: vec![0u64; words * n],
        };
        for i in 0..n {
            rel.insert(i, i);
        }
        rel
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.rows[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    #[inline]
    pub fn insert(&mut self, i: usize, j: usize) {
        self.rows[i * self.words + j / 64] |= 1u64 << (j % 64);
    }

    pub fn is_subset_of(&self, other: &Relation) -> bool {
        self.rows
            .iter()
            .zip(&other.rows)
            .all(|(a, b)| a & !b == 0)
    }

    /// Relational composition `self o self`.
    pub fn compose_self(&self) -> Relation {
        let mut out = Relation {
            n: self.n,
            words: self.words,
            rows: vec![0u64; self.words * self.n],
        };
        let mut acc = vec![0u64; self.words];
        for i in 0..self.n {
            acc.fill(0);
            let row_i = &self.rows[i * self.words..(i + 1) * self.words];
            for (w, word) in row_i.iter().enumerate() {
                let mut bits = *word;
                while bits != 0 {
                    let b = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    let k = w * 64 + b;
                    let row_k = &self.rows[k * self.words..(k + 1) * self.words];
                    for (a, r) in acc.iter_mut().zip(row_k) {
                        *a |= r;
                    }
                }
            }
            out.rows[i * self.words..(i + 1) * self.words].copy_from_slice(&acc);
        }
        out
    }

    pub fn off_diagonal_is_empty(&self) -> bool {
        for i in 0..self.n {
            for w in 0..self.words {
                let mut word = self.rows[i * self.words + w];
                if i / 64 == w {
                    word &= !(1u64 << (i % 64));
                }
                if word != 0 {
                    return false;
                }
            }
        }
        true
    }

}

/// Nested Bowen-proximity relations `V_0 = all pairs`,
/// `V_k = {(x, y) : d_{base,k}(x, y) < delta}` for `k = 1..=depth`.
///
/// The top level must separate the diagonal.
pub fn build_neighborhoods(
    seq: &NdsSequence,
    base_time: usize,
    delta: f64,
    depth: usize,
    net: &[f64],
) -> Result<Vec<Relation>> {
    let n = net.len();
    let mut levels = Vec::with_capacity(depth + 1);
    levels.push(Relation::full(n));
    if depth == 0 {
        return Ok(levels);
    }
    // running Bowen maxima per pair
    let mut running: Vec<f64> = Vec::with_capacity(n * n);
    for &x in net {
        for &y in net {
            running.push(circle::dist(x, y));
        }
    }
    let mut points: Vec<f64> = net.to_vec();
    for k in 1..=depth {
        let map = seq.map_at(base_time + k - 1);
        for p in points.iter_mut() {
            *p = map.eval(*p);
        }
        for (idx, r) in running.iter_mut().enumerate() {
            let (i, j) = (idx / n, idx % n);
            *r = r.max(circle::dist(points[i], points[j]));
        }
        let mut rel = Relation::diagonal(n);
        for i in 0..n {
            for j in 0..n {
                if running[i * n + j] < delta {
                    rel.insert(i, j);
                }
            }
        }
        debug_assert!(rel.is_subset_of(&levels[k - 1]));
        levels.push(rel);
    }
    if !levels[depth].off_diagonal_is_empty() {
        return Err(NdsError::DepthInsufficient { depth });
    }
    Ok(levels)
}

/// Dense symmetric matrix of metric values on the net.
#[derive(Debug, Clone, Serialize)]
pub struct MetricMatrix {
    n: usize,
    data: Vec<f64>,
}

impl MetricMatrix {
    fn zeros(n: usize) -> Self {
        MetricMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    /// Exhaustive metric-axiom check: symmetry, zero diagonal, triangle
    /// inequality with float slack.
    pub fn verify_metric(&self, slack: f64) -> Result<()> {
        for i in 0..self.n {
            if self.get(i, i) != 0.0 {
                return Err(NdsError::InvalidInput(format!(
                    "nonzero diagonal at {i}"
                )));
            }
            for j in 0..self.n {
                if self.get(i, j) != self.get(j, i) {
                    return Err(NdsError::InvalidInput(format!(
                        "asymmetry at ({i}, {j})"
                    )));
                }
            }
        }
        for k in 0..self.n {
            for i in 0..self.n {
                let dik = self.get(i, k);
                for j in 0..self.n {
                    if self.get(i, j) > dik + self.get(k, j) + slack {
                        return Err(NdsError::InvalidInput(format!(
                            "triangle violation at ({i}, {j}) via {k}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Frink metric built from nested relations.
#[derive(Debug, Clone)]
pub struct FrinkMetric {
    pub rho: MetricMatrix,
    /// Levels over which the dyadic sandwich was verified.
    pub verified_levels: usize,
}

/// Checks the metrization hypotheses (nesting, symmetry with the diagonal,
/// triple composition `U_k o U_k o U_k` inside `U_{k-1}`), then builds the
/// shortest-path metric with edge weights `2^{-max{k : (a,b) in U_k}}` and
/// verifies the dyadic sandwich at every level:
/// membership in `U_k` bounds `rho` by `2^{-k}`, and `rho < 2^{-k}` forces
/// membership in `U_{k-1}`; chains can shorten a direct edge by at most half.
pub fn frink_metric(levels: &[Relation]) -> Result<FrinkMetric> {
    let depth = levels.len() - 1;
    let n = levels[0].len();
    for (k, level) in levels.iter().enumerate() {
        for i in 0..n {
            if !level.contains(i, i) {
                return Err(NdsError::InvalidInput(format!(
                    "diagonal missing from level {k}"
                )));
            }
            for j in 0..n {
                if level.contains(i, j) != level.contains(j, i) {
                    return Err(NdsError::InvalidInput(format!(
                        "level {k} is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        if k > 0 && !level.is_subset_of(&levels[k - 1]) {
            return Err(NdsError::InvalidInput(format!(
                "level {k} is not nested in level {}",
                k - 1
            )));
        }
    }
    if !levels[depth].off_diagonal_is_empty() {
        return Err(NdsError::DepthInsufficient { depth });
    }
    for k in 1..=depth {
        let double = levels[k].compose_self();
        let mut triple = Relation::diagonal(n);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                // (i, j) in U_k o (U_k o U_k)
                let mut hit = false;
                for a in 0..n {
                    if levels[k].contains(i, a) && double.contains(a, j) {
                        hit = true;
                        break;
                    }
                }
                if hit {
                    triple.insert(i, j);
                }
            }
        }
        if !triple.is_subset_of(&levels[k - 1]) {
            // extract a witness chain
            'outer: for i in 0..n {
                for j in 0..n {
                    if triple.contains(i, j) && !levels[k - 1].contains(i, j) {
                        for a in 0..n {
                            for b in 0..n {
                                if levels[k].contains(i, a)
                                    && levels[k].contains(a, b)
                                    && levels[k].contains(b, j)
                                {
                                    return Err(NdsError::HypothesisViolated {
                                        level: k,
                                        chain: [i, a, b, j],
                                    });
                                }
                            }
                        }
                        break 'outer;
                    }
                }
            }
            return Err(NdsError::HypothesisViolated {
                level: k,
                chain: [0, 0, 0, 0],
            });
        }
    }

    // deepest containing level per pair -> edge weights
    let mut weight = MetricMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let mut deepest = 0usize;
            for (k, level) in levels.iter().enumerate() {
                if level.contains(i, j) {
                    deepest = k;
                }
            }
            weight.set(i, j, 0.5_f64.powi(deepest as i32));
        }
    }
    // exact all-pairs shortest path
    let mut rho = weight.clone();
    for k in 0..n {
        for i in 0..n {
            let dik = rho.get(i, k);
            if !dik.is_finite() {
                continue;
            }
            for j in 0..n {
                let via = dik + rho.get(k, j);
                if via < rho.get(i, j) {
                    rho.set(i, j, via);
                }
            }
        }
    }

    for k in 1..=depth {
        let bound = 0.5_f64.powi(k as i32);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                if levels[k].contains(i, j) && rho.get(i, j) > bound + 1e-15 {
                    return Err(NdsError::SandwichViolated { level: k, i, j });
                }
                if rho.get(i, j) < bound && !levels[k - 1].contains(i, j) {
                    return Err(NdsError::SandwichViolated { level: k, i, j });
                }
                if rho.get(i, j) < 0.5 * weight.get(i, j) - 1e-15 {
                    return Err(NdsError::SandwichViolated { level: k, i, j });
                }
            }
        }
    }

    Ok(FrinkMetric {
        rho,
        verified_levels: depth,
    })
}

/// Adapted metric on the net at one base time.
#[derive(Debug, Clone)]
pub struct AdaptedMetric {
    pub matrix: MetricMatrix,
    /// Largest arc distance between an orbit image and its nearest net point.
    pub projection_slack: f64,
}

fn nearest_net_index(net_size: usize, x: f64) -> usize {
    ((circle::wrap(x) * net_size as f64).round() as usize) % net_size
}

/// Weighted orbit sum
/// `rho'_n(x, y) = sum_{i=0}^{3N-1} mu^{-i} rho_{n+i}(f_n^i(x), f_n^i(y))`
/// with `mu = 2^{1/(3N)}`; off-net orbit images are projected to the nearest
/// net point and the worst projection error is reported.
pub fn adapted_metric(
    seq: &NdsSequence,
    base_time: usize,
    rho_family: &[MetricMatrix],
    net: &[f64],
    big_n: usize,
) -> Result<AdaptedMetric> {
    if big_n == 0 {
        return Err(NdsError::InvalidInput(
            "adapted metric needs N >= 1 (so at least 3 terms)".into(),
        ));
    }
    let terms = 3 * big_n;
    if rho_family.len() < terms {
        return Err(NdsError::InvalidInput(format!(
            "need {terms} metrics, got {}",
            rho_family.len()
        )));
    }
    let n = net.len();
    let mu = 2.0_f64.powf(1.0 / terms as f64);
    let mut matrix = MetricMatrix::zeros(n);
    let mut slack = 0.0_f64;

    // orbit index trajectories of the net under the sequence
    let mut index_rows: Vec<Vec<usize>> = Vec::with_capacity(terms);
    let mut points: Vec<f64> = net.to_vec();
    for i in 0..terms {
        let row: Vec<usize> = points
            .iter()
            .map(|&x| {
                let idx = nearest_net_index(n, x);
                slack = slack.max(circle::dist(x, net[idx]));
                idx
            })
            .collect();
        index_rows.push(row);
        let map = seq.map_at(base_time + i);
        for p in points.iter_mut() {
            *p = map.eval(*p);
        }
    }

    for i in 0..n {
        for j in (i + 1)..n {
            let mut acc = 0.0;
            for (step, row) in index_rows.iter().enumerate() {
                acc += rho_family[step].get(row[i], row[j]) / mu.powi(step as i32);
            }
            matrix.set(i, j, acc);
            matrix.set(j, i, acc);
        }
    }
    matrix.verify_metric(1e-12)?;
    Ok(AdaptedMetric {
        matrix,
        projection_slack: slack,
    })
}

/// Report of the small-distance expansion check.
#[derive(Debug, Clone, Serialize)]
pub struct ExpansionReport {
    /// Pairs below the gate whose image distance fell short of
    /// `mu * rho' - 2 * slack`.
    pub violations: Vec<(usize, usize)>,
    /// Minimal image-to-source ratio over checked pairs; infinite when the
    /// gate excludes every pair.
    pub min_ratio: f64,
    pub checked: usize,
    pub threshold: f64,
    pub mu: f64,
}

/// Check that the time-`n` map expands small adapted distances:
/// over net pairs with `0 < rho'_n < threshold`, the image distance must be
/// at least `mu * rho'_n` up to twice the projection slack.
#[allow(clippy::too_many_arguments)]
pub fn expansion_check(
    rho_n: &MetricMatrix,
    rho_next: &MetricMatrix,
    seq: &NdsSequence,
    time_n: usize,
    net: &[f64],
    threshold: f64,
    mu: f64,
    slack: f64,
) -> ExpansionReport {
    let n = net.len();
    let map = seq.map_at(time_n);
    let image: Vec<usize> = net
        .iter()
        .map(|&x| nearest_net_index(n, map.eval(x)))
        .collect();
    let mut violations = Vec::new();
    let mut min_ratio = f64::INFINITY;
    let mut checked = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = rho_n.get(i, j);
            if d <= 0.0 || d >= threshold {
                continue;
            }
            checked += 1;
            let img = rho_next.get(image[i], image[j]);
            min_ratio = min_ratio.min(img / d);
            if img < mu * d - 2.0 * slack {
                violations.push((i, j));
            }
        }
    }
    ExpansionReport {
        violations,
        min_ratio,
        checked,
        threshold,
        mu,
    }
}

/// Cover counts documenting uniform total boundedness of the (stationary)
/// state spaces: `ceil(1/(2 eps))` balls of radius `eps` per time.
#[derive(Debug, Clone, Serialize)]
pub struct CoverReport {
    pub eps: f64,
    pub cover_counts: Vec<usize>,
}

pub fn uniform_total_boundedness(eps: f64, times: usize) -> CoverReport {
    assert!(eps > 0.0);
    let count = (1.0 / (2.0 * eps)).ceil() as usize;
    CoverReport {
        eps,
        cover_counts: vec![count.max(1); times],
    }
}

/// Everything the Frink pipeline produces at base time 0.
#[derive(Debug, Clone)]
pub struct FrinkNet {
    pub points: Vec<f64>,
    pub depth: usize,
    pub levels: Vec<Relation>,
    pub rho: MetricMatrix,
    pub rho_prime: MetricMatrix,
}

#[derive(Debug, Clone)]
pub struct FrinkPipelineReport {
    pub net: FrinkNet,
    /// Uniformity horizon used for level subsampling.
    pub big_n: usize,
    pub mu: f64,
    pub expansion: ExpansionReport,
    pub sandwich_levels: usize,
    pub projection_slack: f64,
}

/// Smallest `N` with `d_{t,N} < delta  =>  d_t < eps` across the base times
/// examined by the pipeline.
fn uniformity_horizon(
    seq: &NdsSequence,
    delta: f64,
    eps: f64,
    n_max: usize,
    time_window: usize,
    net_size: usize,
) -> Result<usize> {
    match sue_horizon(seq, delta, eps, n_max, time_window, net_size) {
        SueOutcome::Horizon { n } => Ok(n.max(1)),
        SueOutcome::Failure { time, x, y } => Err(NdsError::PrecondViolated(format!(
            "no uniform horizon on the net: pair ({x}, {y}) at time {time} never separates"
        ))),
    }
}

/// Full construction: choose the uniformity horizon `N`, subsample the
/// Bowen relations every `N` levels into the metrization input, build the
/// Frink metrics for times `0 .. 3N`, form the adapted metrics at times 0
/// and 1, and run the expansion check with the standard `1/32` gate.
pub fn frink_pipeline(
    seq: &NdsSequence,
    net_size: usize,
    depth: usize,
    delta: f64,
) -> Result<FrinkPipelineReport> {
    if depth < 2 {
        return Err(NdsError::InvalidInput("pipeline depth must be >= 2".into()));
    }
    let net = circle_net(net_size);
    let alpha = delta / 2.0;
    // the horizon must be uniform over base times; past the prefix the
    // sequence repeats, so scanning the prefix window decides it
    let time_window = seq.prefix_len().max(4);
    let big_n = uniformity_horizon(seq, delta, alpha / 3.0, 64, time_window, net_size)?;
    let terms = 3 * big_n;
    let mu = 2.0_f64.powf(1.0 / terms as f64);
    let v_depth = (depth - 1) * big_n;

    let stationary = seq.prefix_len() == 0;
    let mut metrics_by_time: Vec<MetricMatrix> = Vec::with_capacity(terms + 1);
    let mut levels_at_zero: Option<Vec<Relation>> = None;
    for t in 0..=terms {
        if stationary && t > 0 {
            metrics_by_time.push(metrics_by_time[0].clone());
            continue;
        }
        let v_levels = build_neighborhoods(seq, t, delta, v_depth, &net)?;
        let mut u_levels = Vec::with_capacity(depth + 1);
        u_levels.push(Relation::full(net_size));
        for k in 1..=depth {
            u_levels.push(v_levels[(k - 1) * big_n].clone());
        }
        let frink = frink_metric(&u_levels)?;
        metrics_by_time.push(frink.rho);
        if t == 0 {
            levels_at_zero = Some(u_levels);
        }
    }

    let adapted0 = adapted_metric(seq, 0, &metrics_by_time[0..terms], &net, big_n)?;
    let adapted1 = adapted_metric(seq, 1, &metrics_by_time[1..=terms], &net, big_n)?;
    let slack = adapted0.projection_slack.max(adapted1.projection_slack);
    let expansion = expansion_check(
        &adapted0.matrix,
        &adapted1.matrix,
        seq,
        0,
        &net,
        1.0 / 32.0,
        mu,
        slack,
    );

    Ok(FrinkPipelineReport {
        net: FrinkNet {
            points: net,
            depth,
            levels: levels_at_zero.unwrap(),
            rho: metrics_by_time[0].clone(),
            rho_prime: adapted0.matrix,
        },
        big_n,
        mu,
        expansion,
        sandwich_levels: depth,
        projection_slack: slack,
    })
}
