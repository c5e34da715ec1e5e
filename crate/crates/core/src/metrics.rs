//! Bowen metrics and balls, separated/spanning counts on grids, distortion
//! and volume-lemma checks.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::circle;
use crate::error::{NdsError, Result};
use crate::systems::NdsSequence;

const BALL_BISECT_ITERS: usize = 60;

/// Bowen distance `d_{i,n}(x, y) = max_{0<=j<=n} d(f_i^j(x), f_i^j(y))`.
pub fn bowen_distance(seq: &NdsSequence, i: usize, n: usize, x: f64, y: f64) -> f64 {
    let mut u = x;
    let mut v = y;
    let mut best = circle::dist(u, v);
    for j in 0..n {
        let map = seq.map_at(i + j);
        u = map.eval(u);
        v = map.eval(v);
        best = best.max(circle::dist(u, v));
    }
    best
}

/// Conservative even-covering threshold `1/(4*Gamma)`.
///
/// Distinct preimages of a point under any member map are at least `1/Gamma`
/// apart (mean value theorem on the lift), and radii below a quarter of that
/// separation keep every ball evenly covered with the Bowen ball contained
/// in a single inverse-branch arc.
pub fn radius_threshold(seq: &NdsSequence) -> f64 {
    0.25 / seq.uniform_gamma()
}

/// A Bowen ball realized as a circle arc.
#[derive(Debug, Clone, Serialize)]
pub struct BowenBallArc {
    pub center: f64,
    pub order: usize,
    pub radius: f64,
    pub left: f64,
    pub right: f64,
    pub measure: f64,
}

/// One-sided extent of the Bowen ball: largest `t` with all lift spreads
/// below `eps`. The spread `max_j |F^j(x + dir*t) - F^j(x)|` is strictly
/// increasing in `t`, so bisection on `[0, eps]` is exact.
fn ball_side(seq: &NdsSequence, i: usize, n: usize, x: f64, eps: f64, dir: f64) -> f64 {
    let spread = |t: f64| -> f64 {
        let mut u = x;
        let mut v = x + dir * t;
        let mut best = t;
        for j in 0..n {
            let map = seq.map_at(i + j);
            u = map.lift(u);
            v = map.lift(v);
            best = best.max((v - u) * dir);
        }
        best
    };
    let (mut lo, mut hi) = (0.0_f64, eps);
    for _ in 0..BALL_BISECT_ITERS {
        let mid = 0.5 * (lo + hi);
        if spread(mid) < eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Bowen ball `B_i^n(x, eps)` as an arc, with exact endpoints found by
/// outward bisection on the monotone lift spread.
pub fn bowen_ball(seq: &NdsSequence, i: usize, n: usize, x: f64, eps: f64) -> Result<BowenBallArc> {
    let threshold = radius_threshold(seq);
    if eps <= 0.0 || eps >= threshold {
        return Err(NdsError::RadiusTooLarge { eps, threshold });
    }
    let right = ball_side(seq, i, n, x, eps, 1.0);
    let left = ball_side(seq, i, n, x, eps, -1.0);
    Ok(BowenBallArc {
        center: x,
        order: n,
        radius: eps,
        left: circle::wrap(x - left),
        right: circle::wrap(x + right),
        measure: left + right,
    })
}

/// Precomputed orbits of a uniform grid: `orbit[j][i] = f_0^j(points[i])`.
pub(crate) struct GridOrbits {
    pub points: Vec<f64>,
    pub orbit: Vec<Vec<f64>>,
}

pub(crate) fn grid_orbits(seq: &NdsSequence, n: usize, resolution: usize) -> GridOrbits {
    let points: Vec<f64> = (0..resolution).map(|k| k as f64 / resolution as f64).collect();
    let mut orbit = Vec::with_capacity(n + 1);
    orbit.push(points.clone());
    for j in 0..n {
        let map = seq.map_at(j);
        let prev = &orbit[j];
        let next: Vec<f64> = prev.iter().map(|&u| map.eval(u)).collect();
        orbit.push(next);
    }
    GridOrbits { points, orbit }
}

impl GridOrbits {
    /// Whether grid points `a`, `b` are `(n, eps)`-separated; exits on the
    /// first step that certifies separation.
    #[inline]
    pub fn separated(&self, n: usize, eps: f64, a: usize, b: usize) -> bool {
        for row in self.orbit[..=n].iter() {
            if circle::dist(row[a], row[b]) >= eps {
                return true;
            }
        }
        false
    }
}

/// Greedy packing (first-fit in the given order) of `(n, eps)`-separated grid
/// points. Returns the accepted grid indices in acceptance order.
pub(crate) fn greedy_separated(
    orbits: &GridOrbits,
    n: usize,
    eps: f64,
    order: Option<&[usize]>,
) -> Vec<usize> {
    let resolution = orbits.points.len();
    let mut accepted: Vec<usize> = Vec::new();
    let consider = |idx: usize, accepted: &mut Vec<usize>| {
        if accepted.iter().all(|&a| orbits.separated(n, eps, a, idx)) {
            accepted.push(idx);
        }
    };
    match order {
        Some(order) => {
            for &idx in order {
                consider(idx, &mut accepted);
            }
        }
        None => {
            for idx in 0..resolution {
                consider(idx, &mut accepted);
            }
        }
    }
    accepted
}

/// Lower-bound estimate of the maximal `(n, eps)`-separated cardinality via
/// deterministic greedy packing over a uniform grid (first-fit by grid
/// index).
pub fn count_separated(seq: &NdsSequence, n: usize, eps: f64, resolution: usize) -> usize {
    assert!(
        resolution as f64 >= 10.0 / eps,
        "resolution {resolution} too coarse for eps {eps}"
    );
    let orbits = grid_orbits(seq, n, resolution);
    greedy_separated(&orbits, n, eps, None).len()
}

/// Greedy cover of the grid by Bowen `eps`-balls centered at grid points.
///
/// Each step picks the candidate covering the most still-uncovered grid
/// points; ties prefer the smaller weight, then the smaller grid index.
/// With no weights this is the plain spanning-count cover.
pub(crate) fn greedy_spanning(
    orbits: &GridOrbits,
    n: usize,
    eps: f64,
    weights: Option<&[f64]>,
) -> Vec<usize> {
    let resolution = orbits.points.len();
    // A center only covers points within plain arc distance eps (the j = 0
    // term of the Bowen max), so scanning an index window suffices. The
    // span is capped at one full turn so wrap-around never visits an index
    // twice.
    let window = (eps * resolution as f64).ceil() as isize + 1;
    let span = (2 * window + 1).min(resolution as isize);
    let covers = |c: usize, z: usize| -> bool { !orbits.separated(n, eps, c, z) };
    let neighbors = move |c: usize| {
        let start = c as isize - window;
        let r = resolution as isize;
        (start..start + span).map(move |z| z.rem_euclid(r) as usize)
    };

    let mut uncovered = resolution;
    let mut covered = vec![false; resolution];
    let mut count: Vec<usize> = vec![0; resolution];
    for (c, slot) in count.iter_mut().enumerate() {
        for z in neighbors(c) {
            if covers(c, z) {
                *slot += 1;
            }
        }
    }

    // true if candidate a beats candidate b
    fn better(count: &[usize], weights: Option<&[f64]>, a: usize, b: usize) -> bool {
        if count[a] != count[b] {
            return count[a] > count[b];
        }
        if let Some(w) = weights {
            if w[a] != w[b] {
                return w[a] < w[b];
            }
        }
        a < b
    }

    let mut chosen = Vec::new();
    while uncovered > 0 {
        let mut best = usize::MAX;
        for c in 0..resolution {
            if count[c] > 0 && (best == usize::MAX || better(&count, weights, c, best)) {
                best = c;
            }
        }
        debug_assert_ne!(best, usize::MAX, "uncovered point must cover itself");
        chosen.push(best);
        let mut newly = Vec::new();
        for z in neighbors(best) {
            if !covered[z] && covers(best, z) {
                covered[z] = true;
                uncovered -= 1;
                newly.push(z);
            }
        }
        for z in newly {
            for c in neighbors(z) {
                if count[c] > 0 && covers(c, z) {
                    count[c] -= 1;
                }
            }
        }
    }
    chosen
}

/// Upper-bound estimate of the minimal `(n, eps)`-spanning cardinality via a
/// deterministic greedy cover of the same grid.
pub fn count_spanning(seq: &NdsSequence, n: usize, eps: f64, resolution: usize) -> usize {
    assert!(
        resolution as f64 >= 10.0 / eps,
        "resolution {resolution} too coarse for eps {eps}"
    );
    let orbits = grid_orbits(seq, n, resolution);
    greedy_spanning(&orbits, n, eps, None).len()
}

/// Distortion constant `C0 = Gamma / (lambda - 1)`.
///
/// `log F'` has Lipschitz constant at most `Gamma` (since `|F''| <= Gamma`
/// and `F' >= 1`), and along a Bowen-proximal orbit the step distances are
/// dominated by the geometric series `sum lambda^{-k} <= 1/(lambda - 1)`
/// of the final distance.
pub fn distortion_constant(seq: &NdsSequence) -> Result<f64> {
    if !seq.is_uniformly_expanding() {
        return Err(NdsError::PrecondViolated(
            "distortion constant requires a uniformly expanding sequence".into(),
        ));
    }
    Ok(seq.uniform_gamma() / (seq.uniform_lambda() - 1.0))
}

/// Jacobian ratio `|det Df_0^n(x)| / |det Df_0^n(y)|` for a Bowen-proximal
/// pair; errors if the proximity hypothesis fails.
pub fn distortion_ratio(seq: &NdsSequence, n: usize, x: f64, y: f64) -> Result<f64> {
    let threshold = radius_threshold(seq);
    let prox = if n >= 1 {
        bowen_distance(seq, 0, n - 1, x, y)
    } else {
        0.0
    };
    if prox >= threshold {
        return Err(NdsError::PrecondViolated(format!(
            "pair is not Bowen-proximal: d_{{0,{}}} = {prox} >= {threshold}",
            n.saturating_sub(1)
        )));
    }
    Ok((seq.log_jacobian_sum(n, x) - seq.log_jacobian_sum(n, y)).exp())
}

/// One row of the volume-lemma sweep.
#[derive(Debug, Clone, Serialize)]
pub struct VolumeRow {
    pub n: usize,
    pub min_product: f64,
    pub max_product: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VolumeReport {
    pub eps: f64,
    pub samples: usize,
    pub rows: Vec<VolumeRow>,
    pub min_product: f64,
    pub max_product: f64,
}

/// Sweep of `m(B_0^n(x, eps)) * |det Df_0^n(x)|` over sampled centers and all
/// orders up to `n_max`; the volume lemma says the product stays in a band
/// independent of `n`.
pub fn volume_lemma_check(
    seq: &NdsSequence,
    eps: f64,
    n_max: usize,
    samples: usize,
    seed: u64,
) -> Result<VolumeReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<f64> = (0..samples).map(|_| rng.gen::<f64>()).collect();
    let mut rows = Vec::with_capacity(n_max + 1);
    let (mut all_min, mut all_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for n in 0..=n_max {
        let mut min_p = f64::INFINITY;
        let mut max_p = f64::NEG_INFINITY;
        for &x in &centers {
            let ball = bowen_ball(seq, 0, n, x, eps)?;
            let product = ball.measure * seq.log_jacobian_sum(n, x).exp();
            min_p = min_p.min(product);
            max_p = max_p.max(product);
        }
        all_min = all_min.min(min_p);
        all_max = all_max.max(max_p);
        rows.push(VolumeRow {
            n,
            min_product: min_p,
            max_product: max_p,
        });
    }
    Ok(VolumeReport {
        eps,
        samples,
        rows,
        min_product: all_min,
        max_product: all_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::CircleMap;
    use proptest::prelude::*;
    use rand::Rng;

    fn doubling() -> NdsSequence {
        NdsSequence::constant(CircleMap::linear(2).unwrap())
    }

    #[test]
    fn bowen_distance_examples() {
        let seq = doubling();
        assert!((bowen_distance(&seq, 0, 0, 0.3, 0.42) - 0.12).abs() < 1e-15);
        assert!((bowen_distance(&seq, 0, 3, 0.0, 0.01) - 0.08).abs() < 1e-12);
        assert!((bowen_distance(&seq, 0, 0, 0.99, 0.01) - 0.02).abs() < 1e-15);
    }

    #[test]
    fn bowen_ball_order_zero_is_plain_arc() {
        let seq = doubling();
        let ball = bowen_ball(&seq, 0, 0, 0.4, 0.05).unwrap();
        assert!((ball.measure - 0.1).abs() < 1e-12);
        assert!(circle::dist(ball.left, 0.35) < 1e-12);
        assert!(circle::dist(ball.right, 0.45) < 1e-12);
    }

    #[test]
    fn bowen_ball_linear_measure_is_analytic() {
        let seq = doubling();
        let ball = bowen_ball(&seq, 0, 3, 0.2, 0.05).unwrap();
        assert!((ball.measure - 0.1 / 8.0).abs() < 1e-10);
        for n in 0..=10 {
            let ball = bowen_ball(&seq, 0, n, 0.37, 0.05).unwrap();
            let expected = 0.1 / 2.0_f64.powi(n as i32);
            assert!((ball.measure - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn bowen_balls_nest() {
        let seq = NdsSequence::constant(CircleMap::perturbed(2, 0.1).unwrap());
        let mut prev = f64::INFINITY;
        for n in 0..=8 {
            let ball = bowen_ball(&seq, 0, n, 0.61, 0.03).unwrap();
            assert!(ball.measure <= prev + 1e-15);
            prev = ball.measure;
        }
    }

    #[test]
    fn radius_gate_fires() {
        let seq = doubling();
        let err = bowen_ball(&seq, 0, 2, 0.5, 0.2).unwrap_err();
        assert_eq!(err.kind(), "RadiusTooLarge");
    }

    #[test]
    fn identity_tail_ball_is_stable() {
        let seq = NdsSequence::new(
            vec![CircleMap::linear(2).unwrap()],
            CircleMap::identity(),
        );
        // gamma = 2 so eps below 1/8 is accepted; measure stops shrinking
        // once the identity tail takes over.
        let m3 = bowen_ball(&seq, 0, 3, 0.3, 0.05).unwrap().measure;
        let m8 = bowen_ball(&seq, 0, 8, 0.3, 0.05).unwrap().measure;
        assert!(m8 <= m3 + 1e-15);
        assert!((m8 - m3).abs() < 1e-12);
    }

    #[test]
    fn count_separated_order_zero_packing() {
        let seq = doubling();
        assert_eq!(count_separated(&seq, 0, 0.25, 400), 4);
    }

    #[test]
    fn count_separated_identity_tail_constant_in_n() {
        let seq = NdsSequence::constant(CircleMap::identity());
        let c0 = count_separated(&seq, 0, 0.1, 200);
        for n in 1..=5 {
            assert_eq!(count_separated(&seq, n, 0.1, 200), c0);
        }
    }

    #[test]
    fn count_separated_doubles_with_horizon() {
        let seq = doubling();
        let counts: Vec<usize> = (0..=6)
            .map(|n| count_separated(&seq, n, 1.0 / 128.0, 16384))
            .collect();
        for w in counts.windows(2) {
            let ratio = w[1] as f64 / w[0] as f64;
            assert!((1.9..=2.1).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn spanning_single_point_for_large_radius() {
        let seq = doubling();
        // odd grid so no pair sits at arc distance exactly 1/2
        assert_eq!(count_spanning(&seq, 0, 0.5, 999), 1);
    }

    #[test]
    fn spanning_cover_generates_entropy() {
        // covers by balls of half the expansivity radius recover the
        // entropy of the doubling system
        let seq = doubling();
        let count = count_spanning(&seq, 10, 0.1, 1024);
        let value = (count as f64).ln() / 10.0;
        assert!((value - 2.0_f64.ln()).abs() <= 0.06, "value {value}");
    }

    #[test]
    fn spanning_separated_sandwich() {
        let seq = NdsSequence::constant(CircleMap::perturbed(2, 0.15).unwrap());
        for n in 0..=4 {
            for eps in [0.02, 0.04, 0.08] {
                let span = count_spanning(&seq, n, eps, 2048);
                let sep = count_separated(&seq, n, eps, 2048);
                let span_half = count_spanning(&seq, n, eps / 2.0, 2048);
                assert!(span <= sep, "n={n} eps={eps}: {span} > {sep}");
                assert!(sep <= span_half, "n={n} eps={eps}: {sep} > {span_half}");
            }
        }
    }

    #[test]
    fn distortion_linear_is_unity() {
        let seq = doubling();
        let r = distortion_ratio(&seq, 6, 0.2, 0.2004).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        let r = distortion_ratio(&seq, 6, 0.2, 0.2).unwrap();
        assert_eq!(r, 1.0);
    }

    #[test]
    fn distortion_respects_certified_bound() {
        let seq = NdsSequence::constant(CircleMap::perturbed(2, 0.1).unwrap());
        let c0 = distortion_constant(&seq).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 1000 {
            let n = 1 + (rng.gen::<u64>() % 8) as usize;
            let x = rng.gen::<f64>();
            let ball = bowen_ball(&seq, 0, n - 1, x, 0.9 * radius_threshold(&seq)).unwrap();
            let y = circle::wrap(x + (rng.gen::<f64>() - 0.5) * ball.measure * 0.9);
            let Ok(ratio) = distortion_ratio(&seq, n, x, y) else {
                continue;
            };
            let end = circle::dist(seq.compose_eval(0, n, x), seq.compose_eval(0, n, y));
            assert!(
                ratio <= (c0 * end).exp() + 1e-12,
                "ratio {ratio} exceeds bound at n={n}"
            );
            checked += 1;
        }
    }

    #[test]
    fn distortion_precondition_enforced() {
        let seq = doubling();
        let err = distortion_ratio(&seq, 4, 0.0, 0.4).unwrap_err();
        assert_eq!(err.kind(), "PrecondViolated");
    }

    #[test]
    fn volume_product_constant_for_linear() {
        let seq = doubling();
        let report = volume_lemma_check(&seq, 0.05, 8, 24, 11).unwrap();
        assert!((report.max_product - report.min_product).abs() < 1e-10);
        assert!((report.min_product - 0.1).abs() < 1e-9);
        assert!((report.rows[0].min_product - 0.1).abs() < 1e-12);
    }

    #[test]
    fn volume_product_band_for_perturbed() {
        let seq = NdsSequence::constant(CircleMap::perturbed(2, 0.1).unwrap());
        let eps = 0.05;
        let report = volume_lemma_check(&seq, eps, 8, 40, 3).unwrap();
        let c0 = distortion_constant(&seq).unwrap();
        let bound = (2.0 * c0 * eps).exp();
        assert!(report.max_product / report.min_product <= bound);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn bowen_metric_axioms(x in 0.0..1.0f64, y in 0.0..1.0f64, z in 0.0..1.0f64, n in 0usize..6) {
            let seq = NdsSequence::new(
                vec![CircleMap::perturbed(2, 0.2).unwrap()],
                CircleMap::perturbed(3, 0.3).unwrap(),
            );
            let dxy = bowen_distance(&seq, 0, n, x, y);
            let dyx = bowen_distance(&seq, 0, n, y, x);
            prop_assert_eq!(dxy, dyx);
            let dxz = bowen_distance(&seq, 0, n, x, z);
            let dzy = bowen_distance(&seq, 0, n, z, y);
            prop_assert!(dxy <= dxz + dzy + 1e-12);
            prop_assert!(bowen_distance(&seq, 0, n, x, x) == 0.0);
        }
    }
}
