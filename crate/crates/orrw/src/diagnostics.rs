//! Trajectory functionals: heavy blocks, relaxed times, stopping times,
//! block classification, volume exhaustion, and range/displacement
//! statistics.
//!
//! Everything here is a pure function of an immutable trajectory; evaluation
//! over query times or blocks is order-independent.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::engine::Trajectory;
use crate::lattice::{Block, Point};
use crate::rng::{MixHashMap, MixHashSet};

/// Natural-log spend threshold `ceil(rho^2 * max(ln(rho)^3, 1))` for a box of
/// radius `rho`. The cube of the log is clamped at 1 so tiny radii do not
/// degenerate to a zero threshold.
pub fn spend_threshold(radius: i64) -> u64 {
    assert!(radius >= 1);
    let rho = radius as f64;
    let log3 = rho.ln().powi(3).max(1.0);
    (rho * rho * log3).ceil() as u64
}

/// Number of distinct vertices of `block` visited by time `t` (inclusive).
pub fn distinct_in_box(traj: &Trajectory, t: usize, block: &Block) -> usize {
    assert!(t <= traj.len_steps(), "query time beyond trajectory length");
    let mut seen: MixHashSet<&Point> = MixHashSet::default();
    traj.vertices()[..=t]
        .iter()
        .filter(|v| block.contains(v) && seen.insert(v))
        .count()
}

/// Heavy-block predicate: at least `r^kappa` distinct visited vertices in the
/// block at time `t`.
pub fn is_heavy(traj: &Trajectory, t: usize, block: &Block, kappa: f64) -> bool {
    assert!(block.radius >= 1, "heaviness is defined for radius >= 1");
    let count = distinct_in_box(traj, t, block) as f64;
    count >= (block.radius as f64).powf(kappa)
}

/// Set of query times found to be locally relaxed at scale `R`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelaxedTimeSet {
    /// The relaxed query times, sorted.
    pub times: BTreeSet<u64>,
    /// Upper scale of the scan.
    pub scale: i64,
    /// Lower scale `a^{-1/3}` (infinite for `a = 0`).
    pub lower_scale: f64,
}

impl RelaxedTimeSet {
    pub fn contains(&self, t: u64) -> bool {
        self.times.contains(&t)
    }
}

/// Check whether time `t` is relaxed at scale `big_r`: no block
/// `W(t) + [-r, r]^d` with integer `r` in `[a^{-1/3}, big_r]` is heavy.
///
/// One pass over the distinct visited vertices: bucket their L-infinity
/// distances from `W(t)`, prefix-sum, and compare the cumulative count at
/// every radius with `r^kappa`. Exact for all radii in a single sweep.
fn time_is_relaxed(traj: &Trajectory, t: usize, big_r: i64) -> bool {
    let params = &traj.params;
    let lower = params.lower_scale();
    if lower > big_r as f64 {
        // Empty scan interval: vacuously relaxed.
        return true;
    }
    let r_lo = lower.ceil() as i64;
    let r_lo = r_lo.max(1);
    let center = traj.at(t);
    let mut hist = vec![0u64; big_r as usize + 1];
    let mut seen: MixHashSet<&Point> = MixHashSet::default();
    for v in &traj.vertices()[..=t] {
        if seen.insert(v) {
            let dist = v.linf_dist(center);
            if dist <= big_r {
                hist[dist as usize] += 1;
            }
        }
    }
    let mut cum = 0u64;
    for (r, h) in hist.iter().enumerate() {
        cum += h;
        if (r as i64) >= r_lo && cum as f64 >= (r as f64).powf(params.kappa) {
            return false;
        }
    }
    true
}

/// Evaluate the relaxed-time predicate at each query time.
///
/// With `a = 0` the lower scale is infinite and every time is relaxed.
pub fn relaxed_times(traj: &Trajectory, big_r: i64, query_times: &[u64]) -> RelaxedTimeSet {
    let times = query_times
        .iter()
        .copied()
        .filter(|&t| {
            let t = t as usize;
            t <= traj.len_steps() && time_is_relaxed(traj, t, big_r)
        })
        .collect();
    RelaxedTimeSet { times, scale: big_r, lower_scale: traj.params.lower_scale() }
}

/// First time the walk has spent `threshold` time units inside `block`
/// (counting time 0), or `None` if it never does.
pub fn tau_spend(traj: &Trajectory, block: &Block, threshold: u64) -> Option<u64> {
    assert!(threshold >= 1);
    let mut inside = 0u64;
    for (t, v) in traj.vertices().iter().enumerate() {
        if block.contains(v) {
            inside += 1;
            if inside >= threshold {
                return Some(t as u64);
            }
        }
    }
    None
}

/// Witness of a first-heavy-block event.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeavyWitness {
    pub time: u64,
    pub block: Block,
    pub distinct: u64,
}

/// Stopping-time report for a trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoppingTimeReport {
    /// First time the spend threshold is reached, if ever.
    pub tau_spend: Option<u64>,
    /// First time some scanned block is heavy, if ever.
    pub tau_heavy: Option<u64>,
    pub heavy_witness: Option<HeavyWitness>,
}

/// First time any block `u + [-r, r]^d` with `u` in `centers` and `r` in
/// `radii` is heavy, with the witnessing block.
///
/// Exact with respect to the supplied grids. Counts are maintained
/// incrementally: a block's distinct-visit count changes only when a vertex
/// it contains is visited for the first time, so each new vertex touches only
/// the centers within range of it.
pub fn tau_heavy(
    traj: &Trajectory,
    centers: &[Point],
    radii: &[i64],
    kappa: f64,
) -> StoppingTimeReport {
    assert!(radii.iter().all(|&r| r >= 1));
    let mut radii = radii.to_vec();
    radii.sort_unstable();
    radii.dedup();
    let thresholds: Vec<u64> =
        radii.iter().map(|&r| (r as f64).powf(kappa).ceil() as u64).collect();
    let max_r = radii.last().copied().unwrap_or(0);

    let mut counts = vec![vec![0u64; radii.len()]; centers.len()];
    let mut seen: MixHashSet<Point> = MixHashSet::default();
    for (t, v) in traj.vertices().iter().enumerate() {
        if !seen.insert(v.clone()) {
            continue;
        }
        for (ci, center) in centers.iter().enumerate() {
            let dist = center.linf_dist(v);
            if dist > max_r {
                continue;
            }
            let start = radii.partition_point(|&r| r < dist);
            for ri in start..radii.len() {
                counts[ci][ri] += 1;
                // `>= r^kappa` with an integer count is `>= ceil(r^kappa)`.
                if counts[ci][ri] >= thresholds[ri] {
                    return StoppingTimeReport {
                        tau_spend: None,
                        tau_heavy: Some(t as u64),
                        heavy_witness: Some(HeavyWitness {
                            time: t as u64,
                            block: Block::new(center.clone(), radii[ri]),
                            distinct: counts[ci][ri],
                        }),
                    };
                }
            }
        }
    }
    StoppingTimeReport { tau_spend: None, tau_heavy: None, heavy_witness: None }
}

/// Full integer radius grid `[ceil(R^delta), R]`.
pub fn heavy_radii(big_r: i64, delta: f64) -> Vec<i64> {
    let lo = ((big_r as f64).powf(delta)).ceil() as i64;
    (lo.max(1)..=big_r).collect()
}

/// Centers for a heavy-block scan: the distinct vertices the trajectory
/// visits inside `[-2R, 2R]^d`. A full center grid is exponential in `d`;
/// the visited vertices are where a walk-local scan has any power, and any
/// block reported heavy is a genuine witness.
pub fn visited_centers(traj: &Trajectory, big_r: i64) -> Vec<Point> {
    let region = Block::centered(traj.params.d, 2 * big_r);
    let mut seen: BTreeSet<Point> = BTreeSet::new();
    for v in traj.vertices() {
        if region.contains(v) {
            seen.insert(v.clone());
        }
    }
    seen.into_iter().collect()
}

/// Per-block classification labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLabel {
    /// Reached its spend threshold before the global one.
    pub in_a: bool,
    /// Violates the relaxed-time density condition while occupied.
    pub bad: bool,
}

/// Classification of the partition blocks touched by a demon trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockClassification {
    /// Labels for every partition block the walk visited; untouched blocks
    /// are good and outside the spend class by definition.
    pub labels: std::collections::BTreeMap<Point, BlockLabel>,
    pub tau_spend_global: Option<u64>,
    pub block_radius: i64,
}

/// All centers of the partition grid `2r Z^d ∩ [-3R/2, 3R/2]^d` whose block
/// contains `v`. Adjacent partition blocks share faces, so a vertex can lie
/// in up to `2^d` of them.
fn partition_centers(v: &Point, r: i64, big_r: i64) -> Vec<Point> {
    let bound = 3 * big_r / 2;
    let step = 2 * r;
    // Per axis: the multiples of 2r in [c - r, c + r] (one or two of them).
    let mut axis_choices: Vec<Vec<i64>> = Vec::with_capacity(v.dim());
    for &c in v.coords() {
        let lo = c - r;
        let hi = c + r;
        let first = lo.div_euclid(step) * step;
        let first = if first < lo { first + step } else { first };
        let mut vals = Vec::new();
        let mut m = first;
        while m <= hi {
            if m.abs() <= bound {
                vals.push(m);
            }
            m += step;
        }
        if vals.is_empty() {
            return Vec::new();
        }
        axis_choices.push(vals);
    }
    let mut out = vec![Vec::new()];
    for choices in &axis_choices {
        let mut next = Vec::with_capacity(out.len() * choices.len());
        for prefix in &out {
            for &c in choices {
                let mut p = prefix.clone();
                p.push(c);
                next.push(p);
            }
        }
        out = next;
    }
    out.into_iter().map(Point::new).collect()
}

/// Classify the blocks of the partition `{u + [-r, r]^d : u in
/// [-3R/2, 3R/2]^d ∩ 2rZ^d}` with respect to a demon trajectory.
///
/// A block is in the spend class when its local spend threshold is reached
/// no later than the global one; it is bad when some time `t` up to its
/// local spend stop with the walk inside the block has fewer than
/// `0.9 r^epsilon + 1` relaxed times in the window `(t, t + r^epsilon)`.
/// Windows that would read past the end of the trajectory are skipped: the
/// condition is evaluated on decidable windows only.
pub fn classify_blocks(
    traj: &Trajectory,
    big_r: i64,
    r: i64,
    epsilon: f64,
) -> BlockClassification {
    let global_block = Block::centered(traj.params.d, big_r);
    let tau_global = tau_spend(traj, &global_block, spend_threshold(big_r));
    let len = traj.len_steps() as u64;

    // Times the walk occupies each partition block.
    let mut occupancy: std::collections::BTreeMap<Point, Vec<u64>> = Default::default();
    for (t, v) in traj.vertices().iter().enumerate() {
        for center in partition_centers(v, r, big_r) {
            occupancy.entry(center).or_default().push(t as u64);
        }
    }

    let window = (r as f64).powf(epsilon);
    let need = 0.9 * window + 1.0;
    // Relaxed status is shared across blocks; compute it once per time.
    let all_times: Vec<u64> = (0..=len).collect();
    let relaxed = relaxed_times(traj, r, &all_times);

    let mut labels = std::collections::BTreeMap::new();
    for (center, times) in occupancy {
        let block = Block::new(center.clone(), r);
        let local_tau = tau_spend(traj, &block, spend_threshold(r));
        // A never-reached global stop counts as infinity.
        let in_a = match (local_tau, tau_global) {
            (Some(l), Some(g)) => l <= g,
            (Some(_), None) => true,
            (None, _) => false,
        };
        let horizon = local_tau.unwrap_or(len);
        let mut bad = false;
        for &t in &times {
            if t > horizon {
                break;
            }
            if let Some(count) = window_relaxed_count(&relaxed, t, window, len) {
                if (count as f64) < need {
                    bad = true;
                    break;
                }
            }
        }
        labels.insert(center, BlockLabel { in_a, bad });
    }
    BlockClassification { labels, tau_spend_global: tau_global, block_radius: r }
}

/// Count relaxed times in the open window `(t, t + window)`, or `None` when
/// the window runs past the observed trajectory and the condition is
/// undecidable.
fn window_relaxed_count(
    relaxed: &RelaxedTimeSet,
    t: u64,
    window: f64,
    len: u64,
) -> Option<u64> {
    let hi = (t as f64 + window).ceil() as u64; // first integer >= t + window
    let last = hi - 1; // last integer strictly inside
    if last > len {
        return None;
    }
    Some(relaxed.times.range(t + 1..=last).count() as u64)
}

/// Decide the relaxed-time density event for a demon trajectory at scale
/// `R`: every decidable time `t <= tau_spend(R) - R^epsilon` with the walk
/// inside `[-R, R]^d` must have at least `0.9 R^epsilon + 1` relaxed times
/// in `(t, t + R^epsilon)`. When the spend stop never occurs the scan runs
/// to the end of the trajectory.
pub fn h2_event_holds(traj: &Trajectory, big_r: i64, epsilon: f64) -> bool {
    let inner = Block::centered(traj.params.d, big_r);
    let len = traj.len_steps() as u64;
    let tau = tau_spend(traj, &inner, spend_threshold(big_r)).unwrap_or(len);
    let window = (big_r as f64).powf(epsilon);
    let t_max = (tau as f64 - window).floor();
    if t_max < 0.0 {
        return true;
    }
    let t_max = t_max as u64;
    let all_times: Vec<u64> = (0..=len).collect();
    let relaxed = relaxed_times(traj, big_r, &all_times);
    let need = 0.9 * window + 1.0;
    for t in 0..=t_max.min(len) {
        if !inner.contains(traj.at(t as usize)) {
            continue;
        }
        if let Some(count) = window_relaxed_count(&relaxed, t, window, len) {
            if (count as f64) < need {
                return false;
            }
        }
    }
    true
}

/// Maximum visit count over the vertices of `region` up to time `t`.
pub fn max_vertex_visits(traj: &Trajectory, t: usize, region: &Block) -> u64 {
    let mut counts: MixHashMap<&Point, u64> = MixHashMap::default();
    let mut best = 0u64;
    for v in &traj.vertices()[..=t.min(traj.len_steps())] {
        if region.contains(v) {
            let c = counts.entry(v).or_insert(0);
            *c += 1;
            best = best.max(*c);
        }
    }
    best
}

/// Range volume (distinct vertices visited) and maximum Euclidean
/// displacement from the start, both up to time `t`.
pub fn range_and_radius(traj: &Trajectory, t: usize) -> (u64, f64) {
    let t = t.min(traj.len_steps());
    let start = traj.at(0);
    let mut seen: MixHashSet<&Point> = MixHashSet::default();
    let mut radius = 0.0f64;
    for v in &traj.vertices()[..=t] {
        seen.insert(v);
        radius = radius.max(v.l2_dist(start));
    }
    (seen.len() as u64, radius)
}
