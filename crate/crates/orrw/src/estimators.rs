//! Monte-Carlo estimators for the quantitative objects of the model: escape
//! events and walk capacity, variance and diffusivity, displacement tails,
//! endpoint histograms, Gaussian-fit diagnostics, phase-scan exponents, and
//! return probabilities.
//!
//! Replicas are independent jobs keyed by `(master_seed, replica_index)`;
//! per-replica results are collected in index order before aggregation, so
//! any parallel schedule produces identical output.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{simulate, EdgeEnvironment, ModelParams, Trajectory, Walker};
use crate::error::{Error, Result};
use crate::lattice::{Block, Point};
use crate::rng::{derive_replica_seed, MixHashSet, UniformSource};
use crate::stats::{
    binomial_stderr, ks_statistic, least_squares, normal_cdf, wilson, LineFit, Moments,
    WilsonInterval,
};

/// Geometry of one escape experiment: the walk must avoid `avoid`, stay in
/// `[-4R, 4R]^d`, localize in `[-R, R]^d` over the second half-window, and
/// leave `lam_plus` quickly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EscapeConfig {
    /// The enlarged box `u + [-2r, 2r]^d`.
    pub lam_plus: Block,
    /// Inner block scale `r`.
    pub r: i64,
    /// Outer scale `R`.
    pub big_r: i64,
    /// The avoided set `A`.
    pub avoid: BTreeSet<Point>,
}

impl EscapeConfig {
    pub fn new(u: &Point, r: i64, big_r: i64, avoid: impl IntoIterator<Item = Point>) -> Self {
        assert!(r >= 1 && big_r >= 1);
        EscapeConfig {
            lam_plus: Block::new(u.clone(), 2 * r),
            r,
            big_r,
            avoid: avoid.into_iter().collect(),
        }
    }

    /// Time horizon `2 R^2` of the escape window.
    pub fn horizon(&self) -> u64 {
        2 * (self.big_r * self.big_r) as u64
    }
}

/// Decide the escape event on a realized trajectory:
/// 1. for `t` in `[1, 2R^2]` the walk is in `[-4R, 4R]^d` and avoids `A`;
/// 2. for `t` in `[R^2, 2R^2]` the walk is in `[-R, R]^d`;
/// 3. for `t` in `[40 r^2, 2R^2]` the walk is outside `lam_plus` (vacuous
///    when `40 r^2 > 2R^2`).
///
/// Rejects trajectories shorter than the horizon.
pub fn escape_indicator(traj: &Trajectory, cfg: &EscapeConfig) -> Result<bool> {
    let horizon = cfg.horizon() as usize;
    if traj.len_steps() < horizon {
        return Err(Error::Precondition(format!(
            "trajectory of {} steps is shorter than the escape horizon {horizon}",
            traj.len_steps()
        )));
    }
    let d = traj.params.d;
    let outer = Block::centered(d, 4 * cfg.big_r);
    let inner = Block::centered(d, cfg.big_r);
    for t in 1..=horizon {
        let w = traj.at(t);
        if !outer.contains(w) || cfg.avoid.contains(w) {
            return Ok(false);
        }
    }
    let r2 = (cfg.big_r * cfg.big_r) as usize;
    for t in r2..=horizon {
        if !inner.contains(traj.at(t)) {
            return Ok(false);
        }
    }
    let c3 = (40 * cfg.r * cfg.r) as usize;
    if c3 <= horizon {
        for t in c3..=horizon {
            if cfg.lam_plus.contains(traj.at(t)) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Per-point escape estimate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PointEscape {
    pub p_hat: f64,
    pub stderr: f64,
    pub n: u64,
}

/// Monte-Carlo estimate of the walk capacity of a set: the sum over
/// `A ∩ lam_plus` of escape probabilities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapacityEstimate {
    #[serde(with = "crate::lattice::point_map")]
    pub per_point: BTreeMap<Point, PointEscape>,
    pub total: f64,
    /// Per-point binomial standard errors summed in quadrature.
    pub stderr_total: f64,
}

/// Estimate the capacity of `A` in `u + [-2r, 2r]^d` from `n` independent
/// virgin-environment runs per point of `A ∩ lam_plus`.
pub fn estimate_capacity(
    avoid: &BTreeSet<Point>,
    u: &Point,
    r: i64,
    big_r: i64,
    params: &ModelParams,
    n: u64,
    master_seed: u64,
) -> CapacityEstimate {
    let cfg = EscapeConfig::new(u, r, big_r, avoid.iter().cloned());
    let points: Vec<Point> =
        avoid.iter().filter(|z| cfg.lam_plus.contains(z)).cloned().collect();
    let horizon = cfg.horizon();
    let mut per_point = BTreeMap::new();
    for (zi, z) in points.iter().enumerate() {
        let point_seed = derive_replica_seed(master_seed, zi as u64);
        let successes: u64 = (0..n)
            .into_par_iter()
            .filter(|&rep| {
                let src = UniformSource::time_stream(derive_replica_seed(point_seed, rep));
                let traj = simulate(params, z, horizon, &src, EdgeEnvironment::new());
                escape_indicator(&traj, &cfg).expect("trajectory covers the horizon")
            })
            .count() as u64;
        let p_hat = successes as f64 / n as f64;
        per_point.insert(
            z.clone(),
            PointEscape { p_hat, stderr: binomial_stderr(p_hat, n), n },
        );
    }
    let total: f64 = per_point.values().map(|p| p.p_hat).sum();
    let stderr_total =
        per_point.values().map(|p| p.stderr * p.stderr).sum::<f64>().sqrt();
    CapacityEstimate { per_point, total, stderr_total }
}

/// Nowhere-heavy verdict with the violating block, if any.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NowhereHeavyReport {
    pub holds: bool,
    pub witness: Option<Block>,
}

/// Decide whether `A` is nowhere heavy: every block with center in
/// `[-2R, 2R]^d` and integer radius in `[R^delta, R]` holds at most
/// `r^kappa` points of `A`.
///
/// Exact search: per axis, a maximizing block can be slid until its low face
/// touches a point of `A` (or the center range boundary), so candidate
/// centers are products of per-axis candidate sets; branches whose
/// compatible subset of `A` is already below the threshold are pruned.
pub fn nowhere_heavy(
    avoid: &BTreeSet<Point>,
    big_r: i64,
    delta: f64,
    kappa: f64,
) -> Result<NowhereHeavyReport> {
    let d = match avoid.iter().next() {
        Some(p) => p.dim(),
        None => return Ok(NowhereHeavyReport { holds: true, witness: None }),
    };
    let points: Vec<&Point> = avoid.iter().collect();
    let r_lo = (big_r as f64).powf(delta).ceil() as i64;
    let bound = 2 * big_r;
    let mut nodes_budget: u64 = 50_000_000;
    for r in r_lo.max(1)..=big_r {
        let threshold = (r as f64).powf(kappa);
        if points.len() as f64 <= threshold {
            // No block can ever exceed the threshold at this or any larger
            // radius (thresholds grow with r).
            break;
        }
        let mut chosen = vec![0i64; d];
        if let Some(center) = search_violation(
            &points,
            r,
            threshold,
            bound,
            0,
            &mut chosen,
            &mut nodes_budget,
        )? {
            return Ok(NowhereHeavyReport {
                holds: false,
                witness: Some(Block::new(center, r)),
            });
        }
    }
    Ok(NowhereHeavyReport { holds: true, witness: None })
}

fn search_violation(
    compatible: &[&Point],
    r: i64,
    threshold: f64,
    bound: i64,
    axis: usize,
    chosen: &mut Vec<i64>,
    nodes_budget: &mut u64,
) -> Result<Option<Point>> {
    if *nodes_budget == 0 {
        return Err(Error::Budget("nowhere-heavy search exceeded its node budget".into()));
    }
    *nodes_budget -= 1;
    let d = compatible
        .first()
        .map(|p| p.dim())
        .unwrap_or(chosen.len());
    if axis == d {
        if compatible.len() as f64 > threshold {
            return Ok(Some(Point::new(chosen.clone())));
        }
        return Ok(None);
    }
    // Candidate low-face positions from the compatible points, clamped.
    let mut candidates: Vec<i64> = compatible
        .iter()
        .map(|p| (p.coords()[axis] - r).clamp(-bound, bound))
        .collect();
    candidates.sort_unstable();
    candidates.dedup();
    for c in candidates {
        let next: Vec<&Point> = compatible
            .iter()
            .filter(|p| (p.coords()[axis] - c).abs() <= r)
            .copied()
            .collect();
        if next.len() as f64 <= threshold {
            continue;
        }
        chosen[axis] = c;
        if let Some(hit) =
            search_violation(&next, r, threshold, bound, axis + 1, chosen, nodes_budget)?
        {
            return Ok(Some(hit));
        }
    }
    Ok(None)
}

/// Capacity-to-volume ratio report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapVolReport {
    pub capacity: CapacityEstimate,
    pub volume: u64,
    pub lower_bound: f64,
    pub ratio: f64,
}

/// Ratio of the estimated capacity to the volume lower bound
/// `r^{-6 nu} |A ∩ Λ|^{1 - 2/d}`. Refuses sets that are not nowhere heavy.
pub fn capvol_ratio(
    avoid: &BTreeSet<Point>,
    u: &Point,
    r: i64,
    big_r: i64,
    params: &ModelParams,
    n: u64,
    master_seed: u64,
) -> Result<CapVolReport> {
    let report = nowhere_heavy(avoid, big_r, params.delta, params.kappa)?;
    if !report.holds {
        let w = report.witness.expect("violation carries a witness");
        return Err(Error::Precondition(format!(
            "set is not nowhere heavy: block {w} holds too many points"
        )));
    }
    let lam = Block::new(u.clone(), r);
    let volume = avoid.iter().filter(|z| lam.contains(z)).count() as u64;
    if volume == 0 {
        return Err(Error::Precondition("A ∩ Λ is empty; the ratio is undefined".into()));
    }
    let capacity = estimate_capacity(avoid, u, r, big_r, params, n, master_seed);
    let lower_bound = (r as f64).powf(-6.0 * params.nu)
        * (volume as f64).powf(1.0 - 2.0 / params.d as f64);
    let ratio = capacity.total / lower_bound;
    Ok(CapVolReport { capacity, volume, lower_bound, ratio })
}

/// One entry of a variance curve.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VarEntry {
    pub t: u64,
    pub v_hat: f64,
    pub stderr: f64,
    pub n: u64,
}

/// Estimated variance curve with the diffusivity read off its largest time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarianceCurve {
    pub entries: Vec<VarEntry>,
    pub sigma_hat: f64,
    pub sigma_stderr: f64,
}

/// Estimate `v_t = E[W(t)_1^2]` at each grid time from `n` replicas (one
/// walk per replica, sampled at every grid time).
pub fn variance_curve(
    params: &ModelParams,
    t_grid: &[u64],
    n: u64,
    master_seed: u64,
) -> VarianceCurve {
    assert!(n >= 2);
    let mut grid = t_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let t_max = grid.last().copied().unwrap_or(0);
    let per_replica: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|rep| {
            let src = UniformSource::time_stream(derive_replica_seed(master_seed, rep));
            let mut walker =
                Walker::new(params, Point::origin(params.d), &src, EdgeEnvironment::new());
            let mut samples = Vec::with_capacity(grid.len());
            let mut gi = 0;
            if gi < grid.len() && grid[gi] == 0 {
                samples.push(0.0);
                gi += 1;
            }
            for t in 1..=t_max {
                let pos = walker.step();
                if gi < grid.len() && grid[gi] == t {
                    let x1 = pos.coords()[0] as f64;
                    samples.push(x1 * x1);
                    gi += 1;
                }
            }
            samples
        })
        .collect();
    let mut acc = vec![Moments::default(); grid.len()];
    for samples in &per_replica {
        for (m, &x) in acc.iter_mut().zip(samples) {
            m.push(x);
        }
    }
    let entries: Vec<VarEntry> = grid
        .iter()
        .zip(&acc)
        .map(|(&t, m)| VarEntry { t, v_hat: m.mean(), stderr: m.stderr(), n })
        .collect();
    let last = entries.last().expect("nonempty grid");
    let sigma_hat = (last.v_hat / last.t as f64).sqrt();
    // Delta method through sigma = sqrt(v / T).
    let sigma_stderr = if last.v_hat > 0.0 {
        last.stderr / (2.0 * (last.v_hat * last.t as f64).sqrt())
    } else {
        f64::NAN
    };
    VarianceCurve { entries, sigma_hat, sigma_stderr }
}

/// Additivity defect `|v_{s+t} - v_s - v_t|` estimated per replica from the
/// single statistic `W(s+t)_1^2 - W(s)_1^2 - W(t)_1^2`.
pub fn additivity_defect(
    params: &ModelParams,
    s: u64,
    t: u64,
    n: u64,
    master_seed: u64,
) -> (f64, f64) {
    assert!(s <= t);
    let per_replica: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|rep| {
            let src = UniformSource::time_stream(derive_replica_seed(master_seed, rep));
            let mut walker =
                Walker::new(params, Point::origin(params.d), &src, EdgeEnvironment::new());
            let (mut xs, mut xt) = (0.0f64, 0.0f64);
            for step in 1..=(s + t) {
                let pos = walker.step();
                if step == s {
                    xs = pos.coords()[0] as f64;
                }
                if step == t {
                    xt = pos.coords()[0] as f64;
                }
            }
            let xe = walker.position().coords()[0] as f64;
            xe * xe - xs * xs - xt * xt
        })
        .collect();
    let mut m = Moments::default();
    for x in per_replica {
        m.push(x);
    }
    (m.mean().abs(), m.stderr())
}

/// Displacement-tail estimate at threshold `t^exponent`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailEstimate {
    pub t: u64,
    pub exponent: f64,
    pub threshold: f64,
    pub p_hat: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    pub n: u64,
}

/// Fraction of runs whose maximal displacement by time `t` reaches
/// `t^exponent`.
pub fn displacement_tail(
    params: &ModelParams,
    t: u64,
    exponent: f64,
    n: u64,
    master_seed: u64,
) -> TailEstimate {
    let threshold = (t as f64).powf(exponent);
    let thr_sq = threshold * threshold;
    let successes: u64 = (0..n)
        .into_par_iter()
        .filter(|&rep| {
            let src = UniformSource::time_stream(derive_replica_seed(master_seed, rep));
            let mut walker =
                Walker::new(params, Point::origin(params.d), &src, EdgeEnvironment::new());
            let mut max_sq: i64 = 0;
            for _ in 0..t {
                let pos = walker.step();
                let sq: i64 = pos.coords().iter().map(|c| c * c).sum();
                max_sq = max_sq.max(sq);
            }
            max_sq as f64 >= thr_sq
        })
        .count() as u64;
    let p_hat = successes as f64 / n as f64;
    let w: WilsonInterval = wilson(successes, n, 3.0);
    TailEstimate {
        t,
        exponent,
        threshold,
        p_hat,
        wilson_lo: w.lo,
        wilson_hi: w.hi,
        n,
    }
}

/// A flagged endpoint whose empirical frequency provably exceeds the
/// probability bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct H1Violation {
    pub v: Point,
    pub freq: f64,
    pub wilson_lo: f64,
    pub bound: f64,
}

/// Empirical endpoint histogram with per-site comparison against the bound
/// `min(T^{-d/2+nu}, |v|^{-d+2nu})`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct H1Report {
    pub t: u64,
    pub n: u64,
    #[serde(with = "crate::lattice::point_map")]
    pub freq: BTreeMap<Point, u64>,
    pub violations: Vec<H1Violation>,
}

pub fn h1_histogram(params: &ModelParams, t: u64, n: u64, master_seed: u64) -> H1Report {
    let endpoints: Vec<Point> = (0..n)
        .into_par_iter()
        .map(|rep| {
            let src = UniformSource::time_stream(derive_replica_seed(master_seed, rep));
            let mut walker =
                Walker::new(params, Point::origin(params.d), &src, EdgeEnvironment::new());
            for _ in 0..t {
                walker.step();
            }
            walker.position().clone()
        })
        .collect();
    let mut freq: BTreeMap<Point, u64> = BTreeMap::new();
    for v in endpoints {
        *freq.entry(v).or_insert(0) += 1;
    }
    let d = params.d as f64;
    let tf = t as f64;
    let mut violations = Vec::new();
    for (v, &count) in &freq {
        let w = wilson(count, n, 3.0);
        let norm = v.l2_norm();
        let bound_t = tf.powf(-d / 2.0 + params.nu);
        let bound = if norm > 0.0 {
            bound_t.min(norm.powf(-d + 2.0 * params.nu))
        } else {
            bound_t
        };
        if w.lo > bound {
            violations.push(H1Violation {
                v: v.clone(),
                freq: count as f64 / n as f64,
                wilson_lo: w.lo,
                bound,
            });
        }
    }
    H1Report { t, n, freq, violations }
}

/// Gaussian-fit diagnostic: KS distance of the normalized first coordinate
/// against the standard normal, plus the full coordinate covariance matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianFitReport {
    pub t: u64,
    pub n: u64,
    pub sigma_hat: f64,
    pub sigma_stderr: f64,
    pub ks_distance: f64,
    pub covariance: Vec<Vec<f64>>,
}

pub fn gaussian_fit(params: &ModelParams, t: u64, n: u64, master_seed: u64) -> GaussianFitReport {
    let endpoints: Vec<Vec<i64>> = (0..n)
        .into_par_iter()
        .map(|rep| {
            let src = UniformSource::time_stream(derive_replica_seed(master_seed, rep));
            let mut walker =
                Walker::new(params, Point::origin(params.d), &src, EdgeEnvironment::new());
            for _ in 0..t {
                walker.step();
            }
            walker.position().coords().to_vec()
        })
        .collect();
    let d = params.d;
    let nf = n as f64;
    let mut moments = Moments::default();
    for e in &endpoints {
        let x = e[0] as f64;
        moments.push(x * x);
    }
    let v_hat = moments.mean();
    let sigma_hat = (v_hat / t as f64).sqrt();
    let sigma_stderr = moments.stderr() / (2.0 * (v_hat * t as f64).sqrt());

    let scale = sigma_hat * (t as f64).sqrt();
    let mut normalized: Vec<f64> = endpoints.iter().map(|e| e[0] as f64 / scale).collect();
    let ks_distance = ks_statistic(&mut normalized, normal_cdf);

    let mut covariance = vec![vec![0.0f64; d]; d];
    let means: Vec<f64> =
        (0..d).map(|i| endpoints.iter().map(|e| e[i] as f64).sum::<f64>() / nf).collect();
    for e in &endpoints {
        for i in 0..d {
            for j in 0..d {
                covariance[i][j] +=
                    (e[i] as f64 - means[i]) * (e[j] as f64 - means[j]) / nf;
            }
        }
    }
    GaussianFitReport { t, n, sigma_hat, sigma_stderr, ks_distance, covariance }
}

/// Fitted growth exponents for one reinforcement value.
#[derive(Debug, Clone, Serialize)]
pub struct PhaseScanEntry {
    pub a: f64,
    pub mean_range: Vec<(u64, f64)>,
    pub mean_radius: Vec<(u64, f64)>,
    pub range_fit: LineFit,
    pub radius_fit: LineFit,
}

/// Scan reinforcement values: per `a`, run `n` walks to the largest grid
/// time, record mean range volume and mean maximal displacement at each
/// grid time, and fit log-log slopes.
pub fn phase_scan(
    base: &ModelParams,
    a_values: &[f64],
    t_grid: &[u64],
    n: u64,
    master_seed: u64,
) -> Vec<PhaseScanEntry> {
    let mut grid = t_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    grid.retain(|&t| t > 0);
    let t_max = grid.last().copied().unwrap_or(0);
    a_values
        .iter()
        .enumerate()
        .map(|(ai, &a)| {
            let params = ModelParams { a, ..base.clone() };
            let scan_seed = derive_replica_seed(master_seed, ai as u64);
            let per_replica: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
                .into_par_iter()
                .map(|rep| {
                    let src =
                        UniformSource::time_stream(derive_replica_seed(scan_seed, rep));
                    let mut walker = Walker::new(
                        &params,
                        Point::origin(params.d),
                        &src,
                        EdgeEnvironment::new(),
                    );
                    let mut seen: MixHashSet<Point> = MixHashSet::default();
                    seen.insert(Point::origin(params.d));
                    let mut max_sq: i64 = 0;
                    let mut ranges = Vec::with_capacity(grid.len());
                    let mut radii = Vec::with_capacity(grid.len());
                    let mut gi = 0;
                    for t in 1..=t_max {
                        let pos = walker.step();
                        seen.insert(pos.clone());
                        let sq: i64 = pos.coords().iter().map(|c| c * c).sum();
                        max_sq = max_sq.max(sq);
                        if gi < grid.len() && grid[gi] == t {
                            ranges.push(seen.len() as f64);
                            radii.push((max_sq as f64).sqrt());
                            gi += 1;
                        }
                    }
                    (ranges, radii)
                })
                .collect();
            let mut mean_range = Vec::with_capacity(grid.len());
            let mut mean_radius = Vec::with_capacity(grid.len());
            for (gi, &t) in grid.iter().enumerate() {
                let mr =
                    per_replica.iter().map(|(r, _)| r[gi]).sum::<f64>() / n as f64;
                let md =
                    per_replica.iter().map(|(_, r)| r[gi]).sum::<f64>() / n as f64;
                mean_range.push((t, mr));
                mean_radius.push((t, md));
            }
            let log_t: Vec<f64> = grid.iter().map(|&t| (t as f64).ln()).collect();
            let log_range: Vec<f64> = mean_range.iter().map(|(_, v)| v.ln()).collect();
            let log_radius: Vec<f64> = mean_radius.iter().map(|(_, v)| v.ln()).collect();
            PhaseScanEntry {
                a,
                range_fit: least_squares(&log_t, &log_range),
                radius_fit: least_squares(&log_t, &log_radius),
                mean_range,
                mean_radius,
            }
        })
        .collect()
}

/// Return-probability entry: the chance of visiting the origin again within
/// `[t, horizon]`.
#[derive(Debug, Clone, Serialize)]
pub struct ReturnEntry {
    pub t: u64,
    pub p_hat: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
}

pub fn return_probability(
    params: &ModelParams,
    t_grid: &[u64],
    horizon: u64,
    n: u64,
    master_seed: u64,
) -> Vec<ReturnEntry> {
    let mut grid = t_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    // Last visit time to the origin per replica (time 0 counts).
    let last_visits: Vec<u64> = (0..n)
        .into_par_iter()
        .map(|rep| {
            let src = UniformSource::time_stream(derive_replica_seed(master_seed, rep));
            let origin = Point::origin(params.d);
            let mut walker = Walker::new(params, origin.clone(), &src, EdgeEnvironment::new());
            let mut last = 0u64;
            for t in 1..=horizon {
                if *walker.step() == origin {
                    last = t;
                }
            }
            last
        })
        .collect();
    grid.iter()
        .map(|&t| {
            let successes = last_visits.iter().filter(|&&l| l >= t).count() as u64;
            let w = wilson(successes, n, 3.0);
            ReturnEntry {
                t,
                p_hat: successes as f64 / n as f64,
                wilson_lo: w.lo,
                wilson_hi: w.hi,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{exact_escape, exact_escape_dp, exact_moments};

    fn pt(coords: &[i64]) -> Point {
        Point::new(coords.to_vec())
    }

    fn tiny_cfg(avoid: &[&[i64]]) -> EscapeConfig {
        EscapeConfig::new(
            &Point::origin(2),
            1,
            2,
            avoid.iter().map(|c| pt(c)),
        )
    }

    #[test]
    fn indicator_rejects_short_and_first_step_into_a() {
        let params = ModelParams::new(2, 1.0);
        let cfg = tiny_cfg(&[&[0, 1], &[0, -1], &[1, 0], &[-1, 0]]);
        let src = UniformSource::time_stream(4);
        let short = simulate(&params, &Point::origin(2), 3, &src, EdgeEnvironment::new());
        assert!(escape_indicator(&short, &cfg).is_err());
        // Every neighbor of the start lies in A: condition (1) fails at t=1.
        let traj = simulate(&params, &Point::origin(2), 8, &src, EdgeEnvironment::new());
        assert!(!escape_indicator(&traj, &cfg).unwrap());
    }

    #[test]
    fn indicator_pathwise_monotone_in_avoid_set() {
        let params = ModelParams::new(2, 1.0);
        let a_big = tiny_cfg(&[&[2, 0], &[0, 2], &[-2, 0]]);
        let a_mid = tiny_cfg(&[&[2, 0], &[0, 2]]);
        let a_small = tiny_cfg(&[&[2, 0]]);
        for seed in 0..2000u64 {
            let src = UniformSource::time_stream(seed);
            let traj = simulate(&params, &Point::origin(2), 8, &src, EdgeEnvironment::new());
            let big = escape_indicator(&traj, &a_big).unwrap();
            let mid = escape_indicator(&traj, &a_mid).unwrap();
            let small = escape_indicator(&traj, &a_small).unwrap();
            assert!(!big || mid, "seed {seed}");
            assert!(!mid || small, "seed {seed}");
        }
    }

    #[test]
    fn capacity_empty_cases() {
        let params = ModelParams::new(2, 1.0);
        let empty: BTreeSet<Point> = BTreeSet::new();
        let est = estimate_capacity(&empty, &Point::origin(2), 1, 2, &params, 10, 1);
        assert_eq!(est.total, 0.0);
        // A disjoint from lam_plus: empty sum.
        let far: BTreeSet<Point> = [pt(&[50, 50])].into_iter().collect();
        let est = estimate_capacity(&far, &Point::origin(2), 1, 2, &params, 10, 1);
        assert_eq!(est.total, 0.0);
        assert!(est.per_point.is_empty());
    }

    #[test]
    fn capacity_matches_exact_escape_tiny() {
        // Tiny-exact geometry: d=2, a=1, r=1, R=2, singleton A at the center.
        let params = ModelParams::new(2, 1.0);
        let avoid: BTreeSet<Point> = [Point::origin(2)].into_iter().collect();
        let cfg = EscapeConfig::new(&Point::origin(2), 1, 2, avoid.iter().cloned());
        let exact = exact_escape(&Point::origin(2), &cfg, &params).unwrap();
        let exact_dp = exact_escape_dp(&Point::origin(2), &cfg, &params).unwrap();
        assert!((exact - exact_dp).abs() < 1e-12, "oracle routes disagree");
        let n = 100_000u64;
        let est = estimate_capacity(&avoid, &Point::origin(2), 1, 2, &params, n, 77);
        let p = est.per_point.get(&Point::origin(2)).unwrap();
        assert!(
            (p.p_hat - exact).abs() <= 3.0 * p.stderr.max(1e-6),
            "estimate {} vs exact {exact}",
            p.p_hat
        );
    }

    #[test]
    fn nowhere_heavy_cases() {
        // Empty and singleton sets pass.
        let empty: BTreeSet<Point> = BTreeSet::new();
        assert!(nowhere_heavy(&empty, 10, 0.2, 3.5).unwrap().holds);
        let single: BTreeSet<Point> = [pt(&[1, 1])].into_iter().collect();
        assert!(nowhere_heavy(&single, 10, 0.2, 3.5).unwrap().holds);

        // ceil(2^3.5) + 1 = 13 points packed into a radius-2 block violate.
        let mut packed: BTreeSet<Point> = BTreeSet::new();
        for x in -2..=2i64 {
            for y in -2..=2i64 {
                if packed.len() < 13 {
                    packed.insert(pt(&[x, y]));
                }
            }
        }
        // Scan radii [2, 4]: 4^delta with delta chosen so r_lo = 2.
        let report = nowhere_heavy(&packed, 4, 0.5, 3.5).unwrap();
        assert!(!report.holds);
        let w = report.witness.unwrap();
        assert!(packed.iter().filter(|p| w.contains(p)).count() as f64
            > (w.radius as f64).powf(3.5));
    }

    #[test]
    fn capvol_gates_and_singleton() {
        let params = ModelParams::new(2, 1.0);
        // Dense square is rejected.
        let mut dense: BTreeSet<Point> = BTreeSet::new();
        for x in -2..=2i64 {
            for y in -2..=2i64 {
                dense.insert(pt(&[x, y]));
            }
        }
        let err = capvol_ratio(&dense, &Point::origin(2), 2, 4, &params, 100, 5);
        assert!(err.is_err());

        // Singleton: denominator is r^{-6 nu}, ratio = p_hat * r^{6 nu}.
        let single: BTreeSet<Point> = [Point::origin(2)].into_iter().collect();
        let rep = capvol_ratio(&single, &Point::origin(2), 1, 2, &params, 2000, 5).unwrap();
        assert_eq!(rep.volume, 1);
        let expect = rep.capacity.total * 1.0f64.powf(6.0 * params.nu);
        assert!((rep.ratio - expect).abs() < 1e-12);
    }

    #[test]
    fn variance_first_step_and_oracle_t2() {
        // v_1 = 1/d exactly in expectation; v_2 against the enumeration.
        let params = ModelParams::new(2, 1.0);
        let curve = variance_curve(&params, &[1, 2], 40_000, 11);
        let v1 = curve.entries[0];
        assert!((v1.v_hat - 0.5).abs() <= 3.0 * v1.stderr, "v1 {}", v1.v_hat);
        let v2 = curve.entries[1];
        let exact = exact_moments(&params, 2).unwrap();
        assert!(
            (v2.v_hat - exact).abs() <= 3.0 * v2.stderr,
            "v2 {} vs {exact}",
            v2.v_hat
        );
    }

    #[test]
    fn variance_stderr_shrinks_with_n() {
        let params = ModelParams::new(2, 0.5);
        let small = variance_curve(&params, &[16], 2_000, 3);
        let large = variance_curve(&params, &[16], 8_000, 3);
        let ratio = small.entries[0].stderr / large.entries[0].stderr;
        assert!((ratio - 2.0).abs() < 0.5, "stderr ratio {ratio}");
    }

    #[test]
    fn additivity_zero_for_srw() {
        let params = ModelParams::new(2, 0.0);
        let (defect, stderr) = additivity_defect(&params, 8, 16, 20_000, 9);
        assert!(defect <= 3.0 * stderr, "defect {defect} stderr {stderr}");
    }

    #[test]
    fn additivity_s_t_one_matches_enumeration() {
        // s = t = 1: defect = |v_2 - 2/d|.
        let params = ModelParams::new(1, 1.0);
        let exact = (exact_moments(&params, 2).unwrap() - 2.0).abs();
        let (defect, stderr) = additivity_defect(&params, 1, 1, 50_000, 13);
        assert!((defect - exact).abs() <= 3.0 * stderr, "defect {defect} vs {exact}");
    }

    #[test]
    fn tail_exact_edges() {
        let params = ModelParams::new(2, 0.5);
        // Threshold above t: impossible.
        let est = displacement_tail(&params, 16, 2.0, 500, 21);
        assert_eq!(est.p_hat, 0.0);
        // Exponent 0: threshold 1, reached by the first step.
        let est = displacement_tail(&params, 16, 0.0, 500, 21);
        assert_eq!(est.p_hat, 1.0);
    }

    #[test]
    fn h1_parity_and_speed_limit() {
        let params = ModelParams::new(2, 1.0);
        let t = 6u64;
        let rep = h1_histogram(&params, t, 30_000, 17);
        for (v, _) in &rep.freq {
            let l1: i64 = v.coords().iter().map(|c| c.abs()).sum();
            assert!(l1 <= t as i64, "speed limit violated at {v}");
            assert_eq!((l1 % 2) as u64, t % 2, "parity violated at {v}");
        }
    }

    #[test]
    fn return_probability_t0_is_one() {
        let params = ModelParams::new(2, 0.5);
        let entries = return_probability(&params, &[0, 8], 64, 2_000, 23);
        assert_eq!(entries[0].p_hat, 1.0);
        assert!(entries[1].p_hat <= entries[0].p_hat);
    }
}
