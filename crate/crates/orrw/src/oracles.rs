//! Independent exact computations used to validate the Monte-Carlo
//! estimators at small scale: weighted path enumeration (depth-first and a
//! separately-coded forward dynamic program), absorbing-chain linear solves,
//! and lattice Green's function tables.
//!
//! The walk is non-Markovian, so the enumerators carry full history-dependent
//! environments; budget guards make infeasibility explicit.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::engine::{probs_from_flags, EdgeEnvironment, ModelParams};
use crate::error::{Error, Result};
use crate::estimators::EscapeConfig;
use crate::lattice::{neighbor_by_index, neighbor_offset, Block, Edge, Point};
use crate::rng::MixHashMap;

/// Maximum number of paths an enumeration may visit.
pub const ENUMERATION_BUDGET: u128 = 100_000_000;

fn check_budget(d: usize, t_max: u64) -> Result<()> {
    let paths = (2u128 * d as u128).checked_pow(t_max as u32).unwrap_or(u128::MAX);
    if paths > ENUMERATION_BUDGET {
        return Err(Error::Budget(format!(
            "(2d)^t = {paths} paths exceeds the enumeration budget {ENUMERATION_BUDGET}"
        )));
    }
    Ok(())
}

/// Exact endpoint distribution of the walk at a fixed time.
#[derive(Debug, Clone, Serialize)]
pub struct ExactDistribution {
    #[serde(serialize_with = "crate::lattice::point_map::serialize")]
    pub support: BTreeMap<Point, f64>,
    pub t: u64,
    pub params: ModelParams,
}

impl ExactDistribution {
    pub fn prob(&self, v: &Point) -> f64 {
        self.support.get(v).copied().unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.support.values().sum()
    }
}

/// Depth-first enumeration over all `(2d)^t_max` paths, multiplying exact
/// transition probabilities in the history-dependent environment. `visit` is
/// called once per complete path with the path and its probability.
pub fn enumerate_paths(
    params: &ModelParams,
    t_max: u64,
    start: &Point,
    env0: &EdgeEnvironment,
    visit: &mut impl FnMut(&[Point], f64),
) -> Result<()> {
    check_budget(params.d, t_max)?;
    let mut env = env0.clone();
    let mut path = vec![start.clone()];
    dfs(params, t_max, &mut env, &mut path, 1.0, visit);
    Ok(())
}

fn dfs(
    params: &ModelParams,
    remaining: u64,
    env: &mut EdgeEnvironment,
    path: &mut Vec<Point>,
    weight: f64,
    visit: &mut impl FnMut(&[Point], f64),
) {
    if remaining == 0 {
        visit(path, weight);
        return;
    }
    let cur = path.last().expect("path is nonempty").clone();
    let twod = 2 * params.d;
    let flags: Vec<bool> = (0..twod)
        .map(|i| {
            let (axis, delta) = neighbor_offset(i);
            env.contains(&Edge::from_step(&cur, axis, delta))
        })
        .collect();
    let probs = probs_from_flags(&flags, params.a);
    for i in 0..twod {
        let next = neighbor_by_index(&cur, i);
        let edge = Edge::new(&cur, &next).expect("neighbor step");
        let inserted = env.insert(edge.clone());
        path.push(next);
        dfs(params, remaining - 1, env, path, weight * probs[i], visit);
        path.pop();
        if inserted {
            // Undo only edges this branch introduced.
            env.remove(&edge);
        }
    }
}

/// Exact endpoint distribution by depth-first enumeration.
pub fn enumerate_orrw(
    params: &ModelParams,
    t_max: u64,
    start: &Point,
    env0: &EdgeEnvironment,
) -> Result<ExactDistribution> {
    let mut support: BTreeMap<Point, f64> = BTreeMap::new();
    enumerate_paths(params, t_max, start, env0, &mut |path, w| {
        *support.entry(path.last().unwrap().clone()).or_insert(0.0) += w;
    })?;
    Ok(ExactDistribution { support, t: t_max, params: params.clone() })
}

/// Exact endpoint distribution by a forward dynamic program over
/// `(position, environment)` states. Independently coded route used to
/// cross-check the depth-first enumerator; merging identical states keeps it
/// cheaper on revisiting walks.
pub fn enumerate_orrw_dp(
    params: &ModelParams,
    t_max: u64,
    start: &Point,
    env0: &EdgeEnvironment,
) -> Result<ExactDistribution> {
    check_budget(params.d, t_max)?;
    type State = (Point, Vec<Edge>);
    let mut states: BTreeMap<State, f64> = BTreeMap::new();
    states.insert((start.clone(), env0.sorted_edges()), 1.0);
    let twod = 2 * params.d;
    for _ in 0..t_max {
        let mut next_states: BTreeMap<State, f64> = BTreeMap::new();
        for ((pos, edges), mass) in states {
            let env = EdgeEnvironment::from_edges(edges.iter().cloned());
            let flags: Vec<bool> = (0..twod)
                .map(|i| {
                    let (axis, delta) = neighbor_offset(i);
                    env.contains(&Edge::from_step(&pos, axis, delta))
                })
                .collect();
            let probs = probs_from_flags(&flags, params.a);
            for i in 0..twod {
                let next = neighbor_by_index(&pos, i);
                let edge = Edge::new(&pos, &next).expect("neighbor step");
                let mut new_edges = edges.clone();
                if let Err(at) = new_edges.binary_search(&edge) {
                    new_edges.insert(at, edge);
                }
                *next_states.entry((next, new_edges)).or_insert(0.0) += mass * probs[i];
            }
        }
        states = next_states;
    }
    let mut support: BTreeMap<Point, f64> = BTreeMap::new();
    for ((pos, _), mass) in states {
        *support.entry(pos).or_insert(0.0) += mass;
    }
    Ok(ExactDistribution { support, t: t_max, params: params.clone() })
}

/// Exact coordinate variance `E[W(t)_1^2]` by enumeration.
pub fn exact_moments(params: &ModelParams, t: u64) -> Result<f64> {
    let start = Point::origin(params.d);
    let mut acc = 0.0;
    enumerate_paths(params, t, &start, &EdgeEnvironment::new(), &mut |path, w| {
        let x1 = path.last().unwrap().coords()[0] as f64;
        acc += w * x1 * x1;
    })?;
    Ok(acc)
}

/// Exact probability of the three-condition escape event by depth-first
/// enumeration over the full horizon, pruning branches as soon as a
/// time-indexed condition fails.
pub fn exact_escape(z: &Point, cfg: &EscapeConfig, params: &ModelParams) -> Result<f64> {
    let horizon = cfg.horizon();
    check_budget(params.d, horizon)?;
    let outer = Block::centered(params.d, 4 * cfg.big_r);
    let inner = Block::centered(params.d, cfg.big_r);
    let cond3_start = 40 * cfg.r * cfg.r;
    let r2 = (cfg.big_r * cfg.big_r) as u64;

    // Inline condition check, coded separately from the sampling indicator.
    let ok = move |t: u64, pos: &Point, cfg: &EscapeConfig| -> bool {
        if t >= 1 && (!outer.contains(pos) || cfg.avoid.contains(pos)) {
            return false;
        }
        if t >= r2 && !inner.contains(pos) {
            return false;
        }
        if cond3_start as u64 <= 2 * r2 && t >= cond3_start as u64 && cfg.lam_plus.contains(pos)
        {
            return false;
        }
        true
    };

    let mut total = 0.0;
    let mut env = EdgeEnvironment::new();
    let mut path = vec![z.clone()];
    escape_dfs(params, cfg, horizon, &ok, &mut env, &mut path, 1.0, &mut total);
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn escape_dfs(
    params: &ModelParams,
    cfg: &EscapeConfig,
    remaining: u64,
    ok: &impl Fn(u64, &Point, &EscapeConfig) -> bool,
    env: &mut EdgeEnvironment,
    path: &mut Vec<Point>,
    weight: f64,
    total: &mut f64,
) {
    if remaining == 0 {
        *total += weight;
        return;
    }
    let cur = path.last().expect("nonempty").clone();
    let twod = 2 * params.d;
    let flags: Vec<bool> = (0..twod)
        .map(|i| {
            let (axis, delta) = neighbor_offset(i);
            env.contains(&Edge::from_step(&cur, axis, delta))
        })
        .collect();
    let probs = probs_from_flags(&flags, params.a);
    let t_next = cfg.horizon() - remaining + 1;
    for i in 0..twod {
        let next = neighbor_by_index(&cur, i);
        if !ok(t_next, &next, cfg) {
            continue;
        }
        let edge = Edge::new(&cur, &next).expect("neighbor step");
        let inserted = env.insert(edge.clone());
        path.push(next);
        escape_dfs(params, cfg, remaining - 1, ok, env, path, weight * probs[i], total);
        path.pop();
        if inserted {
            env.remove(&edge);
        }
    }
}

/// Exact escape probability by a forward dynamic program with per-time
/// pruning; the escape conditions depend only on time and position, so
/// merging `(position, environment)` states is sound.
pub fn exact_escape_dp(z: &Point, cfg: &EscapeConfig, params: &ModelParams) -> Result<f64> {
    let horizon = cfg.horizon();
    check_budget(params.d, horizon)?;
    let outer = Block::centered(params.d, 4 * cfg.big_r);
    let inner = Block::centered(params.d, cfg.big_r);
    let r2 = (cfg.big_r * cfg.big_r) as u64;
    let cond3_start = (40 * cfg.r * cfg.r) as u64;
    let cond3_active = cond3_start <= 2 * r2;

    type State = (Point, Vec<Edge>);
    let mut states: BTreeMap<State, f64> = BTreeMap::new();
    states.insert((z.clone(), Vec::new()), 1.0);
    let twod = 2 * params.d;
    for t in 1..=horizon {
        let mut next_states: BTreeMap<State, f64> = BTreeMap::new();
        for ((pos, edges), mass) in states {
            let env = EdgeEnvironment::from_edges(edges.iter().cloned());
            let flags: Vec<bool> = (0..twod)
                .map(|i| {
                    let (axis, delta) = neighbor_offset(i);
                    env.contains(&Edge::from_step(&pos, axis, delta))
                })
                .collect();
            let probs = probs_from_flags(&flags, params.a);
            for i in 0..twod {
                let next = neighbor_by_index(&pos, i);
                if !outer.contains(&next) || cfg.avoid.contains(&next) {
                    continue;
                }
                if t >= r2 && !inner.contains(&next) {
                    continue;
                }
                if cond3_active && t >= cond3_start && cfg.lam_plus.contains(&next) {
                    continue;
                }
                let edge = Edge::new(&pos, &next).expect("neighbor step");
                let mut new_edges = edges.clone();
                if let Err(at) = new_edges.binary_search(&edge) {
                    new_edges.insert(at, edge);
                }
                *next_states.entry((next, new_edges)).or_insert(0.0) += mass * probs[i];
            }
        }
        states = next_states;
    }
    Ok(states.values().sum())
}

/// Lattice points of the Euclidean ball of radius `radius`, with an index.
struct BallDomain {
    points: Vec<Point>,
    index: MixHashMap<Point, usize>,
    /// Flattened neighbor indices, `2d` per point, `usize::MAX` marking
    /// absorbed (outside-ball) directions.
    neighbors: Vec<usize>,
    twod: usize,
}

const LINEAR_SOLVE_MAX_POINTS: usize = 3_000_000;

impl BallDomain {
    fn build(d: usize, radius: i64, exclude_origin: bool) -> Result<BallDomain> {
        let r2 = radius * radius;
        let cube = Block::centered(d, radius);
        if cube.volume() > LINEAR_SOLVE_MAX_POINTS as u128 {
            return Err(Error::Budget(format!(
                "ball domain with bounding cube of {} points exceeds the solver guard",
                cube.volume()
            )));
        }
        let origin = Point::origin(d);
        let mut points = Vec::new();
        for p in cube.points() {
            let n2: i64 = p.coords().iter().map(|c| c * c).sum();
            if n2 <= r2 && !(exclude_origin && p == origin) {
                points.push(p);
            }
        }
        let mut index = MixHashMap::default();
        for (i, p) in points.iter().enumerate() {
            index.insert(p.clone(), i);
        }
        let twod = 2 * d;
        let mut neighbors = vec![usize::MAX; points.len() * twod];
        for (i, p) in points.iter().enumerate() {
            for k in 0..twod {
                let q = neighbor_by_index(p, k);
                if let Some(&j) = index.get(&q) {
                    neighbors[i * twod + k] = j;
                }
            }
        }
        Ok(BallDomain { points, index, neighbors, twod })
    }

    /// `y = (I - P) x` with the absorbing exterior.
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let inv = 1.0 / self.twod as f64;
        for i in 0..self.points.len() {
            let mut s = 0.0;
            for k in 0..self.twod {
                let j = self.neighbors[i * self.twod + k];
                if j != usize::MAX {
                    s += x[j];
                }
            }
            y[i] = x[i] - inv * s;
        }
    }

    /// Conjugate gradient for the symmetric positive definite `(I - P)`.
    fn solve(&self, b: &[f64], tol: f64) -> Vec<f64> {
        let n = self.points.len();
        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        let mut p = r.clone();
        let mut ap = vec![0.0; n];
        let mut rs: f64 = r.iter().map(|v| v * v).sum();
        for _ in 0..20_000 {
            if rs.sqrt() < tol {
                break;
            }
            self.apply(&p, &mut ap);
            let alpha = rs / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rs_new: f64 = r.iter().map(|v| v * v).sum();
            let beta = rs_new / rs;
            rs = rs_new;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
        }
        x
    }

    fn residual_inf(&self, x: &[f64], b: &[f64]) -> f64 {
        let mut y = vec![0.0; x.len()];
        self.apply(x, &mut y);
        y.iter().zip(b).map(|(yi, bi)| (yi - bi).abs()).fold(0.0, f64::max)
    }
}

/// Truncated simple-random-walk Green's function table: expected visits
/// (from time 1 on) to each point of the Euclidean ball, with the exterior
/// absorbing. Truncation underestimates the full-lattice values.
pub struct GreenTable {
    pub d: usize,
    pub radius: i64,
    pub residual: f64,
    points: Vec<Point>,
    values: Vec<f64>,
    index: MixHashMap<Point, usize>,
}

impl GreenTable {
    pub fn value(&self, x: &Point) -> Option<f64> {
        self.index.get(x).map(|&i| self.values[i])
    }

    pub fn at_origin(&self) -> f64 {
        self.value(&Point::origin(self.d)).expect("origin is in the ball")
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }
}

/// Solve `(I - P) h = e_0` on the Euclidean ball with absorbing exterior and
/// return `g = h - e_0` (visits from time 1 on). Refuses `d <= 2`, where the
/// full-lattice Green's function diverges.
pub fn srw_green(d: usize, truncation_radius: i64) -> Result<GreenTable> {
    if d <= 2 {
        return Err(Error::Precondition(
            "the Green's function diverges for d <= 2; use d >= 3".into(),
        ));
    }
    if truncation_radius < 1 {
        return Err(Error::Precondition("truncation radius must be >= 1".into()));
    }
    if d == 3 && truncation_radius > 30 {
        return Err(Error::Budget("d = 3 truncation radius is capped at 30".into()));
    }
    let domain = BallDomain::build(d, truncation_radius, false)?;
    let origin_idx = domain.index[&Point::origin(d)];
    let mut b = vec![0.0; domain.points.len()];
    b[origin_idx] = 1.0;
    let h = domain.solve(&b, 1e-13);
    let residual = domain.residual_inf(&h, &b);
    let mut values = h;
    values[origin_idx] -= 1.0;
    Ok(GreenTable {
        d,
        radius: truncation_radius,
        residual,
        points: domain.points,
        values,
        index: domain.index,
    })
}

/// Result of the exit-through-edge solve.
#[derive(Debug, Clone, Serialize)]
pub struct ExitEdgeResult {
    pub probability: f64,
    pub residual: f64,
    pub ball_radius: i64,
    pub domain_size: usize,
}

/// Exact probability that simple random walk from the origin exits the
/// Euclidean ball `D(0, L)` for the first time through `target_edge` before
/// returning to the origin. Absorbing states are the origin and the entire
/// exterior; the target edge must connect the ball to its complement.
pub fn exact_exit_through_edge(d: usize, radius: i64, target_edge: &Edge) -> Result<ExitEdgeResult> {
    if radius < 1 {
        return Err(Error::Precondition("ball radius must be >= 1".into()));
    }
    let r2 = radius * radius;
    let norm2 = |p: &Point| -> i64 { p.coords().iter().map(|c| c * c).sum() };
    let (p, q) = target_edge.endpoints();
    let (x_in, _x_out) = match (norm2(&p) <= r2, norm2(&q) <= r2) {
        (true, false) => (p, q),
        (false, true) => (q, p),
        _ => {
            return Err(Error::Precondition(
                "target edge must connect the ball to its exterior".into(),
            ))
        }
    };
    let domain = BallDomain::build(d, radius, true)?;
    let twod = 2 * d;
    let mut b = vec![0.0; domain.points.len()];
    let in_idx = domain.index.get(&x_in).copied().ok_or_else(|| {
        Error::Precondition("target edge endpoint is the origin or outside the ball".into())
    })?;
    b[in_idx] = 1.0 / twod as f64;
    let h = domain.solve(&b, 1e-13);
    let residual = domain.residual_inf(&h, &b);
    // First step from the origin, which is not itself a state.
    let origin = Point::origin(d);
    let mut prob = 0.0;
    for k in 0..twod {
        let w = neighbor_by_index(&origin, k);
        if let Some(&j) = domain.index.get(&w) {
            prob += h[j] / twod as f64;
        }
    }
    Ok(ExitEdgeResult {
        probability: prob,
        residual,
        ball_radius: radius,
        domain_size: domain.points.len(),
    })
}

/// Gambler's-ruin closed form for the d = 1 exit probability through the
/// right boundary edge `{m, m+1}` of the ball `[-m, m]`: `1 / (2 (m + 1))`.
pub fn exit_edge_closed_form_d1(m: i64) -> f64 {
    1.0 / (2.0 * (m as f64 + 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_step_distribution_is_uniform() {
        for d in [1usize, 2, 3] {
            for a in [0.0, 0.5, 2.0] {
                let params = ModelParams::new(d, a);
                let dist =
                    enumerate_orrw(&params, 1, &Point::origin(d), &EdgeEnvironment::new())
                        .unwrap();
                assert_eq!(dist.support.len(), 2 * d);
                for (_, p) in &dist.support {
                    assert!((p - 1.0 / (2 * d) as f64).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn two_step_d1_return_probability() {
        // After one step an edge is reinforced: the walk returns with
        // probability (1+a)/(2+a); with a = 1 that is 2/3, leaving 1/6 for
        // each endpoint +-2.
        let params = ModelParams::new(1, 1.0);
        let dist =
            enumerate_orrw(&params, 2, &Point::origin(1), &EdgeEnvironment::new()).unwrap();
        assert!((dist.prob(&Point::new(vec![0])) - 2.0 / 3.0).abs() < 1e-14);
        assert!((dist.prob(&Point::new(vec![2])) - 1.0 / 6.0).abs() < 1e-14);
        assert!((dist.prob(&Point::new(vec![-2])) - 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn srw_reduction_binomial() {
        // a = 0: the endpoint distribution is the simple-random-walk one.
        let params = ModelParams::new(1, 0.0);
        let dist =
            enumerate_orrw(&params, 4, &Point::origin(1), &EdgeEnvironment::new()).unwrap();
        // Binomial(4, 1/2) displaced: P(S_4 = 2k - 4) = C(4, k) / 16.
        let want = [(-4i64, 1.0), (-2, 4.0), (0, 6.0), (2, 4.0), (4, 1.0)];
        for (x, c) in want {
            assert!((dist.prob(&Point::new(vec![x])) - c / 16.0).abs() < 1e-14);
        }
    }

    #[test]
    fn distribution_sums_to_one_and_routes_agree() {
        for (d, a, t) in [(1usize, 1.0f64, 6u64), (2, 0.5, 5), (2, 1.0, 4), (3, 2.0, 3)] {
            let params = ModelParams::new(d, a);
            let dfs =
                enumerate_orrw(&params, t, &Point::origin(d), &EdgeEnvironment::new()).unwrap();
            let dp = enumerate_orrw_dp(&params, t, &Point::origin(d), &EdgeEnvironment::new())
                .unwrap();
            assert!((dfs.total_mass() - 1.0).abs() < 1e-9);
            assert_eq!(dfs.support.len(), dp.support.len());
            for (v, p) in &dfs.support {
                assert!((p - dp.prob(v)).abs() < 1e-12, "{v} differs");
            }
        }
    }

    #[test]
    fn enumeration_respects_nonvirgin_environment() {
        // With the edge {0,1} pre-reinforced, the first step is already
        // biased: P(+1) = (1+a)/(2+a).
        let params = ModelParams::new(1, 1.0);
        let env = EdgeEnvironment::from_edges([Edge::new(
            &Point::new(vec![0]),
            &Point::new(vec![1]),
        )
        .unwrap()]);
        let dist = enumerate_orrw(&params, 1, &Point::origin(1), &env).unwrap();
        assert!((dist.prob(&Point::new(vec![1])) - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn budget_guard_trips() {
        let params = ModelParams::new(3, 1.0);
        let err = enumerate_orrw(&params, 12, &Point::origin(3), &EdgeEnvironment::new());
        assert!(matches!(err, Err(Error::Budget(_))));
    }

    #[test]
    fn moments_match_known_values() {
        assert!((exact_moments(&ModelParams::new(1, 1.0), 1).unwrap() - 1.0).abs() < 1e-14);
        assert!((exact_moments(&ModelParams::new(2, 1.0), 1).unwrap() - 0.5).abs() < 1e-14);
        assert!((exact_moments(&ModelParams::new(3, 0.7), 1).unwrap() - 1.0 / 3.0).abs() < 1e-14);
        // d=1, a=1, t=2: P(|W|=2) = 1/3, so E[W^2] = 4/3.
        assert!((exact_moments(&ModelParams::new(1, 1.0), 2).unwrap() - 4.0 / 3.0).abs() < 1e-14);
        // SRW: exactly t/d.
        assert!((exact_moments(&ModelParams::new(2, 0.0), 4).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn green_d3_properties() {
        let g10 = srw_green(3, 10).unwrap();
        assert!(g10.residual <= 1e-10, "residual {}", g10.residual);
        let origin = g10.at_origin();
        // With visits counted from time 1, the origin value equals the
        // neighbor average, hence exactly the common neighbor value; strict
        // dominance starts at distance 2.
        let e1 = Point::new(vec![1, 0, 0]);
        assert!((g10.value(&e1).unwrap() - origin).abs() < 1e-12);
        for p in g10.points() {
            if p.linf_norm() >= 2 {
                let v = g10.value(p).unwrap();
                assert!(v < origin, "g({p}) = {v} >= g(0) = {origin}");
            }
        }
        // Symmetry under reflections and coordinate permutations.
        let x = Point::new(vec![2, 1, 0]);
        let images = [
            Point::new(vec![-2, 1, 0]),
            Point::new(vec![1, 2, 0]),
            Point::new(vec![0, 1, 2]),
            Point::new(vec![2, 0, 1]),
        ];
        let gx = g10.value(&x).unwrap();
        for im in images {
            assert!((g10.value(&im).unwrap() - gx).abs() < 1e-9);
        }
    }

    #[test]
    fn green_refuses_low_dimension() {
        assert!(srw_green(2, 10).is_err());
        assert!(srw_green(1, 10).is_err());
    }

    #[test]
    fn exit_edge_d1_matches_gamblers_ruin() {
        for m in [1i64, 2, 5, 9] {
            let edge =
                Edge::new(&Point::new(vec![m]), &Point::new(vec![m + 1])).unwrap();
            let got = exact_exit_through_edge(1, m, &edge).unwrap();
            let want = exit_edge_closed_form_d1(m);
            assert!(
                (got.probability - want).abs() < 1e-10,
                "m={m}: {} vs {want}",
                got.probability
            );
            assert!(got.residual <= 1e-10);
        }
    }

    #[test]
    fn exit_edge_guards() {
        let bad = Edge::new(&Point::new(vec![0, 0]), &Point::new(vec![1, 0])).unwrap();
        assert!(exact_exit_through_edge(2, 4, &bad).is_err()); // interior edge
        let e = Edge::new(&Point::new(vec![1]), &Point::new(vec![2])).unwrap();
        assert!(exact_exit_through_edge(1, 0, &e).is_err()); // degenerate ball
    }
}
