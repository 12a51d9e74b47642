//! Core once-reinforced random walk dynamics: environments, the transition
//! law, simulation, shared-uniform couplings, and path concatenation.
//!
//! The walk lives on `Z^d`. An edge carries weight `1 + a` once it has been
//! crossed and weight `1` before; each step picks a neighbor with probability
//! proportional to the incident edge weights, realized from a single uniform
//! through the fixed neighbor order. With `a = 0` the process is exactly
//! simple random walk, step for step, on the same uniforms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::lattice::{neighbor_offset, Edge, PathKind, PathSeq, Point};
use crate::rng::{MixHashMap, MixHashSet, UniformSource};

/// Model parameters: dimension, reinforcement, and the fixed exponents used
/// by the block diagnostics.
///
/// Defaults: `kappa = 3.5`, `nu = 0.01`, `epsilon = 1/(10^4 d)`,
/// `delta = 1/(10^5 d^2)`. All four are overridable for experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Lattice dimension (>= 1).
    pub d: usize,
    /// Reinforcement weight on crossed edges (>= 0; 0 recovers SRW).
    pub a: f64,
    /// Heaviness exponent: a radius-r block is heavy at `r^kappa` distinct
    /// visited vertices.
    pub kappa: f64,
    /// Probability-bound buffer exponent.
    pub nu: f64,
    /// Relaxed-time window exponent.
    pub epsilon: f64,
    /// Lower block-scale exponent.
    pub delta: f64,
}

impl ModelParams {
    pub fn new(d: usize, a: f64) -> Self {
        assert!(d >= 1, "dimension must be at least 1");
        assert!(a >= 0.0, "reinforcement must be nonnegative");
        let df = d as f64;
        ModelParams {
            d,
            a,
            kappa: 3.5,
            nu: 0.01,
            epsilon: 1.0 / (1e4 * df),
            delta: 1.0 / (1e5 * df * df),
        }
    }

    pub fn with_exponents(mut self, kappa: f64, nu: f64, epsilon: f64, delta: f64) -> Self {
        assert!(kappa > 0.0 && nu > 0.0 && epsilon > 0.0 && delta > 0.0);
        self.kappa = kappa;
        self.nu = nu;
        self.epsilon = epsilon;
        self.delta = delta;
        self
    }

    /// Lower scale `a^{-1/3}` of the relaxed-time scan; infinite when `a = 0`.
    pub fn lower_scale(&self) -> f64 {
        if self.a == 0.0 {
            f64::INFINITY
        } else {
            self.a.powf(-1.0 / 3.0)
        }
    }
}

/// The set of reinforced edges.
///
/// Grows monotonically during a simulation; an edge is inserted exactly when
/// first crossed.
#[derive(Debug, Clone, Default)]
pub struct EdgeEnvironment {
    set: MixHashSet<Edge>,
}

impl EdgeEnvironment {
    pub fn new() -> Self {
        EdgeEnvironment::default()
    }

    pub fn from_edges(edges: impl IntoIterator<Item = Edge>) -> Self {
        EdgeEnvironment { set: edges.into_iter().collect() }
    }

    #[inline]
    pub fn contains(&self, e: &Edge) -> bool {
        self.set.contains(e)
    }

    /// Insert an edge; returns true if it was new.
    #[inline]
    pub fn insert(&mut self, e: Edge) -> bool {
        self.set.insert(e)
    }

    /// Removal is not part of the model (environments only grow); the
    /// enumeration oracles use it to backtrack.
    #[inline]
    pub(crate) fn remove(&mut self, e: &Edge) -> bool {
        self.set.remove(e)
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Edge> {
        self.set.iter()
    }

    /// Edges in canonical order, for serialization and comparisons.
    pub fn sorted_edges(&self) -> Vec<Edge> {
        let mut v: Vec<Edge> = self.set.iter().cloned().collect();
        v.sort();
        v
    }
}

impl PartialEq for EdgeEnvironment {
    fn eq(&self, other: &Self) -> bool {
        self.set == other.set
    }
}

impl Eq for EdgeEnvironment {}

impl Serialize for EdgeEnvironment {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        self.sorted_edges().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for EdgeEnvironment {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let edges = Vec::<Edge>::deserialize(deserializer)?;
        Ok(EdgeEnvironment::from_edges(edges))
    }
}

/// A realized walk: its vertex sequence together with the environment it
/// built and per-vertex visit counts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: ModelParams,
    pub positions: PathSeq,
    /// Reinforced edges at the end of the run (initial environment included).
    pub env: EdgeEnvironment,
    /// Environment the walk started in.
    pub env0: EdgeEnvironment,
    #[serde(with = "crate::lattice::point_map")]
    pub visit_counts: BTreeMap<Point, u64>,
}

impl Trajectory {
    pub fn origin(&self) -> Option<&Point> {
        self.positions.vertices().first()
    }

    /// Number of steps taken.
    pub fn len_steps(&self) -> usize {
        self.positions.len_steps()
    }

    /// Position at time `t`.
    pub fn at(&self, t: usize) -> &Point {
        &self.positions.vertices()[t]
    }

    pub fn vertices(&self) -> &[Point] {
        self.positions.vertices()
    }

    fn from_positions(
        params: ModelParams,
        positions: PathSeq,
        env0: EdgeEnvironment,
    ) -> Trajectory {
        let mut env = env0.clone();
        for e in positions.crossed_edges() {
            env.insert(e);
        }
        let mut visit_counts = BTreeMap::new();
        for v in positions.vertices() {
            *visit_counts.entry(v.clone()).or_insert(0) += 1;
        }
        Trajectory { params, positions, env, env0, visit_counts }
    }
}

/// Transition probabilities from `u` under Eq-style reinforcement, aligned
/// with the fixed neighbor order. Entries sum to one up to rounding.
pub fn transition_probs(env: &EdgeEnvironment, a: f64, u: &Point) -> Vec<f64> {
    let d = u.dim();
    let mut reinforced: SmallVec<[bool; 16]> = SmallVec::with_capacity(2 * d);
    for i in 0..2 * d {
        let (axis, delta) = neighbor_offset(i);
        reinforced.push(env.contains(&Edge::from_step(u, axis, delta)));
    }
    probs_from_flags(&reinforced, a).to_vec()
}

/// Shared arithmetic for the transition law. Weight `1 + a` per reinforced
/// incident edge, `1` otherwise; normalized by the sequential sum in neighbor
/// order. Every caller (public API, walker, oracles) funnels through this so
/// couplings stay bit-identical.
#[inline]
pub(crate) fn probs_from_flags(reinforced: &[bool], a: f64) -> SmallVec<[f64; 16]> {
    let mut weights: SmallVec<[f64; 16]> = SmallVec::with_capacity(reinforced.len());
    let mut total = 0.0f64;
    for &flag in reinforced {
        let w = if flag { 1.0 + a } else { 1.0 };
        weights.push(w);
        total += w;
    }
    let mut probs: SmallVec<[f64; 16]> = SmallVec::with_capacity(reinforced.len());
    for w in weights {
        probs.push(w / total);
    }
    probs
}

/// Pick the neighbor index for uniform `u` by the cumulative half-open
/// intervals `[sum_{j<i} p_j, sum_{j<=i} p_j)` in the fixed neighbor order.
#[inline]
pub fn step_index(probs: &[f64], u: f64) -> usize {
    debug_assert!((0.0..1.0).contains(&u));
    let mut acc = 0.0f64;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding can leave the total a few ulps below 1; the last interval
    // absorbs the remainder.
    probs.len() - 1
}

/// The step as a function of a uniform: returns the chosen neighbor of `u`.
pub fn step(u: &Point, probs: &[f64], unif: f64) -> Point {
    let i = step_index(probs, unif);
    let (axis, delta) = neighbor_offset(i);
    u.shifted(axis, delta)
}

/// Streaming ORRW stepper.
///
/// Owns the current position, the environment, and (when the uniform source
/// needs it) per-vertex visit counts. Estimators drive this directly to avoid
/// storing full position sequences; `simulate` collects it into a
/// `Trajectory`.
pub struct Walker<'a> {
    params: &'a ModelParams,
    src: &'a UniformSource,
    pos: Point,
    steps_taken: u64,
    env: EdgeEnvironment,
    /// Bitmask of reinforced incident edges per visited vertex, in neighbor
    /// order. Pure cache over `env`; only maintained for d <= 8 and a > 0.
    masks: MixHashMap<Point, u16>,
    visits: Option<MixHashMap<Point, u64>>,
    use_masks: bool,
}

impl<'a> Walker<'a> {
    pub fn new(
        params: &'a ModelParams,
        start: Point,
        src: &'a UniformSource,
        env0: EdgeEnvironment,
    ) -> Walker<'a> {
        assert_eq!(start.dim(), params.d, "start point dimension mismatch");
        let visits = if src.needs_visit_counts() {
            let mut m = MixHashMap::default();
            m.insert(start.clone(), 1u64);
            Some(m)
        } else {
            None
        };
        let use_masks = params.a > 0.0 && 2 * params.d <= 16;
        Walker {
            params,
            src,
            pos: start,
            steps_taken: 0,
            env: env0,
            masks: MixHashMap::default(),
            visits,
            use_masks,
        }
    }

    pub fn position(&self) -> &Point {
        &self.pos
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps_taken
    }

    pub fn env(&self) -> &EdgeEnvironment {
        &self.env
    }

    pub fn into_env(self) -> EdgeEnvironment {
        self.env
    }

    pub fn visit_count(&self, v: &Point) -> u64 {
        self.visits.as_ref().map_or(0, |m| m.get(v).copied().unwrap_or(0))
    }

    #[inline]
    fn mask_at(&mut self, u: &Point) -> u16 {
        if let Some(&m) = self.masks.get(u) {
            return m;
        }
        let mut m = 0u16;
        for i in 0..2 * self.params.d {
            let (axis, delta) = neighbor_offset(i);
            if self.env.contains(&Edge::from_step(u, axis, delta)) {
                m |= 1 << i;
            }
        }
        self.masks.insert(u.clone(), m);
        m
    }

    #[inline]
    fn record_crossing(&mut self, from: &Point, axis: usize, delta: i64, to_index: usize) {
        let edge = Edge::from_step(from, axis, delta);
        if self.env.insert(edge) && self.use_masks {
            // Keep materialized masks in sync; absent ones will be rebuilt
            // from the environment on first use.
            if let Some(m) = self.masks.get_mut(from) {
                *m |= 1 << to_index;
            }
            let to = from.shifted(axis, delta);
            // The reverse direction flips the low bit of the index.
            let back_index = to_index ^ 1;
            if let Some(m) = self.masks.get_mut(&to) {
                *m |= 1 << back_index;
            }
        }
    }

    /// Advance one step and return the new position.
    pub fn step(&mut self) -> &Point {
        let twod = 2 * self.params.d;
        let a = self.params.a;
        let visit_n = match &self.visits {
            Some(m) => m[&self.pos],
            None => 0,
        };
        let unif = self.src.uniform(self.steps_taken, &self.pos, visit_n);

        let idx = if a == 0.0 {
            // Virgin-weight fast path: identical arithmetic to the general
            // route because every weight is exactly 1.0.
            let p = 1.0 / twod as f64;
            let mut acc = 0.0f64;
            let mut chosen = twod - 1;
            for i in 0..twod {
                acc += p;
                if unif < acc {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            let mask = if self.use_masks {
                self.mask_at(&self.pos.clone())
            } else {
                let mut m = 0u16;
                for i in 0..twod.min(16) {
                    let (axis, delta) = neighbor_offset(i);
                    if self.env.contains(&Edge::from_step(&self.pos, axis, delta)) {
                        m |= 1 << i;
                    }
                }
                m
            };
            if twod <= 16 {
                let flags: SmallVec<[bool; 16]> =
                    (0..twod).map(|i| mask & (1 << i) != 0).collect();
                let probs = probs_from_flags(&flags, a);
                step_index(&probs, unif)
            } else {
                let flags: Vec<bool> = (0..twod)
                    .map(|i| {
                        let (axis, delta) = neighbor_offset(i);
                        self.env.contains(&Edge::from_step(&self.pos, axis, delta))
                    })
                    .collect();
                let probs = probs_from_flags(&flags, a);
                step_index(&probs, unif)
            }
        };

        let (axis, delta) = neighbor_offset(idx);
        let from = self.pos.clone();
        self.record_crossing(&from, axis, delta, idx);
        self.pos.translate_axis(axis, delta);
        self.steps_taken += 1;
        if let Some(m) = &mut self.visits {
            *m.entry(self.pos.clone()).or_insert(0) += 1;
        }
        &self.pos
    }
}

/// Run ORRW for `steps` steps and collect the full trajectory.
///
/// The result is a pure function of `(params, start, steps, src, env0)`.
pub fn simulate(
    params: &ModelParams,
    start: &Point,
    steps: u64,
    src: &UniformSource,
    env0: EdgeEnvironment,
) -> Trajectory {
    let mut walker = Walker::new(params, start.clone(), src, env0.clone());
    let mut positions = Vec::with_capacity(steps as usize + 1);
    positions.push(start.clone());
    for _ in 0..steps {
        positions.push(walker.step().clone());
    }
    Trajectory::from_positions(params.clone(), PathSeq::strict_unchecked(positions), env0)
}

/// Direct simple-random-walk stepping from the same uniform stream: constant
/// probabilities, no environment. Bitwise comparable with `simulate` at
/// `a = 0` because the cumulative scan is the same arithmetic.
pub fn simulate_srw(d: usize, start: &Point, steps: u64, src: &UniformSource) -> Vec<Point> {
    assert_eq!(start.dim(), d);
    let twod = 2 * d;
    let p = 1.0 / twod as f64;
    let mut out = Vec::with_capacity(steps as usize + 1);
    let mut pos = start.clone();
    let mut visits: MixHashMap<Point, u64> = MixHashMap::default();
    let track_visits = src.needs_visit_counts();
    if track_visits {
        visits.insert(pos.clone(), 1);
    }
    out.push(pos.clone());
    for t in 0..steps {
        let visit_n = if track_visits { visits[&pos] } else { 0 };
        let unif = src.uniform(t, &pos, visit_n);
        let mut acc = 0.0f64;
        let mut chosen = twod - 1;
        for i in 0..twod {
            acc += p;
            if unif < acc {
                chosen = i;
                break;
            }
        }
        let (axis, delta) = neighbor_offset(chosen);
        pos.translate_axis(axis, delta);
        if track_visits {
            *visits.entry(pos.clone()).or_insert(0) += 1;
        }
        out.push(pos.clone());
    }
    out
}

/// Run two walks off the same time-indexed uniform sequence.
///
/// Identical starts and environments give identical trajectories; differing
/// environments disagree only when a uniform lands between the two cumulative
/// interval partitions.
pub fn natural_couple(
    params: &ModelParams,
    start_a: &Point,
    env_a: EdgeEnvironment,
    start_b: &Point,
    env_b: EdgeEnvironment,
    steps: u64,
    seed: u64,
) -> (Trajectory, Trajectory) {
    let src = UniformSource::time_stream(seed);
    let ta = simulate(params, start_a, steps, &src, env_a);
    let tb = simulate(params, start_b, steps, &src, env_b);
    (ta, tb)
}

/// Glue `w2` (which must start at the origin) onto the end of `w1`,
/// translating its positions and reinforced edges by `w1`'s endpoint.
pub fn concatenate(w1: &Trajectory, w2: &Trajectory) -> Result<Trajectory> {
    if w1.params != w2.params {
        return Err(Error::Precondition(
            "concatenation requires identical model parameters".into(),
        ));
    }
    if !matches!(w1.positions.kind(), PathKind::Strict)
        || !matches!(w2.positions.kind(), PathKind::Strict)
    {
        return Err(Error::Precondition("concatenation requires strict paths".into()));
    }
    let Some(origin2) = w2.origin() else {
        return Ok(w1.clone());
    };
    if origin2 != &Point::origin(w2.params.d) {
        return Err(Error::Precondition("second walk must start at the origin".into()));
    }
    let Some(end1) = w1.vertices().last() else {
        return Ok(w2.clone());
    };

    let mut positions: Vec<Point> = w1.vertices().to_vec();
    for v in &w2.vertices()[1..] {
        positions.push(end1.add(v));
    }
    let mut env0 = w1.env0.clone();
    for e in w2.env0.iter() {
        let (p, q) = e.endpoints();
        env0.insert(Edge::new(&end1.add(&p), &end1.add(&q)).expect("translated edge"));
    }
    Ok(Trajectory::from_positions(
        w1.params.clone(),
        PathSeq::strict_unchecked(positions),
        env0,
    ))
}

/// Generate a walk `w` of length `t1 + t2` together with the concatenation
/// `w_tilde` of two independent pieces, all three driven by one uniform
/// stream: `w` by `U_1..U_{t1+t2}`, the first piece by `U_1..U_{t1}`, the
/// second by `U_{t1+1}..U_{t1+t2}`. The first `t1` steps of `w` and `w_tilde`
/// coincide deterministically.
pub fn couple_concat(
    params: &ModelParams,
    t1: u64,
    t2: u64,
    seed: u64,
) -> Result<(Trajectory, Trajectory)> {
    let origin = Point::origin(params.d);
    let full_src = UniformSource::time_stream(seed);
    let w = simulate(params, &origin, t1 + t2, &full_src, EdgeEnvironment::new());
    let w1 = simulate(params, &origin, t1, &full_src, EdgeEnvironment::new());
    let src2 = UniformSource::time_stream_from(seed, t1);
    let w2 = simulate(params, &origin, t2, &src2, EdgeEnvironment::new());
    let w_tilde = concatenate(&w1, &w2)?;
    Ok((w, w_tilde))
}
