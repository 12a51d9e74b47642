//! Geometry of the integer lattice `Z^d`: points, edges, boxes, strict paths,
//! teleporting paths, and the restriction operator that turns an ambient path
//! into a teleporter relative to a box.
//!
//! All values here are immutable after construction and safe to share across
//! threads.

use serde::de::{SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use smallvec::SmallVec;

use crate::error::{Error, Result};

type Coords = SmallVec<[i64; 6]>;

/// A vertex of `Z^d`. Coordinates are in lattice units.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point {
    coords: Coords,
}

impl Point {
    pub fn new(coords: impl Into<Vec<i64>>) -> Self {
        Point { coords: Coords::from_vec(coords.into()) }
    }

    pub fn origin(d: usize) -> Self {
        Point { coords: smallvec::smallvec![0; d] }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords
    }

    /// The neighbor `self ± e_axis`.
    pub fn shifted(&self, axis: usize, delta: i64) -> Point {
        let mut c = self.coords.clone();
        c[axis] += delta;
        Point { coords: c }
    }

    pub fn add(&self, other: &Point) -> Point {
        let mut c = self.coords.clone();
        for (a, b) in c.iter_mut().zip(other.coords()) {
            *a += b;
        }
        Point { coords: c }
    }

    pub fn sub(&self, other: &Point) -> Point {
        let mut c = self.coords.clone();
        for (a, b) in c.iter_mut().zip(other.coords()) {
            *a -= b;
        }
        Point { coords: c }
    }

    pub fn linf_norm(&self) -> i64 {
        self.coords.iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    pub fn linf_dist(&self, other: &Point) -> i64 {
        self.coords
            .iter()
            .zip(other.coords())
            .map(|(a, b)| (a - b).abs())
            .max()
            .unwrap_or(0)
    }

    pub fn l1_dist(&self, other: &Point) -> i64 {
        self.coords.iter().zip(other.coords()).map(|(a, b)| (a - b).abs()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.coords.iter().map(|&c| (c as f64) * (c as f64)).sum::<f64>().sqrt()
    }

    pub fn l2_dist(&self, other: &Point) -> f64 {
        self.coords
            .iter()
            .zip(other.coords())
            .map(|(a, b)| {
                let d = (a - b) as f64;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// True if both points have the same dimension and L1 distance 1.
    pub fn is_neighbor_of(&self, other: &Point) -> bool {
        self.dim() == other.dim() && self.l1_dist(other) == 1
    }

    /// In-place move along an axis; the hot-loop alternative to `shifted`.
    #[inline]
    pub(crate) fn translate_axis(&mut self, axis: usize, delta: i64) {
        self.coords[axis] += delta;
    }
}

impl std::fmt::Display for Point {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

// Points serialize as plain JSON arrays of integers.
impl Serialize for Point {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.coords.len()))?;
        for c in &self.coords {
            seq.serialize_element(c)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Point;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("an array of integers")
            }
            fn visit_seq<A: SeqAccess<'de>>(
                self,
                mut seq: A,
            ) -> std::result::Result<Point, A::Error> {
                let mut coords = Vec::new();
                while let Some(c) = seq.next_element::<i64>()? {
                    coords.push(c);
                }
                Ok(Point::new(coords))
            }
        }
        deserializer.deserialize_seq(V)
    }
}

/// Serde adapter for maps keyed by points: JSON objects need string keys,
/// so point-keyed maps serialize as arrays of `[point, value]` pairs.
pub mod point_map {
    use super::Point;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<V: Serialize, S: Serializer>(
        map: &BTreeMap<Point, V>,
        serializer: S,
    ) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(map.iter())
    }

    pub fn deserialize<'de, V: Deserialize<'de>, D: Deserializer<'de>>(
        deserializer: D,
    ) -> Result<BTreeMap<Point, V>, D::Error> {
        let pairs: Vec<(Point, V)> = Vec::deserialize(deserializer)?;
        Ok(pairs.into_iter().collect())
    }
}

/// Fixed, translation-invariant neighbor order: `u+e1, u-e1, ..., u+ed, u-ed`.
///
/// The order is part of the model: the step function and every
/// shared-uniform coupling depend on it.
pub fn neighbors(u: &Point) -> Vec<Point> {
    let mut out = Vec::with_capacity(2 * u.dim());
    for axis in 0..u.dim() {
        out.push(u.shifted(axis, 1));
        out.push(u.shifted(axis, -1));
    }
    out
}

/// The i-th neighbor in the fixed order, without materializing the rest.
#[inline]
pub fn neighbor_by_index(u: &Point, index: usize) -> Point {
    let axis = index / 2;
    let delta = if index % 2 == 0 { 1 } else { -1 };
    u.shifted(axis, delta)
}

/// Axis and sign for the i-th neighbor in the fixed order.
#[inline]
pub fn neighbor_offset(index: usize) -> (usize, i64) {
    (index / 2, if index % 2 == 0 { 1 } else { -1 })
}

/// An unordered nearest-neighbor edge, stored canonically as its
/// lexicographically smaller endpoint plus the axis along which it runs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    lo: Point,
    axis: usize,
}

impl Edge {
    /// Build from two endpoints; they must be lattice neighbors.
    pub fn new(u: &Point, v: &Point) -> Result<Edge> {
        if u.dim() != v.dim() {
            return Err(Error::DimensionMismatch { expected: u.dim(), got: v.dim() });
        }
        if !u.is_neighbor_of(v) {
            return Err(Error::NotNeighbors(u.to_string(), v.to_string()));
        }
        let axis = u
            .coords()
            .iter()
            .zip(v.coords())
            .position(|(a, b)| a != b)
            .expect("neighbors differ in one coordinate");
        let lo = if u.coords()[axis] < v.coords()[axis] { u.clone() } else { v.clone() };
        Ok(Edge { lo, axis })
    }

    /// Canonical form from a known base point and a step `(axis, delta)`.
    #[inline]
    pub(crate) fn from_step(from: &Point, axis: usize, delta: i64) -> Edge {
        let lo = if delta > 0 { from.clone() } else { from.shifted(axis, -1) };
        Edge { lo, axis }
    }

    pub fn endpoints(&self) -> (Point, Point) {
        (self.lo.clone(), self.lo.shifted(self.axis, 1))
    }

    pub fn axis(&self) -> usize {
        self.axis
    }

    /// True if at least one endpoint lies in `block`.
    pub fn touches(&self, block: &Block) -> bool {
        block.contains(&self.lo) || block.contains(&self.lo.shifted(self.axis, 1))
    }
}

impl Serialize for Edge {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let (a, b) = self.endpoints();
        let mut seq = serializer.serialize_seq(Some(2))?;
        seq.serialize_element(&a)?;
        seq.serialize_element(&b)?;
        seq.end()
    }
}

impl<'de> Deserialize<'de> for Edge {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let pts: Vec<Point> = Vec::deserialize(deserializer)?;
        if pts.len() != 2 {
            return Err(serde::de::Error::custom("edge needs exactly two endpoints"));
        }
        Edge::new(&pts[0], &pts[1]).map_err(serde::de::Error::custom)
    }
}

impl std::fmt::Display for Edge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (a, b) = self.endpoints();
        write!(f, "{{{a},{b}}}")
    }
}

/// The box `center + [-radius, radius]^d` (an L-infinity ball).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Block {
    pub center: Point,
    pub radius: i64,
}

impl Block {
    pub fn new(center: Point, radius: i64) -> Self {
        assert!(radius >= 0, "block radius must be nonnegative");
        Block { center, radius }
    }

    /// Origin-centered box `[-radius, radius]^d`.
    pub fn centered(d: usize, radius: i64) -> Self {
        Block::new(Point::origin(d), radius)
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    #[inline]
    pub fn contains(&self, u: &Point) -> bool {
        u.linf_dist(&self.center) <= self.radius
    }

    /// True if every point of `other` lies in `self`.
    pub fn contains_block(&self, other: &Block) -> bool {
        self.center.linf_dist(&other.center) + other.radius <= self.radius
    }

    /// Proper containment: contains `other` and is not the same point set.
    pub fn strictly_contains(&self, other: &Block) -> bool {
        self.contains_block(other) && !(other.contains_block(self))
    }

    /// Every point of the box. Exponential in `d`; callers guard the size.
    pub fn points(&self) -> Vec<Point> {
        let d = self.dim();
        let mut out = Vec::new();
        let mut cur: Vec<i64> =
            self.center.coords().iter().map(|c| c - self.radius).collect();
        loop {
            out.push(Point::new(cur.clone()));
            let mut axis = 0;
            loop {
                if axis == d {
                    return out;
                }
                cur[axis] += 1;
                if cur[axis] <= self.center.coords()[axis] + self.radius {
                    break;
                }
                cur[axis] = self.center.coords()[axis] - self.radius;
                axis += 1;
            }
        }
    }

    pub fn volume(&self) -> u128 {
        (2 * self.radius as u128 + 1).pow(self.dim() as u32)
    }
}

impl std::fmt::Display for Block {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}+[-{},{}]^{}", self.center, self.radius, self.radius, self.dim())
    }
}

/// Edges with exactly one endpoint inside the box.
pub fn boundary_edges(block: &Block) -> std::collections::BTreeSet<Edge> {
    let mut out = std::collections::BTreeSet::new();
    for p in block.points() {
        for axis in 0..block.dim() {
            for dir in [1i64, -1] {
                // A point on a face emits the outgoing edge along that axis.
                if p.coords()[axis] == block.center.coords()[axis] + dir * block.radius {
                    let q = p.shifted(axis, dir);
                    out.insert(Edge::new(&p, &q).expect("face step is a neighbor step"));
                }
            }
        }
    }
    out
}

/// The closure: the box plus every vertex with a lattice neighbor inside it.
pub fn closure(block: &Block) -> std::collections::BTreeSet<Point> {
    let mut out: std::collections::BTreeSet<Point> = block.points().into_iter().collect();
    for e in boundary_edges(block) {
        let (a, b) = e.endpoints();
        out.insert(a);
        out.insert(b);
    }
    out
}

/// Kind of a vertex sequence: a strict nearest-neighbor path, or a
/// teleporting path relative to a box.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathKind {
    Strict,
    Teleporter(Block),
}

/// A realized vertex sequence.
///
/// Strict paths have adjacent consecutive vertices. A teleporter relative to
/// a box may jump between two consecutive vertices outside the box (a
/// teleport, possibly to the same vertex), but never stays outside for three
/// consecutive steps, and every step touching the box is a genuine neighbor
/// step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathSeq {
    vertices: Vec<Point>,
    kind: PathKind,
}

impl PathSeq {
    pub fn strict(vertices: Vec<Point>) -> Result<PathSeq> {
        for w in vertices.windows(2) {
            if !w[0].is_neighbor_of(&w[1]) {
                return Err(Error::InvalidPath(format!(
                    "consecutive vertices {} and {} are not neighbors",
                    w[0], w[1]
                )));
            }
        }
        Ok(PathSeq { vertices, kind: PathKind::Strict })
    }

    pub fn teleporter(vertices: Vec<Point>, block: Block) -> Result<PathSeq> {
        for w in vertices.windows(2) {
            let both_outside = !block.contains(&w[0]) && !block.contains(&w[1]);
            if !both_outside && !w[0].is_neighbor_of(&w[1]) {
                return Err(Error::InvalidPath(format!(
                    "step {} -> {} touches {} but is not a neighbor step",
                    w[0], w[1], block
                )));
            }
        }
        for w in vertices.windows(3) {
            if w.iter().all(|v| !block.contains(v)) {
                return Err(Error::InvalidPath(format!(
                    "three consecutive vertices outside {block}"
                )));
            }
        }
        Ok(PathSeq { vertices, kind: PathKind::Teleporter(block) })
    }

    /// Trusted constructor for sequences produced by the engine itself.
    pub(crate) fn strict_unchecked(vertices: Vec<Point>) -> PathSeq {
        PathSeq { vertices, kind: PathKind::Strict }
    }

    pub(crate) fn teleporter_unchecked(vertices: Vec<Point>, block: Block) -> PathSeq {
        PathSeq { vertices, kind: PathKind::Teleporter(block) }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn kind(&self) -> &PathKind {
        &self.kind
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Number of steps (vertices minus one; zero for empty sequences).
    pub fn len_steps(&self) -> usize {
        self.vertices.len().saturating_sub(1)
    }

    /// Edges crossed by the sequence. For teleporters this is the set of
    /// steps with at least one endpoint in the box; teleport jumps cross
    /// nothing.
    pub fn crossed_edges(&self) -> Vec<Edge> {
        let mut out = Vec::new();
        for w in self.vertices.windows(2) {
            match &self.kind {
                PathKind::Strict => {
                    out.push(Edge::new(&w[0], &w[1]).expect("strict path step"));
                }
                PathKind::Teleporter(block) => {
                    if block.contains(&w[0]) || block.contains(&w[1]) {
                        out.push(Edge::new(&w[0], &w[1]).expect("teleporter neighbor step"));
                    }
                }
            }
        }
        out
    }
}

/// Restriction of a path to a box: keep the times the walk is inside plus
/// the entry and exit anchors, skipping everything else.
///
/// Times are selected by the recursion `t_{i+1} = t_i + 1` when the walk is
/// inside, else the first later `t` that is inside or about to step inside;
/// `t_0` is 0 when the path starts inside, else the time just before first
/// entry. If the path never enters the box, the result is the empty
/// teleporter.
pub fn restrict(path: &PathSeq, block: &Block) -> Result<PathSeq> {
    match path.kind() {
        PathKind::Strict => {}
        PathKind::Teleporter(outer) => {
            if !outer.strictly_contains(block) {
                return Err(Error::Precondition(format!(
                    "restriction target {block} is not strictly contained in {outer}"
                )));
            }
        }
    }
    let verts = path.vertices();
    let n = verts.len();
    if n == 0 {
        return Ok(PathSeq::teleporter_unchecked(Vec::new(), block.clone()));
    }
    let inside = |t: usize| block.contains(&verts[t]);

    let mut picked: Vec<usize> = Vec::new();
    let t0 = if inside(0) {
        Some(0)
    } else {
        // First t with verts[t+1] inside.
        (0..n.saturating_sub(1)).find(|&t| inside(t + 1))
    };
    let Some(t0) = t0 else {
        return Ok(PathSeq::teleporter_unchecked(Vec::new(), block.clone()));
    };
    picked.push(t0);
    loop {
        let ti = *picked.last().unwrap();
        let next = if inside(ti) {
            if ti + 1 < n {
                Some(ti + 1)
            } else {
                None
            }
        } else {
            ((ti + 1)..n).find(|&t| inside(t) || (t + 1 < n && inside(t + 1)))
        };
        match next {
            Some(t) => picked.push(t),
            None => break,
        }
    }
    let vertices: Vec<Point> = picked.into_iter().map(|t| verts[t].clone()).collect();
    // The recursion guarantees teleporter validity; the checked constructor
    // is cheap and keeps the contract explicit.
    PathSeq::teleporter(vertices, block.clone())
}
