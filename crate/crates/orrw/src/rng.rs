//! Counter-based deterministic randomness.
//!
//! Every uniform variable consumed by a walk is a pure function of a key and
//! a counter, never of generator state. This is what makes shared-randomness
//! couplings exact: two walks keyed to the same stream read the same
//! `U_1, U_2, ...` no matter how their code paths interleave, and the
//! per-vertex envelope stacks `U_{v,n}` can be consumed independently by
//! processes that were run separately.
//!
//! The mixer is the SplitMix64 finalizer; for a fixed key the stream
//! `counter -> value` is exactly a SplitMix64 sequence, which passes the
//! usual statistical batteries. Keys are derived by folding tags and
//! coordinates through the same mixer.

use crate::lattice::Point;

/// Weyl sequence increment used by SplitMix64.
pub const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

const TAG_TIME: u64 = 0x7441_6d65_5374_7201; // distinct domains per source kind
const TAG_ENVELOPE: u64 = 0x456e_7665_6c6f_7065;
const TAG_DEMON: u64 = 0x4465_6d6f_6e52_6e67;
const TAG_REPLICA: u64 = 0x5265_706c_6963_6153;

/// SplitMix64 finalizer: a bijective 64-bit mixer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Keyed PRF: `(key, counter) -> u64`.
#[inline]
pub fn prf_u64(key: u64, counter: u64) -> u64 {
    mix64(key.wrapping_add(counter.wrapping_mul(GAMMA)))
}

/// Map a `u64` to the 53-bit uniform grid on `[0, 1)`.
#[inline]
pub fn u64_to_unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
fn fold_point(mut h: u64, v: &Point) -> u64 {
    for &c in v.coords() {
        h = mix64(h ^ (c as u64));
    }
    h
}

/// Source of the uniform variables driving a walk.
///
/// `TimeStream` realizes the shared sequence `U_1, U_2, ...` indexed by step
/// number (with an optional offset so a stream can be split into consecutive
/// segments). `Envelopes` realizes the per-vertex stacks `U_{v,n}` consumed
/// on the n-th arrival at `v`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UniformSource {
    TimeStream { seed: u64, offset: u64 },
    Envelopes { seed: u64 },
}

impl UniformSource {
    pub fn time_stream(seed: u64) -> Self {
        UniformSource::TimeStream { seed, offset: 0 }
    }

    /// Time stream whose first consumed variable is `U_{offset+1}`.
    pub fn time_stream_from(seed: u64, offset: u64) -> Self {
        UniformSource::TimeStream { seed, offset }
    }

    pub fn envelopes(seed: u64) -> Self {
        UniformSource::Envelopes { seed }
    }

    /// The k-th element of the time stream, `U_k` (k >= 1), ignoring offset.
    pub fn time_value(seed: u64, k: u64) -> f64 {
        u64_to_unit(prf_u64(mix64(seed ^ TAG_TIME), k))
    }

    /// The n-th envelope at vertex `v`, `U_{v,n}` (n >= 1).
    pub fn envelope_value(seed: u64, v: &Point, n: u64) -> f64 {
        let key = fold_point(mix64(seed ^ TAG_ENVELOPE), v);
        u64_to_unit(prf_u64(key, n))
    }

    /// Uniform consumed by the step taken when `steps_taken` steps are done,
    /// standing at `vertex` which has been visited `visit_n` times so far
    /// (including the current arrival).
    #[inline]
    pub fn uniform(&self, steps_taken: u64, vertex: &Point, visit_n: u64) -> f64 {
        match self {
            UniformSource::TimeStream { seed, offset } => {
                Self::time_value(*seed, offset + steps_taken + 1)
            }
            UniformSource::Envelopes { seed } => Self::envelope_value(*seed, vertex, visit_n),
        }
    }

    /// Envelope sources need the walker to maintain visit counts.
    pub fn needs_visit_counts(&self) -> bool {
        matches!(self, UniformSource::Envelopes { .. })
    }
}

/// Private uniform stream owned by a demon strategy (the external
/// randomisation). Consumption order is the strategy's own business, so this
/// one is a plain counter stream.
#[derive(Debug, Clone)]
pub struct DemonRandomness {
    key: u64,
    counter: u64,
}

impl DemonRandomness {
    pub fn new(seed: u64) -> Self {
        DemonRandomness { key: mix64(seed ^ TAG_DEMON), counter: 0 }
    }

    pub fn next_uniform(&mut self) -> f64 {
        self.counter += 1;
        u64_to_unit(prf_u64(self.key, self.counter))
    }
}

/// Replica seed derivation: `mix64(mix64(master ^ TAG_REPLICA) + index * GAMMA)`.
///
/// The rule is part of the output contract: runs are reproducible from
/// `(master_seed, replica_index)` alone.
pub fn derive_replica_seed(master_seed: u64, replica_index: u64) -> u64 {
    prf_u64(mix64(master_seed ^ TAG_REPLICA), replica_index)
}

/// Hash builder for lattice keys, based on the same mixer. `HashMap`s over
/// points and edges sit on every hot path, so the default SipHash is not an
/// option here.
#[derive(Debug, Clone, Copy, Default)]
pub struct MixBuildHasher;

#[derive(Debug, Clone, Copy, Default)]
pub struct MixHasher {
    state: u64,
}

impl std::hash::Hasher for MixHasher {
    #[inline]
    fn finish(&self) -> u64 {
        self.state
    }

    #[inline]
    fn write(&mut self, bytes: &[u8]) {
        for chunk in bytes.chunks(8) {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            self.state = mix64(self.state ^ u64::from_le_bytes(buf));
        }
    }

    #[inline]
    fn write_u64(&mut self, i: u64) {
        self.state = mix64(self.state ^ i);
    }

    #[inline]
    fn write_i64(&mut self, i: i64) {
        self.write_u64(i as u64);
    }

    #[inline]
    fn write_u8(&mut self, i: u8) {
        self.write_u64(i as u64);
    }

    #[inline]
    fn write_usize(&mut self, i: usize) {
        self.write_u64(i as u64);
    }
}

impl std::hash::BuildHasher for MixBuildHasher {
    type Hasher = MixHasher;

    #[inline]
    fn build_hasher(&self) -> MixHasher {
        MixHasher { state: 0x243F_6A88_85A3_08D3 }
    }
}

/// HashMap keyed by lattice data with the fast mixer.
pub type MixHashMap<K, V> = std::collections::HashMap<K, V, MixBuildHasher>;
/// HashSet keyed by lattice data with the fast mixer.
pub type MixHashSet<K> = std::collections::HashSet<K, MixBuildHasher>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prf_is_deterministic() {
        for k in 0..50u64 {
            assert_eq!(prf_u64(17, k), prf_u64(17, k));
            assert_ne!(prf_u64(17, k), prf_u64(18, k));
        }
    }

    #[test]
    fn unit_values_in_range() {
        for k in 0..10_000u64 {
            let u = u64_to_unit(prf_u64(99, k));
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn time_stream_marginal_uniformity() {
        // KS distance of 1e5 stream values against U[0,1); 1% critical value
        // is ~1.63/sqrt(n) ~ 0.0052.
        let n = 100_000u64;
        let mut xs: Vec<f64> = (1..=n).map(|k| UniformSource::time_value(4242, k)).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut d: f64 = 0.0;
        for (i, x) in xs.iter().enumerate() {
            d = d.max((x - i as f64 / n as f64).abs());
            d = d.max(((i + 1) as f64 / n as f64 - x).abs());
        }
        assert!(d < 0.006, "KS distance {d} too large for a uniform stream");
        let mean = xs.iter().sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 3.0 * 0.2887 / (n as f64).sqrt());
    }

    #[test]
    fn envelope_values_key_on_vertex_and_index() {
        let v = Point::new(vec![3, -1]);
        let w = Point::new(vec![3, 1]);
        assert_ne!(
            UniformSource::envelope_value(1, &v, 1),
            UniformSource::envelope_value(1, &w, 1)
        );
        assert_ne!(
            UniformSource::envelope_value(1, &v, 1),
            UniformSource::envelope_value(1, &v, 2)
        );
        assert_eq!(
            UniformSource::envelope_value(1, &v, 7),
            UniformSource::envelope_value(1, &v, 7)
        );
    }

    #[test]
    fn replica_seeds_collide_rarely() {
        // Injectivity scan over 1e6 indices.
        let mut seen = std::collections::HashSet::with_capacity(1 << 20);
        for i in 0..1_000_000u64 {
            assert!(seen.insert(derive_replica_seed(7, i)), "collision at index {i}");
        }
        assert_eq!(derive_replica_seed(7, 123), derive_replica_seed(7, 123));
    }

    #[test]
    fn replica_streams_decorrelated() {
        // Pairwise correlation of step indicators across two replica streams.
        let n = 100_000u64;
        let s0 = derive_replica_seed(1, 0);
        let s1 = derive_replica_seed(1, 1);
        let mut dot = 0.0;
        let (mut m0, mut m1) = (0.0, 0.0);
        for k in 1..=n {
            let a = if UniformSource::time_value(s0, k) < 0.5 { 1.0 } else { 0.0 };
            let b = if UniformSource::time_value(s1, k) < 0.5 { 1.0 } else { 0.0 };
            dot += a * b;
            m0 += a;
            m1 += b;
        }
        let nf = n as f64;
        let cov = dot / nf - (m0 / nf) * (m1 / nf);
        let rho = cov / (0.25); // var of a fair indicator
        assert!(rho.abs() < 0.01, "cross-correlation {rho} too large");
    }
}
