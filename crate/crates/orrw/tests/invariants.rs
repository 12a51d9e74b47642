//! Property-based invariants over randomized paths and environments.

use proptest::prelude::*;

use orrw::engine::{simulate, transition_probs, EdgeEnvironment, ModelParams};
use orrw::lattice::{restrict, Block, PathKind, PathSeq, Point};
use orrw::UniformSource;

/// A random strict path as a start plus neighbor indices.
fn strict_path(d: usize, max_len: usize) -> impl Strategy<Value = PathSeq> {
    (
        prop::collection::vec(-3i64..=3, d),
        prop::collection::vec(0..(2 * d), 0..max_len),
    )
        .prop_map(move |(start, steps)| {
            let mut verts = vec![Point::new(start)];
            for idx in steps {
                verts.push(orrw::lattice::neighbor_by_index(verts.last().unwrap(), idx));
            }
            PathSeq::strict(verts).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Restriction emits a valid teleporter: never three consecutive
    /// vertices outside the box, and every step touching it is a neighbor
    /// step (re-validated by the checked constructor inside `restrict`).
    #[test]
    fn restrict_output_is_teleporter(
        path in strict_path(2, 60),
        radius in 1i64..4,
    ) {
        let block = Block::centered(2, radius);
        let tele = restrict(&path, &block).unwrap();
        prop_assert!(matches!(tele.kind(), PathKind::Teleporter(_)));
        for w in tele.vertices().windows(3) {
            prop_assert!(w.iter().any(|v| block.contains(v)));
        }
    }

    /// Restriction through an intermediate box equals direct restriction.
    #[test]
    fn restrict_is_idempotent(
        path in strict_path(2, 60),
        inner in 1i64..3,
        margin in 1i64..3,
    ) {
        let small = Block::centered(2, inner);
        let big = Block::centered(2, inner + margin);
        let direct = restrict(&path, &small).unwrap();
        let via = restrict(&restrict(&path, &big).unwrap(), &small).unwrap();
        prop_assert_eq!(direct.vertices(), via.vertices());
    }

    /// Restricting to a box holding the whole path is the identity.
    #[test]
    fn restrict_identity_for_containing_box(path in strict_path(3, 40)) {
        let block = Block::centered(3, 100);
        let tele = restrict(&path, &block).unwrap();
        prop_assert_eq!(tele.vertices(), path.vertices());
    }

    /// Transition probabilities normalize and stay strictly inside (0, 1)
    /// over environments realized by actual walks.
    #[test]
    fn transition_probs_normalized(
        seed in 0u64..10_000,
        a in 0.0f64..5.0,
        steps in 1u64..80,
    ) {
        let params = ModelParams::new(2, a);
        let src = UniformSource::time_stream(seed);
        let traj = simulate(&params, &Point::origin(2), steps, &src, EdgeEnvironment::new());
        let probs = transition_probs(&traj.env, a, traj.at(traj.len_steps() / 2));
        let sum: f64 = probs.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(probs.iter().all(|&p| p > 0.0 && p < 1.0));
    }

    /// The walk is a pure function of its inputs, and longer envelope runs
    /// extend shorter ones without rewriting the prefix.
    #[test]
    fn simulate_deterministic_and_prefix_stable(
        seed in 0u64..10_000,
        short in 1u64..40,
        extra in 1u64..40,
    ) {
        let params = ModelParams::new(2, 0.7);
        for src in [UniformSource::time_stream(seed), UniformSource::envelopes(seed)] {
            let one = simulate(&params, &Point::origin(2), short, &src, EdgeEnvironment::new());
            let two = simulate(&params, &Point::origin(2), short, &src, EdgeEnvironment::new());
            prop_assert_eq!(one.vertices(), two.vertices());
            let long = simulate(
                &params,
                &Point::origin(2),
                short + extra,
                &src,
                EdgeEnvironment::new(),
            );
            prop_assert_eq!(one.vertices(), &long.vertices()[..=short as usize]);
        }
    }
}
