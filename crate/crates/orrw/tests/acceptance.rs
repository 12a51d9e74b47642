//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured quantities (visible with `--nocapture`). Tolerances are
//! pinned in the assertions.

use std::collections::BTreeSet;
use std::time::Instant;

use rayon::prelude::*;

use orrw::demon::restriction_demon_replay;
use orrw::diagnostics::{distinct_in_box, is_heavy, relaxed_times, tau_spend};
use orrw::engine::{
    couple_concat, simulate, simulate_srw, transition_probs, EdgeEnvironment, ModelParams,
    Trajectory,
};
use orrw::estimators::{
    escape_indicator, estimate_capacity, gaussian_fit, phase_scan, variance_curve, EscapeConfig,
};
use orrw::lattice::{Block, Edge, PathSeq, Point};
use orrw::oracles::{
    enumerate_orrw, exact_escape, exact_exit_through_edge, exact_moments,
    exit_edge_closed_form_d1, srw_green,
};
use orrw::rng::derive_replica_seed;
use orrw::stats::chi_squared_test;
use orrw::UniformSource;

fn pass(criterion: u32, detail: &str) {
    println!("ACCEPTANCE {criterion}: PASS - {detail}");
}

/// Criterion 1: Monte-Carlo endpoint distributions match the exact law.
///
/// d = 2, a in {0, 0.5, 1}, horizon 6 (plus a shorter horizon for the
/// reinforced case), n = 1e6, chi-squared at the 1% level, under two
/// minutes per case.
#[test]
fn acceptance_01_exact_law_equivalence() {
    let cases: &[(f64, u64, u64)] = &[(0.0, 6, 10), (0.5, 6, 20), (1.0, 6, 30), (1.0, 3, 40)];
    for &(a, t, master) in cases {
        let clock = Instant::now();
        let params = ModelParams::new(2, a);
        let exact =
            enumerate_orrw(&params, t, &Point::origin(2), &EdgeEnvironment::new()).unwrap();
        let n: u64 = 1_000_000;
        let endpoints: Vec<Point> = (0..n)
            .into_par_iter()
            .map(|rep| {
                let src = UniformSource::time_stream(derive_replica_seed(master, rep));
                let traj = simulate(&params, &Point::origin(2), t, &src, EdgeEnvironment::new());
                traj.at(t as usize).clone()
            })
            .collect();
        let mut counts: std::collections::BTreeMap<Point, u64> = Default::default();
        for e in endpoints {
            *counts.entry(e).or_insert(0) += 1;
        }
        // Every sampled endpoint must be in the exact support.
        for v in counts.keys() {
            assert!(exact.support.contains_key(v), "sampled endpoint {v} off-support");
        }
        let support: Vec<&Point> = exact.support.keys().collect();
        let observed: Vec<u64> =
            support.iter().map(|v| counts.get(*v).copied().unwrap_or(0)).collect();
        let expected: Vec<f64> =
            support.iter().map(|v| exact.prob(v) * n as f64).collect();
        let test = chi_squared_test(&observed, &expected);
        let elapsed = clock.elapsed().as_secs_f64();
        assert!(
            test.p_value > 0.01,
            "a={a} t={t}: chi2 {} (dof {}) p-value {}",
            test.statistic,
            test.dof,
            test.p_value
        );
        assert!(elapsed < 120.0, "case a={a} took {elapsed:.1}s");
        pass(
            1,
            &format!(
                "a={a} t={t}: chi2={:.1} dof={} p={:.3} in {elapsed:.1}s",
                test.statistic, test.dof, test.p_value
            ),
        );
    }
}

/// Criterion 2: with a = 0 and shared uniforms, the reinforced walker and a
/// direct SRW implementation produce bit-identical trajectories.
#[test]
fn acceptance_02_srw_reduction() {
    let t = 10_000u64;
    let mismatches: usize = (0..1000u64)
        .into_par_iter()
        .filter(|&seed| {
            let d = 1 + (seed % 6) as usize;
            let params = ModelParams::new(d, 0.0);
            let src = UniformSource::time_stream(seed);
            let orrw = simulate(&params, &Point::origin(d), t, &src, EdgeEnvironment::new());
            let srw = simulate_srw(d, &Point::origin(d), t, &src);
            orrw.vertices() != &srw[..]
        })
        .count();
    assert_eq!(mismatches, 0, "{mismatches} of 1000 seeds diverged");
    pass(2, "1000 seeds, T=10000: zero divergences between reinforced walker (a=0) and direct SRW");
}

/// Criterion 3: the restriction of an ambient walk to a box equals the
/// replayed demon walk, step for step, on every seed.
#[test]
fn acceptance_03_restriction_demon_coupling() {
    let params = ModelParams::new(2, 1.0);
    let block = Block::centered(2, 3);
    let mismatches: usize = (0..1000u64)
        .into_par_iter()
        .filter(|&seed| {
            let (restricted, run) =
                restriction_demon_replay(seed, &block, 200, &params).unwrap();
            restricted.vertices() != run.trajectory.vertices()
        })
        .count();
    assert_eq!(mismatches, 0, "{mismatches} of 1000 seeds diverged");
    pass(3, "1000 seeds, d=2 a=1 T=200 box radius 3: restriction equals demon replay exactly");
}

/// Criterion 4: the concatenation coupling reproduces the first walk's
/// prefix deterministically.
#[test]
fn acceptance_04_concatenation_prefix() {
    let params = ModelParams::new(2, 1.0);
    for seed in 0..200u64 {
        let (w, w_tilde) = couple_concat(&params, 50, 50, seed).unwrap();
        assert_eq!(
            &w.vertices()[..=50],
            &w_tilde.vertices()[..=50],
            "prefix mismatch at seed {seed}"
        );
    }
    // The prefix also pins the crossed-edge sets over [0, t1].
    let (w, w_tilde) = couple_concat(&params, 50, 50, 7).unwrap();
    let edges = |t: &Trajectory| {
        PathSeq::strict(t.vertices()[..=50].to_vec())
            .unwrap()
            .crossed_edges()
            .into_iter()
            .collect::<BTreeSet<Edge>>()
    };
    assert_eq!(edges(&w), edges(&w_tilde));
    pass(4, "200 seeds, t1=t2=50: W[0,t1] = W-tilde[0,t1] deterministically");
}

/// Criterion 5: the escape indicator is pathwise monotone in the avoided
/// set across nested chains, with zero violations.
#[test]
fn acceptance_05_escape_monotonicity() {
    let params = ModelParams::new(2, 1.0);
    let u = Point::origin(2);
    let mk = |pts: &[[i64; 2]]| {
        EscapeConfig::new(&u, 1, 2, pts.iter().map(|c| Point::new(c.to_vec())))
    };
    let chain = [
        mk(&[[2, 0], [0, 2], [-2, 0], [0, -2]]),
        mk(&[[2, 0], [0, 2], [-2, 0]]),
        mk(&[[2, 0], [0, 2]]),
        mk(&[[2, 0]]),
    ];
    let violations: usize = (0..100_000u64)
        .into_par_iter()
        .filter(|&seed| {
            let src = UniformSource::time_stream(seed);
            let traj = simulate(&params, &u, 8, &src, EdgeEnvironment::new());
            let ind: Vec<bool> =
                chain.iter().map(|c| escape_indicator(&traj, c).unwrap()).collect();
            // Escaping a larger set implies escaping every subset.
            ind.windows(2).any(|w| w[0] && !w[1])
        })
        .count();
    assert_eq!(violations, 0);
    pass(5, "100000 shared trajectories, 4-set nested chain: zero monotonicity violations");
}

/// Criterion 6: the capacity sampler agrees with the enumeration oracle on
/// the tiny-exact geometry in at least 97 of 100 seeded repetitions.
#[test]
fn acceptance_06_capacity_oracle_agreement() {
    let params = ModelParams::new(2, 1.0);
    let center = Point::origin(2);
    let avoid: BTreeSet<Point> = [center.clone()].into_iter().collect();
    let cfg = EscapeConfig::new(&center, 1, 2, avoid.iter().cloned());
    let exact = exact_escape(&center, &cfg, &params).unwrap();
    let n = 100_000u64;
    let hits: usize = (0..100u64)
        .map(|rep| {
            let est = estimate_capacity(
                &avoid,
                &center,
                1,
                2,
                &params,
                n,
                derive_replica_seed(606, rep),
            );
            let p = est.per_point.get(&center).unwrap();
            ((p.p_hat - exact).abs() <= 3.0 * p.stderr) as usize
        })
        .sum();
    assert!(hits >= 97, "only {hits}/100 repetitions within 3 stderr of {exact}");
    pass(
        6,
        &format!("tiny-exact capacity: {hits}/100 repetitions within 3 stderr of exact {exact:.5}"),
    );
}

/// Criterion 7: the variance curve stays in the diffusive band for d=6,
/// a=0.1, with the first two times matched exactly in expectation, under
/// ten minutes.
#[test]
fn acceptance_07_variance_band() {
    let clock = Instant::now();
    let params = ModelParams::new(6, 0.1);
    let n = 10_000u64;
    let curve = variance_curve(&params, &[100, 1_000, 10_000], n, 707);
    for e in &curve.entries {
        let scale = params.d as f64 / e.t as f64;
        let lo = scale * (e.v_hat - 3.0 * e.stderr);
        let hi = scale * (e.v_hat + 3.0 * e.stderr);
        assert!(
            lo >= 0.9 && hi <= 1.1,
            "t={}: d*v/t 3-sigma interval [{lo:.4}, {hi:.4}] escapes [0.9, 1.1]",
            e.t
        );
    }
    // v_1 = 1/d exactly in expectation; v_2 against the enumeration oracle.
    let small = variance_curve(&params, &[1, 2], n, 717);
    let v1 = &small.entries[0];
    assert!(
        (v1.v_hat - 1.0 / 6.0).abs() <= 3.0 * v1.stderr,
        "v_1 = {} vs 1/6",
        v1.v_hat
    );
    let v2 = &small.entries[1];
    let exact2 = exact_moments(&params, 2).unwrap();
    assert!(
        (v2.v_hat - exact2).abs() <= 3.0 * v2.stderr,
        "v_2 = {} vs exact {exact2}",
        v2.v_hat
    );
    let elapsed = clock.elapsed().as_secs_f64();
    assert!(elapsed < 600.0, "variance suite took {elapsed:.0}s");
    let ratios: Vec<String> = curve
        .entries
        .iter()
        .map(|e| format!("t={}: {:.4}", e.t, 6.0 * e.v_hat / e.t as f64))
        .collect();
    pass(7, &format!("d*v_t/t in [0.9,1.1] with 3-sigma margin ({}); {elapsed:.0}s", ratios.join(", ")));
}

/// Criterion 8: the diffusivity sits in the theorem band for a = 0.1 and
/// matches the SRW value for a = 0.
#[test]
fn acceptance_08_sigma_band() {
    let d = 6usize;
    let n = 10_000u64;
    let curve = variance_curve(&ModelParams::new(d, 0.1), &[10_000], n, 808);
    let (lo, hi) = (0.9 / (d as f64).sqrt(), 1.1 / (d as f64).sqrt());
    assert!(
        curve.sigma_hat + 3.0 * curve.sigma_stderr >= lo
            && curve.sigma_hat - 3.0 * curve.sigma_stderr <= hi,
        "sigma {} +- {} outside [{lo:.4}, {hi:.4}]",
        curve.sigma_hat,
        curve.sigma_stderr
    );
    let srw = variance_curve(&ModelParams::new(d, 0.0), &[10_000], n, 818);
    let want = 1.0 / (d as f64).sqrt();
    assert!(
        (srw.sigma_hat - want).abs() <= 3.0 * srw.sigma_stderr,
        "sigma(a=0) = {} vs 1/sqrt(6) = {want}",
        srw.sigma_hat
    );
    pass(
        8,
        &format!(
            "sigma(a=0.1) = {:.4} in [{lo:.4}, {hi:.4}]; sigma(a=0) = {:.4} vs {want:.4}",
            curve.sigma_hat, srw.sigma_hat
        ),
    );
}

/// Criterion 9: the normalized first coordinate is Gaussian to KS distance
/// 0.03 at t = 1e4 for a in {0, 0.1}.
#[test]
fn acceptance_09_clt_diagnostic() {
    for (a, seed) in [(0.0, 909u64), (0.1, 919)] {
        let rep = gaussian_fit(&ModelParams::new(6, a), 10_000, 10_000, seed);
        assert!(
            rep.ks_distance <= 0.03,
            "a={a}: KS distance {} exceeds 0.03",
            rep.ks_distance
        );
        pass(9, &format!("a={a}: KS={:.4} sigma={:.4}", rep.ks_distance, rep.sigma_hat));
    }
}

/// Criterion 10: exit-through-edge probabilities keep `p L^{d-1}` within a
/// factor-3 band across L in d=3, and match the gambler's-ruin closed form
/// to 1e-10 in d=1.
#[test]
fn acceptance_10_exit_edge_shape() {
    let mut scaled = Vec::new();
    for radius in [4i64, 8, 16] {
        let inside = Point::new(vec![radius, 0, 0]);
        let outside = Point::new(vec![radius + 1, 0, 0]);
        let edge = Edge::new(&inside, &outside).unwrap();
        let res = exact_exit_through_edge(3, radius, &edge).unwrap();
        assert!(res.residual <= 1e-10);
        scaled.push(res.probability * (radius * radius) as f64);
    }
    let max = scaled.iter().cloned().fold(f64::MIN, f64::max);
    let min = scaled.iter().cloned().fold(f64::MAX, f64::min);
    assert!(
        max / min <= 3.0,
        "p*L^2 across L=4,8,16 spans a factor {:.2}: {scaled:?}",
        max / min
    );
    for m in [2i64, 5, 9] {
        let edge = Edge::new(&Point::new(vec![m]), &Point::new(vec![m + 1])).unwrap();
        let got = exact_exit_through_edge(1, m, &edge).unwrap().probability;
        let want = exit_edge_closed_form_d1(m);
        assert!((got - want).abs() < 1e-10, "d=1 m={m}: {got} vs {want}");
    }
    pass(
        10,
        &format!(
            "d=3 p*L^2 = [{:.4}, {:.4}, {:.4}] (band factor {:.2}); d=1 matches closed form to 1e-10",
            scaled[0], scaled[1], scaled[2], max / min
        ),
    );
}

/// Criterion 11: Green's function symmetry to 1e-9 and self-convergence of
/// g(0) across truncations at the radius^{-1} rate.
#[test]
fn acceptance_11_green_oracle() {
    let g10 = srw_green(3, 10).unwrap();
    let g20 = srw_green(3, 20).unwrap();
    let g30 = srw_green(3, 30).unwrap();
    for g in [&g10, &g20, &g30] {
        assert!(g.residual <= 1e-10, "residual {}", g.residual);
    }
    // Symmetry: reflections and coordinate permutations of sample points.
    let x = Point::new(vec![3, 2, 1]);
    let base = g10.value(&x).unwrap();
    let images = [
        vec![-3, 2, 1],
        vec![3, -2, -1],
        vec![2, 3, 1],
        vec![1, 2, 3],
        vec![2, 1, 3],
        vec![-1, -2, -3],
    ];
    for im in images {
        let v = g10.value(&Point::new(im.clone())).unwrap();
        assert!((v - base).abs() < 1e-9, "asymmetry at {im:?}: {v} vs {base}");
    }
    // Monotone in the truncation radius, with differences shrinking like
    // 1/L: (g20-g10)/(g30-g20) is predicted (1/10-1/20)/(1/20-1/30) = 3.
    let (o10, o20, o30) = (g10.at_origin(), g20.at_origin(), g30.at_origin());
    assert!(o10 < o20 && o20 < o30, "not monotone: {o10} {o20} {o30}");
    let ratio = (o20 - o10) / (o30 - o20);
    assert!(
        (ratio - 3.0).abs() <= 1.5,
        "difference ratio {ratio:.2} not at the radius^-1 rate"
    );
    pass(
        11,
        &format!("g(0) = {o10:.6} -> {o20:.6} -> {o30:.6}, difference ratio {ratio:.2} (predict 3)"),
    );
}

/// Criterion 12: exact diagnostics unit gates.
#[test]
fn acceptance_12_diagnostics_exact() {
    // is_heavy at r=2: 11 distinct vertices light, 12 heavy (2^3.5 = 11.31).
    let params = ModelParams::new(2, 1.0);
    let mut verts = Vec::new();
    for k in 0..12i64 {
        // Boustrophedon over the radius-2 block.
        let row = k / 5;
        let col = if row % 2 == 0 { k % 5 } else { 4 - k % 5 };
        verts.push(Point::new(vec![col - 2, row - 2]));
    }
    let positions = PathSeq::strict(verts).unwrap();
    let traj = Trajectory {
        params: params.clone(),
        env: EdgeEnvironment::from_edges(positions.crossed_edges()),
        env0: EdgeEnvironment::new(),
        visit_counts: Default::default(),
        positions,
    };
    let block = Block::centered(2, 2);
    assert_eq!(distinct_in_box(&traj, 10, &block), 11);
    assert!(!is_heavy(&traj, 10, &block, 3.5));
    assert_eq!(distinct_in_box(&traj, 11, &block), 12);
    assert!(is_heavy(&traj, 11, &block, 3.5));

    // tau_spend with the walk always inside: threshold N reached at N-1.
    let src = UniformSource::time_stream(12);
    let inside = simulate(&ModelParams::new(1, 0.0), &Point::origin(1), 50, &src, EdgeEnvironment::new());
    let big = Block::centered(1, 100);
    for n in [1u64, 7, 25] {
        assert_eq!(tau_spend(&inside, &big, n), Some(n - 1));
    }

    // Relaxed-time vacuous case: a^{-1/3} > R makes every time relaxed.
    let tiny_a = ModelParams::new(2, 1e-9);
    let src = UniformSource::time_stream(13);
    let walk = simulate(&tiny_a, &Point::origin(2), 300, &src, EdgeEnvironment::new());
    let times: Vec<u64> = (0..=300).collect();
    let rel = relaxed_times(&walk, 50, &times);
    assert_eq!(rel.times.len(), times.len());

    pass(12, "is_heavy boundary at r=2 (11 vs 12), tau_spend = N-1, vacuous relaxed scan all exact");
}

/// Criterion 13: growth-exponent sanity. Diffusive baselines assert slope
/// 0.5 +- 0.05 (radius in d=3, range in d=1); the large-a scan is reported
/// with residuals, no assertion.
#[test]
fn acceptance_13_phase_scan() {
    let grid: Vec<u64> = vec![100, 316, 1_000, 3_162, 10_000, 31_623, 100_000];
    let d3 = phase_scan(&ModelParams::new(3, 0.0), &[0.0], &grid, 1_000, 1313);
    let radius_slope = d3[0].radius_fit.slope;
    assert!(
        (radius_slope - 0.5).abs() <= 0.05,
        "d=3 a=0 radius slope {radius_slope}"
    );
    let d1 = phase_scan(&ModelParams::new(1, 0.0), &[0.0], &grid, 1_000, 1314);
    let range_slope = d1[0].range_fit.slope;
    assert!(
        (range_slope - 0.5).abs() <= 0.05,
        "d=1 a=0 range slope {range_slope}"
    );
    // Exploratory large-a scan: report only.
    let hot = phase_scan(&ModelParams::new(3, 1_000.0), &[1_000.0], &grid, 200, 1315);
    pass(
        13,
        &format!(
            "d=3 radius slope {radius_slope:.3}, d=1 range slope {range_slope:.3}; \
             a=1000 d=3 radius slope {:.3} (rms {:.3}), range slope {:.3} (rms {:.3}) [report only]",
            hot[0].radius_fit.slope,
            hot[0].radius_fit.rms_residual,
            hot[0].range_fit.slope,
            hot[0].range_fit.rms_residual
        ),
    );
}

/// Criterion 14: identical config and version produce byte-identical
/// statistic streams under thread budgets 1, 4, and 16, checked through the
/// real binary.
#[test]
fn acceptance_14_reproducibility() {
    let bin = env!("CARGO_BIN_EXE_orrw");
    let mut streams: Vec<(Vec<u8>, Vec<u8>)> = Vec::new();
    for threads in ["1", "4", "16"] {
        let dir = tempfile::tempdir().unwrap();
        let status = std::process::Command::new(bin)
            .args([
                "variance", "--d", "2", "--a", "0.5", "--t", "1,4,16,64", "--n", "4000",
                "--seed", "9", "--threads", threads, "--out",
            ])
            .arg(dir.path())
            .status()
            .unwrap();
        assert!(status.success(), "variance run failed at {threads} threads");
        let ndjson = std::fs::read(dir.path().join("results.ndjson")).unwrap();
        let csv = std::fs::read(dir.path().join("variance.csv")).unwrap();
        streams.push((ndjson, csv));
    }
    assert_eq!(streams[0], streams[1], "1-thread and 4-thread streams differ");
    assert_eq!(streams[1], streams[2], "4-thread and 16-thread streams differ");
    pass(14, "variance streams byte-identical across thread budgets 1, 4, 16");
}
