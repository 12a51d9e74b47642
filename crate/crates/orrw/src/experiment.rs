//! Config-driven experiment runner behind the command-line interface.
//!
//! Every experiment is described by a serializable config; the config's
//! canonical-JSON hash is embedded in every output record. Statistic streams
//! (NDJSON, CSV) are byte-identical across re-runs of the same config and
//! tool version regardless of the thread budget; wall-clock data lives only
//! in the manifest.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::demon::{restriction_demon_replay, run_demon_walk, strategy_by_name};
use crate::diagnostics::{
    heavy_radii, range_and_radius, relaxed_times, spend_threshold, tau_heavy, tau_spend,
    visited_centers,
};
use crate::engine::{couple_concat, simulate, simulate_srw, EdgeEnvironment, ModelParams};
use crate::error::{Error, Result};
use crate::estimators::{
    additivity_defect, displacement_tail, estimate_capacity, gaussian_fit, h1_histogram,
    phase_scan, return_probability, variance_curve, EscapeConfig,
};
use crate::lattice::{Block, Edge, Point};
use crate::oracles::{
    enumerate_orrw, enumerate_orrw_dp, exact_escape, exact_exit_through_edge, exact_moments,
    exit_edge_closed_form_d1, srw_green,
};
use crate::report::{
    checksum_file, config_hash, now_unix_ms, write_csv, write_trajectory_binary, NdjsonWriter,
    RunManifest,
};
use crate::rng::{derive_replica_seed, UniformSource};

fn default_n() -> u64 {
    1000
}

fn default_seed() -> u64 {
    1
}

/// Walk simulation dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SimulateConfig {
    pub d: usize,
    pub a: f64,
    pub steps: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Start position; the origin when omitted.
    #[serde(default)]
    pub start: Option<Vec<i64>>,
    /// Use per-vertex envelopes instead of the time-indexed stream.
    #[serde(default)]
    pub envelopes: bool,
}

/// Variance curve (plus optional additivity defect).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct VarianceConfig {
    pub d: usize,
    pub a: f64,
    pub t: Vec<u64>,
    #[serde(default = "default_n")]
    pub n: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub defect_s: Option<u64>,
    #[serde(default)]
    pub defect_t: Option<u64>,
}

/// Capacity estimation; the `tiny-exact` preset cross-checks the sampler
/// against the enumeration oracle.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct CapacityConfig {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub r: Option<i64>,
    #[serde(default)]
    pub big_r: Option<i64>,
    #[serde(default)]
    pub center: Option<Vec<i64>>,
    #[serde(default)]
    pub avoid: Option<Vec<Vec<i64>>>,
    #[serde(default = "default_n")]
    pub n: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Fail the run (exit code 3) if the oracle gate does not pass.
    #[serde(default)]
    pub assert: bool,
}

/// Relaxed-time scan of a simulated walk.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RelaxedConfig {
    pub d: usize,
    pub a: f64,
    pub steps: u64,
    pub scale: i64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

/// Heavy-block stopping-time report for a simulated walk.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct HeavyConfig {
    pub d: usize,
    pub a: f64,
    pub steps: u64,
    pub big_r: i64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

/// Demon walk run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct DemonConfig {
    pub d: usize,
    pub a: f64,
    pub radius: i64,
    pub steps: u64,
    pub strategy: String,
    #[serde(default)]
    pub strategy_params: Option<serde_json::Value>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

/// Concatenation coupling study.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ConcatConfig {
    pub d: usize,
    pub a: f64,
    pub t1: u64,
    pub t2: u64,
    #[serde(default = "default_n")]
    pub n: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

/// Displacement-tail estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TailsConfig {
    pub d: usize,
    pub a: f64,
    pub t: u64,
    /// Defaults to `1/2 + 3 epsilon`.
    #[serde(default)]
    pub exponent: Option<f64>,
    #[serde(default = "default_n")]
    pub n: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

/// Endpoint histogram against the probability bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct H1Config {
    pub d: usize,
    pub a: f64,
    pub t: u64,
    #[serde(default = "default_n")]
    pub n: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub assert: bool,
}

/// Gaussian-fit diagnostic.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct CltConfig {
    pub d: usize,
    pub a: f64,
    pub t: u64,
    #[serde(default = "default_n")]
    pub n: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub ks_threshold: Option<f64>,
    #[serde(default)]
    pub assert: bool,
}

/// Growth-exponent scan over reinforcement values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PhaseScanConfig {
    pub d: usize,
    pub a_values: Vec<f64>,
    pub t_grid: Vec<u64>,
    #[serde(default = "default_n")]
    pub n: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

/// Return-probability curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ReturnConfig {
    pub d: usize,
    pub a: f64,
    pub t_grid: Vec<u64>,
    pub horizon: u64,
    #[serde(default = "default_n")]
    pub n: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

/// Direct oracle evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct OracleConfig {
    /// One of `enumerate`, `moments`, `escape`, `green`, `exit-edge`.
    pub op: String,
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub t: Option<u64>,
    #[serde(default)]
    pub radius: Option<i64>,
    #[serde(default)]
    pub r: Option<i64>,
    #[serde(default)]
    pub big_r: Option<i64>,
    #[serde(default)]
    pub avoid: Option<Vec<Vec<i64>>>,
    #[serde(default)]
    pub edge: Option<Vec<Vec<i64>>>,
}

/// Built-in oracle-vs-sampler cross checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SelftestConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
}

/// Top-level experiment description, tagged by subcommand name.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    Simulate(SimulateConfig),
    Variance(VarianceConfig),
    Capacity(CapacityConfig),
    Relaxed(RelaxedConfig),
    Heavy(HeavyConfig),
    Demon(DemonConfig),
    Concat(ConcatConfig),
    Tails(TailsConfig),
    H1(H1Config),
    Clt(CltConfig),
    PhaseScan(PhaseScanConfig),
    Return(ReturnConfig),
    Oracle(OracleConfig),
    Selftest(SelftestConfig),
}

/// Result of a run: where the artifacts went and which gates failed.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub config_hash: String,
    pub outputs: Vec<PathBuf>,
    pub gate_failures: Vec<String>,
}

impl RunOutcome {
    pub fn gates_ok(&self) -> bool {
        self.gate_failures.is_empty()
    }
}

struct RunCtx {
    hash: String,
    out_dir: PathBuf,
    outputs: Vec<PathBuf>,
    gate_failures: Vec<String>,
}

impl RunCtx {
    fn results_writer(&mut self) -> Result<NdjsonWriter> {
        NdjsonWriter::create(self.out_dir.join("results.ndjson"))
    }

    fn done(&mut self, w: NdjsonWriter) -> Result<()> {
        self.outputs.push(w.finish()?);
        Ok(())
    }

    fn gate(&mut self, ok: bool, label: &str) {
        if !ok {
            self.gate_failures.push(label.to_string());
        }
    }
}

/// Execute one experiment, writing its artifacts under `out_dir`.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    std::fs::create_dir_all(out_dir)?;
    let hash = config_hash(config)?;
    let started = now_unix_ms();
    let mut ctx = RunCtx {
        hash: hash.clone(),
        out_dir: out_dir.to_path_buf(),
        outputs: Vec::new(),
        gate_failures: Vec::new(),
    };
    match config {
        ExperimentConfig::Simulate(c) => run_simulate(c, &mut ctx)?,
        ExperimentConfig::Variance(c) => run_variance(c, &mut ctx)?,
        ExperimentConfig::Capacity(c) => run_capacity(c, &mut ctx)?,
        ExperimentConfig::Relaxed(c) => run_relaxed(c, &mut ctx)?,
        ExperimentConfig::Heavy(c) => run_heavy(c, &mut ctx)?,
        ExperimentConfig::Demon(c) => run_demon(c, &mut ctx)?,
        ExperimentConfig::Concat(c) => run_concat(c, &mut ctx)?,
        ExperimentConfig::Tails(c) => run_tails(c, &mut ctx)?,
        ExperimentConfig::H1(c) => run_h1(c, &mut ctx)?,
        ExperimentConfig::Clt(c) => run_clt(c, &mut ctx)?,
        ExperimentConfig::PhaseScan(c) => run_phase_scan(c, &mut ctx)?,
        ExperimentConfig::Return(c) => run_return(c, &mut ctx)?,
        ExperimentConfig::Oracle(c) => run_oracle(c, &mut ctx)?,
        ExperimentConfig::Selftest(c) => run_selftest(c, &mut ctx)?,
    }
    let finished = now_unix_ms();
    let manifest = RunManifest {
        config_hash: hash.clone(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix_ms: started,
        finished_unix_ms: finished,
        wall_time_ms: finished.saturating_sub(started),
        seed_derivation: "replica_seed = mix64(mix64(master ^ tag) + index * 0x9E3779B97F4A7C15)"
            .to_string(),
        outputs: ctx
            .outputs
            .iter()
            .map(|p| checksum_file(p))
            .collect::<Result<Vec<_>>>()?,
    };
    let manifest_path = out_dir.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(RunOutcome {
        config_hash: hash,
        outputs: ctx.outputs,
        gate_failures: ctx.gate_failures,
    })
}

fn model(d: usize, a: f64) -> Result<ModelParams> {
    if d == 0 {
        return Err(Error::Config("dimension must be at least 1".into()));
    }
    if a < 0.0 {
        return Err(Error::Config("reinforcement must be nonnegative".into()));
    }
    Ok(ModelParams::new(d, a))
}

fn start_point(d: usize, start: &Option<Vec<i64>>) -> Result<Point> {
    match start {
        None => Ok(Point::origin(d)),
        Some(coords) => {
            if coords.len() != d {
                return Err(Error::Config(format!(
                    "start has {} coordinates, expected {d}",
                    coords.len()
                )));
            }
            Ok(Point::new(coords.clone()))
        }
    }
}

fn run_simulate(c: &SimulateConfig, ctx: &mut RunCtx) -> Result<()> {
    let params = model(c.d, c.a)?;
    let start = start_point(c.d, &c.start)?;
    let src = if c.envelopes {
        UniformSource::envelopes(c.seed)
    } else {
        UniformSource::time_stream(c.seed)
    };
    let traj = simulate(&params, &start, c.steps, &src, EdgeEnvironment::new());
    let bin_path = ctx.out_dir.join("trajectory.bin");
    let mut f = std::io::BufWriter::new(std::fs::File::create(&bin_path)?);
    write_trajectory_binary(&mut f, &traj, c.seed)?;
    std::io::Write::flush(&mut f)?;
    ctx.outputs.push(bin_path);
    if c.steps <= 10_000 {
        let json_path = ctx.out_dir.join("trajectory.json");
        std::fs::write(&json_path, crate::report::canonical_json(&traj)?)?;
        ctx.outputs.push(json_path);
    }
    let (range, radius) = range_and_radius(&traj, traj.len_steps());
    let mut w = ctx.results_writer()?;
    w.write(&serde_json::json!({
        "op": "simulate",
        "config_hash": ctx.hash,
        "master_seed": c.seed,
        "n": 1,
        "steps": c.steps,
        "endpoint": traj.at(traj.len_steps()),
        "range_volume": range,
        "max_displacement": radius,
        "reinforced_edges": traj.env.len(),
    }))?;
    ctx.done(w)
}

fn run_variance(c: &VarianceConfig, ctx: &mut RunCtx) -> Result<()> {
    let params = model(c.d, c.a)?;
    if c.t.is_empty() {
        return Err(Error::Config("variance needs a nonempty time grid".into()));
    }
    let curve = variance_curve(&params, &c.t, c.n, c.seed);
    let csv = write_csv(
        ctx.out_dir.join("variance.csv"),
        &["t", "v_hat", "stderr", "d_v_over_t", "n"],
        curve.entries.iter().map(|e| {
            vec![
                e.t.to_string(),
                format!("{:.10e}", e.v_hat),
                format!("{:.10e}", e.stderr),
                format!("{:.10e}", params.d as f64 * e.v_hat / e.t.max(1) as f64),
                e.n.to_string(),
            ]
        }),
    )?;
    ctx.outputs.push(csv);
    let mut w = ctx.results_writer()?;
    w.write(&serde_json::json!({
        "op": "variance",
        "config_hash": ctx.hash,
        "master_seed": c.seed,
        "n": c.n,
        "entries": curve.entries,
        "sigma_hat": curve.sigma_hat,
        "sigma_stderr": curve.sigma_stderr,
    }))?;
    if let (Some(s), Some(t)) = (c.defect_s, c.defect_t) {
        let (defect, stderr) = additivity_defect(&params, s, t, c.n, c.seed);
        w.write(&serde_json::json!({
            "op": "additivity-defect",
            "config_hash": ctx.hash,
            "master_seed": c.seed,
            "n": c.n,
            "s": s,
            "t": t,
            "defect": defect,
            "stderr": stderr,
            "defect_over_sqrt_t": defect / (t as f64).sqrt(),
        }))?;
    }
    ctx.done(w)
}

fn run_capacity(c: &CapacityConfig, ctx: &mut RunCtx) -> Result<()> {
    let tiny = matches!(c.preset.as_deref(), Some("tiny-exact"));
    if let Some(p) = c.preset.as_deref() {
        if p != "tiny-exact" {
            return Err(Error::Config(format!("unknown capacity preset '{p}'")));
        }
    }
    let (params, r, big_r, center, avoid) = if tiny {
        let params = model(2, 1.0)?;
        let center = Point::origin(2);
        let avoid: BTreeSet<Point> = [center.clone()].into_iter().collect();
        (params, 1i64, 2i64, center, avoid)
    } else {
        let d = c.d.ok_or_else(|| Error::Config("capacity needs --d".into()))?;
        let a = c.a.ok_or_else(|| Error::Config("capacity needs --a".into()))?;
        let r = c.r.ok_or_else(|| Error::Config("capacity needs --r".into()))?;
        let big_r = c.big_r.ok_or_else(|| Error::Config("capacity needs --big-r".into()))?;
        let center = start_point(d, &c.center)?;
        let avoid: BTreeSet<Point> = c
            .avoid
            .clone()
            .ok_or_else(|| Error::Config("capacity needs --avoid".into()))?
            .into_iter()
            .map(Point::new)
            .collect();
        (model(d, a)?, r, big_r, center, avoid)
    };
    let est = estimate_capacity(&avoid, &center, r, big_r, &params, c.n, c.seed);
    let mut w = ctx.results_writer()?;
    w.write(&serde_json::json!({
        "op": "capacity",
        "config_hash": ctx.hash,
        "master_seed": c.seed,
        "n": c.n,
        "estimate": est,
    }))?;
    if tiny {
        let cfg = EscapeConfig::new(&center, r, big_r, avoid.iter().cloned());
        let mut exact_total = 0.0;
        for z in avoid.iter().filter(|z| cfg.lam_plus.contains(z)) {
            exact_total += exact_escape(z, &cfg, &params)?;
        }
        let ok = (est.total - exact_total).abs() <= 3.0 * est.stderr_total.max(1e-9);
        w.write(&serde_json::json!({
            "op": "capacity-oracle-gate",
            "config_hash": ctx.hash,
            "master_seed": c.seed,
            "n": c.n,
            "estimate": est.total,
            "exact": exact_total,
            "stderr": est.stderr_total,
            "within_3_sigma": ok,
        }))?;
        if c.assert {
            ctx.gate(ok, "capacity estimate within 3 stderr of the enumeration oracle");
        }
    }
    ctx.done(w)
}

fn run_relaxed(c: &RelaxedConfig, ctx: &mut RunCtx) -> Result<()> {
    let params = model(c.d, c.a)?;
    let src = UniformSource::time_stream(c.seed);
    let traj = simulate(&params, &Point::origin(c.d), c.steps, &src, EdgeEnvironment::new());
    let times: Vec<u64> = (0..=c.steps).collect();
    let rel = relaxed_times(&traj, c.scale, &times);
    let mut w = ctx.results_writer()?;
    w.write(&serde_json::json!({
        "op": "relaxed",
        "config_hash": ctx.hash,
        "master_seed": c.seed,
        "n": 1,
        "scale": c.scale,
        "lower_scale": rel.lower_scale,
        "relaxed_count": rel.times.len(),
        "total_times": times.len(),
        "relaxed_times": rel.times,
    }))?;
    ctx.done(w)
}

fn run_heavy(c: &HeavyConfig, ctx: &mut RunCtx) -> Result<()> {
    let params = model(c.d, c.a)?;
    let src = UniformSource::time_stream(c.seed);
    let traj = simulate(&params, &Point::origin(c.d), c.steps, &src, EdgeEnvironment::new());
    let centers = visited_centers(&traj, c.big_r);
    let radii = heavy_radii(c.big_r, params.delta);
    let mut report = tau_heavy(&traj, &centers, &radii, params.kappa);
    let inner = Block::centered(c.d, c.big_r);
    report.tau_spend = tau_spend(&traj, &inner, spend_threshold(c.big_r));
    let mut w = ctx.results_writer()?;
    w.write(&serde_json::json!({
        "op": "heavy",
        "config_hash": ctx.hash,
        "master_seed": c.seed,
        "n": 1,
        "big_r": c.big_r,
        "scanned_centers": centers.len(),
        "radii": [radii.first(), radii.last()],
        "tau_spend": report.tau_spend,
        "tau_heavy": report.tau_heavy,
        "witness": report.heavy_witness,
    }))?;
    ctx.done(w)
}

fn run_demon(c: &DemonConfig, ctx: &mut RunCtx) -> Result<()> {
    let params = model(c.d, c.a)?;
    let block = Block::centered(c.d, c.radius);
    let sparams = c.strategy_params.clone().unwrap_or(serde_json::Value::Null);
    let mut strategy = strategy_by_name(&c.strategy, &block, &sparams)?;
    let walk_src = UniformSource::time_stream(derive_replica_seed(c.seed, 0));
    let strategy_seed = derive_replica_seed(c.seed, 1);
    let steps = c.steps as usize;
    let run = run_demon_walk(
        strategy.as_mut(),
        &block,
        &params,
        &walk_src,
        move |pos: &[Point]| pos.len() > steps,
        strategy_seed,
    )?;
    let traj_path = ctx.out_dir.join("demon-trajectory.json");
    std::fs::write(&traj_path, crate::report::canonical_json(&run.trajectory)?)?;
    ctx.outputs.push(traj_path);
    let mut decisions = NdjsonWriter::create(ctx.out_dir.join("decisions.ndjson"))?;
    for rec in &run.decisions {
        decisions.write(rec)?;
    }
    ctx.outputs.push(decisions.finish()?);
    let verts = run.trajectory.vertices();
    let inside = verts.iter().filter(|v| block.contains(v)).count();
    let mut w = ctx.results_writer()?;
    w.write(&serde_json::json!({
        "op": "demon",
        "config_hash": ctx.hash,
        "master_seed": c.seed,
        "n": 1,
        "strategy": strategy.name(),
        "teleporter_len": verts.len().saturating_sub(1),
        "positions_inside": inside,
        "decisions": run.decisions.len(),
        "reinforced_edges": run.trajectory.env.len(),
    }))?;
    ctx.done(w)
}

fn run_concat(c: &ConcatConfig, ctx: &mut RunCtx) -> Result<()> {
    let params = model(c.d, c.a)?;
    let mut deviations = Vec::with_capacity(c.n as usize);
    for rep in 0..c.n {
        let seed = derive_replica_seed(c.seed, rep);
        let (w_full, w_tilde) = couple_concat(&params, c.t1, c.t2, seed)?;
        let prefix_ok = w_full.vertices()[..=c.t1 as usize]
            == w_tilde.vertices()[..=c.t1 as usize];
        if !prefix_ok {
            return Err(Error::Gate("concatenation prefix equality violated".into()));
        }
        let max_dev = w_full
            .vertices()
            .iter()
            .zip(w_tilde.vertices())
            .map(|(a, b)| a.l2_dist(b))
            .fold(0.0f64, f64::max);
        deviations.push(max_dev);
    }
    let mut sorted = deviations.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    // Histogram on integer bins.
    let max_bin = sorted.last().map(|m| m.ceil() as u64).unwrap_or(0);
    let mut hist = vec![0u64; max_bin as usize + 1];
    for dev in &deviations {
        hist[dev.floor() as usize] += 1;
    }
    let csv = write_csv(
        ctx.out_dir.join("concat-deviation-hist.csv"),
        &["deviation_bin", "count"],
        hist.iter().enumerate().map(|(b, c)| vec![b.to_string(), c.to_string()]),
    )?;
    ctx.outputs.push(csv);
    let mut w = ctx.results_writer()?;
    w.write(&serde_json::json!({
        "op": "concat",
        "config_hash": ctx.hash,
        "master_seed": c.seed,
        "n": c.n,
        "t1": c.t1,
        "t2": c.t2,
        "median_max_deviation": median,
        "max_max_deviation": sorted.last(),
        "prefix_equal": true,
    }))?;
    ctx.done(w)
}

fn run_tails(c: &TailsConfig, ctx: &mut RunCtx) -> Result<()> {
    let params = model(c.d, c.a)?;
    let exponent = c.exponent.unwrap_or(0.5 + 3.0 * params.epsilon);
    let est = displacement_tail(&params, c.t, exponent, c.n, c.seed);
    let baseline = {
        let srw = ModelParams::new(c.d, 0.0);
        displacement_tail(&srw, c.t, exponent, c.n, derive_replica_seed(c.seed, u64::MAX))
    };
    let mut w = ctx.results_writer()?;
    w.write(&serde_json::json!({
        "op": "tails",
        "config_hash": ctx.hash,
        "master_seed": c.seed,
        "n": c.n,
        "estimate": est,
        "srw_baseline": baseline,
    }))?;
    ctx.done(w)
}

fn run_h1(c: &H1Config, ctx: &mut RunCtx) -> Result<()> {
    let params = model(c.d, c.a)?;
    let rep = h1_histogram(&params, c.t, c.n, c.seed);
    let csv = write_csv(
        ctx.out_dir.join("h1-frequencies.csv"),
        &["vertex", "count", "freq"],
        rep.freq.iter().map(|(v, k)| {
            vec![
                format!("\"{v}\""),
                k.to_string(),
                format!("{:.8e}", *k as f64 / c.n as f64),
            ]
        }),
    )?;
    ctx.outputs.push(csv);
    let mut w = ctx.results_writer()?;
    w.write(&serde_json::json!({
        "op": "h1",
        "config_hash": ctx.hash,
        "master_seed": c.seed,
        "n": c.n,
        "t": c.t,
        "support_size": rep.freq.len(),
        "violations": rep.violations,
    }))?;
    if c.assert {
        ctx.gate(rep.violations.is_empty(), "no endpoint frequency exceeds the bound");
    }
    ctx.done(w)
}

fn run_clt(c: &CltConfig, ctx: &mut RunCtx) -> Result<()> {
    let params = model(c.d, c.a)?;
    let rep = gaussian_fit(&params, c.t, c.n, c.seed);
    let band = (0.9f64 / (c.d as f64).sqrt(), 1.1f64 / (c.d as f64).sqrt());
    let sigma_ok = rep.sigma_hat + 3.0 * rep.sigma_stderr >= band.0
        && rep.sigma_hat - 3.0 * rep.sigma_stderr <= band.1;
    let ks_threshold = c.ks_threshold.unwrap_or(0.03);
    let ks_ok = rep.ks_distance <= ks_threshold;
    let mut w = ctx.results_writer()?;
    w.write(&serde_json::json!({
        "op": "clt",
        "config_hash": ctx.hash,
        "master_seed": c.seed,
        "n": c.n,
        "t": c.t,
        "sigma_hat": rep.sigma_hat,
        "sigma_stderr": rep.sigma_stderr,
        "sigma_band": band,
        "sigma_in_band": sigma_ok,
        "ks_distance": rep.ks_distance,
        "ks_threshold": ks_threshold,
        "ks_ok": ks_ok,
        "covariance": rep.covariance,
    }))?;
    if c.assert {
        ctx.gate(sigma_ok, "sigma within the diffusivity band");
        ctx.gate(ks_ok, "KS distance within threshold");
    }
    ctx.done(w)
}

fn run_phase_scan(c: &PhaseScanConfig, ctx: &mut RunCtx) -> Result<()> {
    let base = model(c.d, c.a_values.first().copied().unwrap_or(0.0))?;
    let entries = phase_scan(&base, &c.a_values, &c.t_grid, c.n, c.seed);
    let csv = write_csv(
        ctx.out_dir.join("phase-scan.csv"),
        &["a", "range_slope", "range_rms", "radius_slope", "radius_rms"],
        entries.iter().map(|e| {
            vec![
                format!("{:.6e}", e.a),
                format!("{:.6}", e.range_fit.slope),
                format!("{:.6}", e.range_fit.rms_residual),
                format!("{:.6}", e.radius_fit.slope),
                format!("{:.6}", e.radius_fit.rms_residual),
            ]
        }),
    )?;
    ctx.outputs.push(csv);
    let mut w = ctx.results_writer()?;
    for e in &entries {
        w.write(&serde_json::json!({
            "op": "phase-scan",
            "config_hash": ctx.hash,
            "master_seed": c.seed,
            "n": c.n,
            "a": e.a,
            "range_fit": e.range_fit,
            "radius_fit": e.radius_fit,
            "mean_range": e.mean_range,
            "mean_radius": e.mean_radius,
        }))?;
    }
    ctx.done(w)
}

fn run_return(c: &ReturnConfig, ctx: &mut RunCtx) -> Result<()> {
    let params = model(c.d, c.a)?;
    let entries = return_probability(&params, &c.t_grid, c.horizon, c.n, c.seed);
    let csv = write_csv(
        ctx.out_dir.join("return.csv"),
        &["t", "p_hat", "wilson_lo", "wilson_hi"],
        entries.iter().map(|e| {
            vec![
                e.t.to_string(),
                format!("{:.8e}", e.p_hat),
                format!("{:.8e}", e.wilson_lo),
                format!("{:.8e}", e.wilson_hi),
            ]
        }),
    )?;
    ctx.outputs.push(csv);
    let mut w = ctx.results_writer()?;
    w.write(&serde_json::json!({
        "op": "return",
        "config_hash": ctx.hash,
        "master_seed": c.seed,
        "n": c.n,
        "horizon": c.horizon,
        "entries": entries,
    }))?;
    ctx.done(w)
}

fn run_oracle(c: &OracleConfig, ctx: &mut RunCtx) -> Result<()> {
    let mut w = ctx.results_writer()?;
    let record = match c.op.as_str() {
        "enumerate" => {
            let d = c.d.ok_or_else(|| Error::Config("enumerate needs --d".into()))?;
            let a = c.a.ok_or_else(|| Error::Config("enumerate needs --a".into()))?;
            let t = c.t.ok_or_else(|| Error::Config("enumerate needs --t".into()))?;
            let params = model(d, a)?;
            let dist = enumerate_orrw(&params, t, &Point::origin(d), &EdgeEnvironment::new())?;
            let dp = enumerate_orrw_dp(&params, t, &Point::origin(d), &EdgeEnvironment::new())?;
            let max_gap = dist
                .support
                .iter()
                .map(|(v, p)| (p - dp.prob(v)).abs())
                .fold(0.0f64, f64::max);
            serde_json::json!({
                "op": "oracle-enumerate",
                "config_hash": ctx.hash,
                "instance": {"d": d, "a": a, "t": t},
                "value": dist,
                "method": "dfs-enumeration, cross-checked against forward DP",
                "residual_or_budget": max_gap,
            })
        }
        "moments" => {
            let d = c.d.ok_or_else(|| Error::Config("moments needs --d".into()))?;
            let a = c.a.ok_or_else(|| Error::Config("moments needs --a".into()))?;
            let t = c.t.ok_or_else(|| Error::Config("moments needs --t".into()))?;
            let v = exact_moments(&model(d, a)?, t)?;
            serde_json::json!({
                "op": "oracle-moments",
                "config_hash": ctx.hash,
                "instance": {"d": d, "a": a, "t": t},
                "value": v,
                "method": "weighted path enumeration",
                "residual_or_budget": null,
            })
        }
        "escape" => {
            let d = c.d.ok_or_else(|| Error::Config("escape needs --d".into()))?;
            let a = c.a.ok_or_else(|| Error::Config("escape needs --a".into()))?;
            let r = c.r.ok_or_else(|| Error::Config("escape needs --r".into()))?;
            let big_r = c.big_r.ok_or_else(|| Error::Config("escape needs --big-r".into()))?;
            let params = model(d, a)?;
            let avoid: BTreeSet<Point> = c
                .avoid
                .clone()
                .unwrap_or_default()
                .into_iter()
                .map(Point::new)
                .collect();
            let cfg = EscapeConfig::new(&Point::origin(d), r, big_r, avoid.clone());
            let z = avoid.iter().next().cloned().unwrap_or(Point::origin(d));
            let v = exact_escape(&z, &cfg, &params)?;
            serde_json::json!({
                "op": "oracle-escape",
                "config_hash": ctx.hash,
                "instance": {"d": d, "a": a, "r": r, "big_r": big_r, "z": z},
                "value": v,
                "method": "pruned path enumeration over the escape horizon",
                "residual_or_budget": null,
            })
        }
        "green" => {
            let d = c.d.ok_or_else(|| Error::Config("green needs --d".into()))?;
            let radius = c.radius.ok_or_else(|| Error::Config("green needs --radius".into()))?;
            let table = srw_green(d, radius)?;
            serde_json::json!({
                "op": "oracle-green",
                "config_hash": ctx.hash,
                "instance": {"d": d, "radius": radius},
                "value": table.at_origin(),
                "method": "conjugate-gradient solve with absorbing exterior",
                "residual_or_budget": table.residual,
            })
        }
        "exit-edge" => {
            let d = c.d.ok_or_else(|| Error::Config("exit-edge needs --d".into()))?;
            let radius =
                c.radius.ok_or_else(|| Error::Config("exit-edge needs --radius".into()))?;
            let edge = match &c.edge {
                Some(pair) if pair.len() == 2 => Edge::new(
                    &Point::new(pair[0].clone()),
                    &Point::new(pair[1].clone()),
                )?,
                Some(_) => return Err(Error::Config("edge needs two endpoints".into())),
                None => {
                    let mut inside = vec![0i64; d];
                    inside[0] = radius;
                    let mut outside = inside.clone();
                    outside[0] = radius + 1;
                    Edge::new(&Point::new(inside), &Point::new(outside))?
                }
            };
            let res = exact_exit_through_edge(d, radius, &edge)?;
            serde_json::json!({
                "op": "oracle-exit-edge",
                "config_hash": ctx.hash,
                "instance": {"d": d, "radius": radius, "edge": edge},
                "value": res.probability,
                "scaled_by_radius_power": res.probability
                    * (radius as f64).powi(d as i32 - 1),
                "method": "absorbing-chain solve",
                "residual_or_budget": res.residual,
            })
        }
        other => {
            return Err(Error::Config(format!(
                "unknown oracle op '{other}'; known: enumerate, moments, escape, green, exit-edge"
            )))
        }
    };
    w.write(&record)?;
    ctx.done(w)
}

fn selftest_record(
    w: &mut NdjsonWriter,
    hash: &str,
    name: &str,
    ok: bool,
    detail: String,
) -> Result<bool> {
    w.write(&serde_json::json!({
        "op": "selftest",
        "config_hash": hash,
        "gate": name,
        "pass": ok,
        "detail": detail,
    }))?;
    Ok(ok)
}

fn run_selftest(c: &SelftestConfig, ctx: &mut RunCtx) -> Result<()> {
    let mut w = ctx.results_writer()?;
    let hash = ctx.hash.clone();

    // Enumeration routes agree.
    let params21 = ModelParams::new(2, 1.0);
    let dfs = enumerate_orrw(&params21, 4, &Point::origin(2), &EdgeEnvironment::new())?;
    let dp = enumerate_orrw_dp(&params21, 4, &Point::origin(2), &EdgeEnvironment::new())?;
    let gap = dfs
        .support
        .iter()
        .map(|(v, p)| (p - dp.prob(v)).abs())
        .fold(0.0f64, f64::max);
    let ok = selftest_record(&mut w, &hash, "enumeration-routes-agree", gap < 1e-12, format!("gap {gap:.3e}"))?;
    ctx.gate(ok, "enumeration-routes-agree");

    // Sampler vs oracle on the tiny escape geometry.
    let avoid: BTreeSet<Point> = [Point::origin(2)].into_iter().collect();
    let cfg = EscapeConfig::new(&Point::origin(2), 1, 2, avoid.iter().cloned());
    let exact = exact_escape(&Point::origin(2), &cfg, &params21)?;
    let est = estimate_capacity(&avoid, &Point::origin(2), 1, 2, &params21, 20_000, c.seed);
    let diff = (est.total - exact).abs();
    let ok = selftest_record(
        &mut w,
        &hash,
        "capacity-matches-oracle",
        diff <= 3.0 * est.stderr_total.max(1e-9),
        format!("estimate {:.5} exact {exact:.5}", est.total),
    )?;
    ctx.gate(ok, "capacity-matches-oracle");

    // a = 0 reduces to simple random walk, bitwise.
    let mut reduction_ok = true;
    for k in 0..50u64 {
        let seed = derive_replica_seed(c.seed, k);
        let src = UniformSource::time_stream(seed);
        let params = ModelParams::new(2, 0.0);
        let orrw = simulate(&params, &Point::origin(2), 1000, &src, EdgeEnvironment::new());
        let srw = simulate_srw(2, &Point::origin(2), 1000, &src);
        if orrw.vertices() != &srw[..] {
            reduction_ok = false;
            break;
        }
    }
    let ok = selftest_record(&mut w, &hash, "srw-reduction-bitwise", reduction_ok, String::new())?;
    ctx.gate(ok, "srw-reduction-bitwise");

    // Restriction equals the replayed demon walk.
    let mut replay_ok = true;
    let block = Block::centered(2, 3);
    for k in 0..50u64 {
        let seed = derive_replica_seed(c.seed.wrapping_add(1), k);
        let (restricted, run) = restriction_demon_replay(seed, &block, 150, &params21)?;
        if restricted.vertices() != run.trajectory.vertices() {
            replay_ok = false;
            break;
        }
    }
    let ok = selftest_record(&mut w, &hash, "restriction-demon-replay", replay_ok, String::new())?;
    ctx.gate(ok, "restriction-demon-replay");

    // Concatenation prefix equality.
    let mut prefix_ok = true;
    for k in 0..20u64 {
        let seed = derive_replica_seed(c.seed.wrapping_add(2), k);
        let (w_full, w_tilde) = couple_concat(&params21, 20, 20, seed)?;
        if w_full.vertices()[..21] != w_tilde.vertices()[..21] {
            prefix_ok = false;
            break;
        }
    }
    let ok = selftest_record(&mut w, &hash, "concat-prefix", prefix_ok, String::new())?;
    ctx.gate(ok, "concat-prefix");

    // Green symmetry and the gambler's-ruin closed form.
    let table = srw_green(3, 8)?;
    let x = Point::new(vec![2, 1, 0]);
    let sym_gap = (table.value(&x).unwrap()
        - table.value(&Point::new(vec![0, 1, 2])).unwrap())
    .abs();
    let edge = Edge::new(&Point::new(vec![3]), &Point::new(vec![4])).unwrap();
    let exit = exact_exit_through_edge(1, 3, &edge)?;
    let ruin_gap = (exit.probability - exit_edge_closed_form_d1(3)).abs();
    let ok = selftest_record(
        &mut w,
        &hash,
        "linear-solvers",
        sym_gap < 1e-9 && ruin_gap < 1e-10 && table.residual < 1e-10,
        format!("sym {sym_gap:.2e} ruin {ruin_gap:.2e}"),
    )?;
    ctx.gate(ok, "linear-solvers");

    ctx.done(w)
}
