//! Thin command-line front end over the library's experiment runner.
//!
//! Every subcommand mirrors one `ExperimentConfig` variant 1:1; `--config
//! file.json` overrides the flags entirely. Exit codes: 0 ok, 2 config
//! error, 3 assertion-gate failure, 4 budget guard.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use orrw::experiment::{
    CapacityConfig, CltConfig, ConcatConfig, DemonConfig, ExperimentConfig, H1Config,
    HeavyConfig, OracleConfig, PhaseScanConfig, RelaxedConfig, ReturnConfig, SelftestConfig,
    SimulateConfig, TailsConfig, VarianceConfig,
};
use orrw::Error;

#[derive(Parser)]
#[command(
    name = "orrw",
    about = "Once-reinforced random walk simulation and estimation toolkit",
    version
)]
struct Cli {
    /// Load the full experiment config from a JSON file, overriding the
    /// subcommand flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for result streams and the manifest.
    #[arg(long, global = true, default_value = "orrw-out")]
    out: PathBuf,

    /// Worker threads (capped by the ORRW_THREADS environment variable).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    a: f64,
    #[arg(long)]
    steps: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Start coordinates, comma separated (origin when omitted).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    start: Option<Vec<i64>>,
    /// Draw uniforms from per-vertex envelopes instead of the time stream.
    #[arg(long)]
    envelopes: bool,
}

#[derive(Args)]
struct VarianceArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    a: f64,
    /// Sample times, comma separated.
    #[arg(long, value_delimiter = ',')]
    t: Vec<u64>,
    #[arg(long, default_value_t = 1000)]
    n: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    defect_s: Option<u64>,
    #[arg(long)]
    defect_t: Option<u64>,
}

#[derive(Args)]
struct CapacityArgs {
    /// Named preset; `tiny-exact` runs the oracle cross-check geometry.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    r: Option<i64>,
    #[arg(long)]
    big_r: Option<i64>,
    /// Center coordinates of the escape box, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    center: Option<Vec<i64>>,
    /// Avoided set as a JSON array of points, e.g. `[[0,0],[1,0]]`.
    #[arg(long)]
    avoid: Option<String>,
    #[arg(long, default_value_t = 1000)]
    n: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Exit nonzero if the oracle gate fails.
    #[arg(long)]
    assert: bool,
}

#[derive(Args)]
struct RelaxedArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    a: f64,
    #[arg(long)]
    steps: u64,
    #[arg(long)]
    scale: i64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct HeavyArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    a: f64,
    #[arg(long)]
    steps: u64,
    #[arg(long)]
    big_r: i64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct DemonArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    a: f64,
    /// Box radius.
    #[arg(long)]
    radius: i64,
    /// Teleporter length to run to.
    #[arg(long)]
    steps: u64,
    /// Strategy name (see `fixed-edge`, `uniform-random-edge`,
    /// `nearest-to-exit`, `greedy-dense`).
    #[arg(long)]
    strategy: String,
    /// Strategy parameters as a JSON object.
    #[arg(long)]
    strategy_params: Option<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct ConcatArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    a: f64,
    #[arg(long)]
    t1: u64,
    #[arg(long)]
    t2: u64,
    #[arg(long, default_value_t = 1000)]
    n: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct TailsArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    a: f64,
    #[arg(long)]
    t: u64,
    /// Displacement exponent; defaults to 1/2 + 3 epsilon.
    #[arg(long)]
    exponent: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    n: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct H1Args {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    a: f64,
    #[arg(long)]
    t: u64,
    #[arg(long, default_value_t = 1000)]
    n: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    assert: bool,
}

#[derive(Args)]
struct CltArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    a: f64,
    #[arg(long)]
    t: u64,
    #[arg(long, default_value_t = 1000)]
    n: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    ks_threshold: Option<f64>,
    #[arg(long)]
    assert: bool,
}

#[derive(Args)]
struct PhaseScanArgs {
    #[arg(long)]
    d: usize,
    /// Reinforcement values, comma separated.
    #[arg(long, value_delimiter = ',')]
    a_values: Vec<f64>,
    /// Geometric time grid, comma separated.
    #[arg(long, value_delimiter = ',')]
    t_grid: Vec<u64>,
    #[arg(long, default_value_t = 1000)]
    n: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct ReturnArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    a: f64,
    #[arg(long, value_delimiter = ',')]
    t_grid: Vec<u64>,
    #[arg(long)]
    horizon: u64,
    #[arg(long, default_value_t = 1000)]
    n: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct OracleArgs {
    /// One of: enumerate, moments, escape, green, exit-edge.
    #[arg(long)]
    op: String,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    t: Option<u64>,
    #[arg(long)]
    radius: Option<i64>,
    #[arg(long)]
    r: Option<i64>,
    #[arg(long)]
    big_r: Option<i64>,
    /// Avoided set as a JSON array of points.
    #[arg(long)]
    avoid: Option<String>,
    /// Target edge as a JSON array of two points.
    #[arg(long)]
    edge: Option<String>,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one walk and dump its trajectory.
    Simulate(SimulateArgs),
    /// Estimate the coordinate variance curve and diffusivity.
    Variance(VarianceArgs),
    /// Estimate escape probabilities and walk capacity.
    Capacity(CapacityArgs),
    /// Scan locally relaxed times of a simulated walk.
    Relaxed(RelaxedArgs),
    /// Heavy-block stopping-time report for a simulated walk.
    Heavy(HeavyArgs),
    /// Run an adversarial demon walk in a box.
    Demon(DemonArgs),
    /// Concatenation coupling study.
    Concat(ConcatArgs),
    /// Displacement-tail estimate with an SRW baseline.
    Tails(TailsArgs),
    /// Endpoint histogram against the probability bound.
    H1(H1Args),
    /// Gaussian-fit diagnostic (KS distance and diffusivity band).
    Clt(CltArgs),
    /// Growth-exponent scan over reinforcement values.
    PhaseScan(PhaseScanArgs),
    /// Return-probability curve.
    Return(ReturnArgs),
    /// Evaluate an exact oracle directly.
    Oracle(OracleArgs),
    /// Run the built-in oracle-vs-sampler cross checks.
    Selftest(SelftestArgs),
}

fn parse_points(json: &str) -> Result<Vec<Vec<i64>>, Error> {
    serde_json::from_str(json).map_err(|e| Error::Config(format!("bad point list: {e}")))
}

fn build_config(cmd: Command) -> Result<ExperimentConfig, Error> {
    Ok(match cmd {
        Command::Simulate(a) => ExperimentConfig::Simulate(SimulateConfig {
            d: a.d,
            a: a.a,
            steps: a.steps,
            seed: a.seed,
            start: a.start,
            envelopes: a.envelopes,
        }),
        Command::Variance(a) => ExperimentConfig::Variance(VarianceConfig {
            d: a.d,
            a: a.a,
            t: a.t,
            n: a.n,
            seed: a.seed,
            defect_s: a.defect_s,
            defect_t: a.defect_t,
        }),
        Command::Capacity(a) => ExperimentConfig::Capacity(CapacityConfig {
            preset: a.preset,
            d: a.d,
            a: a.a,
            r: a.r,
            big_r: a.big_r,
            center: a.center,
            avoid: a.avoid.as_deref().map(parse_points).transpose()?,
            n: a.n,
            seed: a.seed,
            assert: a.assert,
        }),
        Command::Relaxed(a) => ExperimentConfig::Relaxed(RelaxedConfig {
            d: a.d,
            a: a.a,
            steps: a.steps,
            scale: a.scale,
            seed: a.seed,
        }),
        Command::Heavy(a) => ExperimentConfig::Heavy(HeavyConfig {
            d: a.d,
            a: a.a,
            steps: a.steps,
            big_r: a.big_r,
            seed: a.seed,
        }),
        Command::Demon(a) => ExperimentConfig::Demon(DemonConfig {
            d: a.d,
            a: a.a,
            radius: a.radius,
            steps: a.steps,
            strategy: a.strategy,
            strategy_params: a
                .strategy_params
                .as_deref()
                .map(|s| {
                    serde_json::from_str(s)
                        .map_err(|e| Error::Config(format!("bad strategy params: {e}")))
                })
                .transpose()?,
            seed: a.seed,
        }),
        Command::Concat(a) => ExperimentConfig::Concat(ConcatConfig {
            d: a.d,
            a: a.a,
            t1: a.t1,
            t2: a.t2,
            n: a.n,
            seed: a.seed,
        }),
        Command::Tails(a) => ExperimentConfig::Tails(TailsConfig {
            d: a.d,
            a: a.a,
            t: a.t,
            exponent: a.exponent,
            n: a.n,
            seed: a.seed,
        }),
        Command::H1(a) => ExperimentConfig::H1(H1Config {
            d: a.d,
            a: a.a,
            t: a.t,
            n: a.n,
            seed: a.seed,
            assert: a.assert,
        }),
        Command::Clt(a) => ExperimentConfig::Clt(CltConfig {
            d: a.d,
            a: a.a,
            t: a.t,
            n: a.n,
            seed: a.seed,
            ks_threshold: a.ks_threshold,
            assert: a.assert,
        }),
        Command::PhaseScan(a) => ExperimentConfig::PhaseScan(PhaseScanConfig {
            d: a.d,
            a_values: a.a_values,
            t_grid: a.t_grid,
            n: a.n,
            seed: a.seed,
        }),
        Command::Return(a) => ExperimentConfig::Return(ReturnConfig {
            d: a.d,
            a: a.a,
            t_grid: a.t_grid,
            horizon: a.horizon,
            n: a.n,
            seed: a.seed,
        }),
        Command::Oracle(a) => ExperimentConfig::Oracle(OracleConfig {
            op: a.op,
            d: a.d,
            a: a.a,
            t: a.t,
            radius: a.radius,
            r: a.r,
            big_r: a.big_r,
            avoid: a.avoid.as_deref().map(parse_points).transpose()?,
            edge: a.edge.as_deref().map(parse_points).transpose()?,
        }),
        Command::Selftest(a) => ExperimentConfig::Selftest(SelftestConfig { seed: a.seed }),
    })
}

fn effective_threads(flag: Option<usize>) -> Option<usize> {
    let env_cap = std::env::var("ORRW_THREADS").ok().and_then(|s| s.parse::<usize>().ok());
    match (flag, env_cap) {
        (Some(f), Some(cap)) => Some(f.min(cap)),
        (Some(f), None) => Some(f),
        (None, Some(cap)) => Some(cap),
        (None, None) => None,
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    let config: ExperimentConfig = match (&cli.config, cli.command) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{e}")))?
        }
        (None, Some(cmd)) => build_config(cmd)?,
        (None, None) => {
            return Err(Error::Config(
                "a subcommand or --config file is required".into(),
            ))
        }
    };

    let run_it = || -> Result<(), Error> {
        let outcome = orrw::experiment::run(&config, &cli.out)?;
        println!("config_hash: {}", outcome.config_hash);
        for p in &outcome.outputs {
            println!("wrote {}", p.display());
        }
        if !outcome.gates_ok() {
            for g in &outcome.gate_failures {
                eprintln!("gate failed: {g}");
            }
            return Err(Error::Gate("one or more assertion gates failed".into()));
        }
        Ok(())
    };

    match effective_threads(cli.threads) {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            pool.install(run_it)
        }
        None => run_it(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::from(0),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Json(_) => ExitCode::from(2),
                Error::Gate(_) => ExitCode::from(3),
                Error::Budget(_) => ExitCode::from(4),
                _ => ExitCode::from(1),
            }
        }
    }
}
