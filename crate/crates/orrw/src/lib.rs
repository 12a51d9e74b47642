//! Simulation and Monte-Carlo estimation toolkit for once-reinforced random
//! walk (ORRW) on the integer lattice `Z^d`.
//!
//! ORRW is the nearest-neighbor walk in which an edge's weight rises from 1
//! to `1 + a` the first time it is crossed and stays there; `a = 0` recovers
//! simple random walk. The crate provides:
//!
//! - [`lattice`]: points, boxes, edges, strict and teleporting paths, and
//!   the restriction operator taking an ambient path to a teleporter
//!   relative to a box;
//! - [`engine`]: the transition law, counter-based uniform sources (a
//!   time-indexed stream and per-vertex envelope stacks), simulation,
//!   shared-uniform couplings, and walk concatenation;
//! - [`diagnostics`]: heavy blocks, locally relaxed times, spend and
//!   heavy-block stopping times, block classification, occupation and range
//!   statistics;
//! - [`demon`]: adversarial re-entry strategies, demon walks, and the exact
//!   replay coupling identifying a restricted walk with a demon walk;
//! - [`estimators`]: Monte-Carlo estimators for escape probabilities and
//!   walk capacity, variance and diffusivity, displacement tails, endpoint
//!   histograms, Gaussian-fit diagnostics, growth-exponent scans, and
//!   return probabilities;
//! - [`oracles`]: exact small-scale references (weighted path enumeration
//!   by two independent routes, absorbing-chain solves, Green's function
//!   tables) that the estimators are validated against;
//! - [`experiment`]: the config-driven runner used by the `orrw` binary,
//!   with reproducible seeding and deterministic output streams.
//!
//! Every uniform variable is a pure function of `(seed, counter)` or
//! `(seed, vertex, visit)`, so couplings that the theory defines pathwise
//! (natural coupling, concatenation coupling, envelope replay) hold exactly
//! in the implementation, not just in distribution.
//!
//! See the `examples/` directory for one runnable walkthrough per
//! capability.

pub mod demon;
pub mod diagnostics;
pub mod engine;
mod error;
pub mod estimators;
pub mod experiment;
pub mod lattice;
pub mod oracles;
pub mod report;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};

pub use engine::{ModelParams, Trajectory};
pub use lattice::{Block, Edge, PathSeq, Point};
pub use rng::UniformSource;
