//! Go-or-grow particles: the top K branch, the rest drift at speed χ.
//! Simulation, the limiting free-boundary equation and lineage tools.
//!
//! - [`engine`]: the microscopic particle system with Ulam–Harris genealogy.
//! - [`rank_index`]: order-statistic queries over positions.
//! - [`genealogy`]: branching tree, snapshots and ancestral lineages.
//! - [`limit_pde`]: finite-difference solver for the large-population limit,
//!   threshold tracking and a Duhamel mild-solution cross-check.
//! - [`ancestral_fp`]: lineage drift and the conservative Fokker–Planck solver.
//! - [`analytics`]: closed-form speeds and profiles, estimators, histograms.
//! - [`seed`]: per-replicate seed derivation.
//! - [`verify`]: end-to-end acceptance checks with pinned tolerances.

pub mod analytics;
pub mod ancestral_fp;
pub mod engine;
pub mod error;
pub mod genealogy;
pub mod grid;
pub mod limit_pde;
pub mod rank_index;
pub mod seed;
pub mod verify;

pub use error::{Error, Result};
