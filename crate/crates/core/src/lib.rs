//! Frozen coagulation with limited aggregations.
//!
//! `N` particles carry arms; every arm rings at an independent `Exp(1)`
//! time and consecutive activations in solution are bound together. A
//! cluster that reaches the threshold `alpha` freezes into the gel and stops
//! interacting. The crate contains
//!
//! * [`measures`]: finite-support pmfs, generating functions, size-biasing,
//!   convolution powers and the Borel law;
//! * [`graphs`]: configuration-model pairings (plain, arm subset, percolated)
//!   and their connected components;
//! * [`dynamic_cm`]: the dynamical configuration model and its first-gel
//!   forecasts;
//! * [`frozen_sim`]: the frozen particle system with full trajectory records;
//! * [`smoluchowski`]: the deterministic limit (ODE integration, `Q(t)`,
//!   limit state, tilt constants, limiting concentrations);
//! * [`gw_local`]: Galton-Watson samplers, total progeny, canonical rooted
//!   tree codes and exact finite-tree laws.

pub mod arms;
pub mod dynamic_cm;
pub mod error;
pub mod frozen_sim;
pub mod graphs;
pub mod gw_local;
pub mod measures;
mod pair_map;
pub mod rng;
pub mod smoluchowski;
pub mod union_find;

pub use error::{Error, Result};
pub use measures::{DistSpec, Pmf};
