//! Numerical computation and certification of localized sign-changing
//! solutions of penalized Schrödinger–Poisson systems.
//!
//! Everything is discretized on a periodic box in the rescaled frame
//! `x ↦ εx`. The main entry points are [`energy::Problem`] (the discrete
//! functional), [`flow::descend`] (the descending flow driven by the
//! auxiliary operator `A_ε`), [`minimax::find_solutions`] (multi-start search
//! over spheres spanned by disjointly supported bumps) and [`diagnostics::certify`].

// `!(x > 0.0)` is used on purpose so that NaN fails the check too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Small dense matrices read better with explicit indices.
#![allow(clippy::needless_range_loop)]

pub mod config;
pub mod diagnostics;
pub mod dump;
pub mod energy;
pub mod error;
pub mod flow;
pub mod grid;
pub mod minimax;
pub mod model;
pub mod nodal;
pub mod poisson;
pub mod spectral;

pub use energy::{EnergyBreakdown, PenaltyState, Problem};
pub use error::{Error, Result};
pub use grid::{Field, Grid};
pub use model::ModelConfig;
