//! Porous medium equation with divergence-form drift.
//!
//! The crate solves rho_t = div(grad(rho^m) - V rho) for m > 1 by a
//! splitting construction: homogeneous porous-medium steps alternate with
//! exact push-forward along the flow of the drift. Around the solver sits
//! a diagnostics layer (masses, L^q norms, entropies, moments, speed and
//! drift energies, mixed-norm scaling classification, Wasserstein
//! distances and moduli) and an application coupling to a repulsive
//! chemotaxis system.
//!
//! Everything is deterministic: fixed seeds, serial reductions, and a
//! binary snapshot format with bit-exact round trips.

// Validation sites write `!(x > 0.0)` on purpose: the negation rejects
// NaN, which `x <= 0.0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod defaults;
pub mod error;
pub mod flow;
pub mod functionals;
pub mod grid;
pub mod io;
pub mod keller_segel;
pub mod netflow;
pub mod par;
pub mod pme;
pub mod rng;
pub mod splitting;
pub mod vfield;
pub mod wasserstein;

pub use error::{Error, Result};
