//! Spectral methods for small-set expansion on Markov chains.
//!
//! Build a [`chain::ReversibleChain`] (directly, from a graph, or by
//! reversibilizing a directed chain), decompose it with
//! [`spectral::decompose`], then search for sparse low-conductance
//! functions ([`heat_method`], [`eigenspace_enum`], [`sse_solver`]) or
//! study how long walks stay inside a set ([`walk_escape`]).

pub mod chain;
pub mod cli;
pub mod eigenspace_enum;
pub mod error;
pub mod functionals;
pub mod generators;
pub mod heat_method;
pub mod io;
pub mod spectral;
pub mod sse_solver;
pub mod walk_escape;

pub use error::{Error, Result};
