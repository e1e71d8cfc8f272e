//! Decentralized consensus optimization over simulated networks.
//!
//! The crate is organized bottom-up:
//!
//! - [`graph`]: random geometric networks, Metropolis-Hastings mixing
//!   matrices, the scaled incidence matrix `V` with `VᵀV = (I − W)/2`, and
//!   the spectrum of the metric matrix `G = [[I, Vᵀ], [V, I]]`.
//! - [`problems`]: composite per-agent objectives `f_i = s_i + r_i` exposed
//!   through gradient and proximal oracles.
//! - [`sync`]: synchronous PG-EXTRA, proximal DGD, step-size rules, the
//!   fixed-point residual and reference-solution computation.
//! - [`engine`]: a deterministic discrete-event simulator running the
//!   asynchronous relaxed primal-dual recursion (and asynchronous proximal
//!   DGD) with delayed reads through per-agent mailboxes.
//! - [`experiments`]: benchmark instance generators, decentralized matrix
//!   completion, metrics, and the CSV-emitting experiment runner used by the
//!   `dcl` command-line tool.
//!
//! Agents and edges are indexed from zero. Edge `e = (i, j)` always has
//! `i < j`, edges are enumerated in lexicographic order, and agent `i` owns
//! the dual rows of the edges `(i, j)` with `j > i`.

pub mod engine;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod problems;
pub mod rng;
mod serde_mat;
pub mod sync;
#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
