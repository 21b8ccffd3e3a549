//! Two-dimensional convolutional nonnegative matrix factorization with
//! exact multiplicative updates under the beta-divergence.
//!
//! The model approximates a nonnegative `K x N` matrix `V` by
//!
//! ```text
//! U = sum_{l<L} sum_{m<M} down(W_m, l) * right(H_l, m)
//! ```
//!
//! where `down` and `right` are zero-filling row and column shifts.
//!
//! ```
//! use cnmf2d::{init_random, solve, Beta, ModelDims, SolverConfig};
//! use cnmf2d::simulation::gen_ground_truth;
//!
//! let dims = ModelDims::new(10, 25, 5, 2, 2).unwrap();
//! let truth = gen_ground_truth(dims, 1).unwrap();
//! let (w0, h0) = init_random(dims, 2).unwrap();
//! let cfg = SolverConfig { max_iters: 50, ..SolverConfig::with_beta(Beta::KULLBACK_LEIBLER) };
//! let out = solve(&truth.v, &w0, &h0, &cfg).unwrap();
//! assert!(out.trace.final_cost < out.trace.costs[0]);
//! ```

pub mod cli;
pub mod divergence;
pub mod error;
pub mod io;
pub mod matrix;
pub mod model;
pub mod rng;
pub mod simulation;
pub mod solver;
pub mod updates;

pub use divergence::{d_beta, divergence, scale_identity_check, Beta, DEFAULT_FLOOR};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use model::{init_random, normalize, reconstruct, FactorStackH, FactorStackW, ModelDims};
pub use solver::{cost_at, solve, ConvergenceTrace, Factorization, SolverConfig};
pub use updates::{gradient_h, gradient_w, update_h, update_w, UpdateOptions};
