//! The alternating multiplicative iteration.
//!
//! Each iteration reconstructs `U`, records the cost, stops if the cost is
//! below the tolerance, sweeps the weights, refreshes `U`, then sweeps the
//! activations.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::divergence::{divergence, Beta, DEFAULT_FLOOR};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{check_compatible, normalize, reconstruct, FactorStackH, FactorStackW};
use crate::updates::{update_h, update_w, UpdateOptions};

/// Relative slack allowed when judging a cost sequence nonincreasing.
pub const MONOTONE_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub beta: Beta,
    pub max_iters: usize,
    /// Absolute cost threshold; the loop returns once a recorded cost is
    /// strictly below it.
    pub tol: f64,
    pub floor: f64,
    /// Normalize the factors after every `n`-th iteration. Off by default.
    pub normalize_every: Option<usize>,
    pub norm_order: f64,
    pub legacy: bool,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            beta: Beta::KULLBACK_LEIBLER,
            max_iters: 300,
            tol: 0.0,
            floor: DEFAULT_FLOOR,
            normalize_every: None,
            norm_order: 2.0,
            legacy: false,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn with_beta(beta: Beta) -> Self {
        Self {
            beta,
            ..Self::default()
        }
    }

    pub fn update_options(&self) -> UpdateOptions {
        UpdateOptions {
            beta: self.beta,
            floor: self.floor,
            legacy_unshifted_u: self.legacy,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("iteration budget must be at least 1".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidConfig(format!("tolerance must be >= 0, got {}", self.tol)));
        }
        if self.normalize_every == Some(0) {
            return Err(Error::InvalidConfig("normalize_every must be positive".into()));
        }
        if !(self.norm_order >= 1.0) || !self.norm_order.is_finite() {
            return Err(Error::InvalidConfig(format!("norm order must be >= 1, got {}", self.norm_order)));
        }
        self.update_options().validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTrace {
    /// Cost recorded at the start of each iteration, before any update.
    pub costs: Vec<f64>,
    pub stopped_early: bool,
    /// Cost of the returned factors.
    pub final_cost: f64,
}

impl ConvergenceTrace {
    pub fn iterations_run(&self) -> usize {
        self.costs.len()
    }
}

#[derive(Clone, Debug)]
pub struct Factorization {
    pub w: FactorStackW,
    pub h: FactorStackH,
    pub trace: ConvergenceTrace,
}

/// `D_beta(V || reconstruct(W, H))`.
pub fn cost_at(v: &Matrix, w: &FactorStackW, h: &FactorStackH, beta: Beta, floor: f64) -> Result<f64> {
    divergence(v, &reconstruct(w, h)?, beta, floor)
}

/// True when `seq[t+1] <= seq[t] * (1 + slack)` for every `t`.
pub fn is_nonincreasing(seq: &[f64], slack: f64) -> bool {
    first_increase(seq, slack).is_none()
}

/// Index `t + 1` of the first step that rises above `seq[t] * (1 + slack)`.
pub fn first_increase(seq: &[f64], slack: f64) -> Option<usize> {
    seq.windows(2).position(|p| p[1] > p[0] * (1.0 + slack)).map(|t| t + 1)
}

fn abort(iteration: usize, what: impl Into<String>) -> Error {
    Error::NumericalAbort {
        iteration,
        what: what.into(),
    }
}

pub fn solve(v: &Matrix, w0: &FactorStackW, h0: &FactorStackH, cfg: &SolverConfig) -> Result<Factorization> {
    cfg.validate()?;
    check_compatible(w0, h0)?;
    if v.shape() != (w0.k(), h0.n()) {
        return Err(Error::DimensionMismatch {
            op: "solve",
            left: (w0.k(), h0.n()),
            right: v.shape(),
        });
    }
    v.check_nonnegative()?;

    let opts = cfg.update_options();
    let mut w = w0.clone();
    let mut h = h0.clone();
    let mut costs = Vec::with_capacity(cfg.max_iters);
    let mut stopped_early = false;

    for t in 1..=cfg.max_iters {
        let u = reconstruct(&w, &h)?;
        let cost = divergence(v, &u, cfg.beta, cfg.floor)?;
        if !cost.is_finite() {
            return Err(abort(t, format!("cost is {cost}")));
        }
        if let Some(&prev) = costs.last() {
            if cost > prev * (1.0 + MONOTONE_SLACK) {
                warn!("iteration {t}: cost rose from {prev:e} to {cost:e}");
            }
        }
        costs.push(cost);
        if cost < cfg.tol {
            stopped_early = true;
            break;
        }

        w = update_w(&w, &h, v, &u, &opts)?;
        if !w.is_finite() {
            return Err(abort(t, "non-finite entry in W after weight sweep"));
        }
        let u = reconstruct(&w, &h)?;
        h = update_h(&w, &h, v, &u, &opts)?;
        if !h.is_finite() {
            return Err(abort(t, "non-finite entry in H after activation sweep"));
        }
        if let Some(every) = cfg.normalize_every {
            if t % every == 0 {
                (w, h) = normalize(&w, &h, cfg.norm_order).map_err(|e| abort(t, e.to_string()))?;
            }
        }
        debug_assert!(w.slices().iter().chain(h.slices()).all(|s| s.min() >= 0.0));
    }

    let final_cost = cost_at(v, &w, &h, cfg.beta, cfg.floor)?;
    if !final_cost.is_finite() {
        return Err(abort(costs.len(), format!("final cost is {final_cost}")));
    }
    Ok(Factorization {
        w,
        h,
        trace: ConvergenceTrace {
            costs,
            stopped_early,
            final_cost,
        },
    })
}
