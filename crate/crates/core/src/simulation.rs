//! Synthetic ensemble experiments.
//!
//! Ground-truth weights are chi-squared with two degrees of freedom (the sum
//! of two squared standard normals), activations are uniform on `[0, 1)`,
//! and the data matrix is their exact reconstruction. Each data matrix is
//! factorized from several random initializations and the per-iteration
//! costs are summarized by their mean and population standard deviation.
//!
//! Data matrices and initializations depend only on the master seed and
//! their indices, so every beta sees the same problems.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::{Beta, DEFAULT_FLOOR};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{init_random, reconstruct, FactorStackH, FactorStackW, ModelDims};
use crate::rng::{derive_seed, rng_from_seed, standard_normal};
use crate::solver::{solve, SolverConfig};

const DATA_STREAM: u64 = 0;
const INIT_STREAM: u64 = 1;

/// Per-iteration time ratios against `beta = 2` measured on a Xeon
/// E5-2637 v3 for the original 2D updates. Reference only.
pub const REFERENCE_TIME_RATIOS: [(f64, f64); 2] = [(0.0, 1.41), (1.0, 1.05)];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub dims: ModelDims,
    pub betas: Vec<Beta>,
    pub n_matrices: usize,
    pub n_inits: usize,
    pub iters: usize,
    pub master_seed: u64,
    pub floor: f64,
}

impl ExperimentPlan {
    /// 10 x 25 data, rank 5, 2 x 2 support, betas {0, 1, 2}, 10 matrices
    /// with 3 initializations each, 300 iterations.
    pub fn desk_scale(master_seed: u64) -> Self {
        Self {
            dims: ModelDims {
                k: 10,
                n: 25,
                i: 5,
                l: 2,
                m: 2,
            },
            betas: vec![Beta::ITAKURA_SAITO, Beta::KULLBACK_LEIBLER, Beta::EUCLIDEAN],
            n_matrices: 10,
            n_inits: 3,
            iters: 300,
            master_seed,
            floor: DEFAULT_FLOOR,
        }
    }

    /// The full-size protocol: 100 matrices, 10 initializations, 1000 iterations.
    pub fn full_scale(master_seed: u64) -> Self {
        Self {
            n_matrices: 100,
            n_inits: 10,
            iters: 1000,
            ..Self::desk_scale(master_seed)
        }
    }

    pub fn ensemble_size(&self) -> usize {
        self.n_matrices * self.n_inits
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if self.n_matrices == 0 || self.n_inits == 0 {
            return Err(Error::InvalidConfig("ensemble needs at least one matrix and one init".into()));
        }
        if self.iters == 0 {
            return Err(Error::InvalidConfig("iteration budget must be at least 1".into()));
        }
        if self.betas.is_empty() {
            return Err(Error::InvalidConfig("at least one beta is required".into()));
        }
        Ok(())
    }

    pub fn data_seed(&self, matrix: usize) -> u64 {
        derive_seed(self.master_seed, &[DATA_STREAM, matrix as u64])
    }

    pub fn init_seed(&self, matrix: usize, init: usize) -> u64 {
        derive_seed(self.master_seed, &[INIT_STREAM, matrix as u64, init as u64])
    }

    fn solver_config(&self, beta: Beta) -> SolverConfig {
        SolverConfig {
            beta,
            max_iters: self.iters,
            tol: 0.0,
            floor: self.floor,
            ..SolverConfig::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub w: FactorStackW,
    pub h: FactorStackH,
    pub v: Matrix,
}

/// Draws chi-squared(2) weights and uniform activations and reconstructs
/// the data matrix from them.
pub fn gen_ground_truth(dims: ModelDims, seed: u64) -> Result<GroundTruth> {
    dims.validate()?;
    let mut rng = rng_from_seed(seed);
    let mut w_slices = Vec::with_capacity(dims.m);
    for _ in 0..dims.m {
        w_slices.push(Matrix::from_fn(dims.k, dims.i, |_, _| {
            let a = standard_normal(&mut rng);
            let b = standard_normal(&mut rng);
            a * a + b * b
        }));
    }
    let mut h_slices = Vec::with_capacity(dims.l);
    for _ in 0..dims.l {
        h_slices.push(Matrix::from_fn(dims.i, dims.n, |_, _| rng.gen::<f64>()));
    }
    let w = FactorStackW::new(w_slices)?;
    let h = FactorStackH::new(h_slices)?;
    let v = reconstruct(&w, &h)?;
    Ok(GroundTruth { w, h, v })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleStats {
    pub mean: Vec<f64>,
    /// Population standard deviation.
    pub std: Vec<f64>,
    pub ensemble_size: usize,
}

impl EnsembleStats {
    /// Per-iteration mean and population standard deviation over equally
    /// long traces, accumulated with Welford's recurrence in trace order.
    pub fn from_traces(traces: &[Vec<f64>]) -> Result<Self> {
        let first = traces
            .first()
            .ok_or_else(|| Error::InvalidConfig("no traces to summarize".into()))?;
        let len = first.len();
        if let Some(bad) = traces.iter().position(|t| t.len() != len) {
            return Err(Error::InvalidConfig(format!(
                "trace {bad} has {} entries, expected {len}",
                traces[bad].len()
            )));
        }
        let mut mean = vec![0.0; len];
        let mut m2 = vec![0.0; len];
        for (count, trace) in traces.iter().enumerate() {
            let count = (count + 1) as f64;
            for ((mu, s), &x) in mean.iter_mut().zip(m2.iter_mut()).zip(trace) {
                let delta = x - *mu;
                *mu += delta / count;
                *s += delta * (x - *mu);
            }
        }
        let n = traces.len() as f64;
        let std = m2.iter().map(|s| (s.max(0.0) / n).sqrt()).collect();
        Ok(Self {
            mean,
            std,
            ensemble_size: traces.len(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BetaCurves {
    pub beta: Beta,
    pub stats: EnsembleStats,
}

/// Runs every (matrix, init) pair for one beta and returns the cost traces
/// in (matrix, init) order.
pub fn run_traces(plan: &ExperimentPlan, beta: Beta) -> Result<Vec<Vec<f64>>> {
    plan.validate()?;
    let data: Vec<Matrix> = (0..plan.n_matrices)
        .into_par_iter()
        .map(|j| gen_ground_truth(plan.dims, plan.data_seed(j)).map(|g| g.v))
        .collect::<Result<_>>()?;
    let cfg = plan.solver_config(beta);
    let tag = |matrix, init| {
        move |e: Error| Error::Ensemble {
            beta: beta.value(),
            matrix,
            init,
            source: Box::new(e),
        }
    };
    (0..plan.ensemble_size())
        .into_par_iter()
        .map(|idx| {
            let (j, r) = (idx / plan.n_inits, idx % plan.n_inits);
            let (w0, h0) = init_random(plan.dims, plan.init_seed(j, r)).map_err(tag(j, r))?;
            let out = solve(&data[j], &w0, &h0, &cfg).map_err(tag(j, r))?;
            Ok(out.trace.costs)
        })
        .collect()
}

/// Per-beta ensemble statistics, in the order of `plan.betas`.
pub fn run_ensemble(plan: &ExperimentPlan) -> Result<Vec<BetaCurves>> {
    plan.validate()?;
    plan.betas
        .iter()
        .map(|&beta| {
            let traces = run_traces(plan, beta)?;
            Ok(BetaCurves {
                beta,
                stats: EnsembleStats::from_traces(&traces)?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimingEntry {
    pub beta: f64,
    pub seconds_per_iter: f64,
    /// Relative to `beta = 2`.
    pub ratio: f64,
    pub reference_ratio: Option<f64>,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Median wall time per iteration of a single solve per beta, plus the
/// ratio against `beta = 2`. One warmup solve precedes the measurements.
pub fn timing_report(dims: ModelDims, betas: &[Beta], iters: usize, repeats: usize, seed: u64) -> Result<Vec<TimingEntry>> {
    dims.validate()?;
    let iters = iters.max(1);
    let repeats = repeats.max(1);
    let truth = gen_ground_truth(dims, derive_seed(seed, &[DATA_STREAM, 0]))?;
    let (w0, h0) = init_random(dims, derive_seed(seed, &[INIT_STREAM, 0, 0]))?;

    let measure = |beta: Beta| -> Result<f64> {
        let cfg = SolverConfig {
            beta,
            max_iters: iters,
            ..SolverConfig::default()
        };
        solve(&truth.v, &w0, &h0, &cfg)?;
        let mut samples = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let start = Instant::now();
            solve(&truth.v, &w0, &h0, &cfg)?;
            samples.push(start.elapsed().as_secs_f64() / iters as f64);
        }
        Ok(median(samples))
    };

    let base = measure(Beta::EUCLIDEAN)?;
    betas
        .iter()
        .map(|&beta| {
            let secs = if beta == Beta::EUCLIDEAN { base } else { measure(beta)? };
            let reference_ratio = REFERENCE_TIME_RATIOS
                .iter()
                .find(|(b, _)| *b == beta.value())
                .map(|&(_, r)| r)
                .or((beta == Beta::EUCLIDEAN).then_some(1.0));
            Ok(TimingEntry {
                beta: beta.value(),
                seconds_per_iter: secs,
                ratio: if beta == Beta::EUCLIDEAN { 1.0 } else { secs / base },
                reference_ratio,
            })
        })
        .collect()
}
