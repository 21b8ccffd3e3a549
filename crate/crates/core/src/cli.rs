//! Command-line front end: `generate`, `factorize`, `evaluate`, `simulate`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::divergence::{Beta, DEFAULT_FLOOR};
use crate::error::{Error, Result};
use crate::io::{
    load_factors, read_nonnegative_csv, save_factors, write_curves_csv, write_manifest, write_matrix_csv,
    write_trace_csv, Manifest, MANIFEST_FILE,
};
use crate::model::{dims_of, init_random, normalize, ModelDims};
use crate::rng::PRNG_ID;
use crate::simulation::{gen_ground_truth, run_ensemble, timing_report, ExperimentPlan, TimingEntry};
use crate::solver::{cost_at, solve, ConvergenceTrace, SolverConfig};

/// Exit code for usage, parse and I/O errors.
pub const EXIT_USAGE: i32 = 1;
/// Exit code for numerical aborts.
pub const EXIT_NUMERICAL: i32 = 2;

pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_USAGE
    }
}

#[derive(Debug, Parser)]
#[command(name = "cnmf2d", version, about = "2D convolutional NMF with beta-divergence multiplicative updates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic data matrix and its ground-truth factors
    Generate(GenerateArgs),
    /// Factorize a data matrix
    Factorize(FactorizeArgs),
    /// Print the divergence between a data matrix and stored factors
    Evaluate(EvaluateArgs),
    /// Run the ensemble convergence experiment
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DimArgs {
    /// Visible variables (rows of V)
    #[arg(long = "K", default_value_t = 10)]
    pub k: usize,
    /// Observations (columns of V)
    #[arg(long = "N", default_value_t = 25)]
    pub n: usize,
    /// Rank
    #[arg(short = 'I', long = "rank", default_value_t = 5)]
    pub rank: usize,
    /// Vertical (row-shift) support
    #[arg(long = "L", default_value_t = 2)]
    pub l: usize,
    /// Horizontal (column-shift) support
    #[arg(long = "M", default_value_t = 2)]
    pub m: usize,
}

impl DimArgs {
    fn dims(&self) -> Result<ModelDims> {
        ModelDims::new(self.k, self.n, self.rank, self.l, self.m)
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub dims: DimArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub outdir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FactorizeArgs {
    /// Data matrix CSV
    #[arg(long)]
    pub input: PathBuf,
    #[arg(short = 'I', long = "rank", default_value_t = 5)]
    pub rank: usize,
    #[arg(long = "L", default_value_t = 2)]
    pub l: usize,
    #[arg(long = "M", default_value_t = 2)]
    pub m: usize,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub beta: f64,
    #[arg(long, default_value_t = 300)]
    pub iters: usize,
    #[arg(long, default_value_t = 0.0)]
    pub tol: f64,
    /// Seed for the random initialization
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_FLOOR)]
    pub floor: f64,
    /// Normalize the returned factors to unit p-norm components
    #[arg(long, value_name = "P")]
    pub normalize: Option<f64>,
    /// Also normalize inside the loop every N iterations (needs --normalize)
    #[arg(long, value_name = "N", requires = "normalize")]
    pub normalize_every: Option<usize>,
    /// Use the unshifted reconstruction in the positive part (beta = 1 only)
    #[arg(long)]
    pub legacy_kl: bool,
    #[arg(long)]
    pub outdir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Directory holding W_m*.csv / H_l*.csv
    #[arg(long)]
    pub factors: PathBuf,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub beta: f64,
    #[arg(long, default_value_t = DEFAULT_FLOOR)]
    pub floor: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub dims: DimArgs,
    /// Comma-separated list of betas
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 1.0, 2.0], allow_negative_numbers = true)]
    pub betas: Vec<f64>,
    /// Distinct data matrices
    #[arg(long, default_value_t = 10)]
    pub matrices: usize,
    /// Initializations per data matrix
    #[arg(long, default_value_t = 3)]
    pub inits: usize,
    #[arg(long, default_value_t = 300)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_FLOOR)]
    pub floor: f64,
    /// Iterations per timed solve
    #[arg(long, default_value_t = 50)]
    pub timing_iters: usize,
    #[arg(long, default_value_t = 5)]
    pub timing_repeats: usize,
    /// Skip the timing report
    #[arg(long)]
    pub no_timing: bool,
    #[arg(long)]
    pub outdir: PathBuf,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(args) => cmd_generate(&args),
        Command::Factorize(args) => cmd_factorize(&args).map(|_| ()),
        Command::Evaluate(args) => {
            let cost = cmd_evaluate(&args)?;
            println!("{}", crate::io::format_f64(cost));
            Ok(())
        }
        Command::Simulate(args) => cmd_simulate(&args).map(|_| ()),
    }
}

/// Writes `V.csv`, the ground-truth slices and a manifest.
pub fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let dims = args.dims.dims()?;
    let truth = gen_ground_truth(dims, args.seed)?;
    create_dir(&args.outdir)?;
    write_matrix_csv(&args.outdir.join("V.csv"), &truth.v)?;
    save_factors(&args.outdir, &truth.w, &truth.h)?;
    let manifest = Manifest {
        command: "generate".into(),
        k: dims.k,
        n: dims.n,
        i: dims.i,
        l: dims.l,
        m: dims.m,
        seed: args.seed,
        prng: PRNG_ID.into(),
        floor: DEFAULT_FLOOR,
        ..Manifest::default()
    };
    write_manifest(&args.outdir.join(MANIFEST_FILE), &manifest)?;
    info!("wrote {}x{} data matrix to {}", dims.k, dims.n, args.outdir.display());
    Ok(())
}

/// Factorizes `--input` and writes the factors, `trace.csv` and a manifest.
pub fn cmd_factorize(args: &FactorizeArgs) -> Result<ConvergenceTrace> {
    let v = read_nonnegative_csv(&args.input)?;
    let dims = ModelDims::new(v.rows(), v.cols(), args.rank, args.l, args.m)?;
    let cfg = SolverConfig {
        beta: Beta::new(args.beta)?,
        max_iters: args.iters,
        tol: args.tol,
        floor: args.floor,
        normalize_every: args.normalize_every,
        norm_order: args.normalize.unwrap_or(2.0),
        legacy: args.legacy_kl,
        seed: args.seed,
    };
    cfg.validate()?;
    if !cfg.beta.is_validated() {
        log::warn!("beta = {} lies outside [0, 2]; descent is unvalidated there", cfg.beta);
    }
    let (w0, h0) = init_random(dims, args.seed)?;
    let mut out = solve(&v, &w0, &h0, &cfg)?;
    if let Some(p) = args.normalize {
        (out.w, out.h) = normalize(&out.w, &out.h, p)?;
    }

    create_dir(&args.outdir)?;
    save_factors(&args.outdir, &out.w, &out.h)?;
    write_trace_csv(&args.outdir.join("trace.csv"), &out.trace)?;
    let manifest = Manifest {
        command: "factorize".into(),
        k: dims.k,
        n: dims.n,
        i: dims.i,
        l: dims.l,
        m: dims.m,
        beta: Some(args.beta),
        seed: args.seed,
        iterations: out.trace.iterations_run(),
        floor: args.floor,
        normalized: args.normalize.is_some(),
        p: args.normalize,
        legacy: args.legacy_kl,
        prng: PRNG_ID.into(),
        tol: Some(args.tol),
        stopped_early: Some(out.trace.stopped_early),
        final_cost: Some(out.trace.final_cost),
        ..Manifest::default()
    };
    write_manifest(&args.outdir.join(MANIFEST_FILE), &manifest)?;
    println!(
        "iterations: {}  initial cost: {:e}  final cost: {:e}{}",
        out.trace.iterations_run(),
        out.trace.costs[0],
        out.trace.final_cost,
        if out.trace.stopped_early { "  (stopped early)" } else { "" }
    );
    Ok(out.trace)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<f64> {
    let v = read_nonnegative_csv(&args.input)?;
    let (w, h) = load_factors(&args.factors)?;
    let dims = dims_of(&w, &h)?;
    if (dims.k, dims.n) != v.shape() {
        return Err(Error::DimensionMismatch {
            op: "evaluate",
            left: (dims.k, dims.n),
            right: v.shape(),
        });
    }
    cost_at(&v, &w, &h, Beta::new(args.beta)?, args.floor)
}

/// File name of the curves for one beta, e.g. `curves_beta0.5.csv`.
pub fn curves_file_name(beta: Beta) -> String {
    format!("curves_beta{beta}.csv")
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<Option<Vec<TimingEntry>>> {
    let plan = ExperimentPlan {
        dims: args.dims.dims()?,
        betas: args.betas.iter().map(|&b| Beta::new(b)).collect::<Result<_>>()?,
        n_matrices: args.matrices,
        n_inits: args.inits,
        iters: args.iters,
        master_seed: args.seed,
        floor: args.floor,
    };
    plan.validate()?;
    create_dir(&args.outdir)?;

    let curves = run_ensemble(&plan)?;
    for c in &curves {
        write_curves_csv(&args.outdir.join(curves_file_name(c.beta)), &c.stats)?;
        println!(
            "beta={}: mean cost {:e} -> {:e}, std {:e} -> {:e}",
            c.beta,
            c.stats.mean[0],
            c.stats.mean.last().copied().unwrap_or(f64::NAN),
            c.stats.std[0],
            c.stats.std.last().copied().unwrap_or(f64::NAN),
        );
    }

    let timing = if args.no_timing {
        None
    } else {
        let report = timing_report(plan.dims, &plan.betas, args.timing_iters, args.timing_repeats, args.seed)?;
        let mut text = String::from("beta,seconds_per_iter,ratio_to_beta2,reference_ratio\n");
        for e in &report {
            let reference = e.reference_ratio.map(|r| r.to_string()).unwrap_or_default();
            text.push_str(&format!("{},{:e},{:.4},{}\n", e.beta, e.seconds_per_iter, e.ratio, reference));
            println!(
                "beta={}: {:.3e} s/iter, {:.3}x of beta=2{}",
                e.beta,
                e.seconds_per_iter,
                e.ratio,
                e.reference_ratio.map(|r| format!(" (reference {r})")).unwrap_or_default()
            );
        }
        let path = args.outdir.join("timing.csv");
        fs::write(&path, text).map_err(|source| Error::Io { path, source })?;
        Some(report)
    };

    let manifest = Manifest {
        command: "simulate".into(),
        k: plan.dims.k,
        n: plan.dims.n,
        i: plan.dims.i,
        l: plan.dims.l,
        m: plan.dims.m,
        betas: Some(args.betas.clone()),
        seed: args.seed,
        iterations: args.iters,
        floor: args.floor,
        prng: PRNG_ID.into(),
        tol: Some(0.0),
        n_matrices: Some(args.matrices),
        n_inits: Some(args.inits),
        ..Manifest::default()
    };
    write_manifest(&args.outdir.join(MANIFEST_FILE), &manifest)?;
    Ok(timing)
}
