//! Reference implementations used as test oracles. They evaluate the model
//! and the divergence entry by entry from the defining sums and share no
//! code path with the library beyond the container types.

#![allow(dead_code)]

use cnmf2d::{FactorStackH, FactorStackW, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Closed-form three-branch divergence, no series, no flooring.
pub fn d_literal(p: f64, q: f64, beta: f64) -> f64 {
    if beta == 0.0 {
        p / q - (p / q).ln() - 1.0
    } else if beta == 1.0 {
        p * (p / q).ln() - p + q
    } else {
        (p.powf(beta) - q.powf(beta)) / (beta * (beta - 1.0)) - (p - q) / (beta - 1.0) * q.powf(beta - 1.0)
    }
}

/// Plain `Vec` copies of the stacks, indexed `w[m][k][i]` and `h[l][i][n]`.
pub struct RawFactors {
    pub w: Vec<Vec<Vec<f64>>>,
    pub h: Vec<Vec<Vec<f64>>>,
}

impl RawFactors {
    pub fn from_stacks(w: &FactorStackW, h: &FactorStackH) -> Self {
        let grab = |m: &Matrix| (0..m.rows()).map(|r| m.row(r).to_vec()).collect::<Vec<_>>();
        Self {
            w: w.slices().iter().map(grab).collect(),
            h: h.slices().iter().map(grab).collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.w[0].len()
    }

    pub fn i(&self) -> usize {
        self.w[0][0].len()
    }

    pub fn n(&self) -> usize {
        self.h[0][0].len()
    }

    /// `u_kn = sum_{l,i,m} w_{k-l,i,m} h_{l,i,n-m}`.
    pub fn reconstruct(&self) -> Vec<Vec<f64>> {
        let (kk, nn, ii) = (self.k(), self.n(), self.i());
        let mut u = vec![vec![0.0; nn]; kk];
        for (k, row) in u.iter_mut().enumerate() {
            for (n, cell) in row.iter_mut().enumerate() {
                for (l, h_l) in self.h.iter().enumerate() {
                    for i in 0..ii {
                        for (m, w_m) in self.w.iter().enumerate() {
                            if k >= l && n >= m {
                                *cell += w_m[k - l][i] * h_l[i][n - m];
                            }
                        }
                    }
                }
            }
        }
        u
    }

    pub fn divergence(&self, v: &Matrix, beta: f64) -> f64 {
        let u = self.reconstruct();
        let mut total = 0.0;
        for (k, row) in u.iter().enumerate() {
            for (n, &q) in row.iter().enumerate() {
                total += d_literal(v[(k, n)], q, beta);
            }
        }
        total
    }

    /// Central differences of the divergence with respect to every weight,
    /// indexed `[m][k][i]`.
    pub fn fd_gradient_w(&self, v: &Matrix, beta: f64, step: f64) -> Vec<Vec<Vec<f64>>> {
        let mut probe = RawFactors {
            w: self.w.clone(),
            h: self.h.clone(),
        };
        let mut out = self.w.clone();
        for m in 0..self.w.len() {
            for k in 0..self.k() {
                for i in 0..self.i() {
                    let x = self.w[m][k][i];
                    probe.w[m][k][i] = x + step;
                    let plus = probe.divergence(v, beta);
                    probe.w[m][k][i] = x - step;
                    let minus = probe.divergence(v, beta);
                    probe.w[m][k][i] = x;
                    out[m][k][i] = (plus - minus) / (2.0 * step);
                }
            }
        }
        out
    }

    /// Central differences with respect to every activation, `[l][i][n]`.
    pub fn fd_gradient_h(&self, v: &Matrix, beta: f64, step: f64) -> Vec<Vec<Vec<f64>>> {
        let mut probe = RawFactors {
            w: self.w.clone(),
            h: self.h.clone(),
        };
        let mut out = self.h.clone();
        for l in 0..self.h.len() {
            for i in 0..self.i() {
                for n in 0..self.n() {
                    let x = self.h[l][i][n];
                    probe.h[l][i][n] = x + step;
                    let plus = probe.divergence(v, beta);
                    probe.h[l][i][n] = x - step;
                    let minus = probe.divergence(v, beta);
                    probe.h[l][i][n] = x;
                    out[l][i][n] = (plus - minus) / (2.0 * step);
                }
            }
        }
        out
    }
}

/// Max-norm relative error `max|a - b| / max|b|` between a stack of library
/// matrices and nested oracle values.
pub fn stack_rel_error(got: &[Matrix], want: &[Vec<Vec<f64>>]) -> f64 {
    let mut err: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (g, w) in got.iter().zip(want) {
        for (r, row) in w.iter().enumerate() {
            for (c, &x) in row.iter().enumerate() {
                err = err.max((g[(r, c)] - x).abs());
                scale = scale.max(x.abs());
            }
        }
    }
    err / scale
}

pub fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(lo..hi))
}

/// Factors and data with every entry uniform on `[lo, hi)`.
pub fn uniform_instance(
    seed: u64,
    dims: (usize, usize, usize, usize, usize),
    lo: f64,
    hi: f64,
) -> (FactorStackW, FactorStackH, Matrix) {
    let (k, n, i, l, m) = dims;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = FactorStackW::new((0..m).map(|_| uniform_matrix(&mut rng, k, i, lo, hi)).collect()).unwrap();
    let h = FactorStackH::new((0..l).map(|_| uniform_matrix(&mut rng, i, n, lo, hi)).collect()).unwrap();
    let v = uniform_matrix(&mut rng, k, n, lo, hi);
    (w, h, v)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
