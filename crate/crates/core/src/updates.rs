//! Multiplicative updates and analytic gradients for the 2D model.
//!
//! For each slice the gradient of the divergence splits into a positive
//! part `P` and a negative part `Q` (`grad = P - Q`), and the update is
//! `X <- X * Q / P`. For the weights
//!
//! ```text
//! P_m = sum_l up(U^(b-1), l) * right(H_l, m)^T
//! Q_m = sum_l up(V * U^(b-2), l) * right(H_l, m)^T
//! ```
//!
//! and for the activations
//!
//! ```text
//! P_l = sum_m down(W_m, l)^T * left(U^(b-1), m)
//! Q_l = sum_m down(W_m, l)^T * left(V * U^(b-2), m)
//! ```
//!
//! Powers are taken before shifting. Positions vacated by a shift carry no
//! term of the chain rule and must stay zero, which they would not if the
//! floor-guarded power of a zero were taken after shifting.
//!
//! All slices of one sweep read the same `U`; callers refresh `U` between
//! the weight sweep and the activation sweep.

use crate::divergence::{Beta, DEFAULT_FLOOR};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{check_compatible, FactorStackH, FactorStackW};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateOptions {
    pub beta: Beta,
    /// Floor for negative powers of `U` and for the denominators.
    pub floor: f64,
    /// Use the unshifted `U` in the positive part, as in the earlier
    /// Kullback-Leibler deconvolution updates. Only honored at `beta = 1`.
    pub legacy_unshifted_u: bool,
}

impl UpdateOptions {
    pub fn new(beta: Beta, floor: f64, legacy_unshifted_u: bool) -> Result<Self> {
        let opts = Self {
            beta,
            floor,
            legacy_unshifted_u,
        };
        opts.validate()?;
        Ok(opts)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.floor >= 0.0) || !self.floor.is_finite() {
            return Err(Error::InvalidConfig(format!("floor must be finite and >= 0, got {}", self.floor)));
        }
        if self.beta.value() < 2.0 && self.floor == 0.0 {
            return Err(Error::InvalidConfig("floor must be positive when beta < 2".into()));
        }
        Ok(())
    }

    fn legacy_active(&self) -> bool {
        self.legacy_unshifted_u && self.beta.value() == 1.0
    }
}

impl Default for UpdateOptions {
    fn default() -> Self {
        Self {
            beta: Beta::KULLBACK_LEIBLER,
            floor: DEFAULT_FLOOR,
            legacy_unshifted_u: false,
        }
    }
}

/// Positive and negative gradient parts, one pair per slice.
#[derive(Clone, Debug)]
pub struct GradientParts {
    pub positive: Vec<Matrix>,
    pub negative: Vec<Matrix>,
}

impl GradientParts {
    /// `positive - negative`, slice by slice.
    pub fn gradient(&self) -> Vec<Matrix> {
        self.positive
            .iter()
            .zip(&self.negative)
            .map(|(p, q)| p.sub(q).expect("parts share shapes"))
            .collect()
    }

    /// `x * negative / max(positive, floor)`, slice by slice.
    fn apply(&self, slices: &[Matrix], floor: f64) -> Vec<Matrix> {
        slices
            .iter()
            .zip(self.positive.iter().zip(&self.negative))
            .map(|(x, (p, q))| {
                Matrix::from_fn(x.rows(), x.cols(), |r, c| {
                    let value = x[(r, c)] * q[(r, c)] / p[(r, c)].max(floor);
                    value.max(0.0)
                })
            })
            .collect()
    }
}

struct Powers {
    /// `U^(b-1)`
    u_pos: Matrix,
    /// `V * U^(b-2)`
    v_neg: Matrix,
}

fn powers(w: &FactorStackW, h: &FactorStackH, v: &Matrix, u: &Matrix, opts: &UpdateOptions) -> Result<Powers> {
    opts.validate()?;
    check_compatible(w, h)?;
    let expected = (w.k(), h.n());
    for (what, x) in [("data matrix", v), ("reconstruction", u)] {
        if x.shape() != expected {
            return Err(Error::DimensionMismatch {
                op: what,
                left: expected,
                right: x.shape(),
            });
        }
    }
    let b = opts.beta.value();
    Ok(Powers {
        u_pos: u.elem_pow(b - 1.0, opts.floor),
        v_neg: v.hadamard(&u.elem_pow(b - 2.0, opts.floor))?,
    })
}

/// Gradient parts with respect to every weight slice `W_m`.
pub fn weight_parts(
    w: &FactorStackW,
    h: &FactorStackH,
    v: &Matrix,
    u: &Matrix,
    opts: &UpdateOptions,
) -> Result<GradientParts> {
    let pw = powers(w, h, v, u, opts)?;
    let legacy = opts.legacy_active();
    let lanes: Vec<(Matrix, Matrix)> = (0..h.l())
        .map(|l| {
            let pos = if legacy { pw.u_pos.clone() } else { pw.u_pos.shift_up(l) };
            (pos, pw.v_neg.shift_up(l))
        })
        .collect();

    let mut positive = Vec::with_capacity(w.m());
    let mut negative = Vec::with_capacity(w.m());
    for m in 0..w.m() {
        let mut p = Matrix::zeros(w.k(), w.i());
        let mut q = Matrix::zeros(w.k(), w.i());
        for ((pos, neg), h_l) in lanes.iter().zip(h.slices()) {
            let shifted = h_l.shift_right(m);
            p.add_assign(&pos.matmul_transposed(&shifted)?)?;
            q.add_assign(&neg.matmul_transposed(&shifted)?)?;
        }
        positive.push(p);
        negative.push(q);
    }
    Ok(GradientParts { positive, negative })
}

/// Gradient parts with respect to every activation slice `H_l`.
pub fn activation_parts(
    w: &FactorStackW,
    h: &FactorStackH,
    v: &Matrix,
    u: &Matrix,
    opts: &UpdateOptions,
) -> Result<GradientParts> {
    let pw = powers(w, h, v, u, opts)?;
    let legacy = opts.legacy_active();
    let lanes: Vec<(Matrix, Matrix)> = (0..w.m())
        .map(|m| {
            let pos = if legacy { pw.u_pos.clone() } else { pw.u_pos.shift_left(m) };
            (pos, pw.v_neg.shift_left(m))
        })
        .collect();

    let mut positive = Vec::with_capacity(h.l());
    let mut negative = Vec::with_capacity(h.l());
    for l in 0..h.l() {
        let mut p = Matrix::zeros(h.i(), h.n());
        let mut q = Matrix::zeros(h.i(), h.n());
        for ((pos, neg), w_m) in lanes.iter().zip(w.slices()) {
            let shifted = w_m.shift_down(l);
            p.add_assign(&shifted.transposed_matmul(pos)?)?;
            q.add_assign(&shifted.transposed_matmul(neg)?)?;
        }
        positive.push(p);
        negative.push(q);
    }
    Ok(GradientParts { positive, negative })
}

/// One multiplicative sweep over all weight slices, using the supplied `U`.
pub fn update_w(
    w: &FactorStackW,
    h: &FactorStackH,
    v: &Matrix,
    u: &Matrix,
    opts: &UpdateOptions,
) -> Result<FactorStackW> {
    let parts = weight_parts(w, h, v, u, opts)?;
    FactorStackW::new(parts.apply(w.slices(), opts.floor))
}

/// One multiplicative sweep over all activation slices, using the supplied `U`.
pub fn update_h(
    w: &FactorStackW,
    h: &FactorStackH,
    v: &Matrix,
    u: &Matrix,
    opts: &UpdateOptions,
) -> Result<FactorStackH> {
    let parts = activation_parts(w, h, v, u, opts)?;
    FactorStackH::new(parts.apply(h.slices(), opts.floor))
}

/// `dD/dw_kim`, one `K x I` matrix per slice `m`.
pub fn gradient_w(
    w: &FactorStackW,
    h: &FactorStackH,
    v: &Matrix,
    u: &Matrix,
    opts: &UpdateOptions,
) -> Result<Vec<Matrix>> {
    Ok(weight_parts(w, h, v, u, opts)?.gradient())
}

/// `dD/dh_lin`, one `I x N` matrix per slice `l`.
pub fn gradient_h(
    w: &FactorStackW,
    h: &FactorStackH,
    v: &Matrix,
    u: &Matrix,
    opts: &UpdateOptions,
) -> Result<Vec<Matrix>> {
    Ok(activation_parts(w, h, v, u, opts)?.gradient())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::divergence;
    use crate::model::{init_random, reconstruct, ModelDims};

    fn opts(beta: f64) -> UpdateOptions {
        UpdateOptions::new(Beta::new(beta).unwrap(), DEFAULT_FLOOR, false).unwrap()
    }

    fn instance(seed: u64) -> (FactorStackW, FactorStackH, Matrix) {
        let dims = ModelDims::new(4, 6, 2, 2, 2).unwrap();
        let (w, h) = init_random(dims, seed).unwrap();
        let (wt, ht) = init_random(dims, seed ^ 0xABCD).unwrap();
        let v = reconstruct(&wt, &ht).unwrap();
        (w, h, v)
    }

    fn max_rel(a: &[Matrix], b: &[Matrix]) -> f64 {
        a.iter()
            .zip(b)
            .flat_map(|(x, y)| x.iter().zip(y.iter()).map(|(p, q)| (p - q).abs() / q.abs().max(1e-300)))
            .fold(0.0, f64::max)
    }

    #[test]
    fn options_validation() {
        assert!(UpdateOptions::new(Beta::ITAKURA_SAITO, 0.0, false).is_err());
        assert!(UpdateOptions::new(Beta::EUCLIDEAN, 0.0, false).is_ok());
        assert!(UpdateOptions::new(Beta::EUCLIDEAN, -1.0, false).is_err());
    }

    #[test]
    fn exact_data_is_a_fixed_point() {
        let (w, h, _) = instance(1);
        let u = reconstruct(&w, &h).unwrap();
        for beta in [0.0, 0.5, 1.0, 1.5, 2.0] {
            let w2 = update_w(&w, &h, &u, &u, &opts(beta)).unwrap();
            let h2 = update_h(&w, &h, &u, &u, &opts(beta)).unwrap();
            assert!(max_rel(w2.slices(), w.slices()) < 1e-12, "beta={beta}");
            assert!(max_rel(h2.slices(), h.slices()) < 1e-12, "beta={beta}");
            for g in gradient_w(&w, &h, &u, &u, &opts(beta)).unwrap() {
                assert!(g.max_abs() < 1e-12);
            }
            for g in gradient_h(&w, &h, &u, &u, &opts(beta)).unwrap() {
                assert!(g.max_abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unit_support_reduces_to_classic_rules() {
        let dims = ModelDims::new(5, 7, 3, 1, 1).unwrap();
        let (w, h) = init_random(dims, 9).unwrap();
        let (wt, ht) = init_random(dims, 10).unwrap();
        let v = reconstruct(&wt, &ht).unwrap();
        let u = reconstruct(&w, &h).unwrap();
        let (w0, h0) = (&w.slices()[0], &h.slices()[0]);

        // Euclidean: W <- W * (V H^T) / (U H^T)
        let num = v.matmul(&h0.transpose()).unwrap();
        let den = u.matmul(&h0.transpose()).unwrap();
        let expect = Matrix::from_fn(5, 3, |r, c| w0[(r, c)] * num[(r, c)] / den[(r, c)]);
        let got = update_w(&w, &h, &v, &u, &opts(2.0)).unwrap();
        assert!(max_rel(got.slices(), &[expect]) < 1e-13);

        // Kullback-Leibler: H <- H * W^T (V / U) / W^T 1
        let ratio = Matrix::from_fn(5, 7, |r, c| v[(r, c)] / u[(r, c)]);
        let num = w0.transpose().matmul(&ratio).unwrap();
        let den = w0.transpose().matmul(&Matrix::ones(5, 7)).unwrap();
        let expect = Matrix::from_fn(3, 7, |r, c| h0[(r, c)] * num[(r, c)] / den[(r, c)]);
        let got = update_h(&w, &h, &v, &u, &opts(1.0)).unwrap();
        assert!(max_rel(got.slices(), &[expect]) < 1e-13);
    }

    #[test]
    fn single_updates_decrease_cost() {
        let (w, h, v) = instance(77);
        let o = opts(1.5);
        let u = reconstruct(&w, &h).unwrap();
        let before = divergence(&v, &u, o.beta, o.floor).unwrap();
        let w2 = update_w(&w, &h, &v, &u, &o).unwrap();
        let after_w = divergence(&v, &reconstruct(&w2, &h).unwrap(), o.beta, o.floor).unwrap();
        assert!(after_w < before);
        let h2 = update_h(&w, &h, &v, &u, &o).unwrap();
        let after_h = divergence(&v, &reconstruct(&w, &h2).unwrap(), o.beta, o.floor).unwrap();
        assert!(after_h < before);
    }

    #[test]
    fn update_equals_ratio_of_gradient_parts() {
        let (w, h, v) = instance(5);
        let u = reconstruct(&w, &h).unwrap();
        for beta in [0.0, 1.0, 2.0] {
            let o = opts(beta);
            let parts = activation_parts(&w, &h, &v, &u, &o).unwrap();
            let grad = gradient_h(&w, &h, &v, &u, &o).unwrap();
            for ((g, p), q) in grad.iter().zip(&parts.positive).zip(&parts.negative) {
                assert!(g.sub(&p.sub(q).unwrap()).unwrap().max_abs() == 0.0);
            }
            let updated = update_h(&w, &h, &v, &u, &o).unwrap();
            let by_ratio: Vec<Matrix> = h
                .slices()
                .iter()
                .enumerate()
                .map(|(l, x)| {
                    let (p, q) = (&parts.positive[l], &parts.negative[l]);
                    Matrix::from_fn(x.rows(), x.cols(), |r, c| x[(r, c)] * (q[(r, c)] / p[(r, c)]))
                })
                .collect();
            assert!(max_rel(updated.slices(), &by_ratio) < 1e-14);
        }
    }

    #[test]
    fn legacy_mode_only_changes_kullback_leibler() {
        let (w, h, v) = instance(3);
        let u = reconstruct(&w, &h).unwrap();
        for beta in [0.0, 2.0] {
            let exact = opts(beta);
            let legacy = UpdateOptions {
                legacy_unshifted_u: true,
                ..exact
            };
            assert_eq!(update_w(&w, &h, &v, &u, &exact).unwrap(), update_w(&w, &h, &v, &u, &legacy).unwrap());
        }
        let exact = opts(1.0);
        let legacy = UpdateOptions {
            legacy_unshifted_u: true,
            ..exact
        };
        let a = update_w(&w, &h, &v, &u, &exact).unwrap();
        let b = update_w(&w, &h, &v, &u, &legacy).unwrap();
        let diff = a.slices().iter().zip(b.slices()).map(|(x, y)| x.sub(y).unwrap().max_abs()).fold(0.0, f64::max);
        assert!(diff > 0.0);
    }

    #[test]
    fn itakura_saito_ratio_is_scale_free() {
        let (w, h, v) = instance(21);
        let o = opts(0.0);
        let u = reconstruct(&w, &h).unwrap();
        let ratio = |parts: GradientParts| -> Vec<Matrix> {
            parts
                .positive
                .iter()
                .zip(&parts.negative)
                .map(|(p, q)| Matrix::from_fn(p.rows(), p.cols(), |r, c| q[(r, c)] / p[(r, c)]))
                .collect()
        };
        let base = ratio(weight_parts(&w, &h, &v, &u, &o).unwrap());
        let c = 7.3;
        let hc = FactorStackH::new(h.slices().iter().map(|s| s.scale(c)).collect()).unwrap();
        let uc = reconstruct(&w, &hc).unwrap();
        let scaled = ratio(weight_parts(&w, &hc, &v.scale(c), &uc, &o).unwrap());
        assert!(max_rel(&scaled, &base) < 1e-10);
    }

    #[test]
    fn shape_errors() {
        let (w, h, v) = instance(2);
        let bad = Matrix::ones(3, 6);
        assert!(update_w(&w, &h, &bad, &v, &opts(1.0)).is_err());
        assert!(update_h(&w, &h, &v, &bad, &opts(1.0)).is_err());
    }
}
