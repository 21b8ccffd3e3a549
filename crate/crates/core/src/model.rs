//! The two-dimensional convolutional factor model.
//!
//! The reconstruction is
//!
//! ```text
//! U = sum_{l<L} sum_{m<M} down(W_m, l) * right(H_l, m)
//! ```
//!
//! with `W_m` of shape `K x I` and `H_l` of shape `I x N`, i.e.
//! `u_kn = sum_{l,i,m} w_{k-l,i,m} h_{l,i,n-m}` with out-of-range terms
//! dropped.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::rng_from_seed;

/// Lower end of the uniform initialization interval `(INIT_LOW, 1]`.
pub const INIT_LOW: f64 = 1e-3;

/// Problem sizes: `K` visible rows, `N` observations, rank `I`, vertical
/// support `L` and horizontal support `M`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "I")]
    pub i: usize,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "M")]
    pub m: usize,
}

impl ModelDims {
    pub fn new(k: usize, n: usize, i: usize, l: usize, m: usize) -> Result<Self> {
        let dims = ModelDims { k, n, i, l, m };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("K", self.k), ("N", self.n), ("I", self.i), ("L", self.l), ("M", self.m)] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

fn check_slices(what: &'static str, slices: &[Matrix]) -> Result<(usize, usize)> {
    let first = slices
        .first()
        .ok_or_else(|| Error::InvalidConfig(format!("{what} stack needs at least one slice")))?;
    for s in slices {
        if s.shape() != first.shape() {
            return Err(Error::DimensionMismatch {
                op: what,
                left: first.shape(),
                right: s.shape(),
            });
        }
        s.check_nonnegative()?;
    }
    Ok(first.shape())
}

/// Weight slices `W_0 .. W_{M-1}`, each `K x I`.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorStackW {
    slices: Vec<Matrix>,
}

impl FactorStackW {
    pub fn new(slices: Vec<Matrix>) -> Result<Self> {
        check_slices("weight stack", &slices)?;
        Ok(Self { slices })
    }

    pub fn slices(&self) -> &[Matrix] {
        &self.slices
    }

    pub fn into_slices(self) -> Vec<Matrix> {
        self.slices
    }

    pub fn k(&self) -> usize {
        self.slices[0].rows()
    }

    pub fn i(&self) -> usize {
        self.slices[0].cols()
    }

    pub fn m(&self) -> usize {
        self.slices.len()
    }

    pub fn is_finite(&self) -> bool {
        self.slices.iter().all(Matrix::is_finite)
    }

    /// Per-component norms `(sum_{k,m} w_kim^p)^(1/p)`.
    pub fn component_norms(&self, p: f64) -> Vec<f64> {
        (0..self.i())
            .map(|i| {
                let s: f64 = self
                    .slices
                    .iter()
                    .flat_map(|w| (0..w.rows()).map(move |k| w[(k, i)]))
                    .map(|v| v.powf(p))
                    .sum();
                s.powf(1.0 / p)
            })
            .collect()
    }
}

/// Activation slices `H_0 .. H_{L-1}`, each `I x N`.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorStackH {
    slices: Vec<Matrix>,
}

impl FactorStackH {
    pub fn new(slices: Vec<Matrix>) -> Result<Self> {
        check_slices("activation stack", &slices)?;
        Ok(Self { slices })
    }

    pub fn slices(&self) -> &[Matrix] {
        &self.slices
    }

    pub fn into_slices(self) -> Vec<Matrix> {
        self.slices
    }

    pub fn i(&self) -> usize {
        self.slices[0].rows()
    }

    pub fn n(&self) -> usize {
        self.slices[0].cols()
    }

    pub fn l(&self) -> usize {
        self.slices.len()
    }

    pub fn is_finite(&self) -> bool {
        self.slices.iter().all(Matrix::is_finite)
    }
}

pub(crate) fn check_compatible(w: &FactorStackW, h: &FactorStackH) -> Result<()> {
    if w.i() != h.i() {
        return Err(Error::DimensionMismatch {
            op: "reconstruct",
            left: w.slices[0].shape(),
            right: h.slices[0].shape(),
        });
    }
    Ok(())
}

/// Dimensions implied by a pair of stacks.
pub fn dims_of(w: &FactorStackW, h: &FactorStackH) -> Result<ModelDims> {
    check_compatible(w, h)?;
    Ok(ModelDims {
        k: w.k(),
        n: h.n(),
        i: w.i(),
        l: h.l(),
        m: w.m(),
    })
}

/// `U = sum_l sum_m down(W_m, l) * right(H_l, m)`, a `K x N` matrix.
pub fn reconstruct(w: &FactorStackW, h: &FactorStackH) -> Result<Matrix> {
    check_compatible(w, h)?;
    let mut u = Matrix::zeros(w.k(), h.n());
    for (l, h_l) in h.slices.iter().enumerate() {
        if l >= w.k() {
            break;
        }
        for (m, w_m) in w.slices.iter().enumerate() {
            if m >= h.n() {
                break;
            }
            let term = w_m.shift_down(l).matmul(&h_l.shift_right(m))?;
            u.add_assign(&term)?;
        }
    }
    Ok(u)
}

/// Rescales the stacks so that every component `W_i` (all `K` rows across
/// all `M` slices) has unit `p`-norm, compensating in `H`. The product is
/// unchanged: `W_m <- W_m B`, `H_l <- B^-1 H_l` with `B = diag(1/||W_i||_p)`.
pub fn normalize(w: &FactorStackW, h: &FactorStackH, p: f64) -> Result<(FactorStackW, FactorStackH)> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::InvalidConfig(format!("norm order must be >= 1, got {p}")));
    }
    check_compatible(w, h)?;
    let norms = w.component_norms(p);
    if let Some(index) = norms.iter().position(|&n| !(n > 0.0) || !n.is_finite()) {
        return Err(Error::DeadComponent { index });
    }
    let w_slices = w
        .slices
        .iter()
        .map(|s| Matrix::from_fn(s.rows(), s.cols(), |k, i| s[(k, i)] / norms[i]))
        .collect();
    let h_slices = h
        .slices
        .iter()
        .map(|s| Matrix::from_fn(s.rows(), s.cols(), |i, n| s[(i, n)] * norms[i]))
        .collect();
    Ok((FactorStackW { slices: w_slices }, FactorStackH { slices: h_slices }))
}

/// Strictly positive random factors, uniform on `(INIT_LOW, 1]`.
///
/// The `W` slices are drawn first, then the `H` slices, each in row-major
/// order.
pub fn init_random(dims: ModelDims, seed: u64) -> Result<(FactorStackW, FactorStackH)> {
    dims.validate()?;
    let mut rng = rng_from_seed(seed);
    let mut draw = |rows, cols| {
        Matrix::from_fn(rows, cols, |_, _| 1.0 - (1.0 - INIT_LOW) * rng.gen::<f64>())
    };
    let w = (0..dims.m).map(|_| draw(dims.k, dims.i)).collect();
    let h = (0..dims.l).map(|_| draw(dims.i, dims.n)).collect();
    Ok((FactorStackW { slices: w }, FactorStackH { slices: h }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn col(values: &[f64]) -> Matrix {
        Matrix::new(values.len(), 1, values.to_vec()).unwrap()
    }

    fn row(values: &[f64]) -> Matrix {
        Matrix::new(1, values.len(), values.to_vec()).unwrap()
    }

    /// Direct evaluation of `u_kn = sum_{l,i,m} w_{k-l,i,m} h_{l,i,n-m}`.
    fn quadruple_loop(w: &FactorStackW, h: &FactorStackH) -> Matrix {
        Matrix::from_fn(w.k(), h.n(), |k, n| {
            let mut s = 0.0;
            for l in 0..h.l() {
                for i in 0..w.i() {
                    for m in 0..w.m() {
                        if k >= l && n >= m {
                            s += w.slices()[m][(k - l, i)] * h.slices()[l][(i, n - m)];
                        }
                    }
                }
            }
            s
        })
    }

    #[test]
    fn two_by_two_example_matches_brute_force() {
        let w = FactorStackW::new(vec![col(&[1., 2.]), col(&[3., 4.])]).unwrap();
        let h = FactorStackH::new(vec![row(&[5., 6.]), row(&[7., 8.])]).unwrap();
        let oracle = quadruple_loop(&w, &h);
        let expected = Matrix::from_rows(&[[5., 21.], [17., 61.]]).unwrap();
        assert_eq!(oracle, expected);
        assert_eq!(reconstruct(&w, &h).unwrap(), expected);
    }

    #[test]
    fn single_term_is_plain_product() {
        let dims = ModelDims::new(4, 7, 3, 1, 1).unwrap();
        let (w, h) = init_random(dims, 3).unwrap();
        let plain = w.slices()[0].matmul(&h.slices()[0]).unwrap();
        assert_eq!(reconstruct(&w, &h).unwrap(), plain);
    }

    #[test]
    fn one_dimensional_case_uses_only_column_shifts() {
        let dims = ModelDims::new(3, 6, 2, 1, 3).unwrap();
        let (w, h) = init_random(dims, 5).unwrap();
        let mut u = Matrix::zeros(3, 6);
        for (m, w_m) in w.slices().iter().enumerate() {
            u.add_assign(&w_m.matmul(&h.slices()[0].shift_right(m)).unwrap()).unwrap();
        }
        assert_eq!(reconstruct(&w, &h).unwrap(), u);
    }

    #[test]
    fn rank_mismatch_is_rejected() {
        let w = FactorStackW::new(vec![Matrix::ones(3, 2)]).unwrap();
        let h = FactorStackH::new(vec![Matrix::ones(3, 4)]).unwrap();
        assert!(matches!(reconstruct(&w, &h), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn stacks_reject_bad_slices() {
        assert!(FactorStackW::new(vec![]).is_err());
        assert!(FactorStackW::new(vec![Matrix::ones(2, 2), Matrix::ones(2, 3)]).is_err());
        let neg = Matrix::new(1, 2, vec![1.0, -1.0]).unwrap();
        assert!(FactorStackH::new(vec![neg]).is_err());
    }

    #[test]
    fn normalize_example() {
        let w = FactorStackW::new(vec![col(&[3., 4.])]).unwrap();
        let h = FactorStackH::new(vec![row(&[1., 2., 0.5])]).unwrap();
        let (w2, h2) = normalize(&w, &h, 2.0).unwrap();
        assert_eq!(w2.slices()[0], col(&[0.6, 0.8]));
        assert_eq!(h2.slices()[0], row(&[5., 10., 2.5]));
        let (w3, h3) = normalize(&w2, &h2, 2.0).unwrap();
        assert_eq!(w3, w2);
        assert_eq!(h3, h2);
    }

    #[test]
    fn normalize_reports_dead_component() {
        let w = FactorStackW::new(vec![Matrix::from_rows(&[[1.0, 0.0], [2.0, 0.0]]).unwrap()]).unwrap();
        let h = FactorStackH::new(vec![Matrix::ones(2, 3)]).unwrap();
        assert!(matches!(normalize(&w, &h, 2.0), Err(Error::DeadComponent { index: 1 })));
        assert!(normalize(&w, &h, 0.5).is_err());
    }

    #[test]
    fn init_is_deterministic_and_positive() {
        let dims = ModelDims::new(10, 25, 5, 2, 2).unwrap();
        let a = init_random(dims, 11).unwrap();
        let b = init_random(dims, 11).unwrap();
        let c = init_random(dims, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, c.0);
        for s in a.0.slices().iter().chain(a.1.slices()) {
            assert!(s.min() > INIT_LOW && s.max_abs() <= 1.0);
        }
        assert_eq!(dims_of(&a.0, &a.1).unwrap(), dims);
    }

    fn stacks() -> impl Strategy<Value = (FactorStackW, FactorStackH)> {
        (1usize..5, 1usize..6, 1usize..4, 1usize..4, 1usize..4, any::<u64>()).prop_map(|(k, n, i, l, m, seed)| {
            init_random(ModelDims::new(k, n, i, l, m).unwrap(), seed).unwrap()
        })
    }

    proptest! {
        #[test]
        fn reconstruct_matches_brute_force((w, h) in stacks()) {
            let u = reconstruct(&w, &h).unwrap();
            let o = quadruple_loop(&w, &h);
            for (a, b) in u.iter().zip(o.iter()) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300));
            }
        }

        #[test]
        fn normalize_preserves_reconstruction((w, h) in stacks(), p in 1.0f64..4.0) {
            let (w2, h2) = normalize(&w, &h, p).unwrap();
            for n in w2.component_norms(p) {
                prop_assert!((n - 1.0).abs() < 1e-12);
            }
            let u = reconstruct(&w, &h).unwrap();
            let u2 = reconstruct(&w2, &h2).unwrap();
            prop_assert!(u.sub(&u2).unwrap().max_abs() < 1e-10 * u.max_abs());
        }

        #[test]
        fn diagonal_scaling_commutes_with_shifts(
            (w, h) in stacks(),
            s in 0usize..4,
            diag in proptest::collection::vec(0.1f64..10.0, 3)
        ) {
            let i = w.i();
            let b = Matrix::from_fn(i, i, |r, c| if r == c { diag[r % 3] } else { 0.0 });
            let b_inv = Matrix::from_fn(i, i, |r, c| if r == c { 1.0 / diag[r % 3] } else { 0.0 });
            let w0 = &w.slices()[0];
            let h0 = &h.slices()[0];
            prop_assert_eq!(
                w0.matmul(&b).unwrap().shift_down(s),
                w0.shift_down(s).matmul(&b).unwrap()
            );
            prop_assert_eq!(
                b_inv.matmul(h0).unwrap().shift_right(s),
                b_inv.matmul(&h0.shift_right(s)).unwrap()
            );
        }

        #[test]
        fn reconstruct_is_additive_in_each_factor((w, h) in stacks(), seed in any::<u64>()) {
            let dims = dims_of(&w, &h).unwrap();
            let (w2, h2) = init_random(dims, seed).unwrap();
            let sum_h = FactorStackH::new(
                h.slices().iter().zip(h2.slices()).map(|(a, b)| a.add(b).unwrap()).collect()
            ).unwrap();
            let lhs = reconstruct(&w, &sum_h).unwrap();
            let rhs = reconstruct(&w, &h).unwrap().add(&reconstruct(&w, &h2).unwrap()).unwrap();
            prop_assert!(lhs.sub(&rhs).unwrap().max_abs() <= 1e-12 * lhs.max_abs());

            let sum_w = FactorStackW::new(
                w.slices().iter().zip(w2.slices()).map(|(a, b)| a.add(b).unwrap()).collect()
            ).unwrap();
            let lhs = reconstruct(&sum_w, &h).unwrap();
            let rhs = reconstruct(&w, &h).unwrap().add(&reconstruct(&w2, &h).unwrap()).unwrap();
            prop_assert!(lhs.sub(&rhs).unwrap().max_abs() <= 1e-12 * lhs.max_abs());
        }
    }
}
