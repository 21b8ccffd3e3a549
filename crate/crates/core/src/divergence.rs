//! The beta-divergence family.
//!
//! `beta = 2` is the squared Euclidean distance (halved), `beta = 1` the
//! generalized Kullback-Leibler divergence and `beta = 0` the Itakura-Saito
//! divergence. Any finite beta is accepted; values outside `[0, 2]` are
//! reported as unvalidated.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Default floor applied to reconstruction entries before evaluating a
/// branch that requires a positive second argument.
pub const DEFAULT_FLOOR: f64 = 1e-12;

/// Below this `|ln(p/q)|` the divergence is summed as a power series in the
/// log-ratio, which avoids the cancellation of the closed forms near `p = q`.
const SERIES_RADIUS: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Beta(f64);

impl Beta {
    pub const ITAKURA_SAITO: Beta = Beta(0.0);
    pub const KULLBACK_LEIBLER: Beta = Beta(1.0);
    pub const EUCLIDEAN: Beta = Beta(2.0);

    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::InvalidConfig(format!("beta must be finite, got {value}")));
        }
        Ok(Beta(value))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// Whether beta lies in the range the update rules were exercised on.
    pub fn is_validated(self) -> bool {
        (0.0..=2.0).contains(&self.0)
    }
}

impl TryFrom<f64> for Beta {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Beta::new(value)
    }
}

impl From<Beta> for f64 {
    fn from(b: Beta) -> f64 {
        b.0
    }
}

impl fmt::Display for Beta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `sum_{n>=2} (1 + beta + ... + beta^(n-2)) / n! * t^n`, which equals
/// `d_beta(e^t, 1)` for every beta.
fn log_ratio_series(t: f64, beta: f64) -> f64 {
    let mut sum = 0.0;
    let mut geometric = 1.0; // 1 + beta + ... + beta^(n-2)
    let mut beta_pow = 1.0;
    let mut t_over_fact = t * t / 2.0; // t^n / n!
    for n in 2..80 {
        let term = geometric * t_over_fact;
        sum += term;
        if term.abs() <= f64::EPSILON * 1e-3 * sum.abs() {
            break;
        }
        beta_pow *= beta;
        geometric += beta_pow;
        t_over_fact *= t / (n + 1) as f64;
    }
    sum
}

/// Scalar beta-divergence `d_beta(p, q)`.
///
/// Requires `q > 0` and `p >= 0`. `p = 0` is rejected where the branch is
/// undefined: at `beta <= 0`. At `beta = 1` the convention `0 * ln 0 = 0`
/// applies.
pub fn d_beta(p: f64, q: f64, beta: Beta) -> Result<f64> {
    let b = beta.value();
    let branch = if b == 0.0 {
        "itakura-saito"
    } else if b == 1.0 {
        "kullback-leibler"
    } else {
        "general"
    };
    if !(q > 0.0) || !q.is_finite() || !(p >= 0.0) || !p.is_finite() || (p == 0.0 && b <= 0.0) {
        return Err(Error::Domain { branch, p, q });
    }
    if p == q {
        return Ok(0.0);
    }
    if p == 0.0 {
        return Ok(if b == 1.0 { q } else { q.powf(b) / b });
    }

    let t = (p / q).ln();
    let value = if t.abs() < SERIES_RADIUS {
        q.powf(b) * log_ratio_series(t, b)
    } else if b == 0.0 {
        let r = p / q;
        r - t - 1.0
    } else if b == 1.0 {
        p * t - p + q
    } else {
        (p.powf(b) - q.powf(b)) / (b * (b - 1.0)) - (p - q) / (b - 1.0) * q.powf(b - 1.0)
    };
    Ok(value.max(0.0))
}

/// Closed-form general branch, evaluated literally for any `beta` outside
/// `{0, 1}`. Used to probe continuity of the family at the special points.
pub fn d_beta_general_closed_form(p: f64, q: f64, beta: f64) -> f64 {
    (p.powf(beta) - q.powf(beta)) / (beta * (beta - 1.0)) - (p - q) / (beta - 1.0) * q.powf(beta - 1.0)
}

/// Entrywise divergence `sum_kn d_beta(v_kn, max(u_kn, floor))`.
pub fn divergence(v: &Matrix, u: &Matrix, beta: Beta, floor: f64) -> Result<f64> {
    if v.shape() != u.shape() {
        return Err(Error::DimensionMismatch {
            op: "divergence",
            left: v.shape(),
            right: u.shape(),
        });
    }
    let mut total = 0.0;
    for (&p, &q) in v.iter().zip(u.iter()) {
        total += d_beta(p, q.max(floor), beta)?;
    }
    Ok(total)
}

/// Checks `d_beta(c p, c q) = c^beta d_beta(p, q)` to `1e-10` relative.
pub fn scale_identity_check(p: f64, q: f64, c: f64, beta: Beta) -> bool {
    let (Ok(lhs), Ok(base)) = (d_beta(c * p, c * q, beta), d_beta(p, q, beta)) else {
        return false;
    };
    let rhs = c.powf(beta.value()) * base;
    (lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()) || (lhs == 0.0 && rhs == 0.0)
}
