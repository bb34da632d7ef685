//! Validated scalar types, dB conversions, binary entropy, and bisection.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 2*sqrt(2), the Tsirelson bound on the CHSH parameter.
pub const TWO_SQRT_2: f64 = 2.0 * std::f64::consts::SQRT_2;

/// Channel transmittance, the fraction of photons surviving, in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Transmittance(f64);

impl Transmittance {
    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::OutOfRange {
                name: "transmittance",
                value,
                constraint: "0 <= T <= 1",
            });
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Converts a non-negative loss in dB: T = 10^(-loss/10), always in (0, 1]
    /// for finite loss.
    pub fn from_loss_db(loss: LossDb) -> Self {
        Self(10f64.powf(-loss.value() / 10.0))
    }

    /// Loss in dB, -10*log10(T); positive infinity at T = 0.
    pub fn loss_db(self) -> f64 {
        -10.0 * self.0.log10()
    }
}

/// Channel loss in dB, non-negative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LossDb(f64);

impl LossDb {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value < 0.0 {
            return Err(Error::OutOfRange {
                name: "loss_db",
                value,
                constraint: "loss >= 0 dB",
            });
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// A probability in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::OutOfRange {
                name: "probability",
                value,
                constraint: "0 <= p <= 1",
            });
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Probability {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

/// Binary entropy in bits, h(q) = -q log2 q - (1-q) log2 (1-q), with the
/// 0*log(0) = 0 convention. Raw-f64 variant for internal chains whose
/// arguments are in range by construction.
pub(crate) fn entropy(q: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&q));
    if q <= 0.0 || q >= 1.0 {
        return 0.0;
    }
    -q * q.log2() - (1.0 - q) * (1.0 - q).log2()
}

/// Binary entropy h(q) in bits.
pub fn binary_entropy(q: Probability) -> f64 {
    entropy(q.value())
}

/// Mutual information between the sifted keys of the two parties for a
/// binary symmetric error rate q: I(A;B) = 1 - h(q).
pub fn mutual_information_ab(q: Probability) -> f64 {
    1.0 - binary_entropy(q)
}

/// Outcome of a monotone threshold search over channel loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tolerance {
    /// The tracked quantity crossed its threshold at this loss (dB).
    CrossesAt(f64),
    /// No crossing at or below the search ceiling (dB).
    ExceedsCeiling(f64),
    /// Already past the threshold at the range start (dB).
    BelowFloor(f64),
}

impl Tolerance {
    /// The crossing loss in dB, if one was found.
    pub fn crossing_db(self) -> Option<f64> {
        match self {
            Tolerance::CrossesAt(db) => Some(db),
            _ => None,
        }
    }
}

impl fmt::Display for Tolerance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tolerance::CrossesAt(db) => write!(f, "{db:.2} dB"),
            Tolerance::ExceedsCeiling(db) => write!(f, ">= {db:.2} dB (no crossing in range)"),
            Tolerance::BelowFloor(db) => write!(f, "<= {db:.2} dB (already past at range start)"),
        }
    }
}

/// Finds a root of `f` on `[lo, hi]` by bisection, to within `tol` on the
/// abscissa. The endpoints may be given in either order; `f` must change
/// sign across the bracket.
pub fn bisect_root<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::OutOfRange {
            name: "tol",
            value: tol,
            constraint: "tol > 0 and finite",
        });
    }
    let (mut lo, mut hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() || f_lo.is_nan() || f_hi.is_nan() {
        return Err(Error::NoSignChange { lo, hi, f_lo, f_hi });
    }
    let lo_negative = f_lo < 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if (f_mid < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= tol {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
