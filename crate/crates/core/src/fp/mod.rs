//! The format F_{p,q}, its values, and the scalar operations on them.

mod codec;
mod enumerate;
mod exp;
mod ops;
mod round;
pub mod tables;

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use codec::{fp_from_bits, fp_to_bits, parse_literal, render_exact, render_hex};
pub use enumerate::{enumerate_all, enumerate_finite, finite_count};
pub use exp::{exp_enclosure, rounded_exp};
pub use ops::{
    div_violation_count, fp_add, fp_cmp, fp_div, fp_eq, fp_max, fp_mul, fp_sub, left_sum, pred,
    rounded_relu, succ,
};
pub use round::{round_dyadic, round_exact, ExactScalar};

/// Largest supported significand width; keeps every exact intermediate inside `u128`.
pub const MAX_P: u32 = 40;
pub const MAX_Q: u32 = 11;

/// Parameters `(p, q)` of F_{p,q}. Everything else is derived.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawFormat", into = "RawFormat")]
pub struct FpFormat {
    p: u32,
    q: u32,
}

#[derive(Serialize, Deserialize)]
struct RawFormat {
    p: u32,
    q: u32,
}

impl TryFrom<RawFormat> for FpFormat {
    type Error = Error;
    fn try_from(r: RawFormat) -> Result<Self> {
        make_format(r.p, r.q)
    }
}

impl From<FpFormat> for RawFormat {
    fn from(f: FpFormat) -> Self {
        RawFormat { p: f.p, q: f.q }
    }
}

pub fn make_format(p: u32, q: u32) -> Result<FpFormat> {
    let bad = |reason: &str| Error::InvalidFormat { p, q, reason: reason.into() };
    if p < 1 {
        return Err(bad("p must be at least 1"));
    }
    if q < 2 {
        return Err(bad("q must be at least 2"));
    }
    if p > MAX_P || q > MAX_Q {
        return Err(bad("exceeds the supported range p <= 40, q <= 11"));
    }
    Ok(FpFormat { p, q })
}

impl FpFormat {
    pub fn new(p: u32, q: u32) -> Result<Self> {
        make_format(p, q)
    }

    /// FP8 E5M2.
    pub fn e5m2() -> Self {
        FpFormat { p: 2, q: 5 }
    }

    /// FP8 E4M3 (the IEEE-style variant, with infinities).
    pub fn e4m3() -> Self {
        FpFormat { p: 3, q: 4 }
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn emin(&self) -> i32 {
        -(1i32 << (self.q - 1)) + 2
    }

    pub fn emax(&self) -> i32 {
        (1i32 << (self.q - 1)) - 1
    }

    pub fn bias(&self) -> i32 {
        self.emax()
    }

    /// Total bit width of the encoding.
    pub fn width(&self) -> u32 {
        self.p + self.q + 1
    }

    pub fn satisfies_condition1(&self) -> bool {
        let upper = (1i64 << (self.q - 1)) - 3;
        self.p >= 2 && (self.p as i64) <= upper
    }

    pub fn require_condition1(&self) -> Result<()> {
        if self.satisfies_condition1() {
            Ok(())
        } else {
            Err(Error::Condition1 { p: self.p, q: self.q })
        }
    }

    pub(crate) fn min_normal_sig(&self) -> u64 {
        1u64 << self.p
    }

    pub(crate) fn max_sig(&self) -> u64 {
        (1u64 << (self.p + 1)) - 1
    }

    pub fn zero(&self) -> Fp {
        Fp::Finite { neg: false, exp: self.emin(), sig: 0 }
    }

    pub fn one(&self) -> Fp {
        Fp::Finite { neg: false, exp: 0, sig: self.min_normal_sig() }
    }

    /// Smallest positive float, 2^(emin-p).
    pub fn omega(&self) -> Fp {
        Fp::Finite { neg: false, exp: self.emin(), sig: 1 }
    }

    /// Largest finite float, (2-2^-p) 2^emax.
    pub fn big_omega(&self) -> Fp {
        Fp::Finite { neg: false, exp: self.emax(), sig: self.max_sig() }
    }

    /// Omega + 2^(emax-p-1); magnitudes at or above this round to infinity.
    pub fn overflow_threshold(&self) -> BigRational {
        self.to_rational(self.big_omega()).unwrap() + pow2_rational(self.emax() - self.p as i32 - 1)
    }

    /// Exact power of two, if representable.
    pub fn pow2(&self, e: i32) -> Option<Fp> {
        if e > self.emax() || e < self.emin() - self.p as i32 {
            return None;
        }
        Some(self.round_int_scaled(false, 1, e))
    }

    /// Validated canonical finite value.
    pub fn finite(&self, neg: bool, exp: i32, sig: u64) -> Result<Fp> {
        let x = Fp::Finite { neg, exp, sig };
        if self.is_canonical(x) {
            Ok(x)
        } else {
            Err(Error::NotCanonical(format!("neg={neg} exp={exp} sig={sig}")))
        }
    }

    pub fn is_canonical(&self, x: Fp) -> bool {
        match x {
            Fp::Finite { neg, exp, sig } => {
                if exp < self.emin() || exp > self.emax() || sig > self.max_sig() {
                    return false;
                }
                if sig >= self.min_normal_sig() {
                    true
                } else if sig == 0 {
                    exp == self.emin() && !neg
                } else {
                    exp == self.emin()
                }
            }
            _ => true,
        }
    }

    /// `round(sign * m * 2^e)` for an integer magnitude.
    pub fn round_int_scaled(&self, neg: bool, m: u128, e: i32) -> Fp {
        round_dyadic(neg, m, e, *self)
    }

    /// Rounded integer.
    pub fn from_int(&self, v: i64) -> Fp {
        self.round_int_scaled(v < 0, v.unsigned_abs() as u128, 0)
    }

    /// Exact rational value of a finite float.
    pub fn to_rational(&self, x: Fp) -> Option<BigRational> {
        match x {
            Fp::Finite { neg, exp, sig } => {
                let mut r = BigRational::from_integer(BigInt::from(sig)) * pow2_rational(exp - self.p as i32);
                if neg {
                    r = -r;
                }
                Some(r)
            }
            _ => None,
        }
    }

    pub fn to_exact(&self, x: Fp) -> ExactScalar {
        match x {
            Fp::Finite { .. } => ExactScalar::Rational(self.to_rational(x).unwrap()),
            Fp::PosInf => ExactScalar::PosInf,
            Fp::NegInf => ExactScalar::NegInf,
            Fp::NaN => ExactScalar::NaN,
        }
    }

    /// Last mantissa bit m_p of a finite value.
    pub fn last_mantissa_bit(&self, x: Fp) -> Option<u64> {
        match x {
            Fp::Finite { sig, .. } => Some(sig & 1),
            _ => None,
        }
    }

    pub fn add(&self, x: Fp, y: Fp) -> Fp {
        fp_add(x, y, *self)
    }

    pub fn sub(&self, x: Fp, y: Fp) -> Fp {
        fp_sub(x, y, *self)
    }

    pub fn mul(&self, x: Fp, y: Fp) -> Fp {
        fp_mul(x, y, *self)
    }

    pub fn div(&self, x: Fp, y: Fp) -> Result<Fp> {
        fp_div(x, y, *self)
    }

    pub fn relu(&self, x: Fp) -> Fp {
        rounded_relu(x, *self)
    }

    pub fn exp(&self, x: Fp) -> Fp {
        rounded_exp(x, *self)
    }

    pub fn succ(&self, x: Fp) -> Result<Fp> {
        succ(x, *self)
    }

    pub fn pred(&self, x: Fp) -> Result<Fp> {
        pred(x, *self)
    }

    pub fn sum(&self, xs: &[Fp]) -> Result<Fp> {
        left_sum(xs, *self)
    }

    /// Value with exact rational `r`, or an error when rounding would change it.
    pub fn exact_from_rational(&self, r: &BigRational) -> Result<Fp> {
        let x = round_exact(&ExactScalar::Rational(r.clone()), *self);
        match self.to_rational(x) {
            Some(v) if &v == r => Ok(x),
            _ => Err(Error::NotRepresentable(r.to_string())),
        }
    }

    pub fn render(&self, x: Fp) -> String {
        render_exact(x, *self)
    }
}

impl fmt::Display for FpFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F(p={}, q={})", self.p, self.q)
    }
}

/// One element of F-bar. Finite values are stored canonically, so derived equality
/// coincides with value equality, and the single NaN equals itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Fp {
    Finite { neg: bool, exp: i32, sig: u64 },
    PosInf,
    NegInf,
    NaN,
}

impl Fp {
    pub fn is_finite(self) -> bool {
        matches!(self, Fp::Finite { .. })
    }

    pub fn is_nan(self) -> bool {
        matches!(self, Fp::NaN)
    }

    pub fn is_zero(self) -> bool {
        matches!(self, Fp::Finite { sig: 0, .. })
    }

    pub fn is_negative(self) -> bool {
        matches!(self, Fp::Finite { neg: true, .. } | Fp::NegInf)
    }

    pub fn is_positive(self) -> bool {
        match self {
            Fp::Finite { neg, sig, .. } => !neg && sig > 0,
            Fp::PosInf => true,
            _ => false,
        }
    }

    /// Exact negation. Zero stays the canonical zero.
    #[allow(clippy::should_implement_trait)]
    pub fn neg(self) -> Fp {
        match self {
            Fp::Finite { sig: 0, .. } => self,
            Fp::Finite { neg, exp, sig } => Fp::Finite { neg: !neg, exp, sig },
            Fp::PosInf => Fp::NegInf,
            Fp::NegInf => Fp::PosInf,
            Fp::NaN => Fp::NaN,
        }
    }

    /// Total order on the non-NaN values.
    pub fn partial_cmp_value(self, other: Fp) -> Option<Ordering> {
        fp_cmp(self, other)
    }
}

pub(crate) fn pow2_rational(e: i32) -> BigRational {
    if e >= 0 {
        BigRational::from_integer(BigInt::one() << e as usize)
    } else {
        BigRational::new(BigInt::one(), BigInt::one() << (-e) as usize)
    }
}
