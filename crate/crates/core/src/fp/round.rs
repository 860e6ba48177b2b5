use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::{pow2_rational, Fp, FpFormat};

/// Input domain of the rounding oracle: an exact rational or a special value.
/// `BigRational` keeps itself in lowest terms with a positive denominator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExactScalar {
    Rational(BigRational),
    PosInf,
    NegInf,
    NaN,
}

impl ExactScalar {
    pub fn from_ratio(num: i64, den: i64) -> ExactScalar {
        ExactScalar::Rational(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn from_int(v: i64) -> ExactScalar {
        ExactScalar::Rational(BigRational::from_integer(BigInt::from(v)))
    }
}

/// Round to nearest, ties to even, with exact rational comparisons only.
pub fn round_exact(x: &ExactScalar, fmt: FpFormat) -> Fp {
    let r = match x {
        ExactScalar::NaN => return Fp::NaN,
        ExactScalar::PosInf => return Fp::PosInf,
        ExactScalar::NegInf => return Fp::NegInf,
        ExactScalar::Rational(r) => r,
    };
    if r.is_zero() {
        return fmt.zero();
    }
    let neg = r.is_negative();
    let a = r.abs();
    if a >= fmt.overflow_threshold() {
        return if neg { Fp::NegInf } else { Fp::PosInf };
    }
    let p = fmt.p() as i32;
    // floor(log2 a), located from the bit lengths and then corrected.
    let mut e = a.numer().bits() as i32 - a.denom().bits() as i32;
    while pow2_rational(e) > a {
        e -= 1;
    }
    while pow2_rational(e + 1) <= a {
        e += 1;
    }
    let mut t = e.max(fmt.emin());
    let y = &a / pow2_rational(t - p);
    let fl = y.floor();
    let frac = &y - &fl;
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let mut sig = fl.to_integer();
    let up = match frac.cmp(&half) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Equal => sig.is_odd(),
        std::cmp::Ordering::Less => false,
    };
    if up {
        sig += 1;
    }
    let mut sig = sig.to_u64().expect("significand fits");
    if sig == 1u64 << (p + 1) {
        sig >>= 1;
        t += 1;
    }
    if t > fmt.emax() {
        return if neg { Fp::NegInf } else { Fp::PosInf };
    }
    if sig == 0 {
        return fmt.zero();
    }
    Fp::Finite { neg, exp: t, sig }
}

/// Round `(-1)^neg * m * 2^e`. This is the working kernel behind the arithmetic;
/// `round_exact` is its independent rational counterpart.
pub fn round_dyadic(neg: bool, m: u128, e: i32, fmt: FpFormat) -> Fp {
    if m == 0 {
        return fmt.zero();
    }
    let p = fmt.p() as i64;
    let len = 128 - m.leading_zeros() as i64;
    let top = e as i64 + len - 1;
    let mut t = top.max(fmt.emin() as i64);
    let shift = (t - p) - e as i64;
    let mut sig: u128 = if shift <= 0 {
        m << (-shift)
    } else if shift > len {
        0
    } else {
        let q = if shift >= 128 { 0 } else { m >> shift };
        let rem = if shift >= 128 { m } else { m - (q << shift) };
        let half = 1u128 << (shift - 1);
        if rem > half || (rem == half && q & 1 == 1) {
            q + 1
        } else {
            q
        }
    };
    if sig == 1u128 << (p + 1) {
        sig >>= 1;
        t += 1;
    }
    if t > fmt.emax() as i64 {
        return if neg { Fp::NegInf } else { Fp::PosInf };
    }
    if sig == 0 {
        return fmt.zero();
    }
    Fp::Finite { neg, exp: t as i32, sig: sig as u64 }
}
