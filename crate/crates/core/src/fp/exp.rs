use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use super::codec::fp_to_bits;
use super::{pow2_rational, round_exact, ExactScalar, Fp, FpFormat};

/// Interval endpoint `m * 2^e`.
#[derive(Clone)]
struct Scaled {
    m: BigInt,
    e: i64,
}

impl Scaled {
    fn to_rational(&self) -> BigRational {
        BigRational::from_integer(self.m.clone()) * pow2_rational(self.e as i32)
    }

    /// Keep at most `bits` significant bits, rounding down or up.
    fn truncate(mut self, bits: u64, up: bool) -> Scaled {
        let len = self.m.bits();
        if len > bits {
            let s = len - bits;
            let (q, r) = self.m.div_mod_floor(&(BigInt::one() << s));
            self.m = if up && !r.is_zero() { q + 1 } else { q };
            self.e += s as i64;
        }
        self
    }

    fn square(&self, bits: u64, up: bool) -> Scaled {
        Scaled { m: &self.m * &self.m, e: 2 * self.e }.truncate(bits, up)
    }
}

fn floor_scaled(r: &BigRational, w: u64) -> BigInt {
    (r * BigRational::from_integer(BigInt::one() << w)).floor().to_integer()
}

fn ceil_scaled(r: &BigRational, w: u64) -> BigInt {
    (r * BigRational::from_integer(BigInt::one() << w)).ceil().to_integer()
}

/// Enclosure of exp(a) for a dyadic `a = num / 2^w`, relative width about 2^-bits.
fn exp_dyadic(num: &BigInt, w: u64, bits: u64, up: bool) -> Scaled {
    // Halve until |r| <= 1/2, then square back k times.
    let mut k = 0u64;
    while num.abs() > (BigInt::one() << (w + k)) >> 1 {
        k += 1;
    }
    let r = BigRational::new(num.clone(), BigInt::one() << (w + k));
    let work = bits + k + 16;
    // Taylor sum with remainder |R_T| <= 2 |r|^(T+1) / (T+1)!.
    let mut sum = BigRational::one();
    let mut term = BigRational::one();
    let mut i = 1u64;
    let tol = pow2_rational(-(work as i32) - 2);
    let bound = loop {
        term = term * &r / BigRational::from_integer(BigInt::from(i));
        sum += &term;
        let next = term.abs() * BigRational::new(BigInt::from(2), BigInt::from(i + 1));
        if next < tol {
            break next;
        }
        i += 1;
    };
    let endpoint = if up { &sum + &bound } else { &sum - &bound };
    let m = if up { ceil_scaled(&endpoint, work) } else { floor_scaled(&endpoint, work) };
    let mut acc = Scaled { m, e: -(work as i64) };
    for _ in 0..k {
        acc = acc.square(work, up);
    }
    acc
}

/// Rigorous rational enclosure `[lo, hi]` of exp(x), relative width roughly 2^-bits.
pub fn exp_enclosure(x: &BigRational, bits: u32) -> (BigRational, BigRational) {
    let bits = bits as u64;
    let w = bits + 16;
    let lo = exp_dyadic(&floor_scaled(x, w), w, bits, false);
    let hi = exp_dyadic(&ceil_scaled(x, w), w, bits, true);
    (lo.to_rational(), hi.to_rational())
}

fn compute_exp(x: Fp, fmt: FpFormat) -> Fp {
    let v = match x {
        Fp::NaN => return Fp::NaN,
        Fp::NegInf => return fmt.zero(),
        Fp::PosInf => return Fp::PosInf,
        Fp::Finite { sig: 0, .. } => return fmt.one(),
        Fp::Finite { .. } => fmt.to_rational(x).unwrap(),
    };
    // e^v > 2^v >= 2^(emax+2) overflows; e^v < 2^v <= ω/4 underflows to 0.
    let big = BigRational::from_integer(BigInt::from(fmt.emax() + 2));
    if v >= big {
        return Fp::PosInf;
    }
    let small = BigRational::from_integer(BigInt::from(fmt.emin() - fmt.p() as i32 - 2));
    if v <= small {
        return fmt.zero();
    }
    // exp(v) is irrational for rational v != 0, so the bracket eventually avoids
    // every midpoint and both ends round alike.
    let mut bits = fmt.p() + 24;
    loop {
        let (lo, hi) = exp_enclosure(&v, bits);
        let a = round_exact(&ExactScalar::Rational(lo), fmt);
        let b = round_exact(&ExactScalar::Rational(hi), fmt);
        if a == b {
            return a;
        }
        bits *= 2;
    }
}

type ExpTable = Arc<Vec<OnceLock<Fp>>>;

fn table_for(fmt: FpFormat) -> Option<ExpTable> {
    if fmt.width() > 16 {
        return None;
    }
    static CACHE: OnceLock<Mutex<HashMap<FpFormat, ExpTable>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    let entry = guard
        .entry(fmt)
        .or_insert_with(|| Arc::new((0..1usize << fmt.width()).map(|_| OnceLock::new()).collect()));
    Some(entry.clone())
}

/// Correctly rounded exp; results are memoized per bit pattern for narrow formats.
pub fn rounded_exp(x: Fp, fmt: FpFormat) -> Fp {
    match table_for(fmt) {
        Some(t) => *t[fp_to_bits(x, fmt) as usize].get_or_init(|| compute_exp(x, fmt)),
        None => compute_exp(x, fmt),
    }
}
