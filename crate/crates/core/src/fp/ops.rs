use std::cmp::Ordering;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use super::{round_dyadic, Fp, FpFormat};
use crate::error::{Error, Result};

static DIV_VIOLATIONS: AtomicU64 = AtomicU64::new(0);

/// Number of `fp_div` calls rejected for violating the division contract, process-wide.
pub fn div_violation_count() -> u64 {
    DIV_VIOLATIONS.load(AtomicOrdering::Relaxed)
}

fn parts(x: Fp, fmt: FpFormat) -> (bool, u128, i32) {
    match x {
        Fp::Finite { neg, exp, sig } => (neg, sig as u128, exp - fmt.p() as i32),
        _ => unreachable!("parts of a non-finite value"),
    }
}

/// x ⊕ y. Non-finite cases: ∞ absorbs finite and ∞, -∞ likewise, everything else is NaN.
pub fn fp_add(x: Fp, y: Fp, fmt: FpFormat) -> Fp {
    match (x, y) {
        (Fp::NaN, _) | (_, Fp::NaN) => Fp::NaN,
        (Fp::PosInf, Fp::NegInf) | (Fp::NegInf, Fp::PosInf) => Fp::NaN,
        (Fp::PosInf, _) | (_, Fp::PosInf) => Fp::PosInf,
        (Fp::NegInf, _) | (_, Fp::NegInf) => Fp::NegInf,
        _ => add_finite(x, y, fmt),
    }
}

fn add_finite(x: Fp, y: Fp, fmt: FpFormat) -> Fp {
    if y.is_zero() {
        return x;
    }
    if x.is_zero() {
        return y;
    }
    let (xa, xb) = (parts(x, fmt), parts(y, fmt));
    let ((na, ma, ea), (nb, mb, eb)) = if xa.2 >= xb.2 { (xa, xb) } else { (xb, xa) };
    let p = fmt.p() as i32;
    let d = ea - eb;
    let (a, b, e) = if d <= 2 * p + 5 {
        (ma << d, mb, eb)
    } else {
        // `b` lies strictly inside one unit below the guard bits of `a`, and no
        // rounding boundary falls in that unit, so half a unit stands in for it.
        let s = p + 5;
        (ma << s, 1, ea - s)
    };
    let (neg, mag) = if na == nb {
        (na, a + b)
    } else if a >= b {
        (na, a - b)
    } else {
        (nb, b - a)
    };
    round_dyadic(neg, mag, e, fmt)
}

/// x ⊗ y with sign-product semantics for infinities; 0 ⊗ ±∞ is NaN.
pub fn fp_mul(x: Fp, y: Fp, fmt: FpFormat) -> Fp {
    match (x, y) {
        (Fp::NaN, _) | (_, Fp::NaN) => Fp::NaN,
        (Fp::Finite { .. }, Fp::Finite { .. }) => {
            let (na, ma, ea) = parts(x, fmt);
            let (nb, mb, eb) = parts(y, fmt);
            round_dyadic(na != nb, ma * mb, ea + eb, fmt)
        }
        _ => {
            if x.is_zero() || y.is_zero() {
                Fp::NaN
            } else if x.is_negative() != y.is_negative() {
                Fp::NegInf
            } else {
                Fp::PosInf
            }
        }
    }
}

/// x ⊖ y := x ⊕ ((-1) ⊗ y).
pub fn fp_sub(x: Fp, y: Fp, fmt: FpFormat) -> Fp {
    let minus_one = fmt.one().neg();
    fp_add(x, fp_mul(minus_one, y, fmt), fmt)
}

/// x ⊘ y, defined only for `0 <= x <= y < ∞` with `y > 0`, or `y = NaN`.
pub fn fp_div(x: Fp, y: Fp, fmt: FpFormat) -> Result<Fp> {
    if y.is_nan() {
        return Ok(Fp::NaN);
    }
    let in_domain = x.is_finite()
        && y.is_finite()
        && !x.is_negative()
        && y.is_positive()
        && fp_cmp(x, y) != Some(Ordering::Greater);
    if !in_domain {
        DIV_VIOLATIONS.fetch_add(1, AtomicOrdering::Relaxed);
        return Err(Error::DivDomain { x: fmt.render(x), y: fmt.render(y) });
    }
    if x.is_zero() {
        return Ok(fmt.zero());
    }
    let (_, mx, ex) = parts(x, fmt);
    let (_, my, ey) = parts(y, fmt);
    let len_y = 128 - my.leading_zeros() as i32;
    let s = fmt.p() as i32 + 3 + len_y;
    let num = mx << s;
    let (q, r) = (num / my, num % my);
    let mag = (q << 1) | (r != 0) as u128;
    Ok(round_dyadic(false, mag, ex - ey - s - 1, fmt))
}

/// Correctly rounded ReLU; exact for every input.
pub fn rounded_relu(x: Fp, fmt: FpFormat) -> Fp {
    match x {
        Fp::Finite { neg: true, .. } | Fp::NegInf => fmt.zero(),
        _ => x,
    }
}

/// ⊕ folded strictly left to right.
pub fn left_sum(xs: &[Fp], fmt: FpFormat) -> Result<Fp> {
    let (first, rest) = xs.split_first().ok_or(Error::EmptySum)?;
    Ok(rest.iter().fold(*first, |acc, &x| fp_add(acc, x, fmt)))
}

/// Smallest float strictly larger than `x` (`Ω⁺ = ∞`).
pub fn succ(x: Fp, fmt: FpFormat) -> Result<Fp> {
    match x {
        Fp::NaN => Err(Error::NoAdjacent("NaN".into())),
        Fp::PosInf => Err(Error::NoAdjacent("+inf has no successor".into())),
        Fp::NegInf => Ok(fmt.big_omega().neg()),
        Fp::Finite { neg: false, exp, sig } => {
            if sig < fmt.max_sig() {
                Ok(Fp::Finite { neg: false, exp, sig: sig + 1 })
            } else if exp < fmt.emax() {
                Ok(Fp::Finite { neg: false, exp: exp + 1, sig: fmt.min_normal_sig() })
            } else {
                Ok(Fp::PosInf)
            }
        }
        Fp::Finite { neg: true, exp, sig } => {
            if sig > fmt.min_normal_sig() || exp == fmt.emin() {
                if sig == 1 {
                    Ok(fmt.zero())
                } else {
                    Ok(Fp::Finite { neg: true, exp, sig: sig - 1 })
                }
            } else {
                Ok(Fp::Finite { neg: true, exp: exp - 1, sig: fmt.max_sig() })
            }
        }
    }
}

/// Largest float strictly smaller than `x` (`pred(-Ω) = -∞`).
pub fn pred(x: Fp, fmt: FpFormat) -> Result<Fp> {
    match x {
        Fp::NegInf => Err(Error::NoAdjacent("-inf has no predecessor".into())),
        _ => succ(x.neg(), fmt).map(Fp::neg),
    }
}

/// Value order: -∞ < finite < ∞; `None` when either side is NaN.
pub fn fp_cmp(x: Fp, y: Fp) -> Option<Ordering> {
    fn rank(v: Fp) -> i8 {
        match v {
            Fp::NegInf => -1,
            Fp::PosInf => 1,
            _ => 0,
        }
    }
    match (x, y) {
        (Fp::NaN, _) | (_, Fp::NaN) => None,
        (Fp::Finite { neg: n1, exp: e1, sig: s1 }, Fp::Finite { neg: n2, exp: e2, sig: s2 }) => {
            let z1 = s1 == 0;
            let z2 = s2 == 0;
            let sign = |neg: bool, zero: bool| if zero { 0 } else if neg { -1 } else { 1 };
            let (a, b) = (sign(n1, z1), sign(n2, z2));
            if a != b {
                return Some(a.cmp(&b));
            }
            let mag = (e1, s1).cmp(&(e2, s2));
            Some(if a < 0 { mag.reverse() } else { mag })
        }
        _ => Some(rank(x).cmp(&rank(y))),
    }
}

/// Larger of two values; NaN absorbs.
pub fn fp_max(x: Fp, y: Fp) -> Fp {
    match fp_cmp(x, y) {
        None => Fp::NaN,
        Some(Ordering::Less) => y,
        _ => x,
    }
}

/// Canonical-representation equality; NaN equals NaN.
pub fn fp_eq(x: Fp, y: Fp) -> bool {
    x == y
}
