//! Every operand pair against the exact-rational rounding oracle.

use num_rational::BigRational;

use super::{par_map, Outcome, Tally};
use crate::fp::{enumerate_all, fp_add, fp_cmp, fp_div, fp_mul, fp_sub, round_exact, ExactScalar, Fp, FpFormat};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Class {
    Nan,
    Pos,
    Neg,
    Zero,
    PosInf,
    NegInf,
}

fn class(x: Fp) -> Class {
    match x {
        Fp::NaN => Class::Nan,
        Fp::PosInf => Class::PosInf,
        Fp::NegInf => Class::NegInf,
        _ if x.is_zero() => Class::Zero,
        _ if x.is_negative() => Class::Neg,
        _ => Class::Pos,
    }
}

/// Non-finite addition table, written case by case.
fn add_table(a: Class, b: Class) -> Fp {
    use Class::*;
    match (a, b) {
        (Nan, _) | (_, Nan) => Fp::NaN,
        (PosInf, NegInf) | (NegInf, PosInf) => Fp::NaN,
        (PosInf, _) | (_, PosInf) => Fp::PosInf,
        (NegInf, _) | (_, NegInf) => Fp::NegInf,
        _ => unreachable!("finite pair"),
    }
}

/// Non-finite multiplication table.
fn mul_table(a: Class, b: Class) -> Fp {
    use Class::*;
    match (a, b) {
        (Nan, _) | (_, Nan) => Fp::NaN,
        (Zero, PosInf | NegInf) | (PosInf | NegInf, Zero) => Fp::NaN,
        (PosInf, Pos | PosInf) | (Pos, PosInf) | (NegInf, Neg | NegInf) | (Neg, NegInf) => Fp::PosInf,
        (PosInf, Neg | NegInf) | (Neg, PosInf) | (NegInf, Pos | PosInf) | (Pos, NegInf) => Fp::NegInf,
        _ => unreachable!("finite pair"),
    }
}

fn exact(r: BigRational) -> ExactScalar {
    ExactScalar::Rational(r)
}

fn expect_add(x: Fp, y: Fp, fmt: FpFormat) -> Fp {
    match (fmt.to_rational(x), fmt.to_rational(y)) {
        (Some(a), Some(b)) => round_exact(&exact(a + b), fmt),
        _ => add_table(class(x), class(y)),
    }
}

fn expect_mul(x: Fp, y: Fp, fmt: FpFormat) -> Fp {
    match (fmt.to_rational(x), fmt.to_rational(y)) {
        (Some(a), Some(b)) => round_exact(&exact(a * b), fmt),
        _ => mul_table(class(x), class(y)),
    }
}

fn expect_sub(x: Fp, y: Fp, fmt: FpFormat) -> Fp {
    // (-1) ⊗ y is an exact negation, so ⊖ is the rounded exact difference.
    expect_add(x, y.neg(), fmt)
}

fn in_div_domain(x: Fp, y: Fp) -> bool {
    x.is_finite() && y.is_finite() && !x.is_negative() && y.is_positive() && fp_cmp(x, y).is_some_and(|o| o.is_le())
}

pub(super) fn run(fmt: FpFormat, t: &mut Tally) {
    let all = enumerate_all(fmt);
    let rows = par_map(&all, |&x| {
        let mut out = Vec::with_capacity(3 * all.len() + all.len() / 2);
        for &y in &all {
            let ops: [(&str, Fp, Fp); 3] = [
                ("add", fp_add(x, y, fmt), expect_add(x, y, fmt)),
                ("sub", fp_sub(x, y, fmt), expect_sub(x, y, fmt)),
                ("mul", fp_mul(x, y, fmt), expect_mul(x, y, fmt)),
            ];
            for (op, got, want) in ops {
                out.push(Outcome::check(got == want, || case(op, x, y, want, got, fmt)));
            }
            if in_div_domain(x, y) {
                let want = round_exact(&exact(fmt.to_rational(x).unwrap() / fmt.to_rational(y).unwrap()), fmt);
                out.push(match fp_div(x, y, fmt) {
                    Ok(got) => Outcome::check(got == want, || case("div", x, y, want, got, fmt)),
                    Err(e) => Outcome::check(false, || (format!("div({}, {})", fmt.render(x), fmt.render(y)), fmt.render(want), e.to_string())),
                });
            }
        }
        // Division by NaN is the one out-of-range pair the contract defines.
        let got = fp_div(x, Fp::NaN, fmt);
        out.push(Outcome::check(matches!(got, Ok(Fp::NaN)), || {
            (format!("div({}, NaN)", fmt.render(x)), "NaN".into(), format!("{got:?}"))
        }));
        out
    });
    for r in rows {
        t.extend(r);
    }
}

fn case(op: &str, x: Fp, y: Fp, want: Fp, got: Fp, fmt: FpFormat) -> (String, String, String) {
    (format!("{op}({}, {})", fmt.render(x), fmt.render(y)), fmt.render(want), fmt.render(got))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_cover_the_special_cases() {
        assert_eq!(add_table(Class::PosInf, Class::NegInf), Fp::NaN);
        assert_eq!(add_table(Class::Neg, Class::PosInf), Fp::PosInf);
        assert_eq!(mul_table(Class::Zero, Class::NegInf), Fp::NaN);
        assert_eq!(mul_table(Class::Neg, Class::NegInf), Fp::PosInf);
        assert_eq!(mul_table(Class::NegInf, Class::Pos), Fp::NegInf);
    }
}
