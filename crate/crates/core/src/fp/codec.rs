use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::Zero;

use super::{Fp, FpFormat};
use crate::error::{Error, Result};

/// Bit pattern: sign | q-bit biased exponent | p mantissa bits.
pub fn fp_to_bits(x: Fp, fmt: FpFormat) -> u64 {
    let (p, q) = (fmt.p(), fmt.q());
    let all_ones = (1u64 << q) - 1;
    let (sign, field, mant) = match x {
        Fp::Finite { neg, exp, sig } => {
            if sig < fmt.min_normal_sig() {
                (neg as u64, 0, sig)
            } else {
                (neg as u64, (exp + fmt.bias()) as u64, sig - fmt.min_normal_sig())
            }
        }
        Fp::PosInf => (0, all_ones, 0),
        Fp::NegInf => (1, all_ones, 0),
        Fp::NaN => (0, all_ones, 1u64 << (p - 1)),
    };
    (sign << (q + p)) | (field << p) | mant
}

/// Inverse of [`fp_to_bits`]. A negative-zero pattern decodes to the canonical zero and
/// every NaN pattern to the single NaN.
pub fn fp_from_bits(bits: u64, fmt: FpFormat) -> Result<Fp> {
    let (p, q) = (fmt.p(), fmt.q());
    if bits >> fmt.width() != 0 {
        return Err(Error::Parse(format!("bit pattern {bits:#x} wider than {} bits", fmt.width())));
    }
    let sign = (bits >> (q + p)) & 1 == 1;
    let field = (bits >> p) & ((1u64 << q) - 1);
    let mant = bits & ((1u64 << p) - 1);
    let all_ones = (1u64 << q) - 1;
    Ok(if field == all_ones {
        match (mant, sign) {
            (0, false) => Fp::PosInf,
            (0, true) => Fp::NegInf,
            _ => Fp::NaN,
        }
    } else if field == 0 {
        if mant == 0 {
            fmt.zero()
        } else {
            Fp::Finite { neg: sign, exp: fmt.emin(), sig: mant }
        }
    } else {
        Fp::Finite { neg: sign, exp: field as i32 - fmt.bias(), sig: mant + fmt.min_normal_sig() }
    })
}

pub fn render_hex(x: Fp, fmt: FpFormat) -> String {
    let digits = fmt.width().div_ceil(4) as usize;
    format!("0x{:0digits$x}", fp_to_bits(x, fmt))
}

/// Exact decimal rendering; every dyadic rational has a finite expansion.
pub fn render_exact(x: Fp, fmt: FpFormat) -> String {
    let (neg, exp, sig) = match x {
        Fp::PosInf => return "inf".into(),
        Fp::NegInf => return "-inf".into(),
        Fp::NaN => return "nan".into(),
        Fp::Finite { neg, exp, sig } => (neg, exp, sig),
    };
    let k = exp - fmt.p() as i32;
    let sign = if neg { "-" } else { "" };
    if k >= 0 {
        return format!("{sign}{}", BigUint::from(sig) << k as usize);
    }
    let places = (-k) as usize;
    let digits = (BigUint::from(sig) * BigUint::from(5u32).pow(places as u32)).to_string();
    let padded = format!("{digits:0>width$}", width = places + 1);
    let (int_part, frac_part) = padded.split_at(padded.len() - places);
    let frac_part = frac_part.trim_end_matches('0');
    if frac_part.is_empty() {
        format!("{sign}{int_part}")
    } else {
        format!("{sign}{int_part}.{frac_part}")
    }
}

/// Parse an exact literal: `0x..` bit pattern, `inf`/`-inf`/`nan`, or a decimal
/// (optionally with exponent) whose value must be representable without rounding.
pub fn parse_literal(s: &str, fmt: FpFormat) -> Result<Fp> {
    let t = s.trim();
    let lower = t.to_ascii_lowercase();
    match lower.as_str() {
        "inf" | "+inf" => return Ok(Fp::PosInf),
        "-inf" => return Ok(Fp::NegInf),
        "nan" => return Ok(Fp::NaN),
        _ => {}
    }
    if let Some(hex) = lower.strip_prefix("0x") {
        let bits = u64::from_str_radix(hex, 16).map_err(|e| Error::Parse(format!("{t}: {e}")))?;
        return fp_from_bits(bits, fmt);
    }
    let r = parse_decimal(&lower).ok_or_else(|| Error::Parse(format!("not a number: {t}")))?;
    fmt.exact_from_rational(&r).map_err(|_| Error::NotRepresentable(t.to_string()))
}

fn parse_decimal(s: &str) -> Option<BigRational> {
    let (mantissa, exponent) = match s.find('e') {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (neg, body) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match body.find('.') {
        Some(i) => (&body[..i], &body[i + 1..]),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let n: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().ok()? };
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut r = BigRational::from_integer(n);
    if scale >= 0 {
        r *= BigRational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        r /= BigRational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    if neg {
        r = -r;
    }
    Some(r)
}
