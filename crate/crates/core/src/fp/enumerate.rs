use super::{Fp, FpFormat};

/// |F| = 2 (2^p (emax - emin + 1) + 2^p - 1) + 1.
pub fn finite_count(fmt: FpFormat) -> usize {
    let per_sign = (1usize << fmt.p()) * (fmt.emax() - fmt.emin() + 1) as usize + (1usize << fmt.p()) - 1;
    2 * per_sign + 1
}

fn positives(fmt: FpFormat) -> Vec<Fp> {
    let mut out = Vec::new();
    for sig in 1..fmt.min_normal_sig() {
        out.push(Fp::Finite { neg: false, exp: fmt.emin(), sig });
    }
    for exp in fmt.emin()..=fmt.emax() {
        for sig in fmt.min_normal_sig()..=fmt.max_sig() {
            out.push(Fp::Finite { neg: false, exp, sig });
        }
    }
    out
}

/// Every finite value once, ascending.
pub fn enumerate_finite(fmt: FpFormat) -> Vec<Fp> {
    let pos = positives(fmt);
    let mut out: Vec<Fp> = pos.iter().rev().map(|x| x.neg()).collect();
    out.push(fmt.zero());
    out.extend(pos);
    out
}

/// Finite values followed by -∞, ∞ and NaN.
pub fn enumerate_all(fmt: FpFormat) -> Vec<Fp> {
    let mut out = enumerate_finite(fmt);
    out.extend([Fp::NegInf, Fp::PosInf, Fp::NaN]);
    out
}
