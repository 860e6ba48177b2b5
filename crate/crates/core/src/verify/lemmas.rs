//! Scalar lemmas: non-associativity identities, multiplier solvers, saturation, position encodings.

use std::collections::HashMap;

use super::{par_map, Outcome, Tally};
use crate::constructions::solve_mul_target;
use crate::fp::{enumerate_all, enumerate_finite, fp_add, fp_cmp, fp_mul, succ, Fp, FpFormat};

fn plus(x: Fp, k: usize, fmt: FpFormat) -> Fp {
    (0..k).fold(x, |v, _| succ(v, fmt).expect("finite successor"))
}

fn int(k: i64, fmt: FpFormat) -> Fp {
    fmt.from_int(k)
}

fn add3(a: Fp, b: Fp, c: Fp, fmt: FpFormat) -> Fp {
    fp_add(fp_add(a, b, fmt), c, fmt)
}

fn identity(t: &mut Tally, name: &str, got: Fp, want: Fp, fmt: FpFormat) {
    t.check(got == want, || (name.into(), fmt.render(want), fmt.render(got)));
}

pub(super) fn oneppp(fmt: FpFormat, t: &mut Tally) {
    if fmt.p() < 3 {
        t.push(Outcome::Skip);
        t.note("needs p >= 3");
        return;
    }
    let one = fmt.one();
    let (p1, p2) = (plus(one, 1, fmt), plus(one, 2, fmt));
    let three = int(3, fmt);
    identity(t, "(1+ + 1++) + 1++", add3(p1, p2, p2, fmt), plus(three, 3, fmt), fmt);
    identity(t, "(1++ + 1+) + 1++", add3(p2, p1, p2, fmt), plus(three, 3, fmt), fmt);
    identity(t, "(1++ + 1++) + 1+", add3(p2, p2, p1, fmt), plus(three, 2, fmt), fmt);
}

pub(super) fn onep2(fmt: FpFormat, t: &mut Tally) {
    if fmt.p() != 2 {
        t.push(Outcome::Skip);
        t.note("needs p = 2");
        return;
    }
    let one = fmt.one();
    let p1 = plus(one, 1, fmt);
    let three = int(3, fmt);
    identity(t, "(1+ + 1) + 1+", add3(p1, one, p1, fmt), three, fmt);
    identity(t, "(1 + 1+) + 1+", add3(one, p1, p1, fmt), three, fmt);
    identity(t, "(1+ + 1+) + 1", add3(p1, p1, one, fmt), plus(three, 1, fmt), fmt);
    let half = fmt.pow2(-1).expect("1/2");
    let below_one = fmt.pred(one).expect("1-");
    for x in open_one_two(fmt) {
        solver_case(t, x, one, half, below_one, fmt);
    }
}

/// (1, 2] in ascending order.
fn open_one_two(fmt: FpFormat) -> Vec<Fp> {
    let (one, two) = (fmt.one(), int(2, fmt));
    enumerate_finite(fmt)
        .into_iter()
        .filter(|&x| fp_cmp(x, one).is_some_and(|o| o.is_gt()) && fp_cmp(x, two).is_some_and(|o| o.is_le()))
        .collect()
}

fn in_range(y: Fp, lo: Fp, hi: Fp) -> bool {
    fp_cmp(y, lo).is_some_and(|o| o.is_ge()) && fp_cmp(y, hi).is_some_and(|o| o.is_le())
}

/// The solver's answer must lie in [lo, hi] and hit the target under ⊗.
fn solver_case(t: &mut Tally, x: Fp, target: Fp, lo: Fp, hi: Fp, fmt: FpFormat) {
    let case = || format!("{} * y = {} with y in [{}, {}]", fmt.render(x), fmt.render(target), fmt.render(lo), fmt.render(hi));
    match solve_mul_target(x, target, lo, hi, fmt) {
        Ok(y) => {
            let ok = in_range(y, lo, hi) && fp_mul(x, y, fmt) == target;
            t.check(ok, || (case(), "in-range solution".into(), fmt.render(y)));
        }
        Err(e) => t.check(false, || (case(), "a solution".into(), e.to_string())),
    }
}

pub(super) fn one_plus(fmt: FpFormat, t: &mut Tally) {
    let one = fmt.one();
    let half = fmt.pow2(-1).expect("1/2");
    let above_half = succ(half, fmt).expect("1/2+");
    let (p1, p2) = (plus(one, 1, fmt), plus(one, 2, fmt));
    for x in open_one_two(fmt) {
        solver_case(t, x, p1, above_half, one, fmt);
        solver_case(t, x, p2, above_half, p1, fmt);
    }
}

/// [init, init ⊕ x, init ⊕ x ⊕ x, ...] with `len` steps after `init`.
fn chain(init: Fp, x: Fp, len: usize, fmt: FpFormat) -> Vec<Fp> {
    let mut out = Vec::with_capacity(len + 1);
    let mut acc = init;
    out.push(acc);
    for _ in 0..len {
        acc = fp_add(acc, x, fmt);
        out.push(acc);
    }
    out
}

/// Closed form of the k-fold sum of 1^+ for k in 0..3·2^p.
fn max_distinguish_closed_form(k: usize, fmt: FpFormat) -> Fp {
    let p = fmt.p();
    let (lo, mid) = (1usize << p, 1usize << (p + 1));
    let v = |i: usize| int(i as i64, fmt);
    match k {
        0 => fmt.zero(),
        1 => plus(fmt.one(), 1, fmt),
        2 => plus(v(2), 1, fmt),
        3 => plus(v(3), 2, fmt),
        _ if k <= lo => plus(v(k), 1, fmt),
        _ if k < mid => v(k + 1),
        _ => v(mid + 2 * (k - mid + 1)),
    }
}

pub(super) fn max_distinguish(fmt: FpFormat, t: &mut Tally) {
    let p = fmt.p();
    if p < 2 || fmt.emax() < p as i32 + 2 {
        t.push(Outcome::Skip);
        t.note("needs p >= 2 and 2^(p+2) representable");
        return;
    }
    let last = 3 * (1usize << p) - 1;
    let one_plus = plus(fmt.one(), 1, fmt);
    let xs = chain(fmt.zero(), one_plus, last + 5, fmt);
    for (k, &x) in xs.iter().enumerate().take(last + 1) {
        let want = max_distinguish_closed_form(k, fmt);
        t.check(x == want, || (format!("x_{k}"), fmt.render(want), fmt.render(x)));
    }
    let mut seen = HashMap::new();
    for (k, &x) in xs.iter().enumerate().take(last + 1) {
        let first = *seen.entry(x).or_insert(k);
        t.check(first == k, || (format!("x_{k} distinct"), "new value".into(), format!("equals x_{first}")));
    }
    let cap = fmt.pow2(p as i32 + 2).expect("2^(p+2)");
    for (extra, &x) in xs[last..].iter().enumerate() {
        t.check(x == cap, || (format!("x_{}", last + extra), fmt.render(cap), fmt.render(x)));
    }
}

fn is_pow2(x: Fp, fmt: FpFormat) -> bool {
    match x {
        Fp::Finite { sig, .. } => sig != 0 && (sig == 1 << fmt.p() || (sig.is_power_of_two() && sig < 1 << fmt.p())),
        _ => false,
    }
}

fn is_special(x: Fp) -> bool {
    x.is_zero() || !x.is_finite()
}

/// Every chain value at the listed offsets must agree with the one at `base`.
fn same_tail(out: &mut Vec<Outcome>, label: &str, values: &[Fp], base: usize, fmt: FpFormat) {
    for extra in [1, 5] {
        let (a, b) = (values[base], values[base + extra]);
        out.push(Outcome::check(a == b, || (format!("{label} n=0 vs n={extra}"), fmt.render(a), fmt.render(b))));
    }
}

/// Same-sum lemmas. The z-prefixed sums are read as a left fold that starts at z.
pub(super) fn saturation(fmt: FpFormat, t: &mut Tally) {
    let p = fmt.p();
    if p < 2 {
        t.push(Outcome::Skip);
        t.note("needs p >= 2");
        return;
    }
    let n1 = 3 * (1usize << p) - 1;
    let n2 = 6 * (1usize << p);
    let all = enumerate_all(fmt);

    // same-sum0: x over every value, no z.
    let rows = par_map(&all, |&x| {
        let mut out = Vec::new();
        let xs = chain(x, x, n1 + 4, fmt);
        // xs[k] is the (k+1)-fold sum.
        let label = format!("same-sum0 x={}", fmt.render(x));
        same_tail(&mut out, &label, &xs, n1 - 1, fmt);
        let s = xs[n1 - 1];
        let ok = is_special(s) || is_pow2(s, fmt);
        out.push(Outcome::check(ok, || (label, "0, ±inf, NaN or ±2^e".into(), fmt.render(s))));
        out
    });
    t.extend(rows.into_iter().flatten());

    // same-sum1: x >= 0 finite, z >= 0 finite or +inf.
    let nonneg: Vec<Fp> = enumerate_finite(fmt).into_iter().filter(|x| !x.is_negative()).collect();
    let mut zs1 = nonneg.clone();
    zs1.push(Fp::PosInf);
    let rows = par_map(&nonneg, |&x| {
        let mut out = Vec::new();
        for &z in &zs1 {
            let label = format!("same-sum1 x={} z={}", fmt.render(x), fmt.render(z));
            let c = chain(z, x, n1 + 5, fmt);
            same_tail(&mut out, &label, &c, n1, fmt);
            let s = c[n1];
            let z_plus = succ(z, fmt).unwrap_or(z);
            let ok = is_special(s) || s == z || s == z_plus || (is_pow2(s, fmt) && !s.is_negative());
            out.push(Outcome::check(ok, || (label, "0, z, z+, ±inf, NaN or 2^e".into(), fmt.render(s))));
        }
        out
    });
    t.extend(rows.into_iter().flatten());

    // same-sum2: x over every value, z in {0, ±inf, NaN} ∪ {±2^e}.
    let zs2: Vec<Fp> = all.iter().copied().filter(|&z| is_special(z) || is_pow2(z, fmt)).collect();
    let rows = par_map(&all, |&x| {
        let mut out = Vec::new();
        for &z in &zs2 {
            let label = format!("same-sum2 x={} z={}", fmt.render(x), fmt.render(z));
            let c = chain(z, x, n2 + 5, fmt);
            same_tail(&mut out, &label, &c, n2, fmt);
        }
        out
    });
    t.extend(rows.into_iter().flatten());
}

/// x ↦ x ⊕ z collides on the finite floats for every z ≠ 0.
pub(super) fn posenc(fmt: FpFormat, t: &mut Tally) {
    let finite = enumerate_finite(fmt);
    let zs: Vec<Fp> = enumerate_all(fmt).into_iter().filter(|z| !z.is_zero()).collect();
    let found = par_map(&zs, |&z| {
        let mut seen: HashMap<Fp, Fp> = HashMap::with_capacity(finite.len());
        finite.iter().find_map(|&x| seen.insert(fp_add(x, z, fmt), x).map(|prev| (prev, x)))
    });
    let omega = fmt.omega();
    // From 2^(emin+2) on, ω is below half an ulp. Between 2^(emin+1) and 2^(emin+2) it is
    // exactly half an ulp, so odd significands round up and 0 ⊕ z ≠ ω ⊕ z there.
    let threshold = fmt.pow2(fmt.emin() + 2).expect("2^(emin+2)");
    let tie_band = fmt.pow2(fmt.emin() + 1).expect("2^(emin+1)");
    let mut ties = Vec::new();
    let bound = fmt.pow2(fmt.emin() + fmt.p() as i32 + 2);
    for (&z, hit) in zs.iter().zip(&found) {
        let label = format!("collision for z={}", fmt.render(z));
        match hit {
            Some((a, b)) => {
                let ok = fp_add(*a, z, fmt) == fp_add(*b, z, fmt) && a != b;
                t.check(ok, || (label, "a != b with equal sums".into(), format!("{} {}", fmt.render(*a), fmt.render(*b))));
            }
            None => t.check(false, || (label, "a collision".into(), "none".into())),
        }
        let in_band = fp_cmp(z, tie_band).is_some_and(|o| o.is_ge()) && fp_cmp(z, threshold).is_some_and(|o| o.is_lt());
        if in_band && fp_add(fmt.zero(), z, fmt) != fp_add(omega, z, fmt) {
            ties.push(fmt.render(z));
        }
        if z.is_finite() && fp_cmp(z, threshold).is_some_and(|o| o.is_ge()) {
            let (a, b) = (fp_add(fmt.zero(), z, fmt), fp_add(omega, z, fmt));
            t.check(a == b, || (format!("0+z = w+z for z={}", fmt.render(z)), fmt.render(a), fmt.render(b)));
        }
    }
    if !ties.is_empty() {
        t.note(format!("w + z rounds up on a tie for z in {}", ties.join(", ")));
    }
    // The smallest positive z collides below 2^(emin+p+2).
    let at_omega = zs.iter().position(|&z| z == omega).and_then(|i| found[i]);
    if let (Some(bound), Some((a, b))) = (bound, at_omega) {
        let ok = [a, b].iter().all(|&v| fp_cmp(v, bound).is_some_and(|o| o.is_le()));
        t.check(ok, || ("collision for z=w below 2^(emin+p+2)".into(), fmt.render(bound), format!("{} {}", fmt.render(a), fmt.render(b))));
        t.note(format!("z=w collides at ({}, {})", fmt.render(a), fmt.render(b)));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_distinguish_table_at_p2() {
        let fmt = FpFormat::new(2, 4).unwrap();
        // Worked by hand with ties-to-even at p=2.
        let want = [0.0, 1.25, 2.5, 4.0, 5.0, 6.0, 7.0, 8.0, 10.0, 12.0, 14.0, 16.0];
        for (k, w) in want.iter().enumerate() {
            let got = max_distinguish_closed_form(k, fmt);
            assert_eq!(got, crate::fp::parse_literal(&w.to_string(), fmt).unwrap(), "k={k}");
        }
    }

    #[test]
    fn pow2_detection() {
        let fmt = FpFormat::new(2, 4).unwrap();
        assert!(is_pow2(fmt.omega(), fmt));
        assert!(is_pow2(fmt.one().neg(), fmt));
        assert!(!is_pow2(fmt.from_int(3), fmt));
        assert!(!is_pow2(fmt.zero(), fmt));
    }
}
