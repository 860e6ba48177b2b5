//! End-to-end construction checks at desk scale, and the gadgets they are built from.

use std::collections::HashSet;

use super::{par_map, Outcome, SuiteConfig, Tally};
use crate::constructions::blocks::pad_tokens;
use crate::constructions::factorize::{constant_inputs, distinct_inputs, random_inputs};
use crate::constructions::{
    assemble_thm1_model, assemble_thm3_model, build_counter_block, build_indicator, build_injective_encoder,
    build_order_detect_block, Alphabet, HashedPermTarget, OrderDetectorConfig, TripleCatalog,
};
use crate::constructions::factorize::SwapEquivTable;
use crate::error::{Error, Result};
use crate::fp::{enumerate_finite, fp_cmp, parse_literal, Fp, FpFormat};
use crate::linalg::{permute_columns, FpMatrix, Permutation};
use crate::transformer::TransformerModel;

pub const THM1_ALPHABET: [&str; 4] = ["1", "1.25", "2", "3"];
pub const THM1_N: usize = 3;
pub const THM3_N: usize = 5;
pub const THM3_RANDOM_INPUTS: usize = 1000;

fn render(m: &FpMatrix, fmt: FpFormat) -> String {
    let cols: Vec<Vec<String>> = m.columns().iter().map(|c| c.iter().map(|&v| fmt.render(v)).collect()).collect();
    format!("{cols:?}")
}

fn scalar_alphabet(lits: &[&str], fmt: FpFormat) -> Result<Alphabet> {
    Alphabet::new(lits.iter().map(|s| parse_literal(s, fmt).map(|v| vec![v])).collect::<Result<_>>()?)
}

/// Model output against the target on every input.
fn exactness(model: &TransformerModel, target: &(dyn Fn(&FpMatrix) -> Result<FpMatrix> + Sync), inputs: &[FpMatrix], label: &str) -> Vec<Outcome> {
    let fmt = model.format;
    par_map(inputs, |x| {
        let run = || -> Result<(FpMatrix, FpMatrix)> { Ok((model.forward(x)?, target(x)?)) };
        match run() {
            Ok((got, want)) => {
                Outcome::check(got == want, || (format!("{label} X={}", render(x, fmt)), render(&want, fmt), render(&got, fmt)))
            }
            Err(e) => Outcome::check(false, || (format!("{label} X={}", render(x, fmt)), "forward pass".into(), e.to_string())),
        }
    })
}

fn cycle_witness(model: &TransformerModel, inputs: &[FpMatrix]) -> Result<Option<FpMatrix>> {
    let cycle = Permutation::cycle(model.n());
    for x in inputs {
        if model.forward(&permute_columns(&cycle, x)?)? != permute_columns(&cycle, &model.forward(x)?)? {
            return Ok(Some(x.clone()));
        }
    }
    Ok(None)
}

fn constant_target(d_out: usize, fmt: FpFormat) -> impl Fn(&FpMatrix) -> Result<FpMatrix> + Sync {
    let c = fmt.pow2(-1).expect("1/2");
    move |x: &FpMatrix| Ok(FpMatrix::filled(d_out, x.cols(), c))
}

fn identity_target(x: &FpMatrix) -> Result<FpMatrix> {
    Ok(x.clone())
}

pub(super) fn thm1(fmt: FpFormat, cfg: &SuiteConfig, t: &mut Tally) {
    if let Err(e) = thm1_inner(fmt, cfg, t) {
        t.error("thm1 build", &e);
    }
}

fn thm1_inner(fmt: FpFormat, cfg: &SuiteConfig, t: &mut Tally) -> Result<()> {
    let catalog = TripleCatalog::new(scalar_alphabet(&THM1_ALPHABET, fmt)?)?;
    let alphabet = catalog.alphabet().clone();
    let inputs = distinct_inputs(&alphabet, THM1_N)?;

    let table = SwapEquivTable::random(&alphabet, THM1_N, 1, cfg.seed, fmt)?;
    let target = |x: &FpMatrix| table.eval(x);
    let built = assemble_thm1_model(&target, &catalog, THM1_N, 1, fmt)?;
    t.extend(exactness(&built.model, &target, &inputs, "random target"));
    let witness = cycle_witness(&built.model, &inputs)?;
    t.check(witness.is_some(), || ("3-cycle equivariance".into(), "violated somewhere".into(), "holds on every input".into()));
    if let Some(x) = witness {
        let cycle = Permutation::cycle(THM1_N);
        t.note(format!(
            "3-cycle witness: X = {}, f(cX) = {}, c f(X) = {}",
            render(&x, fmt),
            render(&built.model.forward(&permute_columns(&cycle, &x)?)?, fmt),
            render(&permute_columns(&cycle, &built.model.forward(&x)?)?, fmt)
        ));
    }
    t.note(format!("gamma = {}, d = {}", catalog.gamma(), built.manifest.layout.d()));

    let id = assemble_thm1_model(&identity_target, &catalog, THM1_N, 1, fmt)?;
    t.extend(exactness(&id.model, &identity_target, &inputs, "identity target"));
    let constant = constant_target(1, fmt);
    let c = assemble_thm1_model(&constant, &catalog, THM1_N, 1, fmt)?;
    t.extend(exactness(&c.model, &constant, &inputs, "constant target"));
    Ok(())
}

pub(super) fn thm3(fmt: FpFormat, cfg: &SuiteConfig, t: &mut Tally) {
    if let Err(e) = thm3_inner(fmt, cfg, t) {
        t.error("thm3 build", &e);
    }
}

fn thm3_inner(fmt: FpFormat, cfg: &SuiteConfig, t: &mut Tally) -> Result<()> {
    let alphabet = Alphabet::full(fmt);
    let n = THM3_N;
    let mut domain = random_inputs(&alphabet, n, cfg.samples_or(THM3_RANDOM_INPUTS), cfg.seed)?;
    domain.extend(constant_inputs(&alphabet, n)?);

    let hashed = HashedPermTarget::new(cfg.seed, 1, fmt);
    let target = |x: &FpMatrix| hashed.eval(x);
    let built = assemble_thm3_model(&target, &alphabet, &domain, n, 1, fmt)?;
    t.extend(exactness(&built.model, &target, &domain, "hashed target"));
    t.note(format!("decoder keys = {}, d = {}", built.manifest.decoder_keys, built.manifest.layout.d()));

    // The targets below only need a small slice of the domain to show the mechanism.
    let slice = &domain[..domain.len().min(60)];
    let id = assemble_thm3_model(&identity_target, &alphabet, slice, n, 1, fmt)?;
    t.extend(exactness(&id.model, &identity_target, slice, "identity target"));
    let constant = constant_target(1, fmt);
    let c = assemble_thm3_model(&constant, &alphabet, slice, n, 1, fmt)?;
    t.extend(exactness(&c.model, &constant, slice, "constant target"));

    let max = crate::constructions::assemble::max_count_length(fmt);
    let too_long = assemble_thm3_model(&identity_target, &alphabet, &[], max + 1, 1, fmt);
    t.check(matches!(too_long, Err(Error::Length { .. })), || {
        (format!("n = {}", max + 1), "length error".into(), format!("{:?}", too_long.as_ref().map(|_| "built")))
    });
    Ok(())
}

pub(super) fn gadgets(fmt: FpFormat, t: &mut Tally) {
    for (name, r) in [("encoder", encoder(fmt, t)), ("indicator", indicator(fmt, t))] {
        if let Err(e) = r {
            t.error(name, &e);
        }
    }
    if let Err(e) = order_detector(fmt, t) {
        t.error("order detector", &e);
    }
    if let Err(e) = counter(fmt, t) {
        t.error("counter", &e);
    }
}

fn encoder(fmt: FpFormat, t: &mut Tally) -> Result<()> {
    let enc = build_injective_encoder(1, fmt)?;
    let mut seen = HashSet::new();
    for x in enumerate_finite(fmt) {
        let code = enc.eval(&[x], fmt)?;
        let bounded = code.iter().all(|v| v.is_finite() && !v.is_negative());
        let fresh = seen.insert(code.clone());
        t.check(bounded && fresh, || {
            (format!("encode({})", fmt.render(x)), "fresh finite code".into(), format!("{code:?}"))
        });
    }
    Ok(())
}

fn indicator(fmt: FpFormat, t: &mut Tally) -> Result<()> {
    let xs = enumerate_finite(fmt);
    let rows = par_map(&xs, |&k| -> Result<Vec<Outcome>> {
        let ind = build_indicator(&[k], fmt)?;
        xs.iter()
            .map(|&x| {
                let got = ind.eval(&[x], fmt)?[0];
                let want = if x == k { fmt.one() } else { fmt.zero() };
                Ok(Outcome::check(got == want, || {
                    (format!("indicator[{}]({})", fmt.render(k), fmt.render(x)), fmt.render(want), fmt.render(got))
                }))
            })
            .collect()
    });
    for r in rows {
        t.extend(r?);
    }
    Ok(())
}

/// Every placement of triple 0 in n=5 with the fourth symbol as filler, for each rotation:
/// the slot reads δ exactly when the rotation's trailing value sits last.
fn order_detector(fmt: FpFormat, t: &mut Tally) -> Result<()> {
    let n = 5;
    let catalog = TripleCatalog::new(scalar_alphabet(&THM1_ALPHABET, fmt)?)?;
    let cfg = OrderDetectorConfig::new(n, fmt)?;
    let stack = build_order_detect_block(&catalog, n, fmt)?;
    let d = stack.dims().d;
    let d_in = catalog.alphabet().d_in();
    let tokens = catalog.alphabet().tokens();
    let triple = catalog.triples()[0];
    let filler = (0..tokens.len()).find(|i| !triple.contains(i)).expect("four symbols");
    for a in 0..n {
        for b in (0..n).filter(|&b| b != a) {
            for c in (0..n).filter(|&c| c != a && c != b) {
                let mut idx = vec![filler; n];
                idx[a] = triple[0];
                idx[b] = triple[1];
                idx[c] = triple[2];
                let x = FpMatrix::from_columns(&idx.iter().map(|&i| tokens[i].clone()).collect::<Vec<_>>())?;
                let y = stack.forward(&pad_tokens(&x, d, fmt)?, fmt)?;
                let last = idx[a.max(b).max(c)];
                for k in 1..=3 {
                    let row = d_in + TripleCatalog::slot(0, k);
                    let flag = y.get(row, 0);
                    let uniform = (0..n).all(|j| y.get(row, j) == flag);
                    let fires = flag == cfg.delta;
                    let want = last == catalog.trailing(0, k);
                    t.check(uniform && fires == want, || {
                        (format!("placement {idx:?} rotation {k}"), format!("fires = {want}"), fmt.render(flag))
                    });
                }
            }
        }
    }
    Ok(())
}

/// Two symbols, n = 17: flags for counts 0..=11 are distinct, 12..=17 read 2^(p+2).
fn counter(fmt: FpFormat, t: &mut Tally) -> Result<()> {
    let n = 17;
    let alphabet = scalar_alphabet(&["1", "2"], fmt)?;
    let stack = build_counter_block(&alphabet, n, fmt)?;
    let d = stack.dims().d;
    let distinct_upto = 3 * (1usize << fmt.p()) - 1;
    let cap = fmt.pow2(fmt.p() as i32 + 2).ok_or_else(|| Error::NotRepresentable("2^(p+2)".into()))?;
    let mut seen: Vec<Fp> = Vec::new();
    for count in 0..=n {
        // Spread the counted symbol over the positions.
        let idx: Vec<usize> = (0..n).map(|j| usize::from((j + 1) * count / n == j * count / n)).collect();
        debug_assert_eq!(idx.iter().filter(|&&i| i == 0).count(), count.min(n));
        let cols: Vec<Vec<Fp>> = idx.iter().map(|&i| alphabet.tokens()[i].clone()).collect();
        let x = FpMatrix::from_columns(&cols)?;
        let y = stack.forward(&pad_tokens(&x, d, fmt)?, fmt)?;
        let row = alphabet.d_in();
        let flag = y.get(row, 0);
        let uniform = (0..n).all(|j| y.get(row, j) == flag);
        if count <= distinct_upto {
            let fresh = !seen.contains(&flag);
            seen.push(flag);
            t.check(uniform && fresh && flag.is_finite(), || (format!("count {count}"), "a new flag".into(), fmt.render(flag)));
        } else {
            t.check(uniform && fp_cmp(flag, cap) == Some(std::cmp::Ordering::Equal), || {
                (format!("count {count}"), fmt.render(cap), fmt.render(flag))
            });
        }
    }
    Ok(())
}
