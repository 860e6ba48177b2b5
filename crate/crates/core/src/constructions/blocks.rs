//! Token-flag blocks: the order detector and the counter.

use std::collections::HashMap;

use super::gadgets::{build_memorizer, LookupTable};
use super::pipeline::{embed_specs, realize, scratch_width, AttnSpec, BlockSpec, IoLayout, Pipeline};
use super::solve::{CounterConfig, OrderDetectorConfig};
use crate::error::{Error, Result};
use crate::fp::{fp_add, fp_mul, Fp, FpFormat};
use crate::linalg::FpMatrix;
use crate::transformer::BlockStack;

/// Ordered set of distinct finite tokens in F^d_in.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alphabet {
    d_in: usize,
    tokens: Vec<Vec<Fp>>,
    index: HashMap<Vec<Fp>, usize>,
}

impl Alphabet {
    pub fn new(tokens: Vec<Vec<Fp>>) -> Result<Alphabet> {
        let d_in = tokens.first().map_or(0, Vec::len);
        if d_in == 0 || tokens.iter().any(|t| t.len() != d_in) {
            return Err(Error::Shape("alphabet tokens must share a non-zero dimension".into()));
        }
        if tokens.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Alphabet("alphabet tokens must be finite".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Alphabet(format!("duplicate token {t:?}")));
            }
        }
        Ok(Alphabet { d_in, tokens, index })
    }

    /// Every finite float as a one-dimensional token, in ascending order.
    pub fn full(fmt: FpFormat) -> Alphabet {
        Alphabet::new(crate::fp::enumerate_finite(fmt).into_iter().map(|x| vec![x]).collect()).expect("distinct floats")
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[Vec<Fp>] {
        &self.tokens
    }

    pub fn index_of(&self, token: &[Fp]) -> Option<usize> {
        self.index.get(token).copied()
    }

    fn lookup(&self, token: &[Fp]) -> Result<usize> {
        self.index_of(token).ok_or_else(|| Error::Alphabet(format!("{token:?}")))
    }
}

/// All 3-subsets of an alphabet in lexicographic order, with the three cyclic rotations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TripleCatalog {
    alphabet: Alphabet,
    triples: Vec<[usize; 3]>,
}

impl TripleCatalog {
    pub fn new(alphabet: Alphabet) -> Result<TripleCatalog> {
        let a = alphabet.len();
        if a < 3 {
            return Err(Error::Alphabet(format!("triple catalog needs at least 3 tokens, got {a}")));
        }
        let mut triples = Vec::new();
        for i in 0..a {
            for j in i + 1..a {
                for k in j + 1..a {
                    triples.push([i, j, k]);
                }
            }
        }
        Ok(TripleCatalog { alphabet, triples })
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn triples(&self) -> &[[usize; 3]] {
        &self.triples
    }

    /// γ.
    pub fn gamma(&self) -> usize {
        self.triples.len()
    }

    /// π_k(x) = x + (k-1) mod 3 on {1,2,3}, with k and the result 1-based.
    pub fn rotate(k: usize, x: usize) -> usize {
        (x - 1 + k - 1) % 3 + 1
    }

    /// Alphabet index of z_{j, π_k(3)}, the value that must come last for slot (j, k).
    pub fn trailing(&self, j: usize, k: usize) -> usize {
        self.triples[j][Self::rotate(k, 3) - 1]
    }

    /// Flag token `t` contributes to slot (j, k): β′ for the two leading values, β for
    /// the trailing one, 0 otherwise.
    pub fn token_flag(&self, t: usize, j: usize, k: usize, cfg: &OrderDetectorConfig, fmt: FpFormat) -> Fp {
        let tri = self.triples[j];
        if t == self.trailing(j, k) {
            cfg.beta
        } else if tri.contains(&t) {
            cfg.beta_prime
        } else {
            fmt.zero()
        }
    }

    /// Slot index of (j, k) with k 1-based.
    pub fn slot(j: usize, k: usize) -> usize {
        3 * j + (k - 1)
    }
}

/// Attention fold 0 ⊕ (v_1 ⊗ α) ⊕ ... ⊕ (v_n ⊗ α) for every slot.
fn attention_fold(per_token: &[Vec<Fp>], slots: usize, alpha: Fp, fmt: FpFormat) -> Vec<Fp> {
    (0..slots)
        .map(|s| per_token.iter().fold(fmt.zero(), |acc, v| fp_add(acc, fp_mul(v[s], alpha, fmt), fmt)))
        .collect()
}

fn token_indices(x: &FpMatrix, alphabet: &Alphabet) -> Result<Vec<usize>> {
    if x.rows() != alphabet.d_in() {
        return Err(Error::Shape(format!("tokens have {} rows, alphabet {}", x.rows(), alphabet.d_in())));
    }
    x.columns().iter().map(|c| alphabet.lookup(c)).collect()
}

/// Per-token flag vectors of the order detector, indexed by alphabet position.
pub fn order_flag_table(catalog: &TripleCatalog, cfg: &OrderDetectorConfig, fmt: FpFormat) -> Vec<Vec<Fp>> {
    (0..catalog.alphabet().len())
        .map(|t| {
            (0..catalog.gamma())
                .flat_map(|j| (1..=3).map(move |k| (j, k)))
                .map(|(j, k)| catalog.token_flag(t, j, k, cfg, fmt))
                .collect()
        })
        .collect()
}

/// Flags the order detector writes into coordinates d_in + 3j + (k-1).
pub fn order_flags(x: &FpMatrix, catalog: &TripleCatalog, cfg: &OrderDetectorConfig, fmt: FpFormat) -> Result<Vec<Fp>> {
    let table = order_flag_table(catalog, cfg, fmt);
    let per: Vec<Vec<Fp>> = token_indices(x, catalog.alphabet())?.into_iter().map(|t| table[t].clone()).collect();
    Ok(attention_fold(&per, 3 * catalog.gamma(), cfg.alpha, fmt))
}

/// Per-token flag vectors of the counter: β in the token's own slot.
pub fn count_flag_table(alphabet: &Alphabet, cfg: &CounterConfig, fmt: FpFormat) -> Vec<Vec<Fp>> {
    (0..alphabet.len())
        .map(|t| (0..alphabet.len()).map(|j| if j == t { cfg.beta } else { fmt.zero() }).collect())
        .collect()
}

/// Flags the counter writes into coordinates d_in + j: ⊕_{i ≤ k_j} 1^+.
pub fn count_flags(x: &FpMatrix, alphabet: &Alphabet, cfg: &CounterConfig, fmt: FpFormat) -> Result<Vec<Fp>> {
    let table = count_flag_table(alphabet, cfg, fmt);
    let per: Vec<Vec<Fp>> = token_indices(x, alphabet)?.into_iter().map(|t| table[t].clone()).collect();
    Ok(attention_fold(&per, alphabet.len(), cfg.alpha, fmt))
}

/// Multiplicity of each alphabet token among the columns of X.
pub fn count_vector(x: &FpMatrix, alphabet: &Alphabet) -> Result<Vec<usize>> {
    let mut counts = vec![0; alphabet.len()];
    for t in token_indices(x, alphabet)? {
        counts[t] += 1;
    }
    Ok(counts)
}

/// Residual stream layout shared by the flag blocks and the assemblies:
/// [tokens d_in | flags | outputs d_out | scratch | staging flags].
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub struct ResidualLayout {
    pub d_in: usize,
    pub slots: usize,
    pub d_out: usize,
    pub scratch: usize,
}

impl ResidualLayout {
    pub fn flags_start(&self) -> usize {
        self.d_in
    }

    pub fn outputs_start(&self) -> usize {
        self.d_in + self.slots
    }

    pub fn scratch_start(&self) -> usize {
        self.outputs_start() + self.d_out
    }

    pub fn staging_start(&self) -> usize {
        self.scratch_start() + self.scratch
    }

    pub fn d(&self) -> usize {
        self.staging_start() + self.slots
    }
}

/// Token-wise memorizer from tokens to their flag vectors.
pub fn flag_memorizer(alphabet: &Alphabet, per_token: &[Vec<Fp>], fmt: FpFormat) -> Result<Pipeline> {
    let mut table = LookupTable::new(alphabet.d_in(), per_token.first().map_or(0, Vec::len));
    for (t, v) in alphabet.tokens().iter().zip(per_token) {
        table.insert(t.clone(), v.clone())?;
    }
    build_memorizer(&table, fmt)
}

/// g1 (memorizer into the staging block), then one block with uniform attention copying
/// staged sums into the flag block and an FF erasing the staging block.
pub fn flag_block_specs(g1: &Pipeline, layout: &ResidualLayout, fmt: FpFormat) -> Result<Vec<BlockSpec>> {
    let io = IoLayout {
        inputs: (0..layout.d_in).collect(),
        outputs: (layout.staging_start()..layout.d()).collect(),
        scratch_start: layout.scratch_start(),
    };
    let mut specs = embed_specs(g1, &io, layout.d(), fmt)?;
    let one = fmt.one();
    let staged = |s: usize| layout.staging_start() + s;
    let attn = AttnSpec {
        wv: (0..layout.slots).map(|s| vec![(staged(s), one)]).collect(),
        wo: (0..layout.slots).map(|s| (layout.flags_start() + s, vec![(s, one)])).collect(),
    };
    specs.push(BlockSpec {
        attn: Some(attn),
        w1: (0..layout.slots).map(|s| vec![(staged(s), one)]).collect(),
        b1: vec![fmt.zero(); layout.slots],
        w2: (0..layout.slots).map(|s| (staged(s), vec![(s, one.neg())])).collect(),
        b2: Vec::new(),
    });
    Ok(specs)
}

fn standalone(g1: &Pipeline, d_in: usize, slots: usize, n: usize, fmt: FpFormat) -> Result<BlockStack> {
    let layout = ResidualLayout { d_in, slots, d_out: 0, scratch: scratch_width(g1) };
    Ok(realize(&flag_block_specs(g1, &layout, fmt)?, layout.d(), n, fmt)?.0)
}

/// Order detector over a triple catalog. Residual layout: [tokens | 3γ flags | scratch | 3γ staging].
pub fn build_order_detect_block(catalog: &TripleCatalog, n: usize, fmt: FpFormat) -> Result<BlockStack> {
    if n < 2 {
        return Err(Error::Shape(format!("order detector needs n >= 2, got {n}")));
    }
    let cfg = OrderDetectorConfig::new(n, fmt)?;
    let g1 = flag_memorizer(catalog.alphabet(), &order_flag_table(catalog, &cfg, fmt), fmt)?;
    standalone(&g1, catalog.alphabet().d_in(), 3 * catalog.gamma(), n, fmt)
}

/// Counter over an alphabet. Residual layout: [tokens | |A| flags | scratch | |A| staging].
pub fn build_counter_block(alphabet: &Alphabet, n: usize, fmt: FpFormat) -> Result<BlockStack> {
    let cfg = CounterConfig::new(n, fmt)?;
    let g1 = flag_memorizer(alphabet, &count_flag_table(alphabet, &cfg, fmt), fmt)?;
    standalone(&g1, alphabet.d_in(), alphabet.len(), n, fmt)
}

/// Pads token columns with zeros to the residual width d.
pub fn pad_tokens(x: &FpMatrix, d: usize, fmt: FpFormat) -> Result<FpMatrix> {
    let cols: Vec<Vec<Fp>> = x
        .columns()
        .into_iter()
        .map(|mut c| {
            c.resize(d, fmt.zero());
            c
        })
        .collect();
    FpMatrix::from_columns(&cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fp::succ;

    fn f() -> FpFormat {
        FpFormat::new(3, 4).unwrap()
    }

    fn tokens(vals: &[i64], fmt: FpFormat) -> Vec<Vec<Fp>> {
        vals.iter().map(|&v| vec![fmt.from_int(v)]).collect()
    }

    fn run(stack: &BlockStack, x: &FpMatrix, fmt: FpFormat) -> FpMatrix {
        stack.forward(&pad_tokens(x, stack.dims().d, fmt).unwrap(), fmt).unwrap()
    }

    #[test]
    fn catalog_rotations() {
        let cat = TripleCatalog::new(Alphabet::new(tokens(&[1, 2, 3, 4], f())).unwrap()).unwrap();
        assert_eq!(cat.gamma(), 4);
        assert_eq!(cat.triples()[0], [0, 1, 2]);
        assert_eq!((cat.trailing(0, 1), cat.trailing(0, 2), cat.trailing(0, 3)), (2, 0, 1));
    }

    #[test]
    fn order_detector_block_matches_flags() {
        let fmt = f();
        let alphabet = Alphabet::new(tokens(&[1, 2, 3, 4], fmt)).unwrap();
        let cat = TripleCatalog::new(alphabet.clone()).unwrap();
        let n = 3;
        let cfg = OrderDetectorConfig::new(n, fmt).unwrap();
        let stack = build_order_detect_block(&cat, n, fmt).unwrap();
        let x = FpMatrix::from_columns(&tokens(&[2, 1, 3], fmt)).unwrap();
        let y = run(&stack, &x, fmt);
        let flags = order_flags(&x, &cat, &cfg, fmt).unwrap();
        for j in 0..n {
            for (s, &v) in flags.iter().enumerate() {
                assert_eq!(y.get(1 + s, j), v);
            }
            assert!((1 + flags.len()..stack.dims().d).all(|c| y.get(c, j).is_zero()));
        }
        // Triple {1,2,3} with 3 last: the rotation trailing on index 2 reads δ.
        assert_eq!(flags[TripleCatalog::slot(0, 1)], cfg.delta);
        assert_ne!(flags[TripleCatalog::slot(0, 2)], cfg.delta);
        assert_ne!(flags[TripleCatalog::slot(0, 3)], cfg.delta);
        let three_pp = succ(succ(fmt.from_int(3), fmt).unwrap(), fmt).unwrap();
        assert_eq!(cfg.delta, three_pp);
    }

    #[test]
    fn counter_block_matches_flags() {
        let fmt = FpFormat::new(2, 4).unwrap();
        let alphabet = Alphabet::new(tokens(&[0, 1, 2], fmt)).unwrap();
        let n = 4;
        let cfg = CounterConfig::new(n, fmt).unwrap();
        let stack = build_counter_block(&alphabet, n, fmt).unwrap();
        let x = FpMatrix::from_columns(&tokens(&[2, 0, 2, 2], fmt)).unwrap();
        let y = run(&stack, &x, fmt);
        let flags = count_flags(&x, &alphabet, &cfg, fmt).unwrap();
        assert_eq!(flags, vec![cfg.flag_for_count(1, fmt), fmt.zero(), cfg.flag_for_count(3, fmt)]);
        for j in 0..n {
            for (s, &v) in flags.iter().enumerate() {
                assert_eq!(y.get(1 + s, j), v);
            }
        }
        assert_eq!(count_vector(&x, &alphabet).unwrap(), vec![1, 0, 3]);
    }
}
