//! End-to-end models: order detector or counter, then a token-wise decoder.

use std::collections::HashMap;

use serde::Serialize;

use super::blocks::{count_flag_table, flag_block_specs, flag_memorizer, order_flag_table, Alphabet, ResidualLayout, TripleCatalog};
use super::factorize::{factorize_perm_equiv, factorize_swap_equiv, Target};
use super::gadgets::{encode, encoder_layers, indicator_bank, rebase, LookupTable};
use super::pipeline::{embed_specs, realize, scratch_width, DimensionLedger, IoLayout, Layer, Pipeline};
use super::solve::{ConfigSummary, CounterConfig, OrderDetectorConfig};
use crate::error::{Error, Result};
use crate::fp::{fp_cmp, fp_sub, render_exact, Fp, FpFormat};
use crate::linalg::FpMatrix;
use crate::transformer::TransformerModel;

/// Build record written next to a model.
#[derive(Clone, Debug, Serialize)]
pub struct BuildManifest {
    pub theorem: String,
    pub p: u32,
    pub q: u32,
    pub n: usize,
    pub d_in: usize,
    pub d_out: usize,
    pub alphabet: Vec<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<usize>,
    pub constants: ConfigSummary,
    pub layout: ResidualLayout,
    pub dimensions: DimensionLedger,
    pub decoder_keys: usize,
}

pub struct Assembled {
    pub model: TransformerModel,
    pub manifest: BuildManifest,
}

fn projections(layout: &ResidualLayout, fmt: FpFormat) -> Result<(FpMatrix, FpMatrix)> {
    let d = layout.d();
    let mut w_in = vec![Vec::new(); d];
    for (i, row) in w_in.iter_mut().enumerate().take(layout.d_in) {
        row.push((i, fmt.one()));
    }
    let w_out = (0..layout.d_out).map(|o| vec![(layout.outputs_start() + o, fmt.one())]).collect();
    Ok((FpMatrix::from_sparse_rows(d, layout.d_in, w_in, fmt)?, FpMatrix::from_sparse_rows(layout.d_out, d, w_out, fmt)?))
}

struct Parts<'a> {
    alphabet: &'a Alphabet,
    g1: Pipeline,
    psi: Pipeline,
    slots: usize,
    d_out: usize,
    n: usize,
}

fn assemble(parts: Parts, fmt: FpFormat) -> Result<(TransformerModel, ResidualLayout, DimensionLedger)> {
    let d_in = parts.alphabet.d_in();
    let layout = ResidualLayout {
        d_in,
        slots: parts.slots,
        d_out: parts.d_out,
        scratch: scratch_width(&parts.g1).max(scratch_width(&parts.psi)),
    };
    let mut specs = flag_block_specs(&parts.g1, &layout, fmt)?;
    let io = IoLayout {
        inputs: (0..d_in + parts.slots).collect(),
        outputs: (layout.outputs_start()..layout.scratch_start()).collect(),
        scratch_start: layout.scratch_start(),
    };
    specs.extend(embed_specs(&parts.psi, &io, layout.d(), fmt)?);
    let (stack, ledger) = realize(&specs, layout.d(), parts.n, fmt)?;
    let (w_in, w_out) = projections(&layout, fmt)?;
    let model = TransformerModel::new(fmt, w_in, vec![fmt.zero(); layout.d()], stack, w_out, vec![fmt.zero(); parts.d_out])?;
    Ok((model, layout, ledger))
}

fn render_alphabet(alphabet: &Alphabet, fmt: FpFormat) -> Vec<Vec<String>> {
    alphabet.tokens().iter().map(|t| t.iter().map(|&v| render_exact(v, fmt)).collect()).collect()
}

/// W_out ⊗ (ψ ∘ φ(W_in ⊗ X)) with φ the order detector over the catalog and ψ the
/// memorizer of (token, order flags) -> f*(X)_i. Exact on distinct-token alphabet inputs.
pub fn assemble_thm1_model(f: Target, catalog: &TripleCatalog, n: usize, d_out: usize, fmt: FpFormat) -> Result<Assembled> {
    let cfg = OrderDetectorConfig::new(n, fmt)?;
    let table = factorize_swap_equiv(f, catalog, n, d_out, fmt)?;
    let alphabet = catalog.alphabet();
    let g1 = flag_memorizer(alphabet, &order_flag_table(catalog, &cfg, fmt), fmt)?;
    let psi = super::gadgets::build_memorizer(&table, fmt)?;
    let slots = 3 * catalog.gamma();
    let (model, layout, dimensions) = assemble(Parts { alphabet, g1, psi, slots, d_out, n }, fmt)?;
    let manifest = BuildManifest {
        theorem: "order-detector".into(),
        p: fmt.p(),
        q: fmt.q(),
        n,
        d_in: alphabet.d_in(),
        d_out,
        alphabet: render_alphabet(alphabet, fmt),
        gamma: Some(catalog.gamma()),
        constants: cfg.summary(fmt),
        layout,
        dimensions,
        decoder_keys: table.len(),
    };
    Ok(Assembled { model, manifest })
}

/// Largest sequence length the counting construction supports: 6·2^p - 2.
pub fn max_count_length(fmt: FpFormat) -> usize {
    6 * (1usize << fmt.p()) - 2
}

/// Count levels x_0..x_S of the counter with S = 3·2^p - 1, checked to be at least 1 apart.
fn count_levels(cfg: &CounterConfig, fmt: FpFormat) -> Result<Vec<Fp>> {
    let levels: Vec<Fp> = (0..=cfg.max_distinct_count).map(|k| cfg.flag_for_count(k, fmt)).collect();
    for w in levels.windows(2) {
        if fp_cmp(fp_sub(w[1], w[0], fmt), fmt.one()) == Some(std::cmp::Ordering::Less) {
            return Err(Error::NotFound("count levels closer than 1".into()));
        }
    }
    if levels[cfg.max_distinct_count] != cfg.saturation_value {
        return Err(Error::NotFound("count levels do not saturate at 2^(p+2)".into()));
    }
    Ok(levels)
}

/// Recovers the count vector from counter flags. A saturated slot takes what the others leave.
pub fn decode_counts(flags: &[Fp], n: usize, cfg: &CounterConfig, fmt: FpFormat) -> Result<Vec<usize>> {
    let levels = count_levels(cfg, fmt)?;
    let s = cfg.max_distinct_count;
    let mut counts = Vec::with_capacity(flags.len());
    for &v in flags {
        let k = levels.iter().position(|&l| l == v).ok_or_else(|| Error::NotFound(format!("flag {} is no count level", fmt.render(v))))?;
        counts.push(k);
    }
    let total: usize = counts.iter().sum();
    if total < n {
        let saturated: Vec<usize> = (0..counts.len()).filter(|&j| counts[j] == s).collect();
        if saturated.len() != 1 {
            return Err(Error::NotFound("more than one slot may exceed the saturation count".into()));
        }
        counts[saturated[0]] += n - total;
    } else if total > n {
        return Err(Error::NotFound(format!("flags encode {total} tokens, n = {n}")));
    }
    Ok(counts)
}

/// Decoder of (token, count flags) keys for the counting model.
///
/// Layers: token encoder (2), token indicator ladder (A, B, C), then
///   D: token indicators t_x; lower units ρ(x_c ⊖ F_j) (≥ 1 iff slot j counts fewer than c);
///      upper units ρ(F_j ⊖ x_c) (≥ 1 iff more),
///   K: per key, ρ(t_x ⊖ lower ⊖ ... ⊖ upper ⊖ ... ⊖ F_j for slots that must be empty),
///   linear: Σ value ⊗ K.
/// When the key's counts sum to n below saturation, lower units alone pin the counts.
pub fn build_count_decoder(table: &LookupTable, alphabet: &Alphabet, n: usize, fmt: FpFormat) -> Result<Pipeline> {
    let cfg = CounterConfig::new(n, fmt)?;
    let levels = count_levels(&cfg, fmt)?;
    let s = cfg.max_distinct_count;
    let d_in = alphabet.d_in();
    let a = alphabet.len();
    let inputs = d_in + a;
    if table.key_dim() != inputs {
        return Err(Error::Shape(format!("decoder keys have dimension {}, expected {inputs}", table.key_dim())));
    }
    let (e1, e2) = encoder_layers(d_in, inputs, fmt);
    let encoded = alphabet.tokens().iter().map(|t| encode(t, fmt)).collect::<Result<Vec<_>>>()?;
    let bank = indicator_bank(&encoded, fmt)?;
    let mut layers = vec![e1, e2];
    layers.extend(rebase(bank.layers, inputs));
    let mut d_layer = layers.pop().expect("indicator layer");

    let one = fmt.one();
    let mut lower: HashMap<(usize, usize), usize> = HashMap::new();
    let mut upper: HashMap<(usize, usize), usize> = HashMap::new();
    let unit = |map: &mut HashMap<(usize, usize), usize>, d_layer: &mut Layer, j: usize, c: usize, above: bool| {
        *map.entry((j, c)).or_insert_with(|| {
            let (w, b) = if above { (one, levels[c].neg()) } else { (one.neg(), levels[c]) };
            d_layer.rows.push(vec![(d_in + j, w)]);
            d_layer.bias.push(b);
            d_layer.rows.len() - 1
        })
    };
    let mut k_rows = Vec::with_capacity(table.len());
    for (key, _) in table.entries() {
        let token = &key[..d_in];
        let t = alphabet.index_of(token).ok_or_else(|| Error::Alphabet(format!("{token:?}")))?;
        let counts = decode_counts(&key[d_in..], n, &cfg, fmt)?;
        let exact = counts.iter().map(|&c| c.min(s)).sum::<usize>() == n;
        let mut row = vec![(inputs + t, one)];
        for (j, &c) in counts.iter().enumerate() {
            if c > 0 {
                let u = unit(&mut lower, &mut d_layer, j, c.min(s), false);
                row.push((inputs + u, one.neg()));
            }
            if !exact {
                if c == 0 {
                    row.push((d_in + j, one.neg()));
                } else if c < s {
                    let u = unit(&mut upper, &mut d_layer, j, c, true);
                    row.push((inputs + u, one.neg()));
                }
            }
        }
        row.sort_by_key(|&(src, _)| src);
        k_rows.push(row);
    }
    layers.push(d_layer);
    layers.push(Layer { bias: vec![fmt.zero(); k_rows.len()], rows: k_rows, relu: true });
    let rows = (0..table.value_dim())
        .map(|o| {
            table
                .entries()
                .iter()
                .enumerate()
                .filter(|(_, (_, v))| !v[o].is_zero())
                .map(|(i, (_, v))| (inputs + i, v[o]))
                .collect()
        })
        .collect();
    layers.push(Layer { rows, bias: vec![fmt.zero(); table.value_dim()], relu: false });
    Pipeline::new(inputs, vec![false; inputs], layers)
}

/// W_out ⊗ (ψ ∘ φ(W_in ⊗ X)) with φ the counter over the alphabet and ψ the count decoder
/// keyed on the (token, count) pairs reached by `domain`. Exact on `domain`.
pub fn assemble_thm3_model(
    f: Target,
    alphabet: &Alphabet,
    domain: &[FpMatrix],
    n: usize,
    d_out: usize,
    fmt: FpFormat,
) -> Result<Assembled> {
    let max = max_count_length(fmt);
    if n == 0 || n > max {
        return Err(Error::Length { n, max });
    }
    let cfg = CounterConfig::new(n, fmt)?;
    let table = factorize_perm_equiv(f, domain, alphabet, n, d_out, fmt)?;
    let g1 = flag_memorizer(alphabet, &count_flag_table(alphabet, &cfg, fmt), fmt)?;
    let psi = build_count_decoder(&table, alphabet, n, fmt)?;
    let (model, layout, dimensions) = assemble(Parts { alphabet, g1, psi, slots: alphabet.len(), d_out, n }, fmt)?;
    let manifest = BuildManifest {
        theorem: "counter".into(),
        p: fmt.p(),
        q: fmt.q(),
        n,
        d_in: alphabet.d_in(),
        d_out,
        alphabet: render_alphabet(alphabet, fmt),
        gamma: None,
        constants: cfg.summary(fmt),
        layout,
        dimensions,
        decoder_keys: table.len(),
    };
    Ok(Assembled { model, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::factorize::{constant_inputs, distinct_inputs, random_inputs, HashedPermTarget, SwapEquivTable};
    use crate::linalg::{permute_columns, Permutation};

    #[test]
    fn thm1_micro_is_exact_and_not_cycle_equivariant() {
        let fmt = FpFormat::new(2, 4).unwrap();
        let alphabet = Alphabet::new((1..=4).map(|v| vec![fmt.from_int(v)]).collect()).unwrap();
        let cat = TripleCatalog::new(alphabet.clone()).unwrap();
        let target = SwapEquivTable::random(&alphabet, 3, 1, 11, fmt).unwrap();
        let f = |x: &FpMatrix| target.eval(x);
        let built = assemble_thm1_model(&f, &cat, 3, 1, fmt).unwrap();
        let swap = Permutation::swap12(3).unwrap();
        let cycle = Permutation::cycle(3);
        let mut broken = 0;
        for x in distinct_inputs(&alphabet, 3).unwrap() {
            let y = built.model.forward(&x).unwrap();
            assert_eq!(y, target.eval(&x).unwrap());
            let ys = built.model.forward(&permute_columns(&swap, &x).unwrap()).unwrap();
            assert_eq!(ys, permute_columns(&swap, &y).unwrap());
            let yc = built.model.forward(&permute_columns(&cycle, &x).unwrap()).unwrap();
            if yc != permute_columns(&cycle, &y).unwrap() {
                broken += 1;
            }
        }
        assert!(broken > 0);
        assert_eq!(built.manifest.gamma, Some(4));
    }

    #[test]
    fn thm3_micro_is_exact_on_domain() {
        let fmt = FpFormat::new(2, 4).unwrap();
        let alphabet = Alphabet::full(fmt);
        let n = 5;
        let target = HashedPermTarget::new(5, 1, fmt);
        let f = |x: &FpMatrix| target.eval(x);
        let mut domain = random_inputs(&alphabet, n, 200, 2).unwrap();
        domain.extend(constant_inputs(&alphabet, n).unwrap());
        let built = assemble_thm3_model(&f, &alphabet, &domain, n, 1, fmt).unwrap();
        for x in &domain {
            assert_eq!(built.model.forward(x).unwrap(), target.eval(x).unwrap());
        }
    }

    #[test]
    fn thm3_saturated_counts() {
        let fmt = FpFormat::new(2, 4).unwrap();
        let alphabet = Alphabet::new((0..4).map(|v| vec![fmt.from_int(v)]).collect()).unwrap();
        let n = 14;
        let target = HashedPermTarget::new(9, 1, fmt);
        let f = |x: &FpMatrix| target.eval(x);
        let t = &alphabet.tokens();
        let mut domain = random_inputs(&alphabet, n, 40, 4).unwrap();
        domain.extend(constant_inputs(&alphabet, n).unwrap());
        // 12 copies of one token saturate its flag.
        let mut cols = vec![t[1].clone(); 12];
        cols.extend([t[0].clone(), t[3].clone()]);
        domain.push(FpMatrix::from_columns(&cols).unwrap());
        cols[13] = t[0].clone();
        domain.push(FpMatrix::from_columns(&cols).unwrap());
        let built = assemble_thm3_model(&f, &alphabet, &domain, n, 1, fmt).unwrap();
        for x in &domain {
            assert_eq!(built.model.forward(x).unwrap(), target.eval(x).unwrap());
        }
    }

    #[test]
    fn thm3_length_bound() {
        let fmt = FpFormat::new(2, 4).unwrap();
        let alphabet = Alphabet::new((0..3).map(|v| vec![fmt.from_int(v)]).collect()).unwrap();
        let id = |x: &FpMatrix| Ok(x.clone());
        assert_eq!(max_count_length(fmt), 22);
        let r = assemble_thm3_model(&id, &alphabet, &[], 23, 1, fmt);
        assert!(matches!(r, Err(Error::Length { n: 23, max: 22 })));
    }
}
