//! Encoder, indicator and memorizer networks over F.

use std::collections::{BTreeMap, HashMap};

use num_rational::BigRational;

use super::pipeline::{Layer, Pipeline};
use crate::error::{Error, Result};
use crate::fp::{fp_to_bits, pred, succ, Fp, FpFormat};

/// Finite map from key vectors to value vectors, in insertion order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LookupTable {
    key_dim: usize,
    value_dim: usize,
    entries: Vec<(Vec<Fp>, Vec<Fp>)>,
    index: HashMap<Vec<Fp>, usize>,
}

impl LookupTable {
    pub fn new(key_dim: usize, value_dim: usize) -> LookupTable {
        LookupTable { key_dim, value_dim, entries: Vec::new(), index: HashMap::new() }
    }

    /// Adds `key -> value`; a key already present with another value is a conflict.
    pub fn insert(&mut self, key: Vec<Fp>, value: Vec<Fp>) -> Result<()> {
        if key.len() != self.key_dim || value.len() != self.value_dim {
            return Err(Error::Shape(format!(
                "entry of size ({}, {}) in a ({}, {}) table",
                key.len(),
                value.len(),
                self.key_dim,
                self.value_dim
            )));
        }
        if key.iter().chain(&value).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("lookup tables hold finite vectors only".into()));
        }
        match self.index.get(&key) {
            Some(&i) if self.entries[i].1 == value => Ok(()),
            Some(_) => Err(Error::Equivariance(format!("conflicting values for key {key:?}"))),
            None => {
                self.index.insert(key.clone(), self.entries.len());
                self.entries.push((key, value));
                Ok(())
            }
        }
    }

    pub fn get(&self, key: &[Fp]) -> Option<&[Fp]> {
        self.index.get(key).map(|&i| self.entries[i].1.as_slice())
    }

    pub fn entries(&self) -> &[(Vec<Fp>, Vec<Fp>)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn key_dim(&self) -> usize {
        self.key_dim
    }

    pub fn value_dim(&self) -> usize {
        self.value_dim
    }
}

fn layer(rows: Vec<Vec<(usize, Fp)>>, bias: Vec<Fp>) -> Layer {
    Layer { rows, bias, relu: true }
}

/// Encoder layers reading the first d0 of `inputs` pipeline inputs.
pub(crate) fn encoder_layers(d0: usize, inputs: usize, fmt: FpFormat) -> (Layer, Layer) {
    let one = fmt.one();
    let half = fmt.pow2(-1).expect("1/2");
    let two = fmt.pow2(1).expect("2");
    let mut first = Vec::with_capacity(4 * d0);
    for i in 0..d0 {
        for w in [one, half, one.neg(), half.neg()] {
            first.push(vec![(i, w)]);
        }
    }
    // Sources of the second layer are the pipeline inputs followed by the 4·d0 first-layer units.
    let mut second = Vec::with_capacity(6 * d0);
    for i in 0..d0 {
        let u = inputs + 4 * i;
        for (a, b) in [(u, u + 1), (u + 2, u + 3)] {
            second.push(vec![(a, one), (b, two.neg())]);
            second.push(vec![(a, one.neg()), (b, two)]);
            second.push(vec![(b, one)]);
        }
    }
    let z = fmt.zero();
    (layer(first, vec![z; 4 * d0]), layer(second, vec![z; 6 * d0]))
}

/// Two-layer injective encoder F^d0 -> [0, 2^emax]^(6 d0).
pub fn build_injective_encoder(d0: usize, fmt: FpFormat) -> Result<Pipeline> {
    let (a, b) = encoder_layers(d0, d0, fmt);
    Pipeline::new(d0, vec![false; d0], vec![a, b])
}

fn exact(r: &BigRational, fmt: FpFormat) -> Fp {
    fmt.exact_from_rational(r).expect("power-of-two gap is representable")
}

/// Spacing above and below a non-negative finite k.
fn gaps(k: Fp, fmt: FpFormat) -> (Fp, Option<Fp>) {
    let kr = fmt.to_rational(k).expect("finite key");
    let up = fmt.to_rational(succ(k, fmt).expect("finite")).expect("key below Omega");
    let above = exact(&(up - &kr), fmt);
    let below = if k.is_zero() {
        None
    } else {
        let down = fmt.to_rational(pred(k, fmt).expect("finite")).expect("finite");
        Some(exact(&(kr - down), fmt))
    };
    (above, below)
}

/// log2 of a positive power of two.
fn log2_pow2(x: Fp, fmt: FpFormat) -> i32 {
    match x {
        Fp::Finite { exp, sig, .. } => exp - fmt.p() as i32 + (63 - sig.leading_zeros() as i32),
        _ => unreachable!("gap is finite"),
    }
}

/// Stage A..D layers of an indicator bank over encoded keys.
///
/// Per (coordinate c, key value k) with gap U above k and L below:
///   A: a = ρ(e_c ⊖ k), b = ρ(k ⊖ e_c)            a ∈ {0} ∪ [U, ∞), b ∈ {0} ∪ [L, ∞)
///   B: c = ρ(U ⊖ a), c' = ρ(L ⊖ b)                c = U iff e_c ≤ k
///   C: g = ρ(wU ⊖ w ⊗ c), same for c'             g = wU iff e_c > k
///   D: t = ρ(1 ⊖ Σ (1/(wU)) ⊗ g)                  t = 1 iff every coordinate matches
/// with w a power of two keeping wU in [2^(1-p), 1] and 1/(wU) ≤ 2^(p-1).
/// Every unit stays finite: the D sum only adds terms equal to 0 or -1.
pub struct IndicatorBank {
    /// Layers A, B, C, D. The D layer's first `keys` units are the indicators.
    pub layers: Vec<Layer>,
    pub keys: usize,
}

/// Source indices are relative to the previous layer; see [`rebase`].
pub fn indicator_bank(keys: &[Vec<Fp>], fmt: FpFormat) -> Result<IndicatorBank> {
    let dim = keys.first().map_or(0, Vec::len);
    if keys.iter().any(|k| k.len() != dim) || dim == 0 {
        return Err(Error::Shape("indicator keys must share a non-zero dimension".into()));
    }
    // Distinct (coordinate, value) pairs, ordered for determinism.
    let mut pairs: BTreeMap<(usize, u64), Fp> = BTreeMap::new();
    for key in keys {
        for (c, &v) in key.iter().enumerate() {
            if !v.is_finite() || v.is_negative() {
                return Err(Error::Shape("encoded keys are finite and non-negative".into()));
            }
            pairs.insert((c, fp_to_bits(v, fmt)), v);
        }
    }
    let one = fmt.one();
    let emax = fmt.emax();
    let mut a_rows = Vec::new();
    let mut a_bias = Vec::new();
    let mut b_rows = Vec::new();
    let mut b_bias = Vec::new();
    let mut c_rows = Vec::new();
    let mut c_bias = Vec::new();
    // Per pair: indices of its C units and their D weights.
    let mut c_units: HashMap<(usize, u64), Vec<(usize, Fp)>> = HashMap::new();
    for (&(c, bits), &k) in &pairs {
        let (up, down) = gaps(k, fmt);
        let mut sides = vec![(up, false)];
        if let Some(l) = down {
            sides.push((l, true));
        }
        for (gap, below) in sides {
            let ai = a_rows.len();
            // a = ρ(e ⊖ k) or b = ρ(k ⊖ e).
            let sign = if below { one.neg() } else { one };
            a_rows.push(vec![(c, sign)]);
            a_bias.push(if below { k } else { k.neg() });
            let bi = b_rows.len();
            b_rows.push(vec![(ai, one.neg())]);
            b_bias.push(gap);
            let w_exp = emax.min(-log2_pow2(gap, fmt));
            let w = fmt.pow2(w_exp).expect("scale is representable");
            let wu = fmt.pow2(w_exp + log2_pow2(gap, fmt)).expect("scaled gap is representable");
            let v = fmt.pow2(-(w_exp + log2_pow2(gap, fmt))).expect("inverse scaled gap is representable");
            let ci = c_rows.len();
            c_rows.push(vec![(bi, w.neg())]);
            c_bias.push(wu);
            c_units.entry((c, bits)).or_default().push((ci, v));
        }
    }
    let mut d_rows = Vec::with_capacity(keys.len());
    for key in keys {
        let mut row: Vec<(usize, Fp)> = key
            .iter()
            .enumerate()
            .flat_map(|(c, &v)| c_units[&(c, fp_to_bits(v, fmt))].iter().map(|&(ci, w)| (ci, w.neg())))
            .collect();
        row.sort_by_key(|&(s, _)| s);
        d_rows.push(row);
    }
    Ok(IndicatorBank {
        layers: vec![
            layer(a_rows, a_bias),
            layer(b_rows, b_bias),
            layer(c_rows, c_bias),
            layer(d_rows, vec![one; keys.len()]),
        ],
        keys: keys.len(),
    })
}

/// Evaluates an encoder (as built above) on one vector; used to derive encoded keys.
pub fn encode(x: &[Fp], fmt: FpFormat) -> Result<Vec<Fp>> {
    build_injective_encoder(x.len(), fmt)?.eval(x, fmt)
}

/// Shifts previous-layer source indices past the `inputs` pipeline inputs.
pub fn rebase(mut layers: Vec<Layer>, inputs: usize) -> Vec<Layer> {
    for l in &mut layers {
        for row in &mut l.rows {
            for (s, _) in row.iter_mut() {
                *s += inputs;
            }
        }
    }
    layers
}

/// Indicator of `encoded(x) = key_encoded` for x in F^d0: encoder, then stages A..D.
pub fn build_indicator(key: &[Fp], fmt: FpFormat) -> Result<Pipeline> {
    build_memorizer_layers(&[key.to_vec()], None, fmt)
}

/// Memorizer: encoder, indicator bank over all keys, then the linear map whose columns
/// are the table values.
pub fn build_memorizer(table: &LookupTable, fmt: FpFormat) -> Result<Pipeline> {
    let keys: Vec<Vec<Fp>> = table.entries().iter().map(|(k, _)| k.clone()).collect();
    build_memorizer_layers(&keys, Some(table), fmt)
}

fn build_memorizer_layers(keys: &[Vec<Fp>], table: Option<&LookupTable>, fmt: FpFormat) -> Result<Pipeline> {
    let d0 = keys.first().map_or(0, Vec::len);
    if d0 == 0 {
        return Err(Error::Shape("memorizer needs at least one non-empty key".into()));
    }
    let (e1, e2) = encoder_layers(d0, d0, fmt);
    let encoded = keys.iter().map(|k| encode(k, fmt)).collect::<Result<Vec<_>>>()?;
    let bank = indicator_bank(&encoded, fmt)?;
    let mut layers = vec![e1, e2];
    layers.extend(rebase(bank.layers, d0));
    if let Some(t) = table {
        let rows = (0..t.value_dim())
            .map(|o| {
                // 0 ⊗ t is the canonical zero, so zero weights can be left out of the fold.
                t.entries().iter().enumerate().filter(|(_, (_, v))| !v[o].is_zero()).map(|(i, (_, v))| (d0 + i, v[o])).collect()
            })
            .collect();
        layers.push(Layer { rows, bias: vec![fmt.zero(); t.value_dim()], relu: false });
    }
    Pipeline::new(d0, vec![false; d0], layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fp::enumerate_finite;

    fn fmt() -> FpFormat {
        FpFormat::new(2, 4).unwrap()
    }

    #[test]
    fn encoder_is_injective_and_bounded() {
        let f = fmt();
        let enc = build_injective_encoder(1, f).unwrap();
        let xs = enumerate_finite(f);
        let codes: std::collections::HashSet<Vec<Fp>> = xs.iter().map(|&x| enc.eval(&[x], f).unwrap()).collect();
        assert_eq!(codes.len(), xs.len());
        let top = f.pow2(f.emax()).unwrap();
        for c in &codes {
            assert!(c.iter().all(|&v| v.is_finite() && !v.is_negative() && crate::fp::fp_cmp(v, top).unwrap().is_le()));
        }
    }

    #[test]
    fn indicator_fires_on_its_key_only() {
        let f = fmt();
        let xs = enumerate_finite(f);
        for &k in xs.iter().step_by(7) {
            let ind = build_indicator(&[k], f).unwrap();
            for &x in &xs {
                let t = ind.eval(&[x], f).unwrap()[0];
                assert_eq!(t, if x == k { f.one() } else { f.zero() }, "key {} input {}", f.render(k), f.render(x));
            }
        }
    }

    #[test]
    fn memorizer_reproduces_table() {
        let f = fmt();
        let xs = enumerate_finite(f);
        let mut table = LookupTable::new(2, 1);
        for (i, &a) in xs.iter().enumerate().step_by(5) {
            let b = xs[(i * 13) % xs.len()];
            table.insert(vec![a, b], vec![xs[(i * 31 + 3) % xs.len()]]).unwrap();
        }
        let m = build_memorizer(&table, f).unwrap();
        for (k, v) in table.entries() {
            assert_eq!(m.eval(k, f).unwrap(), *v);
        }
    }

    #[test]
    fn conflicting_insert_is_rejected() {
        let f = fmt();
        let mut t = LookupTable::new(1, 1);
        t.insert(vec![f.one()], vec![f.one()]).unwrap();
        t.insert(vec![f.one()], vec![f.one()]).unwrap();
        assert!(t.insert(vec![f.one()], vec![f.zero()]).is_err());
    }
}
