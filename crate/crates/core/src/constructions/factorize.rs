//! Token-wise factorizations of equivariant targets, and the targets used by the suites.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::blocks::{count_flags, order_flags, Alphabet, TripleCatalog};
use super::gadgets::LookupTable;
use super::solve::{CounterConfig, OrderDetectorConfig};
use crate::error::{Error, Result};
use crate::fp::{enumerate_finite, fp_to_bits, Fp, FpFormat};
use crate::linalg::{permute_columns, FpMatrix, Permutation};

/// A sequence-to-sequence map F^{d_in×n} -> F^{d_out×n}.
pub type Target<'a> = &'a dyn Fn(&FpMatrix) -> Result<FpMatrix>;

/// Every input of n pairwise distinct alphabet tokens, in lexicographic index order.
pub fn distinct_inputs(alphabet: &Alphabet, n: usize) -> Result<Vec<FpMatrix>> {
    fn rec(a: usize, n: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for t in 0..a {
            if !prefix.contains(&t) {
                prefix.push(t);
                rec(a, n, prefix, out);
                prefix.pop();
            }
        }
    }
    let mut idx = Vec::new();
    rec(alphabet.len(), n, &mut Vec::new(), &mut idx);
    idx.iter()
        .map(|ix| FpMatrix::from_columns(&ix.iter().map(|&t| alphabet.tokens()[t].clone()).collect::<Vec<_>>()))
        .collect()
}

fn apply_checked(f: Target, x: &FpMatrix) -> Result<FpMatrix> {
    let y = f(x)?;
    if y.cols() != x.cols() {
        return Err(Error::Shape(format!("target maps {} columns to {}", x.cols(), y.cols())));
    }
    if !y.all_finite() {
        return Err(Error::NonFinite("target values must be finite".into()));
    }
    Ok(y)
}

fn check_equivariant(f: Target, x: &FpMatrix, y: &FpMatrix, pi: &Permutation, name: &str) -> Result<()> {
    if apply_checked(f, &permute_columns(pi, x)?)? != permute_columns(pi, y)? {
        return Err(Error::Equivariance(format!("target is not {name}-equivariant")));
    }
    Ok(())
}

fn insert_columns(table: &mut LookupTable, x: &FpMatrix, y: &FpMatrix, flags: &[Fp]) -> Result<()> {
    for (token, value) in x.columns().into_iter().zip(y.columns()) {
        let mut key = token;
        key.extend_from_slice(flags);
        table.insert(key, value)?;
    }
    Ok(())
}

/// f̃(x_i, flags(X)) = f*(X)_i over every distinct-token input of the catalog's alphabet.
/// Swap equivariance is checked on each input; a conflicting entry means f* is not a
/// function of (token, order flags).
pub fn factorize_swap_equiv(f: Target, catalog: &TripleCatalog, n: usize, d_out: usize, fmt: FpFormat) -> Result<LookupTable> {
    let cfg = OrderDetectorConfig::new(n, fmt)?;
    let swap = Permutation::swap12(n)?;
    let alphabet = catalog.alphabet();
    let mut table = LookupTable::new(alphabet.d_in() + 3 * catalog.gamma(), d_out);
    for x in distinct_inputs(alphabet, n)? {
        let y = apply_checked(f, &x)?;
        check_equivariant(f, &x, &y, &swap, "swap12")?;
        insert_columns(&mut table, &x, &y, &order_flags(&x, catalog, &cfg, fmt)?)?;
    }
    Ok(table)
}

/// f̃(x_i, count flags(X)) = f*(X)_i over the given inputs. Equivariance is checked on the
/// generators swap12 and the n-cycle for each input.
pub fn factorize_perm_equiv(
    f: Target,
    domain: &[FpMatrix],
    alphabet: &Alphabet,
    n: usize,
    d_out: usize,
    fmt: FpFormat,
) -> Result<LookupTable> {
    let cfg = CounterConfig::new(n, fmt)?;
    let cycle = Permutation::cycle(n);
    let swap = if n >= 2 { Some(Permutation::swap12(n)?) } else { None };
    let mut table = LookupTable::new(alphabet.d_in() + alphabet.len(), d_out);
    for x in domain {
        if x.cols() != n {
            return Err(Error::Shape(format!("domain input has {} columns, n = {n}", x.cols())));
        }
        let y = apply_checked(f, x)?;
        check_equivariant(f, x, &y, &cycle, "cycle")?;
        if let Some(s) = &swap {
            check_equivariant(f, x, &y, s, "swap12")?;
        }
        insert_columns(&mut table, x, &y, &count_flags(x, alphabet, &cfg, fmt)?)?;
    }
    Ok(table)
}

/// For each position triple i1 < i2 < i3, the 1-based position holding the largest π value.
pub fn three_max_signature(pi: &Permutation) -> Vec<usize> {
    let n = pi.n();
    let mut sig = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                let top = [a, b, c].into_iter().max_by_key(|&i| pi.apply(i)).expect("three positions");
                sig.push(top + 1);
            }
        }
    }
    sig
}

fn random_matrix(rng: &mut ChaCha8Rng, pool: &[Fp], rows: usize, cols: usize) -> FpMatrix {
    let data = (0..rows * cols).map(|_| pool[rng.gen_range(0..pool.len())]).collect();
    FpMatrix::new(rows, cols, data).expect("shape")
}

/// A tabulated swap-equivariant map on the distinct-token inputs of an alphabet.
#[derive(Clone, Debug)]
pub struct SwapEquivTable {
    map: HashMap<FpMatrix, FpMatrix>,
}

impl SwapEquivTable {
    /// Random finite outputs chosen per {X, swap12 X} orbit.
    pub fn random(alphabet: &Alphabet, n: usize, d_out: usize, seed: u64, fmt: FpFormat) -> Result<SwapEquivTable> {
        let swap = Permutation::swap12(n)?;
        let pool = enumerate_finite(fmt);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut map = HashMap::new();
        for x in distinct_inputs(alphabet, n)? {
            if map.contains_key(&x) {
                continue;
            }
            let y = random_matrix(&mut rng, &pool, d_out, n);
            map.insert(permute_columns(&swap, &x)?, permute_columns(&swap, &y)?);
            map.insert(x, y);
        }
        Ok(SwapEquivTable { map })
    }

    pub fn eval(&self, x: &FpMatrix) -> Result<FpMatrix> {
        self.map.get(x).cloned().ok_or_else(|| Error::Alphabet("input outside the tabulated domain".into()))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

fn mix(h: u64, v: u64) -> u64 {
    // splitmix64 finalizer over the running state.
    let mut z = h ^ v.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// f*(X)_i = f̃(x_i, multiset of columns), with f̃ a seeded hash onto the finite floats.
/// Permutation-equivariant on every input.
#[derive(Clone, Debug)]
pub struct HashedPermTarget {
    pub seed: u64,
    pub d_out: usize,
    pub format: FpFormat,
    pool: Vec<Fp>,
}

impl HashedPermTarget {
    pub fn new(seed: u64, d_out: usize, fmt: FpFormat) -> HashedPermTarget {
        HashedPermTarget { seed, d_out, format: fmt, pool: enumerate_finite(fmt) }
    }

    pub fn eval(&self, x: &FpMatrix) -> Result<FpMatrix> {
        let fmt = self.format;
        let bits = |c: &[Fp]| c.iter().map(|&v| fp_to_bits(v, fmt)).collect::<Vec<u64>>();
        let mut multiset: Vec<Vec<u64>> = x.columns().iter().map(|c| bits(c)).collect();
        multiset.sort_unstable();
        let base = multiset.iter().flatten().fold(mix(self.seed, multiset.len() as u64), |h, &b| mix(h, b));
        let cols: Vec<Vec<Fp>> = x
            .columns()
            .iter()
            .map(|c| {
                let h = bits(c).into_iter().fold(base, mix);
                (0..self.d_out).map(|r| self.pool[(mix(h, r as u64) % self.pool.len() as u64) as usize]).collect()
            })
            .collect();
        FpMatrix::from_columns(&cols)
    }
}

/// Seeded uniform inputs over an alphabet.
pub fn random_inputs(alphabet: &Alphabet, n: usize, count: usize, seed: u64) -> Result<Vec<FpMatrix>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let cols: Vec<Vec<Fp>> =
                (0..n).map(|_| alphabet.tokens()[rng.gen_range(0..alphabet.len())].clone()).collect();
            FpMatrix::from_columns(&cols)
        })
        .collect()
}

/// The |A| inputs whose columns are all one token.
pub fn constant_inputs(alphabet: &Alphabet, n: usize) -> Result<Vec<FpMatrix>> {
    alphabet.tokens().iter().map(|t| FpMatrix::from_columns(&vec![t.clone(); n])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (FpFormat, TripleCatalog) {
        let fmt = FpFormat::new(2, 4).unwrap();
        let a = Alphabet::new((1..=4).map(|v| vec![fmt.from_int(v)]).collect()).unwrap();
        (fmt, TripleCatalog::new(a).unwrap())
    }

    #[test]
    fn swap_table_size_and_rebuild() {
        let (fmt, cat) = setup();
        let target = SwapEquivTable::random(cat.alphabet(), 3, 1, 7, fmt).unwrap();
        assert_eq!(target.len(), 24);
        let f = |x: &FpMatrix| target.eval(x);
        let table = factorize_swap_equiv(&f, &cat, 3, 1, fmt).unwrap();
        assert!(table.len() <= 3 * 24);
        let cfg = OrderDetectorConfig::new(3, fmt).unwrap();
        for x in distinct_inputs(cat.alphabet(), 3).unwrap() {
            let flags = order_flags(&x, &cat, &cfg, fmt).unwrap();
            let cols: Vec<Vec<Fp>> = x
                .columns()
                .into_iter()
                .map(|mut k| {
                    k.extend_from_slice(&flags);
                    table.get(&k).unwrap().to_vec()
                })
                .collect();
            assert_eq!(FpMatrix::from_columns(&cols).unwrap(), target.eval(&x).unwrap());
        }
    }

    #[test]
    fn identity_and_constant_targets() {
        let (fmt, cat) = setup();
        let id = |x: &FpMatrix| Ok(x.clone());
        let table = factorize_swap_equiv(&id, &cat, 3, 1, fmt).unwrap();
        assert!(table.entries().iter().all(|(k, v)| k[0] == v[0]));
        let c = |x: &FpMatrix| Ok(FpMatrix::filled(1, x.cols(), fmt.one()));
        let table = factorize_swap_equiv(&c, &cat, 3, 1, fmt).unwrap();
        assert!(table.entries().iter().all(|(_, v)| v[0] == fmt.one()));
    }

    #[test]
    fn non_equivariant_target_is_rejected() {
        let (fmt, cat) = setup();
        // Output the first token everywhere except at position 1.
        let f = |x: &FpMatrix| {
            let first = x.get(0, 0);
            FpMatrix::from_rows(vec![(0..x.cols()).map(|j| if j == 0 { fmt.zero() } else { first }).collect()])
        };
        assert!(matches!(factorize_swap_equiv(&f, &cat, 3, 1, fmt), Err(Error::Equivariance(_))));
    }

    #[test]
    fn hashed_target_is_equivariant() {
        let fmt = FpFormat::new(2, 4).unwrap();
        let a = Alphabet::full(fmt);
        let t = HashedPermTarget::new(3, 1, fmt);
        let f = |x: &FpMatrix| t.eval(x);
        let dom = random_inputs(&a, 5, 50, 1).unwrap();
        let table = factorize_perm_equiv(&f, &dom, &a, 5, 1, fmt).unwrap();
        assert!(!table.is_empty());
        for x in &dom {
            for pi in Permutation::all(5).iter().step_by(13) {
                assert_eq!(t.eval(&permute_columns(pi, x).unwrap()).unwrap(), permute_columns(pi, &t.eval(x).unwrap()).unwrap());
            }
        }
    }

    #[test]
    fn three_max_preimages() {
        assert_eq!(three_max_signature(&Permutation::identity(3)), vec![3]);
        assert!(three_max_signature(&Permutation::identity(2)).is_empty());
        let n = 5;
        let swap = Permutation::swap12(n).unwrap();
        let mut by_sig: HashMap<Vec<usize>, Vec<Permutation>> = HashMap::new();
        for pi in Permutation::all(n) {
            by_sig.entry(three_max_signature(&pi)).or_default().push(pi);
        }
        for (_, pre) in by_sig {
            assert_eq!(pre.len(), 2);
            assert_eq!(swap.compose(&pre[0]).unwrap(), pre[1]);
        }
    }
}
