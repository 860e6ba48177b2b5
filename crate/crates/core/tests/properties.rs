use num_rational::BigRational;
use proptest::prelude::*;

use fpt::fp::{
    enumerate_finite, fp_add, fp_cmp, fp_from_bits, fp_mul, left_sum, round_exact, rounded_exp, ExactScalar,
};
use fpt::linalg::{mat_mul, permute_columns};
use fpt::transformer::{model_forward, softmax_col, TransformerModel};
use fpt::verify::{sample_model, ModelSamplerConfig};
use fpt::{Fp, FpFormat, FpMatrix, Permutation};

fn any_format() -> impl Strategy<Value = FpFormat> {
    (1u32..=5, 2u32..=6).prop_map(|(p, q)| FpFormat::new(p, q).unwrap())
}

fn value_in(fmt: FpFormat) -> impl Strategy<Value = Fp> {
    (0u64..1 << fmt.width()).prop_map(move |b| fp_from_bits(b, fmt).unwrap())
}

fn format_and_pair() -> impl Strategy<Value = (FpFormat, Fp, Fp)> {
    any_format().prop_flat_map(|f| (Just(f), value_in(f), value_in(f)))
}

fn small() -> FpFormat {
    FpFormat::new(2, 4).unwrap()
}

/// Entries drawn mostly from small finite values, with zeros and specials mixed in.
fn entry() -> impl Strategy<Value = Fp> {
    let f = small();
    prop_oneof![
        4 => value_in(f).prop_filter("finite", |x| x.is_finite()),
        3 => Just(f.zero()),
        1 => prop_oneof![Just(Fp::PosInf), Just(Fp::NegInf), Just(Fp::NaN)],
    ]
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = FpMatrix> {
    proptest::collection::vec(entry(), rows * cols).prop_map(move |d| FpMatrix::new(rows, cols, d).unwrap())
}

fn sparse_copy(m: &FpMatrix) -> FpMatrix {
    let rows = (0..m.rows())
        .map(|i| (0..m.cols()).filter(|&j| !m.get(i, j).is_zero()).map(|j| (j, m.get(i, j))).collect())
        .collect();
    FpMatrix::from_sparse_rows(m.rows(), m.cols(), rows, small()).unwrap()
}

fn permutation(n: usize) -> impl Strategy<Value = Permutation> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle().prop_map(|v| Permutation::new(v).unwrap())
}

proptest! {
    #[test]
    fn add_and_mul_commute((f, x, y) in format_and_pair()) {
        prop_assert_eq!(fp_add(x, y, f), fp_add(y, x, f));
        prop_assert_eq!(fp_mul(x, y, f), fp_mul(y, x, f));
    }

    #[test]
    fn adding_non_negatives_never_shrinks((f, x, y) in format_and_pair()) {
        prop_assume!(x.is_finite() && y.is_finite());
        let abs = |v: Fp| if v.is_negative() { v.neg() } else { v };
        let (x, y) = (abs(x), abs(y));
        let s = fp_add(x, y, f);
        prop_assert!(fp_cmp(s, x).unwrap().is_ge() && fp_cmp(s, y).unwrap().is_ge());
    }

    #[test]
    fn rounding_fixes_every_float((f, x, _y) in format_and_pair()) {
        prop_assert_eq!(round_exact(&f.to_exact(x), f), x);
    }

    #[test]
    fn midpoints_round_to_even_mantissa((f, x, _y) in format_and_pair()) {
        prop_assume!(x.is_finite() && x != f.big_omega());
        let up = f.succ(x).unwrap();
        let mid = (f.to_rational(x).unwrap() + f.to_rational(up).unwrap()) / BigRational::from_integer(2.into());
        let r = round_exact(&ExactScalar::Rational(mid), f);
        prop_assert!(r == x || r == up);
        prop_assert_eq!(f.last_mantissa_bit(r), Some(0));
    }

    #[test]
    fn addition_is_not_associative(f in any_format()) {
        let pos: Vec<Fp> = enumerate_finite(f).into_iter().filter(|v| v.is_positive()).collect();
        let found = pos.iter().any(|&x| pos.iter().any(|&y| fp_add(fp_add(x, y, f), y, f) != fp_add(x, fp_add(y, y, f), f)));
        prop_assert!(found);
    }

    #[test]
    fn matrix_json_round_trips(m in matrix(3, 4)) {
        let f = small();
        prop_assert_eq!(FpMatrix::from_json(&m.to_json(f), f).unwrap(), m.clone());
        let sparse = sparse_copy(&m);
        prop_assert_eq!(FpMatrix::from_json(&sparse.to_json(f), f).unwrap().to_dense(), m);
    }

    #[test]
    fn sparse_and_dense_products_agree(a in matrix(3, 4), b in matrix(4, 3)) {
        let f = small();
        prop_assert_eq!(mat_mul(&sparse_copy(&a), &b, f).unwrap(), mat_mul(&a, &b, f).unwrap());
    }

    #[test]
    fn permutations_act_on_columns(m in matrix(2, 5), pi in permutation(5), sigma in permutation(5)) {
        let composed = permute_columns(&pi.compose(&sigma).unwrap(), &m).unwrap();
        let twice = permute_columns(&sigma, &permute_columns(&pi, &m).unwrap()).unwrap();
        prop_assert_eq!(&composed, &twice);
        let back = permute_columns(&pi.inverse(), &permute_columns(&pi, &m).unwrap()).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn softmax_of_finite_columns_stays_in_unit_interval(col in proptest::collection::vec(value_in(small()), 1..6)) {
        let f = small();
        prop_assume!(col.iter().all(|v| v.is_finite()));
        let before = fpt::fp::div_violation_count();
        for v in softmax_col(&col, f) {
            prop_assert!(fp_cmp(v, f.zero()).unwrap().is_ge() && fp_cmp(v, f.one()).unwrap().is_le());
        }
        prop_assert_eq!(fpt::fp::div_violation_count(), before);
    }

    #[test]
    fn exp_is_monotone((f, x, y) in format_and_pair()) {
        prop_assume!(!x.is_nan() && !y.is_nan());
        if fp_cmp(x, y).unwrap().is_le() {
            prop_assert!(fp_cmp(rounded_exp(x, f), rounded_exp(y, f)).unwrap().is_le());
        }
    }

    #[test]
    fn ones_saturate(f in any_format(), extra in 0usize..6) {
        prop_assume!(f.p() >= 2);
        let n = 3 * (1usize << f.p()) - 1;
        let a = left_sum(&vec![f.one(); n], f).unwrap();
        let b = left_sum(&vec![f.one(); n + extra], f).unwrap();
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_models_commute_with_swap12(seed in any::<u64>(), input_seed in any::<u64>()) {
        let f = small();
        let cfg = ModelSamplerConfig { seed, ..ModelSamplerConfig::default() };
        let model = sample_model(&cfg, f).unwrap();
        let x = input(input_seed, model.d_in(), model.n(), f);
        let swap = Permutation::swap12(model.n()).unwrap();
        let lhs = model_forward(&permute_columns(&swap, &x).unwrap(), &model).unwrap();
        let rhs = permute_columns(&swap, &model_forward(&x, &model).unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn sampled_models_preserve_equal_columns(seed in any::<u64>(), input_seed in any::<u64>()) {
        let f = small();
        let cfg = ModelSamplerConfig { seed, ..ModelSamplerConfig::default() };
        let model = sample_model(&cfg, f).unwrap();
        let n = model.n();
        let mut cols = input(input_seed, model.d_in(), n, f).columns();
        cols[n - 1] = cols[0].clone();
        let y = model_forward(&FpMatrix::from_columns(&cols).unwrap(), &model).unwrap();
        prop_assert_eq!(y.column(0), y.column(n - 1));
    }

    #[test]
    fn model_json_round_trips(seed in any::<u64>()) {
        let cfg = ModelSamplerConfig { seed, extreme_prob: 0.3, ..ModelSamplerConfig::default() };
        let m = sample_model(&cfg, small()).unwrap();
        let text = serde_json::to_string(&m.to_json()).unwrap();
        let back = TransformerModel::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn sampling_is_reproducible(seed in any::<u64>()) {
        let cfg = ModelSamplerConfig { seed, ..ModelSamplerConfig::default() };
        let a = sample_model(&cfg, small()).unwrap();
        let b = sample_model(&cfg, small()).unwrap();
        prop_assert_eq!(serde_json::to_string(&a.to_json()).unwrap(), serde_json::to_string(&b.to_json()).unwrap());
        let d = a.stack.dims();
        prop_assert!((1..=4).contains(&d.d) && (1..=2).contains(&d.h) && (2..=4).contains(&d.n));
    }
}

fn input(seed: u64, rows: usize, cols: usize, f: FpFormat) -> FpMatrix {
    use rand::{Rng, SeedableRng};
    let pool = enumerate_finite(f);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols).map(|_| pool[rng.gen_range(0..pool.len())]).collect();
    FpMatrix::new(rows, cols, data).unwrap()
}

#[test]
fn zero_extreme_probability_keeps_weights_in_range() {
    let f = small();
    let cfg = ModelSamplerConfig { seed: 3, extreme_prob: 0.0, ..ModelSamplerConfig::default() };
    let m = sample_model(&cfg, f).unwrap();
    let two = f.from_int(2);
    let in_range = |v: &Fp| fp_cmp(*v, two).unwrap().is_le() && fp_cmp(*v, two.neg()).unwrap().is_ge();
    let json = m.to_json();
    let w_in = FpMatrix::from_json(&json.w_in, f).unwrap();
    assert!(w_in.entries().iter().all(in_range));
    for block in m.stack.blocks() {
        for h in &block.attn.heads {
            assert!([&h.wk, &h.wq, &h.wv, &h.wo].iter().all(|w| w.entries().iter().all(in_range)));
        }
        assert!(block.ff.w1.entries().iter().all(in_range) && block.ff.b2.iter().all(in_range));
    }
}
