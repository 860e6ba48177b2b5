//! Small worked examples for the matrix and transformer layers.

use num_rational::BigRational;
use num_traits::Zero;

use fpt::fp::{parse_literal, rounded_exp};
use fpt::linalg::{broadcast_bias, mat_mul, permute_columns};
use fpt::transformer::{
    attn_forward, ff_forward, is_ab_similar, is_distinct_tokens, softmax_col, AttnParams, FfParams, Head,
};
use fpt::{Fp, FpFormat, FpMatrix, Permutation};

fn fmt(p: u32) -> FpFormat {
    FpFormat::new(p, 4).unwrap()
}

fn v(s: &str, f: FpFormat) -> Fp {
    parse_literal(s, f).unwrap()
}

fn row(vals: &[&str], f: FpFormat) -> FpMatrix {
    FpMatrix::from_rows(vec![vals.iter().map(|s| v(s, f)).collect()]).unwrap()
}

#[test]
fn softmax_of_a_constant_column() {
    let f = fmt(2);
    // 1/3 lies between 0.3125 and 0.375 and is closer to the first.
    assert_eq!(softmax_col(&[f.zero(); 3], f), vec![v("0.3125", f); 3]);
    assert_eq!(rounded_exp(f.zero(), f), f.one());
}

#[test]
fn softmax_special_columns() {
    let f = fmt(2);
    assert_eq!(softmax_col(&[f.zero(), Fp::NegInf, Fp::NegInf], f), vec![f.one(), f.zero(), f.zero()]);
    assert_eq!(softmax_col(&[f.zero(), Fp::PosInf, f.one()], f), vec![Fp::NaN; 3]);
    assert_eq!(softmax_col(&[Fp::NegInf; 2], f), vec![Fp::NaN; 2]);
}

#[test]
fn relu_residual_block() {
    let f = fmt(2);
    let ff = FfParams { w1: FpMatrix::filled(1, 1, f.one()), b1: vec![f.zero()], w2: FpMatrix::filled(1, 1, f.one()), b2: vec![f.zero()] };
    let x = row(&["1", "-1"], f);
    assert_eq!(ff_forward(&x, &ff, f).unwrap(), row(&["2", "-1"], f));
}

#[test]
fn zero_weights_give_the_identity() {
    let f = fmt(2);
    let x = FpMatrix::from_rows(vec![vec![v("1.25", f), v("-3", f), v("0.5", f)], vec![v("7", f), f.zero(), v("-0.25", f)]]).unwrap();
    assert_eq!(ff_forward(&x, &FfParams::zeros(3, 2, f), f).unwrap(), x);
    assert_eq!(attn_forward(&x, &AttnParams::zeros(2, 1, 2, f), f).unwrap(), x);
    let one_head = AttnParams { heads: vec![Head::zeros(2, 2, f)] };
    assert_eq!(attn_forward(&x, &one_head, f).unwrap(), x);
}

#[test]
fn similarity_examples() {
    let f = fmt(2);
    let x = row(&["1", "2"], f);
    let y = row(&["2", "2"], f);
    assert!(is_ab_similar(&x, &y, 1, 2).unwrap());
    assert!(!is_ab_similar(&x, &x, 1, 2).unwrap());
    let x = row(&["1", "1", "2", "2", "3"], f);
    let y = row(&["1", "2", "2", "2", "3"], f);
    assert!(is_ab_similar(&x, &y, 2, 4).unwrap());
    assert!(!is_ab_similar(&x, &y, 2, 5).unwrap());
    assert!(is_ab_similar(&x, &y, 0, 2).is_err());
    assert!(is_ab_similar(&x, &y, 3, 3).is_err());
}

#[test]
fn distinct_token_examples() {
    let f = fmt(2);
    assert!(is_distinct_tokens(&row(&["1", "2", "3"], f)));
    assert!(!is_distinct_tokens(&row(&["1", "2", "1"], f)));
    let two_rows = FpMatrix::from_rows(vec![vec![f.one(), f.one()], vec![f.zero(), f.one()]]).unwrap();
    assert!(is_distinct_tokens(&two_rows));
}

#[test]
fn row_order_changes_a_dot_product() {
    let f = fmt(3);
    let ones = FpMatrix::filled(3, 1, f.one());
    assert_eq!(mat_mul(&row(&["1.25", "1.25", "1.125"], f), &ones, f).unwrap().get(0, 0), v("3.5", f));
    assert_eq!(mat_mul(&row(&["1.125", "1.25", "1.25"], f), &ones, f).unwrap().get(0, 0), v("3.75", f));
}

#[test]
fn broadcast_copies_columns() {
    let f = fmt(2);
    let b = broadcast_bias(&[f.one(), Fp::NegInf], 3).unwrap();
    assert_eq!(b.column(2), vec![f.one(), Fp::NegInf]);
    assert_eq!(b.shape(), (2, 3));
    assert!(broadcast_bias(&[], 3).is_err());
    assert!(broadcast_bias(&[f.one()], 0).is_err());
}

#[test]
fn swap12_exchanges_the_first_two_columns() {
    let f = fmt(2);
    let s = Permutation::swap12(3).unwrap();
    assert_eq!(permute_columns(&s, &row(&["1", "2", "3"], f)).unwrap(), row(&["2", "1", "3"], f));
    assert!(Permutation::swap12(1).is_err());
}

/// Permuting the value rows and the attention matrix together does not commute with the product.
#[test]
fn attention_product_is_not_permutation_equivariant() {
    let f = fmt(2);
    let values = row(&["1.25", "1", "1.25"], f);
    let sigma = FpMatrix::filled(3, 3, f.one());
    let pi = Permutation::new(vec![0, 2, 1]).unwrap();

    let lhs = permute_columns(&pi, &mat_mul(&values, &sigma, f).unwrap()).unwrap();
    let pv = permute_columns(&pi, &values).unwrap();
    let rows: Vec<Vec<Fp>> = (0..3).map(|k| (0..3).map(|j| sigma.get(pi.apply(k), pi.apply(j))).collect()).collect();
    let rhs = mat_mul(&pv, &FpMatrix::from_rows(rows).unwrap(), f).unwrap();

    assert_eq!(lhs, FpMatrix::filled(1, 3, v("3", f)));
    assert_eq!(rhs, FpMatrix::filled(1, 3, v("3.5", f)));

    // Over the rationals both sides are 3.5.
    let exact = |m: &FpMatrix| m.entries().iter().fold(BigRational::zero(), |a, &x| a + f.to_rational(x).unwrap());
    assert_eq!(exact(&values), exact(&pv));
    assert_eq!(exact(&values), BigRational::new(7.into(), 2.into()));
}
