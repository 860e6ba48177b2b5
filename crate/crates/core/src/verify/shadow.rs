//! The same transformer evaluated in exact rational arithmetic, for contrast only.
//! exp is replaced by the midpoint of a tight enclosure; exp(0) stays exactly 1.

use num_rational::BigRational;
use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::fp::{exp_enclosure, Fp, FpFormat};
use crate::linalg::FpMatrix;
use crate::transformer::TransformerModel;

pub type ShadowValue = BigRational;

const EXP_BITS: u32 = 96;

/// Row-major rational matrix.
#[derive(Clone, Debug, PartialEq)]
struct RMat {
    rows: usize,
    cols: usize,
    data: Vec<ShadowValue>,
}

impl RMat {
    fn from_fp(m: &FpMatrix, fmt: FpFormat) -> Result<RMat> {
        let data = m
            .entries()
            .into_iter()
            .map(|v: Fp| fmt.to_rational(v).ok_or_else(|| Error::NonFinite(fmt.render(v))))
            .collect::<Result<Vec<_>>>()?;
        Ok(RMat { rows: m.rows(), cols: m.cols(), data })
    }

    fn get(&self, i: usize, j: usize) -> &ShadowValue {
        &self.data[i * self.cols + j]
    }

    fn mul(&self, o: &RMat) -> RMat {
        let mut data = vec![ShadowValue::zero(); self.rows * o.cols];
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..o.cols {
                    data[i * o.cols + j] += a * o.get(k, j);
                }
            }
        }
        RMat { rows: self.rows, cols: o.cols, data }
    }

    fn add(&self, o: &RMat) -> RMat {
        let data = self.data.iter().zip(&o.data).map(|(a, b)| a + b).collect();
        RMat { rows: self.rows, cols: self.cols, data }
    }

    fn add_bias(&self, b: &[ShadowValue]) -> RMat {
        let mut out = self.clone();
        for (i, bi) in b.iter().enumerate().take(self.rows) {
            for j in 0..self.cols {
                out.data[i * self.cols + j] += bi;
            }
        }
        out
    }

    fn transpose(&self) -> RMat {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.get(i, j).clone());
            }
        }
        RMat { rows: self.cols, cols: self.rows, data }
    }

    fn relu(&self) -> RMat {
        let data = self.data.iter().map(|v| if v.is_negative() { ShadowValue::zero() } else { v.clone() }).collect();
        RMat { rows: self.rows, cols: self.cols, data }
    }

    fn columns(&self) -> Vec<Vec<ShadowValue>> {
        (0..self.cols).map(|j| (0..self.rows).map(|i| self.get(i, j).clone()).collect()).collect()
    }
}

fn exp(x: &ShadowValue) -> ShadowValue {
    if x.is_zero() {
        return ShadowValue::from_integer(1.into());
    }
    let (lo, hi) = exp_enclosure(x, EXP_BITS);
    (lo + hi) / ShadowValue::from_integer(2.into())
}

/// Column-wise softmax of a score matrix.
fn softmax(s: &RMat) -> RMat {
    let mut out = s.clone();
    for j in 0..s.cols {
        let max = (0..s.rows).map(|i| s.get(i, j)).max().expect("non-empty column").clone();
        let e: Vec<ShadowValue> = (0..s.rows).map(|i| exp(&(s.get(i, j) - &max))).collect();
        let total: ShadowValue = e.iter().sum();
        for (i, v) in e.into_iter().enumerate() {
            out.data[i * s.cols + j] = v / &total;
        }
    }
    out
}

fn vector(b: &[Fp], fmt: FpFormat) -> Result<Vec<ShadowValue>> {
    b.iter().map(|&v| fmt.to_rational(v).ok_or_else(|| Error::NonFinite(fmt.render(v)))).collect()
}

/// Exact forward pass; returns output columns. Needs finite weights and inputs.
pub fn shadow_forward(model: &TransformerModel, x: &FpMatrix) -> Result<Vec<Vec<ShadowValue>>> {
    let fmt = model.format;
    let r = |m: &FpMatrix| RMat::from_fp(m, fmt);
    let mut z = r(&model.w_in)?.mul(&r(x)?).add_bias(&vector(&model.b_in, fmt)?);
    for block in model.stack.blocks() {
        let mut acc: Option<RMat> = None;
        for h in &block.attn.heads {
            let k = r(&h.wk)?.mul(&z);
            let q = r(&h.wq)?.mul(&z);
            let v = r(&h.wv)?.mul(&z);
            let out = r(&h.wo)?.mul(&v.mul(&softmax(&k.transpose().mul(&q))));
            acc = Some(match acc {
                Some(a) => a.add(&out),
                None => out,
            });
        }
        z = z.add(&acc.ok_or_else(|| Error::Shape("attention with no heads".into()))?);
        let ff = &block.ff;
        let hidden = r(&ff.w1)?.mul(&z).add_bias(&vector(&ff.b1, fmt)?).relu();
        z = z.add(&r(&ff.w2)?.mul(&hidden).add_bias(&vector(&ff.b2, fmt)?));
    }
    Ok(r(&model.w_out)?.mul(&z).add_bias(&vector(&model.b_out, fmt)?).columns())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transformer::{AttnParams, Block, BlockStack, FfParams, Head, StackDims};

    #[test]
    fn mean_attention_is_exact() {
        let fmt = FpFormat::new(2, 4).unwrap();
        let one = FpMatrix::filled(1, 1, fmt.one());
        let zero = FpMatrix::zeros(1, 1, fmt);
        let head = Head { wk: zero.clone(), wq: zero.clone(), wv: one.clone(), wo: one.clone() };
        let dims = StackDims { h: 1, m: 1, r: 1, d: 1, n: 3 };
        let block = Block { attn: AttnParams { heads: vec![head] }, ff: FfParams::zeros(1, 1, fmt) };
        let stack = BlockStack::new(vec![block], dims).unwrap();
        let model = TransformerModel::new(fmt, one.clone(), vec![fmt.zero()], stack, one, vec![fmt.zero()]).unwrap();
        let x = FpMatrix::from_rows(vec![vec![fmt.one(), fmt.one(), fmt.from_int(2)]]).unwrap();
        let out = shadow_forward(&model, &x).unwrap();
        // 1 + 4/3 and 2 + 4/3.
        let r = |n: i64, d: i64| ShadowValue::new(n.into(), d.into());
        assert_eq!(out, vec![vec![r(7, 3)], vec![r(7, 3)], vec![r(10, 3)]]);
    }
}
