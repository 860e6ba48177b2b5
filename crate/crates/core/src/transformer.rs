//! Bit-exact transformer forward passes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp::{
    fp_div, fp_eq, fp_max, fp_sub, left_sum, parse_literal, render_hex, rounded_exp, Fp, FpFormat,
};
use crate::linalg::{broadcast_bias, mat_add, mat_mul, mat_relu, FpMatrix, MatrixJson};

/// Feed-forward parameters: W1 is r×d, W2 is d×r.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FfParams {
    pub w1: FpMatrix,
    pub b1: Vec<Fp>,
    pub w2: FpMatrix,
    pub b2: Vec<Fp>,
}

/// One attention head: WK, WQ, WV are m×d, WO is d×m.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Head {
    pub wk: FpMatrix,
    pub wq: FpMatrix,
    pub wv: FpMatrix,
    pub wo: FpMatrix,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttnParams {
    pub heads: Vec<Head>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackDims {
    pub h: usize,
    pub m: usize,
    pub r: usize,
    pub d: usize,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub attn: AttnParams,
    pub ff: FfParams,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockStack {
    blocks: Vec<Block>,
    dims: StackDims,
}

impl FfParams {
    /// All-zero parameters: the block reduces to X ⊕ 0.
    pub fn zeros(r: usize, d: usize, fmt: FpFormat) -> FfParams {
        FfParams {
            w1: FpMatrix::zeros(r, d, fmt),
            b1: vec![fmt.zero(); r],
            w2: FpMatrix::zeros(d, r, fmt),
            b2: vec![fmt.zero(); d],
        }
    }

    fn check(&self, r: usize, d: usize) -> Result<()> {
        if self.w1.shape() != (r, d) || self.b1.len() != r || self.w2.shape() != (d, r) || self.b2.len() != d {
            return Err(Error::Shape(format!("feed-forward parameters do not fit r={r}, d={d}")));
        }
        Ok(())
    }
}

impl Head {
    pub fn zeros(m: usize, d: usize, fmt: FpFormat) -> Head {
        Head {
            wk: FpMatrix::zeros(m, d, fmt),
            wq: FpMatrix::zeros(m, d, fmt),
            wv: FpMatrix::zeros(m, d, fmt),
            wo: FpMatrix::zeros(d, m, fmt),
        }
    }

    fn check(&self, m: usize, d: usize) -> Result<()> {
        let md = (m, d);
        if self.wk.shape() != md || self.wq.shape() != md || self.wv.shape() != md || self.wo.shape() != (d, m) {
            return Err(Error::Shape(format!("attention head does not fit m={m}, d={d}")));
        }
        Ok(())
    }
}

impl AttnParams {
    pub fn zeros(h: usize, m: usize, d: usize, fmt: FpFormat) -> AttnParams {
        AttnParams { heads: (0..h).map(|_| Head::zeros(m, d, fmt)).collect() }
    }
}

impl BlockStack {
    pub fn new(blocks: Vec<Block>, dims: StackDims) -> Result<BlockStack> {
        if dims.h == 0 || dims.m == 0 || dims.r == 0 || dims.d == 0 || dims.n == 0 {
            return Err(Error::Shape(format!("degenerate stack dims {dims:?}")));
        }
        for b in &blocks {
            if b.attn.heads.len() != dims.h {
                return Err(Error::Shape(format!("{} heads, expected {}", b.attn.heads.len(), dims.h)));
            }
            for head in &b.attn.heads {
                head.check(dims.m, dims.d)?;
            }
            b.ff.check(dims.r, dims.d)?;
        }
        Ok(BlockStack { blocks, dims })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn dims(&self) -> StackDims {
        self.dims
    }

    pub fn forward(&self, x: &FpMatrix, fmt: FpFormat) -> Result<FpMatrix> {
        if x.shape() != (self.dims.d, self.dims.n) {
            return Err(Error::Shape(format!("stack input {:?}, expected {:?}", x.shape(), (self.dims.d, self.dims.n))));
        }
        let mut z = x.clone();
        for b in &self.blocks {
            z = attn_forward(&z, &b.attn, fmt)?;
            z = ff_forward(&z, &b.ff, fmt)?;
        }
        Ok(z)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransformerModel {
    pub format: FpFormat,
    pub w_in: FpMatrix,
    pub b_in: Vec<Fp>,
    pub stack: BlockStack,
    pub w_out: FpMatrix,
    pub b_out: Vec<Fp>,
}

impl TransformerModel {
    pub fn new(
        format: FpFormat,
        w_in: FpMatrix,
        b_in: Vec<Fp>,
        stack: BlockStack,
        w_out: FpMatrix,
        b_out: Vec<Fp>,
    ) -> Result<TransformerModel> {
        let d = stack.dims().d;
        if w_in.rows() != d || b_in.len() != d || w_out.cols() != d || b_out.len() != w_out.rows() {
            return Err(Error::Shape("projection shapes do not match the stack".into()));
        }
        Ok(TransformerModel { format, w_in, b_in, stack, w_out, b_out })
    }

    pub fn d_in(&self) -> usize {
        self.w_in.cols()
    }

    pub fn d_out(&self) -> usize {
        self.w_out.rows()
    }

    pub fn n(&self) -> usize {
        self.stack.dims().n
    }

    pub fn forward(&self, x: &FpMatrix) -> Result<FpMatrix> {
        model_forward(x, self)
    }

    pub fn to_json(&self) -> ModelJson {
        let fmt = self.format;
        let vec = |v: &[Fp]| v.iter().map(|&x| render_hex(x, fmt)).collect::<Vec<_>>();
        ModelJson {
            format: fmt,
            dims: self.stack.dims(),
            d_in: self.d_in(),
            d_out: self.d_out(),
            w_in: self.w_in.to_json(fmt),
            b_in: vec(&self.b_in),
            blocks: self
                .stack
                .blocks()
                .iter()
                .map(|b| BlockJson {
                    heads: b
                        .attn
                        .heads
                        .iter()
                        .map(|h| HeadJson {
                            wk: h.wk.to_json(fmt),
                            wq: h.wq.to_json(fmt),
                            wv: h.wv.to_json(fmt),
                            wo: h.wo.to_json(fmt),
                        })
                        .collect(),
                    ff: FfJson {
                        w1: b.ff.w1.to_json(fmt),
                        b1: vec(&b.ff.b1),
                        w2: b.ff.w2.to_json(fmt),
                        b2: vec(&b.ff.b2),
                    },
                })
                .collect(),
            w_out: self.w_out.to_json(fmt),
            b_out: vec(&self.b_out),
        }
    }

    pub fn from_json(j: &ModelJson) -> Result<TransformerModel> {
        let fmt = j.format;
        let vec = |v: &[String]| v.iter().map(|s| parse_literal(s, fmt)).collect::<Result<Vec<_>>>();
        let mut blocks = Vec::with_capacity(j.blocks.len());
        for b in &j.blocks {
            let heads = b
                .heads
                .iter()
                .map(|h| {
                    Ok(Head {
                        wk: FpMatrix::from_json(&h.wk, fmt)?,
                        wq: FpMatrix::from_json(&h.wq, fmt)?,
                        wv: FpMatrix::from_json(&h.wv, fmt)?,
                        wo: FpMatrix::from_json(&h.wo, fmt)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let ff = FfParams {
                w1: FpMatrix::from_json(&b.ff.w1, fmt)?,
                b1: vec(&b.ff.b1)?,
                w2: FpMatrix::from_json(&b.ff.w2, fmt)?,
                b2: vec(&b.ff.b2)?,
            };
            blocks.push(Block { attn: AttnParams { heads }, ff });
        }
        let model = TransformerModel::new(
            fmt,
            FpMatrix::from_json(&j.w_in, fmt)?,
            vec(&j.b_in)?,
            BlockStack::new(blocks, j.dims)?,
            FpMatrix::from_json(&j.w_out, fmt)?,
            vec(&j.b_out)?,
        )?;
        if model.d_in() != j.d_in || model.d_out() != j.d_out {
            return Err(Error::Shape("declared d_in/d_out disagree with the projections".into()));
        }
        Ok(model)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HeadJson {
    pub wk: MatrixJson,
    pub wq: MatrixJson,
    pub wv: MatrixJson,
    pub wo: MatrixJson,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FfJson {
    pub w1: MatrixJson,
    pub b1: Vec<String>,
    pub w2: MatrixJson,
    pub b2: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockJson {
    pub heads: Vec<HeadJson>,
    pub ff: FfJson,
}

/// On-disk model. Vectors and matrix entries are hex bit patterns.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelJson {
    pub format: FpFormat,
    pub dims: StackDims,
    pub d_in: usize,
    pub d_out: usize,
    pub w_in: MatrixJson,
    pub b_in: Vec<String>,
    pub blocks: Vec<BlockJson>,
    pub w_out: MatrixJson,
    pub b_out: Vec<String>,
}

/// Max-shifted softmax of one column.
pub fn softmax_col(x: &[Fp], fmt: FpFormat) -> Vec<Fp> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let star = x[1..].iter().fold(x[0], |m, &v| fp_max(m, v));
    // x* is NaN, ∞ or -∞ exactly when some entry is NaN or ∞, or all are -∞.
    if !star.is_finite() {
        return vec![Fp::NaN; n];
    }
    let e: Vec<Fp> = x.iter().map(|&v| rounded_exp(fp_sub(v, star, fmt), fmt)).collect();
    let denom = left_sum(&e, fmt).expect("non-empty column");
    // The division domain holds here; a violation is still counted by fp_div.
    e.iter().map(|&v| fp_div(v, denom, fmt).unwrap_or(Fp::NaN)).collect()
}

/// X ⊕ ((W2 ⊗ ρ(W1 ⊗ X ⊕ b1 1ᵀ)) ⊕ b2 1ᵀ).
pub fn ff_forward(x: &FpMatrix, ff: &FfParams, fmt: FpFormat) -> Result<FpMatrix> {
    let n = x.cols();
    let hidden = mat_relu(&mat_add(&mat_mul(&ff.w1, x, fmt)?, &broadcast_bias(&ff.b1, n)?, fmt)?, fmt);
    let out = mat_add(&mat_mul(&ff.w2, &hidden, fmt)?, &broadcast_bias(&ff.b2, n)?, fmt)?;
    mat_add(x, &out, fmt)
}

/// Output of one head before the residual: WO ⊗ (V ⊗ σ(Kᵀ ⊗ Q)).
pub fn head_forward(x: &FpMatrix, head: &Head, fmt: FpFormat) -> Result<FpMatrix> {
    let k = mat_mul(&head.wk, x, fmt)?;
    let q = mat_mul(&head.wq, x, fmt)?;
    let v = mat_mul(&head.wv, x, fmt)?;
    let scores = mat_mul(&k.transpose(), &q, fmt)?;
    let sigma = FpMatrix::from_columns(&scores.columns().iter().map(|c| softmax_col(c, fmt)).collect::<Vec<_>>())?;
    mat_mul(&head.wo, &mat_mul(&v, &sigma, fmt)?, fmt)
}

/// X ⊕ (head_1 ⊕ head_2 ⊕ ... ⊕ head_h), heads folded left to right.
pub fn attn_forward(x: &FpMatrix, attn: &AttnParams, fmt: FpFormat) -> Result<FpMatrix> {
    let (first, rest) = attn.heads.split_first().ok_or_else(|| Error::Shape("attention with no heads".into()))?;
    let mut acc = head_forward(x, first, fmt)?;
    for head in rest {
        acc = mat_add(&acc, &head_forward(x, head, fmt)?, fmt)?;
    }
    mat_add(x, &acc, fmt)
}

/// W_out ⊗ g(W_in ⊗ X ⊕ b_in 1ᵀ) ⊕ b_out 1ᵀ.
pub fn model_forward(x: &FpMatrix, model: &TransformerModel) -> Result<FpMatrix> {
    let fmt = model.format;
    if x.rows() != model.d_in() {
        return Err(Error::Shape(format!("input has {} rows, model expects {}", x.rows(), model.d_in())));
    }
    let n = x.cols();
    let z = mat_add(&mat_mul(&model.w_in, x, fmt)?, &broadcast_bias(&model.b_in, n)?, fmt)?;
    let z = model.stack.forward(&z, fmt)?;
    mat_add(&mat_mul(&model.w_out, &z, fmt)?, &broadcast_bias(&model.b_out, n)?, fmt)
}

fn columns_equal(x: &FpMatrix, i: usize, y: &FpMatrix, j: usize) -> bool {
    (0..x.rows()).all(|r| fp_eq(x.get(r, i), y.get(r, j)))
}

/// (a,b)-similarity with 1-based a, b: X = [z1 ×a, z2 ×(b−a), tail],
/// Y = [z1 ×(a−1), z2 ×(b−a+1), same tail].
pub fn is_ab_similar(x: &FpMatrix, y: &FpMatrix, a: usize, b: usize) -> Result<bool> {
    let n = x.cols();
    if x.shape() != y.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", x.shape(), y.shape())));
    }
    if a < 1 || a >= b || b > n {
        return Err(Error::Index(format!("need 1 <= a < b <= n, got a={a}, b={b}, n={n}")));
    }
    // z1 is column 0 of X, z2 is column b-1 of X (both 0-based).
    let (z1, z2) = (0, b - 1);
    let x_ok = (0..a).all(|j| columns_equal(x, j, x, z1)) && (a..b).all(|j| columns_equal(x, j, x, z2));
    let y_ok = (0..a - 1).all(|j| columns_equal(y, j, x, z1)) && (a - 1..b).all(|j| columns_equal(y, j, x, z2));
    let tail_ok = (b..n).all(|j| columns_equal(x, j, y, j));
    Ok(x_ok && y_ok && tail_ok)
}

/// True iff the columns are pairwise distinct.
pub fn is_distinct_tokens(x: &FpMatrix) -> bool {
    let cols = x.columns();
    let mut seen = std::collections::HashSet::with_capacity(cols.len());
    cols.into_iter().all(|c| seen.insert(c))
}
