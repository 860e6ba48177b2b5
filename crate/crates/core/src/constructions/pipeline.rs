//! Affine+ReLU pipelines and their embedding into residual feed-forward blocks.

use crate::error::{Error, Result};
use crate::fp::{fp_add, fp_mul, rounded_relu, Fp, FpFormat};
use crate::linalg::FpMatrix;
use crate::transformer::{AttnParams, Block, BlockStack, FfParams, Head, StackDims};

/// One affine map, optionally followed by ρ. Row `u` lists `(source, weight)` pairs over
/// the concatenation [pipeline inputs | previous layer outputs]; the affine value is
/// `(0 ⊕ w_1 ⊗ s_1 ⊕ ... ) ⊕ bias` with sources in ascending order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layer {
    pub rows: Vec<Vec<(usize, Fp)>>,
    pub bias: Vec<Fp>,
    pub relu: bool,
}

impl Layer {
    pub fn width(&self) -> usize {
        self.rows.len()
    }
}

/// Layers applied in order. All but the last apply ρ.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pipeline {
    pub inputs: usize,
    /// Inputs known to be non-negative; others are split into ρ(x), ρ(-x) when a linear layer reads them.
    pub input_nonneg: Vec<bool>,
    pub layers: Vec<Layer>,
}

impl Pipeline {
    pub fn new(inputs: usize, input_nonneg: Vec<bool>, layers: Vec<Layer>) -> Result<Pipeline> {
        if inputs == 0 || input_nonneg.len() != inputs || layers.is_empty() {
            return Err(Error::Shape("pipeline needs inputs and at least one layer".into()));
        }
        let mut prev = 0;
        for (t, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.rows.len() || layer.rows.is_empty() {
                return Err(Error::Shape(format!("layer {t}: rows and bias disagree")));
            }
            if !layer.relu && t + 1 != layers.len() {
                return Err(Error::Shape(format!("layer {t}: only the last layer may be linear")));
            }
            for row in &layer.rows {
                if row.windows(2).any(|w| w[0].0 >= w[1].0) || row.iter().any(|&(s, _)| s >= inputs + prev) {
                    return Err(Error::Shape(format!("layer {t}: sources must be ascending and in range")));
                }
            }
            prev = layer.width();
        }
        Ok(Pipeline { inputs, input_nonneg, layers })
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, Layer::width)
    }

    /// Every layer's output on one input vector.
    pub fn eval_trace(&self, x: &[Fp], fmt: FpFormat) -> Result<Vec<Vec<Fp>>> {
        if x.len() != self.inputs {
            return Err(Error::Shape(format!("pipeline takes {} inputs, got {}", self.inputs, x.len())));
        }
        let mut trace: Vec<Vec<Fp>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let prev: &[Fp] = trace.last().map_or(&[], |v| v.as_slice());
            let src = |s: usize| if s < self.inputs { x[s] } else { prev[s - self.inputs] };
            let out = layer
                .rows
                .iter()
                .zip(&layer.bias)
                .map(|(row, &b)| {
                    let acc = row.iter().fold(fmt.zero(), |acc, &(s, w)| fp_add(acc, fp_mul(w, src(s), fmt), fmt));
                    let v = fp_add(acc, b, fmt);
                    if layer.relu {
                        rounded_relu(v, fmt)
                    } else {
                        v
                    }
                })
                .collect();
            trace.push(out);
        }
        Ok(trace)
    }

    pub fn eval(&self, x: &[Fp], fmt: FpFormat) -> Result<Vec<Fp>> {
        Ok(self.eval_trace(x, fmt)?.pop().expect("non-empty pipeline"))
    }
}

/// Where a pipeline lives in the residual stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IoLayout {
    /// Residual coordinates of the pipeline inputs, strictly ascending.
    pub inputs: Vec<usize>,
    /// Residual coordinates receiving the outputs; they must hold 0 on entry.
    pub outputs: Vec<usize>,
    /// First coordinate of the scratch area; must lie above every input coordinate.
    pub scratch_start: usize,
}

/// Sparse description of one attention head (WK = WQ = 0).
#[derive(Clone, Debug, Default)]
pub struct AttnSpec {
    /// Rows of WV over residual coordinates.
    pub wv: Vec<Vec<(usize, Fp)>>,
    /// `(coordinate, row of WO)` for every nonzero row.
    pub wo: Vec<(usize, Vec<(usize, Fp)>)>,
}

/// Sparse description of one block before the common dims are fixed.
#[derive(Clone, Debug, Default)]
pub struct BlockSpec {
    pub attn: Option<AttnSpec>,
    /// Rows of W1 over residual coordinates, one per hidden unit.
    pub w1: Vec<Vec<(usize, Fp)>>,
    pub b1: Vec<Fp>,
    /// `(coordinate, row of W2 over hidden units)`.
    pub w2: Vec<(usize, Vec<(usize, Fp)>)>,
    pub b2: Vec<(usize, Fp)>,
}

impl BlockSpec {
    pub fn hidden(&self) -> usize {
        self.w1.len()
    }

    pub fn heads_m(&self) -> usize {
        self.attn.as_ref().map_or(0, |a| a.wv.len())
    }
}

/// Sizes of a realized stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub struct DimensionLedger {
    pub t_d: usize,
    pub t_m: usize,
    pub t_r: usize,
    pub blocks: usize,
}

/// Turns block specs into a stack with h = 1 and the smallest common m and r.
pub fn realize(specs: &[BlockSpec], d: usize, n: usize, fmt: FpFormat) -> Result<(BlockStack, DimensionLedger)> {
    let r = specs.iter().map(BlockSpec::hidden).max().unwrap_or(1).max(1);
    let m = specs.iter().map(BlockSpec::heads_m).max().unwrap_or(1).max(1);
    let mut blocks = Vec::with_capacity(specs.len());
    for spec in specs {
        for row in spec.w1.iter().chain(spec.attn.iter().flat_map(|a| a.wv.iter())) {
            if row.iter().any(|&(c, _)| c >= d) {
                return Err(Error::Budget(format!("block reads coordinate beyond d = {d}")));
            }
        }
        let head = match &spec.attn {
            None => Head {
                wk: FpMatrix::sparse_zeros(m, d, fmt),
                wq: FpMatrix::sparse_zeros(m, d, fmt),
                wv: FpMatrix::sparse_zeros(m, d, fmt),
                wo: FpMatrix::sparse_zeros(d, m, fmt),
            },
            Some(a) => {
                let mut wv = a.wv.clone();
                wv.resize(m, Vec::new());
                Head {
                    wk: FpMatrix::sparse_zeros(m, d, fmt),
                    wq: FpMatrix::sparse_zeros(m, d, fmt),
                    wv: FpMatrix::from_sparse_rows(m, d, wv, fmt)?,
                    wo: FpMatrix::from_sparse_rows(d, m, scatter(&a.wo, d)?, fmt)?,
                }
            }
        };
        let mut w1 = spec.w1.clone();
        w1.resize(r, Vec::new());
        let mut b1 = spec.b1.clone();
        b1.resize(r, fmt.zero());
        let mut b2 = vec![fmt.zero(); d];
        for &(c, v) in &spec.b2 {
            *b2.get_mut(c).ok_or_else(|| Error::Budget(format!("bias coordinate {c} beyond d = {d}")))? = v;
        }
        let ff = FfParams {
            w1: FpMatrix::from_sparse_rows(r, d, w1, fmt)?,
            b1,
            w2: FpMatrix::from_sparse_rows(d, r, scatter(&spec.w2, d)?, fmt)?,
            b2,
        };
        blocks.push(Block { attn: AttnParams { heads: vec![head] }, ff });
    }
    let stack = BlockStack::new(blocks, StackDims { h: 1, m, r, d, n })?;
    Ok((stack, DimensionLedger { t_d: d, t_m: m, t_r: r, blocks: specs.len() }))
}

fn scatter(rows: &[(usize, Vec<(usize, Fp)>)], d: usize) -> Result<Vec<Vec<(usize, Fp)>>> {
    let mut out = vec![Vec::new(); d];
    for (c, row) in rows {
        let slot = out.get_mut(*c).ok_or_else(|| Error::Budget(format!("coordinate {c} beyond d = {d}")))?;
        if !slot.is_empty() {
            return Err(Error::Shape(format!("coordinate {c} written twice")));
        }
        *slot = row.clone();
    }
    Ok(out)
}

/// Number of residual coordinates the scratch area of `embed_specs` needs.
pub fn scratch_width(p: &Pipeline) -> usize {
    let regions = if p.layers.len() > 1 { 2 } else { 0 };
    let widest = p.layers[..p.layers.len() - 1].iter().map(Layer::width).max().unwrap_or(0);
    regions * widest
}

/// One FF block per layer. Layer t writes its units into a fresh scratch region and erases
/// the previous region in the same block (-ρ(z) for non-negative z). The last layer writes
/// the declared output coordinates; a linear last layer reads its sources through ρ(s) and,
/// for inputs that may be negative, ρ(-s).
pub fn embed_specs(p: &Pipeline, io: &IoLayout, d: usize, fmt: FpFormat) -> Result<Vec<BlockSpec>> {
    if io.inputs.len() != p.inputs || io.outputs.len() != p.output_width() {
        return Err(Error::Shape("layout does not match the pipeline".into()));
    }
    if io.inputs.windows(2).any(|w| w[0] >= w[1]) || io.inputs.iter().any(|&c| c >= io.scratch_start) {
        return Err(Error::Shape("inputs must be ascending and below the scratch area".into()));
    }
    let width = scratch_width(p) / 2;
    if io.scratch_start + scratch_width(p) > d || io.outputs.iter().any(|&c| c >= d) {
        return Err(Error::Budget(format!(
            "pipeline needs {} scratch coordinates from {}, d = {d}",
            scratch_width(p),
            io.scratch_start
        )));
    }
    let region = |t: usize| io.scratch_start + (t % 2) * width;
    let one = fmt.one();
    let minus_one = one.neg();
    let last = p.layers.len() - 1;
    let mut specs = Vec::with_capacity(p.layers.len());
    for (t, layer) in p.layers.iter().enumerate() {
        let prev_width = if t == 0 { 0 } else { p.layers[t - 1].width() };
        let coord = |s: usize| if s < p.inputs { io.inputs[s] } else { region(t - 1) + (s - p.inputs) };
        let mut spec = BlockSpec::default();
        if layer.relu {
            for (row, &b) in layer.rows.iter().zip(&layer.bias) {
                spec.w1.push(row.iter().map(|&(s, w)| (coord(s), w)).collect());
                spec.b1.push(b);
            }
            for u in 0..layer.width() {
                let target = if t == last { io.outputs[u] } else { region(t) + u };
                spec.w2.push((target, vec![(u, one)]));
            }
            // Erase the previous region through copies ρ(z) = z.
            for u in 0..prev_width {
                let h = spec.w1.len();
                spec.w1.push(vec![(region(t - 1) + u, one)]);
                spec.b1.push(fmt.zero());
                spec.w2.push((region(t - 1) + u, vec![(h, minus_one)]));
            }
        } else {
            // Hidden copies of every source: prev-region units (also erased) and referenced inputs.
            let mut pos = vec![None; p.inputs + prev_width];
            let mut neg = vec![None; p.inputs + prev_width];
            let mut used: Vec<usize> = layer.rows.iter().flatten().map(|&(s, _)| s).collect();
            used.extend(p.inputs..p.inputs + prev_width);
            used.sort_unstable();
            used.dedup();
            for &s in &used {
                pos[s] = Some(spec.w1.len());
                spec.w1.push(vec![(coord(s), one)]);
                spec.b1.push(fmt.zero());
                if s < p.inputs && !p.input_nonneg[s] {
                    neg[s] = Some(spec.w1.len());
                    spec.w1.push(vec![(coord(s), minus_one)]);
                    spec.b1.push(fmt.zero());
                }
            }
            for (u, (row, &b)) in layer.rows.iter().zip(&layer.bias).enumerate() {
                let mut w2 = Vec::new();
                for &(s, w) in row {
                    w2.push((pos[s].expect("source copied"), w));
                    if let Some(h) = neg[s] {
                        w2.push((h, w.neg()));
                    }
                }
                spec.w2.push((io.outputs[u], w2));
                spec.b2.push((io.outputs[u], b));
            }
            for u in 0..prev_width {
                spec.w2.push((region(t - 1) + u, vec![(pos[p.inputs + u].expect("copied"), minus_one)]));
            }
        }
        specs.push(spec);
    }
    Ok(specs)
}

/// Embeds a pipeline as a stack of FF blocks with zero-weight attention.
pub fn embed_stages_as_ff(p: &Pipeline, io: &IoLayout, d: usize, n: usize, fmt: FpFormat) -> Result<BlockStack> {
    Ok(realize(&embed_specs(p, io, d, fmt)?, d, n, fmt)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::gadgets::{build_memorizer, LookupTable};
    use crate::fp::enumerate_finite;

    #[test]
    fn embedded_memorizer_matches_pipeline() {
        let f = FpFormat::new(2, 4).unwrap();
        let xs = enumerate_finite(f);
        let mut table = LookupTable::new(1, 2);
        for (i, &k) in xs.iter().enumerate().step_by(3) {
            table.insert(vec![k], vec![xs[(i * 7) % xs.len()], xs[(i * 11 + 5) % xs.len()]]).unwrap();
        }
        let pipe = build_memorizer(&table, f).unwrap();
        let io = IoLayout { inputs: vec![0], outputs: vec![1, 2], scratch_start: 3 };
        let d = 3 + scratch_width(&pipe);
        let n = 4;
        let stack = embed_stages_as_ff(&pipe, &io, d, n, f).unwrap();
        let keys: Vec<Fp> = table.entries().iter().map(|(k, _)| k[0]).collect();
        for chunk in keys.chunks(n) {
            let mut cols = Vec::new();
            for &k in chunk.iter().chain(std::iter::repeat(&keys[0])).take(n) {
                let mut c = vec![f.zero(); d];
                c[0] = k;
                cols.push(c);
            }
            let x = FpMatrix::from_columns(&cols).unwrap();
            let y = stack.forward(&x, f).unwrap();
            for (j, col) in cols.iter().enumerate() {
                let want = pipe.eval(&[col[0]], f).unwrap();
                assert_eq!(y.get(1, j), want[0]);
                assert_eq!(y.get(2, j), want[1]);
                assert_eq!(y.get(0, j), col[0]);
                assert!((3..d).all(|c| y.get(c, j) == f.zero()), "scratch not cleared");
            }
        }
    }

    #[test]
    fn linear_layer_over_signed_inputs() {
        let f = FpFormat::new(3, 4).unwrap();
        let xs = enumerate_finite(f);
        let two = f.from_int(2);
        let layer = Layer { rows: vec![vec![(0, two), (1, f.one().neg())]], bias: vec![f.one()], relu: false };
        let pipe = Pipeline::new(2, vec![false, false], vec![layer]).unwrap();
        let io = IoLayout { inputs: vec![0, 1], outputs: vec![2], scratch_start: 3 };
        let stack = embed_stages_as_ff(&pipe, &io, 3, 1, f).unwrap();
        for &a in xs.iter().step_by(5) {
            for &b in xs.iter().step_by(9) {
                let x = FpMatrix::column_vector(vec![a, b, f.zero()]).unwrap();
                let y = stack.forward(&x, f).unwrap();
                assert_eq!(y.get(2, 0), pipe.eval(&[a, b], f).unwrap()[0]);
            }
        }
    }
}
