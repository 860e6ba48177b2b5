//! Matrices over F-bar. Every reduction is a left fold in ascending index order;
//! nothing here reorders, blocks, or compensates a sum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp::tables::{op_tables, OpTables};
use crate::fp::{fp_add, fp_mul, parse_literal, render_hex, rounded_relu, Fp, FpFormat};

/// `rows x cols` matrix. Weight matrices built by the constructions are mostly zero and
/// are kept in sparse rows; every accessor and operation sees the same dense value.
#[derive(Clone, Debug)]
pub struct FpMatrix {
    rows: usize,
    cols: usize,
    store: Store,
}

#[derive(Clone, Debug)]
enum Store {
    /// Row-major entries.
    Dense(Vec<Fp>),
    /// Per row, the entries that are not the canonical zero, by ascending column.
    Sparse { zero: Fp, rows: Vec<Vec<(usize, Fp)>> },
}

fn is_zero_entry(x: Fp) -> bool {
    matches!(x, Fp::Finite { sig: 0, .. })
}

impl FpMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Fp>) -> Result<FpMatrix> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("empty matrix {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!("{} entries for {rows}x{cols}", data.len())));
        }
        Ok(FpMatrix { rows, cols, store: Store::Dense(data) })
    }

    /// Sparse matrix from `(column, value)` lists per row; zeros are dropped.
    pub fn from_sparse_rows(rows: usize, cols: usize, entries: Vec<Vec<(usize, Fp)>>, fmt: FpFormat) -> Result<FpMatrix> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("empty matrix {rows}x{cols}")));
        }
        if entries.len() != rows {
            return Err(Error::Shape(format!("{} sparse rows for {rows}x{cols}", entries.len())));
        }
        let mut out = Vec::with_capacity(rows);
        for mut row in entries {
            row.sort_by_key(|&(c, _)| c);
            if row.iter().any(|&(c, _)| c >= cols) || row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::Shape(format!("bad sparse row for {rows}x{cols}")));
            }
            row.retain(|&(_, v)| !is_zero_entry(v));
            out.push(row);
        }
        Ok(FpMatrix { rows, cols, store: Store::Sparse { zero: fmt.zero(), rows: out } })
    }

    /// All-zero matrix in sparse form.
    pub fn sparse_zeros(rows: usize, cols: usize, fmt: FpFormat) -> FpMatrix {
        assert!(rows > 0 && cols > 0, "empty matrix");
        FpMatrix { rows, cols, store: Store::Sparse { zero: fmt.zero(), rows: vec![Vec::new(); rows] } }
    }

    pub fn filled(rows: usize, cols: usize, v: Fp) -> FpMatrix {
        assert!(rows > 0 && cols > 0, "empty matrix");
        FpMatrix { rows, cols, store: Store::Dense(vec![v; rows * cols]) }
    }

    pub fn zeros(rows: usize, cols: usize, fmt: FpFormat) -> FpMatrix {
        FpMatrix::filled(rows, cols, fmt.zero())
    }

    pub fn from_rows(rows: Vec<Vec<Fp>>) -> Result<FpMatrix> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged rows".into()));
        }
        FpMatrix::new(r, c, rows.into_iter().flatten().collect())
    }

    pub fn from_columns(cols: &[Vec<Fp>]) -> Result<FpMatrix> {
        let c = cols.len();
        let r = cols.first().map_or(0, |col| col.len());
        if cols.iter().any(|col| col.len() != r) {
            return Err(Error::Shape("ragged columns".into()));
        }
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            data.extend(cols.iter().map(|col| col[i]));
        }
        FpMatrix::new(r, c, data)
    }

    pub fn column_vector(v: Vec<Fp>) -> Result<FpMatrix> {
        let n = v.len();
        FpMatrix::new(n, 1, v)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.store, Store::Sparse { .. })
    }

    /// Number of stored entries that are not the canonical zero.
    pub fn nonzeros(&self) -> usize {
        match &self.store {
            Store::Dense(d) => d.iter().filter(|&&x| !is_zero_entry(x)).count(),
            Store::Sparse { rows: s, .. } => s.iter().map(Vec::len).sum(),
        }
    }

    /// Row-major entries.
    pub fn entries(&self) -> Vec<Fp> {
        match &self.store {
            Store::Dense(d) => d.clone(),
            Store::Sparse { .. } => (0..self.rows).flat_map(|i| self.row(i)).collect(),
        }
    }

    /// Same values, dense storage.
    pub fn to_dense(&self) -> FpMatrix {
        FpMatrix { rows: self.rows, cols: self.cols, store: Store::Dense(self.entries()) }
    }

    pub fn get(&self, i: usize, j: usize) -> Fp {
        assert!(i < self.rows && j < self.cols, "index ({i},{j}) out of {}x{}", self.rows, self.cols);
        match &self.store {
            Store::Dense(d) => d[i * self.cols + j],
            Store::Sparse { zero, rows: s } => match s[i].binary_search_by_key(&j, |&(c, _)| c) {
                Ok(k) => s[i][k].1,
                Err(_) => *zero,
            },
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: Fp) {
        assert!(i < self.rows && j < self.cols, "index ({i},{j}) out of {}x{}", self.rows, self.cols);
        match &mut self.store {
            Store::Dense(d) => d[i * self.cols + j] = v,
            Store::Sparse { rows: s, .. } => {
                let row = &mut s[i];
                match row.binary_search_by_key(&j, |&(c, _)| c) {
                    Ok(k) if is_zero_entry(v) => {
                        row.remove(k);
                    }
                    Ok(k) => row[k].1 = v,
                    Err(_) if is_zero_entry(v) => {}
                    Err(k) => row.insert(k, (j, v)),
                }
            }
        }
    }

    pub fn row(&self, i: usize) -> Vec<Fp> {
        match &self.store {
            Store::Dense(d) => d[i * self.cols..(i + 1) * self.cols].to_vec(),
            Store::Sparse { zero, rows: s } => {
                let mut out = vec![*zero; self.cols];
                for &(c, v) in &s[i] {
                    out[c] = v;
                }
                out
            }
        }
    }

    pub fn column(&self, j: usize) -> Vec<Fp> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn columns(&self) -> Vec<Vec<Fp>> {
        let d = self.to_dense_vec();
        (0..self.cols).map(|j| (0..self.rows).map(|i| d[i * self.cols + j]).collect()).collect()
    }

    fn to_dense_vec(&self) -> std::borrow::Cow<'_, [Fp]> {
        match &self.store {
            Store::Dense(d) => std::borrow::Cow::Borrowed(d),
            Store::Sparse { .. } => std::borrow::Cow::Owned(self.entries()),
        }
    }

    pub fn transpose(&self) -> FpMatrix {
        match &self.store {
            Store::Dense(d) => {
                let mut data = Vec::with_capacity(d.len());
                for j in 0..self.cols {
                    data.extend((0..self.rows).map(|i| d[i * self.cols + j]));
                }
                FpMatrix { rows: self.cols, cols: self.rows, store: Store::Dense(data) }
            }
            Store::Sparse { zero, rows: s } => {
                let mut t = vec![Vec::new(); self.cols];
                for (i, row) in s.iter().enumerate() {
                    for &(c, v) in row {
                        t[c].push((i, v));
                    }
                }
                FpMatrix { rows: self.cols, cols: self.rows, store: Store::Sparse { zero: *zero, rows: t } }
            }
        }
    }

    pub fn map(&self, f: impl Fn(Fp) -> Fp) -> FpMatrix {
        let data = self.to_dense_vec().iter().map(|&x| f(x)).collect();
        FpMatrix { rows: self.rows, cols: self.cols, store: Store::Dense(data) }
    }

    /// Rows `start..end` as a new matrix.
    pub fn row_slice(&self, start: usize, end: usize) -> Result<FpMatrix> {
        if start >= end || end > self.rows {
            return Err(Error::Index(format!("rows {start}..{end} of {}", self.rows)));
        }
        let store = match &self.store {
            Store::Dense(d) => Store::Dense(d[start * self.cols..end * self.cols].to_vec()),
            Store::Sparse { zero, rows: s } => Store::Sparse { zero: *zero, rows: s[start..end].to_vec() },
        };
        Ok(FpMatrix { rows: end - start, cols: self.cols, store })
    }

    pub fn all_finite(&self) -> bool {
        match &self.store {
            Store::Dense(d) => d.iter().all(|x| x.is_finite()),
            Store::Sparse { rows: s, .. } => s.iter().flatten().all(|(_, x)| x.is_finite()),
        }
    }

    /// Dense matrices list every entry; sparse ones list only their nonzero entries.
    pub fn to_json(&self, fmt: FpFormat) -> MatrixJson {
        match &self.store {
            Store::Dense(d) => MatrixJson {
                rows: self.rows,
                cols: self.cols,
                entries: Some(d.iter().map(|&x| render_hex(x, fmt)).collect()),
                nonzeros: None,
            },
            Store::Sparse { rows: s, .. } => MatrixJson {
                rows: self.rows,
                cols: self.cols,
                entries: None,
                nonzeros: Some(
                    s.iter()
                        .enumerate()
                        .flat_map(|(i, row)| row.iter().map(move |&(c, v)| (i, c, render_hex(v, fmt))))
                        .collect(),
                ),
            },
        }
    }

    pub fn from_json(j: &MatrixJson, fmt: FpFormat) -> Result<FpMatrix> {
        match (&j.entries, &j.nonzeros) {
            (Some(e), None) => {
                let data = e.iter().map(|s| parse_literal(s, fmt)).collect::<Result<Vec<_>>>()?;
                FpMatrix::new(j.rows, j.cols, data)
            }
            (None, Some(nz)) => {
                let mut rows = vec![Vec::new(); j.rows];
                for (i, c, s) in nz {
                    let row = rows
                        .get_mut(*i)
                        .ok_or_else(|| Error::Shape(format!("row {i} out of {}", j.rows)))?;
                    row.push((*c, parse_literal(s, fmt)?));
                }
                FpMatrix::from_sparse_rows(j.rows, j.cols, rows, fmt)
            }
            _ => Err(Error::Parse("matrix needs exactly one of `entries` or `nonzeros`".into())),
        }
    }
}

impl PartialEq for FpMatrix {
    fn eq(&self, other: &FpMatrix) -> bool {
        if self.shape() != other.shape() {
            return false;
        }
        match (&self.store, &other.store) {
            (Store::Sparse { rows: a, .. }, Store::Sparse { rows: b, .. }) => a == b,
            _ => self.to_dense_vec() == other.to_dense_vec(),
        }
    }
}

impl Eq for FpMatrix {}

impl std::hash::Hash for FpMatrix {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.shape().hash(state);
        self.to_dense_vec().hash(state);
    }
}

/// On-disk matrix: `{rows, cols, entries}` with row-major hex bit patterns, or
/// `{rows, cols, nonzeros}` with `[row, col, hex]` triples for mostly-zero matrices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonzeros: Option<Vec<(usize, usize, String)>>,
}

/// (M ⊕ N)_ij = M_ij ⊕ N_ij.
pub fn mat_add(m: &FpMatrix, n: &FpMatrix, fmt: FpFormat) -> Result<FpMatrix> {
    if m.shape() != n.shape() {
        return Err(Error::Shape(format!("add {:?} + {:?}", m.shape(), n.shape())));
    }
    let (a, b) = (m.to_dense_vec(), n.to_dense_vec());
    let data = a.iter().zip(b.iter()).map(|(&x, &y)| fp_add(x, y, fmt)).collect();
    Ok(FpMatrix { rows: m.rows, cols: m.cols, store: Store::Dense(data) })
}

/// (M ⊗ N)_ij = ⊕_{k ascending} M_ik ⊗ N_kj.
///
/// For a sparse M the fold runs over the stored entries only, starting from 0. A skipped
/// term is 0 ⊗ N_kj, which is the canonical zero whenever N_kj is finite, and both
/// 0 ⊕ y = y and y ⊕ 0 = y hold for every y, so the result is the dense fold's. Columns
/// of N holding ±∞ or NaN take the dense fold, where 0 ⊗ ±∞ = NaN matters.
pub fn mat_mul(m: &FpMatrix, n: &FpMatrix, fmt: FpFormat) -> Result<FpMatrix> {
    if m.cols != n.rows {
        return Err(Error::Shape(format!("mul {:?} x {:?}", m.shape(), n.shape())));
    }
    let (r, inner, c) = (m.rows, m.cols, n.cols);
    let nt = n.transpose().to_dense();
    let ncols = nt.to_dense_vec();
    let col = |j: usize| &ncols[j * inner..(j + 1) * inner];
    let mut data = vec![fmt.zero(); r * c];
    let tables = op_tables(fmt);
    match &m.store {
        Store::Dense(a) => {
            for i in 0..r {
                let arow = &a[i * inner..(i + 1) * inner];
                for j in 0..c {
                    data[i * c + j] = dense_dot(arow, col(j), fmt, tables);
                }
            }
        }
        Store::Sparse { rows: s, .. } => {
            let finite: Vec<bool> = (0..c).map(|j| col(j).iter().all(|x| x.is_finite())).collect();
            for i in 0..r {
                let mut dense_row: Option<Vec<Fp>> = None;
                for j in 0..c {
                    data[i * c + j] = if finite[j] {
                        sparse_dot(&s[i], col(j), fmt, tables)
                    } else {
                        let row = dense_row.get_or_insert_with(|| m.row(i));
                        dense_dot(row, col(j), fmt, tables)
                    };
                }
            }
        }
    }
    Ok(FpMatrix { rows: r, cols: c, store: Store::Dense(data) })
}

fn dense_dot(a: &[Fp], b: &[Fp], fmt: FpFormat, tables: Option<&OpTables>) -> Fp {
    match tables {
        Some(t) => {
            let mut acc = t.mul(t.encode(a[0]), t.encode(b[0]));
            for k in 1..a.len() {
                acc = t.add(acc, t.mul(t.encode(a[k]), t.encode(b[k])));
            }
            t.decode(acc)
        }
        None => {
            let mut acc = fp_mul(a[0], b[0], fmt);
            for k in 1..a.len() {
                acc = fp_add(acc, fp_mul(a[k], b[k], fmt), fmt);
            }
            acc
        }
    }
}

fn sparse_dot(row: &[(usize, Fp)], b: &[Fp], fmt: FpFormat, tables: Option<&OpTables>) -> Fp {
    match tables {
        Some(t) => {
            let mut acc = t.encode(fmt.zero());
            for &(k, w) in row {
                acc = t.add(acc, t.mul(t.encode(w), t.encode(b[k])));
            }
            t.decode(acc)
        }
        None => {
            let mut acc = fmt.zero();
            for &(k, w) in row {
                acc = fp_add(acc, fp_mul(w, b[k], fmt), fmt);
            }
            acc
        }
    }
}

/// Elementwise correctly rounded ReLU.
pub fn mat_relu(m: &FpMatrix, fmt: FpFormat) -> FpMatrix {
    m.map(|x| rounded_relu(x, fmt))
}

/// b 1_n^T: `n` exact copies of `b` as columns.
pub fn broadcast_bias(b: &[Fp], n: usize) -> Result<FpMatrix> {
    if b.is_empty() || n == 0 {
        return Err(Error::Shape(format!("broadcast of {} entries to {n} columns", b.len())));
    }
    let mut data = Vec::with_capacity(b.len() * n);
    for &v in b {
        data.extend(std::iter::repeat_n(v, n));
    }
    FpMatrix::new(b.len(), n, data)
}

/// A bijection on `0..n`, stored as its image array.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Permutation> {
        let n = map.len();
        let mut seen = vec![false; n];
        for &v in &map {
            if v >= n || seen[v] {
                return Err(Error::Permutation(format!("{map:?} is not a bijection")));
            }
            seen[v] = true;
        }
        Ok(Permutation { map })
    }

    pub fn identity(n: usize) -> Permutation {
        Permutation { map: (0..n).collect() }
    }

    /// Exchanges the first two positions.
    pub fn swap12(n: usize) -> Result<Permutation> {
        if n < 2 {
            return Err(Error::Permutation(format!("swap12 needs n >= 2, got {n}")));
        }
        let mut map: Vec<usize> = (0..n).collect();
        map.swap(0, 1);
        Ok(Permutation { map })
    }

    /// i -> i+1 mod n.
    pub fn cycle(n: usize) -> Permutation {
        Permutation { map: (0..n).map(|i| (i + 1) % n).collect() }
    }

    pub fn n(&self) -> usize {
        self.map.len()
    }

    pub fn apply(&self, i: usize) -> usize {
        self.map[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }

    /// (self ∘ other)(i) = self(other(i)).
    pub fn compose(&self, other: &Permutation) -> Result<Permutation> {
        if self.n() != other.n() {
            return Err(Error::Permutation("composing permutations of different sizes".into()));
        }
        Ok(Permutation { map: other.map.iter().map(|&i| self.map[i]).collect() })
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.n()];
        for (i, &v) in self.map.iter().enumerate() {
            inv[v] = i;
        }
        Permutation { map: inv }
    }

    /// Every permutation of `0..n` in lexicographic order.
    pub fn all(n: usize) -> Vec<Permutation> {
        fn rec(prefix: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Permutation>) {
            if prefix.len() == used.len() {
                out.push(Permutation { map: prefix.clone() });
                return;
            }
            for v in 0..used.len() {
                if !used[v] {
                    used[v] = true;
                    prefix.push(v);
                    rec(prefix, used, out);
                    prefix.pop();
                    used[v] = false;
                }
            }
        }
        let mut out = Vec::new();
        rec(&mut Vec::new(), &mut vec![false; n], &mut out);
        out
    }
}

/// πM: column j of the result is column π(j) of M. This is a right action:
/// permute_columns(π, permute_columns(σ, M)) = permute_columns(σ ∘ π, M).
pub fn permute_columns(pi: &Permutation, m: &FpMatrix) -> Result<FpMatrix> {
    if pi.n() != m.cols {
        return Err(Error::Shape(format!("permutation of {} on {} columns", pi.n(), m.cols)));
    }
    let d = m.to_dense_vec();
    let mut data = Vec::with_capacity(d.len());
    for i in 0..m.rows {
        let row = &d[i * m.cols..(i + 1) * m.cols];
        data.extend((0..m.cols).map(|j| row[pi.apply(j)]));
    }
    Ok(FpMatrix { rows: m.rows, cols: m.cols, store: Store::Dense(data) })
}
