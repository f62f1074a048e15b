//! Dense N-mode tensors and the multilinear algebra built on them.
//!
//! Storage is a flat buffer in first-mode-fastest order: the entry at
//! zero-based multi-index `(j_1, ..., j_N)` lives at
//! `j_1 + p_1 * (j_2 + p_2 * (j_3 + ...))`. Vectorization, matricization and
//! every Kronecker ordering in the crate derive from this single rule.
//!
//! Mode indices in this API are zero-based.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TensorLiteral", into = "TensorLiteral")]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// On-disk form `{"shape":[...],"data":[...]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorLiteral {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl TryFrom<TensorLiteral> for DenseTensor {
    type Error = Error;
    fn try_from(lit: TensorLiteral) -> Result<Self> {
        DenseTensor::new(lit.shape, lit.data)
    }
}

impl From<DenseTensor> for TensorLiteral {
    fn from(t: DenseTensor) -> Self {
        TensorLiteral {
            shape: t.shape,
            data: t.data,
        }
    }
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() {
        return Err(Error::Shape("tensor must have at least one mode".into()));
    }
    if shape.contains(&0) {
        return Err(Error::Shape(format!(
            "all mode sizes must be >= 1, got {shape:?}"
        )));
    }
    Ok(())
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        check_shape(&shape)?;
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {n} entries but {} values were given",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        check_shape(shape)?;
        let n = shape.iter().product();
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        })
    }

    /// Builds a tensor by evaluating `f` at every zero-based multi-index.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        check_shape(shape)?;
        let n: usize = shape.iter().product();
        let mut idx = vec![0usize; shape.len()];
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f(&idx));
            increment(&mut idx, shape);
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Square identity matrix as a 2-mode tensor.
    pub fn identity(n: usize) -> Result<Self> {
        Self::from_fn(&[n, n], |i| if i[0] == i[1] { 1.0 } else { 0.0 })
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        // nalgebra is column-major, which is exactly first-mode-fastest.
        Self {
            shape: vec![m.nrows(), m.ncols()],
            data: m.as_slice().to_vec(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// `vec(t)` under the canonical layout.
    pub fn vectorize(&self) -> &[f64] {
        &self.data
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        linear_index(&self.shape, idx)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.linear_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let k = self.linear_index(idx);
        self.data[k] = value;
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.expect_same_shape(other)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    fn expect_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "shapes differ: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    /// n-mode product `t ×_mode h` with `h` of size `q × p_mode`.
    pub fn mode_product(&self, h: &DMatrix<f64>, mode: usize) -> Result<Self> {
        if mode >= self.order() {
            return Err(Error::Shape(format!(
                "mode {mode} out of range for an order-{} tensor",
                self.order()
            )));
        }
        let p = self.shape[mode];
        if h.ncols() != p {
            return Err(Error::Shape(format!(
                "matrix has {} columns but mode {mode} has size {p}",
                h.ncols()
            )));
        }
        let q = h.nrows();
        let left: usize = self.shape[..mode].iter().product();
        let right: usize = self.shape[mode + 1..].iter().product();
        let mut out = vec![0.0; left * q * right];
        for r in 0..right {
            let src = &self.data[r * left * p..(r + 1) * left * p];
            let dst = &mut out[r * left * q..(r + 1) * left * q];
            for j in 0..p {
                let col = &src[j * left..(j + 1) * left];
                for i in 0..q {
                    let hij = h[(i, j)];
                    if hij == 0.0 {
                        continue;
                    }
                    let row = &mut dst[i * left..(i + 1) * left];
                    for (o, &x) in row.iter_mut().zip(col) {
                        *o += hij * x;
                    }
                }
            }
        }
        let mut shape = self.shape.clone();
        shape[mode] = q;
        Self::new(shape, out)
    }

    /// Contracts modes `from..=to` against the trailing modes of `h`.
    ///
    /// `h` has shape `(o_1, ..., o_K, p_from, ..., p_to)` with `K = out_modes`;
    /// the contracted range is replaced by the `K` output modes. With
    /// `from = 0, to = N-1` entry `i` of the result is `<t, h[i, :]>`.
    pub fn mode_range_product(
        &self,
        h: &DenseTensor,
        from: usize,
        to: usize,
        out_modes: usize,
    ) -> Result<Self> {
        if from > to || to >= self.order() {
            return Err(Error::Shape(format!(
                "mode range {from}..={to} invalid for an order-{} tensor",
                self.order()
            )));
        }
        let range = &self.shape[from..=to];
        if out_modes == 0 || h.order() != out_modes + range.len() {
            return Err(Error::Shape(format!(
                "projection tensor of order {} cannot map {} modes into {out_modes}",
                h.order(),
                range.len()
            )));
        }
        if &h.shape[out_modes..] != range {
            return Err(Error::Shape(format!(
                "projection trailing shape {:?} does not match modes {:?}",
                &h.shape[out_modes..],
                range
            )));
        }
        let out_block: usize = h.shape[..out_modes].iter().product();
        let inner: usize = range.iter().product();
        let left: usize = self.shape[..from].iter().product();
        let right: usize = self.shape[to + 1..].iter().product();
        let mut out = vec![0.0; left * out_block * right];
        for r in 0..right {
            let src = &self.data[r * left * inner..(r + 1) * left * inner];
            let dst = &mut out[r * left * out_block..(r + 1) * left * out_block];
            for k in 0..inner {
                let col = &src[k * left..(k + 1) * left];
                let hk = &h.data[k * out_block..(k + 1) * out_block];
                for (o, &hv) in hk.iter().enumerate() {
                    if hv == 0.0 {
                        continue;
                    }
                    let row = &mut dst[o * left..(o + 1) * left];
                    for (a, &x) in row.iter_mut().zip(col) {
                        *a += hv * x;
                    }
                }
            }
        }
        let mut shape = self.shape[..from].to_vec();
        shape.extend_from_slice(&h.shape[..out_modes]);
        shape.extend_from_slice(&self.shape[to + 1..]);
        Self::new(shape, out)
    }

    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.expect_same_shape(other)?;
        Ok(dot(&self.data, &other.data))
    }

    pub fn frobenius_norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    /// Unfolds the tensor into a matrix whose rows enumerate `row_modes`
    /// (first listed fastest) and whose columns enumerate the remaining modes
    /// in increasing order.
    pub fn matricize(&self, row_modes: &[usize]) -> Result<DMatrix<f64>> {
        let (rows, cols) = self.split_modes(row_modes)?;
        let nr: usize = rows.iter().map(|&m| self.shape[m]).product();
        let nc: usize = cols.iter().map(|&m| self.shape[m]).product();
        let mut out = DMatrix::zeros(nr, nc);
        let mut idx = vec![0usize; self.order()];
        for &v in &self.data {
            let r = sub_index(&idx, &rows, &self.shape);
            let c = sub_index(&idx, &cols, &self.shape);
            out[(r, c)] = v;
            increment(&mut idx, &self.shape);
        }
        Ok(out)
    }

    /// Inverse of [`DenseTensor::matricize`].
    pub fn from_matricized(m: &DMatrix<f64>, shape: &[usize], row_modes: &[usize]) -> Result<Self> {
        let template = Self::zeros(shape)?;
        let (rows, cols) = template.split_modes(row_modes)?;
        let nr: usize = rows.iter().map(|&k| shape[k]).product();
        let nc: usize = cols.iter().map(|&k| shape[k]).product();
        if m.nrows() != nr || m.ncols() != nc {
            return Err(Error::Shape(format!(
                "matrix is {}x{} but the unfolding needs {nr}x{nc}",
                m.nrows(),
                m.ncols()
            )));
        }
        Self::from_fn(shape, |idx| {
            m[(sub_index(idx, &rows, shape), sub_index(idx, &cols, shape))]
        })
    }

    fn split_modes(&self, row_modes: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
        if row_modes.is_empty() {
            return Err(Error::Shape("row mode list must be nonempty".into()));
        }
        let mut seen = vec![false; self.order()];
        for &m in row_modes {
            if m >= self.order() {
                return Err(Error::Shape(format!(
                    "mode {m} out of range for an order-{} tensor",
                    self.order()
                )));
            }
            if seen[m] {
                return Err(Error::Shape(format!("mode {m} listed twice")));
            }
            seen[m] = true;
        }
        let cols = (0..self.order()).filter(|&m| !seen[m]).collect();
        Ok((row_modes.to_vec(), cols))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn linear_index(shape: &[usize], idx: &[usize]) -> usize {
    debug_assert_eq!(shape.len(), idx.len());
    let mut k = 0;
    let mut stride = 1;
    for (&i, &p) in idx.iter().zip(shape) {
        debug_assert!(i < p);
        k += i * stride;
        stride *= p;
    }
    k
}

/// Advances a multi-index in first-mode-fastest order.
pub fn increment(idx: &mut [usize], shape: &[usize]) {
    for (i, &p) in idx.iter_mut().zip(shape) {
        *i += 1;
        if *i < p {
            return;
        }
        *i = 0;
    }
}

fn sub_index(idx: &[usize], modes: &[usize], shape: &[usize]) -> usize {
    let mut k = 0;
    let mut stride = 1;
    for &m in modes {
        k += idx[m] * stride;
        stride *= shape[m];
    }
    k
}

/// Kronecker-ordered outer product of vectors, first vector fastest.
pub fn outer_vectors<'a>(vectors: impl IntoIterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut acc = vec![1.0];
    for v in vectors {
        let mut next = Vec::with_capacity(acc.len() * v.len());
        for &b in v {
            next.extend(acc.iter().map(|&a| a * b));
        }
        acc = next;
    }
    acc
}

/// PARAFAC margins `γ_m^{(d)}` for `d = 1..D`, `m = 1..M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginSet {
    margins: Vec<Vec<Vec<f64>>>,
}

impl MarginSet {
    /// `margins[d][m]` is the length-`q_m` margin of component `d`.
    pub fn new(margins: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let first = margins
            .first()
            .ok_or_else(|| Error::Parameter("rank D must be >= 1".into()))?;
        if first.is_empty() {
            return Err(Error::Parameter("margins need at least one mode".into()));
        }
        let dims: Vec<usize> = first.iter().map(Vec::len).collect();
        check_shape(&dims)?;
        for (d, comp) in margins.iter().enumerate() {
            let lens: Vec<usize> = comp.iter().map(Vec::len).collect();
            if lens != dims {
                return Err(Error::Shape(format!(
                    "component {d} has margin lengths {lens:?}, expected {dims:?}"
                )));
            }
        }
        Ok(Self { margins })
    }

    pub fn zeros(rank: usize, dims: &[usize]) -> Result<Self> {
        Self::new(vec![dims.iter().map(|&q| vec![0.0; q]).collect(); rank])
    }

    pub fn rank(&self) -> usize {
        self.margins.len()
    }

    pub fn order(&self) -> usize {
        self.margins[0].len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.margins[0].iter().map(Vec::len).collect()
    }

    pub fn margin(&self, d: usize, m: usize) -> &[f64] {
        &self.margins[d][m]
    }

    pub fn margin_mut(&mut self, d: usize, m: usize) -> &mut [f64] {
        &mut self.margins[d][m]
    }

    pub fn component(&self, d: usize) -> &[Vec<f64>] {
        &self.margins[d]
    }

    /// All margins flattened in (d, m, j) order.
    pub fn flatten(&self) -> Vec<f64> {
        self.margins.iter().flatten().flatten().copied().collect()
    }

    pub fn from_flat(rank: usize, dims: &[usize], flat: &[f64]) -> Result<Self> {
        let per: usize = dims.iter().sum();
        if flat.len() != rank * per {
            return Err(Error::Shape(format!(
                "expected {} margin values, got {}",
                rank * per,
                flat.len()
            )));
        }
        let mut it = flat.iter().copied();
        let margins = (0..rank)
            .map(|_| {
                dims.iter()
                    .map(|&q| it.by_ref().take(q).collect())
                    .collect()
            })
            .collect();
        Self::new(margins)
    }

    /// Rank-one tensor `γ_1^{(d)} ∘ ... ∘ γ_M^{(d)}`.
    pub fn component_tensor(&self, d: usize) -> DenseTensor {
        let data = outer_vectors(self.margins[d].iter().map(Vec::as_slice));
        DenseTensor {
            shape: self.dims(),
            data,
        }
    }

    /// `B = Σ_d γ_1^{(d)} ∘ ... ∘ γ_M^{(d)}`.
    pub fn compose(&self) -> DenseTensor {
        let mut acc = self.component_tensor(0);
        for d in 1..self.rank() {
            let c = self.component_tensor(d);
            for (a, b) in acc.data.iter_mut().zip(&c.data) {
                *a += b;
            }
        }
        acc
    }

    /// Contracts `x` with every margin of component `d` except `skip_mode`:
    /// `x ×_1 γ_1 ... ×_{m-1} γ_{m-1} ×_{m+1} γ_{m+1} ... ×_M γ_M`.
    ///
    /// The result `ψ` satisfies `<γ_1 ∘ ... ∘ γ_M, x> = γ_{skip} · ψ`.
    pub fn partial_contract(
        &self,
        x: &DenseTensor,
        d: usize,
        skip_mode: usize,
    ) -> Result<Vec<f64>> {
        if d >= self.rank() {
            return Err(Error::Shape(format!(
                "component {d} out of range (D = {})",
                self.rank()
            )));
        }
        if skip_mode >= self.order() {
            return Err(Error::Shape(format!(
                "mode {skip_mode} out of range (M = {})",
                self.order()
            )));
        }
        if x.shape() != self.dims().as_slice() {
            return Err(Error::Shape(format!(
                "tensor shape {:?} does not match margin lengths {:?}",
                x.shape(),
                self.dims()
            )));
        }
        let mut out = vec![0.0; self.dims()[skip_mode]];
        partial_contract_into(x.data(), &self.margins[d], skip_mode, &mut out);
        Ok(out)
    }
}

/// Precomputed weights for contracting many tensors against every margin of
/// one component except `skip`.
pub struct PartialContractor {
    left: Vec<f64>,
    right: Vec<f64>,
    q: usize,
}

impl PartialContractor {
    pub fn new(margins: &[Vec<f64>], skip: usize) -> Self {
        Self {
            left: outer_vectors(margins[..skip].iter().map(Vec::as_slice)),
            right: outer_vectors(margins[skip + 1..].iter().map(Vec::as_slice)),
            q: margins[skip].len(),
        }
    }

    /// Writes `ψ` for the flat tensor `x` into `out` (length `q_skip`).
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let left = self.left.len();
        let q = self.q;
        out.iter_mut().for_each(|v| *v = 0.0);
        for (r, &wr) in self.right.iter().enumerate() {
            if wr == 0.0 {
                continue;
            }
            let block = &x[r * left * q..(r + 1) * left * q];
            for (i, o) in out.iter_mut().enumerate() {
                *o += wr * dot(&block[i * left..(i + 1) * left], &self.left);
            }
        }
    }
}

pub(crate) fn partial_contract_into(x: &[f64], margins: &[Vec<f64>], skip: usize, out: &mut [f64]) {
    PartialContractor::new(margins, skip).apply(x, out);
}

/// `parafac_compose` as a free function.
pub fn parafac_compose(m: &MarginSet) -> DenseTensor {
    m.compose()
}
