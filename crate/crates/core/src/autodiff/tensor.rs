use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense rank-1 or rank-2 array of `f64` with an optional gradient buffer.
///
/// Matrices are stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 2 || shape.contains(&0) {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape:?} must be rank 1 or 2 with positive extents"),
            ));
        }
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape:?} needs {n} values, got {}", values.len()),
            ));
        }
        Ok(Tensor {
            shape,
            values,
            grad: None,
        })
    }

    /// Rank-1 tensor. Panics on an empty vector.
    pub fn vector(values: Vec<f64>) -> Self {
        assert!(!values.is_empty(), "empty vector tensor");
        Tensor {
            shape: vec![values.len()],
            values,
            grad: None,
        }
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], values)
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), vec![0.0; n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[1]
        } else {
            1
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.values[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.values[r * c..(r + 1) * c]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    pub fn accumulate_grad(&mut self, g: &[f64]) {
        debug_assert_eq!(g.len(), self.values.len());
        match &mut self.grad {
            Some(buf) => buf.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => self.grad = Some(g.to_vec()),
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

/// Index of a tensor inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How a parameter participates in regularization and size accounting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    Weight,
    Bias,
    /// Lookup table rows; updated sparsely, excluded from parameter counts.
    Embedding,
}

#[derive(Clone, Debug)]
struct Entry {
    name: String,
    kind: ParamKind,
    frozen: bool,
    tensor: Tensor,
}

/// Named collection of trainable tensors.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    entries: Vec<Entry>,
    index: HashMap<String, ParamId>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor, kind: ParamKind) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Invalid(format!("duplicate parameter name {name:?}")));
        }
        let id = ParamId(self.entries.len());
        self.index.insert(name.clone(), id);
        self.entries.push(Entry {
            name,
            kind,
            frozen: false,
            tensor,
        });
        Ok(id)
    }

    /// Uniform(-r, r) with r = sqrt(6 / (rows + cols)).
    pub fn add_matrix<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        let r = (6.0 / (rows + cols) as f64).sqrt();
        let values = (0..rows * cols).map(|_| rng.gen_range(-r..r)).collect();
        self.add(name, Tensor::matrix(rows, cols, values)?, ParamKind::Weight)
    }

    pub fn add_zero_matrix(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> Result<ParamId> {
        self.add(name, Tensor::zeros(&[rows, cols])?, ParamKind::Weight)
    }

    pub fn add_bias(&mut self, name: impl Into<String>, len: usize) -> Result<ParamId> {
        self.add(name, Tensor::zeros(&[len])?, ParamKind::Bias)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].tensor
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn kind(&self, id: ParamId) -> ParamKind {
        self.entries[id.0].kind
    }

    pub fn is_frozen(&self, id: ParamId) -> bool {
        self.entries[id.0].frozen
    }

    pub fn set_frozen(&mut self, id: ParamId, frozen: bool) {
        self.entries[id.0].frozen = frozen;
    }

    /// Writes `grads` into each tensor's gradient buffer (accumulating).
    pub fn accumulate_grads(&mut self, grads: &Gradients) {
        for id in (0..self.entries.len()).map(ParamId) {
            if let Some(g) = grads.to_dense(id, self) {
                self.entries[id.0].tensor.accumulate_grad(&g);
            }
        }
    }

    pub fn zero_grads(&mut self) {
        self.entries.iter_mut().for_each(|e| e.tensor.zero_grad());
    }

    /// Scalar count over tensors whose kind passes `keep`.
    pub fn count_scalars(&self, keep: impl Fn(ParamKind) -> bool) -> usize {
        self.entries
            .iter()
            .filter(|e| keep(e.kind))
            .map(|e| e.tensor.len())
            .sum()
    }
}

/// Gradients produced by one backward pass, keyed by [`ParamId`].
///
/// Dense parameters get a full buffer; embedding rows touched through
/// [`Graph::row`](super::Graph::row) are kept sparse.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    pub(crate) dense: Vec<Option<Vec<f64>>>,
    pub(crate) rows: Vec<BTreeMap<usize, Vec<f64>>>,
}

impl Gradients {
    pub(crate) fn with_capacity(n: usize) -> Self {
        Gradients {
            dense: vec![None; n],
            rows: vec![BTreeMap::new(); n],
        }
    }

    pub fn dense(&self, id: ParamId) -> Option<&[f64]> {
        self.dense.get(id.0).and_then(|d| d.as_deref())
    }

    pub fn sparse_rows(&self, id: ParamId) -> impl Iterator<Item = (usize, &[f64])> {
        self.rows
            .get(id.0)
            .into_iter()
            .flat_map(|m| m.iter().map(|(r, g)| (*r, g.as_slice())))
    }

    pub fn is_touched(&self, id: ParamId) -> bool {
        self.dense(id).is_some() || self.rows.get(id.0).is_some_and(|m| !m.is_empty())
    }

    /// Full gradient for `id`, or `None` if the parameter was unreachable.
    pub fn to_dense(&self, id: ParamId, params: &ParamSet) -> Option<Vec<f64>> {
        if !self.is_touched(id) {
            return None;
        }
        let t = params.get(id);
        let mut out = match self.dense(id) {
            Some(d) => d.to_vec(),
            None => vec![0.0; t.len()],
        };
        let cols = t.cols();
        for (r, g) in self.sparse_rows(id) {
            out[r * cols..(r + 1) * cols]
                .iter_mut()
                .zip(g)
                .for_each(|(a, b)| *a += b);
        }
        Some(out)
    }

    /// Full gradient for `id`, zero-filled when unreachable.
    pub fn dense_or_zero(&self, id: ParamId, params: &ParamSet) -> Vec<f64> {
        self.to_dense(id, params)
            .unwrap_or_else(|| vec![0.0; params.get(id).len()])
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        let n = self.dense.len().max(other.dense.len());
        self.dense.resize(n, None);
        self.rows.resize(n, BTreeMap::new());
        for (i, od) in other.dense.iter().enumerate() {
            if let Some(od) = od {
                match &mut self.dense[i] {
                    Some(d) => d.iter_mut().zip(od).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(od.clone()),
                }
            }
        }
        for (i, orows) in other.rows.iter().enumerate() {
            for (r, g) in orows {
                match self.rows[i].get_mut(r) {
                    Some(d) => d.iter_mut().zip(g).for_each(|(a, b)| *a += b),
                    None => {
                        self.rows[i].insert(*r, g.clone());
                    }
                }
            }
        }
    }
}
