use rand::{Rng, RngCore};

use super::tensor::{Gradients, ParamId, ParamSet, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The primitive set reachable through [`Graph::apply`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Primitive {
    MatVec,
    Add,
    Hadamard,
    Scale(f64),
    Concat,
    Mean,
    Sigmoid,
    Tanh,
    Relu,
    /// Inputs `[W1, x1, W2, x2, ..., b?]`: `b + sum_k Wk xk`.
    Affine,
}

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param(ParamId),
    Row(ParamId, usize),
    MatVec(Var, Var),
    Affine(Vec<(Var, Var)>, Option<Var>),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    Concat(Vec<Var>),
    Mean(Vec<Var>),
    Sum(Var),
    Pick(Var, usize),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    LogSoftmax(Var),
    Dropout(Var, Vec<f64>),
    SumSquares(Vec<Var>),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    shape: Vec<usize>,
    // empty for Param nodes: the value lives in the ParamSet
    value: Vec<f64>,
}

/// Define-by-run computation tape over a borrowed [`ParamSet`].
///
/// Nodes are appended in evaluation order, so every node's inputs precede
/// it and the backward sweep is a single reverse pass.
pub struct Graph<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Graph {
            params,
            nodes: Vec::with_capacity(256),
            param_vars: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        match self.nodes[v.0].op {
            Op::Param(id) => self.params.get(id).values(),
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.shape(v).to_vec(), self.value(v).to_vec()).expect("node shapes are valid")
    }

    /// Scalar value of a `[1]` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, value: Vec<f64>) -> Var {
        self.nodes.push(Node { op, shape, value });
        Var(self.nodes.len() - 1)
    }

    fn vec_len(&self, op: &'static str, v: Var) -> Result<usize> {
        match self.shape(v) {
            [n] => Ok(*n),
            s => Err(Error::shape(op, format!("expected a vector, got {s:?}"))),
        }
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.push(Op::Constant, shape, t.into_values())
    }

    pub fn vector(&mut self, values: Vec<f64>) -> Var {
        self.constant(Tensor::vector(values))
    }

    pub fn zeros(&mut self, n: usize) -> Var {
        self.vector(vec![0.0; n])
    }

    /// Node for a whole parameter tensor. Memoized per graph.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let shape = self.params.get(id).shape().to_vec();
        let v = self.push(Op::Param(id), shape, Vec::new());
        self.param_vars[id.0] = Some(v);
        v
    }

    /// One row of a matrix parameter, with a sparse gradient.
    pub fn row(&mut self, id: ParamId, r: usize) -> Result<Var> {
        let t = self.params.get(id);
        if t.rank() != 2 || r >= t.rows() {
            return Err(Error::shape(
                "row",
                format!("row {r} of {:?} ({})", t.shape(), self.params.name(id)),
            ));
        }
        let value = t.row(r).to_vec();
        let n = value.len();
        Ok(self.push(Op::Row(id, r), vec![n], value))
    }

    /// Dispatches one of the named primitives.
    pub fn apply(&mut self, prim: Primitive, inputs: &[Var]) -> Result<Var> {
        let arity = |n: usize| -> Result<()> {
            if inputs.len() != n {
                return Err(Error::shape(
                    "apply",
                    format!("{prim:?} takes {n} inputs, got {}", inputs.len()),
                ));
            }
            Ok(())
        };
        match prim {
            Primitive::MatVec => {
                arity(2)?;
                self.matvec(inputs[0], inputs[1])
            }
            Primitive::Add => {
                arity(2)?;
                self.add(inputs[0], inputs[1])
            }
            Primitive::Hadamard => {
                arity(2)?;
                self.hadamard(inputs[0], inputs[1])
            }
            Primitive::Scale(c) => {
                arity(1)?;
                Ok(self.scale(inputs[0], c))
            }
            Primitive::Concat => self.concat(inputs),
            Primitive::Mean => self.mean(inputs),
            Primitive::Sigmoid => {
                arity(1)?;
                Ok(self.sigmoid(inputs[0]))
            }
            Primitive::Tanh => {
                arity(1)?;
                Ok(self.tanh(inputs[0]))
            }
            Primitive::Relu => {
                arity(1)?;
                Ok(self.relu(inputs[0]))
            }
            Primitive::Affine => {
                let (pairs, bias) = if inputs.len() % 2 == 1 {
                    (&inputs[..inputs.len() - 1], Some(inputs[inputs.len() - 1]))
                } else {
                    (inputs, None)
                };
                let terms: Vec<_> = pairs.chunks(2).map(|c| (c[0], c[1])).collect();
                self.affine(&terms, bias)
            }
        }
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (m, n) = match self.shape(w) {
            [m, n] => (*m, *n),
            s => return Err(Error::shape("matvec", format!("matrix expected, got {s:?}"))),
        };
        if self.shape(x) != [n] {
            return Err(Error::shape(
                "matvec",
                format!("[{m}x{n}] . {:?}", self.shape(x)),
            ));
        }
        let mut out = vec![0.0; m];
        matvec_into(self.value(w), self.value(x), &mut out);
        Ok(self.push(Op::MatVec(w, x), vec![m], out))
    }

    /// `bias + sum_k W_k x_k`; terms are accumulated in the order given.
    pub fn affine(&mut self, terms: &[(Var, Var)], bias: Option<Var>) -> Result<Var> {
        let m = match (terms.first(), bias) {
            (Some(&(w, _)), _) => match self.shape(w) {
                [m, _] => *m,
                s => return Err(Error::shape("affine", format!("matrix expected, got {s:?}"))),
            },
            (None, Some(b)) => self.vec_len("affine", b)?,
            (None, None) => return Err(Error::shape("affine", "no terms")),
        };
        for &(w, x) in terms {
            match (self.shape(w), self.shape(x)) {
                ([r, c], [n]) if *r == m && c == n => {}
                (ws, xs) => {
                    return Err(Error::shape(
                        "affine",
                        format!("term {ws:?} . {xs:?}, output length {m}"),
                    ))
                }
            }
        }
        let mut out = match bias {
            Some(b) => {
                if self.shape(b) != [m] {
                    return Err(Error::shape(
                        "affine",
                        format!("bias {:?}, output length {m}", self.shape(b)),
                    ));
                }
                self.value(b).to_vec()
            }
            None => vec![0.0; m],
        };
        for &(w, x) in terms {
            matvec_acc(self.value(w), self.value(x), &mut out);
        }
        Ok(self.push(Op::Affine(terms.to_vec(), bias), vec![m], out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x + y);
        let shape = self.shape(a).to_vec();
        Ok(self.push(Op::Add(a, b), shape, out))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x - y);
        let shape = self.shape(a).to_vec();
        Ok(self.push(Op::Sub(a, b), shape, out))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("hadamard", a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x * y);
        let shape = self.shape(a).to_vec();
        Ok(self.push(Op::Hadamard(a, b), shape, out))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).iter().map(|x| x * c).collect();
        let shape = self.shape(a).to_vec();
        self.push(Op::Scale(a, c), shape, out)
    }

    /// `1 - a`, element-wise.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|x| 1.0 - x).collect();
        let shape = self.shape(a).to_vec();
        self.push(Op::OneMinus(a), shape, out)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat", "no operands"));
        }
        let mut out = Vec::new();
        for &p in parts {
            self.vec_len("concat", p)?;
            out.extend_from_slice(self.value(p));
        }
        let n = out.len();
        Ok(self.push(Op::Concat(parts.to_vec()), vec![n], out))
    }

    pub fn mean(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::shape("mean", "no operands"));
        };
        let mut out = self.value(first).to_vec();
        for &p in &parts[1..] {
            self.same_shape("mean", first, p)?;
            out.iter_mut()
                .zip(self.value(p))
                .for_each(|(a, b)| *a += b);
        }
        let n = parts.len() as f64;
        out.iter_mut().for_each(|a| *a /= n);
        let shape = self.shape(first).to_vec();
        Ok(self.push(Op::Mean(parts.to_vec()), shape, out))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(Op::Sum(a), vec![1], vec![s])
    }

    pub fn pick(&mut self, a: Var, i: usize) -> Result<Var> {
        let n = self.vec_len("pick", a)?;
        if i >= n {
            return Err(Error::shape("pick", format!("index {i} of length {n}")));
        }
        let v = self.value(a)[i];
        Ok(self.push(Op::Pick(a, i), vec![1], vec![v]))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        let shape = self.shape(a).to_vec();
        self.push(Op::Sigmoid(a), shape, out)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|x| x.tanh()).collect();
        let shape = self.shape(a).to_vec();
        self.push(Op::Tanh(a), shape, out)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&x| x.max(0.0)).collect();
        let shape = self.shape(a).to_vec();
        self.push(Op::Relu(a), shape, out)
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        self.vec_len("log_softmax", a)?;
        let out = log_softmax_slice(self.value(a));
        let shape = self.shape(a).to_vec();
        Ok(self.push(Op::LogSoftmax(a), shape, out))
    }

    /// Inverted dropout: zeroes each coordinate with probability `p` and
    /// scales survivors by `1 / (1 - p)`. Identity when `p == 0`.
    pub fn dropout(&mut self, a: Var, p: f64, rng: &mut dyn RngCore) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Invalid(format!("dropout probability {p} outside [0, 1)")));
        }
        if p == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.value(a).len())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        let out = zip_map(self.value(a), &mask, |x, m| x * m);
        let shape = self.shape(a).to_vec();
        Ok(self.push(Op::Dropout(a, mask), shape, out))
    }

    /// Sum of squares of every coordinate of every operand.
    pub fn sum_squares(&mut self, parts: &[Var]) -> Var {
        let s = parts
            .iter()
            .map(|&p| self.value(p).iter().map(|x| x * x).sum::<f64>())
            .sum();
        self.push(Op::SumSquares(parts.to_vec()), vec![1], vec![s])
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.shape(loss) != [1] {
            return Err(Error::shape(
                "backward",
                format!("loss must be a scalar, got {:?}", self.shape(loss)),
            ));
        }
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); loss.0 + 1];
        let mut out = Gradients::with_capacity(self.params.len());
        grads[loss.0] = vec![1.0];

        for i in (0..=loss.0).rev() {
            if grads[i].is_empty() {
                continue;
            }
            let g = std::mem::take(&mut grads[i]);
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => out.dense[id.0] = Some(g),
                Op::Row(id, r) => match out.rows[id.0].get_mut(r) {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    None => {
                        out.rows[id.0].insert(*r, g);
                    }
                },
                Op::MatVec(w, x) => {
                    self.matvec_backward(&mut grads, *w, *x, &g);
                }
                Op::Affine(terms, bias) => {
                    for &(w, x) in terms {
                        self.matvec_backward(&mut grads, w, x, &g);
                    }
                    if let Some(b) = bias {
                        acc(&mut grads, *b, &g);
                    }
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, &g);
                    acc(&mut grads, *b, &g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, &g);
                    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                    acc(&mut grads, *b, &neg);
                }
                Op::Hadamard(a, b) => {
                    let ga = zip_map(&g, self.value(*b), |x, y| x * y);
                    let gb = zip_map(&g, self.value(*a), |x, y| x * y);
                    acc(&mut grads, *a, &ga);
                    acc(&mut grads, *b, &gb);
                }
                Op::Scale(a, c) => {
                    let ga: Vec<f64> = g.iter().map(|x| x * c).collect();
                    acc(&mut grads, *a, &ga);
                }
                Op::OneMinus(a) => {
                    let ga: Vec<f64> = g.iter().map(|x| -x).collect();
                    acc(&mut grads, *a, &ga);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.shape(p)[0];
                        acc(&mut grads, p, &g[off..off + n]);
                        off += n;
                    }
                }
                Op::Mean(parts) => {
                    let n = parts.len() as f64;
                    let ga: Vec<f64> = g.iter().map(|x| x / n).collect();
                    for &p in parts {
                        acc(&mut grads, p, &ga);
                    }
                }
                Op::Sum(a) => {
                    let ga = vec![g[0]; self.value(*a).len()];
                    acc(&mut grads, *a, &ga);
                }
                Op::Pick(a, k) => {
                    let mut ga = vec![0.0; self.value(*a).len()];
                    ga[*k] = g[0];
                    acc(&mut grads, *a, &ga);
                }
                Op::Sigmoid(a) => {
                    let ga = zip_map(&g, &node.value, |x, s| x * s * (1.0 - s));
                    acc(&mut grads, *a, &ga);
                }
                Op::Tanh(a) => {
                    let ga = zip_map(&g, &node.value, |x, t| x * (1.0 - t * t));
                    acc(&mut grads, *a, &ga);
                }
                Op::Relu(a) => {
                    let ga = zip_map(&g, self.value(*a), |x, v| if v > 0.0 { x } else { 0.0 });
                    acc(&mut grads, *a, &ga);
                }
                Op::LogSoftmax(a) => {
                    let total: f64 = g.iter().sum();
                    let ga = zip_map(&g, &node.value, |x, lp| x - lp.exp() * total);
                    acc(&mut grads, *a, &ga);
                }
                Op::Dropout(a, mask) => {
                    let ga = zip_map(&g, mask, |x, m| x * m);
                    acc(&mut grads, *a, &ga);
                }
                Op::SumSquares(parts) => {
                    for &p in parts {
                        let gp: Vec<f64> = self.value(p).iter().map(|x| 2.0 * x * g[0]).collect();
                        acc(&mut grads, p, &gp);
                    }
                }
            }
        }
        Ok(out)
    }

    fn matvec_backward(&self, grads: &mut [Vec<f64>], w: Var, x: Var, g: &[f64]) {
        let wv = self.value(w);
        let xv = self.value(x);
        let n = xv.len();
        if needs_grad(&self.nodes[w.0].op) {
            let gw = slot(grads, w, wv.len());
            for (i, gi) in g.iter().enumerate() {
                if *gi == 0.0 {
                    continue;
                }
                gw[i * n..(i + 1) * n]
                    .iter_mut()
                    .zip(xv)
                    .for_each(|(a, xj)| *a += gi * xj);
            }
        }
        if needs_grad(&self.nodes[x.0].op) {
            let gx = slot(grads, x, n);
            for (i, gi) in g.iter().enumerate() {
                gx.iter_mut()
                    .zip(&wv[i * n..(i + 1) * n])
                    .for_each(|(a, wij)| *a += gi * wij);
            }
        }
    }
}

fn needs_grad(op: &Op) -> bool {
    !matches!(op, Op::Constant)
}

fn slot(grads: &mut [Vec<f64>], v: Var, n: usize) -> &mut Vec<f64> {
    let s = &mut grads[v.0];
    if s.is_empty() {
        s.resize(n, 0.0);
    }
    s
}

fn acc(grads: &mut [Vec<f64>], v: Var, g: &[f64]) {
    let s = &mut grads[v.0];
    if s.is_empty() {
        s.extend_from_slice(g);
    } else {
        s.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn matvec_into(w: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(n)) {
        *o = dot(row, x);
    }
}

fn matvec_acc(w: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(n)) {
        *o += dot(row, x);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Max-shifted log-softmax of a non-empty slice.
pub(crate) fn log_softmax_slice(x: &[f64]) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    x.iter().map(|v| v - lse).collect()
}
