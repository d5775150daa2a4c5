use std::f64::consts::PI;

use super::kernels;
use super::tensor::Tensor;
use crate::error::{domain, Error, Result};
use crate::special_math::{sigmoid, softplus};

/// Handle to a value recorded on a [`Tape`]. Handles are invalidated by
/// [`Tape::reset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    idx: usize,
    generation: u64,
}

/// Variance argument of the Gaussian likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variance {
    Scalar(f64),
    Tensor(Var),
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    MatMul(usize, usize),
    AddBias(usize, usize),
    Relu(usize),
    Sum(usize),
    Mean(usize),
    Square(usize),
    Exp(usize),
    Log(usize),
    Sigmoid(usize),
    Scale(usize, f64),
    AddScalar(usize),
    SliceCols { src: usize, start: usize, width: usize },
    SumRows(usize),
    GaussianRows { x: usize, mean: usize, var: Option<usize>, scalar_var: f64 },
    BernoulliRows { x: usize, logits: usize },
    SoftmaxCe { logits: usize, labels: Vec<usize> },
}

#[derive(Debug, Clone)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

/// Define-by-run tape for reverse-mode differentiation.
///
/// Every operation appends a node; [`Tape::backward`] walks the nodes in
/// reverse creation order, which is a valid reverse topological order since
/// inputs always precede their consumers. A tape supports one backward pass;
/// [`Tape::reset`] clears it for the next step.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    generation: u64,
    consumed: bool,
}

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn rows_cols(shape: &[usize], len: usize) -> (usize, usize) {
    match shape {
        [r, c] => (*r, *c),
        _ => (1, len),
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], idx: usize, contrib: Vec<f64>) {
    match &mut grads[idx] {
        Some(g) => {
            for (a, b) in g.iter_mut().zip(contrib) {
                *a += b;
            }
        }
        slot => *slot = Some(contrib),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops all recorded nodes and invalidates outstanding handles.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.grads.clear();
        self.generation += 1;
        self.consumed = false;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Var {
            idx: self.nodes.len() - 1,
            generation: self.generation,
        }
    }

    fn check(&self, v: Var) -> Result<usize> {
        if self.consumed || v.generation != self.generation || v.idx >= self.nodes.len() {
            return Err(Error::StaleTape);
        }
        Ok(v.idx)
    }

    fn node(&self, idx: usize) -> &Node {
        &self.nodes[idx]
    }

    /// Records a tensor; it participates in gradients iff `requires_grad()` is set.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let rg = t.requires_grad();
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), Op::Leaf, rg)
    }

    /// Records a tensor that never receives a gradient.
    pub fn constant(&mut self, mut t: Tensor) -> Var {
        t.set_requires_grad(false);
        self.leaf(t)
    }

    /// Records a trainable tensor.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.leaf(t.with_grad())
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.idx].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.idx].shape
    }

    pub fn item(&self, v: Var) -> f64 {
        let node = &self.nodes[v.idx];
        assert_eq!(node.value.len(), 1, "item() on shape {:?}", node.shape);
        node.value[0]
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let node = &self.nodes[v.idx];
        Tensor::new(node.shape.clone(), node.value.clone()).expect("node shape matches data")
    }

    /// Gradient of the last backward pass with respect to a leaf; `None` for
    /// values that do not require gradients or before backward ran.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        if v.generation != self.generation {
            return None;
        }
        self.grads.get(v.idx)?.as_deref()
    }

    fn binary_same(&mut self, a: Var, b: Var, name: &'static str, f: fn(f64, f64) -> f64, op: fn(usize, usize) -> Op) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (na, nb) = (self.node(ia), self.node(ib));
        if na.shape != nb.shape {
            return Err(shape_err(name, &na.shape, &nb.shape));
        }
        let value = na.value.iter().zip(&nb.value).map(|(&x, &y)| f(x, y)).collect();
        let rg = na.requires_grad || nb.requires_grad;
        let shape = na.shape.clone();
        Ok(self.push(shape, value, op(ia, ib), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same(a, b, "add", |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same(a, b, "sub", |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same(a, b, "mul", |x, y| x * y, Op::Mul)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: fn(usize) -> Op) -> Result<Var> {
        let ia = self.check(a)?;
        let na = self.node(ia);
        let value = na.value.iter().map(|&x| f(x)).collect();
        let (shape, rg) = (na.shape.clone(), na.requires_grad);
        Ok(self.push(shape, value, op(ia), rg))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary(a, |x| x * x, Op::Square)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::exp, Op::Exp)
    }

    /// Natural log; non-positive inputs yield NaN/−∞ like `f64::ln`.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::ln, Op::Log)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, sigmoid, Op::Sigmoid)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let ia = self.check(a)?;
        let na = self.node(ia);
        let value = na.value.iter().map(|&x| x * c).collect();
        let (shape, rg) = (na.shape.clone(), na.requires_grad);
        Ok(self.push(shape, value, Op::Scale(ia, c), rg))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, move |x| x + c, Op::AddScalar)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let na = self.node(ia);
        let s = na.value.iter().sum();
        let rg = na.requires_grad;
        Ok(self.push(vec![], vec![s], Op::Sum(ia), rg))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let na = self.node(ia);
        if na.value.is_empty() {
            return Err(shape_err("mean", &na.shape, &[]));
        }
        let s = na.value.iter().sum::<f64>() / na.value.len() as f64;
        let rg = na.requires_grad;
        Ok(self.push(vec![], vec![s], Op::Mean(ia), rg))
    }

    /// `[n×k] · [k×m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (na, nb) = (self.node(ia), self.node(ib));
        let (n, k, m) = match (na.shape.as_slice(), nb.shape.as_slice()) {
            ([n, k], [k2, m]) if k == k2 => (*n, *k, *m),
            _ => return Err(shape_err("matmul", &na.shape, &nb.shape)),
        };
        let value = kernels::matmul(&na.value, &nb.value, n, k, m);
        let rg = na.requires_grad || nb.requires_grad;
        Ok(self.push(vec![n, m], value, Op::MatMul(ia, ib), rg))
    }

    /// Adds a bias vector `[m]` to every row of `[n×m]`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (ix, ib) = (self.check(x)?, self.check(bias)?);
        let (nx, nb) = (self.node(ix), self.node(ib));
        let m = match (nx.shape.as_slice(), nb.shape.as_slice()) {
            ([_, m], [m2]) if m == m2 => *m,
            _ => return Err(shape_err("add_bias", &nx.shape, &nb.shape)),
        };
        let mut value = nx.value.clone();
        if m > 0 {
            for row in value.chunks_mut(m) {
                for (v, b) in row.iter_mut().zip(&nb.value) {
                    *v += b;
                }
            }
        }
        let rg = nx.requires_grad || nb.requires_grad;
        let shape = nx.shape.clone();
        Ok(self.push(shape, value, Op::AddBias(ix, ib), rg))
    }

    /// Columns `start..start + width` of a 2-D tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Result<Var> {
        let ix = self.check(x)?;
        let nx = self.node(ix);
        let (n, m) = match nx.shape.as_slice() {
            [n, m] if start + width <= *m => (*n, *m),
            _ => return Err(shape_err("slice_cols", &nx.shape, &[start, width])),
        };
        let mut value = Vec::with_capacity(n * width);
        for i in 0..n {
            value.extend_from_slice(&nx.value[i * m + start..i * m + start + width]);
        }
        let rg = nx.requires_grad;
        Ok(self.push(vec![n, width], value, Op::SliceCols { src: ix, start, width }, rg))
    }

    /// Row sums of a 2-D tensor, `[n×m] → [n]`.
    pub fn sum_rows(&mut self, x: Var) -> Result<Var> {
        let ix = self.check(x)?;
        let nx = self.node(ix);
        let (n, m) = match nx.shape.as_slice() {
            [n, m] => (*n, *m),
            _ => return Err(shape_err("sum_rows", &nx.shape, &[])),
        };
        let value = (0..n).map(|i| nx.value[i * m..(i + 1) * m].iter().sum()).collect();
        let rg = nx.requires_grad;
        Ok(self.push(vec![n], value, Op::SumRows(ix), rg))
    }

    /// Per-row Gaussian log-likelihood `Σ_j [−½ ln(2πσ²) − (x−μ)²/(2σ²)]`.
    /// 2-D inputs give one value per row; other shapes are a single row.
    pub fn gaussian_log_likelihood_rows(&mut self, x: Var, mean: Var, variance: Variance) -> Result<Var> {
        let (ix, im) = (self.check(x)?, self.check(mean)?);
        let (nx, nm) = (self.node(ix), self.node(im));
        if nx.shape != nm.shape {
            return Err(shape_err("gaussian_log_likelihood", &nx.shape, &nm.shape));
        }
        let (var_idx, scalar_var) = match variance {
            Variance::Scalar(s) => {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(domain("gaussian_log_likelihood", format!("variance must be positive, got {s}")));
                }
                (None, s)
            }
            Variance::Tensor(v) => {
                let iv = self.check(v)?;
                let nv = self.node(iv);
                if nv.shape != nx.shape {
                    return Err(shape_err("gaussian_log_likelihood", &nx.shape, &nv.shape));
                }
                if let Some(bad) = nv.value.iter().find(|&&s| !(s > 0.0)) {
                    return Err(domain("gaussian_log_likelihood", format!("variance must be positive, got {bad}")));
                }
                (Some(iv), f64::NAN)
            }
        };
        let nx = self.node(ix);
        let nm = self.node(im);
        let (rows, cols) = rows_cols(&nx.shape, nx.value.len());
        let mut out = vec![0.0; rows];
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in i * cols..(i + 1) * cols {
                let s = match var_idx {
                    Some(iv) => self.nodes[iv].value[j],
                    None => scalar_var,
                };
                let d = nx.value[j] - nm.value[j];
                acc += -0.5 * (2.0 * PI * s).ln() - d * d / (2.0 * s);
            }
            *o = acc;
        }
        let rg = nx.requires_grad || nm.requires_grad || var_idx.is_some_and(|iv| self.nodes[iv].requires_grad);
        let shape = if nx.shape.len() == 2 { vec![rows] } else { vec![1] };
        Ok(self.push(
            shape,
            out,
            Op::GaussianRows {
                x: ix,
                mean: im,
                var: var_idx,
                scalar_var,
            },
            rg,
        ))
    }

    pub fn gaussian_log_likelihood(&mut self, x: Var, mean: Var, variance: Variance) -> Result<Var> {
        let rows = self.gaussian_log_likelihood_rows(x, mean, variance)?;
        self.sum(rows)
    }

    /// Per-row Bernoulli log-likelihood with logits, `x·l − softplus(l)`.
    pub fn bernoulli_log_likelihood_rows(&mut self, x: Var, logits: Var) -> Result<Var> {
        let (ix, il) = (self.check(x)?, self.check(logits)?);
        let (nx, nl) = (self.node(ix), self.node(il));
        if nx.shape != nl.shape {
            return Err(shape_err("bernoulli_log_likelihood", &nx.shape, &nl.shape));
        }
        if let Some(bad) = nx.value.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(domain("bernoulli_log_likelihood", format!("targets must be 0 or 1, got {bad}")));
        }
        let (rows, cols) = rows_cols(&nx.shape, nx.value.len());
        let out = (0..rows)
            .map(|i| {
                (i * cols..(i + 1) * cols)
                    .map(|j| nx.value[j] * nl.value[j] - softplus(nl.value[j]))
                    .sum()
            })
            .collect();
        let rg = nl.requires_grad;
        let shape = if nx.shape.len() == 2 { vec![rows] } else { vec![1] };
        Ok(self.push(shape, out, Op::BernoulliRows { x: ix, logits: il }, rg))
    }

    pub fn bernoulli_log_likelihood(&mut self, x: Var, logits: Var) -> Result<Var> {
        let rows = self.bernoulli_log_likelihood_rows(x, logits)?;
        self.sum(rows)
    }

    /// Mean negative log-likelihood of integer labels under `softmax(logits)`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let il = self.check(logits)?;
        let nl = self.node(il);
        let (n, c) = match nl.shape.as_slice() {
            [n, c] if *n == labels.len() && *n > 0 => (*n, *c),
            _ => return Err(shape_err("softmax_cross_entropy", &nl.shape, &[labels.len()])),
        };
        if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
            return Err(domain(
                "softmax_cross_entropy",
                format!("label {bad} out of range for {c} classes"),
            ));
        }
        let mut total = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let row = &nl.value[i * c..(i + 1) * c];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            total += lse - row[y];
        }
        let rg = nl.requires_grad;
        Ok(self.push(
            vec![],
            vec![total / n as f64],
            Op::SoftmaxCe {
                logits: il,
                labels: labels.to_vec(),
            },
            rg,
        ))
    }

    /// Propagates `d loss / d node` to every node that requires gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let il = self.check(loss)?;
        if !self.nodes[il].shape.is_empty() {
            return Err(Error::NonScalarLoss(self.nodes[il].shape.clone()));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if self.nodes[il].requires_grad {
            grads[il] = Some(vec![1.0]);
        }
        for i in (0..=il).rev() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.requires_grad && grads[i].is_none() {
                grads[i] = Some(vec![0.0; node.value.len()]);
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let rg = |j: usize| self.nodes[j].requires_grad;
        let val = |j: usize| &self.nodes[j].value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if rg(*a) {
                    accumulate(grads, *a, g.to_vec());
                }
                if rg(*b) {
                    accumulate(grads, *b, g.to_vec());
                }
            }
            Op::Sub(a, b) => {
                if rg(*a) {
                    accumulate(grads, *a, g.to_vec());
                }
                if rg(*b) {
                    accumulate(grads, *b, g.iter().map(|v| -v).collect());
                }
            }
            Op::Mul(a, b) => {
                if rg(*a) {
                    accumulate(grads, *a, g.iter().zip(val(*b)).map(|(x, y)| x * y).collect());
                }
                if rg(*b) {
                    accumulate(grads, *b, g.iter().zip(val(*a)).map(|(x, y)| x * y).collect());
                }
            }
            Op::MatMul(a, b) => {
                let (n, k) = (self.nodes[*a].shape[0], self.nodes[*a].shape[1]);
                let m = self.nodes[*b].shape[1];
                if rg(*a) {
                    accumulate(grads, *a, kernels::matmul_bt(g, val(*b), n, k, m));
                }
                if rg(*b) {
                    accumulate(grads, *b, kernels::matmul_at(val(*a), g, n, k, m));
                }
            }
            Op::AddBias(x, b) => {
                if rg(*x) {
                    accumulate(grads, *x, g.to_vec());
                }
                if rg(*b) {
                    let m = self.nodes[*b].value.len();
                    let mut gb = vec![0.0; m];
                    if m > 0 {
                        for row in g.chunks(m) {
                            for (o, v) in gb.iter_mut().zip(row) {
                                *o += v;
                            }
                        }
                    }
                    accumulate(grads, *b, gb);
                }
            }
            Op::Relu(a) => {
                if rg(*a) {
                    let c = g
                        .iter()
                        .zip(val(*a))
                        .map(|(gv, x)| if *x > 0.0 { *gv } else { 0.0 })
                        .collect();
                    accumulate(grads, *a, c);
                }
            }
            Op::Sum(a) => {
                if rg(*a) {
                    accumulate(grads, *a, vec![g[0]; val(*a).len()]);
                }
            }
            Op::Mean(a) => {
                if rg(*a) {
                    let n = val(*a).len();
                    accumulate(grads, *a, vec![g[0] / n as f64; n]);
                }
            }
            Op::Square(a) => {
                if rg(*a) {
                    accumulate(grads, *a, g.iter().zip(val(*a)).map(|(gv, x)| 2.0 * x * gv).collect());
                }
            }
            Op::Exp(a) => {
                if rg(*a) {
                    accumulate(grads, *a, g.iter().zip(&node.value).map(|(gv, y)| gv * y).collect());
                }
            }
            Op::Log(a) => {
                if rg(*a) {
                    accumulate(grads, *a, g.iter().zip(val(*a)).map(|(gv, x)| gv / x).collect());
                }
            }
            Op::Sigmoid(a) => {
                if rg(*a) {
                    accumulate(
                        grads,
                        *a,
                        g.iter().zip(&node.value).map(|(gv, s)| gv * s * (1.0 - s)).collect(),
                    );
                }
            }
            Op::Scale(a, c) => {
                if rg(*a) {
                    accumulate(grads, *a, g.iter().map(|v| v * c).collect());
                }
            }
            Op::AddScalar(a) => {
                if rg(*a) {
                    accumulate(grads, *a, g.to_vec());
                }
            }
            Op::SliceCols { src, start, width } => {
                if rg(*src) {
                    let m = self.nodes[*src].shape[1];
                    let n = self.nodes[*src].shape[0];
                    let mut c = vec![0.0; n * m];
                    for r in 0..n {
                        c[r * m + start..r * m + start + width].copy_from_slice(&g[r * width..(r + 1) * width]);
                    }
                    accumulate(grads, *src, c);
                }
            }
            Op::SumRows(a) => {
                if rg(*a) {
                    let m = self.nodes[*a].shape[1];
                    let c = g.iter().flat_map(|&gv| std::iter::repeat_n(gv, m)).collect();
                    accumulate(grads, *a, c);
                }
            }
            Op::GaussianRows {
                x,
                mean,
                var,
                scalar_var,
            } => {
                let (xv, mv) = (val(*x), val(*mean));
                let cols = xv.len() / g.len().max(1);
                let s_at = |j: usize| match var {
                    Some(iv) => self.nodes[*iv].value[j],
                    None => *scalar_var,
                };
                let row_g = |j: usize| g[j / cols.max(1)];
                if rg(*mean) || rg(*x) {
                    let dmu: Vec<f64> = (0..xv.len()).map(|j| row_g(j) * (xv[j] - mv[j]) / s_at(j)).collect();
                    if rg(*x) {
                        accumulate(grads, *x, dmu.iter().map(|v| -v).collect());
                    }
                    if rg(*mean) {
                        accumulate(grads, *mean, dmu);
                    }
                }
                if let Some(iv) = var {
                    if rg(*iv) {
                        let c = (0..xv.len())
                            .map(|j| {
                                let s = s_at(j);
                                let d = xv[j] - mv[j];
                                row_g(j) * (-0.5 / s + d * d / (2.0 * s * s))
                            })
                            .collect();
                        accumulate(grads, *iv, c);
                    }
                }
            }
            Op::BernoulliRows { x, logits } => {
                if rg(*logits) {
                    let (xv, lv) = (val(*x), val(*logits));
                    let cols = xv.len() / g.len().max(1);
                    let c = (0..xv.len())
                        .map(|j| g[j / cols.max(1)] * (xv[j] - sigmoid(lv[j])))
                        .collect();
                    accumulate(grads, *logits, c);
                }
            }
            Op::SoftmaxCe { logits, labels } => {
                if rg(*logits) {
                    let lv = val(*logits);
                    let n = labels.len();
                    let c = lv.len() / n;
                    let scale = g[0] / n as f64;
                    let mut out = vec![0.0; lv.len()];
                    for (i, &y) in labels.iter().enumerate() {
                        let row = &lv[i * c..(i + 1) * c];
                        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let z: f64 = row.iter().map(|v| (v - mx).exp()).sum();
                        for j in 0..c {
                            let p = (row[j] - mx).exp() / z;
                            out[i * c + j] = scale * (p - if j == y { 1.0 } else { 0.0 });
                        }
                    }
                    accumulate(grads, *logits, out);
                }
            }
        }
    }
}
