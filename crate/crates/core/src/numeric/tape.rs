//! Reverse-mode autodiff on a per-forward-pass tape.
//!
//! Every op appends a node holding its value and whatever it needs for the
//! backward pass. Nodes are only ever appended after their inputs, so walking
//! the node list in reverse is a valid topological order.

use rand::Rng;

use super::{NumericError, ParamId, ParamStore, Scalar, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Describes how packed rows map onto (sequence, position) pairs for attention.
#[derive(Clone, Debug)]
pub struct AttentionLayout {
    pub batch: usize,
    pub q_len: usize,
    pub k_len: usize,
    pub heads: usize,
    /// Query `i` may only see keys `j <= i`.
    pub causal: bool,
    /// `batch * k_len` flags; padded keys are `false`. Empty means all valid.
    pub key_valid: Vec<bool>,
}

impl AttentionLayout {
    fn key_ok(&self, b: usize, i: usize, j: usize) -> bool {
        if self.causal && j > i {
            return false;
        }
        self.key_valid.is_empty() || self.key_valid[b * self.k_len + j]
    }
}

enum Op<T> {
    Leaf,
    MatMul { a: Var, b: Var, trans_b: bool },
    Add(Var, Var),
    Mul(Var, Var),
    AddBias { x: Var, bias: Var },
    Scale { x: Var, factor: T },
    Sum(Var),
    Gelu(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<T>, rstd: Vec<T> },
    Embedding { table: Var, ids: Vec<usize> },
    Dropout { x: Var, mask: Vec<T> },
    Attention { q: Var, k: Var, v: Var, layout: AttentionLayout, probs: Vec<T> },
    CrossEntropy { logits: Var, targets: Vec<Option<usize>>, probs: Vec<T>, count: usize },
}

struct Node<T> {
    value: Vec<T>,
    shape: Vec<usize>,
    op: Op<T>,
}

/// Dynamic computation graph for one forward pass.
pub struct Tape<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    params: Vec<(Var, ParamId)>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// (rows, cols) view of a shape: the last dimension is the column count.
fn dims2(shape: &[usize]) -> (usize, usize) {
    match shape {
        [] => (1, 1),
        [n] => (1, *n),
        _ => {
            let cols = *shape.last().unwrap();
            (shape[..shape.len() - 1].iter().product(), cols)
        }
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Vec<T>>], var: Var, len: usize) -> &mut Vec<T> {
    grads[var.0].get_or_insert_with(|| vec![T::zero(); len])
}

const GELU_C: f64 = 0.044_715;

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<T>, shape: Vec<usize>, op: Op<T>) -> Var {
        debug_assert_eq!(value.len(), shape.iter().product::<usize>());
        self.nodes.push(Node { value, shape, op });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads[v.0].as_deref()
    }

    /// Copies the node's value out as a standalone tensor.
    pub fn tensor(&self, v: Var) -> Tensor<T> {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("tape node shape is consistent")
    }

    pub fn leaf(&mut self, shape: Vec<usize>, data: Vec<T>) -> Result<Var, NumericError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NumericError::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(self.push(data, shape, Op::Leaf))
    }

    pub fn leaf_tensor(&mut self, t: &Tensor<T>) -> Var {
        self.push(t.data().to_vec(), t.shape().to_vec(), Op::Leaf)
    }

    /// Loads a parameter as a leaf and remembers the binding so that
    /// [`ParamStore::accumulate_grads`] can route its gradient back.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let v = self.leaf_tensor(store.get(id));
        self.params.push((v, id));
        v
    }

    pub(crate) fn param_bindings(&self) -> &[(Var, ParamId)] {
        &self.params
    }

    /// Drops every gradient held on the tape.
    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ` without materializing the transpose.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var, NumericError> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() != 2 || sb.len() != 2 {
            return Err(NumericError::ShapeMismatch {
                op: "matmul",
                left: sa,
                right: sb,
            });
        }
        let (m, k) = (sa[0], sa[1]);
        let (kb, n) = if trans_b { (sb[1], sb[0]) } else { (sb[0], sb[1]) };
        if k != kb {
            return Err(NumericError::ShapeMismatch {
                op: "matmul",
                left: sa,
                right: sb,
            });
        }
        let mut out = vec![T::zero(); m * n];
        let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
        T::gemm(
            m,
            k,
            n,
            T::one(),
            self.value(a),
            k as isize,
            1,
            self.value(b),
            rsb,
            csb,
            T::zero(),
            &mut out,
            n as isize,
            1,
        );
        Ok(self.push(out, vec![m, n], Op::MatMul { a, b, trans_b }))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), NumericError> {
        if self.shape(a) != self.shape(b) {
            return Err(NumericError::ShapeMismatch {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x + y).collect();
        Ok(self.push(out, self.shape(a).to_vec(), Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x * y).collect();
        Ok(self.push(out, self.shape(a).to_vec(), Op::Mul(a, b)))
    }

    /// Adds a `[cols]` bias to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, NumericError> {
        let (_, cols) = dims2(self.shape(x));
        if self.value(bias).len() != cols {
            return Err(NumericError::ShapeMismatch {
                op: "add_bias",
                left: self.shape(x).to_vec(),
                right: self.shape(bias).to_vec(),
            });
        }
        let b = self.value(bias);
        let out = self
            .value(x)
            .chunks(cols)
            .flat_map(|row| row.iter().zip(b).map(|(&v, &c)| v + c))
            .collect();
        Ok(self.push(out, self.shape(x).to_vec(), Op::AddBias { x, bias }))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let out = self.value(x).iter().map(|&v| v * factor).collect();
        self.push(out, self.shape(x).to_vec(), Op::Scale { x, factor })
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().copied().sum();
        self.push(vec![s], vec![1], Op::Sum(x))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let c = T::from_f64((2.0 / std::f64::consts::PI).sqrt());
        let k = T::from_f64(GELU_C);
        let half = T::from_f64(0.5);
        let out = self
            .value(x)
            .iter()
            .map(|&v| half * v * (T::one() + (c * (v + k * v * v * v)).tanh()))
            .collect();
        self.push(out, self.shape(x).to_vec(), Op::Gelu(x))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: T) -> Result<Var, NumericError> {
        let (rows, cols) = dims2(self.shape(x));
        if self.value(gain).len() != cols || self.value(bias).len() != cols {
            return Err(NumericError::ShapeMismatch {
                op: "layer_norm",
                left: self.shape(x).to_vec(),
                right: self.shape(gain).to_vec(),
            });
        }
        let n = T::from_f64(cols as f64);
        let xs = self.value(x);
        let g = self.value(gain);
        let b = self.value(bias);
        let mut xhat = Vec::with_capacity(rows * cols);
        let mut rstd = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(rows * cols);
        for row in xs.chunks(cols) {
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let r = T::one() / (var + eps).sqrt();
            rstd.push(r);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mean) * r;
                xhat.push(h);
                out.push(h * g[j] + b[j]);
            }
        }
        Ok(self.push(
            out,
            self.shape(x).to_vec(),
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
        ))
    }

    /// Gathers rows of `table` (`[vocab, dim]`) for each id.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var, NumericError> {
        let shape = self.shape(table).to_vec();
        let (vocab, dim) = dims2(&shape);
        let t = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            if id >= vocab {
                return Err(NumericError::IndexOutOfRange {
                    op: "embedding",
                    index: id,
                    bound: vocab,
                });
            }
            out.extend_from_slice(&t[id * dim..(id + 1) * dim]);
        }
        Ok(self.push(
            out,
            vec![ids.len(), dim],
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Inverted dropout; `p == 0` returns `x` unchanged.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f32, rng: &mut R) -> Var {
        if p <= 0.0 {
            return x;
        }
        let keep = T::from_f32(1.0 / (1.0 - p));
        let mask: Vec<T> = (0..self.value(x).len())
            .map(|_| if rng.gen::<f32>() < p { T::zero() } else { keep })
            .collect();
        let out = self.value(x).iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        self.push(out, self.shape(x).to_vec(), Op::Dropout { x, mask })
    }

    /// Multi-head scaled dot-product attention over packed rows.
    ///
    /// `q` is `[batch * q_len, d]`, `k` and `v` are `[batch * k_len, d]`, and
    /// head `h` uses columns `h * d/heads .. (h + 1) * d/heads`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, layout: AttentionLayout) -> Result<Var, NumericError> {
        let (qr, d) = dims2(self.shape(q));
        let (kr, dk) = dims2(self.shape(k));
        let (vr, dv) = dims2(self.shape(v));
        let bad = qr != layout.batch * layout.q_len
            || kr != layout.batch * layout.k_len
            || vr != kr
            || dk != d
            || dv != d
            || layout.heads == 0
            || d % layout.heads != 0
            || (!layout.key_valid.is_empty() && layout.key_valid.len() != kr);
        if bad {
            return Err(NumericError::ShapeMismatch {
                op: "attention",
                left: self.shape(q).to_vec(),
                right: self.shape(k).to_vec(),
            });
        }
        let dh = d / layout.heads;
        let scale = T::one() / T::from_f64(dh as f64).sqrt();
        let (lq, lk) = (layout.q_len, layout.k_len);
        let qv = self.value(q);
        let kv = self.value(k);
        let vv = self.value(v);
        let mut probs = vec![T::zero(); layout.batch * layout.heads * lq * lk];
        let mut out = vec![T::zero(); qr * d];
        let mut scores = vec![T::zero(); lk];
        for b in 0..layout.batch {
            for h in 0..layout.heads {
                let col = h * dh;
                for i in 0..lq {
                    let qrow = &qv[(b * lq + i) * d + col..(b * lq + i) * d + col + dh];
                    let mut max = T::neg_infinity();
                    for j in 0..lk {
                        if layout.key_ok(b, i, j) {
                            let krow = &kv[(b * lk + j) * d + col..(b * lk + j) * d + col + dh];
                            let s = qrow.iter().zip(krow).map(|(&x, &y)| x * y).sum::<T>() * scale;
                            scores[j] = s;
                            if s > max {
                                max = s;
                            }
                        } else {
                            scores[j] = T::neg_infinity();
                        }
                    }
                    if max == T::neg_infinity() {
                        continue;
                    }
                    let p = &mut probs[((b * layout.heads + h) * lq + i) * lk..][..lk];
                    let mut total = T::zero();
                    for j in 0..lk {
                        let e = if scores[j] == T::neg_infinity() {
                            T::zero()
                        } else {
                            (scores[j] - max).exp()
                        };
                        p[j] = e;
                        total = total + e;
                    }
                    let orow = &mut out[(b * lq + i) * d + col..(b * lq + i) * d + col + dh];
                    for j in 0..lk {
                        p[j] = p[j] / total;
                        if p[j] != T::zero() {
                            let vrow = &vv[(b * lk + j) * d + col..(b * lk + j) * d + col + dh];
                            for (o, &x) in orow.iter_mut().zip(vrow) {
                                *o = *o + p[j] * x;
                            }
                        }
                    }
                }
            }
        }
        Ok(self.push(
            out,
            self.shape(q).to_vec(),
            Op::Attention {
                q,
                k,
                v,
                layout,
                probs,
            },
        ))
    }

    /// Mean cross entropy over rows whose target is `Some`.
    pub fn masked_cross_entropy(&mut self, logits: Var, targets: &[Option<usize>]) -> Result<Var, NumericError> {
        let (rows, vocab) = dims2(self.shape(logits));
        if targets.len() != rows {
            return Err(NumericError::ShapeMismatch {
                op: "cross_entropy",
                left: self.shape(logits).to_vec(),
                right: vec![targets.len()],
            });
        }
        if let Some(&t) = targets.iter().flatten().find(|&&t| t >= vocab) {
            return Err(NumericError::IndexOutOfRange {
                op: "cross_entropy",
                index: t,
                bound: vocab,
            });
        }
        let count = targets.iter().flatten().count();
        if count == 0 {
            return Err(NumericError::Contract("cross entropy over zero unmasked targets".into()));
        }
        let lv = self.value(logits);
        let mut probs = vec![T::zero(); rows * vocab];
        let mut total = T::zero();
        for (r, row) in lv.chunks(vocab).enumerate() {
            let Some(t) = targets[r] else { continue };
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let p = &mut probs[r * vocab..(r + 1) * vocab];
            let mut z = T::zero();
            for (pj, &x) in p.iter_mut().zip(row) {
                *pj = (x - max).exp();
                z = z + *pj;
            }
            p.iter_mut().for_each(|pj| *pj = *pj / z);
            total = total + (z.ln() + max - row[t]);
        }
        let loss = total / T::from_f64(count as f64);
        Ok(self.push(
            vec![loss],
            vec![1],
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
                count,
            },
        ))
    }

    /// Mean over the batch of `-log softmax(logits)[target]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var, NumericError> {
        let t: Vec<Option<usize>> = targets.iter().map(|&t| Some(t)).collect();
        self.masked_cross_entropy(logits, &t)
    }

    /// Backpropagates from a scalar `loss`. Leaf gradients accumulate across
    /// calls until [`Tape::zero_grads`]; intermediate gradients are recomputed.
    pub fn backward(&mut self, loss: Var) -> Result<(), NumericError> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(NumericError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        let mut reachable = vec![false; loss.0 + 1];
        reachable[loss.0] = true;
        for i in (0..=loss.0).rev() {
            if !reachable[i] {
                continue;
            }
            for p in self.parents(i) {
                reachable[p.0] = true;
            }
        }
        for (i, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if !matches!(node.op, Op::Leaf) {
                self.grads[i] = None;
            }
        }
        let seed = accumulate(&mut self.grads, loss, 1);
        seed[0] = seed[0] + T::one();
        for i in (0..=loss.0).rev() {
            if !reachable[i] || matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(g) = self.grads[i].take() else { continue };
            self.backward_node(i, &g);
        }
        Ok(())
    }

    fn parents(&self, i: usize) -> Vec<Var> {
        match &self.nodes[i].op {
            Op::Leaf => vec![],
            Op::MatMul { a, b, .. } | Op::Add(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::AddBias { x, bias } => vec![*x, *bias],
            Op::Scale { x, .. } | Op::Sum(x) | Op::Gelu(x) | Op::Dropout { x, .. } => vec![*x],
            Op::LayerNorm { x, gain, bias, .. } => vec![*x, *gain, *bias],
            Op::Embedding { table, .. } => vec![*table],
            Op::Attention { q, k, v, .. } => vec![*q, *k, *v],
            Op::CrossEntropy { logits, .. } => vec![*logits],
        }
    }

    fn backward_node(&mut self, i: usize, g: &[T]) {
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        let node = &nodes[i];
        let len_of = |v: Var| nodes[v.0].value.len();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, trans_b } => {
                let (m, k) = dims2(&nodes[a.0].shape);
                let n = node.shape[1];
                let av = &nodes[a.0].value;
                let bv = &nodes[b.0].value;
                // dA = dC · op(B)ᵀ
                {
                    let ga = accumulate(grads, *a, m * k);
                    let (rs, cs) = if *trans_b { (k as isize, 1) } else { (1, n as isize) };
                    T::gemm(m, n, k, T::one(), g, n as isize, 1, bv, rs, cs, T::one(), ga, k as isize, 1);
                }
                // dB = Aᵀ · dC, or dCᵀ · A when B was used transposed
                let gb = accumulate(grads, *b, k * n);
                if *trans_b {
                    T::gemm(n, m, k, T::one(), g, 1, n as isize, av, k as isize, 1, T::one(), gb, k as isize, 1);
                } else {
                    T::gemm(k, m, n, T::one(), av, 1, k as isize, g, n as isize, 1, T::one(), gb, n as isize, 1);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    let gv = accumulate(grads, v, g.len());
                    gv.iter_mut().zip(g).for_each(|(x, &y)| *x = *x + y);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                {
                    let ga = accumulate(grads, *a, g.len());
                    for ((x, &gy), &o) in ga.iter_mut().zip(g).zip(bv) {
                        *x = *x + gy * o;
                    }
                }
                let gb = accumulate(grads, *b, g.len());
                for ((x, &gy), &o) in gb.iter_mut().zip(g).zip(av) {
                    *x = *x + gy * o;
                }
            }
            Op::AddBias { x, bias } => {
                let cols = len_of(*bias);
                {
                    let gx = accumulate(grads, *x, g.len());
                    gx.iter_mut().zip(g).for_each(|(a, &b)| *a = *a + b);
                }
                let gb = accumulate(grads, *bias, cols);
                for row in g.chunks(cols) {
                    gb.iter_mut().zip(row).for_each(|(a, &b)| *a = *a + b);
                }
            }
            Op::Scale { x, factor } => {
                let gx = accumulate(grads, *x, g.len());
                gx.iter_mut().zip(g).for_each(|(a, &b)| *a = *a + b * *factor);
            }
            Op::Sum(x) => {
                let n = len_of(*x);
                let gx = accumulate(grads, *x, n);
                gx.iter_mut().for_each(|a| *a = *a + g[0]);
            }
            Op::Gelu(x) => {
                let c = T::from_f64((2.0 / std::f64::consts::PI).sqrt());
                let k = T::from_f64(GELU_C);
                let three_k = T::from_f64(3.0 * GELU_C);
                let half = T::from_f64(0.5);
                let xv = &nodes[x.0].value;
                let gx = accumulate(grads, *x, g.len());
                for ((a, &gy), &v) in gx.iter_mut().zip(g).zip(xv) {
                    let t = (c * (v + k * v * v * v)).tanh();
                    let d = half * (T::one() + t) + half * v * (T::one() - t * t) * c * (T::one() + three_k * v * v);
                    *a = *a + gy * d;
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let cols = len_of(*gain);
                let n = T::from_f64(cols as f64);
                let gv = &nodes[gain.0].value;
                {
                    let gg = accumulate(grads, *gain, cols);
                    for (grow, hrow) in g.chunks(cols).zip(xhat.chunks(cols)) {
                        for j in 0..cols {
                            gg[j] = gg[j] + grow[j] * hrow[j];
                        }
                    }
                }
                {
                    let gb = accumulate(grads, *bias, cols);
                    for grow in g.chunks(cols) {
                        gb.iter_mut().zip(grow).for_each(|(a, &b)| *a = *a + b);
                    }
                }
                let gx = accumulate(grads, *x, g.len());
                for (r, (grow, hrow)) in g.chunks(cols).zip(xhat.chunks(cols)).enumerate() {
                    let mut mean_d = T::zero();
                    let mut mean_dh = T::zero();
                    for j in 0..cols {
                        let d = grow[j] * gv[j];
                        mean_d = mean_d + d;
                        mean_dh = mean_dh + d * hrow[j];
                    }
                    mean_d = mean_d / n;
                    mean_dh = mean_dh / n;
                    for j in 0..cols {
                        let d = grow[j] * gv[j];
                        let out = &mut gx[r * cols + j];
                        *out = *out + rstd[r] * (d - mean_d - hrow[j] * mean_dh);
                    }
                }
            }
            Op::Embedding { table, ids } => {
                let (vocab, dim) = dims2(&nodes[table.0].shape);
                let gt = accumulate(grads, *table, vocab * dim);
                for (row, &id) in g.chunks(dim).zip(ids) {
                    gt[id * dim..(id + 1) * dim]
                        .iter_mut()
                        .zip(row)
                        .for_each(|(a, &b)| *a = *a + b);
                }
            }
            Op::Dropout { x, mask } => {
                let gx = accumulate(grads, *x, g.len());
                for ((a, &gy), &m) in gx.iter_mut().zip(g).zip(mask) {
                    *a = *a + gy * m;
                }
            }
            Op::Attention {
                q,
                k,
                v,
                layout,
                probs,
            } => {
                let (_, d) = dims2(&nodes[q.0].shape);
                let dh = d / layout.heads;
                let scale = T::one() / T::from_f64(dh as f64).sqrt();
                let (lq, lk) = (layout.q_len, layout.k_len);
                let (qv, kv, vv) = (&nodes[q.0].value, &nodes[k.0].value, &nodes[v.0].value);
                let mut gq = vec![T::zero(); qv.len()];
                let mut gk = vec![T::zero(); kv.len()];
                let mut gvv = vec![T::zero(); vv.len()];
                let mut dp = vec![T::zero(); lk];
                for b in 0..layout.batch {
                    for h in 0..layout.heads {
                        let col = h * dh;
                        for i in 0..lq {
                            let p = &probs[((b * layout.heads + h) * lq + i) * lk..][..lk];
                            let qi = (b * lq + i) * d + col;
                            let go = &g[qi..qi + dh];
                            let mut dot = T::zero();
                            for j in 0..lk {
                                if p[j] == T::zero() {
                                    dp[j] = T::zero();
                                    continue;
                                }
                                let vj = (b * lk + j) * d + col;
                                dp[j] = go.iter().zip(&vv[vj..vj + dh]).map(|(&a, &c)| a * c).sum();
                                dot = dot + p[j] * dp[j];
                                for c in 0..dh {
                                    gvv[vj + c] = gvv[vj + c] + p[j] * go[c];
                                }
                            }
                            for j in 0..lk {
                                if p[j] == T::zero() {
                                    continue;
                                }
                                let ds = p[j] * (dp[j] - dot) * scale;
                                let kj = (b * lk + j) * d + col;
                                for c in 0..dh {
                                    gq[qi + c] = gq[qi + c] + ds * kv[kj + c];
                                    gk[kj + c] = gk[kj + c] + ds * qv[qi + c];
                                }
                            }
                        }
                    }
                }
                for (var, local) in [(*q, gq), (*k, gk), (*v, gvv)] {
                    let gx = accumulate(grads, var, local.len());
                    gx.iter_mut().zip(&local).for_each(|(a, &b)| *a = *a + b);
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
                count,
            } => {
                let n = len_of(*logits);
                let vocab = n / targets.len();
                let w = g[0] / T::from_f64(*count as f64);
                let gl = accumulate(grads, *logits, n);
                for (r, t) in targets.iter().enumerate() {
                    let Some(t) = *t else { continue };
                    let row = &mut gl[r * vocab..(r + 1) * vocab];
                    for (a, &p) in row.iter_mut().zip(&probs[r * vocab..(r + 1) * vocab]) {
                        *a = *a + w * p;
                    }
                    row[t] = row[t] - w;
                }
            }
        }
    }
}

impl<T: Scalar> ParamStore<T> {
    /// Adds the gradients of every parameter bound on `tape` into the store.
    pub fn accumulate_grads(&mut self, tape: &Tape<T>) {
        for &(var, id) in tape.param_bindings() {
            if let Some(g) = tape.grad(var) {
                self.tensors_mut()[id.index()].accumulate_grad(g);
            }
        }
    }
}
