use std::sync::Arc;

use super::{DiffError, Tensor};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Reduction axis for [`Tape::max_axis`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Reduce over rows: one output per column.
    Rows,
    /// Reduce over columns: one output per row.
    Cols,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    Dot(Var, Var),
    Sum(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    MaxOver(Var, usize),
    MaxAxis { input: Var, axis: Axis, argmax: Vec<usize> },
    Softmax(Var),
    LogSoftmax(Var),
    LogSumExp(Var),
    MaskedFill { input: Var, keep: Vec<bool> },
    Index(Var, usize),
    StackRows(Vec<Var>),
    Affine { w: Var, x: Var, b: Var },
    MatVec(Var, Var),
    BilinearDiag { left: Arc<Tensor>, right: Arc<Tensor>, diag: Var },
    AddRowBroadcast(Var, Var),
    MarginRanking { scores: Var, gold: usize, active: Vec<bool> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Append-only record of primitive operations.
///
/// Nodes are pushed in evaluation order, so the node list is already a
/// topological order and [`Tape::backward`] simply walks it in reverse.
/// Every operation with a non-smooth point (max, ReLU, top-R selection,
/// hinge) folds its discrete decision into a branch signature; two
/// evaluations with the same signature lie on the same smooth piece.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    branch: u64,
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Vec<f64>>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.adjoints.get(v.0).and_then(|a| a.as_deref())
    }

    /// Gradient with respect to `v`, zero-filled if `v` did not influence the output.
    pub fn wrt(&self, v: Var) -> Tensor {
        let (r, c) = self.shapes[v.0];
        match self.get(v) {
            Some(a) => Tensor::new(r, c, a.to_vec()),
            None => Tensor::zeros(r, c),
        }
    }
}

const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), branch: 0xcbf2_9ce4_8422_2325 }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Hash of every discrete decision taken so far.
    pub fn branch_signature(&self) -> u64 {
        self.branch
    }

    fn note(&mut self, decision: u64) {
        self.branch = (self.branch ^ decision).wrapping_mul(FNV_PRIME);
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).as_scalar()
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn unary_map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let x = self.value(a);
        let data = x.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::new(x.rows(), x.cols(), data);
        let ng = self.ng(a);
        self.push(value, op, ng)
    }

    fn binary_map(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.len(), y.len(), "elementwise operands differ in length");
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        let value = Tensor::new(x.rows(), x.cols(), data);
        let ng = self.ng(a) || self.ng(b);
        self.push(value, op, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary_map(a, b, |p, q| p + q, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary_map(a, b, |p, q| p - q, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary_map(a, b, |p, q| p * q, Op::Mul(a, b))
    }

    /// `diag(d) x` for a diagonal matrix stored as its diagonal.
    pub fn scale_by_diagonal(&mut self, diag: Var, x: Var) -> Var {
        self.mul(diag, x)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary_map(a, |v| -v, Op::Neg(a))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.unary_map(a, |v| k * v, Op::Scale(a, k))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.len(), y.len(), "dot operands differ in length");
        let s = x.data().iter().zip(y.data()).map(|(p, q)| p * q).sum();
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::scalar(s), Op::Dot(a, b), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let ng = self.ng(a);
        self.push(Tensor::scalar(s), Op::Sum(a), ng)
    }

    /// Sums a list of scalars (or equally sized tensors).
    pub fn add_all(&mut self, terms: &[Var]) -> Option<Var> {
        let mut it = terms.iter().copied();
        let first = it.next()?;
        Some(it.fold(first, |acc, t| self.add(acc, t)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let mut sig = 0u64;
        for (i, &v) in self.value(a).data().iter().enumerate() {
            if v > 0.0 {
                sig = sig.wrapping_add((i as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            }
        }
        self.note(sig);
        self.unary_map(a, |v| if v > 0.0 { v } else { 0.0 }, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary_map(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary_map(a, f64::ln, Op::Log(a))
    }

    /// Maximum entry; the adjoint is routed to the first maximal index.
    pub fn max_over(&mut self, a: Var) -> Var {
        let (idx, m) = argmax(self.value(a).data());
        self.note(idx as u64);
        let ng = self.ng(a);
        self.push(Tensor::scalar(m), Op::MaxOver(a, idx), ng)
    }

    /// Maximum along an axis of a matrix, with first-index argmax routing.
    pub fn max_axis(&mut self, a: Var, axis: Axis) -> Var {
        let x = self.value(a);
        let (r, c) = x.shape();
        let mut out = Vec::new();
        let mut arg = Vec::new();
        match axis {
            Axis::Rows => {
                assert!(r > 0, "max over an empty axis");
                for j in 0..c {
                    let (mut bi, mut bv) = (0, x.get(0, j));
                    for i in 1..r {
                        let v = x.get(i, j);
                        if v > bv {
                            bi = i;
                            bv = v;
                        }
                    }
                    out.push(bv);
                    arg.push(bi);
                }
            }
            Axis::Cols => {
                assert!(c > 0, "max over an empty axis");
                for i in 0..r {
                    let (bi, bv) = argmax(x.row(i));
                    out.push(bv);
                    arg.push(bi);
                }
            }
        }
        let mut sig = 0u64;
        for (k, &i) in arg.iter().enumerate() {
            sig = sig.wrapping_mul(31).wrapping_add((k as u64) << 32 | i as u64);
        }
        self.note(sig);
        let ng = self.ng(a);
        self.push(Tensor::vector(out), Op::MaxAxis { input: a, axis, argmax: arg }, ng)
    }

    /// Numerically stable softmax; `-inf` entries get probability exactly 0.
    pub fn softmax(&mut self, a: Var) -> Result<Var, DiffError> {
        let x = self.value(a);
        let y = softmax_values(x.data())?;
        let value = Tensor::new(x.rows(), x.cols(), y);
        let ng = self.ng(a);
        Ok(self.push(value, Op::Softmax(a), ng))
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var, DiffError> {
        let x = self.value(a);
        let lse = logsumexp_value(x.data())?;
        let y = x.data().iter().map(|v| v - lse).collect();
        let value = Tensor::new(x.rows(), x.cols(), y);
        let ng = self.ng(a);
        Ok(self.push(value, Op::LogSoftmax(a), ng))
    }

    pub fn logsumexp(&mut self, a: Var) -> Result<Var, DiffError> {
        let lse = logsumexp_value(self.value(a).data())?;
        let ng = self.ng(a);
        Ok(self.push(Tensor::scalar(lse), Op::LogSumExp(a), ng))
    }

    /// Replaces entries whose `keep` flag is false with `-inf`.
    pub fn masked_fill(&mut self, a: Var, keep: Vec<bool>) -> Var {
        let x = self.value(a);
        assert_eq!(x.len(), keep.len(), "mask length mismatch");
        let data = x
            .data()
            .iter()
            .zip(&keep)
            .map(|(&v, &k)| if k { v } else { f64::NEG_INFINITY })
            .collect();
        let value = Tensor::new(x.rows(), x.cols(), data);
        let ng = self.ng(a);
        self.push(value, Op::MaskedFill { input: a, keep }, ng)
    }

    /// Keeps the `r` largest entries (ties to the smaller index) and masks
    /// the rest to `-inf`. `r >= len` keeps everything.
    pub fn keep_top(&mut self, a: Var, r: usize) -> Var {
        let keep = top_mask(self.value(a).data(), r);
        let mut sig = 0u64;
        for (i, &k) in keep.iter().enumerate() {
            if k {
                sig = sig.wrapping_add((i as u64 + 7).wrapping_mul(0xbf58_476d_1ce4_e5b9));
            }
        }
        self.note(sig);
        self.masked_fill(a, keep)
    }

    pub fn index(&mut self, a: Var, i: usize) -> Var {
        let v = self.value(a).data()[i];
        let ng = self.ng(a);
        self.push(Tensor::scalar(v), Op::Index(a, i), ng)
    }

    /// Stacks equally long vectors as the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Var {
        let parts: Vec<&[f64]> = rows.iter().map(|&v| self.value(v).data()).collect();
        let value = Tensor::from_rows(&parts);
        let ng = rows.iter().any(|&v| self.ng(v));
        self.push(value, Op::StackRows(rows.to_vec()), ng)
    }

    /// `w x + b`, with `b` broadcast across the columns of `x`.
    pub fn affine(&mut self, w: Var, x: Var, b: Var) -> Var {
        let (wt, xt, bt) = (self.value(w), self.value(x), self.value(b));
        let (o, i) = wt.shape();
        let (xi, c) = xt.shape();
        assert_eq!(i, xi, "affine inner dimensions differ");
        assert_eq!(bt.len(), o, "affine bias length mismatch");
        let mut out = vec![0.0; o * c];
        for r in 0..o {
            let wr = wt.row(r);
            let row = &mut out[r * c..(r + 1) * c];
            row.fill(bt.data()[r]);
            for (k, &wk) in wr.iter().enumerate() {
                if wk == 0.0 {
                    continue;
                }
                for (dst, &xv) in row.iter_mut().zip(xt.row(k)) {
                    *dst += wk * xv;
                }
            }
        }
        let ng = self.ng(w) || self.ng(x) || self.ng(b);
        self.push(Tensor::new(o, c, out), Op::Affine { w, x, b }, ng)
    }

    /// Matrix-vector product.
    pub fn matvec(&mut self, m: Var, v: Var) -> Var {
        let (mt, vt) = (self.value(m), self.value(v));
        assert_eq!(mt.cols(), vt.len(), "matvec dimension mismatch");
        let out = (0..mt.rows())
            .map(|r| mt.row(r).iter().zip(vt.data()).map(|(a, b)| a * b).sum())
            .collect();
        let ng = self.ng(m) || self.ng(v);
        self.push(Tensor::vector(out), Op::MatVec(m, v), ng)
    }

    /// `left diag(d) rightᵀ` for constant `left` (r x d) and `right` (c x d).
    pub fn bilinear_diag(&mut self, left: &Arc<Tensor>, diag: Var, right: &Arc<Tensor>) -> Var {
        let d = self.value(diag).data();
        assert_eq!(left.cols(), d.len(), "left operand width differs from diagonal");
        assert_eq!(right.cols(), d.len(), "right operand width differs from diagonal");
        let (r, c) = (left.rows(), right.rows());
        let mut out = Vec::with_capacity(r * c);
        // d·(l·r) keeps the form exactly symmetric when left and right swap.
        for i in 0..r {
            let li = left.row(i);
            for j in 0..c {
                out.push(li.iter().zip(right.row(j)).zip(d).map(|((a, b), k)| k * (a * b)).sum());
            }
        }
        let ng = self.ng(diag);
        let op = Op::BilinearDiag { left: Arc::clone(left), right: Arc::clone(right), diag };
        self.push(Tensor::new(r, c, out), op, ng)
    }

    /// Adds vector `v` (length = columns) to every row of `m`.
    pub fn add_row_broadcast(&mut self, m: Var, v: Var) -> Var {
        let (mt, vt) = (self.value(m), self.value(v));
        let (r, c) = mt.shape();
        assert_eq!(vt.len(), c, "broadcast length mismatch");
        let mut out = mt.data().to_vec();
        for i in 0..r {
            for (dst, &x) in out[i * c..(i + 1) * c].iter_mut().zip(vt.data()) {
                *dst += x;
            }
        }
        let ng = self.ng(m) || self.ng(v);
        self.push(Tensor::new(r, c, out), Op::AddRowBroadcast(m, v), ng)
    }

    /// `Σ_{e ≠ gold} max(0, margin − s[gold] + s[e])`.
    pub fn margin_ranking(&mut self, scores: Var, gold: usize, margin: f64) -> Var {
        let s = self.value(scores).data();
        assert!(gold < s.len(), "gold index out of range");
        let sg = s[gold];
        let mut total = 0.0;
        let mut active = vec![false; s.len()];
        let mut sig = 0u64;
        for (e, &se) in s.iter().enumerate() {
            if e == gold {
                continue;
            }
            let h = margin - sg + se;
            if h > 0.0 {
                total += h;
                active[e] = true;
                sig |= 1 << (e % 64);
            }
        }
        self.note(sig);
        let ng = self.ng(scores);
        self.push(Tensor::scalar(total), Op::MarginRanking { scores, gold, active }, ng)
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients, DiffError> {
        assert_eq!(self.value(output).len(), 1, "backward requires a scalar output");
        let n = output.0 + 1;
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        adj[output.0] = Some(vec![1.0]);
        for idx in (0..n).rev() {
            let Some(g) = adj[idx].take() else { continue };
            if g.iter().any(|x| !x.is_finite()) {
                return Err(DiffError::NonFiniteAdjoint { node: idx });
            }
            let node = &self.nodes[idx];
            if node.needs_grad {
                self.propagate(node, &g, &mut adj);
            }
            adj[idx] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { adjoints: adj, shapes })
    }

    fn propagate(&self, node: &Node, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            let slot = adj[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, &mut |s| add_into(s, g));
                acc(*b, &mut |s| add_into(s, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |s| add_into(s, g));
                acc(*b, &mut |s| s.iter_mut().zip(g).for_each(|(d, x)| *d -= x));
            }
            Op::Mul(a, b) => {
                let (x, y) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * y[i];
                    }
                });
                acc(*b, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * x[i];
                    }
                });
            }
            Op::Neg(a) => acc(*a, &mut |s| s.iter_mut().zip(g).for_each(|(d, x)| *d -= x)),
            Op::Scale(a, k) => acc(*a, &mut |s| s.iter_mut().zip(g).for_each(|(d, x)| *d += k * x)),
            Op::Dot(a, b) => {
                let (x, y) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, &mut |s| s.iter_mut().zip(y).for_each(|(d, v)| *d += g[0] * v));
                acc(*b, &mut |s| s.iter_mut().zip(x).for_each(|(d, v)| *d += g[0] * v));
            }
            Op::Sum(a) => acc(*a, &mut |s| s.iter_mut().for_each(|d| *d += g[0])),
            Op::Relu(a) => {
                let x = self.value(*a).data();
                acc(*a, &mut |s| {
                    for i in 0..s.len() {
                        if x[i] > 0.0 {
                            s[i] += g[i];
                        }
                    }
                });
            }
            Op::Exp(a) => {
                let y = node.value.data();
                acc(*a, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * y[i];
                    }
                });
            }
            Op::Log(a) => {
                let x = self.value(*a).data();
                acc(*a, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] / x[i];
                    }
                });
            }
            Op::MaxOver(a, i) => acc(*a, &mut |s| s[*i] += g[0]),
            Op::MaxAxis { input, axis, argmax } => {
                let cols = self.value(*input).cols();
                acc(*input, &mut |s| {
                    for (k, &am) in argmax.iter().enumerate() {
                        let flat = match axis {
                            Axis::Rows => am * cols + k,
                            Axis::Cols => k * cols + am,
                        };
                        s[flat] += g[k];
                    }
                });
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                let dotp: f64 = y.iter().zip(g).map(|(p, q)| p * q).sum();
                acc(*a, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += y[i] * (g[i] - dotp);
                    }
                });
            }
            Op::LogSoftmax(a) => {
                let y = node.value.data();
                let total: f64 = g.iter().sum();
                acc(*a, &mut |s| {
                    for i in 0..s.len() {
                        if y[i].is_finite() {
                            s[i] += g[i] - y[i].exp() * total;
                        }
                    }
                });
            }
            Op::LogSumExp(a) => {
                let x = self.value(*a).data();
                let lse = node.value.as_scalar();
                acc(*a, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += g[0] * (x[i] - lse).exp();
                    }
                });
            }
            Op::MaskedFill { input, keep } => acc(*input, &mut |s| {
                for i in 0..s.len() {
                    if keep[i] {
                        s[i] += g[i];
                    }
                }
            }),
            Op::Index(a, i) => acc(*a, &mut |s| s[*i] += g[0]),
            Op::StackRows(rows) => {
                let c = node.value.cols();
                for (r, &v) in rows.iter().enumerate() {
                    acc(v, &mut |s| add_into(s, &g[r * c..(r + 1) * c]));
                }
            }
            Op::Affine { w, x, b } => {
                let (wt, xt) = (self.value(*w), self.value(*x));
                let (o, i) = wt.shape();
                let c = xt.cols();
                acc(*w, &mut |s| {
                    for r in 0..o {
                        let gr = &g[r * c..(r + 1) * c];
                        for k in 0..i {
                            s[r * i + k] += gr.iter().zip(xt.row(k)).map(|(p, q)| p * q).sum::<f64>();
                        }
                    }
                });
                acc(*x, &mut |s| {
                    for r in 0..o {
                        let gr = &g[r * c..(r + 1) * c];
                        for (k, &wk) in wt.row(r).iter().enumerate() {
                            if wk == 0.0 {
                                continue;
                            }
                            for (d, &gv) in s[k * c..(k + 1) * c].iter_mut().zip(gr) {
                                *d += wk * gv;
                            }
                        }
                    }
                });
                acc(*b, &mut |s| {
                    for r in 0..o {
                        s[r] += g[r * c..(r + 1) * c].iter().sum::<f64>();
                    }
                });
            }
            Op::MatVec(m, v) => {
                let (mt, vt) = (self.value(*m), self.value(*v));
                let c = mt.cols();
                acc(*m, &mut |s| {
                    for (r, &gr) in g.iter().enumerate() {
                        for (d, &x) in s[r * c..(r + 1) * c].iter_mut().zip(vt.data()) {
                            *d += gr * x;
                        }
                    }
                });
                acc(*v, &mut |s| {
                    for (r, &gr) in g.iter().enumerate() {
                        for (d, &x) in s.iter_mut().zip(mt.row(r)) {
                            *d += gr * x;
                        }
                    }
                });
            }
            Op::BilinearDiag { left, right, diag } => acc(*diag, &mut |s| {
                let c = right.rows();
                for i in 0..left.rows() {
                    let gi = &g[i * c..(i + 1) * c];
                    let li = left.row(i);
                    for (j, &gij) in gi.iter().enumerate() {
                        if gij == 0.0 {
                            continue;
                        }
                        for ((d, &l), &r) in s.iter_mut().zip(li).zip(right.row(j)) {
                            *d += gij * l * r;
                        }
                    }
                }
            }),
            Op::AddRowBroadcast(m, v) => {
                let c = node.value.cols();
                acc(*m, &mut |s| add_into(s, g));
                acc(*v, &mut |s| {
                    for row in g.chunks(c) {
                        add_into(s, row);
                    }
                });
            }
            Op::MarginRanking { scores, gold, active } => acc(*scores, &mut |s| {
                for (e, &on) in active.iter().enumerate() {
                    if on {
                        s[e] += g[0];
                        s[*gold] -= g[0];
                    }
                }
            }),
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// First index of the maximum.
pub fn argmax(xs: &[f64]) -> (usize, f64) {
    assert!(!xs.is_empty(), "argmax of an empty slice");
    let mut best = (0, xs[0]);
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Mask of the `r` largest entries, ties broken toward the smaller index.
pub fn top_mask(xs: &[f64], r: usize) -> Vec<bool> {
    if r >= xs.len() {
        return vec![true; xs.len()];
    }
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[b].total_cmp(&xs[a]).then(a.cmp(&b)));
    let mut keep = vec![false; xs.len()];
    for &i in &order[..r] {
        keep[i] = true;
    }
    keep
}

pub fn logsumexp_value(xs: &[f64]) -> Result<f64, DiffError> {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || xs.is_empty() {
        return Err(DiffError::EmptyReducedContext);
    }
    Ok(m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln())
}

pub fn softmax_values(xs: &[f64]) -> Result<Vec<f64>, DiffError> {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || xs.is_empty() {
        return Err(DiffError::EmptyReducedContext);
    }
    let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / z).collect())
}
