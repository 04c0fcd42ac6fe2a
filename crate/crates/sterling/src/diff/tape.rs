//! Reverse-mode automatic differentiation on a flat tape.
//!
//! Values are computed eagerly as operations are recorded, so intermediate
//! results (e.g. encoder outputs needed for neighbour selection mid-step)
//! can be read before the loss is finished. `backward` walks the tape once
//! in reverse, dropping intermediate gradients as soon as they have been
//! propagated; only gradients of parameter leaves survive.
//!
//! Non-smooth points follow the usual subgradient conventions: `relu` and
//! `abs` have zero derivative at the origin, `log_guard` has zero derivative
//! below its clamp, and the cosine guard differentiates whichever branch of
//! `max(‖a‖‖b‖, ε)` is active.

use std::sync::Arc;

use crate::diff::tensor::Tensor;
use crate::scalar::Scalar;

/// Shared clamp for logarithms and cosine denominators.
pub const EPS: f64 = 1e-12;

/// Index of a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<S> {
    Leaf,
    /// C = A·B
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    /// Broadcast a 1xN row vector over every row of an MxN matrix.
    AddRowVec(NodeId, NodeId),
    Scale(NodeId, S),
    Hadamard(NodeId, NodeId),
    /// [A ‖ B] along columns.
    ConcatCols(NodeId, NodeId),
    /// Row i of the output is the mean of the input rows listed in `adj[i]`
    /// (zero row when the list is empty).
    NeighborMean(NodeId, Arc<Vec<Vec<u32>>>),
    /// Row i of the output is input row `idx[i]`; duplicate indices allowed.
    GatherRows(NodeId, Arc<Vec<u32>>),
    Relu(NodeId),
    Tanh(NodeId),
    Abs(NodeId),
    SoftmaxRows(NodeId),
    /// ln(max(x, ε)) elementwise.
    LogGuard(NodeId),
    SumAll(NodeId),
    /// Px1 column of cosine similarities between selected row pairs:
    /// out[i] = cos(a[idx_a[i]], b[idx_b[i]]). Fused so that large pair
    /// batches never materialize gathered copies of the embeddings.
    CosinePairs(NodeId, NodeId, Arc<Vec<u32>>, Arc<Vec<u32>>),
    /// Zero out entries flagged `false`; the mask is a fixed statistic of the
    /// forward values, not differentiated through.
    Mask(NodeId, Arc<Vec<bool>>),
    /// X / z for a 1x1 divisor z (differentiable in both).
    DivScalar(NodeId, NodeId),
}

struct Node<S: Scalar> {
    value: Tensor<S>,
    op: Op<S>,
    needs_grad: bool,
}

/// Gradients of a scalar root with respect to parameter leaves.
pub struct Gradients<S> {
    slots: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, id: NodeId) -> Option<&Tensor<S>> {
        self.slots.get(id.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor<S>> {
        self.slots.get_mut(id.0).and_then(Option::take)
    }
}

/// Recording of one differentiable computation.
pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Forward value of a node.
    pub fn value(&self, id: NodeId) -> &Tensor<S> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, needs_grad: bool) -> NodeId {
        debug_assert!(value.all_finite(), "non-finite forward value");
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { value, op, needs_grad });
        id
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor<S>) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, value: Tensor<S>) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a).matmul(self.value(b));
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMul(a, b), needs)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).transpose();
        let needs = self.needs(a);
        self.push(value, Op::Transpose(a), needs)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a).add(self.value(b));
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::Add(a, b), needs)
    }

    /// `a - b`, recorded as `a + (-1)·b`.
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let nb = self.scale(b, -S::one());
        self.add(a, nb)
    }

    pub fn add_row_vec(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        let xv = self.value(x);
        let bv = self.value(bias);
        assert_eq!(bv.rows(), 1, "add_row_vec: bias must be 1xN");
        assert_eq!(bv.cols(), xv.cols(), "add_row_vec: width mismatch");
        let mut value = xv.clone();
        for r in 0..value.rows() {
            for (o, &b) in value.row_mut(r).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        let needs = self.needs(x) || self.needs(bias);
        self.push(value, Op::AddRowVec(x, bias), needs)
    }

    pub fn scale(&mut self, a: NodeId, c: S) -> NodeId {
        let value = self.value(a).scale(c);
        let needs = self.needs(a);
        self.push(value, Op::Scale(a, c), needs)
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a).hadamard(self.value(b));
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::Hadamard(a, b), needs)
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let av = self.value(a);
        let bv = self.value(b);
        assert_eq!(av.rows(), bv.rows(), "concat_cols: row mismatch");
        let (rows, ca, cb) = (av.rows(), av.cols(), bv.cols());
        let mut value = Tensor::zeros(rows, ca + cb);
        for r in 0..rows {
            value.row_mut(r)[..ca].copy_from_slice(av.row(r));
            value.row_mut(r)[ca..].copy_from_slice(bv.row(r));
        }
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::ConcatCols(a, b), needs)
    }

    pub fn neighbor_mean(&mut self, x: NodeId, adj: Arc<Vec<Vec<u32>>>) -> NodeId {
        let xv = self.value(x);
        let cols = xv.cols();
        let mut value = Tensor::zeros(adj.len(), cols);
        for (r, nbrs) in adj.iter().enumerate() {
            if nbrs.is_empty() {
                continue;
            }
            let inv = S::one() / S::from_f64(nbrs.len() as f64);
            for &j in nbrs {
                let src = xv.row(j as usize);
                for (o, &s) in value.row_mut(r).iter_mut().zip(src) {
                    *o += inv * s;
                }
            }
        }
        let needs = self.needs(x);
        self.push(value, Op::NeighborMean(x, adj), needs)
    }

    pub fn gather_rows(&mut self, x: NodeId, idx: Arc<Vec<u32>>) -> NodeId {
        let xv = self.value(x);
        let cols = xv.cols();
        let mut value = Tensor::zeros(idx.len(), cols);
        for (r, &j) in idx.iter().enumerate() {
            value.row_mut(r).copy_from_slice(xv.row(j as usize));
        }
        let needs = self.needs(x);
        self.push(value, Op::GatherRows(x, idx), needs)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(|x| if x > S::zero() { x } else { S::zero() });
        let needs = self.needs(a);
        self.push(value, Op::Relu(a), needs)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(|x| x.tanh());
        let needs = self.needs(a);
        self.push(value, Op::Tanh(a), needs)
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(|x| x.abs());
        let needs = self.needs(a);
        self.push(value, Op::Abs(a), needs)
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let mut value = Tensor::zeros(av.rows(), av.cols());
        for r in 0..av.rows() {
            let row = av.row(r);
            let max = row.iter().cloned().fold(S::neg_infinity(), S::max);
            let mut sum = S::zero();
            for (o, &x) in value.row_mut(r).iter_mut().zip(row) {
                *o = (x - max).exp();
                sum += *o;
            }
            let inv = S::one() / sum;
            for o in value.row_mut(r) {
                *o *= inv;
            }
        }
        let needs = self.needs(a);
        self.push(value, Op::SoftmaxRows(a), needs)
    }

    pub fn log_guard(&mut self, a: NodeId) -> NodeId {
        let eps = S::from_f64(EPS);
        let value = self.value(a).map(|x| x.max(eps).ln());
        let needs = self.needs(a);
        self.push(value, Op::LogGuard(a), needs)
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let value = Tensor::scalar(self.value(a).sum());
        let needs = self.needs(a);
        self.push(value, Op::SumAll(a), needs)
    }

    /// Mean over all entries, recorded as `sum / len`.
    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let len = self.value(a).len().max(1);
        let s = self.sum_all(a);
        self.scale(s, S::one() / S::from_f64(len as f64))
    }

    /// Cosine between aligned rows of two equally shaped matrices.
    pub fn cosine_rows(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(
            self.value(a).shape(),
            self.value(b).shape(),
            "cosine_rows: shape mismatch"
        );
        let idx: Arc<Vec<u32>> = Arc::new((0..self.value(a).rows() as u32).collect());
        self.cosine_pairs(a, b, idx.clone(), idx)
    }

    /// out[i] = cos(a[idx_a[i]], b[idx_b[i]]), one row per pair.
    pub fn cosine_pairs(
        &mut self,
        a: NodeId,
        b: NodeId,
        idx_a: Arc<Vec<u32>>,
        idx_b: Arc<Vec<u32>>,
    ) -> NodeId {
        let av = self.value(a);
        let bv = self.value(b);
        assert_eq!(av.cols(), bv.cols(), "cosine_pairs: width mismatch");
        assert_eq!(idx_a.len(), idx_b.len(), "cosine_pairs: index length mismatch");
        let eps = S::from_f64(EPS);
        let mut value = Tensor::zeros(idx_a.len(), 1);
        for (i, (&ia, &ib)) in idx_a.iter().zip(idx_b.iter()).enumerate() {
            let (ra, rb) = (av.row(ia as usize), bv.row(ib as usize));
            let mut dot = S::zero();
            let mut na = S::zero();
            let mut nb = S::zero();
            for (&x, &y) in ra.iter().zip(rb) {
                dot += x * y;
                na += x * x;
                nb += y * y;
            }
            let denom = (na.sqrt() * nb.sqrt()).max(eps);
            value.set(i, 0, dot / denom);
        }
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::CosinePairs(a, b, idx_a, idx_b), needs)
    }

    /// Zero every entry strictly below `mean + alpha·std` of the current
    /// values. The threshold and resulting mask are frozen statistics; kept
    /// entries pass gradient through unchanged.
    pub fn filter_below_mean_std(&mut self, a: NodeId, alpha: S) -> NodeId {
        let av = self.value(a);
        let thresh = av.mean() + alpha * av.std();
        let mask: Arc<Vec<bool>> = Arc::new(av.data().iter().map(|&x| x >= thresh).collect());
        self.apply_mask(a, mask)
    }

    pub fn apply_mask(&mut self, a: NodeId, mask: Arc<Vec<bool>>) -> NodeId {
        let av = self.value(a);
        assert_eq!(mask.len(), av.len(), "mask length mismatch");
        let mut value = av.clone();
        for (o, &keep) in value.data_mut().iter_mut().zip(mask.iter()) {
            if !keep {
                *o = S::zero();
            }
        }
        let needs = self.needs(a);
        self.push(value, Op::Mask(a, mask), needs)
    }

    /// Elementwise `x / z` for a strictly positive 1x1 divisor.
    pub fn div_scalar(&mut self, x: NodeId, z: NodeId) -> NodeId {
        let zv = self.value(z);
        assert_eq!(zv.shape(), (1, 1), "div_scalar: divisor must be 1x1");
        let zi = zv.item();
        assert!(zi > S::zero(), "div_scalar: divisor must be positive");
        let value = self.value(x).scale(S::one() / zi);
        let needs = self.needs(x) || self.needs(z);
        self.push(value, Op::DivScalar(x, z), needs)
    }

    /// Accumulate gradients of a 1x1 root into its parameter leaves.
    pub fn backward(&mut self, root: NodeId) -> Gradients<S> {
        assert_eq!(
            self.value(root).shape(),
            (1, 1),
            "backward: root must be a scalar node"
        );
        let mut slots: Vec<Option<Tensor<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.needs(root) {
            return Gradients { slots };
        }
        slots[root.0] = Some(Tensor::scalar(S::one()));

        for i in (0..=root.0).rev() {
            if !self.nodes[i].needs_grad || slots[i].is_none() {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue; // retained for the caller
            }
            let g = slots[i].take().expect("grad checked above");
            self.propagate(i, &g, &mut slots);
        }
        Gradients { slots }
    }

    fn propagate(&self, i: usize, g: &Tensor<S>, slots: &mut [Option<Tensor<S>>]) {
        let eps = S::from_f64(EPS);
        match &self.nodes[i].op {
            Op::Leaf => unreachable!("leaves are not propagated"),
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    let da = g.matmul_nt(self.value(*b));
                    accumulate(slots, *a, da);
                }
                if self.needs(*b) {
                    let db = self.value(*a).matmul_tn(g);
                    accumulate(slots, *b, db);
                }
            }
            Op::Transpose(a) => {
                if self.needs(*a) {
                    accumulate(slots, *a, g.transpose());
                }
            }
            Op::Add(a, b) => {
                if self.needs(*a) {
                    accumulate(slots, *a, g.clone());
                }
                if self.needs(*b) {
                    accumulate(slots, *b, g.clone());
                }
            }
            Op::AddRowVec(x, bias) => {
                if self.needs(*x) {
                    accumulate(slots, *x, g.clone());
                }
                if self.needs(*bias) {
                    let mut db = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, &gv) in db.row_mut(0).iter_mut().zip(g.row(r)) {
                            *o += gv;
                        }
                    }
                    accumulate(slots, *bias, db);
                }
            }
            Op::Scale(a, c) => {
                if self.needs(*a) {
                    accumulate(slots, *a, g.scale(*c));
                }
            }
            Op::Hadamard(a, b) => {
                if self.needs(*a) {
                    accumulate(slots, *a, g.hadamard(self.value(*b)));
                }
                if self.needs(*b) {
                    accumulate(slots, *b, g.hadamard(self.value(*a)));
                }
            }
            Op::ConcatCols(a, b) => {
                let ca = self.value(*a).cols();
                if self.needs(*a) {
                    let mut da = Tensor::zeros(g.rows(), ca);
                    for r in 0..g.rows() {
                        da.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                    }
                    accumulate(slots, *a, da);
                }
                if self.needs(*b) {
                    let cb = g.cols() - ca;
                    let mut db = Tensor::zeros(g.rows(), cb);
                    for r in 0..g.rows() {
                        db.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                    }
                    accumulate(slots, *b, db);
                }
            }
            Op::NeighborMean(x, adj) => {
                if self.needs(*x) {
                    let mut dx = Tensor::zeros(self.value(*x).rows(), g.cols());
                    for (r, nbrs) in adj.iter().enumerate() {
                        if nbrs.is_empty() {
                            continue;
                        }
                        let inv = S::one() / S::from_f64(nbrs.len() as f64);
                        for &j in nbrs {
                            let dst = dx.row_mut(j as usize);
                            for (o, &gv) in dst.iter_mut().zip(g.row(r)) {
                                *o += inv * gv;
                            }
                        }
                    }
                    accumulate(slots, *x, dx);
                }
            }
            Op::GatherRows(x, idx) => {
                if self.needs(*x) {
                    let mut dx = Tensor::zeros(self.value(*x).rows(), g.cols());
                    for (r, &j) in idx.iter().enumerate() {
                        let dst = dx.row_mut(j as usize);
                        for (o, &gv) in dst.iter_mut().zip(g.row(r)) {
                            *o += gv;
                        }
                    }
                    accumulate(slots, *x, dx);
                }
            }
            Op::Relu(a) => {
                if self.needs(*a) {
                    let da = g.zip_map(self.value(*a), |gv, x| {
                        if x > S::zero() {
                            gv
                        } else {
                            S::zero()
                        }
                    });
                    accumulate(slots, *a, da);
                }
            }
            Op::Tanh(a) => {
                if self.needs(*a) {
                    let out = &self.nodes[i].value;
                    let da = g.zip_map(out, |gv, y| gv * (S::one() - y * y));
                    accumulate(slots, *a, da);
                }
            }
            Op::Abs(a) => {
                if self.needs(*a) {
                    let da = g.zip_map(self.value(*a), |gv, x| {
                        if x > S::zero() {
                            gv
                        } else if x < S::zero() {
                            -gv
                        } else {
                            S::zero()
                        }
                    });
                    accumulate(slots, *a, da);
                }
            }
            Op::SoftmaxRows(a) => {
                if self.needs(*a) {
                    let out = &self.nodes[i].value;
                    let mut da = Tensor::zeros(g.rows(), g.cols());
                    for r in 0..g.rows() {
                        let (orow, grow) = (out.row(r), g.row(r));
                        let mut dot = S::zero();
                        for (&y, &gv) in orow.iter().zip(grow) {
                            dot += y * gv;
                        }
                        for ((o, &y), &gv) in da.row_mut(r).iter_mut().zip(orow).zip(grow) {
                            *o = y * (gv - dot);
                        }
                    }
                    accumulate(slots, *a, da);
                }
            }
            Op::LogGuard(a) => {
                if self.needs(*a) {
                    let da = g.zip_map(self.value(*a), |gv, x| {
                        if x > eps {
                            gv / x
                        } else {
                            S::zero()
                        }
                    });
                    accumulate(slots, *a, da);
                }
            }
            Op::SumAll(a) => {
                if self.needs(*a) {
                    let (r, c) = self.value(*a).shape();
                    accumulate(slots, *a, Tensor::filled(r, c, g.item()));
                }
            }
            Op::CosinePairs(a, b, idx_a, idx_b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (na_, nb_) = (self.needs(*a), self.needs(*b));
                let mut da = na_.then(|| Tensor::zeros(av.rows(), av.cols()));
                let mut db = nb_.then(|| Tensor::zeros(bv.rows(), bv.cols()));
                for (i, (&ia, &ib)) in idx_a.iter().zip(idx_b.iter()).enumerate() {
                    let gv = g.get(i, 0);
                    if gv == S::zero() {
                        continue;
                    }
                    let (ra, rb) = (av.row(ia as usize), bv.row(ib as usize));
                    let mut dot = S::zero();
                    let mut qa = S::zero();
                    let mut qb = S::zero();
                    for (&x, &y) in ra.iter().zip(rb) {
                        dot += x * y;
                        qa += x * x;
                        qb += y * y;
                    }
                    let prod = qa.sqrt() * qb.sqrt();
                    if prod > eps {
                        // d/da [a·b / (‖a‖‖b‖)] = (b − a·(a·b)/‖a‖²) / (‖a‖‖b‖)
                        let inv = S::one() / prod;
                        let ca = dot / qa;
                        let cb = dot / qb;
                        if let Some(da) = da.as_mut() {
                            let dst = da.row_mut(ia as usize);
                            for ((o, &x), &y) in dst.iter_mut().zip(ra).zip(rb) {
                                *o += gv * inv * (y - x * ca);
                            }
                        }
                        if let Some(db) = db.as_mut() {
                            let dst = db.row_mut(ib as usize);
                            for ((o, &y), &x) in dst.iter_mut().zip(rb).zip(ra) {
                                *o += gv * inv * (x - y * cb);
                            }
                        }
                    } else {
                        // Clamped branch: denominator is the constant ε.
                        let inv = S::one() / eps;
                        if let Some(da) = da.as_mut() {
                            let dst = da.row_mut(ia as usize);
                            for (o, &y) in dst.iter_mut().zip(rb) {
                                *o += gv * inv * y;
                            }
                        }
                        if let Some(db) = db.as_mut() {
                            let dst = db.row_mut(ib as usize);
                            for (o, &x) in dst.iter_mut().zip(ra) {
                                *o += gv * inv * x;
                            }
                        }
                    }
                }
                if let Some(da) = da {
                    accumulate(slots, *a, da);
                }
                if let Some(db) = db {
                    accumulate(slots, *b, db);
                }
            }
            Op::Mask(a, mask) => {
                if self.needs(*a) {
                    let mut da = g.clone();
                    for (o, &keep) in da.data_mut().iter_mut().zip(mask.iter()) {
                        if !keep {
                            *o = S::zero();
                        }
                    }
                    accumulate(slots, *a, da);
                }
            }
            Op::DivScalar(x, z) => {
                let zi = self.value(*z).item();
                if self.needs(*x) {
                    accumulate(slots, *x, g.scale(S::one() / zi));
                }
                if self.needs(*z) {
                    let num = g.hadamard(self.value(*x)).sum();
                    accumulate(slots, *z, Tensor::scalar(-num / (zi * zi)));
                }
            }
        }
    }
}

fn accumulate<S: Scalar>(slots: &mut [Option<Tensor<S>>], id: NodeId, delta: Tensor<S>) {
    match &mut slots[id.0] {
        Some(g) => g.add_assign(&delta),
        slot @ None => *slot = Some(delta),
    }
}
