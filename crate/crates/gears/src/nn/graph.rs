//! Eager tape autodiff.
//!
//! Each builder method computes its forward value immediately and records the
//! node; [`Graph::backward`] replays the tape in reverse accumulating
//! gradients. The op set is exactly what the joint-prediction networks need —
//! dense linear algebra, row softmax, segmented pooling and attention, and a
//! couple of structural reshuffles.

use std::collections::HashMap;

use crate::math::Mat3;

use super::tensor::{matmul, matmul_nt, matmul_tn, Tensor};
use super::NnError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    Input,
    Param(String),
    /// a[m,k] * b[k,n]
    Matmul,
    /// a[m,k] * b[n,k]^T
    MatmulNt,
    /// a[m,n] + row vector b[n] broadcast over rows
    AddRowVec,
    Add,
    Sub,
    Scale(f64),
    Relu,
    SoftmaxRows,
    /// Per-segment column-wise max over rows; empty segments pool to zero.
    MaxPoolSegments {
        segments: Vec<(u32, u32)>,
    },
    ConcatCols,
    /// out row i = input row perm[i]
    PermuteRows {
        perm: Vec<u32>,
    },
    /// x[R,d] + p[period,d], row r gets p[r % period]
    AddTiledRows {
        period: usize,
    },
    /// Row r (a 3-vector) rotated by rots[r].
    RotateRows {
        rots: Vec<Mat3>,
    },
    /// Block-diagonal a_s * b_s^T per segment of `seg_rows` rows.
    SegMatNt {
        seg_rows: usize,
    },
    /// Block-diagonal a_s * b_s per segment ([r,r] x [r,d]).
    SegMatNn {
        seg_rows: usize,
    },
    /// Scalar sum of squared differences.
    SumSqDiff,
}

struct Node {
    op: Op,
    inputs: Vec<usize>,
    value: Tensor,
    /// Argmax row per (segment, column) for max pooling; u32::MAX marks an
    /// empty segment.
    aux: Vec<u32>,
}

/// Computation tape. Build ops through the methods below; values are computed
/// eagerly so intermediate results can be inspected without a separate run
/// pass.
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<String, usize>,
    check_finite: bool,
}

pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), params: HashMap::new(), check_finite: false }
    }

    /// Like [`Graph::new`] but every op result is checked for NaN/inf and
    /// reported as [`NnError::NonFinite`]. Used by the test suites.
    pub fn checked() -> Self {
        Self { nodes: Vec::new(), params: HashMap::new(), check_finite: true }
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, inputs: Vec<usize>, value: Tensor, aux: Vec<u32>) -> Result<NodeId, NnError> {
        if self.check_finite && !value.is_finite() {
            return Err(NnError::NonFinite(op_name(&op)));
        }
        self.nodes.push(Node { op, inputs, value, aux });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn input(&mut self, value: Tensor) -> Result<NodeId, NnError> {
        self.push(Op::Input, vec![], value, vec![])
    }

    /// Parameter node. Fetching the same name again returns the node created
    /// first, so a parameter used in several places accumulates one gradient.
    pub fn param(&mut self, name: &str, value: Tensor) -> Result<NodeId, NnError> {
        if let Some(&id) = self.params.get(name) {
            return Ok(NodeId(id));
        }
        let id = self.push(Op::Param(name.to_string()), vec![], value, vec![])?;
        self.params.insert(name.to_string(), id.0);
        Ok(id)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (m, k) = (va.rows(), va.cols());
        let (kb, n) = (vb.rows(), vb.cols());
        if k != kb {
            return Err(shape_err("matmul", va, vb));
        }
        let mut out = Tensor::zeros(&[m, n]);
        matmul(va.data(), vb.data(), m, k, n, out.data_mut());
        self.push(Op::Matmul, vec![a.0, b.0], out, vec![])
    }

    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (m, k) = (va.rows(), va.cols());
        let (n, kb) = (vb.rows(), vb.cols());
        if k != kb {
            return Err(shape_err("matmul_nt", va, vb));
        }
        let mut out = Tensor::zeros(&[m, n]);
        matmul_nt(va.data(), vb.data(), m, k, n, out.data_mut());
        self.push(Op::MatmulNt, vec![a.0, b.0], out, vec![])
    }

    pub fn add_row_vec(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (m, n) = (va.rows(), va.cols());
        if vb.numel() != n {
            return Err(shape_err("add_row_vec", va, vb));
        }
        let mut out = va.clone();
        for i in 0..m {
            for (o, &bv) in out.data_mut()[i * n..(i + 1) * n].iter_mut().zip(vb.data()) {
                *o += bv;
            }
        }
        self.push(Op::AddRowVec, vec![a.0, b.0], out, vec![])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        self.elementwise(a, b, "add", |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        self.elementwise(a, b, "sub", |x, y| x - y, Op::Sub)
    }

    fn elementwise(
        &mut self,
        a: NodeId,
        b: NodeId,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId, NnError> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape() != vb.shape() {
            return Err(shape_err(name, va, vb));
        }
        let mut out = va.clone();
        for (o, &bv) in out.data_mut().iter_mut().zip(vb.data()) {
            *o = f(*o, bv);
        }
        self.push(op, vec![a.0, b.0], out, vec![])
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId, NnError> {
        let mut out = self.nodes[a.0].value.clone();
        for o in out.data_mut() {
            *o *= c;
        }
        self.push(Op::Scale(c), vec![a.0], out, vec![])
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId, NnError> {
        let mut out = self.nodes[a.0].value.clone();
        for o in out.data_mut() {
            if *o < 0.0 {
                *o = 0.0;
            }
        }
        self.push(Op::Relu, vec![a.0], out, vec![])
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId, NnError> {
        let va = &self.nodes[a.0].value;
        let (m, n) = (va.rows(), va.cols());
        let mut out = va.clone();
        for i in 0..m {
            let row = &mut out.data_mut()[i * n..(i + 1) * n];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for x in row.iter_mut() {
                *x = (*x - mx).exp();
                sum += *x;
            }
            for x in row.iter_mut() {
                *x /= sum;
            }
        }
        self.push(Op::SoftmaxRows, vec![a.0], out, vec![])
    }

    /// Column-wise max over each `(start, len)` row segment; an empty segment
    /// yields a zero row so downstream consumers see a well-defined feature.
    pub fn max_pool_segments(
        &mut self,
        a: NodeId,
        segments: &[(u32, u32)],
    ) -> Result<NodeId, NnError> {
        let va = &self.nodes[a.0].value;
        let (rows, n) = (va.rows(), va.cols());
        for &(start, len) in segments {
            if (start + len) as usize > rows {
                return Err(NnError::ShapeMismatch {
                    op: "max_pool_segments",
                    lhs: va.shape().to_vec(),
                    rhs: vec![start as usize, len as usize],
                });
            }
        }
        let s = segments.len();
        let mut out = Tensor::zeros(&[s, n]);
        let mut aux = vec![u32::MAX; s * n];
        for (si, &(start, len)) in segments.iter().enumerate() {
            if len == 0 {
                continue;
            }
            let orow = &mut out.data_mut()[si * n..(si + 1) * n];
            let arows = &va.data()[start as usize * n..(start + len) as usize * n];
            for c in 0..n {
                let mut best = f64::NEG_INFINITY;
                let mut best_r = u32::MAX;
                for r in 0..len as usize {
                    let v = arows[r * n + c];
                    if v > best {
                        best = v;
                        best_r = start + r as u32;
                    }
                }
                orow[c] = best;
                aux[si * n + c] = best_r;
            }
        }
        self.push(Op::MaxPoolSegments { segments: segments.to_vec() }, vec![a.0], out, aux)
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (m, na) = (va.rows(), va.cols());
        let (mb, nb) = (vb.rows(), vb.cols());
        if m != mb {
            return Err(shape_err("concat_cols", va, vb));
        }
        let mut out = Tensor::zeros(&[m, na + nb]);
        for i in 0..m {
            let orow = &mut out.data_mut()[i * (na + nb)..(i + 1) * (na + nb)];
            orow[..na].copy_from_slice(&va.data()[i * na..(i + 1) * na]);
            orow[na..].copy_from_slice(&vb.data()[i * nb..(i + 1) * nb]);
        }
        self.push(Op::ConcatCols, vec![a.0, b.0], out, vec![])
    }

    /// Row gather: output row i is input row `perm[i]`. The output has
    /// `perm.len()` rows, so this covers permutations, tiling and arbitrary
    /// selections; gradients scatter-add back, accumulating on rows gathered
    /// more than once.
    pub fn permute_rows(&mut self, a: NodeId, perm: &[u32]) -> Result<NodeId, NnError> {
        let va = &self.nodes[a.0].value;
        let (m, n) = (va.rows(), va.cols());
        if perm.is_empty() || perm.iter().any(|&p| p as usize >= m) {
            return Err(NnError::ShapeMismatch {
                op: "permute_rows",
                lhs: va.shape().to_vec(),
                rhs: vec![perm.len()],
            });
        }
        let mut out = Tensor::zeros(&[perm.len(), n]);
        for (i, &p) in perm.iter().enumerate() {
            out.data_mut()[i * n..(i + 1) * n]
                .copy_from_slice(&va.data()[p as usize * n..(p as usize + 1) * n]);
        }
        self.push(Op::PermuteRows { perm: perm.to_vec() }, vec![a.0], out, vec![])
    }

    /// Adds `p[r % period]` to row r; used for the learned temporal position
    /// table, where rows are laid out joint-major as k*T + t.
    pub fn add_tiled_rows(&mut self, a: NodeId, p: NodeId) -> Result<NodeId, NnError> {
        let (va, vp) = (&self.nodes[a.0].value, &self.nodes[p.0].value);
        let (m, n) = (va.rows(), va.cols());
        let period = vp.rows();
        if vp.cols() != n || period == 0 || m % period != 0 {
            return Err(shape_err("add_tiled_rows", va, vp));
        }
        let mut out = va.clone();
        for i in 0..m {
            let prow = &vp.data()[(i % period) * n..(i % period + 1) * n];
            for (o, &pv) in out.data_mut()[i * n..(i + 1) * n].iter_mut().zip(prow) {
                *o += pv;
            }
        }
        self.push(Op::AddTiledRows { period }, vec![a.0, p.0], out, vec![])
    }

    /// Rotates each 3-vector row by its fixed rotation matrix. The rotations
    /// are constants; gradients flow through the rows only.
    pub fn rotate_rows(&mut self, a: NodeId, rots: &[Mat3]) -> Result<NodeId, NnError> {
        let va = &self.nodes[a.0].value;
        let (m, n) = (va.rows(), va.cols());
        if n != 3 || rots.len() != m {
            return Err(NnError::ShapeMismatch {
                op: "rotate_rows",
                lhs: va.shape().to_vec(),
                rhs: vec![rots.len(), 3],
            });
        }
        let mut out = Tensor::zeros(&[m, 3]);
        for i in 0..m {
            let v = crate::math::Vec3::new(
                va.data()[i * 3],
                va.data()[i * 3 + 1],
                va.data()[i * 3 + 2],
            );
            let r = rots[i] * v;
            out.data_mut()[i * 3..(i + 1) * 3].copy_from_slice(&[r.x, r.y, r.z]);
        }
        self.push(Op::RotateRows { rots: rots.to_vec() }, vec![a.0], out, vec![])
    }

    /// Per-segment a_s * b_s^T for contiguous segments of `seg_rows` rows:
    /// the score matrix of block-diagonal attention.
    pub fn seg_mat_nt(&mut self, a: NodeId, b: NodeId, seg_rows: usize) -> Result<NodeId, NnError> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (m, d) = (va.rows(), va.cols());
        if vb.shape() != va.shape() || seg_rows == 0 || m % seg_rows != 0 {
            return Err(shape_err("seg_mat_nt", va, vb));
        }
        let segs = m / seg_rows;
        let mut out = Tensor::zeros(&[m, seg_rows]);
        for s in 0..segs {
            let rows = s * seg_rows;
            matmul_nt(
                &va.data()[rows * d..(rows + seg_rows) * d],
                &vb.data()[rows * d..(rows + seg_rows) * d],
                seg_rows,
                d,
                seg_rows,
                &mut out.data_mut()[rows * seg_rows..(rows + seg_rows) * seg_rows],
            );
        }
        self.push(Op::SegMatNt { seg_rows }, vec![a.0, b.0], out, vec![])
    }

    /// Per-segment a_s * b_s where a is [seg_rows, seg_rows] per segment
    /// (attention weights) and b is [seg_rows, d] (values).
    pub fn seg_mat_nn(&mut self, a: NodeId, b: NodeId, seg_rows: usize) -> Result<NodeId, NnError> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (m, ka) = (va.rows(), va.cols());
        let (mb, d) = (vb.rows(), vb.cols());
        if ka != seg_rows || m != mb || seg_rows == 0 || m % seg_rows != 0 {
            return Err(shape_err("seg_mat_nn", va, vb));
        }
        let segs = m / seg_rows;
        let mut out = Tensor::zeros(&[m, d]);
        for s in 0..segs {
            let rows = s * seg_rows;
            matmul(
                &va.data()[rows * seg_rows..(rows + seg_rows) * seg_rows],
                &vb.data()[rows * d..(rows + seg_rows) * d],
                seg_rows,
                seg_rows,
                d,
                &mut out.data_mut()[rows * d..(rows + seg_rows) * d],
            );
        }
        self.push(Op::SegMatNn { seg_rows }, vec![a.0, b.0], out, vec![])
    }

    /// Scalar sum of squared differences.
    pub fn sum_sq_diff(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape() != vb.shape() {
            return Err(shape_err("sum_sq_diff", va, vb));
        }
        let s: f64 = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        self.push(Op::SumSqDiff, vec![a.0, b.0], Tensor::scalar(s), vec![])
    }

    /// x * w + b with b a row vector.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        let y = self.matmul(x, w)?;
        self.add_row_vec(y, b)
    }

    /// Single-head scaled dot-product attention applied independently to each
    /// contiguous block of `seg_rows` rows: softmax(Q Kᵀ / √d) V with
    /// Q = xWq, K = xWk, V = xWv. No residual, no feed-forward.
    pub fn segmented_attention(
        &mut self,
        x: NodeId,
        wq: NodeId,
        wk: NodeId,
        wv: NodeId,
        seg_rows: usize,
    ) -> Result<NodeId, NnError> {
        let q = self.matmul(x, wq)?;
        let k = self.matmul(x, wk)?;
        let v = self.matmul(x, wv)?;
        let d = self.nodes[q.0].value.cols();
        let scores = self.seg_mat_nt(q, k, seg_rows)?;
        let scaled = self.scale(scores, 1.0 / (d as f64).sqrt())?;
        let attn = self.softmax_rows(scaled)?;
        self.seg_mat_nn(attn, v, seg_rows)
    }

    /// Full self-attention over all rows (one segment).
    pub fn self_attention(
        &mut self,
        x: NodeId,
        wq: NodeId,
        wk: NodeId,
        wv: NodeId,
    ) -> Result<NodeId, NnError> {
        let rows = self.nodes[x.0].value.rows();
        self.segmented_attention(x, wq, wk, wv, rows)
    }

    /// Reverse-mode gradients of a scalar `loss` with respect to every node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, NnError> {
        let lv = &self.nodes[loss.0].value;
        if lv.numel() != 1 {
            return Err(NnError::ShapeMismatch {
                op: "backward",
                lhs: lv.shape().to_vec(),
                rhs: vec![1],
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.accumulate_input_grads(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate_input_grads(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let inp = |i: usize| &self.nodes[node.inputs[i]].value;
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::Matmul => {
                let (a, b) = (inp(0), inp(1));
                let (m, k, n) = (a.rows(), a.cols(), b.cols());
                let mut da = Tensor::zeros(&[m, k]);
                matmul_nt(g.data(), b.data(), m, n, k, da.data_mut());
                let mut db = Tensor::zeros(&[k, n]);
                matmul_tn(a.data(), g.data(), m, k, n, db.data_mut());
                add_grad(grads, node.inputs[0], da);
                add_grad(grads, node.inputs[1], db);
            }
            Op::MatmulNt => {
                let (a, b) = (inp(0), inp(1));
                let (m, k, n) = (a.rows(), a.cols(), b.rows());
                let mut da = Tensor::zeros(&[m, k]);
                matmul(g.data(), b.data(), m, n, k, da.data_mut());
                let mut db = Tensor::zeros(&[n, k]);
                matmul_tn(g.data(), a.data(), m, n, k, db.data_mut());
                add_grad(grads, node.inputs[0], da);
                add_grad(grads, node.inputs[1], db);
            }
            Op::AddRowVec => {
                let b = inp(1);
                let (m, n) = (inp(0).rows(), inp(0).cols());
                let mut db = Tensor::zeros(b.shape());
                for i in 0..m {
                    for (o, &gv) in db.data_mut().iter_mut().zip(&g.data()[i * n..(i + 1) * n]) {
                        *o += gv;
                    }
                }
                add_grad(grads, node.inputs[0], g.clone());
                add_grad(grads, node.inputs[1], db);
            }
            Op::Add => {
                add_grad(grads, node.inputs[0], g.clone());
                add_grad(grads, node.inputs[1], g.clone());
            }
            Op::Sub => {
                add_grad(grads, node.inputs[0], g.clone());
                let mut neg = g.clone();
                for x in neg.data_mut() {
                    *x = -*x;
                }
                add_grad(grads, node.inputs[1], neg);
            }
            Op::Scale(c) => {
                let mut da = g.clone();
                for x in da.data_mut() {
                    *x *= c;
                }
                add_grad(grads, node.inputs[0], da);
            }
            Op::Relu => {
                let a = inp(0);
                let mut da = g.clone();
                for (x, &v) in da.data_mut().iter_mut().zip(a.data()) {
                    if v <= 0.0 {
                        *x = 0.0;
                    }
                }
                add_grad(grads, node.inputs[0], da);
            }
            Op::SoftmaxRows => {
                let y = &node.value;
                let (m, n) = (y.rows(), y.cols());
                let mut da = Tensor::zeros(y.shape());
                for i in 0..m {
                    let yr = &y.data()[i * n..(i + 1) * n];
                    let gr = &g.data()[i * n..(i + 1) * n];
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((o, &yv), &gv) in da.data_mut()[i * n..(i + 1) * n]
                        .iter_mut()
                        .zip(yr)
                        .zip(gr)
                    {
                        *o = yv * (gv - dot);
                    }
                }
                add_grad(grads, node.inputs[0], da);
            }
            Op::MaxPoolSegments { segments } => {
                let a = inp(0);
                let n = a.cols();
                let mut da = Tensor::zeros(a.shape());
                for si in 0..segments.len() {
                    for c in 0..n {
                        let r = node.aux[si * n + c];
                        if r != u32::MAX {
                            da.data_mut()[r as usize * n + c] += g.data()[si * n + c];
                        }
                    }
                }
                add_grad(grads, node.inputs[0], da);
            }
            Op::ConcatCols => {
                let (a, b) = (inp(0), inp(1));
                let (m, na, nb) = (a.rows(), a.cols(), b.cols());
                let mut da = Tensor::zeros(a.shape());
                let mut db = Tensor::zeros(b.shape());
                for i in 0..m {
                    let grow = &g.data()[i * (na + nb)..(i + 1) * (na + nb)];
                    da.data_mut()[i * na..(i + 1) * na].copy_from_slice(&grow[..na]);
                    db.data_mut()[i * nb..(i + 1) * nb].copy_from_slice(&grow[na..]);
                }
                add_grad(grads, node.inputs[0], da);
                add_grad(grads, node.inputs[1], db);
            }
            Op::PermuteRows { perm } => {
                let a = inp(0);
                let n = a.cols();
                let mut da = Tensor::zeros(a.shape());
                for (i, &p) in perm.iter().enumerate() {
                    for (o, &gv) in da.data_mut()[p as usize * n..(p as usize + 1) * n]
                        .iter_mut()
                        .zip(&g.data()[i * n..(i + 1) * n])
                    {
                        *o += gv;
                    }
                }
                add_grad(grads, node.inputs[0], da);
            }
            Op::AddTiledRows { period } => {
                let (a, p) = (inp(0), inp(1));
                let (m, n) = (a.rows(), a.cols());
                let mut dp = Tensor::zeros(p.shape());
                for i in 0..m {
                    let t = i % period;
                    for (o, &gv) in dp.data_mut()[t * n..(t + 1) * n]
                        .iter_mut()
                        .zip(&g.data()[i * n..(i + 1) * n])
                    {
                        *o += gv;
                    }
                }
                add_grad(grads, node.inputs[0], g.clone());
                add_grad(grads, node.inputs[1], dp);
            }
            Op::RotateRows { rots } => {
                let m = inp(0).rows();
                let mut da = Tensor::zeros(&[m, 3]);
                for i in 0..m {
                    let gv = crate::math::Vec3::new(
                        g.data()[i * 3],
                        g.data()[i * 3 + 1],
                        g.data()[i * 3 + 2],
                    );
                    let r = rots[i].transpose() * gv;
                    da.data_mut()[i * 3..(i + 1) * 3].copy_from_slice(&[r.x, r.y, r.z]);
                }
                add_grad(grads, node.inputs[0], da);
            }
            Op::SegMatNt { seg_rows } => {
                let (a, b) = (inp(0), inp(1));
                let (m, d) = (a.rows(), a.cols());
                let segs = m / seg_rows;
                let mut da = Tensor::zeros(a.shape());
                let mut db = Tensor::zeros(b.shape());
                for s in 0..segs {
                    let r0 = s * seg_rows;
                    let gs = &g.data()[r0 * seg_rows..(r0 + seg_rows) * seg_rows];
                    matmul(
                        gs,
                        &b.data()[r0 * d..(r0 + seg_rows) * d],
                        *seg_rows,
                        *seg_rows,
                        d,
                        &mut da.data_mut()[r0 * d..(r0 + seg_rows) * d],
                    );
                    matmul_tn(
                        gs,
                        &a.data()[r0 * d..(r0 + seg_rows) * d],
                        *seg_rows,
                        *seg_rows,
                        d,
                        &mut db.data_mut()[r0 * d..(r0 + seg_rows) * d],
                    );
                }
                add_grad(grads, node.inputs[0], da);
                add_grad(grads, node.inputs[1], db);
            }
            Op::SegMatNn { seg_rows } => {
                let (a, b) = (inp(0), inp(1));
                let d = b.cols();
                let segs = a.rows() / seg_rows;
                let mut da = Tensor::zeros(a.shape());
                let mut db = Tensor::zeros(b.shape());
                for s in 0..segs {
                    let r0 = s * seg_rows;
                    let gs = &g.data()[r0 * d..(r0 + seg_rows) * d];
                    matmul_nt(
                        gs,
                        &b.data()[r0 * d..(r0 + seg_rows) * d],
                        *seg_rows,
                        d,
                        *seg_rows,
                        &mut da.data_mut()[r0 * seg_rows..(r0 + seg_rows) * seg_rows],
                    );
                    matmul_tn(
                        &a.data()[r0 * seg_rows..(r0 + seg_rows) * seg_rows],
                        gs,
                        *seg_rows,
                        *seg_rows,
                        d,
                        &mut db.data_mut()[r0 * d..(r0 + seg_rows) * d],
                    );
                }
                add_grad(grads, node.inputs[0], da);
                add_grad(grads, node.inputs[1], db);
            }
            Op::SumSqDiff => {
                let (a, b) = (inp(0), inp(1));
                let g0 = g.data()[0];
                let mut da = Tensor::zeros(a.shape());
                let mut db = Tensor::zeros(b.shape());
                for ((o_a, o_b), (&x, &y)) in da
                    .data_mut()
                    .iter_mut()
                    .zip(db.data_mut().iter_mut())
                    .zip(a.data().iter().zip(b.data()))
                {
                    let d2 = 2.0 * (x - y) * g0;
                    *o_a = d2;
                    *o_b = -d2;
                }
                add_grad(grads, node.inputs[0], da);
                add_grad(grads, node.inputs[1], db);
            }
        }
    }

    /// Pairs `(name, gradient)` for every parameter node that received a
    /// gradient; parameters the loss never touched are omitted.
    pub fn param_grads(&self, grads: &Gradients) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(name) = &node.op {
                if let Some(g) = &grads.grads[i] {
                    out.push((name.clone(), g.clone()));
                }
            }
        }
        out
    }
}

fn add_grad(grads: &mut [Option<Tensor>], idx: usize, g: Tensor) {
    match &mut grads[idx] {
        Some(acc) => {
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        slot => *slot = Some(g),
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> NnError {
    NnError::ShapeMismatch { op, lhs: a.shape().to_vec(), rhs: b.shape().to_vec() }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Input => "input",
        Op::Param(_) => "param",
        Op::Matmul => "matmul",
        Op::MatmulNt => "matmul_nt",
        Op::AddRowVec => "add_row_vec",
        Op::Add => "add",
        Op::Sub => "sub",
        Op::Scale(_) => "scale",
        Op::Relu => "relu",
        Op::SoftmaxRows => "softmax_rows",
        Op::MaxPoolSegments { .. } => "max_pool_segments",
        Op::ConcatCols => "concat_cols",
        Op::PermuteRows { .. } => "permute_rows",
        Op::AddTiledRows { .. } => "add_tiled_rows",
        Op::RotateRows { .. } => "rotate_rows",
        Op::SegMatNt { .. } => "seg_mat_nt",
        Op::SegMatNn { .. } => "seg_mat_nn",
        Op::SumSqDiff => "sum_sq_diff",
    }
}
