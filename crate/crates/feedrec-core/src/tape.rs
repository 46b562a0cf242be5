//! Reverse-mode autodiff over [`Mat`] values.
//!
//! A `Tape` records one forward computation; `backward` walks it once in
//! reverse and returns per-node gradients. Nodes hold their values behind
//! `Arc`, so registering a large parameter tensor as a leaf is O(1).
//!
//! The op set is closed (an enum), which keeps backward rules small,
//! explicit, and individually testable against finite differences.

use std::sync::Arc;

use crate::mat::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    /// Elementwise product, same shape.
    Mul(Var, Var),
    /// m×n plus a 1×n row broadcast over rows.
    AddRow(Var, Var),
    MatMul {
        a: Var,
        b: Var,
        ta: bool,
        tb: bool,
    },
    Scale(Var, f64),
    /// x (m×n) scaled by a 1×1 node.
    ScaleByScalar {
        x: Var,
        s: Var,
    },
    Sigmoid(Var),
    Relu(Var),
    Abs(Var),
    Sqrt(Var),
    /// Elementwise quotient, same shape (used on 1×1 nodes).
    Div(Var, Var),
    Softplus(Var),
    /// Row softmax; `mask[j] == false` excludes column j (as -inf logit).
    SoftmaxRows {
        x: Var,
        mask: Option<Vec<bool>>,
    },
    /// 1×n → 1×1 stable log-sum-exp.
    LogSumExp(Var),
    /// Gather rows (repeats allowed); backward scatter-adds.
    SelectRows {
        x: Var,
        idx: Vec<usize>,
    },
    /// Stack 1×n rows into k×n.
    StackRows(Vec<Var>),
    /// Concatenate along columns; operands share the row count.
    ConcatCols(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
        len: usize,
    },
    /// Elementwise product with a fixed mask (inverted-dropout scaling baked in).
    DropoutMask {
        x: Var,
        mask: Vec<f64>,
    },
}

struct Node {
    value: Arc<Mat>,
    op: Op,
}

pub struct Tape {
    nodes: Vec<Node>,
}

pub struct Gradients {
    grads: Vec<Option<Mat>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.grads[v.0].as_ref()
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Arc<Mat>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf_mat(&mut self, value: Mat) -> Var {
        self.leaf(Arc::new(value))
    }

    pub fn constant(&mut self, x: f64) -> Var {
        self.leaf_mat(Mat::scalar(x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ma, mb) = (self.value(a), self.value(b));
        assert_eq!((ma.rows(), ma.cols()), (mb.rows(), mb.cols()));
        let mut out = ma.clone();
        out.add_scaled(mb, 1.0);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (ma, mb) = (self.value(a), self.value(b));
        assert_eq!((ma.rows(), ma.cols()), (mb.rows(), mb.cols()));
        let mut out = ma.clone();
        out.add_scaled(mb, -1.0);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (ma, mb) = (self.value(a), self.value(b));
        assert_eq!((ma.rows(), ma.cols()), (mb.rows(), mb.cols()));
        let data = ma
            .data()
            .iter()
            .zip(mb.data())
            .map(|(x, y)| x * y)
            .collect();
        let out = Mat::from_vec(ma.rows(), ma.cols(), data);
        self.push(out, Op::Mul(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (ma, mr) = (self.value(a), self.value(row));
        assert_eq!(mr.rows(), 1);
        assert_eq!(ma.cols(), mr.cols());
        let mut out = ma.clone();
        for r in 0..out.rows() {
            out.add_row_scaled(r, mr.row(0), 1.0);
        }
        self.push(out, Op::AddRow(a, row))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.matmul_t(a, false, b, false)
    }

    /// a · bᵀ
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        self.matmul_t(a, false, b, true)
    }

    pub fn matmul_t(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Var {
        let out = Mat::matmul(self.value(a), ta, self.value(b), tb);
        self.push(out, Op::MatMul { a, b, ta, tb })
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).rows(), 1);
        assert_eq!(self.value(b).rows(), 1);
        self.matmul_nt(a, b)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let mut out = self.value(a).clone();
        out.scale_in_place(s);
        self.push(out, Op::Scale(a, s))
    }

    pub fn scale_by_scalar(&mut self, x: Var, s: Var) -> Var {
        assert_eq!(self.value(s).len(), 1);
        let sv = self.value(s).item();
        let mut out = self.value(x).clone();
        out.scale_in_place(sv);
        self.push(out, Op::ScaleByScalar { x, s })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let data = m.data().iter().map(|&x| sigmoid(x)).collect();
        let out = Mat::from_vec(m.rows(), m.cols(), data);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let data = m.data().iter().map(|&x| x.max(0.0)).collect();
        let out = Mat::from_vec(m.rows(), m.cols(), data);
        self.push(out, Op::Relu(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let data = m.data().iter().map(|&x| x.abs()).collect();
        let out = Mat::from_vec(m.rows(), m.cols(), data);
        self.push(out, Op::Abs(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let data = m.data().iter().map(|&x| x.sqrt()).collect();
        let out = Mat::from_vec(m.rows(), m.cols(), data);
        self.push(out, Op::Sqrt(a))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let (ma, mb) = (self.value(a), self.value(b));
        assert_eq!((ma.rows(), ma.cols()), (mb.rows(), mb.cols()));
        let data = ma
            .data()
            .iter()
            .zip(mb.data())
            .map(|(x, y)| x / y)
            .collect();
        let out = Mat::from_vec(ma.rows(), ma.cols(), data);
        self.push(out, Op::Div(a, b))
    }

    /// log(1 + e^x), stable for large |x|.
    pub fn softplus(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let data = m
            .data()
            .iter()
            .map(|&x| x.max(0.0) + (-x.abs()).exp().ln_1p())
            .collect();
        let out = Mat::from_vec(m.rows(), m.cols(), data);
        self.push(out, Op::Softplus(a))
    }

    /// Row-wise softmax. Masked-out columns get weight 0; a row must keep at
    /// least one active column.
    pub fn softmax_rows(&mut self, x: Var, mask: Option<&[bool]>) -> Var {
        let m = self.value(x);
        if let Some(mk) = mask {
            assert_eq!(mk.len(), m.cols());
            assert!(mk.iter().any(|&b| b), "softmax over fully masked row");
        }
        let mut out = Mat::zeros(m.rows(), m.cols());
        for r in 0..m.rows() {
            let row = m.row(r);
            let active = |j: usize| mask.map_or(true, |mk| mk[j]);
            let mut mx = f64::NEG_INFINITY;
            for (j, &v) in row.iter().enumerate() {
                if active(j) && v > mx {
                    mx = v;
                }
            }
            let mut denom = 0.0;
            for (j, &v) in row.iter().enumerate() {
                if active(j) {
                    denom += (v - mx).exp();
                }
            }
            let orow = out.row_mut(r);
            for (j, &v) in row.iter().enumerate() {
                if active(j) {
                    orow[j] = (v - mx).exp() / denom;
                }
            }
        }
        self.push(
            out,
            Op::SoftmaxRows {
                x,
                mask: mask.map(|m| m.to_vec()),
            },
        )
    }

    /// Stable log Σ exp over a 1×n node.
    pub fn logsumexp(&mut self, x: Var) -> Var {
        let m = self.value(x);
        assert_eq!(m.rows(), 1);
        let mx = m.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = m.data().iter().map(|&v| (v - mx).exp()).sum();
        self.push(Mat::scalar(mx + s.ln()), Op::LogSumExp(x))
    }

    pub fn select_rows(&mut self, x: Var, idx: &[usize]) -> Var {
        let out = self.value(x).gather_rows(idx);
        self.push(
            out,
            Op::SelectRows {
                x,
                idx: idx.to_vec(),
            },
        )
    }

    pub fn stack_rows(&mut self, rows: &[Var]) -> Var {
        assert!(!rows.is_empty());
        let cols = self.value(rows[0]).cols();
        let mut out = Mat::zeros(rows.len(), cols);
        for (i, &v) in rows.iter().enumerate() {
            let m = self.value(v);
            assert_eq!((m.rows(), m.cols()), (1, cols));
            out.row_mut(i).copy_from_slice(m.row(0));
        }
        self.push(out, Op::StackRows(rows.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows();
        let total: usize = parts.iter().map(|&v| self.value(v).cols()).sum();
        let mut out = Mat::zeros(rows, total);
        let mut off = 0;
        for &v in parts {
            let m = self.value(v);
            assert_eq!(m.rows(), rows);
            for r in 0..rows {
                out.row_mut(r)[off..off + m.cols()].copy_from_slice(m.row(r));
            }
            off += m.cols();
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let m = self.value(x);
        assert!(start + len <= m.cols());
        let mut out = Mat::zeros(m.rows(), len);
        for r in 0..m.rows() {
            out.row_mut(r).copy_from_slice(&m.row(r)[start..start + len]);
        }
        self.push(out, Op::SliceCols { x, start, len })
    }

    /// Apply a precomputed inverted-dropout mask (entries 0 or 1/(1-p)).
    pub fn dropout_mask(&mut self, x: Var, mask: Vec<f64>) -> Var {
        let m = self.value(x);
        assert_eq!(mask.len(), m.len());
        let data = m
            .data()
            .iter()
            .zip(mask.iter())
            .map(|(v, k)| v * k)
            .collect();
        let out = Mat::from_vec(m.rows(), m.cols(), data);
        self.push(out, Op::DropoutMask { x, mask })
    }

    /// Gradients of a scalar (1×1) node w.r.t. every node on the tape.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Mat::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, i: usize, g: &Mat, grads: &mut [Option<Mat>]) {
        let node = &self.nodes[i];
        let shape_of = |v: Var| {
            let m = &self.nodes[v.0].value;
            (m.rows(), m.cols())
        };
        let acc = |v: Var, contrib: Mat, grads: &mut [Option<Mat>]| {
            debug_assert_eq!(
                (contrib.rows(), contrib.cols()),
                shape_of(v),
                "gradient shape mismatch"
            );
            match &mut grads[v.0] {
                Some(existing) => existing.add_scaled(&contrib, 1.0),
                slot @ None => *slot = Some(contrib),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, g.clone(), grads);
                acc(*b, g.clone(), grads);
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone(), grads);
                let mut neg = g.clone();
                neg.scale_in_place(-1.0);
                acc(*b, neg, grads);
            }
            Op::Mul(a, b) => {
                let (ma, mb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let da = Mat::from_vec(
                    g.rows(),
                    g.cols(),
                    g.data().iter().zip(mb.data()).map(|(x, y)| x * y).collect(),
                );
                let db = Mat::from_vec(
                    g.rows(),
                    g.cols(),
                    g.data().iter().zip(ma.data()).map(|(x, y)| x * y).collect(),
                );
                acc(*a, da, grads);
                acc(*b, db, grads);
            }
            Op::AddRow(a, row) => {
                acc(*a, g.clone(), grads);
                let mut dr = Mat::zeros(1, g.cols());
                for r in 0..g.rows() {
                    dr.add_row_scaled(0, g.row(r), 1.0);
                }
                acc(*row, dr, grads);
            }
            Op::MatMul { a, b, ta, tb } => {
                let (ma, mb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let da = match (ta, tb) {
                    (false, false) => Mat::matmul(g, false, mb, true),
                    (false, true) => Mat::matmul(g, false, mb, false),
                    (true, false) => Mat::matmul(mb, false, g, true),
                    (true, true) => Mat::matmul(mb, true, g, true),
                };
                let db = match (ta, tb) {
                    (false, false) => Mat::matmul(ma, true, g, false),
                    (false, true) => Mat::matmul(g, true, ma, false),
                    (true, false) => Mat::matmul(ma, false, g, false),
                    (true, true) => Mat::matmul(g, true, ma, true),
                };
                acc(*a, da, grads);
                acc(*b, db, grads);
            }
            Op::Scale(a, s) => {
                let mut da = g.clone();
                da.scale_in_place(*s);
                acc(*a, da, grads);
            }
            Op::ScaleByScalar { x, s } => {
                let (mx, ms) = (&self.nodes[x.0].value, &self.nodes[s.0].value);
                let sv = ms.item();
                let mut dx = g.clone();
                dx.scale_in_place(sv);
                acc(*x, dx, grads);
                let ds: f64 = g.data().iter().zip(mx.data()).map(|(a, b)| a * b).sum();
                acc(*s, Mat::scalar(ds), grads);
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                let da = Mat::from_vec(
                    g.rows(),
                    g.cols(),
                    g.data()
                        .iter()
                        .zip(y.data())
                        .map(|(gv, yv)| gv * yv * (1.0 - yv))
                        .collect(),
                );
                acc(*a, da, grads);
            }
            Op::Relu(a) => {
                let x = &self.nodes[a.0].value;
                let da = Mat::from_vec(
                    g.rows(),
                    g.cols(),
                    g.data()
                        .iter()
                        .zip(x.data())
                        .map(|(gv, xv)| if *xv > 0.0 { *gv } else { 0.0 })
                        .collect(),
                );
                acc(*a, da, grads);
            }
            Op::Abs(a) => {
                let x = &self.nodes[a.0].value;
                let da = Mat::from_vec(
                    g.rows(),
                    g.cols(),
                    g.data()
                        .iter()
                        .zip(x.data())
                        .map(|(gv, xv)| gv * xv.signum() * if *xv == 0.0 { 0.0 } else { 1.0 })
                        .collect(),
                );
                acc(*a, da, grads);
            }
            Op::Sqrt(a) => {
                let y = &node.value;
                let da = Mat::from_vec(
                    g.rows(),
                    g.cols(),
                    g.data()
                        .iter()
                        .zip(y.data())
                        .map(|(gv, yv)| gv * 0.5 / yv)
                        .collect(),
                );
                acc(*a, da, grads);
            }
            Op::Div(a, b) => {
                let (ma, mb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let da = Mat::from_vec(
                    g.rows(),
                    g.cols(),
                    g.data().iter().zip(mb.data()).map(|(gv, bv)| gv / bv).collect(),
                );
                let db = Mat::from_vec(
                    g.rows(),
                    g.cols(),
                    g.data()
                        .iter()
                        .zip(ma.data().iter().zip(mb.data()))
                        .map(|(gv, (av, bv))| -gv * av / (bv * bv))
                        .collect(),
                );
                acc(*a, da, grads);
                acc(*b, db, grads);
            }
            Op::Softplus(a) => {
                let x = &self.nodes[a.0].value;
                let da = Mat::from_vec(
                    g.rows(),
                    g.cols(),
                    g.data()
                        .iter()
                        .zip(x.data())
                        .map(|(gv, xv)| gv * sigmoid(*xv))
                        .collect(),
                );
                acc(*a, da, grads);
            }
            Op::SoftmaxRows { x, mask } => {
                let y = &node.value;
                let mut dx = Mat::zeros(g.rows(), g.cols());
                for r in 0..g.rows() {
                    let yr = y.row(r);
                    let gr = g.row(r);
                    let inner: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    let dr = dx.row_mut(r);
                    for j in 0..yr.len() {
                        let active = mask.as_ref().map_or(true, |m| m[j]);
                        if active {
                            dr[j] = yr[j] * (gr[j] - inner);
                        }
                    }
                }
                acc(*x, dx, grads);
            }
            Op::LogSumExp(x) => {
                let m = &self.nodes[x.0].value;
                let mx = m.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let denom: f64 = m.data().iter().map(|&v| (v - mx).exp()).sum();
                let gv = g.item();
                let dx = Mat::from_vec(
                    1,
                    m.cols(),
                    m.data()
                        .iter()
                        .map(|&v| gv * (v - mx).exp() / denom)
                        .collect(),
                );
                acc(*x, dx, grads);
            }
            Op::SelectRows { x, idx } => {
                let m = &self.nodes[x.0].value;
                let mut dx = Mat::zeros(m.rows(), m.cols());
                for (i, &r) in idx.iter().enumerate() {
                    dx.add_row_scaled(r, g.row(i), 1.0);
                }
                acc(*x, dx, grads);
            }
            Op::StackRows(rows) => {
                for (i, &v) in rows.iter().enumerate() {
                    acc(v, Mat::row_vec(g.row(i).to_vec()), grads);
                }
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &v in parts {
                    let w = self.nodes[v.0].value.cols();
                    let mut dv = Mat::zeros(g.rows(), w);
                    for r in 0..g.rows() {
                        dv.row_mut(r).copy_from_slice(&g.row(r)[off..off + w]);
                    }
                    acc(v, dv, grads);
                    off += w;
                }
            }
            Op::SliceCols { x, start, len } => {
                let m = &self.nodes[x.0].value;
                let mut dx = Mat::zeros(m.rows(), m.cols());
                for r in 0..g.rows() {
                    dx.row_mut(r)[*start..*start + *len].copy_from_slice(g.row(r));
                }
                acc(*x, dx, grads);
            }
            Op::DropoutMask { x, mask } => {
                let dx = Mat::from_vec(
                    g.rows(),
                    g.cols(),
                    g.data().iter().zip(mask).map(|(gv, k)| gv * k).collect(),
                );
                acc(*x, dx, grads);
            }
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
