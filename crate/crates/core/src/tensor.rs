//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! Define-by-run: a `Tape` is rebuilt for every forward pass, each op records
//! its inputs, and `backward` replays the tape in reverse. Storage is flat
//! row-major `Vec<f64>` with no views or strides; the model's shapes are
//! small and fixed, so simplicity wins. Values are 1-D or 2-D throughout,
//! with the last dimension treated as the feature axis.
//!
//! Shape mismatches are programmer errors and panic with both shapes named.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TensorId(pub usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul { a: TensorId, b: TensorId },
    Add { a: TensorId, b: TensorId },
    Sub { a: TensorId, b: TensorId },
    Mul { a: TensorId, b: TensorId },
    AddBias { x: TensorId, bias: TensorId },
    Sigmoid { x: TensorId },
    Swish { x: TensorId },
    Exp { x: TensorId },
    Log { x: TensorId },
    Scale { x: TensorId, c: f64 },
    Clamp { x: TensorId, lo: f64, hi: f64 },
    SoftmaxLastDim { x: TensorId },
    ConcatLastDim { parts: Vec<TensorId> },
    SliceLastDim { x: TensorId, start: usize, len: usize },
    GatherRows { table: TensorId, ids: Vec<usize> },
    Sum { x: TensorId },
    Mean { x: TensorId },
    MulScalar { x: TensorId, s: TensorId },
}

struct Node {
    data: Vec<f64>,
    shape: Vec<usize>,
    grad: Option<Vec<f64>>,
    op: Op,
}

/// Gradient tape. One per forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Logical (rows, cols) view of a 1-D or 2-D shape, last dim = cols.
fn rows_cols(shape: &[usize]) -> (usize, usize) {
    match shape.len() {
        1 => (1, shape[0]),
        2 => (shape[0], shape[1]),
        _ => panic!("expected 1-D or 2-D shape, got {:?}", shape),
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

    fn push(&mut self, data: Vec<f64>, shape: Vec<usize>, op: Op) -> TensorId {
        debug_assert_eq!(data.len(), numel(&shape));
        let id = TensorId(self.nodes.len());
        self.nodes.push(Node { data, shape, grad: None, op });
        id
    }

    // ── Construction ────────────────────────────────────────────────

    pub fn leaf(&mut self, data: Vec<f64>, shape: &[usize]) -> TensorId {
        assert_eq!(
            data.len(),
            numel(shape),
            "leaf data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        self.push(data, shape.to_vec(), Op::Leaf)
    }

    pub fn scalar(&mut self, x: f64) -> TensorId {
        self.push(vec![x], vec![1], Op::Leaf)
    }

    pub fn zeros(&mut self, shape: &[usize]) -> TensorId {
        self.push(vec![0.0; numel(shape)], shape.to_vec(), Op::Leaf)
    }

    // ── Accessors ───────────────────────────────────────────────────

    pub fn data(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].data
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.nodes[id.0].grad.as_deref()
    }

    /// Value of a one-element tensor.
    pub fn value(&self, id: TensorId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].data.len(), 1);
        self.nodes[id.0].data[0]
    }

    // ── Forward ops ─────────────────────────────────────────────────

    /// Matrix product. Accepts [m,k]x[k,n], and 1-D operands as row ([k])
    /// or column ([k]) vectors: [k]x[k,n] -> [n], [m,k]x[k] -> [m],
    /// [k]x[k] -> [1] (dot product).
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (m, ka) = rows_cols(&sa);
        let (kb, n) = match sb.len() {
            1 => (sb[0], 1),
            2 => (sb[0], sb[1]),
            _ => panic!("matmul shape mismatch: {:?} vs {:?}", sa, sb),
        };
        assert_eq!(ka, kb, "matmul shape mismatch: {:?} vs {:?}", sa, sb);
        let out_shape = match (sa.len(), sb.len()) {
            (2, 2) => vec![m, n],
            (1, 2) => vec![n],
            (2, 1) => vec![m],
            (1, 1) => vec![1],
            _ => unreachable!(),
        };
        let data = matmul_raw(self.data(a), self.data(b), m, ka, n);
        self.push(data, out_shape, Op::MatMul { a, b })
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> TensorId {
        self.binary_elementwise(a, b, Op::Add { a, b }, |x, y| x + y)
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> TensorId {
        self.binary_elementwise(a, b, Op::Sub { a, b }, |x, y| x - y)
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        self.binary_elementwise(a, b, Op::Mul { a, b }, |x, y| x * y)
    }

    fn binary_elementwise(
        &mut self,
        a: TensorId,
        b: TensorId,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> TensorId {
        assert_eq!(
            self.shape(a),
            self.shape(b),
            "elementwise shape mismatch: {:?} vs {:?}",
            self.shape(a),
            self.shape(b)
        );
        let data: Vec<f64> = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| f(x, y)).collect();
        let shape = self.shape(a).to_vec();
        self.push(data, shape, op)
    }

    /// x[..., n] + bias[n], bias broadcast over leading rows.
    pub fn add_bias(&mut self, x: TensorId, bias: TensorId) -> TensorId {
        let (rows, cols) = rows_cols(self.shape(x));
        assert_eq!(
            self.shape(bias),
            &[cols],
            "bias shape mismatch: {:?} vs {:?}",
            self.shape(x),
            self.shape(bias)
        );
        let xd = self.data(x);
        let bd = self.data(bias);
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(xd[r * cols + c] + bd[c]);
            }
        }
        let shape = self.shape(x).to_vec();
        self.push(data, shape, Op::AddBias { x, bias })
    }

    pub fn sigmoid(&mut self, x: TensorId) -> TensorId {
        let data: Vec<f64> = self.data(x).iter().map(|&v| math::sigmoid(v)).collect();
        let shape = self.shape(x).to_vec();
        self.push(data, shape, Op::Sigmoid { x })
    }

    pub fn swish(&mut self, x: TensorId) -> TensorId {
        let data: Vec<f64> = self.data(x).iter().map(|&v| math::swish(v)).collect();
        let shape = self.shape(x).to_vec();
        self.push(data, shape, Op::Swish { x })
    }

    pub fn exp(&mut self, x: TensorId) -> TensorId {
        let data: Vec<f64> = self.data(x).iter().map(|&v| math::exp(v)).collect();
        let shape = self.shape(x).to_vec();
        self.push(data, shape, Op::Exp { x })
    }

    pub fn log(&mut self, x: TensorId) -> TensorId {
        let data: Vec<f64> = self
            .data(x)
            .iter()
            .map(|&v| {
                assert!(v > 0.0, "log domain error: non-positive input {v}");
                math::ln(v)
            })
            .collect();
        let shape = self.shape(x).to_vec();
        self.push(data, shape, Op::Log { x })
    }

    pub fn scale(&mut self, x: TensorId, c: f64) -> TensorId {
        let data: Vec<f64> = self.data(x).iter().map(|&v| c * v).collect();
        let shape = self.shape(x).to_vec();
        self.push(data, shape, Op::Scale { x, c })
    }

    /// Clamp to [lo, hi]; gradient passes through where lo <= x <= hi.
    pub fn clamp(&mut self, x: TensorId, lo: f64, hi: f64) -> TensorId {
        let data: Vec<f64> = self.data(x).iter().map(|&v| v.clamp(lo, hi)).collect();
        let shape = self.shape(x).to_vec();
        self.push(data, shape, Op::Clamp { x, lo, hi })
    }

    /// Numerically stabilized softmax over the last dimension.
    pub fn softmax_lastdim(&mut self, x: TensorId) -> TensorId {
        let (rows, cols) = rows_cols(self.shape(x));
        assert!(cols >= 1, "softmax requires a non-empty last dimension");
        let xd = self.data(x);
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &xd[r * cols..(r + 1) * cols];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for c in 0..cols {
                let e = math::exp(row[c] - max);
                data[r * cols + c] = e;
                sum += e;
            }
            for c in 0..cols {
                data[r * cols + c] /= sum;
            }
        }
        let shape = self.shape(x).to_vec();
        self.push(data, shape, Op::SoftmaxLastDim { x })
    }

    /// Concatenate along the last dimension. Parts must agree on all
    /// leading dimensions.
    pub fn concat_lastdim(&mut self, parts: &[TensorId]) -> TensorId {
        assert!(!parts.is_empty(), "concat of zero parts");
        let ndim = self.shape(parts[0]).len();
        let (rows, _) = rows_cols(self.shape(parts[0]));
        let mut total_cols = 0;
        for &p in parts {
            let sp = self.shape(p);
            assert_eq!(sp.len(), ndim, "concat rank mismatch: {:?} vs {:?}", self.shape(parts[0]), sp);
            let (rp, cp) = rows_cols(sp);
            assert_eq!(
                rp, rows,
                "concat leading-dim mismatch: {:?} vs {:?}",
                self.shape(parts[0]),
                sp
            );
            total_cols += cp;
        }
        let mut data = vec![0.0; rows * total_cols];
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let (_, cp) = rows_cols(self.shape(p));
                let pd = self.data(p);
                data[r * total_cols + off..r * total_cols + off + cp]
                    .copy_from_slice(&pd[r * cp..(r + 1) * cp]);
                off += cp;
            }
        }
        let out_shape = if ndim == 1 { vec![total_cols] } else { vec![rows, total_cols] };
        self.push(data, out_shape, Op::ConcatLastDim { parts: parts.to_vec() })
    }

    /// Slice columns [start, start+len) of the last dimension.
    pub fn slice_lastdim(&mut self, x: TensorId, start: usize, len: usize) -> TensorId {
        let (rows, cols) = rows_cols(self.shape(x));
        assert!(
            start + len <= cols,
            "slice [{start}, {}) out of bounds for shape {:?}",
            start + len,
            self.shape(x)
        );
        let xd = self.data(x);
        let mut data = vec![0.0; rows * len];
        for r in 0..rows {
            data[r * len..(r + 1) * len].copy_from_slice(&xd[r * cols + start..r * cols + start + len]);
        }
        let ndim = self.shape(x).len();
        let out_shape = if ndim == 1 { vec![len] } else { vec![rows, len] };
        self.push(data, out_shape, Op::SliceLastDim { x, start, len })
    }

    /// Gather rows of a [V, d] table -> [L, d]. Gradient scatter-adds back,
    /// so duplicate ids accumulate.
    pub fn gather_rows(&mut self, table: TensorId, ids: &[usize]) -> TensorId {
        let st = self.shape(table);
        assert_eq!(st.len(), 2, "gather_rows expects a 2-D table, got {:?}", st);
        let (v, d) = (st[0], st[1]);
        for &id in ids {
            assert!(id < v, "gather_rows id {id} out of bounds for table {:?}", st);
        }
        let td = self.data(table);
        let mut data = vec![0.0; ids.len() * d];
        for (i, &id) in ids.iter().enumerate() {
            data[i * d..(i + 1) * d].copy_from_slice(&td[id * d..(id + 1) * d]);
        }
        self.push(data, vec![ids.len(), d], Op::GatherRows { table, ids: ids.to_vec() })
    }

    /// Single-row gather -> 1-D [d].
    pub fn gather_row(&mut self, table: TensorId, id: usize) -> TensorId {
        let st = self.shape(table);
        assert_eq!(st.len(), 2, "gather_row expects a 2-D table, got {:?}", st);
        let (v, d) = (st[0], st[1]);
        assert!(id < v, "gather_row id {id} out of bounds for table {:?}", st);
        let data = self.data(table)[id * d..(id + 1) * d].to_vec();
        self.push(data, vec![d], Op::GatherRows { table, ids: vec![id] })
    }

    /// Broadcast multiply by a one-element tensor: out = s[0] * x.
    pub fn mul_scalar(&mut self, x: TensorId, s: TensorId) -> TensorId {
        assert_eq!(
            self.shape(s),
            &[1],
            "mul_scalar expects a one-element scalar, got {:?}",
            self.shape(s)
        );
        let sv = self.data(s)[0];
        let data: Vec<f64> = self.data(x).iter().map(|&v| sv * v).collect();
        let shape = self.shape(x).to_vec();
        self.push(data, shape, Op::MulScalar { x, s })
    }

    pub fn sum(&mut self, x: TensorId) -> TensorId {
        let s: f64 = self.data(x).iter().sum();
        self.push(vec![s], vec![1], Op::Sum { x })
    }

    pub fn mean(&mut self, x: TensorId) -> TensorId {
        let n = self.data(x).len();
        assert!(n > 0, "mean of an empty tensor");
        let s: f64 = self.data(x).iter().sum();
        self.push(vec![s / n as f64], vec![1], Op::Mean { x })
    }

    // ── Backward ────────────────────────────────────────────────────

    /// Reverse pass from a scalar loss. Gradients accumulate, so parameters
    /// used in several places receive the sum of their contributions.
    pub fn backward(&mut self, loss: TensorId) {
        assert_eq!(
            self.nodes[loss.0].data.len(),
            1,
            "backward requires a scalar loss, got shape {:?}",
            self.nodes[loss.0].shape
        );
        for node in &mut self.nodes {
            node.grad = Some(vec![0.0; node.data.len()]);
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);

        for i in (0..self.nodes.len()).rev() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let g = self.nodes[i].grad.clone().expect("grad allocated");
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}
                Op::MatMul { a, b } => {
                    let (m, k) = rows_cols(&self.nodes[a.0].shape);
                    let n = numel(&self.nodes[b.0].shape) / k;
                    // dA = g . B^T, dB = A^T . g
                    let bd = &self.nodes[b.0].data;
                    let ad = &self.nodes[a.0].data;
                    let mut da = vec![0.0; m * k];
                    for r in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for c in 0..n {
                                s += g[r * n + c] * bd[p * n + c];
                            }
                            da[r * k + p] = s;
                        }
                    }
                    let mut db = vec![0.0; k * n];
                    for p in 0..k {
                        for c in 0..n {
                            let mut s = 0.0;
                            for r in 0..m {
                                s += ad[r * k + p] * g[r * n + c];
                            }
                            db[p * n + c] = s;
                        }
                    }
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }
                Op::Add { a, b } => {
                    self.accumulate(a, &g);
                    self.accumulate(b, &g);
                }
                Op::Sub { a, b } => {
                    self.accumulate(a, &g);
                    let neg: Vec<f64> = g.iter().map(|&v| -v).collect();
                    self.accumulate(b, &neg);
                }
                Op::Mul { a, b } => {
                    let da: Vec<f64> = g.iter().zip(&self.nodes[b.0].data).map(|(&gv, &bv)| gv * bv).collect();
                    let db: Vec<f64> = g.iter().zip(&self.nodes[a.0].data).map(|(&gv, &av)| gv * av).collect();
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }
                Op::AddBias { x, bias } => {
                    let cols = self.nodes[bias.0].data.len();
                    let rows = g.len() / cols;
                    let mut db = vec![0.0; cols];
                    for r in 0..rows {
                        for c in 0..cols {
                            db[c] += g[r * cols + c];
                        }
                    }
                    self.accumulate(x, &g);
                    self.accumulate(bias, &db);
                }
                Op::Sigmoid { x } => {
                    let out = &self.nodes[i].data;
                    let dx: Vec<f64> = g.iter().zip(out).map(|(&gv, &s)| gv * s * (1.0 - s)).collect();
                    self.accumulate(x, &dx);
                }
                Op::Swish { x } => {
                    // d/dx x*sig(x) = sig(x) * (1 + x * (1 - sig(x)))
                    let xin = &self.nodes[x.0].data;
                    let dx: Vec<f64> = g
                        .iter()
                        .zip(xin)
                        .map(|(&gv, &v)| {
                            let s = math::sigmoid(v);
                            gv * s * (1.0 + v * (1.0 - s))
                        })
                        .collect();
                    self.accumulate(x, &dx);
                }
                Op::Exp { x } => {
                    let out = &self.nodes[i].data;
                    let dx: Vec<f64> = g.iter().zip(out).map(|(&gv, &e)| gv * e).collect();
                    self.accumulate(x, &dx);
                }
                Op::Log { x } => {
                    let xin = &self.nodes[x.0].data;
                    let dx: Vec<f64> = g.iter().zip(xin).map(|(&gv, &v)| gv / v).collect();
                    self.accumulate(x, &dx);
                }
                Op::Scale { x, c } => {
                    let dx: Vec<f64> = g.iter().map(|&gv| gv * c).collect();
                    self.accumulate(x, &dx);
                }
                Op::Clamp { x, lo, hi } => {
                    let xin = &self.nodes[x.0].data;
                    let dx: Vec<f64> = g
                        .iter()
                        .zip(xin)
                        .map(|(&gv, &v)| if v >= lo && v <= hi { gv } else { 0.0 })
                        .collect();
                    self.accumulate(x, &dx);
                }
                Op::SoftmaxLastDim { x } => {
                    let out = &self.nodes[i].data;
                    let (rows, cols) = rows_cols(&self.nodes[i].shape);
                    let mut dx = vec![0.0; g.len()];
                    for r in 0..rows {
                        let s = &out[r * cols..(r + 1) * cols];
                        let gr = &g[r * cols..(r + 1) * cols];
                        let dot: f64 = s.iter().zip(gr).map(|(&sv, &gv)| sv * gv).sum();
                        for c in 0..cols {
                            dx[r * cols + c] = s[c] * (gr[c] - dot);
                        }
                    }
                    self.accumulate(x, &dx);
                }
                Op::ConcatLastDim { parts } => {
                    let (rows, total_cols) = rows_cols(&self.nodes[i].shape);
                    let mut off = 0;
                    for p in parts {
                        let (_, cp) = rows_cols(&self.nodes[p.0].shape);
                        let mut dp = vec![0.0; rows * cp];
                        for r in 0..rows {
                            dp[r * cp..(r + 1) * cp]
                                .copy_from_slice(&g[r * total_cols + off..r * total_cols + off + cp]);
                        }
                        self.accumulate(p, &dp);
                        off += cp;
                    }
                }
                Op::SliceLastDim { x, start, len } => {
                    let (rows, cols) = rows_cols(&self.nodes[x.0].shape);
                    let mut dx = vec![0.0; rows * cols];
                    for r in 0..rows {
                        dx[r * cols + start..r * cols + start + len]
                            .copy_from_slice(&g[r * len..(r + 1) * len]);
                    }
                    self.accumulate(x, &dx);
                }
                Op::GatherRows { table, ids } => {
                    // scatter-add straight into the table gradient; a dense
                    // temp the size of the table would dwarf everything else
                    let d = self.nodes[table.0].shape[1];
                    let grad = self.nodes[table.0].grad.as_mut().expect("grad allocated");
                    for (r, &id) in ids.iter().enumerate() {
                        for c in 0..d {
                            grad[id * d + c] += g[r * d + c];
                        }
                    }
                }
                Op::Sum { x } => {
                    let n = self.nodes[x.0].data.len();
                    let dx = vec![g[0]; n];
                    self.accumulate(x, &dx);
                }
                Op::Mean { x } => {
                    let n = self.nodes[x.0].data.len();
                    let dx = vec![g[0] / n as f64; n];
                    self.accumulate(x, &dx);
                }
                Op::MulScalar { x, s } => {
                    let sv = self.nodes[s.0].data[0];
                    let dx: Vec<f64> = g.iter().map(|&gv| gv * sv).collect();
                    let ds: f64 = g.iter().zip(&self.nodes[x.0].data).map(|(&gv, &xv)| gv * xv).sum();
                    self.accumulate(x, &dx);
                    self.accumulate(s, &[ds]);
                }
            }
        }
    }

    fn accumulate(&mut self, id: TensorId, src: &[f64]) {
        let grad = self.nodes[id.0].grad.as_mut().expect("grad allocated");
        debug_assert_eq!(grad.len(), src.len());
        for (gv, &sv) in grad.iter_mut().zip(src) {
            *gv += sv;
        }
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for r in 0..m {
        for p in 0..k {
            let av = a[r * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[r * n..(r + 1) * n];
            for c in 0..n {
                orow[c] += av * brow[c];
            }
        }
    }
    out
}
