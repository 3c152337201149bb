//! Minimal reverse-mode automatic differentiation over 2-D tensors.
//!
//! Every value on the tape is a row-major matrix; scalars are 1x1. The op
//! set is exactly what the denoiser architectures need: matmul, broadcast
//! add, elementwise arithmetic, relu, row softmax, row layer norm, grouped
//! row max-pooling, transpose, reshape, and scalar reductions.

/// Row-major 2-D array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor shape/data mismatch");
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn scalar(v: f64) -> Self {
        Self { rows: 1, cols: 1, data: vec![v] }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// (R,C) + broadcast (1,C).
    AddRow(usize, usize),
    Scale(usize, f64),
    Relu(usize),
    SoftmaxRows(usize),
    LayerNormRows(usize),
    /// Max over fixed-size groups of consecutive rows; argmax rows in aux.
    MaxPoolRows(usize),
    Transpose(usize),
    Reshape(usize),
    ConcatCols(usize, usize),
    MeanAll(usize),
    SumAll(usize),
}

struct Node {
    op: Op,
    value: Tensor,
    /// Saved integer context (argmax indices for max-pooling).
    aux: Vec<usize>,
}

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

const LN_EPS: f64 = 1e-5;

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op, value: Tensor, aux: Vec<usize>) -> Var {
        self.nodes.push(Node { op, value, aux });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t, Vec::new())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.cols, tb.rows, "matmul inner dimension mismatch");
        let (m, k, n) = (ta.rows, ta.cols, tb.cols);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let av = ta.data[i * k + p];
                if av == 0.0 {
                    continue;
                }
                let brow = &tb.data[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
        self.push(Op::Matmul(a.0, b.0), Tensor::new(m, n, out), Vec::new())
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!((ta.rows, ta.cols), (tb.rows, tb.cols), "elementwise shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::new(ta.rows, ta.cols, data);
        self.push(op, t, Vec::new())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x - y, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x * y, Op::Mul(a.0, b.0))
    }

    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[bias.0].value);
        assert_eq!(tb.rows, 1, "bias must be a single row");
        assert_eq!(ta.cols, tb.cols, "bias width mismatch");
        let mut data = ta.data.clone();
        for r in 0..ta.rows {
            for c in 0..ta.cols {
                data[r * ta.cols + c] += tb.data[c];
            }
        }
        let t = Tensor::new(ta.rows, ta.cols, data);
        self.push(Op::AddRow(a.0, bias.0), t, Vec::new())
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let ta = &self.nodes[a.0].value;
        let t = Tensor::new(ta.rows, ta.cols, ta.data.iter().map(|&x| x * s).collect());
        self.push(Op::Scale(a.0, s), t, Vec::new())
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let t = Tensor::new(ta.rows, ta.cols, ta.data.iter().map(|&x| x.max(0.0)).collect());
        self.push(Op::Relu(a.0), t, Vec::new())
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let (r, c) = (ta.rows, ta.cols);
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            let row = &ta.data[i * c..(i + 1) * c];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (j, &x) in row.iter().enumerate() {
                let e = (x - m).exp();
                data[i * c + j] = e;
                sum += e;
            }
            for j in 0..c {
                data[i * c + j] /= sum;
            }
        }
        self.push(Op::SoftmaxRows(a.0), Tensor::new(r, c, data), Vec::new())
    }

    pub fn layer_norm_rows(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let (r, c) = (ta.rows, ta.cols);
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            let row = &ta.data[i * c..(i + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|&x| (x - mean).powi(2)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            for j in 0..c {
                data[i * c + j] = (row[j] - mean) * inv;
            }
        }
        self.push(Op::LayerNormRows(a.0), Tensor::new(r, c, data), Vec::new())
    }

    /// Max over consecutive groups of `group` rows. Ties break toward the
    /// earliest row, keeping the result deterministic.
    pub fn max_pool_rows(&mut self, a: Var, group: usize) -> Var {
        let ta = &self.nodes[a.0].value;
        assert!(group > 0 && ta.rows % group == 0, "row count not divisible by group");
        let (out_rows, c) = (ta.rows / group, ta.cols);
        let mut data = vec![0.0; out_rows * c];
        let mut aux = vec![0usize; out_rows * c];
        for o in 0..out_rows {
            for j in 0..c {
                let mut best = f64::NEG_INFINITY;
                let mut best_row = o * group;
                for g in 0..group {
                    let r = o * group + g;
                    let v = ta.data[r * c + j];
                    if v > best {
                        best = v;
                        best_row = r;
                    }
                }
                data[o * c + j] = best;
                aux[o * c + j] = best_row;
            }
        }
        self.push(Op::MaxPoolRows(a.0), Tensor::new(out_rows, c, data), aux)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let (r, c) = (ta.rows, ta.cols);
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = ta.data[i * c + j];
            }
        }
        self.push(Op::Transpose(a.0), Tensor::new(c, r, data), Vec::new())
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let ta = &self.nodes[a.0].value;
        assert_eq!(ta.rows * ta.cols, rows * cols, "reshape element count mismatch");
        let t = Tensor::new(rows, cols, ta.data.clone());
        self.push(Op::Reshape(a.0), t, Vec::new())
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.rows, tb.rows, "concat_cols row count mismatch");
        let (r, ca, cb) = (ta.rows, ta.cols, tb.cols);
        let mut data = Vec::with_capacity(r * (ca + cb));
        for i in 0..r {
            data.extend_from_slice(&ta.data[i * ca..(i + 1) * ca]);
            data.extend_from_slice(&tb.data[i * cb..(i + 1) * cb]);
        }
        self.push(Op::ConcatCols(a.0, b.0), Tensor::new(r, ca + cb, data), Vec::new())
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let n = ta.data.len() as f64;
        let t = Tensor::scalar(ta.data.iter().sum::<f64>() / n);
        self.push(Op::MeanAll(a.0), t, Vec::new())
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let t = Tensor::scalar(ta.data.iter().sum());
        self.push(Op::SumAll(a.0), t, Vec::new())
    }

    /// Backpropagate from a scalar root; returns one gradient tensor per
    /// tape node, indexable by `Var`.
    pub fn backward(&self, root: Var) -> Gradients {
        let rt = &self.nodes[root.0].value;
        assert_eq!((rt.rows, rt.cols), (1, 1), "backward root must be scalar");
        let mut grads: Vec<Tensor> = self
            .nodes
            .iter()
            .map(|n| Tensor::zeros(n.value.rows, n.value.cols))
            .collect();
        grads[root.0].data[0] = 1.0;

        for idx in (0..=root.0).rev() {
            let g = grads[idx].clone();
            if g.data.iter().all(|&x| x == 0.0) {
                continue;
            }
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Matmul(a, b) => {
                    let (ta, tb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    let (m, k, n) = (ta.rows, ta.cols, tb.cols);
                    // dA = g . B^T
                    {
                        let da = &mut grads[*a];
                        for i in 0..m {
                            for p in 0..k {
                                let mut acc = 0.0;
                                for j in 0..n {
                                    acc += g.data[i * n + j] * tb.data[p * n + j];
                                }
                                da.data[i * k + p] += acc;
                            }
                        }
                    }
                    // dB = A^T . g
                    {
                        let db = &mut grads[*b];
                        for p in 0..k {
                            for i in 0..m {
                                let av = ta.data[i * k + p];
                                if av == 0.0 {
                                    continue;
                                }
                                for j in 0..n {
                                    db.data[p * n + j] += av * g.data[i * n + j];
                                }
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    for (d, &gv) in grads[*a].data.iter_mut().zip(&g.data) {
                        *d += gv;
                    }
                    for (d, &gv) in grads[*b].data.iter_mut().zip(&g.data) {
                        *d += gv;
                    }
                }
                Op::Sub(a, b) => {
                    for (d, &gv) in grads[*a].data.iter_mut().zip(&g.data) {
                        *d += gv;
                    }
                    for (d, &gv) in grads[*b].data.iter_mut().zip(&g.data) {
                        *d -= gv;
                    }
                }
                Op::Mul(a, b) => {
                    let tb = self.nodes[*b].value.data.clone();
                    let ta = self.nodes[*a].value.data.clone();
                    for ((d, &gv), &bv) in grads[*a].data.iter_mut().zip(&g.data).zip(&tb) {
                        *d += gv * bv;
                    }
                    for ((d, &gv), &av) in grads[*b].data.iter_mut().zip(&g.data).zip(&ta) {
                        *d += gv * av;
                    }
                }
                Op::AddRow(a, b) => {
                    for (d, &gv) in grads[*a].data.iter_mut().zip(&g.data) {
                        *d += gv;
                    }
                    let c = g.cols;
                    for r in 0..g.rows {
                        for j in 0..c {
                            grads[*b].data[j] += g.data[r * c + j];
                        }
                    }
                }
                Op::Scale(a, s) => {
                    for (d, &gv) in grads[*a].data.iter_mut().zip(&g.data) {
                        *d += gv * s;
                    }
                }
                Op::Relu(a) => {
                    let ta = &self.nodes[*a].value;
                    for ((d, &gv), &x) in grads[*a].data.iter_mut().zip(&g.data).zip(&ta.data) {
                        if x > 0.0 {
                            *d += gv;
                        }
                    }
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let (r, c) = (y.rows, y.cols);
                    let da = &mut grads[*a];
                    for i in 0..r {
                        let mut dot = 0.0;
                        for j in 0..c {
                            dot += g.data[i * c + j] * y.data[i * c + j];
                        }
                        for j in 0..c {
                            da.data[i * c + j] +=
                                y.data[i * c + j] * (g.data[i * c + j] - dot);
                        }
                    }
                }
                Op::LayerNormRows(a) => {
                    let ta = &self.nodes[*a].value;
                    let y = &node.value;
                    let (r, c) = (y.rows, y.cols);
                    let da = &mut grads[*a];
                    for i in 0..r {
                        let row = &ta.data[i * c..(i + 1) * c];
                        let mean = row.iter().sum::<f64>() / c as f64;
                        let var =
                            row.iter().map(|&x| (x - mean).powi(2)).sum::<f64>() / c as f64;
                        let inv = 1.0 / (var + LN_EPS).sqrt();
                        let gmean =
                            (0..c).map(|j| g.data[i * c + j]).sum::<f64>() / c as f64;
                        let gydot = (0..c)
                            .map(|j| g.data[i * c + j] * y.data[i * c + j])
                            .sum::<f64>()
                            / c as f64;
                        for j in 0..c {
                            da.data[i * c + j] += inv
                                * (g.data[i * c + j] - gmean - y.data[i * c + j] * gydot);
                        }
                    }
                }
                Op::MaxPoolRows(a) => {
                    let c = g.cols;
                    let da = &mut grads[*a];
                    for o in 0..g.rows {
                        for j in 0..c {
                            let src = node.aux[o * c + j];
                            da.data[src * c + j] += g.data[o * c + j];
                        }
                    }
                }
                Op::Transpose(a) => {
                    let (r, c) = (g.rows, g.cols);
                    let da = &mut grads[*a];
                    for i in 0..r {
                        for j in 0..c {
                            da.data[j * r + i] += g.data[i * c + j];
                        }
                    }
                }
                Op::Reshape(a) => {
                    for (d, &gv) in grads[*a].data.iter_mut().zip(&g.data) {
                        *d += gv;
                    }
                }
                Op::ConcatCols(a, b) => {
                    let ca = grads[*a].cols;
                    let cb = grads[*b].cols;
                    let c = ca + cb;
                    for i in 0..g.rows {
                        for j in 0..ca {
                            grads[*a].data[i * ca + j] += g.data[i * c + j];
                        }
                        for j in 0..cb {
                            grads[*b].data[i * cb + j] += g.data[i * c + ca + j];
                        }
                    }
                }
                Op::MeanAll(a) => {
                    let n = grads[*a].data.len() as f64;
                    let gv = g.data[0] / n;
                    for d in grads[*a].data.iter_mut() {
                        *d += gv;
                    }
                }
                Op::SumAll(a) => {
                    let gv = g.data[0];
                    for d in grads[*a].data.iter_mut() {
                        *d += gv;
                    }
                }
            }
        }
        Gradients { grads }
    }
}

pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> &Tensor {
        &self.grads[v.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::new(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Finite-difference check of an arbitrary tape program's gradient with
    /// respect to one leaf.
    fn fd_check(build: impl Fn(&mut Tape, Tensor) -> Var, leaf0: Tensor, tol: f64) {
        let mut tape = Tape::new();
        let root = build(&mut tape, leaf0.clone());
        let grads = tape.backward(root);
        let analytic = grads.get(Var(0)).clone();
        let h = 1e-6;
        for i in 0..leaf0.data.len() {
            let mut lp = leaf0.clone();
            lp.data[i] += h;
            let mut lm = leaf0.clone();
            lm.data[i] -= h;
            let mut tp = Tape::new();
            let rp = build(&mut tp, lp);
            let fp = tp.value(rp).data[0];
            let mut tm = Tape::new();
            let rm = build(&mut tm, lm);
            let fm = tm.value(rm).data[0];
            let fd = (fp - fm) / (2.0 * h);
            let scale = fd.abs().max(analytic.data[i].abs()).max(1.0);
            assert!(
                (fd - analytic.data[i]).abs() / scale < tol,
                "grad mismatch at {i}: fd={fd} analytic={}",
                analytic.data[i]
            );
        }
    }

    #[test]
    fn matmul_chain_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = rand_tensor(&mut rng, 4, 3);
        let a0 = rand_tensor(&mut rng, 5, 4);
        fd_check(
            move |tape, a| {
                let a = tape.leaf(a);
                let b = tape.leaf(b.clone());
                let c = tape.matmul(a, b);
                let r = tape.relu(c);
                tape.mean_all(r)
            },
            a0,
            1e-5,
        );
    }

    #[test]
    fn softmax_layernorm_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a0 = rand_tensor(&mut rng, 3, 6);
        fd_check(
            |tape, a| {
                let a = tape.leaf(a);
                let n = tape.layer_norm_rows(a);
                let s = tape.softmax_rows(n);
                let sq = tape.mul(s, s);
                tape.mean_all(sq)
            },
            a0,
            1e-4,
        );
    }

    #[test]
    fn pooling_and_broadcast_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bias = rand_tensor(&mut rng, 1, 5);
        let a0 = rand_tensor(&mut rng, 6, 5);
        fd_check(
            move |tape, a| {
                let a = tape.leaf(a);
                let b = tape.leaf(bias.clone());
                let x = tape.add_row(a, b);
                let p = tape.max_pool_rows(x, 3);
                let t = tape.transpose(p);
                let sq = tape.mul(t, t);
                tape.sum_all(sq)
            },
            a0,
            1e-5,
        );
    }

    #[test]
    fn attention_block_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let wq = rand_tensor(&mut rng, 4, 4);
        let wk = rand_tensor(&mut rng, 4, 4);
        let wv = rand_tensor(&mut rng, 4, 4);
        let x0 = rand_tensor(&mut rng, 5, 4);
        fd_check(
            move |tape, x| {
                let x = tape.leaf(x);
                let wq = tape.leaf(wq.clone());
                let wk = tape.leaf(wk.clone());
                let wv = tape.leaf(wv.clone());
                let q = tape.matmul(x, wq);
                let k = tape.matmul(x, wk);
                let v = tape.matmul(x, wv);
                let kt = tape.transpose(k);
                let scores = tape.matmul(q, kt);
                let scaled = tape.scale(scores, 0.5);
                let attn = tape.softmax_rows(scaled);
                let y = tape.matmul(attn, v);
                let sq = tape.mul(y, y);
                tape.mean_all(sq)
            },
            x0,
            1e-4,
        );
    }
}
