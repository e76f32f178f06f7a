//! Tape-based reverse-mode differentiation over 2-D tensors.
//!
//! A [`Graph`] records every operation in creation order. Because inputs are
//! always created before the nodes that consume them, walking the tape
//! backwards is a valid topological order for the backward pass.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::params::{ParamGrads, ParamId, ParamStore};
use crate::{NnError, Real, Tensor};

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug)]
pub struct Unfold {
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub pad_left: usize,
    pub pad_right: usize,
}

impl Unfold {
    pub fn same(kernel: usize, dilation: usize) -> Self {
        let total = dilation * (kernel - 1);
        Self {
            kernel,
            stride: 1,
            dilation,
            pad_left: total / 2,
            pad_right: total - total / 2,
        }
    }

    pub fn out_len(&self, len: usize) -> usize {
        let span = self.dilation * (self.kernel - 1) + 1;
        let padded = len + self.pad_left + self.pad_right;
        if padded < span {
            0
        } else {
            (padded - span) / self.stride + 1
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Im2Col {
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Im2Col {
    pub fn out_dims(&self) -> (usize, usize) {
        let f = |n: usize| (n + 2 * self.pad - self.kernel) / self.stride + 1;
        (f(self.height), f(self.width))
    }
}

enum Op<R> {
    Leaf,
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, R),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Silu(Var),
    Softplus(Var),
    Exp(Var),
    Log(Var),
    Abs(Var),
    Square(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    LayerNormRows(Var, Vec<R>),
    Sum(Var),
    SumRows(Var),
    SumCols(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    Reshape(Var),
    Unfold1d(Var, Unfold),
    Im2Col2d(Var, Im2Col),
    DepthwiseConv1d(Var, Var, usize),
    Custom(Var, Vec<R>),
}

struct Node<R> {
    value: Tensor<R>,
    op: Op<R>,
    needs_grad: bool,
}

/// Recorded computation. Carries the train/eval flag and the random stream
/// used for dropout and zoneout masks, so a graph built twice from the same
/// seed draws identical masks.
pub struct Graph<'s, R: Real> {
    store: Option<&'s ParamStore<R>>,
    nodes: Vec<Node<R>>,
    params: HashMap<ParamId, Var>,
    train: bool,
    rng: ChaCha8Rng,
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients<R> {
    grads: Vec<Option<Vec<R>>>,
    params: Vec<(ParamId, Var)>,
}

impl<R: Real> Gradients<R> {
    pub fn wrt(&self, v: Var) -> Option<&[R]> {
        self.grads[v.0].as_deref()
    }

    pub fn param(&self, id: ParamId) -> Option<&[R]> {
        self.params
            .iter()
            .find(|(p, _)| *p == id)
            .and_then(|(_, v)| self.wrt(*v))
    }

    /// Dense per-parameter gradients; parameters unreachable from the loss
    /// get zeros.
    pub fn into_param_grads(self, store: &ParamStore<R>) -> ParamGrads<R> {
        let mut out = ParamGrads::zeros(store);
        for (id, v) in &self.params {
            if let Some(g) = &self.grads[v.0] {
                out.accumulate(*id, g);
            }
        }
        out
    }
}

fn acc<R: Real>(slot: &mut Option<Vec<R>>, len: usize) -> &mut Vec<R> {
    slot.get_or_insert_with(|| vec![R::zero(); len])
}

fn sigmoid<R: Real>(x: R) -> R {
    if x >= R::zero() {
        R::one() / (R::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (R::one() + e)
    }
}

fn softplus<R: Real>(x: R) -> R {
    // log(1 + e^x) without overflow
    x.max(R::zero()) + (-(x.abs())).exp().ln_1p()
}

impl<'s, R: Real> Graph<'s, R> {
    /// Graph without parameters (inputs and constants only).
    pub fn new(train: bool, seed: u64) -> Self {
        Self {
            store: None,
            nodes: Vec::new(),
            params: HashMap::new(),
            train,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn with_params(store: &'s ParamStore<R>, train: bool, seed: u64) -> Self {
        Self {
            store: Some(store),
            ..Self::new(train, seed)
        }
    }

    /// Inference graph: no dropout, masks fixed to expectations.
    pub fn eval(store: &'s ParamStore<R>) -> Self {
        Self::with_params(store, false, 0)
    }

    pub fn store(&self) -> &'s ParamStore<R> {
        self.store.expect("graph has no parameter store")
    }

    pub fn is_train(&self) -> bool {
        self.train
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<R>, op: Op<R>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor<R> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn scalar(&self, v: Var) -> R {
        let t = self.value(v);
        assert_eq!(t.shape(), (1, 1), "not a scalar");
        t.data()[0]
    }

    pub fn constant(&mut self, t: Tensor<R>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Leaf that receives a gradient, for differentiating w.r.t. inputs.
    pub fn input(&mut self, t: Tensor<R>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Detached copy: same value, no gradient flows back through it.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.params.get(&id) {
            return *v;
        }
        let v = self.push(self.store().get(id).clone(), Op::Leaf, true);
        self.params.insert(id, v);
        v
    }

    // ---- linear algebra -------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(
            ta.cols(),
            tb.rows(),
            "matmul {:?} x {:?}",
            ta.shape(),
            tb.shape()
        );
        let out = ta.matmul(tb);
        let ng = self.ng(&[a, b]);
        self.push(out, Op::MatMul(a, b), ng)
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.cols(), tb.cols(), "matmul_nt {:?} x {:?}ᵀ", ta.shape(), tb.shape());
        let (m, k, n) = (ta.rows(), ta.cols(), tb.rows());
        let mut c = vec![R::zero(); m * n];
        R::gemm(
            m,
            k,
            n,
            R::one(),
            ta.data(),
            k as isize,
            1,
            tb.data(),
            1,
            k as isize,
            R::zero(),
            &mut c,
            n as isize,
            1,
        );
        let ng = self.ng(&[a, b]);
        self.push(Tensor::new(m, n, c), Op::MatMulNT(a, b), ng)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let ng = self.ng(&[a]);
        self.push(out, Op::Transpose(a), ng)
    }

    // ---- elementwise binary ---------------------------------------------

    fn zip(&self, a: Var, b: Var, name: &str, f: impl Fn(R, R) -> R) -> Tensor<R> {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "{name} shape mismatch");
        Tensor::new(
            ta.rows(),
            ta.cols(),
            ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect(),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip(a, b, "add", |x, y| x + y);
        let ng = self.ng(&[a, b]);
        self.push(out, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip(a, b, "sub", |x, y| x - y);
        let ng = self.ng(&[a, b]);
        self.push(out, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip(a, b, "mul", |x, y| x * y);
        let ng = self.ng(&[a, b]);
        self.push(out, Op::Mul(a, b), ng)
    }

    /// Broadcast a `1×c` row over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (ta, tr) = (self.value(a), self.value(row));
        assert_eq!(tr.shape(), (1, ta.cols()), "add_row shape");
        let c = ta.cols();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + tr.data()[i % c])
            .collect();
        let out = Tensor::new(ta.rows(), c, data);
        let ng = self.ng(&[a, row]);
        self.push(out, Op::AddRow(a, row), ng)
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let (ta, tr) = (self.value(a), self.value(row));
        assert_eq!(tr.shape(), (1, ta.cols()), "mul_row shape");
        let c = ta.cols();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x * tr.data()[i % c])
            .collect();
        let out = Tensor::new(ta.rows(), c, data);
        let ng = self.ng(&[a, row]);
        self.push(out, Op::MulRow(a, row), ng)
    }

    /// Scale row `r` of `a` by `col[r]` (`col` is `rows×1`).
    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let (ta, tc) = (self.value(a), self.value(col));
        assert_eq!(tc.shape(), (ta.rows(), 1), "mul_col shape");
        let c = ta.cols();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x * tc.data()[i / c])
            .collect();
        let out = Tensor::new(ta.rows(), c, data);
        let ng = self.ng(&[a, col]);
        self.push(out, Op::MulCol(a, col), ng)
    }

    pub fn scale(&mut self, a: Var, s: R) -> Var {
        let out = self.value(a).map(|x| x * s);
        let ng = self.ng(&[a]);
        self.push(out, Op::Scale(a, s), ng)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -R::one())
    }

    pub fn add_scalar(&mut self, a: Var, s: R) -> Var {
        let out = self.value(a).map(|x| x + s);
        let ng = self.ng(&[a]);
        self.push(out, Op::AddScalar(a), ng)
    }

    // ---- elementwise unary ----------------------------------------------

    fn unary(&mut self, a: Var, f: impl Fn(R) -> R, op: Op<R>) -> Var {
        let out = self.value(a).map(f);
        let ng = self.ng(&[a]);
        self.push(out, op, ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.tanh(), Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(R::zero()), Op::Relu(a))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * sigmoid(x), Op::Silu(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, softplus, Op::Softplus(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.exp(), Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.ln(), Op::Log(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.abs(), Op::Abs(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    // ---- row-wise normalizations ---------------------------------------

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let c = t.cols();
        let mut data = t.data().to_vec();
        for row in data.chunks_mut(c.max(1)) {
            let m = row.iter().copied().fold(R::neg_infinity(), R::max);
            let mut s = R::zero();
            for x in row.iter_mut() {
                *x = (*x - m).exp();
                s += *x;
            }
            for x in row.iter_mut() {
                *x /= s;
            }
        }
        let out = Tensor::new(t.rows(), c, data);
        let ng = self.ng(&[a]);
        self.push(out, Op::SoftmaxRows(a), ng)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let c = t.cols();
        let mut data = t.data().to_vec();
        for row in data.chunks_mut(c.max(1)) {
            let m = row.iter().copied().fold(R::neg_infinity(), R::max);
            let lse = m + row.iter().map(|&x| (x - m).exp()).sum::<R>().ln();
            for x in row.iter_mut() {
                *x -= lse;
            }
        }
        let out = Tensor::new(t.rows(), c, data);
        let ng = self.ng(&[a]);
        self.push(out, Op::LogSoftmaxRows(a), ng)
    }

    /// Normalize each row to zero mean and unit variance (no affine part).
    pub fn layer_norm_rows(&mut self, a: Var, eps: f64) -> Var {
        let t = self.value(a);
        let c = t.cols();
        let n = R::from_usize(c).unwrap();
        let eps = R::from_f64_lossy(eps);
        let mut data = t.data().to_vec();
        let mut inv_std = Vec::with_capacity(t.rows());
        for row in data.chunks_mut(c) {
            let mean = row.iter().copied().sum::<R>() / n;
            let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<R>() / n;
            let is = R::one() / (var + eps).sqrt();
            for x in row.iter_mut() {
                *x = (*x - mean) * is;
            }
            inv_std.push(is);
        }
        let out = Tensor::new(t.rows(), c, data);
        let ng = self.ng(&[a]);
        self.push(out, Op::LayerNormRows(a, inv_std), ng)
    }

    // ---- reductions -----------------------------------------------------

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum::<R>();
        let ng = self.ng(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len();
        let s = self.sum(a);
        self.scale(s, R::one() / R::from_usize(n.max(1)).unwrap())
    }

    /// Sum over rows, giving `1×cols`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut out = vec![R::zero(); t.cols()];
        for r in 0..t.rows() {
            for (o, &x) in out.iter_mut().zip(t.row(r)) {
                *o += x;
            }
        }
        let out = Tensor::new(1, t.cols(), out);
        let ng = self.ng(&[a]);
        self.push(out, Op::SumRows(a), ng)
    }

    /// Sum over columns, giving `rows×1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let out: Vec<R> = (0..t.rows()).map(|r| t.row(r).iter().copied().sum()).collect();
        let out = Tensor::new(t.rows(), 1, out);
        let ng = self.ng(&[a]);
        self.push(out, Op::SumCols(a), ng)
    }

    // ---- structural -----------------------------------------------------

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let t = self.value(p);
                assert_eq!(t.rows(), rows, "concat_cols row mismatch");
                data.extend_from_slice(t.row(r));
            }
        }
        let ng = self.ng(parts);
        self.push(
            Tensor::new(rows, cols, data),
            Op::ConcatCols(parts.to_vec()),
            ng,
        )
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.cols(), cols, "concat_rows col mismatch");
            data.extend_from_slice(t.data());
            rows += t.rows();
        }
        let ng = self.ng(parts);
        self.push(
            Tensor::new(rows, cols, data),
            Op::ConcatRows(parts.to_vec()),
            ng,
        )
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let t = self.value(a);
        assert!(start + len <= t.cols(), "slice_cols out of range");
        let mut data = Vec::with_capacity(t.rows() * len);
        for r in 0..t.rows() {
            data.extend_from_slice(&t.row(r)[start..start + len]);
        }
        let out = Tensor::new(t.rows(), len, data);
        let ng = self.ng(&[a]);
        self.push(out, Op::SliceCols(a, start), ng)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let t = self.value(a);
        assert!(start + len <= t.rows(), "slice_rows out of range");
        let out = t.slice_rows(start, len);
        let ng = self.ng(&[a]);
        self.push(out, Op::SliceRows(a, start), ng)
    }

    /// Output row `i` is row `index[i]` of `a`. Used for embeddings,
    /// duration up-sampling and nearest-neighbour resizing.
    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Var {
        let t = self.value(a);
        let mut data = Vec::with_capacity(index.len() * t.cols());
        for &i in index {
            assert!(i < t.rows(), "gather index {i} out of {} rows", t.rows());
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor::new(index.len(), t.cols(), data);
        let ng = self.ng(&[a]);
        self.push(out, Op::GatherRows(a, index.to_vec()), ng)
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let out = self.value(a).clone().reshape(rows, cols);
        let ng = self.ng(&[a]);
        self.push(out, Op::Reshape(a), ng)
    }

    /// Sliding windows over rows: output row `t` holds the `kernel` input rows
    /// `t·stride + j·dilation − pad_left` side by side (zeros outside).
    pub fn unfold1d(&mut self, a: Var, u: Unfold) -> Var {
        let t = self.value(a);
        let (len, c) = t.shape();
        let out_len = u.out_len(len);
        let width = u.kernel * c;
        let mut data = vec![R::zero(); out_len * width];
        for o in 0..out_len {
            for j in 0..u.kernel {
                let src = (o * u.stride + j * u.dilation) as isize - u.pad_left as isize;
                if src >= 0 && (src as usize) < len {
                    let dst = o * width + j * c;
                    data[dst..dst + c].copy_from_slice(t.row(src as usize));
                }
            }
        }
        let out = Tensor::new(out_len, width, data);
        let ng = self.ng(&[a]);
        self.push(out, Op::Unfold1d(a, u), ng)
    }

    /// 2-D patches over a channels-last `(h·w)×c` map.
    pub fn im2col2d(&mut self, a: Var, p: Im2Col) -> Var {
        let t = self.value(a);
        let c = t.cols();
        assert_eq!(t.rows(), p.height * p.width, "im2col spatial size");
        let (oh, ow) = p.out_dims();
        let width = p.kernel * p.kernel * c;
        let mut data = vec![R::zero(); oh * ow * width];
        for oy in 0..oh {
            for ox in 0..ow {
                let orow = (oy * ow + ox) * width;
                for ky in 0..p.kernel {
                    let iy = (oy * p.stride + ky) as isize - p.pad as isize;
                    if iy < 0 || iy as usize >= p.height {
                        continue;
                    }
                    for kx in 0..p.kernel {
                        let ix = (ox * p.stride + kx) as isize - p.pad as isize;
                        if ix < 0 || ix as usize >= p.width {
                            continue;
                        }
                        let src = iy as usize * p.width + ix as usize;
                        let dst = orow + (ky * p.kernel + kx) * c;
                        data[dst..dst + c].copy_from_slice(t.row(src));
                    }
                }
            }
        }
        let out = Tensor::new(oh * ow, width, data);
        let ng = self.ng(&[a]);
        self.push(out, Op::Im2Col2d(a, p), ng)
    }

    /// Per-channel convolution over rows; `w` is `kernel×channels`, output
    /// keeps the input length.
    pub fn depthwise_conv1d(&mut self, a: Var, w: Var, pad_left: usize) -> Var {
        let (tx, tw) = (self.value(a), self.value(w));
        let (len, c) = tx.shape();
        assert_eq!(tw.cols(), c, "depthwise channel mismatch");
        let k = tw.rows();
        let mut data = vec![R::zero(); len * c];
        for t in 0..len {
            let out = &mut data[t * c..(t + 1) * c];
            for j in 0..k {
                let src = (t + j) as isize - pad_left as isize;
                if src < 0 || src as usize >= len {
                    continue;
                }
                for ((o, &x), &wv) in out.iter_mut().zip(tx.row(src as usize)).zip(tw.row(j)) {
                    *o += x * wv;
                }
            }
        }
        let out = Tensor::new(len, c, data);
        let ng = self.ng(&[a, w]);
        self.push(out, Op::DepthwiseConv1d(a, w, pad_left), ng)
    }

    /// Scalar computed outside the graph together with its gradient w.r.t.
    /// `input` (e.g. a dynamic-programming loss).
    pub fn custom_scalar(&mut self, input: Var, value: R, grad: Vec<R>) -> Var {
        assert_eq!(grad.len(), self.value(input).len(), "custom gradient size");
        let ng = self.ng(&[input]);
        self.push(Tensor::scalar(value), Op::Custom(input, grad), ng)
    }

    // ---- stochastic helpers ---------------------------------------------

    /// Inverted dropout; identity outside training.
    pub fn dropout(&mut self, a: Var, p: f64) -> Var {
        if !self.train || p <= 0.0 {
            return a;
        }
        let (r, c) = self.shape(a);
        let keep = R::from_f64_lossy(1.0 / (1.0 - p));
        let mask: Vec<R> = (0..r * c)
            .map(|_| {
                if self.rng.random::<f64>() < p {
                    R::zero()
                } else {
                    keep
                }
            })
            .collect();
        let m = self.constant(Tensor::new(r, c, mask));
        self.mul(a, m)
    }

    // ---- backward -------------------------------------------------------

    pub fn backward(&self, loss: Var) -> Result<Gradients<R>, NnError> {
        let (rows, cols) = self.shape(loss);
        if (rows, cols) != (1, 1) {
            return Err(NnError::NonScalarLoss { rows, cols });
        }
        let mut grads: Vec<Option<Vec<R>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![R::one()]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        let params = self.params.iter().map(|(&p, &v)| (p, v)).collect();
        Ok(Gradients { grads, params })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&self, i: usize, g: &[R], grads: &mut [Option<Vec<R>>]) {
        let node = &self.nodes[i];
        let y = &node.value;
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if self.wants(*a) {
                    // ga += g · bᵀ
                    let ga = acc(&mut grads[a.0], m * k);
                    R::gemm(m, n, k, R::one(), g, n as isize, 1, tb.data(), 1, n as isize, R::one(), ga, k as isize, 1);
                }
                if self.wants(*b) {
                    // gb += aᵀ · g
                    let gb = acc(&mut grads[b.0], k * n);
                    R::gemm(k, m, n, R::one(), ta.data(), 1, k as isize, g, n as isize, 1, R::one(), gb, n as isize, 1);
                }
            }
            Op::MatMulNT(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.rows());
                if self.wants(*a) {
                    // ga += g · b
                    let ga = acc(&mut grads[a.0], m * k);
                    R::gemm(m, n, k, R::one(), g, n as isize, 1, tb.data(), k as isize, 1, R::one(), ga, k as isize, 1);
                }
                if self.wants(*b) {
                    // gb += gᵀ · a
                    let gb = acc(&mut grads[b.0], n * k);
                    R::gemm(n, m, k, R::one(), g, 1, n as isize, ta.data(), k as isize, 1, R::one(), gb, k as isize, 1);
                }
            }
            Op::Transpose(a) => {
                let (r, c) = (y.rows(), y.cols());
                let ga = acc(&mut grads[a.0], r * c);
                for rr in 0..r {
                    for cc in 0..c {
                        ga[cc * r + rr] += g[rr * c + cc];
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if self.wants(*v) {
                        let gv = acc(&mut grads[v.0], g.len());
                        gv.iter_mut().zip(g).for_each(|(o, &x)| *o += x);
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    let ga = acc(&mut grads[a.0], g.len());
                    ga.iter_mut().zip(g).for_each(|(o, &x)| *o += x);
                }
                if self.wants(*b) {
                    let gb = acc(&mut grads[b.0], g.len());
                    gb.iter_mut().zip(g).for_each(|(o, &x)| *o -= x);
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a).data(), val(*b).data());
                if self.wants(*a) {
                    let ga = acc(&mut grads[a.0], g.len());
                    for ((o, &x), &bv) in ga.iter_mut().zip(g).zip(tb) {
                        *o += x * bv;
                    }
                }
                if self.wants(*b) {
                    let gb = acc(&mut grads[b.0], g.len());
                    for ((o, &x), &av) in gb.iter_mut().zip(g).zip(ta) {
                        *o += x * av;
                    }
                }
            }
            Op::AddRow(a, row) => {
                let c = y.cols();
                if self.wants(*a) {
                    let ga = acc(&mut grads[a.0], g.len());
                    ga.iter_mut().zip(g).for_each(|(o, &x)| *o += x);
                }
                if self.wants(*row) {
                    let gr = acc(&mut grads[row.0], c);
                    for (i, &x) in g.iter().enumerate() {
                        gr[i % c] += x;
                    }
                }
            }
            Op::MulRow(a, row) => {
                let c = y.cols();
                let (ta, tr) = (val(*a).data(), val(*row).data());
                if self.wants(*a) {
                    let ga = acc(&mut grads[a.0], g.len());
                    for (i, &x) in g.iter().enumerate() {
                        ga[i] += x * tr[i % c];
                    }
                }
                if self.wants(*row) {
                    let gr = acc(&mut grads[row.0], c);
                    for (i, &x) in g.iter().enumerate() {
                        gr[i % c] += x * ta[i];
                    }
                }
            }
            Op::MulCol(a, col) => {
                let c = y.cols();
                let (ta, tc) = (val(*a).data(), val(*col).data());
                if self.wants(*a) {
                    let ga = acc(&mut grads[a.0], g.len());
                    for (i, &x) in g.iter().enumerate() {
                        ga[i] += x * tc[i / c];
                    }
                }
                if self.wants(*col) {
                    let gc = acc(&mut grads[col.0], y.rows());
                    for (i, &x) in g.iter().enumerate() {
                        gc[i / c] += x * ta[i];
                    }
                }
            }
            Op::Scale(a, s) => {
                let ga = acc(&mut grads[a.0], g.len());
                ga.iter_mut().zip(g).for_each(|(o, &x)| *o += x * *s);
            }
            Op::AddScalar(a) | Op::Reshape(a) => {
                let ga = acc(&mut grads[a.0], g.len());
                ga.iter_mut().zip(g).for_each(|(o, &x)| *o += x);
            }
            Op::Tanh(a) => self.unary_back(*a, g, grads, |_, y| R::one() - y * y, y),
            Op::Sigmoid(a) => self.unary_back(*a, g, grads, |_, y| y * (R::one() - y), y),
            Op::Relu(a) => self.unary_back(
                *a,
                g,
                grads,
                |x, _| if x > R::zero() { R::one() } else { R::zero() },
                y,
            ),
            Op::Silu(a) => self.unary_back(
                *a,
                g,
                grads,
                |x, _| {
                    let s = sigmoid(x);
                    s + x * s * (R::one() - s)
                },
                y,
            ),
            Op::Softplus(a) => self.unary_back(*a, g, grads, |x, _| sigmoid(x), y),
            Op::Exp(a) => self.unary_back(*a, g, grads, |_, y| y, y),
            Op::Log(a) => self.unary_back(*a, g, grads, |x, _| R::one() / x, y),
            Op::Abs(a) => self.unary_back(
                *a,
                g,
                grads,
                |x, _| {
                    if x > R::zero() {
                        R::one()
                    } else if x < R::zero() {
                        -R::one()
                    } else {
                        R::zero()
                    }
                },
                y,
            ),
            Op::Square(a) => {
                self.unary_back(*a, g, grads, |x, _| (R::one() + R::one()) * x, y)
            }
            Op::SoftmaxRows(a) => {
                let c = y.cols();
                let ga = acc(&mut grads[a.0], g.len());
                for ((gr, yr), out) in g.chunks(c).zip(y.data().chunks(c)).zip(ga.chunks_mut(c)) {
                    let dot: R = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                    for ((o, &gv), &yv) in out.iter_mut().zip(gr).zip(yr) {
                        *o += yv * (gv - dot);
                    }
                }
            }
            Op::LogSoftmaxRows(a) => {
                let c = y.cols();
                let ga = acc(&mut grads[a.0], g.len());
                for ((gr, yr), out) in g.chunks(c).zip(y.data().chunks(c)).zip(ga.chunks_mut(c)) {
                    let s: R = gr.iter().copied().sum();
                    for ((o, &gv), &yv) in out.iter_mut().zip(gr).zip(yr) {
                        *o += gv - yv.exp() * s;
                    }
                }
            }
            Op::LayerNormRows(a, inv_std) => {
                let c = y.cols();
                let n = R::from_usize(c).unwrap();
                let ga = acc(&mut grads[a.0], g.len());
                for (r, ((gr, yr), out)) in g
                    .chunks(c)
                    .zip(y.data().chunks(c))
                    .zip(ga.chunks_mut(c))
                    .enumerate()
                {
                    let mg = gr.iter().copied().sum::<R>() / n;
                    let mgy = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum::<R>() / n;
                    for ((o, &gv), &yv) in out.iter_mut().zip(gr).zip(yr) {
                        *o += inv_std[r] * (gv - mg - yv * mgy);
                    }
                }
            }
            Op::Sum(a) => {
                let n = val(*a).len();
                let ga = acc(&mut grads[a.0], n);
                ga.iter_mut().for_each(|o| *o += g[0]);
            }
            Op::SumRows(a) => {
                let ta = val(*a);
                let c = ta.cols();
                let ga = acc(&mut grads[a.0], ta.len());
                for (i, o) in ga.iter_mut().enumerate() {
                    *o += g[i % c];
                }
            }
            Op::SumCols(a) => {
                let ta = val(*a);
                let c = ta.cols();
                let ga = acc(&mut grads[a.0], ta.len());
                for (i, o) in ga.iter_mut().enumerate() {
                    *o += g[i / c];
                }
            }
            Op::ConcatCols(parts) => {
                let total = y.cols();
                let mut offset = 0;
                for p in parts {
                    let pc = val(*p).cols();
                    if self.wants(*p) {
                        let gp = acc(&mut grads[p.0], y.rows() * pc);
                        for r in 0..y.rows() {
                            let src = &g[r * total + offset..r * total + offset + pc];
                            gp[r * pc..(r + 1) * pc]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(o, &x)| *o += x);
                        }
                    }
                    offset += pc;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = val(*p).len();
                    if self.wants(*p) {
                        let gp = acc(&mut grads[p.0], n);
                        gp.iter_mut()
                            .zip(&g[offset..offset + n])
                            .for_each(|(o, &x)| *o += x);
                    }
                    offset += n;
                }
            }
            Op::SliceCols(a, start) => {
                let ta = val(*a);
                let (c, len) = (ta.cols(), y.cols());
                let ga = acc(&mut grads[a.0], ta.len());
                for r in 0..y.rows() {
                    ga[r * c + start..r * c + start + len]
                        .iter_mut()
                        .zip(&g[r * len..(r + 1) * len])
                        .for_each(|(o, &x)| *o += x);
                }
            }
            Op::SliceRows(a, start) => {
                let ta = val(*a);
                let c = ta.cols();
                let ga = acc(&mut grads[a.0], ta.len());
                ga[start * c..start * c + g.len()]
                    .iter_mut()
                    .zip(g)
                    .for_each(|(o, &x)| *o += x);
            }
            Op::GatherRows(a, index) => {
                let ta = val(*a);
                let c = ta.cols();
                let ga = acc(&mut grads[a.0], ta.len());
                for (o, &src) in index.iter().enumerate() {
                    ga[src * c..(src + 1) * c]
                        .iter_mut()
                        .zip(&g[o * c..(o + 1) * c])
                        .for_each(|(d, &x)| *d += x);
                }
            }
            Op::Unfold1d(a, u) => {
                let ta = val(*a);
                let (len, c) = ta.shape();
                let width = u.kernel * c;
                let ga = acc(&mut grads[a.0], ta.len());
                for o in 0..y.rows() {
                    for j in 0..u.kernel {
                        let src = (o * u.stride + j * u.dilation) as isize - u.pad_left as isize;
                        if src >= 0 && (src as usize) < len {
                            let s = src as usize * c;
                            let d = o * width + j * c;
                            ga[s..s + c]
                                .iter_mut()
                                .zip(&g[d..d + c])
                                .for_each(|(t, &x)| *t += x);
                        }
                    }
                }
            }
            Op::Im2Col2d(a, p) => {
                let ta = val(*a);
                let c = ta.cols();
                let (oh, ow) = p.out_dims();
                let width = p.kernel * p.kernel * c;
                let ga = acc(&mut grads[a.0], ta.len());
                for oy in 0..oh {
                    for ox in 0..ow {
                        let orow = (oy * ow + ox) * width;
                        for ky in 0..p.kernel {
                            let iy = (oy * p.stride + ky) as isize - p.pad as isize;
                            if iy < 0 || iy as usize >= p.height {
                                continue;
                            }
                            for kx in 0..p.kernel {
                                let ix = (ox * p.stride + kx) as isize - p.pad as isize;
                                if ix < 0 || ix as usize >= p.width {
                                    continue;
                                }
                                let s = (iy as usize * p.width + ix as usize) * c;
                                let d = orow + (ky * p.kernel + kx) * c;
                                ga[s..s + c]
                                    .iter_mut()
                                    .zip(&g[d..d + c])
                                    .for_each(|(t, &x)| *t += x);
                            }
                        }
                    }
                }
            }
            Op::DepthwiseConv1d(a, w, pad_left) => {
                let (tx, tw) = (val(*a), val(*w));
                let (len, c) = tx.shape();
                let k = tw.rows();
                if self.wants(*a) {
                    let ga = acc(&mut grads[a.0], tx.len());
                    for t in 0..len {
                        for j in 0..k {
                            let src = (t + j) as isize - *pad_left as isize;
                            if src < 0 || src as usize >= len {
                                continue;
                            }
                            let s = src as usize * c;
                            for ch in 0..c {
                                ga[s + ch] += g[t * c + ch] * tw.data()[j * c + ch];
                            }
                        }
                    }
                }
                if self.wants(*w) {
                    let gw = acc(&mut grads[w.0], tw.len());
                    for t in 0..len {
                        for j in 0..k {
                            let src = (t + j) as isize - *pad_left as isize;
                            if src < 0 || src as usize >= len {
                                continue;
                            }
                            let s = src as usize * c;
                            for ch in 0..c {
                                gw[j * c + ch] += g[t * c + ch] * tx.data()[s + ch];
                            }
                        }
                    }
                }
            }
            Op::Custom(a, grad) => {
                let ga = acc(&mut grads[a.0], grad.len());
                ga.iter_mut().zip(grad).for_each(|(o, &x)| *o += g[0] * x);
            }
        }
    }

    fn unary_back(
        &self,
        a: Var,
        g: &[R],
        grads: &mut [Option<Vec<R>>],
        d: impl Fn(R, R) -> R,
        y: &Tensor<R>,
    ) {
        let x = self.nodes[a.0].value.data();
        let ga = acc(&mut grads[a.0], g.len());
        for (((o, &gv), &xv), &yv) in ga.iter_mut().zip(g).zip(x).zip(y.data()) {
            *o += gv * d(xv, yv);
        }
    }
}
