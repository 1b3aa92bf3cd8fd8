//! Tape-based reverse-mode differentiation.
//!
//! Every operator appends a node holding its output value plus whatever the
//! backward rule needs. [`Graph::backward`] walks the tape in reverse and
//! accumulates gradients into leaf nodes only.

use std::collections::HashMap;

use crate::kernels::conv::{self, ConvGeom, ConvGrads};
use crate::kernels::norm::{self, NormGrads};
use crate::kernels::resample::{self, Tap};
use crate::params::{ParamId, ParamStore};
use crate::scalar::{matmul, Scalar};
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddScalar(Var),
    MulScalar(Var, T),
    Relu(Var),
    Sigmoid(Var),
    SumPerSample(Var),
    Mean(Var),
    BceWithLogits(Var, Tensor<T>),
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
        batch: usize,
        out_c: usize,
        cols: Vec<T>,
    },
    Norm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        batch_stats: bool,
    },
    AvgPool2(Var),
    Resize {
        x: Var,
        rows: Vec<Tap>,
        cols: Vec<Tap>,
    },
    Concat(Vec<Var>),
    ConcatBatch(Vec<Var>),
    SliceChannels {
        x: Var,
        start: usize,
    },
    SliceBatch {
        x: Var,
        start: usize,
    },
    ScaleChannels(Var, Var),
    GlobalAvgPool(Var),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    CosineRows {
        a: Var,
        b: Var,
        norm_a: Vec<T>,
        norm_b: Vec<T>,
        valid: Vec<bool>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Batch-normalisation statistics observed during a training-mode forward pass.
#[derive(Clone, Debug)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Biased (population) variance.
    pub var: Vec<T>,
    pub count: usize,
}

pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    param_vars: HashMap<ParamId, Var>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
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

    /// Constant leaf (no gradient).
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Free leaf that receives a gradient.
    pub fn variable(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf bound to a stored parameter. Repeated calls return the same node,
    /// so weights used by several branches accumulate a single gradient.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Leaf, store.is_trainable(id));
        self.param_vars.insert(id, v);
        v
    }

    fn zip_same(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "elementwise shape mismatch");
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(ta.shape(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_same(a, b, |x, y| x + y);
        let ng = self.ng(&[a, b]);
        self.push(v, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_same(a, b, |x, y| x - y);
        let ng = self.ng(&[a, b]);
        self.push(v, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_same(a, b, |x, y| x * y);
        let ng = self.ng(&[a, b]);
        self.push(v, Op::Mul(a, b), ng)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_same(a, b, |x, y| x / y);
        let ng = self.ng(&[a, b]);
        self.push(v, Op::Div(a, b), ng)
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        let v = self.value(a).map(|x| x + c);
        let ng = self.ng(&[a]);
        self.push(v, Op::AddScalar(a), ng)
    }

    pub fn mul_scalar(&mut self, a: Var, c: T) -> Var {
        let v = self.value(a).map(|x| x * c);
        let ng = self.ng(&[a]);
        self.push(v, Op::MulScalar(a, c), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        let ng = self.ng(&[a]);
        self.push(v, Op::Relu(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        let ng = self.ng(&[a]);
        self.push(v, Op::Sigmoid(a), ng)
    }

    /// Sums everything but the leading axis: `(B, ...) -> (B)`.
    pub fn sum_per_sample(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let b = t.shape()[0];
        let per = t.len() / b;
        let data = (0..b)
            .map(|i| t.data()[i * per..(i + 1) * per].iter().copied().sum())
            .collect();
        let v = Tensor::from_vec(&[b], data).expect("shape");
        let ng = self.ng(&[a]);
        self.push(v, Op::SumPerSample(a), ng)
    }

    /// Mean of all elements, as a one-element tensor.
    pub fn mean(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).mean());
        let ng = self.ng(&[a]);
        self.push(v, Op::Mean(a), ng)
    }

    /// Elementwise binary cross-entropy of `sigmoid(logits)` against a constant target,
    /// evaluated in the overflow-free form `max(x,0) - x·t + ln(1 + e^-|x|)`.
    pub fn bce_with_logits(&mut self, logits: Var, target: &Tensor<T>) -> Var {
        let x = self.value(logits);
        assert_eq!(x.shape(), target.shape(), "bce shape mismatch");
        let data = x
            .data()
            .iter()
            .zip(target.data())
            .map(|(&x, &t)| x.max(T::zero()) - x * t + (-x.abs()).exp().ln_1p())
            .collect();
        let v = Tensor::from_vec(x.shape(), data).expect("shape");
        let ng = self.ng(&[logits]);
        self.push(v, Op::BceWithLogits(logits, target.clone()), ng)
    }

    /// Stride-1 convolution, NCHW input, weight `(out, in, k, k)`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, padding: usize) -> Var {
        let (batch, in_c, h, wd) = self.value(x).dims4().expect("conv input must be NCHW");
        let (out_c, w_in, k, k2) = self.value(w).dims4().expect("conv weight must be rank 4");
        assert_eq!(w_in, in_c, "conv channel mismatch");
        assert_eq!(k, k2, "square kernels only");
        let geom = ConvGeom {
            in_c,
            h,
            w: wd,
            k,
            pad: padding,
        };
        let bias = b.map(|b| self.value(b).data());
        let (out, cols) = conv::forward(&geom, batch, out_c, self.value(x).data(), self.value(w).data(), bias);
        let v = Tensor::from_vec(&[batch, out_c, geom.out_h(), geom.out_w()], out).expect("shape");
        let mut deps = vec![x, w];
        deps.extend(b);
        let ng = self.ng(&deps);
        // Column matrices are only needed for the weight gradient.
        let cols = if self.needs_grad(w) { cols } else { Vec::new() };
        self.push(
            v,
            Op::Conv {
                x,
                w,
                b,
                geom,
                batch,
                out_c,
                cols,
            },
            ng,
        )
    }

    /// Training-mode batch normalisation: normalises with the batch statistics
    /// and returns them so the caller can update running averages.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> (Var, BatchStats<T>) {
        let (b, c, h, w) = self.value(x).dims4().expect("norm input must be NCHW");
        let plane = h * w;
        let (mean, var) = norm::channel_stats(self.value(x).data(), b, c, plane);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + T::of(eps)).sqrt()).collect();
        let (y, xhat) = norm::normalize(
            self.value(x).data(),
            b,
            c,
            plane,
            &mean,
            &inv_std,
            self.value(gamma).data(),
            self.value(beta).data(),
        );
        let v = Tensor::from_vec(&[b, c, h, w], y).expect("shape");
        let ng = self.ng(&[x, gamma, beta]);
        let out = self.push(
            v,
            Op::Norm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats: true,
            },
            ng,
        );
        (
            out,
            BatchStats {
                mean,
                var,
                count: b * plane,
            },
        )
    }

    /// Inference-mode batch normalisation with fixed statistics.
    pub fn batch_norm_eval(&mut self, x: Var, gamma: Var, beta: Var, mean: &[T], var: &[T], eps: f64) -> Var {
        let (b, c, h, w) = self.value(x).dims4().expect("norm input must be NCHW");
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + T::of(eps)).sqrt()).collect();
        let (y, xhat) = norm::normalize(
            self.value(x).data(),
            b,
            c,
            h * w,
            mean,
            &inv_std,
            self.value(gamma).data(),
            self.value(beta).data(),
        );
        let v = Tensor::from_vec(&[b, c, h, w], y).expect("shape");
        let ng = self.ng(&[x, gamma, beta]);
        self.push(
            v,
            Op::Norm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats: false,
            },
            ng,
        )
    }

    /// 2×2 average pooling with stride 2.
    pub fn avg_pool2(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (b, c, h, w) = t.dims4().expect("pool input must be NCHW");
        assert!(h % 2 == 0 && w % 2 == 0, "pooling needs even spatial dims");
        let (oh, ow) = (h / 2, w / 2);
        let quarter = T::of(0.25);
        let src = t.data();
        let mut out = vec![T::zero(); b * c * oh * ow];
        for p in 0..b * c {
            let s = &src[p * h * w..(p + 1) * h * w];
            let d = &mut out[p * oh * ow..(p + 1) * oh * ow];
            for y in 0..oh {
                for xx in 0..ow {
                    let i = 2 * y * w + 2 * xx;
                    d[y * ow + xx] = (s[i] + s[i + 1] + s[i + w] + s[i + w + 1]) * quarter;
                }
            }
        }
        let v = Tensor::from_vec(&[b, c, oh, ow], out).expect("shape");
        let ng = self.ng(&[x]);
        self.push(v, Op::AvgPool2(x), ng)
    }

    /// Bilinear resize with half-pixel centres (`align_corners = false`).
    pub fn resize_bilinear(&mut self, x: Var, out_h: usize, out_w: usize) -> Var {
        let t = self.value(x);
        let (b, c, h, w) = t.dims4().expect("resize input must be NCHW");
        let rows = resample::bilinear_taps(h, out_h);
        let cols = resample::bilinear_taps(w, out_w);
        let mut out = vec![T::zero(); b * c * out_h * out_w];
        for p in 0..b * c {
            resample::resize_plane(
                &t.data()[p * h * w..(p + 1) * h * w],
                w,
                &rows,
                &cols,
                &mut out[p * out_h * out_w..(p + 1) * out_h * out_w],
            );
        }
        let v = Tensor::from_vec(&[b, c, out_h, out_w], out).expect("shape");
        let ng = self.ng(&[x]);
        self.push(v, Op::Resize { x, rows, cols }, ng)
    }

    /// Concatenation along the channel axis.
    pub fn concat_channels(&mut self, xs: &[Var]) -> Var {
        assert!(!xs.is_empty(), "concat of nothing");
        let (b, _, h, w) = self.value(xs[0]).dims4().expect("concat input must be NCHW");
        let mut total_c = 0;
        for &x in xs {
            let (xb, xc, xh, xw) = self.value(x).dims4().expect("concat input must be NCHW");
            assert!(xb == b && xh == h && xw == w, "concat shape mismatch");
            total_c += xc;
        }
        let plane = h * w;
        let mut out = Vec::with_capacity(b * total_c * plane);
        for bi in 0..b {
            for &x in xs {
                let t = self.value(x);
                let per = t.len() / b;
                out.extend_from_slice(&t.data()[bi * per..(bi + 1) * per]);
            }
        }
        let v = Tensor::from_vec(&[b, total_c, h, w], out).expect("shape");
        let ng = self.ng(xs);
        self.push(v, Op::Concat(xs.to_vec()), ng)
    }

    /// Channels `start..start + len` of an NCHW tensor.
    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Var {
        let (b, c, h, w) = self.value(x).dims4().expect("slice input must be NCHW");
        assert!(start + len <= c, "channel slice out of range");
        let plane = h * w;
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(b * len * plane);
        for bi in 0..b {
            let s = (bi * c + start) * plane;
            out.extend_from_slice(&src[s..s + len * plane]);
        }
        let v = Tensor::from_vec(&[b, len, h, w], out).expect("shape");
        let ng = self.ng(&[x]);
        self.push(v, Op::SliceChannels { x, start }, ng)
    }

    /// Concatenation along the leading (batch) axis.
    pub fn concat_batch(&mut self, xs: &[Var]) -> Var {
        assert!(!xs.is_empty(), "concat of nothing");
        let inner = self.shape(xs[0])[1..].to_vec();
        let mut batch = 0;
        let mut out = Vec::new();
        for &x in xs {
            let t = self.value(x);
            assert_eq!(&t.shape()[1..], &inner[..], "concat_batch shape mismatch");
            batch += t.shape()[0];
            out.extend_from_slice(t.data());
        }
        let mut shape = vec![batch];
        shape.extend_from_slice(&inner);
        let v = Tensor::from_vec(&shape, out).expect("shape");
        let ng = self.ng(xs);
        self.push(v, Op::ConcatBatch(xs.to_vec()), ng)
    }

    /// Samples `start..start + len` along the batch axis.
    pub fn slice_batch(&mut self, x: Var, start: usize, len: usize) -> Var {
        let t = self.value(x);
        assert!(start + len <= t.shape()[0], "batch slice out of range");
        let per = t.len() / t.shape()[0];
        let data = t.data()[start * per..(start + len) * per].to_vec();
        let mut shape = t.shape().to_vec();
        shape[0] = len;
        let v = Tensor::from_vec(&shape, data).expect("shape");
        let ng = self.ng(&[x]);
        self.push(v, Op::SliceBatch { x, start }, ng)
    }

    /// `x[b,c,i,j] * w[b,c]`.
    pub fn scale_channels(&mut self, x: Var, w: Var) -> Var {
        let (b, c, h, wd) = self.value(x).dims4().expect("scale input must be NCHW");
        assert_eq!(self.shape(w), &[b, c], "channel weight shape mismatch");
        let plane = h * wd;
        let wv = self.value(w).data();
        let data = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v * wv[i / plane])
            .collect();
        let v = Tensor::from_vec(&[b, c, h, wd], data).expect("shape");
        let ng = self.ng(&[x, w]);
        self.push(v, Op::ScaleChannels(x, w), ng)
    }

    /// Spatial mean per channel: `(B,C,H,W) -> (B,C)`.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (b, c, h, w) = t.dims4().expect("gap input must be NCHW");
        let plane = h * w;
        let inv = T::one() / T::of(plane as f64);
        let data = t.data().chunks(plane).map(|ch| ch.iter().copied().sum::<T>() * inv).collect();
        let v = Tensor::from_vec(&[b, c], data).expect("shape");
        let ng = self.ng(&[x]);
        self.push(v, Op::GlobalAvgPool(x), ng)
    }

    /// `x (B,in) · wᵀ (in,out) + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let (xt, wt) = (self.value(x), self.value(w));
        let (batch, fin) = (xt.shape()[0], xt.shape()[1]);
        let fout = wt.shape()[0];
        assert_eq!(wt.shape(), &[fout, fin], "linear weight shape mismatch");
        let mut out = vec![T::zero(); batch * fout];
        if let Some(b) = b {
            let bv = self.value(b).data();
            for row in out.chunks_mut(fout) {
                row.copy_from_slice(bv);
            }
        }
        matmul(batch, fin, fout, xt.data(), false, wt.data(), true, &mut out, b.is_some());
        let v = Tensor::from_vec(&[batch, fout], out).expect("shape");
        let mut deps = vec![x, w];
        deps.extend(b);
        let ng = self.ng(&deps);
        self.push(v, Op::Linear { x, w, b }, ng)
    }

    /// Row-wise cosine similarity of two `(B, C)` tensors. Rows whose norm is
    /// below `eps` have similarity defined as 0 and pass no gradient.
    pub fn cosine_rows(&mut self, a: Var, b: Var, eps: f64) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "cosine shape mismatch");
        assert_eq!(ta.rank(), 2, "cosine expects (B, C)");
        let c = ta.shape()[1];
        let mut norm_a = Vec::new();
        let mut norm_b = Vec::new();
        let mut valid = Vec::new();
        let mut out = Vec::new();
        for (ra, rb) in ta.data().chunks(c).zip(tb.data().chunks(c)) {
            let na = ra.iter().map(|&x| x * x).sum::<T>().sqrt();
            let nb = rb.iter().map(|&x| x * x).sum::<T>().sqrt();
            let ok = na > T::of(eps) && nb > T::of(eps);
            let dot: T = ra.iter().zip(rb).map(|(&x, &y)| x * y).sum();
            out.push(if ok { dot / (na * nb) } else { T::zero() });
            norm_a.push(na);
            norm_b.push(nb);
            valid.push(ok);
        }
        let v = Tensor::from_vec(&[out.len()], out).expect("shape");
        let ng = self.ng(&[a, b]);
        self.push(
            v,
            Op::CosineRows {
                a,
                b,
                norm_a,
                norm_b,
                valid,
            },
            ng,
        )
    }

    /// Reverse sweep from a one-element `root`.
    pub fn backward(&self, root: Var) -> Gradients<T> {
        assert_eq!(self.value(root).len(), 1, "backward needs a scalar root");
        let mut acc = Accumulator {
            nodes: &self.nodes,
            grads: (0..self.nodes.len()).map(|_| None).collect(),
        };
        if self.nodes[root.0].needs_grad {
            acc.grads[root.0] = Some(Tensor::full(self.shape(root), T::one()));
        }
        for i in (0..=root.0).rev() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(g) = acc.grads[i].take() else {
                continue;
            };
            self.backward_node(i, g.data(), &mut acc);
        }
        let params = self.param_vars.iter().map(|(&id, &v)| (id, v)).collect();
        Gradients {
            grads: acc.grads,
            params,
        }
    }

    fn backward_node(&self, i: usize, g: &[T], acc: &mut Accumulator<'_, T>) {
        let node = &self.nodes[i];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc.with(*a, |d| add_into(d, g));
                acc.with(*b, |d| add_into(d, g));
            }
            Op::Sub(a, b) => {
                acc.with(*a, |d| add_into(d, g));
                acc.with(*b, |d| d.iter_mut().zip(g).for_each(|(x, &y)| *x -= y));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                acc.with(*a, |d| {
                    for ((x, &gy), &bv) in d.iter_mut().zip(g).zip(vb) {
                        *x += gy * bv;
                    }
                });
                acc.with(*b, |d| {
                    for ((x, &gy), &av) in d.iter_mut().zip(g).zip(va) {
                        *x += gy * av;
                    }
                });
            }
            Op::Div(a, b) => {
                let vb = self.value(*b).data();
                acc.with(*a, |d| {
                    for ((x, &gy), &bv) in d.iter_mut().zip(g).zip(vb) {
                        *x += gy / bv;
                    }
                });
                acc.with(*b, |d| {
                    for (((x, &gy), &bv), &q) in d.iter_mut().zip(g).zip(vb).zip(out) {
                        *x -= gy * q / bv;
                    }
                });
            }
            Op::AddScalar(a) => acc.with(*a, |d| add_into(d, g)),
            Op::MulScalar(a, c) => acc.with(*a, |d| d.iter_mut().zip(g).for_each(|(x, &y)| *x += y * *c)),
            Op::Relu(a) => acc.with(*a, |d| {
                for ((x, &gy), &y) in d.iter_mut().zip(g).zip(out) {
                    if y > T::zero() {
                        *x += gy;
                    }
                }
            }),
            Op::Sigmoid(a) => acc.with(*a, |d| {
                for ((x, &gy), &y) in d.iter_mut().zip(g).zip(out) {
                    *x += gy * y * (T::one() - y);
                }
            }),
            Op::SumPerSample(a) => acc.with(*a, |d| {
                let per = d.len() / g.len();
                for (chunk, &gy) in d.chunks_mut(per).zip(g) {
                    chunk.iter_mut().for_each(|x| *x += gy);
                }
            }),
            Op::Mean(a) => acc.with(*a, |d| {
                let s = g[0] / T::of(d.len() as f64);
                d.iter_mut().for_each(|x| *x += s);
            }),
            Op::BceWithLogits(a, target) => {
                let xa = self.value(*a).data();
                acc.with(*a, |d| {
                    for (((x, &gy), &l), &t) in d.iter_mut().zip(g).zip(xa).zip(target.data()) {
                        *x += gy * (sigmoid(l) - t);
                    }
                })
            }
            Op::Conv {
                x,
                w,
                b,
                geom,
                batch,
                out_c,
                cols,
            } => {
                let mut gx = acc.take(*x);
                let mut gw = acc.take(*w);
                let mut gb = b.and_then(|b| acc.take(b));
                conv::backward(
                    geom,
                    *batch,
                    *out_c,
                    self.value(*x).data(),
                    self.value(*w).data(),
                    cols,
                    g,
                    ConvGrads {
                        input: gx.as_mut().map(|t| t.data_mut()),
                        weight: gw.as_mut().map(|t| t.data_mut()),
                        bias: gb.as_mut().map(|t| t.data_mut()),
                    },
                );
                acc.put(*x, gx);
                acc.put(*w, gw);
                if let Some(b) = b {
                    acc.put(*b, gb);
                }
            }
            Op::Norm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let (b, c, h, w) = self.value(*x).dims4().expect("rank 4");
                let mut gx = acc.take(*x);
                let mut gg = acc.take(*gamma);
                let mut gb = acc.take(*beta);
                norm::backward(
                    g,
                    xhat,
                    b,
                    c,
                    h * w,
                    inv_std,
                    self.value(*gamma).data(),
                    *batch_stats,
                    NormGrads {
                        input: gx.as_mut().map(|t| t.data_mut()),
                        gamma: gg.as_mut().map(|t| t.data_mut()),
                        beta: gb.as_mut().map(|t| t.data_mut()),
                    },
                );
                acc.put(*x, gx);
                acc.put(*gamma, gg);
                acc.put(*beta, gb);
            }
            Op::AvgPool2(a) => {
                let (_, _, h, w) = self.value(*a).dims4().expect("rank 4");
                let (oh, ow) = (h / 2, w / 2);
                let quarter = T::of(0.25);
                acc.with(*a, |d| {
                    for (p, gp) in g.chunks(oh * ow).enumerate() {
                        let dp = &mut d[p * h * w..(p + 1) * h * w];
                        for y in 0..oh {
                            for xx in 0..ow {
                                let v = gp[y * ow + xx] * quarter;
                                let i = 2 * y * w + 2 * xx;
                                dp[i] += v;
                                dp[i + 1] += v;
                                dp[i + w] += v;
                                dp[i + w + 1] += v;
                            }
                        }
                    }
                });
            }
            Op::Resize { x, rows, cols } => {
                let (_, _, h, w) = self.value(*x).dims4().expect("rank 4");
                let oplane = rows.len() * cols.len();
                acc.with(*x, |d| {
                    for (p, gp) in g.chunks(oplane).enumerate() {
                        resample::resize_plane_backward(gp, w, rows, cols, &mut d[p * h * w..(p + 1) * h * w]);
                    }
                });
            }
            Op::Concat(xs) => {
                let batch = self.shape(xs[0])[0];
                let total: usize = g.len() / batch;
                let mut offset = 0;
                for &x in xs {
                    let per = self.value(x).len() / batch;
                    acc.with(x, |d| {
                        for bi in 0..batch {
                            let src = &g[bi * total + offset..bi * total + offset + per];
                            add_into(&mut d[bi * per..(bi + 1) * per], src);
                        }
                    });
                    offset += per;
                }
            }
            Op::ConcatBatch(xs) => {
                let mut offset = 0;
                for &x in xs {
                    let n = self.value(x).len();
                    acc.with(x, |d| add_into(d, &g[offset..offset + n]));
                    offset += n;
                }
            }
            Op::SliceChannels { x, start } => {
                let (b, c, h, w) = self.value(*x).dims4().expect("rank 4");
                let plane = h * w;
                let chunk = g.len() / b;
                acc.with(*x, |d| {
                    for bi in 0..b {
                        let s = (bi * c + start) * plane;
                        add_into(&mut d[s..s + chunk], &g[bi * chunk..(bi + 1) * chunk]);
                    }
                });
            }
            Op::SliceBatch { x, start } => {
                let t = self.value(*x);
                let per = t.len() / t.shape()[0];
                let s = start * per;
                acc.with(*x, |d| add_into(&mut d[s..s + g.len()], g));
            }
            Op::ScaleChannels(x, w) => {
                let wv = self.value(*w).data();
                let xv = self.value(*x).data();
                let plane = xv.len() / wv.len();
                acc.with(*x, |d| {
                    for (i, (dx, &gy)) in d.iter_mut().zip(g).enumerate() {
                        *dx += gy * wv[i / plane];
                    }
                });
                acc.with(*w, |d| {
                    for (k, dw) in d.iter_mut().enumerate() {
                        let s = k * plane;
                        *dw += g[s..s + plane].iter().zip(&xv[s..s + plane]).map(|(&a, &b)| a * b).sum::<T>();
                    }
                });
            }
            Op::GlobalAvgPool(x) => {
                let plane = self.value(*x).len() / g.len();
                let inv = T::one() / T::of(plane as f64);
                acc.with(*x, |d| {
                    for (chunk, &gy) in d.chunks_mut(plane).zip(g) {
                        let v = gy * inv;
                        chunk.iter_mut().for_each(|t| *t += v);
                    }
                });
            }
            Op::Linear { x, w, b } => {
                let (xt, wt) = (self.value(*x), self.value(*w));
                let (batch, fin) = (xt.shape()[0], xt.shape()[1]);
                let fout = wt.shape()[0];
                acc.with(*x, |d| matmul(batch, fout, fin, g, false, wt.data(), false, d, true));
                acc.with(*w, |d| matmul(fout, batch, fin, g, true, xt.data(), false, d, true));
                if let Some(b) = b {
                    acc.with(*b, |d| {
                        for row in g.chunks(fout) {
                            add_into(d, row);
                        }
                    });
                }
            }
            Op::CosineRows {
                a,
                b,
                norm_a,
                norm_b,
                valid,
            } => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                let c = va.len() / g.len();
                for (which, (own, other, own_n, other_n)) in
                    [(*a, (va, vb, norm_a, norm_b)), (*b, (vb, va, norm_b, norm_a))]
                {
                    acc.with(which, |d| {
                        for r in 0..g.len() {
                            if !valid[r] {
                                continue;
                            }
                            let cos = out[r];
                            let inv = T::one() / (own_n[r] * other_n[r]);
                            let inv_sq = T::one() / (own_n[r] * own_n[r]);
                            for k in r * c..(r + 1) * c {
                                d[k] += g[r] * (other[k] * inv - cos * own[k] * inv_sq);
                            }
                        }
                    });
                }
            }
        }
    }
}

struct Accumulator<'a, T: Scalar> {
    nodes: &'a [Node<T>],
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Accumulator<'_, T> {
    fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        if !self.nodes[v.0].needs_grad {
            return None;
        }
        Some(
            self.grads[v.0]
                .take()
                .unwrap_or_else(|| Tensor::zeros(self.nodes[v.0].value.shape())),
        )
    }

    fn put(&mut self, v: Var, t: Option<Tensor<T>>) {
        if t.is_some() {
            self.grads[v.0] = t;
        }
    }

    fn with(&mut self, v: Var, f: impl FnOnce(&mut [T])) {
        if let Some(mut t) = self.take(v) {
            f(t.data_mut());
            self.grads[v.0] = Some(t);
        }
    }
}

fn add_into<T: Scalar>(d: &mut [T], g: &[T]) {
    for (x, &y) in d.iter_mut().zip(g) {
        *x += y;
    }
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Gradients produced by [`Graph::backward`]; only leaf nodes are retained.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    params: Vec<(ParamId, Var)>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.params
            .iter()
            .find(|(p, _)| *p == id)
            .and_then(|&(_, v)| self.get(v))
    }

    /// Parameter gradients keyed by id.
    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.params.iter().filter_map(|&(id, v)| self.get(v).map(|g| (id, g)))
    }
}
