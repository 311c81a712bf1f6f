//! Tape-based reverse-mode differentiation.
//!
//! Every operation appends a node holding its forward value and whatever
//! it needs for the backward pass. [`Graph::backward`] walks the tape in
//! reverse and accumulates gradients into every tracked ancestor. Gradients
//! of intermediate nodes are released as soon as they have been propagated;
//! leaves keep theirs for inspection.

use rand::Rng;

use super::batchnorm::{self, BatchNormState, BnDims, Mode};
use super::conv::{self, ConvDims};
use super::dropout;
use super::gemm::{gemm, Layout};
use super::loss::{one_hot_classes, xent_from_indices};
use super::lstm::{self, SeqCache};
use super::tensor::Tensor;
use crate::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Dense { x: Var, w: Var, b: Var },
    Conv3x3 { x: Var, k: Var, b: Var },
    MaxPool2 { x: Var, argmax: Vec<usize> },
    BatchNorm { x: Var, gamma: Var, beta: Var, dims: BnDims, mode: Mode, xhat: Vec<f64>, inv_std: Vec<f64> },
    Relu { x: Var },
    Dropout { x: Var, mask: Vec<f64> },
    ConcatLast { a: Var, b: Var },
    Reshape { x: Var },
    TakeStep { x: Var, t: usize },
    Lstm { x: Var, w: Var, u: Var, b: Var, cache: Box<SeqCache> },
    SoftmaxXent { logits: Var, dlogits: Tensor },
    SumSquares { xs: Vec<Var>, lambda: f64 },
    Add { a: Var, b: Var },
    WeightedSum { x: Var, weights: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    op: Op,
    tracked: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}

fn accumulate(nodes: &mut [Node], v: Var, delta: &[f64]) {
    let n = &mut nodes[v.0];
    if !n.tracked {
        return;
    }
    match n.grad.as_mut() {
        Some(g) => g.iter_mut().zip(delta).for_each(|(a, b)| *a += b),
        None => n.grad = Some(delta.to_vec()),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            tracked,
        });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].tracked)
    }

    /// Constant input; no gradient is accumulated for it.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable leaf whose gradient is kept after [`Self::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last [`Self::backward`] target w.r.t. a tracked leaf.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    /// `x * w + b` for `x: [batch, in]`, `w: [in, out]`, `b: [out]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] || bs != [ws[1]] {
            return Err(shape_err(format!("dense: x {xs:?}, w {ws:?}, b {bs:?}")));
        }
        let (batch, input, out) = (xs[0], xs[1], ws[1]);
        let mut y = vec![0.0; batch * out];
        for row in y.chunks_exact_mut(out) {
            row.copy_from_slice(self.value(b).data());
        }
        gemm(batch, input, out, 1.0, self.value(x).data(), Layout::rows(input), self.value(w).data(), Layout::rows(out), 1.0, &mut y, Layout::rows(out));
        let tracked = self.tracked(&[x, w, b]);
        Ok(self.push(Tensor::new([batch, out], y)?, Op::Dense { x, w, b }, tracked))
    }

    /// 3x3, stride 1, zero "same" padding cross-correlation.
    /// `x: [batch, in_c, h, w]`, `k: [out_c, in_c, 3, 3]`, `b: [out_c]`.
    pub fn conv3x3(&mut self, x: Var, k: Var, b: Var) -> Result<Var> {
        let (xs, ks, bs) = (self.shape(x).to_vec(), self.shape(k).to_vec(), self.shape(b).to_vec());
        if xs.len() != 4 || ks.len() != 4 || ks[2..] != [3, 3] || ks[1] != xs[1] || bs != [ks[0]] {
            return Err(shape_err(format!("conv3x3: x {xs:?}, k {ks:?}, b {bs:?}")));
        }
        let d = ConvDims {
            batch: xs[0],
            in_c: xs[1],
            out_c: ks[0],
            h: xs[2],
            w: xs[3],
        };
        let y = conv::conv3x3_forward(self.value(x).data(), self.value(k).data(), self.value(b).data(), &d);
        let tracked = self.tracked(&[x, k, b]);
        Ok(self.push(Tensor::new([d.batch, d.out_c, d.h, d.w], y)?, Op::Conv3x3 { x, k, b }, tracked))
    }

    /// 2x2 stride-2 max pooling over the last two axes of a rank-4 tensor.
    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 || xs[2] < 2 || xs[3] < 2 {
            return Err(shape_err(format!("maxpool2 needs [b, c, h>=2, w>=2], got {xs:?}")));
        }
        let (y, argmax) = conv::maxpool2_forward(self.value(x).data(), xs[0] * xs[1], xs[2], xs[3]);
        let tracked = self.tracked(&[x]);
        Ok(self.push(
            Tensor::new([xs[0], xs[1], xs[2] / 2, xs[3] / 2], y)?,
            Op::MaxPool2 { x, argmax },
            tracked,
        ))
    }

    /// Per-channel batch normalization of `[batch, channels, ...]`.
    /// Train mode uses batch statistics and updates `state`'s running averages.
    pub fn batchnorm(&mut self, x: Var, gamma: Var, beta: Var, state: &mut BatchNormState, mode: Mode) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 {
            return Err(shape_err(format!("batchnorm needs [batch, channels, ...], got {xs:?}")));
        }
        let dims = BnDims {
            batch: xs[0],
            channels: xs[1],
            spatial: xs[2..].iter().product(),
        };
        let out = batchnorm::forward(
            self.value(x).data(),
            self.value(gamma).data(),
            self.value(beta).data(),
            state,
            dims,
            mode,
        )?;
        let tracked = self.tracked(&[x, gamma, beta]);
        Ok(self.push(
            Tensor::new(xs, out.y)?,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                dims,
                mode,
                xhat: out.xhat,
                inv_std: out.inv_std,
            },
            tracked,
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = Tensor::new(
            self.shape(x).to_vec(),
            self.value(x).data().iter().map(|&v| v.max(0.0)).collect(),
        )
        .expect("same shape");
        let tracked = self.tracked(&[x]);
        self.push(value, Op::Relu { x }, tracked)
    }

    /// Inverted dropout. Identity (no new node) in infer mode or when `keep == 1`.
    pub fn dropout(&mut self, x: Var, keep: f64, mode: Mode, rng: &mut impl Rng) -> Result<Var> {
        dropout::check_keep(keep)?;
        if mode == Mode::Infer || keep == 1.0 {
            return Ok(x);
        }
        let mask = dropout::mask(self.value(x).len(), keep, rng);
        let data = self.value(x).data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let value = Tensor::new(self.shape(x).to_vec(), data)?;
        let tracked = self.tracked(&[x]);
        Ok(self.push(value, Op::Dropout { x, mask }, tracked))
    }

    /// Concatenation along the last axis; leading axes must agree.
    pub fn concat_last(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.is_empty() || sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(shape_err(format!("concat_last: {sa:?} with {sb:?}")));
        }
        let (fa, fb) = (*sa.last().unwrap(), *sb.last().unwrap());
        let rows = self.value(a).len() / fa.max(1);
        let mut data = Vec::with_capacity(rows * (fa + fb));
        for r in 0..rows {
            data.extend_from_slice(&self.value(a).data()[r * fa..(r + 1) * fa]);
            data.extend_from_slice(&self.value(b).data()[r * fb..(r + 1) * fb]);
        }
        let mut shape = sa.clone();
        *shape.last_mut().unwrap() = fa + fb;
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(Tensor::new(shape, data)?, Op::ConcatLast { a, b }, tracked))
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        let tracked = self.tracked(&[x]);
        Ok(self.push(value, Op::Reshape { x }, tracked))
    }

    /// Flattens all axes after the first.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        let (b, rest) = (s[0], s[1..].iter().product::<usize>());
        self.reshape(x, [b, rest])
    }

    /// `x[:, t, :]` of a `[batch, steps, features]` tensor.
    pub fn take_step(&mut self, x: Var, t: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 || t >= s[1] {
            return Err(shape_err(format!("take_step({t}) on {s:?}")));
        }
        let (batch, steps, f) = (s[0], s[1], s[2]);
        let mut data = Vec::with_capacity(batch * f);
        for n in 0..batch {
            let o = (n * steps + t) * f;
            data.extend_from_slice(&self.value(x).data()[o..o + f]);
        }
        let tracked = self.tracked(&[x]);
        Ok(self.push(Tensor::new([batch, f], data)?, Op::TakeStep { x, t }, tracked))
    }

    /// One LSTM direction over `x: [batch, steps, input]`; outputs
    /// `[batch, steps, hidden]` with each step's state at its own index.
    /// `reverse` processes the sequence from the last step to the first.
    pub fn lstm(&mut self, x: Var, w: Var, u: Var, b: Var, reverse: bool) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let (ws, us, bs) = (self.shape(w).to_vec(), self.shape(u).to_vec(), self.shape(b).to_vec());
        if xs.len() != 3 || xs[1] == 0 {
            return Err(shape_err(format!("lstm input must be [batch, steps>=1, input], got {xs:?}")));
        }
        let hd = us.first().copied().unwrap_or(0);
        if ws != [xs[2], 4 * hd] || us != [hd, 4 * hd] || bs != [4 * hd] {
            return Err(shape_err(format!("lstm: x {xs:?}, w {ws:?}, u {us:?}, b {bs:?}")));
        }
        let (h, cache) = lstm::sequence_forward(
            self.value(x).data(),
            xs[0],
            xs[1],
            xs[2],
            self.value(w).data(),
            self.value(u).data(),
            self.value(b).data(),
            reverse,
        );
        let tracked = self.tracked(&[x, w, u, b]);
        Ok(self.push(
            Tensor::new([xs[0], xs[1], hd], h)?,
            Op::Lstm {
                x,
                w,
                u,
                b,
                cache: Box::new(cache),
            },
            tracked,
        ))
    }

    /// Bidirectional layer: forward-direction features first, then backward.
    pub fn bilstm(&mut self, x: Var, fwd: [Var; 3], bwd: [Var; 3]) -> Result<Var> {
        let f = self.lstm(x, fwd[0], fwd[1], fwd[2], false)?;
        let b = self.lstm(x, bwd[0], bwd[1], bwd[2], true)?;
        self.concat_last(f, b)
    }

    /// Mean softmax cross-entropy against one-hot `labels`; scalar output.
    pub fn softmax_xent(&mut self, logits: Var, labels: &Tensor) -> Result<Var> {
        if self.shape(logits) != labels.shape() || labels.rank() != 2 {
            return Err(shape_err(format!(
                "softmax_xent: logits {:?} vs labels {:?}",
                self.shape(logits),
                labels.shape()
            )));
        }
        let targets = one_hot_classes(labels)?;
        let (loss, dlogits) = xent_from_indices(self.value(logits), &targets);
        let tracked = self.tracked(&[logits]);
        Ok(self.push(Tensor::scalar(loss), Op::SoftmaxXent { logits, dlogits }, tracked))
    }

    /// `lambda * sum(w^2)` over every element of `xs`.
    pub fn sum_squares(&mut self, xs: &[Var], lambda: f64) -> Var {
        let s: f64 = xs
            .iter()
            .map(|v| self.value(*v).data().iter().map(|w| w * w).sum::<f64>())
            .sum();
        let tracked = self.tracked(xs);
        self.push(
            Tensor::scalar(lambda * s),
            Op::SumSquares {
                xs: xs.to_vec(),
                lambda,
            },
            tracked,
        )
    }

    /// Sum of two scalars.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).len() != 1 || self.value(b).len() != 1 {
            return Err(shape_err("add expects two scalars"));
        }
        let v = self.value(a).item() + self.value(b).item();
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(Tensor::scalar(v), Op::Add { a, b }, tracked))
    }

    /// `sum(x * weights)` for a fixed weight tensor of the same size.
    pub fn weighted_sum(&mut self, x: Var, weights: &Tensor) -> Result<Var> {
        if self.value(x).len() != weights.len() {
            return Err(shape_err("weighted_sum: size mismatch"));
        }
        let v = self.value(x).data().iter().zip(weights.data()).map(|(a, b)| a * b).sum();
        let tracked = self.tracked(&[x]);
        Ok(self.push(
            Tensor::scalar(v),
            Op::WeightedSum {
                x,
                weights: weights.data().to_vec(),
            },
            tracked,
        ))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&mut self, target: Var) -> Result<()> {
        if self.value(target).len() != 1 {
            return Err(shape_err(format!(
                "backward target must be scalar, has shape {:?}",
                self.shape(target)
            )));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        if !self.nodes[target.0].tracked {
            return Ok(());
        }
        self.nodes[target.0].grad = Some(vec![1.0]);
        for i in (0..=target.0).rev() {
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &rest[0];
            if !node.tracked {
                continue;
            }
            backprop(before, node, &g);
            if matches!(self.nodes[i].op, Op::Leaf) {
                self.nodes[i].grad = Some(g);
            }
        }
        Ok(())
    }
}

fn backprop(nodes: &mut [Node], node: &Node, g: &[f64]) {
    let tracked = |nodes: &[Node], v: Var| nodes[v.0].tracked;
    match &node.op {
        Op::Leaf => {}
        Op::Dense { x, w, b } => {
            let (xv, wv) = (&nodes[x.0].value, &nodes[w.0].value);
            let (batch, input, out) = (xv.shape()[0], xv.shape()[1], wv.shape()[1]);
            let dx = tracked(nodes, *x).then(|| {
                let mut dx = vec![0.0; batch * input];
                gemm(batch, out, input, 1.0, g, Layout::rows(out), wv.data(), Layout::trans(out), 0.0, &mut dx, Layout::rows(input));
                dx
            });
            let dw = tracked(nodes, *w).then(|| {
                let mut dw = vec![0.0; input * out];
                gemm(input, batch, out, 1.0, xv.data(), Layout::trans(input), g, Layout::rows(out), 0.0, &mut dw, Layout::rows(out));
                dw
            });
            let mut db = vec![0.0; out];
            for row in g.chunks_exact(out) {
                db.iter_mut().zip(row).for_each(|(a, b)| *a += b);
            }
            if let Some(dx) = dx {
                accumulate(nodes, *x, &dx);
            }
            if let Some(dw) = dw {
                accumulate(nodes, *w, &dw);
            }
            accumulate(nodes, *b, &db);
        }
        Op::Conv3x3 { x, k, b } => {
            let xs = nodes[x.0].value.shape();
            let d = ConvDims {
                batch: xs[0],
                in_c: xs[1],
                out_c: nodes[k.0].value.shape()[0],
                h: xs[2],
                w: xs[3],
            };
            let (dx, dk, db) = conv::conv3x3_backward(
                nodes[x.0].value.data(),
                nodes[k.0].value.data(),
                g,
                &d,
                tracked(nodes, *x),
            );
            if let Some(dx) = dx {
                accumulate(nodes, *x, &dx);
            }
            accumulate(nodes, *k, &dk);
            accumulate(nodes, *b, &db);
        }
        Op::MaxPool2 { x, argmax } => {
            let mut dx = vec![0.0; nodes[x.0].value.len()];
            for (&src, &gv) in argmax.iter().zip(g) {
                dx[src] += gv;
            }
            accumulate(nodes, *x, &dx);
        }
        Op::BatchNorm { x, gamma, beta, dims, mode, xhat, inv_std } => {
            let (dx, dgamma, dbeta) =
                batchnorm::backward(g, xhat, inv_std, nodes[gamma.0].value.data(), *dims, *mode);
            accumulate(nodes, *x, &dx);
            accumulate(nodes, *gamma, &dgamma);
            accumulate(nodes, *beta, &dbeta);
        }
        Op::Relu { x } => {
            let dx: Vec<f64> = node
                .value
                .data()
                .iter()
                .zip(g)
                .map(|(&y, &gv)| if y > 0.0 { gv } else { 0.0 })
                .collect();
            accumulate(nodes, *x, &dx);
        }
        Op::Dropout { x, mask } => {
            let dx: Vec<f64> = g.iter().zip(mask).map(|(a, m)| a * m).collect();
            accumulate(nodes, *x, &dx);
        }
        Op::ConcatLast { a, b } => {
            let fa = *nodes[a.0].value.shape().last().unwrap();
            let fb = *nodes[b.0].value.shape().last().unwrap();
            let rows = g.len() / (fa + fb).max(1);
            let mut da = Vec::with_capacity(rows * fa);
            let mut db = Vec::with_capacity(rows * fb);
            for row in g.chunks_exact(fa + fb) {
                da.extend_from_slice(&row[..fa]);
                db.extend_from_slice(&row[fa..]);
            }
            accumulate(nodes, *a, &da);
            accumulate(nodes, *b, &db);
        }
        Op::Reshape { x } => accumulate(nodes, *x, g),
        Op::TakeStep { x, t } => {
            let s = nodes[x.0].value.shape();
            let (batch, steps, f) = (s[0], s[1], s[2]);
            let mut dx = vec![0.0; batch * steps * f];
            for n in 0..batch {
                let o = (n * steps + t) * f;
                dx[o..o + f].copy_from_slice(&g[n * f..(n + 1) * f]);
            }
            accumulate(nodes, *x, &dx);
        }
        Op::Lstm { x, w, u, b, cache } => {
            let grads = lstm::sequence_backward(
                nodes[x.0].value.data(),
                nodes[w.0].value.data(),
                nodes[u.0].value.data(),
                cache,
                g,
                tracked(nodes, *x),
            );
            if let Some(dx) = grads.dx {
                accumulate(nodes, *x, &dx);
            }
            accumulate(nodes, *w, &grads.dw);
            accumulate(nodes, *u, &grads.du);
            accumulate(nodes, *b, &grads.db);
        }
        Op::SoftmaxXent { logits, dlogits } => {
            let scaled: Vec<f64> = dlogits.data().iter().map(|v| v * g[0]).collect();
            accumulate(nodes, *logits, &scaled);
        }
        Op::SumSquares { xs, lambda } => {
            for v in xs {
                if !tracked(nodes, *v) {
                    continue;
                }
                let d: Vec<f64> = nodes[v.0].value.data().iter().map(|w| 2.0 * lambda * w * g[0]).collect();
                accumulate(nodes, *v, &d);
            }
        }
        Op::Add { a, b } => {
            accumulate(nodes, *a, g);
            accumulate(nodes, *b, g);
        }
        Op::WeightedSum { x, weights } => {
            let d: Vec<f64> = weights.iter().map(|w| w * g[0]).collect();
            accumulate(nodes, *x, &d);
        }
    }
}
