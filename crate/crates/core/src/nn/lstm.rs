//! LSTM cell and sequence kernels.
//!
//! Gate blocks are laid out in the order (input i, forget f, cell g, output o)
//! along the `4 * hidden` axis of every weight matrix and bias.

use rand::Rng;

use super::gemm::{gemm, Layout};
use super::init::glorot_uniform;
use super::tensor::Tensor;
use crate::{Error, Result};

/// Inlineable `exp`: Cody-Waite reduction `x = k ln 2 + r`, `|r| <= ln2 / 2`,
/// then a degree-12 Taylor polynomial (truncation error below 2e-16).
/// Inputs are clamped to the finite range, so large arguments saturate
/// instead of overflowing.
#[inline(always)]
fn exp(x: f64) -> f64 {
    const LN2_HI: f64 = 6.931_471_803_691_238_2e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    // Adding 1.5 * 2^52 rounds to the nearest integer without a libm call.
    const ROUND: f64 = 6_755_399_441_055_744.0;
    let x = x.clamp(-708.0, 709.0);
    let shifted = x * std::f64::consts::LOG2_E + ROUND;
    let k = shifted - ROUND;
    let r = (x - k * LN2_HI) - k * LN2_LO;
    const C: [f64; 12] = [
        1.0 / 39_916_800.0,
        1.0 / 3_628_800.0,
        1.0 / 362_880.0,
        1.0 / 40_320.0,
        1.0 / 5_040.0,
        1.0 / 720.0,
        1.0 / 120.0,
        1.0 / 24.0,
        1.0 / 6.0,
        0.5,
        1.0,
        1.0,
    ];
    let mut p = 1.0 / 479_001_600.0;
    for c in C {
        p = p * r + c;
    }
    // The low mantissa bits of `shifted` hold k; move k + 1023 into the exponent field.
    let scale = (shifted.to_bits().wrapping_sub(ROUND.to_bits()).wrapping_add(1023)) << 52;
    p * f64::from_bits(scale)
}

#[inline(always)]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + exp(-x))
}

/// `tanh` through a single `exp`; accurate to a few ulps of 1 in absolute
/// terms and saturates cleanly.
#[inline(always)]
fn tanh(x: f64) -> f64 {
    1.0 - 2.0 / (exp(2.0 * x) + 1.0)
}

/// Weights of one LSTM direction.
///
/// `w` is `[input, 4*hidden]`, `u` is `[hidden, 4*hidden]`, `b` is `[4*hidden]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w: Tensor,
    pub u: Tensor,
    pub b: Tensor,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            w: Tensor::zeros([input, 4 * hidden]),
            u: Tensor::zeros([hidden, 4 * hidden]),
            b: Tensor::zeros([4 * hidden]),
        }
    }

    /// Glorot-uniform `w`/`u`, forget-gate bias 1, other biases 0.
    pub fn init(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut b = Tensor::zeros([4 * hidden]);
        b.data_mut()[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        LstmParams {
            w: glorot_uniform([input, 4 * hidden], input, hidden, rng),
            u: glorot_uniform([hidden, 4 * hidden], hidden, hidden, rng),
            b,
        }
    }

    pub fn input_size(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn hidden(&self) -> usize {
        self.u.shape()[0]
    }

    pub(crate) fn check(&self) -> Result<()> {
        let h = self.hidden();
        let ok = self.w.rank() == 2
            && self.u.shape() == [h, 4 * h]
            && self.w.shape()[1] == 4 * h
            && self.b.shape() == [4 * h];
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "inconsistent LSTM weights: w {:?}, u {:?}, b {:?}",
                self.w.shape(),
                self.u.shape(),
                self.b.shape()
            )))
        }
    }
}

/// Turns one row of gate pre-activations into activations in place and
/// advances the cell. Writes `c` and `tanh(c)`; returns nothing else since
/// `h = o * tanh(c)` is written to `h`.
#[inline]
fn cell_forward(gates: &mut [f64], c_prev: &[f64], c: &mut [f64], tanh_c: &mut [f64], h: &mut [f64]) {
    let hd = c.len();
    let (i_g, rest) = gates.split_at_mut(hd);
    let (f_g, rest) = rest.split_at_mut(hd);
    let (g_g, o_g) = rest.split_at_mut(hd);
    let cells = c_prev.iter().zip(c.iter_mut()).zip(tanh_c.iter_mut()).zip(h.iter_mut());
    let gate_iter = i_g.iter_mut().zip(f_g.iter_mut()).zip(g_g.iter_mut()).zip(o_g.iter_mut());
    for ((((cp, c), tc), h), (((i, f), g), o)) in cells.zip(gate_iter) {
        *i = sigmoid(*i);
        *f = sigmoid(*f);
        *g = tanh(*g);
        *o = sigmoid(*o);
        *c = *f * cp + *i * *g;
        *tc = tanh(*c);
        *h = *o * *tc;
    }
}

/// Backward through one cell. `gates` holds activations; `dgates` receives
/// pre-activation gradients; `dc` is updated in place from the incoming cell
/// gradient to the gradient w.r.t. `c_prev`.
#[inline]
fn cell_backward(
    gates: &[f64],
    c_prev: &[f64],
    tanh_c: &[f64],
    dh: &[f64],
    dc: &mut [f64],
    dgates: &mut [f64],
) {
    let hd = dh.len();
    for j in 0..hd {
        let (i, f, g, o) = (gates[j], gates[hd + j], gates[2 * hd + j], gates[3 * hd + j]);
        let tc = tanh_c[j];
        let d_o = dh[j] * tc;
        let dcj = dc[j] + dh[j] * o * (1.0 - tc * tc);
        dgates[j] = dcj * g * i * (1.0 - i);
        dgates[hd + j] = dcj * c_prev[j] * f * (1.0 - f);
        dgates[2 * hd + j] = dcj * i * (1.0 - g * g);
        dgates[3 * hd + j] = d_o * o * (1.0 - o);
        dc[j] = dcj * f;
    }
}

/// One LSTM step for a batch: `x_t` is `[batch, input]`, `h_prev`/`c_prev`
/// are `[batch, hidden]`. Returns `(h_t, c_t)`.
pub fn lstm_step(x_t: &Tensor, h_prev: &Tensor, c_prev: &Tensor, p: &LstmParams) -> Result<(Tensor, Tensor)> {
    p.check()?;
    let hd = p.hidden();
    let input = p.input_size();
    if x_t.rank() != 2 || x_t.shape()[1] != input {
        return Err(Error::Shape(format!("x_t {:?} vs input size {input}", x_t.shape())));
    }
    let batch = x_t.shape()[0];
    if h_prev.shape() != [batch, hd] || c_prev.shape() != [batch, hd] {
        return Err(Error::Shape(format!(
            "state shapes {:?}/{:?}, expected [{batch}, {hd}]",
            h_prev.shape(),
            c_prev.shape()
        )));
    }
    let mut pre = vec![0.0; batch * 4 * hd];
    for row in pre.chunks_exact_mut(4 * hd) {
        row.copy_from_slice(p.b.data());
    }
    gemm(batch, input, 4 * hd, 1.0, x_t.data(), Layout::rows(input), p.w.data(), Layout::rows(4 * hd), 1.0, &mut pre, Layout::rows(4 * hd));
    gemm(batch, hd, 4 * hd, 1.0, h_prev.data(), Layout::rows(hd), p.u.data(), Layout::rows(4 * hd), 1.0, &mut pre, Layout::rows(4 * hd));
    let mut h = vec![0.0; batch * hd];
    let mut c = vec![0.0; batch * hd];
    let mut tanh_c = vec![0.0; hd];
    for n in 0..batch {
        cell_forward(
            &mut pre[n * 4 * hd..(n + 1) * 4 * hd],
            &c_prev.data()[n * hd..(n + 1) * hd],
            &mut c[n * hd..(n + 1) * hd],
            &mut tanh_c,
            &mut h[n * hd..(n + 1) * hd],
        );
    }
    Ok((Tensor::new([batch, hd], h)?, Tensor::new([batch, hd], c)?))
}

/// Cached activations of a whole-sequence pass, kept for BPTT. Buffers are
/// time-major (`[steps, batch, ..]`) so each step touches one contiguous block.
#[derive(Debug, Clone)]
pub(crate) struct SeqCache {
    pub batch: usize,
    pub steps: usize,
    pub input: usize,
    pub hidden: usize,
    pub reverse: bool,
    /// Gate activations, `[steps, batch, 4*hidden]`.
    pub gates: Vec<f64>,
    /// Cell states, their tanh, and hidden states, `[steps, batch, hidden]`.
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

impl SeqCache {
    fn time_at(&self, s: usize) -> usize {
        if self.reverse {
            self.steps - 1 - s
        } else {
            s
        }
    }
}

/// `[batch, steps, f]` <-> `[steps, batch, f]`.
fn swap_leading(src: &[f64], a: usize, b: usize, f: usize) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    for i in 0..a {
        for j in 0..b {
            let (s, d) = ((i * b + j) * f, (j * a + i) * f);
            out[d..d + f].copy_from_slice(&src[s..s + f]);
        }
    }
    out
}

/// Runs one direction over `x` (`[batch, steps, input]`), returning
/// `h` (`[batch, steps, hidden]`, outputs stored at their own time index).
#[allow(clippy::too_many_arguments)]
pub(crate) fn sequence_forward(
    x: &[f64],
    batch: usize,
    steps: usize,
    input: usize,
    w: &[f64],
    u: &[f64],
    b: &[f64],
    reverse: bool,
) -> (Vec<f64>, SeqCache) {
    let hd = b.len() / 4;
    debug_assert_eq!(u.len(), hd * 4 * hd);
    let g4 = 4 * hd;
    let bg = batch * g4;
    let bh = batch * hd;
    let mut gates = vec![0.0; steps * bg];
    // Row n of x_t sits at x[(n * steps + t) * input..].
    let x_rows = |t: usize| Layout { off: t * input, rs: steps * input, cs: 1 };
    let mut h = vec![0.0; steps * bh];
    let mut c = vec![0.0; steps * bh];
    let mut tanh_c = vec![0.0; steps * bh];
    let zeros = vec![0.0; bh];
    let mut cache = SeqCache {
        batch,
        steps,
        input,
        hidden: hd,
        reverse,
        gates: Vec::new(),
        c: Vec::new(),
        tanh_c: Vec::new(),
        h: Vec::new(),
    };
    for s in 0..steps {
        let t = cache.time_at(s);
        let g_t = &mut gates[t * bg..(t + 1) * bg];
        for row in g_t.chunks_exact_mut(g4) {
            row.copy_from_slice(b);
        }
        gemm(batch, input, g4, 1.0, x, x_rows(t), w, Layout::rows(g4), 1.0, g_t, Layout::rows(g4));
        let c_prev: &[f64];
        let c_cur: &mut [f64];
        if s > 0 {
            let tp = cache.time_at(s - 1);
            gemm(batch, hd, g4, 1.0, &h[tp * bh..(tp + 1) * bh], Layout::rows(hd), u, Layout::rows(g4), 1.0, g_t, Layout::rows(g4));
            (c_prev, c_cur) = split_pair(&mut c, tp * bh, t * bh, bh);
        } else {
            (c_prev, c_cur) = (&zeros[..], &mut c[t * bh..(t + 1) * bh]);
        }
        let tc = &mut tanh_c[t * bh..(t + 1) * bh];
        let h_t = &mut h[t * bh..(t + 1) * bh];
        for n in 0..batch {
            let r = n * hd..(n + 1) * hd;
            cell_forward(
                &mut g_t[n * g4..(n + 1) * g4],
                &c_prev[r.clone()],
                &mut c_cur[r.clone()],
                &mut tc[r.clone()],
                &mut h_t[r],
            );
        }
    }
    let out = swap_leading(&h, steps, batch, hd);
    cache.gates = gates;
    cache.c = c;
    cache.tanh_c = tanh_c;
    cache.h = h;
    (out, cache)
}

/// Disjoint `(&buf[a..a+len], &mut buf[b..b+len])`.
fn split_pair(buf: &mut [f64], a: usize, b: usize, len: usize) -> (&[f64], &mut [f64]) {
    if a < b {
        let (lo, hi) = buf.split_at_mut(b);
        (&lo[a..a + len], &mut hi[..len])
    } else {
        let (lo, hi) = buf.split_at_mut(a);
        (&hi[..len], &mut lo[b..b + len])
    }
}

pub(crate) struct SeqGrads {
    pub dx: Option<Vec<f64>>,
    pub dw: Vec<f64>,
    pub du: Vec<f64>,
    pub db: Vec<f64>,
}

/// Backpropagation through time for [`sequence_forward`]. `x` and `dh_out`
/// are batch-major like the forward input and output.
pub(crate) fn sequence_backward(
    x: &[f64],
    w: &[f64],
    u: &[f64],
    cache: &SeqCache,
    dh_out: &[f64],
    want_dx: bool,
) -> SeqGrads {
    let (batch, steps, input, hd) = (cache.batch, cache.steps, cache.input, cache.hidden);
    let g4 = 4 * hd;
    let (bg, bh) = (batch * g4, batch * hd);
    let x_rows = |t: usize| Layout { off: t * input, rs: steps * input, cs: 1 };
    let x_cols = |t: usize| Layout { off: t * input, rs: 1, cs: steps * input };
    let mut dpre = vec![0.0; bg];
    let mut dh_rec = vec![0.0; bh];
    let mut dc = vec![0.0; bh];
    let mut dh = vec![0.0; hd];
    let zeros = vec![0.0; bh];
    let mut dw = vec![0.0; input * g4];
    let mut du = vec![0.0; hd * g4];
    let mut db = vec![0.0; g4];
    let mut dx = want_dx.then(|| vec![0.0; batch * steps * input]);

    for s in (0..steps).rev() {
        let t = cache.time_at(s);
        let tp = (s > 0).then(|| cache.time_at(s - 1));
        let c_prev = match tp {
            Some(tp) => &cache.c[tp * bh..(tp + 1) * bh],
            None => &zeros[..],
        };
        for n in 0..batch {
            let out = (n * steps + t) * hd;
            for j in 0..hd {
                dh[j] = dh_out[out + j] + dh_rec[n * hd + j];
            }
            let gi = t * bg + n * g4;
            let hi = t * bh + n * hd;
            cell_backward(
                &cache.gates[gi..gi + g4],
                &c_prev[n * hd..(n + 1) * hd],
                &cache.tanh_c[hi..hi + hd],
                &dh,
                &mut dc[n * hd..(n + 1) * hd],
                &mut dpre[n * g4..(n + 1) * g4],
            );
        }
        for row in dpre.chunks_exact(g4) {
            for (a, b) in db.iter_mut().zip(row) {
                *a += b;
            }
        }
        gemm(input, batch, g4, 1.0, x, x_cols(t), &dpre, Layout::rows(g4), 1.0, &mut dw, Layout::rows(g4));
        if let Some(dx) = dx.as_mut() {
            gemm(batch, g4, input, 1.0, &dpre, Layout::rows(g4), w, Layout::trans(g4), 0.0, dx, x_rows(t));
        }
        if let Some(tp) = tp {
            let h_prev = &cache.h[tp * bh..(tp + 1) * bh];
            gemm(hd, batch, g4, 1.0, h_prev, Layout::trans(hd), &dpre, Layout::rows(g4), 1.0, &mut du, Layout::rows(g4));
            // dh_prev = dpre_t * U^T
            gemm(batch, g4, hd, 1.0, &dpre, Layout::rows(g4), u, Layout::trans(g4), 0.0, &mut dh_rec, Layout::rows(hd));
        }
    }
    SeqGrads { dx, dw, du, db }
}
