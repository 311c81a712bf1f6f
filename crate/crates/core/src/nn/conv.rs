//! 3x3 stride-1 "same" cross-correlation and 2x2 max pooling kernels.

/// Rows `i` for which `i + d` stays inside `0..len`.
fn valid(len: usize, d: isize) -> std::ops::Range<usize> {
    let lo = (-d).max(0) as usize;
    let hi = (len as isize - d.max(0)).max(0) as usize;
    lo..hi.max(lo)
}

pub(crate) struct ConvDims {
    pub batch: usize,
    pub in_c: usize,
    pub out_c: usize,
    pub h: usize,
    pub w: usize,
}

pub(crate) fn conv3x3_forward(x: &[f64], k: &[f64], bias: &[f64], d: &ConvDims) -> Vec<f64> {
    let (hw, h, w) = (d.h * d.w, d.h, d.w);
    let mut y = vec![0.0; d.batch * d.out_c * hw];
    for n in 0..d.batch {
        for o in 0..d.out_c {
            let yo = &mut y[(n * d.out_c + o) * hw..(n * d.out_c + o + 1) * hw];
            yo.iter_mut().for_each(|v| *v = bias[o]);
            for c in 0..d.in_c {
                let xc = &x[(n * d.in_c + c) * hw..(n * d.in_c + c + 1) * hw];
                for ky in 0..3 {
                    let dy = ky as isize - 1;
                    for kx in 0..3 {
                        let dx = kx as isize - 1;
                        let wgt = k[((o * d.in_c + c) * 3 + ky) * 3 + kx];
                        let cols = valid(w, dx);
                        for i in valid(h, dy) {
                            let src = (i as isize + dy) as usize * w;
                            let yrow = &mut yo[i * w + cols.start..i * w + cols.end];
                            let xs = (src as isize + cols.start as isize + dx) as usize;
                            let xrow = &xc[xs..xs + cols.len()];
                            for (a, b) in yrow.iter_mut().zip(xrow) {
                                *a += wgt * b;
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

/// Returns `(dx, dk, dbias)`; `dx` is skipped when `want_dx` is false.
pub(crate) fn conv3x3_backward(
    x: &[f64],
    k: &[f64],
    dy_all: &[f64],
    d: &ConvDims,
    want_dx: bool,
) -> (Option<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let (hw, h, w) = (d.h * d.w, d.h, d.w);
    let mut dx = want_dx.then(|| vec![0.0; x.len()]);
    let mut dk = vec![0.0; k.len()];
    let mut db = vec![0.0; d.out_c];
    for n in 0..d.batch {
        for o in 0..d.out_c {
            let go = &dy_all[(n * d.out_c + o) * hw..(n * d.out_c + o + 1) * hw];
            db[o] += go.iter().sum::<f64>();
            for c in 0..d.in_c {
                let base = (n * d.in_c + c) * hw;
                let xc = &x[base..base + hw];
                for ky in 0..3 {
                    let dyo = ky as isize - 1;
                    for kx in 0..3 {
                        let dxo = kx as isize - 1;
                        let ki = ((o * d.in_c + c) * 3 + ky) * 3 + kx;
                        let wgt = k[ki];
                        let cols = valid(w, dxo);
                        let mut acc = 0.0;
                        for i in valid(h, dyo) {
                            let xs = ((i as isize + dyo) as usize * w) as isize + cols.start as isize + dxo;
                            let xs = xs as usize;
                            let grow = &go[i * w + cols.start..i * w + cols.end];
                            let xrow = &xc[xs..xs + cols.len()];
                            acc += grow.iter().zip(xrow).map(|(g, v)| g * v).sum::<f64>();
                            if let Some(dx) = dx.as_mut() {
                                let drow = &mut dx[base + xs..base + xs + cols.len()];
                                for (dv, g) in drow.iter_mut().zip(grow) {
                                    *dv += wgt * g;
                                }
                            }
                        }
                        dk[ki] += acc;
                    }
                }
            }
        }
    }
    (dx, dk, db)
}

/// 2x2 stride-2 max pooling over `[planes, h, w]`; odd trailing row/column dropped.
/// Returns the pooled values and, per output, the flat input index of the
/// first maximum in row-major window order.
pub(crate) fn maxpool2_forward(x: &[f64], planes: usize, h: usize, w: usize) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Vec::with_capacity(planes * oh * ow);
    let mut arg = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let base = p * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let cands = [
                    base + 2 * i * w + 2 * j,
                    base + 2 * i * w + 2 * j + 1,
                    base + (2 * i + 1) * w + 2 * j,
                    base + (2 * i + 1) * w + 2 * j + 1,
                ];
                let mut best = cands[0];
                for &c in &cands[1..] {
                    if x[c] > x[best] {
                        best = c;
                    }
                }
                y.push(x[best]);
                arg.push(best);
            }
        }
    }
    (y, arg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(batch: usize, in_c: usize, out_c: usize, h: usize, w: usize) -> ConvDims {
        ConvDims { batch, in_c, out_c, h, w }
    }

    /// Textbook zero-padded cross-correlation.
    fn naive(x: &[f64], k: &[f64], b: &[f64], d: &ConvDims) -> Vec<f64> {
        let mut y = vec![0.0; d.batch * d.out_c * d.h * d.w];
        for n in 0..d.batch {
            for o in 0..d.out_c {
                for i in 0..d.h as isize {
                    for j in 0..d.w as isize {
                        let mut s = b[o];
                        for c in 0..d.in_c {
                            for ky in 0..3isize {
                                for kx in 0..3isize {
                                    let (ii, jj) = (i + ky - 1, j + kx - 1);
                                    if ii < 0 || jj < 0 || ii >= d.h as isize || jj >= d.w as isize {
                                        continue;
                                    }
                                    s += k[((o * d.in_c + c) * 3 + ky as usize) * 3 + kx as usize]
                                        * x[((n * d.in_c + c) * d.h + ii as usize) * d.w + jj as usize];
                                }
                            }
                        }
                        y[((n * d.out_c + o) * d.h + i as usize) * d.w + j as usize] = s;
                    }
                }
            }
        }
        y
    }

    #[test]
    fn fast_conv_matches_naive() {
        let d = dims(2, 3, 4, 5, 7);
        let x: Vec<f64> = (0..2 * 3 * 35).map(|i| ((i * 37 % 17) as f64 - 8.0) / 5.0).collect();
        let k: Vec<f64> = (0..4 * 3 * 9).map(|i| ((i * 13 % 11) as f64 - 5.0) / 7.0).collect();
        let b = [0.1, -0.2, 0.3, 0.0];
        let fast = conv3x3_forward(&x, &k, &b, &d);
        let slow = naive(&x, &k, &b, &d);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pool_drops_odd_edge_and_picks_first_max() {
        let x = [1.0, 2.0, 9.0, 3.0, 4.0, 9.0, 9.0, 9.0, 9.0];
        let (y, arg) = maxpool2_forward(&x, 1, 3, 3);
        assert_eq!(y, vec![4.0]);
        assert_eq!(arg, vec![4]);
        let (_, arg) = maxpool2_forward(&[5.0; 4], 1, 2, 2);
        assert_eq!(arg, vec![0]);
    }
}
