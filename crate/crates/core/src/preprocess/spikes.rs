//! Iterative spike removal driven by per-window maximum absolute amplitude.

/// Threshold multiple of the median window MAA above which a window holds a spike.
const SPIKE_RATIO: f64 = 3.0;

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn max_abs(w: &[f64]) -> f64 {
    w.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Index of the first maximum by `key`.
fn first_argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Removes transient spikes from a PCG signal.
///
/// The signal is cut into 500 ms windows (trailing samples that do not fill
/// a window are left alone). While the largest window MAA exceeds three times
/// the median MAA, the loudest sample of that window is located, the span
/// between the sign changes that enclose it is set to zero, and the MAAs are
/// recomputed. Output length equals input length.
pub fn remove_spikes(samples: &[f64], rate: u32) -> Vec<f64> {
    let mut out = samples.to_vec();
    let win = (rate as f64 / 2.0).round() as usize;
    let n_windows = if win == 0 { 0 } else { samples.len() / win };
    if n_windows == 0 {
        return out;
    }

    let mut maa: Vec<f64> = out.chunks_exact(win).map(max_abs).collect();
    loop {
        let threshold = SPIKE_RATIO * median(&maa);
        let w = first_argmax(maa.iter().copied());
        if maa[w] <= threshold {
            break;
        }
        let frame = &mut out[w * win..(w + 1) * win];
        let spike = first_argmax(frame.iter().map(|v| v.abs()));

        // crossing[i]: strict sign flip between samples i and i + 1
        let crossing = |i: usize| i + 1 < win && (sign(frame[i + 1]) - sign(frame[i])).abs() > 1;
        let start = (0..=spike).rev().find(|&i| crossing(i)).unwrap_or(0);
        let end = (spike + 1..win).find(|&i| crossing(i)).unwrap_or(win - 1);
        frame[start..=end].iter_mut().for_each(|v| *v = 0.0);

        maa[w] = max_abs(frame);
    }
    out
}
