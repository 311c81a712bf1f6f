use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result};

/// Hamming window, `0.54 - 0.46 cos(2 pi n / (L - 1))`.
pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = (len - 1) as f64;
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / denom).cos())
        .collect()
}

/// Splits `samples` into `floor((N - frame_len) / step) + 1` contiguous frames.
pub fn frame(samples: &[f64], frame_len: usize, step: usize) -> Result<Vec<&[f64]>> {
    if frame_len == 0 || step == 0 {
        return Err(Error::Argument("frame length and step must be positive".into()));
    }
    if frame_len > samples.len() {
        return Err(Error::Argument(format!(
            "frame length {frame_len} exceeds signal length {}",
            samples.len()
        )));
    }
    let count = (samples.len() - frame_len) / step + 1;
    Ok((0..count)
        .map(|i| &samples[i * step..i * step + frame_len])
        .collect())
}

/// A planned forward FFT of fixed length over real input.
#[derive(Clone)]
pub struct RealFft {
    len: usize,
    plan: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for RealFft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RealFft").field("len", &self.len).finish()
    }
}

impl RealFft {
    pub fn new(len: usize) -> Self {
        let plan = FftPlanner::new().plan_fft_forward(len);
        RealFft { len, plan }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Full complex spectrum of `x` zero-padded to the transform length.
    pub fn spectrum(&self, x: &[f64]) -> Vec<Complex64> {
        assert!(x.len() <= self.len, "input longer than transform");
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        buf.resize(self.len, Complex64::new(0.0, 0.0));
        self.plan.process(&mut buf);
        buf
    }

    /// `|X(k)|^2 / len` for `k = 0..=len/2`.
    pub fn power(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len as f64;
        self.spectrum(x)[..=self.len / 2]
            .iter()
            .map(|c| c.norm_sqr() / n)
            .collect()
    }
}

/// One-sided power estimate of `frame` zero-padded to `dft_len`.
pub fn periodogram(frame: &[f64], dft_len: usize) -> Result<Vec<f64>> {
    if frame.len() > dft_len {
        return Err(Error::Argument(format!(
            "frame of {} samples does not fit a {dft_len}-point DFT",
            frame.len()
        )));
    }
    Ok(RealFft::new(dft_len).power(frame))
}
