//! Rational-ratio polyphase resampling with a Kaiser-windowed sinc kernel.

use crate::{Error, Result};

const TAPS: usize = 64;
const HALF: f64 = (TAPS / 2) as f64;
const KAISER_BETA: f64 = 8.0;
const CUTOFF_FRACTION: f64 = 0.45;
/// Above this many phases the kernel is evaluated per output sample instead of tabulated.
const MAX_TABLE_PHASES: usize = 4096;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let half_sq = (x / 2.0) * (x / 2.0);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= half_sq / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// A fixed src→dst resampler. Construction precomputes the polyphase table.
#[derive(Debug, Clone)]
pub struct Resampler {
    src: u32,
    dst: u32,
    up: u64,
    down: u64,
    /// Cutoff in cycles per input sample.
    fc: f64,
    /// `up` rows of `TAPS` coefficients, each row summing to one.
    table: Option<Vec<f64>>,
}

impl Resampler {
    pub fn new(src_rate: u32, dst_rate: u32) -> Result<Self> {
        if src_rate == 0 || dst_rate == 0 {
            return Err(Error::Argument(format!(
                "sample rates must be positive (got {src_rate} -> {dst_rate})"
            )));
        }
        let g = gcd(src_rate as u64, dst_rate as u64);
        let up = dst_rate as u64 / g;
        let down = src_rate as u64 / g;
        let fc = CUTOFF_FRACTION * src_rate.min(dst_rate) as f64 / src_rate as f64;
        let mut r = Resampler {
            src: src_rate,
            dst: dst_rate,
            up,
            down,
            fc,
            table: None,
        };
        if (up as usize) <= MAX_TABLE_PHASES {
            let mut table = Vec::with_capacity(up as usize * TAPS);
            for p in 0..up {
                table.extend(r.phase_kernel(p as f64 / up as f64));
            }
            r.table = Some(table);
        }
        Ok(r)
    }

    /// Kernel taps for an output instant `frac` input samples after the
    /// integer anchor; tap j multiplies input sample `anchor - 31 + j`.
    fn phase_kernel(&self, frac: f64) -> [f64; TAPS] {
        let i0_beta = bessel_i0(KAISER_BETA);
        let mut taps = [0.0; TAPS];
        for (j, tap) in taps.iter_mut().enumerate() {
            let d = frac + (HALF - 1.0) - j as f64;
            let r = d / HALF;
            let w = if r.abs() >= 1.0 {
                0.0
            } else {
                bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / i0_beta
            };
            *tap = 2.0 * self.fc * sinc(2.0 * self.fc * d) * w;
        }
        let sum: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= sum);
        taps
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        let num = input_len as u128 * self.dst as u128;
        let src = self.src as u128;
        ((num + src / 2) / src) as usize
    }

    pub fn process(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.is_empty() {
            return Err(Error::Argument("cannot resample an empty signal".into()));
        }
        if self.src == self.dst {
            return Ok(input.to_vec());
        }
        let n_out = self.output_len(input.len());
        let mut out = Vec::with_capacity(n_out);
        let mut scratch;
        for n in 0..n_out as u64 {
            let pos = n * self.down;
            let anchor = (pos / self.up) as i64;
            let phase = pos % self.up;
            let taps: &[f64] = match &self.table {
                Some(t) => &t[phase as usize * TAPS..(phase as usize + 1) * TAPS],
                None => {
                    scratch = self.phase_kernel(phase as f64 / self.up as f64);
                    &scratch
                }
            };
            let start = anchor - (HALF as i64 - 1);
            let mut acc = 0.0;
            for (j, &c) in taps.iter().enumerate() {
                let k = start + j as i64;
                if k >= 0 && (k as usize) < input.len() {
                    acc += c * input[k as usize];
                }
            }
            out.push(acc);
        }
        Ok(out)
    }
}

/// Resamples `samples` from `src_rate` to `dst_rate`.
///
/// Output length is `round(len * dst / src)`. Equal rates pass the input through.
pub fn resample(samples: &[f64], src_rate: u32, dst_rate: u32) -> Result<Vec<f64>> {
    Resampler::new(src_rate, dst_rate)?.process(samples)
}
