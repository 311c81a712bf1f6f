//! Butterworth filters as second-order sections, applied forward-backward.

use std::f64::consts::PI;

use crate::{Error, Result, SAMPLE_RATE};

pub const LOWPASS_HZ: f64 = 500.0;
pub const HIGHPASS_HZ: f64 = 25.0;
pub const BANDPASS_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    LowPass,
    HighPass,
}

/// One biquad, `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sos {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Sos {
    fn gain_at_dc(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>()
    }

    /// Transposed direct-form II state after a long run of unit input.
    fn step_state(&self) -> [f64; 2] {
        let g = self.gain_at_dc();
        let z2 = self.b[2] - self.a[2] * g;
        let z1 = self.b[1] - self.a[1] * g + z2;
        [z1, z2]
    }

    fn run(&self, x: &mut [f64], mut z: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        for v in x.iter_mut() {
            let input = *v;
            let y = b0 * input + z[0];
            z[0] = b1 * input - a1 * y + z[1];
            z[1] = b2 * input - a2 * y;
            *v = y;
        }
    }
}

/// Digital Butterworth filter designed by the prewarped bilinear transform.
#[derive(Debug, Clone, PartialEq)]
pub struct Butterworth {
    pub kind: FilterKind,
    pub order: usize,
    pub cutoff_hz: f64,
    pub rate: f64,
    pub sections: Vec<Sos>,
}

impl Butterworth {
    pub fn new(kind: FilterKind, order: usize, cutoff_hz: f64, rate: f64) -> Result<Self> {
        if order == 0 || order % 2 != 0 {
            return Err(Error::Argument(format!("order must be even and positive, got {order}")));
        }
        if !(cutoff_hz > 0.0 && cutoff_hz < rate / 2.0) {
            return Err(Error::Argument(format!(
                "cutoff {cutoff_hz} Hz must lie in (0, {})",
                rate / 2.0
            )));
        }
        let w = (PI * cutoff_hz / rate).tan();
        let sections = (0..order / 2)
            .map(|k| {
                let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
                // analog section s^2 + a1 s + a0, mapped with s = (1 - z^-1)/(1 + z^-1)
                let a1 = -2.0 * theta.cos() * w;
                let a0 = w * w;
                let d0 = 1.0 + a1 + a0;
                let a = [1.0, (2.0 * a0 - 2.0) / d0, (1.0 - a1 + a0) / d0];
                let b = match kind {
                    FilterKind::LowPass => [a0 / d0, 2.0 * a0 / d0, a0 / d0],
                    FilterKind::HighPass => [1.0 / d0, -2.0 / d0, 1.0 / d0],
                };
                Sos { b, a }
            })
            .collect();
        Ok(Butterworth {
            kind,
            order,
            cutoff_hz,
            rate,
            sections,
        })
    }

    pub fn lowpass(order: usize, cutoff_hz: f64, rate: f64) -> Result<Self> {
        Self::new(FilterKind::LowPass, order, cutoff_hz, rate)
    }

    pub fn highpass(order: usize, cutoff_hz: f64, rate: f64) -> Result<Self> {
        Self::new(FilterKind::HighPass, order, cutoff_hz, rate)
    }

    /// |H(e^{jw})| of one forward pass, evaluated from the section coefficients.
    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / self.rate;
        let z1 = num_complex::Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        self.sections
            .iter()
            .map(|s| {
                let num = s.b[0] + s.b[1] * z1 + s.b[2] * z2;
                let den = s.a[0] + s.a[1] * z1 + s.a[2] * z2;
                (num / den).norm()
            })
            .product()
    }

    /// Samples of reflection padding added at each end by [`Self::filtfilt`].
    pub fn pad_len(&self) -> usize {
        3 * self.order
    }

    /// Single causal pass, zero initial state.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            s.run(&mut y, [0.0, 0.0]);
        }
        y
    }

    fn pass_with_steady_state(&self, x: &mut [f64]) {
        let mut scale = x[0];
        for s in &self.sections {
            let [z1, z2] = s.step_state();
            s.run(x, [z1 * scale, z2 * scale]);
            scale *= s.gain_at_dc();
        }
    }

    /// Zero-phase forward-backward application.
    ///
    /// The input is extended at both ends by an odd reflection of
    /// [`Self::pad_len`] samples and each pass starts from the steady state of
    /// its first sample; the padding is trimmed from the result.
    pub fn filtfilt(&self, x: &[f64]) -> Result<Vec<f64>> {
        let pad = self.pad_len();
        if x.len() <= pad {
            return Err(Error::DegenerateInput(format!(
                "{} samples is too short for zero-phase filtering (need more than {pad})",
                x.len()
            )));
        }
        let n = x.len();
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        self.pass_with_steady_state(&mut ext);
        ext.reverse();
        self.pass_with_steady_state(&mut ext);
        ext.reverse();
        Ok(ext[pad..pad + n].to_vec())
    }
}

/// Low-pass at 500 Hz then high-pass at 25 Hz, each a 4th-order Butterworth
/// applied zero-phase. Input is at 2000 Hz.
pub fn bandpass(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::DegenerateInput("empty signal".into()));
    }
    let rate = SAMPLE_RATE as f64;
    let lp = Butterworth::lowpass(BANDPASS_ORDER, LOWPASS_HZ, rate)?;
    let hp = Butterworth::highpass(BANDPASS_ORDER, HIGHPASS_HZ, rate)?;
    hp.filtfilt(&lp.filtfilt(samples)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sine(freq: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 / 2000.0).sin())
            .collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    /// Analytic Butterworth magnitude under the prewarped bilinear map.
    fn butterworth_gain(kind: FilterKind, order: usize, fc: f64, f: f64) -> f64 {
        let r = (PI * f / 2000.0).tan() / (PI * fc / 2000.0).tan();
        let r = match kind {
            FilterKind::LowPass => r,
            FilterKind::HighPass => 1.0 / r,
        };
        1.0 / (1.0 + r.powi(2 * order as i32)).sqrt()
    }

    /// Single-frequency DFT amplitude.
    fn dft_amplitude(x: &[f64], f: f64) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (i, &v) in x.iter().enumerate() {
            let a = 2.0 * PI * f * i as f64 / 2000.0;
            re += v * a.cos();
            im -= v * a.sin();
        }
        (re * re + im * im).sqrt() * 2.0 / x.len() as f64
    }

    #[test]
    fn section_response_matches_closed_form() {
        for kind in [FilterKind::LowPass, FilterKind::HighPass] {
            for fc in [25.0, 500.0, 731.0] {
                let f = Butterworth::new(kind, 4, fc, 2000.0).unwrap();
                for probe in [5.0, 25.0, 60.0, 100.0, 500.0, 800.0, 990.0] {
                    let want = butterworth_gain(kind, 4, fc, probe);
                    let got = f.magnitude(probe);
                    assert!((want - got).abs() < 1e-9, "{kind:?} fc={fc} f={probe}");
                }
            }
        }
    }

    #[test]
    fn dc_is_removed() {
        let y = bandpass(&vec![0.7; 8000]).unwrap();
        assert_eq!(y.len(), 8000);
        let mean = y[200..7800].iter().sum::<f64>() / 7600.0;
        assert!(mean.abs() < 1e-3, "mean {mean}");
        assert!(y.iter().all(|v| v.abs() < 1e-3));
    }

    #[test]
    fn passband_tone_survives() {
        let x = sine(100.0, 8000);
        let y = bandpass(&x).unwrap();
        let ratio = dft_amplitude(&y, 100.0) / dft_amplitude(&x, 100.0);
        assert!((ratio - 1.0).abs() < 0.05, "dft ratio {ratio}");
        assert!((rms(&y) / rms(&x) - 1.0).abs() < 0.05);
    }

    #[test]
    fn stopband_tone_is_attenuated() {
        let x = sine(800.0, 8000);
        let y = bandpass(&x).unwrap();
        let analytic = butterworth_gain(FilterKind::LowPass, 4, 500.0, 800.0).powi(2)
            * butterworth_gain(FilterKind::HighPass, 4, 25.0, 800.0).powi(2);
        let ratio = rms(&y[100..7900]) / rms(&x[100..7900]);
        assert!(analytic < 0.1);
        assert!(ratio < 0.1, "rms ratio {ratio}");
        assert!((ratio - analytic).abs() < 1e-3, "{ratio} vs {analytic}");
    }

    #[test]
    fn zero_phase_keeps_peak_position() {
        let mut x = vec![0.0; 4000];
        for (i, v) in x.iter_mut().enumerate() {
            let t = (i as f64 - 2000.0) / 40.0;
            *v = (-t * t).exp() * (2.0 * PI * 80.0 * i as f64 / 2000.0).cos();
        }
        let y = bandpass(&x).unwrap();
        let peak = |s: &[f64]| {
            s.iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .unwrap()
                .0
        };
        assert_eq!(peak(&x), peak(&y));
    }

    #[test]
    fn too_short_is_degenerate() {
        assert!(matches!(bandpass(&[1.0; 12]), Err(Error::DegenerateInput(_))));
        assert!(matches!(bandpass(&[]), Err(Error::DegenerateInput(_))));
        assert!(bandpass(&[1.0; 13]).is_ok());
    }

    #[test]
    fn rejects_bad_designs() {
        assert!(Butterworth::lowpass(3, 100.0, 2000.0).is_err());
        assert!(Butterworth::lowpass(4, 1000.0, 2000.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn bandpass_is_linear(
            x in prop::collection::vec(-1.0f64..1.0, 300),
            y in prop::collection::vec(-1.0f64..1.0, 300),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let mix: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
            let lhs = bandpass(&mix).unwrap();
            let fx = bandpass(&x).unwrap();
            let fy = bandpass(&y).unwrap();
            let scale = lhs.iter().fold(1e-12f64, |m, v| m.max(v.abs()));
            for i in 0..lhs.len() {
                let rhs = a * fx[i] + b * fy[i];
                prop_assert!((lhs[i] - rhs).abs() <= 1e-9 * scale.max(1.0));
            }
        }
    }
}
