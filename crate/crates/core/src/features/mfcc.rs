use serde::{Deserialize, Serialize};

use super::mel::MelFilterbank;
use super::spectral::{frame, hamming, RealFft};
use super::LOG_FLOOR;
use crate::preprocess::Segment;
use crate::{Error, Result, SEGMENT_LEN};

/// 25 ms at 2000 Hz.
const FRAME_LEN: usize = 50;
/// 10 ms at 2000 Hz.
const STEP: usize = 20;
const DFT_LEN: usize = 128;

/// MFCC sequence, 13 coefficient rows by 398 frame columns, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CepstrogramFeature {
    pub grid: Vec<f64>,
}

impl CepstrogramFeature {
    pub const ROWS: usize = 13;
    pub const COLS: usize = 398;
    pub const FRAME_STEP_S: f64 = 0.010;

    pub fn shape(&self) -> (usize, usize) {
        (Self::ROWS, Self::COLS)
    }

    pub fn at(&self, coef: usize, frame: usize) -> f64 {
        self.grid[coef * Self::COLS + frame]
    }

    /// Frames-first layout (398 x 13), the order the recurrent branch consumes.
    pub fn time_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.grid.len());
        for t in 0..Self::COLS {
            for c in 0..Self::ROWS {
                out.push(self.at(c, t));
            }
        }
        out
    }
}

/// Orthonormal DCT-II of `x`, first `n_keep` coefficients.
pub fn dct_ii_ortho(x: &[f64], n_keep: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..n_keep)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            scale
                * x.iter()
                    .enumerate()
                    .map(|(i, v)| {
                        v * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos()
                    })
                    .sum::<f64>()
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct MfccExtractor {
    window: Vec<f64>,
    fft: RealFft,
    bank: MelFilterbank,
    /// Row-major 13 x 26 DCT-II basis.
    dct: Vec<f64>,
}

impl Default for MfccExtractor {
    fn default() -> Self {
        Self::new()
    }
}

impl MfccExtractor {
    pub fn new() -> Self {
        Self::with_filterbank(MelFilterbank::standard())
    }

    pub fn with_filterbank(bank: MelFilterbank) -> Self {
        let n = bank.n_filters;
        let mut dct = Vec::with_capacity(CepstrogramFeature::ROWS * n);
        for k in 0..CepstrogramFeature::ROWS {
            let mut unit = vec![0.0; n];
            for i in 0..n {
                unit.iter_mut().for_each(|u| *u = 0.0);
                unit[i] = 1.0;
                dct.push(dct_ii_ortho(&unit, k + 1)[k]);
            }
        }
        MfccExtractor {
            window: hamming(FRAME_LEN),
            fft: RealFft::new(DFT_LEN),
            bank,
            dct,
        }
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.bank
    }

    /// Mel energies -> natural log (clamped at the floor) -> DCT-II, 13 values.
    pub fn cepstrum_from_power(&self, power: &[f64]) -> Vec<f64> {
        let log_e: Vec<f64> = self
            .bank
            .apply(power)
            .into_iter()
            .map(|e| e.max(LOG_FLOOR).ln())
            .collect();
        let n = self.bank.n_filters;
        (0..CepstrogramFeature::ROWS)
            .map(|k| {
                self.dct[k * n..(k + 1) * n]
                    .iter()
                    .zip(&log_e)
                    .map(|(b, v)| b * v)
                    .sum()
            })
            .collect()
    }

    pub fn compute(&self, samples: &[f64]) -> Result<CepstrogramFeature> {
        if samples.len() != SEGMENT_LEN {
            return Err(Error::Argument(format!(
                "mfcc expects {SEGMENT_LEN} samples, got {}",
                samples.len()
            )));
        }
        let frames = frame(samples, FRAME_LEN, STEP)?;
        debug_assert_eq!(frames.len(), CepstrogramFeature::COLS);
        let mut grid = vec![0.0; CepstrogramFeature::ROWS * CepstrogramFeature::COLS];
        let mut windowed = [0.0; FRAME_LEN];
        for (t, f) in frames.iter().enumerate() {
            for ((dst, &x), &w) in windowed.iter_mut().zip(f.iter()).zip(&self.window) {
                *dst = x * w;
            }
            let coeffs = self.cepstrum_from_power(&self.fft.power(&windowed));
            for (c, v) in coeffs.into_iter().enumerate() {
                grid[c * CepstrogramFeature::COLS + t] = v;
            }
        }
        Ok(CepstrogramFeature { grid })
    }
}

/// Cepstrogram of one segment.
pub fn mfcc(segment: &Segment) -> Result<CepstrogramFeature> {
    MfccExtractor::new().compute(&segment.samples)
}
