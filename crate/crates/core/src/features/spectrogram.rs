use serde::{Deserialize, Serialize};

use super::spectral::{frame, hamming, RealFft};
use super::LOG_FLOOR;
use crate::preprocess::Segment;
use crate::{Error, Result, SEGMENT_LEN};

/// 128 ms at 2000 Hz.
const FRAME_LEN: usize = 256;
/// 64 ms at 2000 Hz.
const STEP: usize = 128;

/// Log-power spectrogram, 65 frequency rows by 61 time columns, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramFeature {
    pub grid: Vec<f64>,
}

impl SpectrogramFeature {
    pub const ROWS: usize = 65;
    pub const COLS: usize = 61;
    /// Frequency spacing of the kept bins.
    pub const BIN_HZ: f64 = 15.625;
    pub const FRAME_STEP_S: f64 = 0.064;

    pub fn shape(&self) -> (usize, usize) {
        (Self::ROWS, Self::COLS)
    }

    pub fn at(&self, bin: usize, frame: usize) -> f64 {
        self.grid[bin * Self::COLS + frame]
    }

    pub fn column(&self, frame: usize) -> Vec<f64> {
        (0..Self::ROWS).map(|b| self.at(b, frame)).collect()
    }
}

/// Hamming(256) frames at a 128-sample hop, 256-point FFT, even bins 0..=128.
///
/// Keeping every other bin of the 256-point transform gives the 65-bin,
/// 15.625 Hz grid of a 128-point transform while each frame still spans
/// 128 ms.
#[derive(Debug, Clone)]
pub struct SpectrogramExtractor {
    window: Vec<f64>,
    fft: RealFft,
}

impl Default for SpectrogramExtractor {
    fn default() -> Self {
        Self::new()
    }
}

impl SpectrogramExtractor {
    pub fn new() -> Self {
        SpectrogramExtractor {
            window: hamming(FRAME_LEN),
            fft: RealFft::new(FRAME_LEN),
        }
    }

    pub fn compute(&self, samples: &[f64]) -> Result<SpectrogramFeature> {
        if samples.len() != SEGMENT_LEN {
            return Err(Error::Argument(format!(
                "spectrogram expects {SEGMENT_LEN} samples, got {}",
                samples.len()
            )));
        }
        let frames = frame(samples, FRAME_LEN, STEP)?;
        debug_assert_eq!(frames.len(), SpectrogramFeature::COLS);
        let mut grid = vec![0.0; SpectrogramFeature::ROWS * SpectrogramFeature::COLS];
        let mut windowed = vec![0.0; FRAME_LEN];
        for (t, f) in frames.iter().enumerate() {
            for ((dst, &x), &w) in windowed.iter_mut().zip(f.iter()).zip(&self.window) {
                *dst = x * w;
            }
            let power = self.fft.power(&windowed);
            for b in 0..SpectrogramFeature::ROWS {
                grid[b * SpectrogramFeature::COLS + t] = (power[2 * b] + LOG_FLOOR).ln();
            }
        }
        Ok(SpectrogramFeature { grid })
    }
}

/// Spectrogram of one segment.
pub fn spectrogram(segment: &Segment) -> Result<SpectrogramFeature> {
    SpectrogramExtractor::new().compute(&segment.samples)
}
