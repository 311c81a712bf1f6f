//! Fixed-shape acoustic features per 4 s segment: a 65x61 log-power
//! spectrogram for the CNN branch and a 13x398 MFCC cepstrogram for the
//! BiLSTM branch.

mod cache;
mod mel;
mod mfcc;
mod spectral;
mod spectrogram;

pub use cache::{FeatureSet, FeatureSidecar};
pub use mel::{hz_to_mel, mel_to_hz, MelFilterbank};
pub use mfcc::{dct_ii_ortho, mfcc, CepstrogramFeature, MfccExtractor};
pub use spectral::{frame, hamming, periodogram, RealFft};
pub use spectrogram::{spectrogram, SpectrogramExtractor, SpectrogramFeature};

/// Floor added to (spectrogram) or clamping (MFCC) power before the log.
pub const LOG_FLOOR: f64 = 1e-10;

use crate::preprocess::Segment;
use crate::Result;

/// Both extractors, planned once and reused across segments.
#[derive(Debug, Clone)]
pub struct Featurizer {
    spectrogram: SpectrogramExtractor,
    mfcc: MfccExtractor,
}

impl Default for Featurizer {
    fn default() -> Self {
        Featurizer {
            spectrogram: SpectrogramExtractor::new(),
            mfcc: MfccExtractor::new(),
        }
    }
}

impl Featurizer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn compute(&self, samples: &[f64]) -> Result<FeatureSet> {
        Ok(FeatureSet {
            spectrogram: self.spectrogram.compute(samples)?,
            cepstrogram: self.mfcc.compute(samples)?,
        })
    }

    pub fn segment(&self, segment: &Segment) -> Result<FeatureSet> {
        self.compute(&segment.samples)
    }
}
