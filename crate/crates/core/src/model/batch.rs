use serde::{Deserialize, Serialize};

use crate::dataset_io::Label;
use crate::features::{CepstrogramFeature, FeatureSet, SpectrogramFeature};
use crate::nn::{one_hot, Tensor};
use crate::{Error, Result};

/// Aligned network inputs: row `i` of both tensors describes the same segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `[batch, 1, 65, 61]`
    pub spec: Tensor,
    /// `[batch, 398, 13]`, frames first.
    pub ceps: Tensor,
    /// Class index per row (0 normal, 1 murmur).
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn from_features(features: &[&FeatureSet], labels: &[Label]) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::Argument(format!(
                "{} feature sets but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let n = features.len();
        let mut spec = Vec::with_capacity(n * SpectrogramFeature::ROWS * SpectrogramFeature::COLS);
        let mut ceps = Vec::with_capacity(n * CepstrogramFeature::ROWS * CepstrogramFeature::COLS);
        for f in features {
            spec.extend_from_slice(&f.spectrogram.grid);
            ceps.extend(f.cepstrogram.time_major());
        }
        Ok(Batch {
            spec: Tensor::new([n, 1, SpectrogramFeature::ROWS, SpectrogramFeature::COLS], spec)?,
            ceps: Tensor::new([n, CepstrogramFeature::COLS, CepstrogramFeature::ROWS], ceps)?,
            labels: labels.iter().map(|l| l.index()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn one_hot(&self) -> Tensor {
        one_hot(&self.labels, 2)
    }
}

/// Affine standardization applied to raw features before the network:
/// one mean/std for the whole spectrogram, one per MFCC coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    pub spec_mean: f64,
    pub spec_std: f64,
    pub ceps_mean: Vec<f64>,
    pub ceps_std: Vec<f64>,
}

const MIN_STD: f64 = 1e-8;

impl InputScaling {
    pub fn identity() -> Self {
        InputScaling {
            spec_mean: 0.0,
            spec_std: 1.0,
            ceps_mean: vec![0.0; CepstrogramFeature::ROWS],
            ceps_std: vec![1.0; CepstrogramFeature::ROWS],
        }
    }

    /// Statistics over every value of the given (training) features.
    pub fn fit<'a>(features: impl IntoIterator<Item = &'a FeatureSet>) -> Result<Self> {
        let rows = CepstrogramFeature::ROWS;
        let (mut n_spec, mut s1, mut s2) = (0usize, 0.0, 0.0);
        let mut n_ceps = 0usize;
        let mut c1 = vec![0.0; rows];
        let mut c2 = vec![0.0; rows];
        for f in features {
            for &v in &f.spectrogram.grid {
                s1 += v;
                s2 += v * v;
            }
            n_spec += f.spectrogram.grid.len();
            for (c, row) in f.cepstrogram.grid.chunks_exact(CepstrogramFeature::COLS).enumerate() {
                for &v in row {
                    c1[c] += v;
                    c2[c] += v * v;
                }
            }
            n_ceps += CepstrogramFeature::COLS;
        }
        if n_spec == 0 {
            return Err(Error::Argument("cannot fit input scaling on no features".into()));
        }
        let stats = |sum: f64, sq: f64, n: usize| {
            let mean = sum / n as f64;
            let var = (sq / n as f64 - mean * mean).max(0.0);
            let std = var.sqrt();
            (mean, if std > MIN_STD { std } else { 1.0 })
        };
        let (spec_mean, spec_std) = stats(s1, s2, n_spec);
        let (ceps_mean, ceps_std) = (0..rows).map(|c| stats(c1[c], c2[c], n_ceps)).unzip();
        Ok(InputScaling {
            spec_mean,
            spec_std,
            ceps_mean,
            ceps_std,
        })
    }

    pub fn spec(&self, spec: &Tensor) -> Tensor {
        let (m, s) = (self.spec_mean, self.spec_std);
        Tensor::new(spec.shape().to_vec(), spec.data().iter().map(|v| (v - m) / s).collect())
            .expect("same shape")
    }

    /// Scales the trailing (coefficient) axis of a frames-first batch.
    pub fn ceps(&self, ceps: &Tensor) -> Result<Tensor> {
        let k = self.ceps_mean.len();
        if ceps.shape().last() != Some(&k) {
            return Err(Error::Shape(format!("cepstrogram batch {:?} does not end in {k}", ceps.shape())));
        }
        let data = ceps
            .data()
            .chunks_exact(k)
            .flat_map(|frame| frame.iter().enumerate().map(|(c, v)| (v - self.ceps_mean[c]) / self.ceps_std[c]))
            .collect();
        Tensor::new(ceps.shape().to_vec(), data)
    }

    pub fn apply(&self, batch: &Batch) -> Result<(Tensor, Tensor)> {
        Ok((self.spec(&batch.spec), self.ceps(&batch.ceps)?))
    }

    pub fn is_finite(&self) -> bool {
        self.spec_mean.is_finite()
            && self.spec_std.is_finite()
            && self.ceps_mean.iter().chain(&self.ceps_std).all(|v| v.is_finite())
    }
}
