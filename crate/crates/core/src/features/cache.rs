//! On-disk feature cache: two flat little-endian f32 grids per segment and a
//! shared JSON sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::mfcc::CepstrogramFeature;
use super::spectrogram::SpectrogramFeature;
use crate::dataset_io::Label;
use crate::preprocess::SegmentMeta;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub spectrogram: SpectrogramFeature,
    pub cepstrogram: CepstrogramFeature,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shapes {
    pub spectrogram: [usize; 2],
    pub cepstrogram: [usize; 2],
}

impl Default for Shapes {
    fn default() -> Self {
        Shapes {
            spectrogram: [SpectrogramFeature::ROWS, SpectrogramFeature::COLS],
            cepstrogram: [CepstrogramFeature::ROWS, CepstrogramFeature::COLS],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub segment_id: String,
    pub label: Label,
    pub subject: String,
    pub shapes: Shapes,
    pub recording_id: String,
    pub index: usize,
    pub pad_len: usize,
    /// Digest of the source audio the features were computed from.
    #[serde(default)]
    pub source_hash: String,
}

impl FeatureSidecar {
    pub fn new(meta: &SegmentMeta, source_hash: impl Into<String>) -> Self {
        FeatureSidecar {
            segment_id: meta.id(),
            label: meta.label,
            subject: meta.subject.clone(),
            shapes: Shapes::default(),
            recording_id: meta.recording_id.clone(),
            index: meta.index,
            pad_len: meta.pad_len,
            source_hash: source_hash.into(),
        }
    }

    pub fn meta(&self) -> SegmentMeta {
        SegmentMeta {
            recording_id: self.recording_id.clone(),
            index: self.index,
            label: self.label,
            subject: self.subject.clone(),
            pad_len: self.pad_len,
        }
    }

    pub fn path(dir: &Path, segment_id: &str) -> PathBuf {
        dir.join(format!("{segment_id}.json"))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))
    }
}

fn write_f32(path: &Path, values: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_f32(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 4 {
        return Err(Error::Corrupt(format!(
            "{}: expected {} values, found {} bytes",
            path.display(),
            expected,
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

impl FeatureSet {
    /// Writes `<id>.spec.f32`, `<id>.ceps.f32` and `<id>.json` into `dir`.
    pub fn write_cache(&self, dir: &Path, sidecar: &FeatureSidecar) -> Result<()> {
        let id = &sidecar.segment_id;
        write_f32(&dir.join(format!("{id}.spec.f32")), &self.spectrogram.grid)?;
        write_f32(&dir.join(format!("{id}.ceps.f32")), &self.cepstrogram.grid)?;
        let json = FeatureSidecar::path(dir, id);
        let text = serde_json::to_string_pretty(sidecar).expect("plain struct");
        fs::write(&json, text).map_err(|e| Error::io(&json, e))
    }

    pub fn read_cache(dir: &Path, segment_id: &str) -> Result<(FeatureSet, FeatureSidecar)> {
        let sidecar = FeatureSidecar::read(&FeatureSidecar::path(dir, segment_id))?;
        if sidecar.shapes != Shapes::default() {
            return Err(Error::Corrupt(format!(
                "{segment_id}: unexpected feature shapes {:?}",
                sidecar.shapes
            )));
        }
        let spec = read_f32(
            &dir.join(format!("{segment_id}.spec.f32")),
            SpectrogramFeature::ROWS * SpectrogramFeature::COLS,
        )?;
        let ceps = read_f32(
            &dir.join(format!("{segment_id}.ceps.f32")),
            CepstrogramFeature::ROWS * CepstrogramFeature::COLS,
        )?;
        Ok((
            FeatureSet {
                spectrogram: SpectrogramFeature { grid: spec },
                cepstrogram: CepstrogramFeature { grid: ceps },
            },
            sidecar,
        ))
    }

    /// Rounds both grids through f32, matching what the cache stores.
    pub fn quantized(&self) -> FeatureSet {
        let q = |v: &[f64]| v.iter().map(|&x| x as f32 as f64).collect();
        FeatureSet {
            spectrogram: SpectrogramFeature {
                grid: q(&self.spectrogram.grid),
            },
            cepstrogram: CepstrogramFeature {
                grid: q(&self.cepstrogram.grid),
            },
        }
    }
}
