use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{featurize_recording, Example};
use crate::dataset_io::{ingest, ManifestEntry};
use crate::features::{FeatureSet, FeatureSidecar, Featurizer};
use crate::{Error, Result};

/// Bumped whenever the feature computation changes, invalidating caches.
const FEATURE_VERSION: &str = "murmur-features-1";

/// Per-recording record of which segments the cache holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordingMarker {
    pub recording_id: String,
    pub source_hash: String,
    pub segments: Vec<String>,
}

impl RecordingMarker {
    fn path(dir: &Path, recording_id: &str) -> PathBuf {
        dir.join(format!("{recording_id}.rec.json"))
    }

    fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))
    }
}

/// SHA-256 over the feature version tag and the raw file bytes.
pub fn source_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(FEATURE_VERSION.as_bytes());
    h.update(bytes);
    format!("{:x}", h.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Computed { segments: usize },
    Skipped { segments: usize },
}

fn fresh(dir: &Path, marker: &RecordingMarker, hash: &str) -> bool {
    marker.source_hash == hash
        && marker.segments.iter().all(|id| {
            FeatureSidecar::read(&FeatureSidecar::path(dir, id)).is_ok_and(|s| s.source_hash == hash)
                && dir.join(format!("{id}.spec.f32")).is_file()
                && dir.join(format!("{id}.ceps.f32")).is_file()
        })
}

/// Featurizes one manifest entry into `dir`, unless the cache already
/// holds features computed from identical audio.
pub fn featurize_to_cache(entry: &ManifestEntry, dir: &Path, featurizer: &Featurizer) -> Result<CacheStatus> {
    let bytes = fs::read(&entry.path).map_err(|e| Error::io(&entry.path, e))?;
    let hash = source_hash(&bytes);
    let id = entry.recording_id();
    let marker_path = RecordingMarker::path(dir, &id);
    if let Ok(marker) = RecordingMarker::read(&marker_path) {
        if fresh(dir, &marker, &hash) {
            return Ok(CacheStatus::Skipped {
                segments: marker.segments.len(),
            });
        }
    }
    let recording = ingest(entry)?;
    let examples = featurize_recording(&recording, featurizer)?;
    for e in &examples {
        e.features.write_cache(dir, &FeatureSidecar::new(&e.meta, hash.clone()))?;
    }
    let marker = RecordingMarker {
        recording_id: id,
        source_hash: hash,
        segments: examples.iter().map(|e| e.meta.id()).collect(),
    };
    let text = serde_json::to_string_pretty(&marker).expect("plain struct");
    fs::write(&marker_path, text).map_err(|e| Error::io(&marker_path, e))?;
    Ok(CacheStatus::Computed {
        segments: examples.len(),
    })
}

/// Every cached segment, ordered by recording id then segment index.
pub fn load_cache(dir: &Path) -> Result<Vec<Example>> {
    let listing = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut markers = Vec::new();
    for entry in listing {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.to_string_lossy().ends_with(".rec.json") {
            markers.push(path);
        }
    }
    markers.sort();
    if markers.is_empty() {
        return Err(Error::Validation(format!("no cached features in {}", dir.display())));
    }
    let mut out = Vec::new();
    for m in markers {
        for id in RecordingMarker::read(&m)?.segments {
            let (features, sidecar): (FeatureSet, FeatureSidecar) = FeatureSet::read_cache(dir, &id)?;
            out.push(Example {
                meta: sidecar.meta(),
                features,
            });
        }
    }
    Ok(out)
}
