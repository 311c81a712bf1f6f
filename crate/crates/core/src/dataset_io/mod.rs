//! Loading, resampling and cataloguing heart-sound recordings.

mod manifest;
mod recording;
mod resample;
mod wav;

pub use manifest::{build_manifest, Manifest, ManifestEntry, Rule, Rules};
pub use recording::{Label, Recording, Source};
pub use resample::{resample, Resampler};
pub use wav::{load_wav, write_wav_f32, WavAudio};

use std::path::Path;

use crate::{Result, SAMPLE_RATE};

/// Loads a manifest entry's audio and brings it to [`SAMPLE_RATE`].
pub fn ingest(entry: &ManifestEntry) -> Result<Recording> {
    let audio = load_wav(&entry.path)?;
    let samples = resample(&audio.samples, audio.rate, SAMPLE_RATE)?;
    Recording::new(
        entry.recording_id(),
        samples,
        entry.label,
        entry.subject.clone(),
        entry.source,
        entry.noisy,
    )
}

/// Loads any WAV file as an unlabeled recording (used for prediction).
pub fn ingest_unlabeled(path: &Path) -> Result<Vec<f64>> {
    let audio = load_wav(path)?;
    resample(&audio.samples, audio.rate, SAMPLE_RATE)
}
