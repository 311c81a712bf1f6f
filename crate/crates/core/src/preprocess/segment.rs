use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset_io::{Label, Recording};
use crate::{Error, Result, SEGMENT_LEN};

/// Shortest residual kept (2 s); shorter tails are dropped.
pub const MIN_RESIDUAL: usize = SEGMENT_LEN / 2;

/// Everything about a segment except its samples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentMeta {
    pub recording_id: String,
    pub index: usize,
    pub label: Label,
    pub subject: String,
    pub pad_len: usize,
}

impl SegmentMeta {
    pub fn id(&self) -> String {
        format!("{}_{:03}", self.recording_id, self.index)
    }
}

/// A 4 s analysis unit: exactly [`SEGMENT_LEN`] samples at 2000 Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub meta: SegmentMeta,
    pub samples: Vec<f64>,
}

impl Segment {
    pub fn id(&self) -> String {
        self.meta.id()
    }

    pub fn label(&self) -> Label {
        self.meta.label
    }

    /// Writes the flat little-endian f32 sample file and its JSON sidecar.
    pub fn write_cache(&self, dir: &Path) -> Result<()> {
        let id = self.id();
        let bin = dir.join(format!("{id}.seg.f32"));
        let bytes: Vec<u8> = self
            .samples
            .iter()
            .flat_map(|&v| (v as f32).to_le_bytes())
            .collect();
        fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
        let json = dir.join(format!("{id}.seg.json"));
        let text = serde_json::to_string_pretty(&self.meta).expect("plain struct");
        fs::write(&json, text).map_err(|e| Error::io(&json, e))
    }

    pub fn read_cache(dir: &Path, id: &str) -> Result<Segment> {
        let json = dir.join(format!("{id}.seg.json"));
        let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
        let meta: SegmentMeta =
            serde_json::from_str(&text).map_err(|e| Error::Corrupt(format!("{}: {e}", json.display())))?;
        let bin = dir.join(format!("{id}.seg.f32"));
        let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
        if bytes.len() != SEGMENT_LEN * 4 {
            return Err(Error::Corrupt(format!(
                "{}: expected {} bytes, found {}",
                bin.display(),
                SEGMENT_LEN * 4,
                bytes.len()
            )));
        }
        let samples = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Ok(Segment { meta, samples })
    }
}

/// Cuts a conditioned recording into non-overlapping 8000-sample segments.
///
/// A residual of at least 4000 samples is zero-padded to full length; a
/// shorter residual is discarded. Recordings under 2 s yield no segments.
pub fn segment(recording: &Recording) -> Vec<Segment> {
    let x = &recording.samples;
    let mut out = Vec::new();
    let mut start = 0;
    while start < x.len() {
        let take = (x.len() - start).min(SEGMENT_LEN);
        if take < MIN_RESIDUAL {
            break;
        }
        let mut samples = x[start..start + take].to_vec();
        samples.resize(SEGMENT_LEN, 0.0);
        out.push(Segment {
            meta: SegmentMeta {
                recording_id: recording.id.clone(),
                index: out.len(),
                label: recording.label,
                subject: recording.subject.clone(),
                pad_len: SEGMENT_LEN - take,
            },
            samples,
        });
        start += take;
    }
    out
}
