use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, SAMPLE_RATE};

/// The two classes. There is no third class anywhere in the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Murmur,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Normal, Label::Murmur];

    /// Output-node index of the class (softmax column).
    pub fn index(self) -> usize {
        match self {
            Label::Normal => 0,
            Label::Murmur => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::Normal),
            1 => Some(Label::Murmur),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Murmur => "murmur",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" => Ok(Label::Normal),
            "murmur" => Ok(Label::Murmur),
            other => Err(Error::Validation(format!("unknown label {other:?}"))),
        }
    }
}

/// Which collection a recording came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Source {
    /// University of Michigan heart sound & murmur library.
    D1,
    /// PASCAL classifying heart sounds challenge.
    D2,
    /// PhysioNet/CinC 2016 challenge (normal recordings only).
    D3,
    Synthetic,
    External,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::D1 => "D1",
            Source::D2 => "D2",
            Source::D3 => "D3",
            Source::Synthetic => "Synthetic",
            Source::External => "External",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "d1" => Ok(Source::D1),
            "d2" => Ok(Source::D2),
            "d3" => Ok(Source::D3),
            "synthetic" => Ok(Source::Synthetic),
            "external" => Ok(Source::External),
            other => Err(Error::Validation(format!("unknown source {other:?}"))),
        }
    }
}

/// One labeled heart-sound recording at [`SAMPLE_RATE`].
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub id: String,
    pub samples: Vec<f64>,
    pub rate: u32,
    pub label: Label,
    pub subject: String,
    pub source: Source,
    pub noisy: bool,
}

impl Recording {
    /// Builds a recording, enforcing the post-ingestion invariants.
    pub fn new(
        id: impl Into<String>,
        samples: Vec<f64>,
        label: Label,
        subject: impl Into<String>,
        source: Source,
        noisy: bool,
    ) -> Result<Self> {
        let id = id.into();
        let subject = subject.into();
        if samples.is_empty() {
            return Err(Error::Validation(format!("recording {id} has no samples")));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "recording {id} has a non-finite sample at index {i}"
            )));
        }
        let subject = if subject.is_empty() { id.clone() } else { subject };
        Ok(Recording {
            id,
            samples,
            rate: SAMPLE_RATE,
            label,
            subject,
            source,
            noisy,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.rate as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_round_trips_through_text() {
        for l in Label::ALL {
            assert_eq!(l.as_str().parse::<Label>().unwrap(), l);
            assert_eq!(Label::from_index(l.index()), Some(l));
        }
        assert!("abnormal".parse::<Label>().is_err());
    }

    #[test]
    fn recording_rejects_empty_and_nan() {
        assert!(Recording::new("a", vec![], Label::Normal, "a", Source::D1, false).is_err());
        assert!(
            Recording::new("a", vec![0.0, f64::NAN], Label::Normal, "a", Source::D1, false)
                .is_err()
        );
        let r = Recording::new("a", vec![0.0; 10], Label::Murmur, "", Source::D2, true).unwrap();
        assert_eq!(r.subject, "a");
        assert_eq!(r.rate, SAMPLE_RATE);
    }
}
