//! # murmur-core
//!
//! Murmur detection in phonocardiogram (PCG) recordings.
//!
//! The crate covers the whole chain from WAV files to cross-validated
//! metrics:
//!
//! ```text
//! WAV -> resample (2 kHz) -> band-pass + spike removal -> 4 s segments
//!     -> spectrogram (65x61)  --> CNN branch    \
//!     -> cepstrogram (13x398) --> BiLSTM branch  -> fused head -> softmax
//! ```
//!
//! - [`dataset_io`]: WAV loading, resampling, labeled manifests.
//! - [`preprocess`]: zero-phase Butterworth filtering, spike removal, segmentation.
//! - [`features`]: FFT spectrogram and MFCC cepstrogram.
//! - [`nn`]: a small reverse-mode autodiff engine with the layers the model needs.
//! - [`model`]: the parallel CNN + BiLSTM network and its parameters.
//! - [`pipeline`]: patient-disjoint folds, class balancing, training, metrics and
//!   a synthetic PCG generator for dataset-free runs.

pub mod config;
pub mod dataset_io;
pub mod error;
pub mod features;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod preprocess;

pub use error::{Error, Result};

/// Sampling rate every recording is brought to at ingestion.
pub const SAMPLE_RATE: u32 = 2000;

/// Segment length in samples (4 s at [`SAMPLE_RATE`]).
pub const SEGMENT_LEN: usize = 8000;
