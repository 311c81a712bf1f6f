//! Cross-validation pipeline: patient-disjoint folds, minority upsampling,
//! training, per-segment metrics and a synthetic corpus generator.

mod balance;
mod cache;
mod cv;
mod folds;
mod metrics;
mod synth;
mod train;

pub use balance::balance_upsample;
pub use cache::{featurize_to_cache, load_cache, source_hash, CacheStatus, RecordingMarker};
pub use cv::{cross_validate, evaluate, predict_examples, CvConfig, CvOutcome};
pub use folds::{make_folds, Fold, FoldPlan};
pub use metrics::{render_table, Aggregate, Confusion, FoldMetrics, Metric, MetricsReport, Summary};
pub use synth::{synth_corpus, synth_pcg, MIN_DURATION_S};
pub use train::{train_fold, EpochLog, TrainConfig, TrainLog};

use crate::dataset_io::Recording;
use crate::features::{FeatureSet, Featurizer};
use crate::preprocess::{condition_and_segment, SegmentMeta};
use crate::Result;

/// A segment's identity together with both of its feature grids.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub meta: SegmentMeta,
    pub features: FeatureSet,
}

/// Filters, despikes, segments and featurizes one recording.
pub fn featurize_recording(recording: &Recording, featurizer: &Featurizer) -> Result<Vec<Example>> {
    condition_and_segment(recording)?
        .into_iter()
        .map(|s| {
            Ok(Example {
                features: featurizer.segment(&s)?,
                meta: s.meta,
            })
        })
        .collect()
}
