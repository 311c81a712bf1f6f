//! Recording conditioning: band-pass filtering, spike removal and 4 s segmentation.

mod filter;
mod segment;
mod spikes;

pub use filter::{bandpass, Butterworth, FilterKind, Sos, BANDPASS_ORDER, HIGHPASS_HZ, LOWPASS_HZ};
pub use segment::{segment, Segment, SegmentMeta, MIN_RESIDUAL};
pub use spikes::remove_spikes;

use crate::dataset_io::Recording;
use crate::Result;

/// Band-passes and despikes a whole recording (before segmentation, so that
/// segment boundaries never see filter edge transients).
pub fn condition(recording: &Recording) -> Result<Recording> {
    let filtered = bandpass(&recording.samples)?;
    let samples = remove_spikes(&filtered, recording.rate);
    Ok(Recording {
        samples,
        ..recording.clone()
    })
}

/// [`condition`] followed by [`segment`].
pub fn condition_and_segment(recording: &Recording) -> Result<Vec<Segment>> {
    Ok(segment(&condition(recording)?))
}
