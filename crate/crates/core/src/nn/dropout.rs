use rand::Rng;

use crate::{Error, Result};

/// Inverted-dropout mask: each entry is 0 with probability `1 - keep`,
/// otherwise `1 / keep`.
pub(crate) fn mask(len: usize, keep: f64, rng: &mut impl Rng) -> Vec<f64> {
    let scale = 1.0 / keep;
    (0..len)
        .map(|_| if rng.gen::<f64>() < keep { scale } else { 0.0 })
        .collect()
}

pub(crate) fn check_keep(keep: f64) -> Result<()> {
    if keep > 0.0 && keep <= 1.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!("keep probability {keep} outside (0, 1]")))
    }
}
