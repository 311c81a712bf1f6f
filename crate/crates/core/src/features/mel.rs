use crate::{Error, Result};

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters equally spaced on the mel scale.
///
/// Weights are stored row-major, `n_filters` rows by `dft_len / 2 + 1` bins.
/// Filter `m` rises linearly from edge `m - 1` to its peak at edge `m` and
/// falls to zero at edge `m + 1`; each bin's weight is the triangle evaluated
/// at the bin's centre frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub n_filters: usize,
    pub n_bins: usize,
    /// `n_filters + 2` edge frequencies in Hz.
    pub edges_hz: Vec<f64>,
    pub weights: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_filters: usize, f_low: f64, f_high: f64, dft_len: usize, rate: f64) -> Result<Self> {
        if n_filters == 0 || dft_len < 2 {
            return Err(Error::Argument("need at least one filter and a DFT of length >= 2".into()));
        }
        if !(f_low >= 0.0 && f_low < f_high) {
            return Err(Error::Argument(format!("bad band [{f_low}, {f_high}] Hz")));
        }
        if f_high > rate / 2.0 {
            return Err(Error::Argument(format!(
                "upper edge {f_high} Hz is above Nyquist ({} Hz)",
                rate / 2.0
            )));
        }
        let (lo, hi) = (hz_to_mel(f_low), hz_to_mel(f_high));
        let n_edges = n_filters + 2;
        let edges_hz: Vec<f64> = (0..n_edges)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_edges - 1) as f64))
            .collect();

        let n_bins = dft_len / 2 + 1;
        let bin_hz = rate / dft_len as f64;
        let mut weights = vec![0.0; n_filters * n_bins];
        for m in 0..n_filters {
            let (left, centre, right) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
            let row = &mut weights[m * n_bins..(m + 1) * n_bins];
            for (k, w) in row.iter_mut().enumerate() {
                let f = k as f64 * bin_hz;
                *w = if f > left && f <= centre {
                    (f - left) / (centre - left)
                } else if f > centre && f < right {
                    (right - f) / (right - centre)
                } else {
                    0.0
                };
            }
            if row.iter().all(|&w| w == 0.0) {
                return Err(Error::Argument(format!(
                    "filter {m} ({left:.1}-{right:.1} Hz) covers no DFT bin"
                )));
            }
        }
        Ok(MelFilterbank {
            n_filters,
            n_bins,
            edges_hz,
            weights,
        })
    }

    /// 26 filters over 70-500 Hz for a 128-point DFT at 2000 Hz.
    pub fn standard() -> Self {
        Self::new(26, 70.0, 500.0, 128, 2000.0).expect("fixed parameters are valid")
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    /// Peak frequency of each filter.
    pub fn centres_hz(&self) -> &[f64] {
        &self.edges_hz[1..=self.n_filters]
    }

    /// Filter energies `sum_k w[m][k] * power[k]`.
    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        assert_eq!(power.len(), self.n_bins, "power spectrum length");
        (0..self.n_filters)
            .map(|m| self.row(m).iter().zip(power).map(|(w, p)| w * p).sum())
            .collect()
    }

    /// Copy with every row scaled to unit sum.
    pub fn row_normalized(&self) -> Self {
        let mut out = self.clone();
        for m in 0..self.n_filters {
            let row = &mut out.weights[m * self.n_bins..(m + 1) * self.n_bins];
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|w| *w /= s);
        }
        out
    }
}
