use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Infer,
}

/// Running statistics of one batch-norm layer. The affine `gamma`/`beta`
/// pair is trained like any other parameter and lives in the parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormState {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }
}

/// Per-channel layout of a `[batch, channels, spatial...]` tensor.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BnDims {
    pub batch: usize,
    pub channels: usize,
    pub spatial: usize,
}

impl BnDims {
    fn for_each_channel(&self, c: usize, mut f: impl FnMut(usize)) {
        for n in 0..self.batch {
            let base = (n * self.channels + c) * self.spatial;
            (base..base + self.spatial).for_each(&mut f);
        }
    }
}

pub(crate) struct BnForward {
    pub y: Vec<f64>,
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
}

pub(crate) fn forward(
    x: &[f64],
    gamma: &[f64],
    beta: &[f64],
    state: &mut BatchNormState,
    dims: BnDims,
    mode: Mode,
) -> Result<BnForward> {
    if dims.channels != state.channels() || gamma.len() != dims.channels || beta.len() != dims.channels {
        return Err(Error::Shape(format!(
            "batch norm over {} channels with state for {} and affine of {}/{}",
            dims.channels,
            state.channels(),
            gamma.len(),
            beta.len()
        )));
    }
    if mode == Mode::Train && dims.batch * dims.spatial < 2 {
        return Err(Error::Argument("batch norm needs at least 2 values per channel in train mode".into()));
    }
    let count = (dims.batch * dims.spatial) as f64;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; dims.channels];
    for c in 0..dims.channels {
        let (mean, var) = match mode {
            Mode::Train => {
                let mut sum = 0.0;
                dims.for_each_channel(c, |i| sum += x[i]);
                let mean = sum / count;
                let mut ss = 0.0;
                dims.for_each_channel(c, |i| ss += (x[i] - mean) * (x[i] - mean));
                let var = ss / count;
                let m = state.momentum;
                state.running_mean[c] = (1.0 - m) * state.running_mean[c] + m * mean;
                let unbiased = if count > 1.0 { ss / (count - 1.0) } else { 0.0 };
                state.running_var[c] = (1.0 - m) * state.running_var[c] + m * unbiased;
                (mean, var)
            }
            Mode::Infer => (state.running_mean[c], state.running_var[c].max(0.0)),
        };
        let is = 1.0 / (var + state.eps).sqrt();
        inv_std[c] = is;
        dims.for_each_channel(c, |i| {
            xhat[i] = (x[i] - mean) * is;
            y[i] = gamma[c] * xhat[i] + beta[c];
        });
    }
    Ok(BnForward { y, xhat, inv_std })
}

/// Returns `(dx, dgamma, dbeta)`.
pub(crate) fn backward(
    dy: &[f64],
    xhat: &[f64],
    inv_std: &[f64],
    gamma: &[f64],
    dims: BnDims,
    mode: Mode,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let count = (dims.batch * dims.spatial) as f64;
    let mut dx = vec![0.0; dy.len()];
    let mut dgamma = vec![0.0; dims.channels];
    let mut dbeta = vec![0.0; dims.channels];
    for c in 0..dims.channels {
        let (mut sum_dy, mut sum_dy_xhat) = (0.0, 0.0);
        dims.for_each_channel(c, |i| {
            sum_dy += dy[i];
            sum_dy_xhat += dy[i] * xhat[i];
        });
        dgamma[c] = sum_dy_xhat;
        dbeta[c] = sum_dy;
        let g = gamma[c] * inv_std[c];
        match mode {
            Mode::Train => dims.for_each_channel(c, |i| {
                dx[i] = g * (dy[i] - sum_dy / count - xhat[i] * sum_dy_xhat / count);
            }),
            Mode::Infer => dims.for_each_channel(c, |i| dx[i] = g * dy[i]),
        }
    }
    (dx, dgamma, dbeta)
}
