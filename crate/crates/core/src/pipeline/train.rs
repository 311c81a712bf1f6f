use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::balance_upsample;
use super::Example;
use crate::dataset_io::Label;
use crate::model::{Batch, InputScaling, ModelParams, Topology};
use crate::nn::Adam;
use crate::{Error, Result};

/// Optimization settings for one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Stop after this many consecutive epochs whose loss improved by less
    /// than `min_delta` on the best so far.
    pub patience: usize,
    pub min_delta: f64,
    pub topology: Topology,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            lr: 1e-3,
            batch_size: 128,
            seed: 0,
            patience: 5,
            min_delta: 1e-4,
            topology: Topology::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::Config("epochs, batch size and patience must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if !(self.min_delta >= 0.0) {
            return Err(Error::Config("min_delta must be >= 0".into()));
        }
        self.topology.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub stopped_early: bool,
    pub steps: u64,
    /// Per epoch, the order in which spectrograms were drawn.
    #[serde(skip)]
    pub spec_orders: Vec<Vec<usize>>,
    /// Per epoch, the order in which cepstrograms were drawn.
    #[serde(skip)]
    pub ceps_orders: Vec<Vec<usize>>,
}

/// Seeded stream for a purpose; streams of one seed never overlap.
pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

const ORDER_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

/// Trains a fresh model on `train` (upsampled to balance here).
///
/// Each epoch shuffles the balanced list twice, once for the spectrogram
/// side and once for the cepstrogram side, from identically seeded
/// generators; the two orders are logged and must agree.
pub fn train_fold(train: &[&Example], config: &TrainConfig) -> Result<(ModelParams, TrainLog)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Argument("empty training set".into()));
    }
    let labels: Vec<Label> = train.iter().map(|e| e.meta.label).collect();
    let positions: Vec<usize> = (0..train.len()).collect();
    let balanced = balance_upsample(&positions, &labels, config.seed)?;

    let mut model = ModelParams::new(config.topology.clone(), config.seed)?;
    model.scaling = InputScaling::fit(train.iter().map(|e| &e.features))?;
    let mut opt = Adam::new(config.lr);
    let mut spec_rng = stream(config.seed, ORDER_STREAM);
    let mut ceps_rng = stream(config.seed, ORDER_STREAM);
    let mut dropout_rng = stream(config.seed, DROPOUT_STREAM);

    let mut log = TrainLog::default();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for epoch in 0..config.epochs {
        let mut spec_order = balanced.clone();
        spec_order.shuffle(&mut spec_rng);
        let mut ceps_order = balanced.clone();
        ceps_order.shuffle(&mut ceps_rng);
        if spec_order != ceps_order {
            return Err(Error::Numerical("feature orders diverged between the two branches".into()));
        }
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in spec_order.chunks(config.batch_size) {
            let feats: Vec<_> = chunk.iter().map(|&i| &train[i].features).collect();
            let labs: Vec<Label> = chunk.iter().map(|&i| labels[i]).collect();
            let batch = Batch::from_features(&feats, &labs)?;
            let stats = model.train_step(&batch, &mut opt, &mut dropout_rng).map_err(|e| match e {
                Error::Numerical(msg) => Error::Numerical(format!("epoch {epoch}, step {}: {msg}", opt.steps())),
                other => other,
            })?;
            loss_sum += stats.loss * stats.batch as f64;
            correct += stats.correct;
        }
        let n = spec_order.len() as f64;
        let entry = EpochLog {
            epoch,
            loss: loss_sum / n,
            accuracy: correct as f64 / n,
        };
        log::info!("epoch {epoch}: loss {:.6}, train accuracy {:.4}", entry.loss, entry.accuracy);
        log.spec_orders.push(spec_order);
        log.ceps_orders.push(ceps_order);
        if entry.loss < best - config.min_delta {
            stale = 0;
        } else {
            stale += 1;
        }
        best = best.min(entry.loss);
        log.epochs.push(entry);
        if stale >= config.patience {
            log.stopped_early = true;
            break;
        }
    }
    log.steps = opt.steps();
    Ok((model, log))
}
