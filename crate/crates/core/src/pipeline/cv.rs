use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::metrics::{Confusion, FoldMetrics, MetricsReport};
use super::train::{train_fold, TrainConfig, TrainLog};
use super::{make_folds, Example, FoldPlan};
use crate::dataset_io::Label;
use crate::model::{argmax, Batch, ModelParams};
use crate::{Error, Result};

/// Rows per inference batch.
const EVAL_BATCH: usize = 128;

/// Class probabilities for every example, `[normal, murmur]` per row.
pub fn predict_examples(model: &ModelParams, examples: &[&Example]) -> Result<Vec<[f64; 2]>> {
    let mut out = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(EVAL_BATCH) {
        let feats: Vec<_> = chunk.iter().map(|e| &e.features).collect();
        let labels: Vec<Label> = chunk.iter().map(|e| e.meta.label).collect();
        let p = model.predict(&Batch::from_features(&feats, &labels)?)?;
        out.extend(p.data().chunks_exact(2).map(|r| [r[0], r[1]]));
    }
    Ok(out)
}

/// Argmax predictions on held-out segments, tallied into fold metrics.
pub fn evaluate(model: &ModelParams, test: &[&Example], fold: usize) -> Result<FoldMetrics> {
    let probs = predict_examples(model, test)?;
    let confusion = Confusion::from_pairs(test.iter().zip(&probs).map(|(e, p)| {
        let predicted = Label::from_index(argmax(p)).expect("two classes");
        (e.meta.label, predicted)
    }));
    Ok(FoldMetrics::new(fold, confusion))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub k: usize,
    pub train: TrainConfig,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            k: 5,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub plan: FoldPlan,
    pub report: MetricsReport,
    pub models: Vec<ModelParams>,
    pub logs: Vec<TrainLog>,
}

/// Patient-disjoint k-fold cross-validation. Fold `i` trains with seed
/// `seed + i`; test sets are never upsampled.
pub fn cross_validate(examples: &[Example], config: &CvConfig) -> Result<CvOutcome> {
    config.train.validate()?;
    let seed = config.train.seed;
    let metas: Vec<_> = examples.iter().map(|e| e.meta.clone()).collect();
    let plan = make_folds(&metas, config.k, seed)?;
    let by_id: BTreeMap<String, &Example> = examples.iter().map(|e| (e.meta.id(), e)).collect();
    let lookup = |ids: &[String]| -> Result<Vec<&Example>> {
        ids.iter()
            .map(|id| by_id.get(id).copied().ok_or_else(|| Error::Validation(format!("fold references unknown segment {id}"))))
            .collect()
    };

    let mut fold_metrics = Vec::with_capacity(config.k);
    let mut models = Vec::with_capacity(config.k);
    let mut logs = Vec::with_capacity(config.k);
    for (i, fold) in plan.folds.iter().enumerate() {
        let train_ids: BTreeSet<&String> = fold.train.iter().collect();
        if fold.test.iter().any(|id| train_ids.contains(id)) {
            return Err(Error::Validation(format!("fold {i} tests on a training segment")));
        }
        let train = lookup(&fold.train)?;
        let test = lookup(&fold.test)?;
        log::info!("fold {i}: {} train / {} test segments", train.len(), test.len());
        let fold_config = TrainConfig {
            seed: seed.wrapping_add(i as u64),
            ..config.train.clone()
        };
        let (model, log) = train_fold(&train, &fold_config)?;
        let metrics = evaluate(&model, &test, i)?;
        log::info!(
            "fold {i}: sensitivity {}, specificity {}, F1 {}",
            metrics.sensitivity,
            metrics.specificity,
            metrics.f1_normal
        );
        fold_metrics.push(metrics);
        models.push(model);
        logs.push(log);
    }
    let report = MetricsReport::new(config.train.topology.branches, seed, fold_metrics);
    Ok(CvOutcome {
        plan,
        report,
        models,
        logs,
    })
}
