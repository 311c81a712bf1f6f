#![allow(dead_code)]

use murmur_core::features::Featurizer;
use murmur_core::model::{count_correct, Batch, InputScaling, ModelParams, Topology};
use murmur_core::nn::Adam;
use murmur_core::pipeline::{featurize_recording, synth_corpus, Example};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Featurized synthetic corpus: `n_per_class` normal then murmur recordings.
pub fn synthetic_examples(n_per_class: usize, duration_s: f64, first_seed: u64) -> Vec<Example> {
    let featurizer = Featurizer::new();
    synth_corpus(n_per_class, duration_s, first_seed)
        .unwrap()
        .iter()
        .flat_map(|r| featurize_recording(r, &featurizer).unwrap())
        .collect()
}

pub fn batch_of(examples: &[Example]) -> Batch {
    let feats: Vec<_> = examples.iter().map(|e| &e.features).collect();
    let labels: Vec<_> = examples.iter().map(|e| e.meta.label).collect();
    Batch::from_features(&feats, &labels).unwrap()
}

pub struct OverfitRun {
    /// Optimizer step at which inference-mode training accuracy first hit 100 %.
    pub reached_at: Option<usize>,
    pub final_params: ModelParams,
    pub losses: Vec<f64>,
}

/// Full-batch Adam on the given examples until every one is classified
/// correctly in inference mode, or `max_steps` is exhausted.
pub fn overfit(examples: &[Example], seed: u64, max_steps: usize) -> OverfitRun {
    let batch = batch_of(examples);
    let mut model = ModelParams::new(Topology::default(), seed).unwrap();
    model.scaling = InputScaling::fit(examples.iter().map(|e| &e.features)).unwrap();
    let mut opt = Adam::new(1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut losses = Vec::new();
    for step in 1..=max_steps {
        losses.push(model.train_step(&batch, &mut opt, &mut rng).unwrap().loss);
        let p = model.predict(&batch).unwrap();
        if count_correct(&p, &batch.labels) == batch.len() {
            return OverfitRun {
                reached_at: Some(step),
                final_params: model,
                losses,
            };
        }
    }
    OverfitRun {
        reached_at: None,
        final_params: model,
        losses,
    }
}
