use std::fs;
use std::path::{Path, PathBuf};

use murmur_core::config::RunConfig;
use murmur_core::dataset_io::{build_manifest, ingest_unlabeled, write_wav_f32, Label, Manifest, ManifestEntry, Recording, Rules, Source};
use murmur_core::features::Featurizer;
use murmur_core::model::ModelParams;
use murmur_core::pipeline::{
    cross_validate, featurize_recording, featurize_to_cache, load_cache, predict_examples, render_table, synth_corpus,
    CacheStatus, MetricsReport,
};
use murmur_core::{Error, Result, SAMPLE_RATE};
use rayon::prelude::*;

use crate::{Cli, Command};

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn run(cli: &Cli, config: &RunConfig) -> Result<()> {
    match &cli.command {
        Command::Manifest { rules, .. } => manifest(config, rules),
        Command::Featurize { manifest, .. } => featurize(config, manifest.as_deref(), cli.global.jobs),
        Command::Train(_) => train(config),
        Command::Evaluate { reports } => evaluate(config, reports),
        Command::Predict { wav, checkpoint } => predict(wav, checkpoint),
        Command::Synth { .. } => synth(config),
    }
}

fn print_counts(m: &Manifest) {
    let counts: Vec<String> = Label::ALL.iter().map(|&l| format!("{} {l}", m.count(l))).collect();
    println!("{} recordings: {}", m.entries.len(), counts.join(", "));
}

fn manifest(config: &RunConfig, rules: &Path) -> Result<()> {
    let root = config
        .data_root
        .as_ref()
        .ok_or_else(|| Error::Config("no data root: pass --root or set data_root".into()))?;
    let rules = Rules::load(rules)?;
    let m = build_manifest(root, &rules)?;
    create_dir(&config.out_dir)?;
    let path = config.out_dir.join("manifest.csv");
    m.write_csv(&path)?;
    print_counts(&m);
    println!("wrote {}", path.display());
    Ok(())
}

fn featurize(config: &RunConfig, manifest: Option<&Path>, jobs: Option<usize>) -> Result<()> {
    let path = manifest.map_or_else(|| config.out_dir.join("manifest.csv"), Path::to_path_buf);
    let m = Manifest::read_csv(&path)?;
    let cache = config.cache_path();
    create_dir(&cache)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let featurizer = Featurizer::new();
    let results: Vec<(&ManifestEntry, Result<CacheStatus>)> = pool.install(|| {
        m.entries
            .par_iter()
            .map(|entry| (entry, featurize_to_cache(entry, &cache, &featurizer)))
            .collect()
    });

    let (mut computed, mut skipped, mut failed) = (0, 0, 0);
    let mut segments = [0usize; 2];
    let mut first_error = None;
    for (entry, result) in results {
        match result {
            Ok(status) => {
                let n = match status {
                    CacheStatus::Computed { segments } => {
                        computed += 1;
                        segments
                    }
                    CacheStatus::Skipped { segments } => {
                        skipped += 1;
                        segments
                    }
                };
                segments[entry.label.index()] += n;
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", entry.path.display());
                failed += 1;
                first_error.get_or_insert(e);
            }
        }
    }
    println!("{computed} computed, {skipped} skipped, {failed} failed");
    println!(
        "{} segments: {} normal, {} murmur",
        segments[0] + segments[1],
        segments[0],
        segments[1]
    );
    match first_error {
        Some(e) if failed == m.entries.len() => Err(e),
        _ => Ok(()),
    }
}

fn train(config: &RunConfig) -> Result<()> {
    let examples = load_cache(&config.cache_path())?;
    let out = &config.out_dir;
    create_dir(out)?;
    write(&out.join("config.txt"), &config.to_text())?;
    let outcome = cross_validate(&examples, &config.cv_config())?;
    outcome.plan.write(&out.join("folds.json"))?;
    for (i, model) in outcome.models.iter().enumerate() {
        model.save(&out.join(format!("fold{i}.ckpt")))?;
    }
    let logs = serde_json::to_string_pretty(&outcome.logs).expect("plain struct");
    write(&out.join("train_log.json"), &logs)?;
    write(&out.join("report.json"), &outcome.report.to_json())?;
    let table = render_table(std::slice::from_ref(&outcome.report));
    write(&out.join("report.md"), &table)?;
    print!("{table}");
    let acc = outcome.report.aggregate.accuracy;
    println!("accuracy {acc}");
    Ok(())
}

fn evaluate(config: &RunConfig, paths: &[PathBuf]) -> Result<()> {
    let default = [config.out_dir.join("report.json")];
    let paths = if paths.is_empty() { &default[..] } else { paths };
    let reports = paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            MetricsReport::from_json(&text)
        })
        .collect::<Result<Vec<_>>>()?;
    let table = render_table(&reports);
    create_dir(&config.out_dir)?;
    write(&config.out_dir.join("table.md"), &table)?;
    print!("{table}");
    Ok(())
}

fn predict(wav: &Path, checkpoint: &Path) -> Result<()> {
    let model = ModelParams::load(checkpoint)?;
    let samples = ingest_unlabeled(wav)?;
    let id = wav
        .file_stem()
        .map_or_else(|| "recording".to_string(), |s| s.to_string_lossy().into_owned());
    // The label is a placeholder; prediction never reads it.
    let recording = Recording::new(id, samples, Label::Normal, "", Source::External, false)?;
    let examples = featurize_recording(&recording, &Featurizer::new())?;
    if examples.is_empty() {
        return Err(Error::Argument(format!(
            "{} is {:.2} s long; at least 2 s are needed for one segment",
            wav.display(),
            recording.duration_s()
        )));
    }
    let refs: Vec<_> = examples.iter().collect();
    let probs = predict_examples(&model, &refs)?;
    println!("segment\tp_normal\tp_murmur\tlabel");
    let mut murmur_votes = 0;
    for (e, p) in examples.iter().zip(&probs) {
        let label = if p[1] > p[0] { Label::Murmur } else { Label::Normal };
        murmur_votes += usize::from(label == Label::Murmur);
        println!("{}\t{:.6}\t{:.6}\t{label}", e.meta.id(), p[0], p[1]);
    }
    let n = probs.len();
    let vote = match (2 * murmur_votes).cmp(&n) {
        std::cmp::Ordering::Greater => Label::Murmur,
        std::cmp::Ordering::Less => Label::Normal,
        std::cmp::Ordering::Equal => {
            let mean_murmur = probs.iter().map(|p| p[1]).sum::<f64>() / n as f64;
            if mean_murmur > 0.5 {
                Label::Murmur
            } else {
                Label::Normal
            }
        }
    };
    println!("recording\t{vote}\t({murmur_votes} of {n} segments murmur)");
    Ok(())
}

fn synth(config: &RunConfig) -> Result<()> {
    let dir = config.out_dir.join("synth");
    create_dir(&dir)?;
    let corpus = synth_corpus(config.synth_per_class, config.synth_duration_s, config.seed)?;
    let mut entries = Vec::with_capacity(corpus.len());
    for rec in &corpus {
        let path = dir.join(format!("{}.wav", rec.id));
        write_wav_f32(&path, &rec.samples, SAMPLE_RATE)?;
        entries.push(ManifestEntry {
            path,
            label: rec.label,
            subject: rec.subject.clone(),
            source: Source::Synthetic,
            noisy: false,
        });
    }
    let m = Manifest::new(entries)?;
    let path = dir.join("manifest.csv");
    m.write_csv(&path)?;
    print_counts(&m);
    println!("wrote {}", path.display());
    Ok(())
}
