//! Acceptance suite. Runs every criterion in order and prints one
//! `PASS`/`FAIL`/`SKIP` line per criterion, then exits nonzero if any gated
//! criterion failed.
//!
//! `MURMUR_ACCEPTANCE=1,4,5` restricts the run to the listed criteria.
//! The extended real-data criterion reads `MURMUR_DATA_CACHE` (a directory
//! written by `murmur featurize`) and `MURMUR_EXTENDED_REPORT` (a
//! `report.json` written by `murmur train` on that cache).

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use murmur_core::dataset_io::{Label, Recording, Source};
use murmur_core::features::{Featurizer, RealFft};
use murmur_core::model::{ModelParams, Topology};
use murmur_core::nn::gradcheck::{check_gradients, GradCheck};
use murmur_core::nn::{BatchNormState, Graph, Mode, Tensor, Var};
use murmur_core::pipeline::{balance_upsample, cross_validate, load_cache, make_folds, synth_pcg, CvConfig, MetricsReport};
use murmur_core::preprocess::{condition_and_segment, segment, SegmentMeta};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Verdict {
    Pass,
    Fail,
    Skip,
}

struct Outcome {
    verdict: Verdict,
    detail: String,
}

impl Outcome {
    fn check(ok: bool, detail: impl Into<String>) -> Self {
        Outcome {
            verdict: if ok { Verdict::Pass } else { Verdict::Fail },
            detail: detail.into(),
        }
    }

    fn skip(detail: impl Into<String>) -> Self {
        Outcome {
            verdict: Verdict::Skip,
            detail: detail.into(),
        }
    }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn max_rel(a: &[Complex64], b: &[Complex64]) -> f64 {
    let scale = b.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1e-300);
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
}

fn brute_dft(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(t, &v)| Complex64::from_polar(v, -2.0 * PI * ((k * t) % n) as f64 / n as f64))
                .sum()
        })
        .collect()
}

fn shape_conformance() -> Outcome {
    let featurizer = Featurizer::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut inputs: Vec<(String, Vec<f64>)> = vec![
        ("silence".into(), vec![0.0; 8000]),
        ("white noise".into(), (0..8000).map(|_| rng.gen_range(-1.0..1.0)).collect()),
        ("impulse".into(), (0..8000).map(|i| if i == 4000 { 1.0 } else { 0.0 }).collect()),
    ];
    for (label, seed) in [(Label::Normal, 3), (Label::Murmur, 4)] {
        let rec = synth_pcg(label, 4.0, seed).unwrap();
        for seg in condition_and_segment(&rec).unwrap() {
            inputs.push((format!("synthetic {label}"), seg.samples));
        }
    }
    let padded = synth_pcg(Label::Normal, 3.0, 5).unwrap();
    for seg in condition_and_segment(&padded).unwrap() {
        inputs.push(("zero-padded 3 s".into(), seg.samples));
    }

    let mut slowest = Duration::ZERO;
    for (name, samples) in &inputs {
        let start = Instant::now();
        let f = featurizer.compute(samples).unwrap();
        slowest = slowest.max(start.elapsed());
        let spec_ok = f.spectrogram.shape() == (65, 61) && f.spectrogram.grid.len() == 65 * 61;
        let ceps_ok = f.cepstrogram.shape() == (13, 398) && f.cepstrogram.grid.len() == 13 * 398;
        let finite = f.spectrogram.grid.iter().chain(&f.cepstrogram.grid).all(|v| v.is_finite());
        if !(spec_ok && ceps_ok && finite) {
            return Outcome::check(
                false,
                format!(
                    "{name}: spectrogram {} values, cepstrogram {} values, finite {finite}",
                    f.spectrogram.grid.len(),
                    f.cepstrogram.grid.len()
                ),
            );
        }
    }
    Outcome::check(
        slowest < Duration::from_secs(1),
        format!("{} segments: 65x61 and 13x398, slowest {}", inputs.len(), secs(slowest)),
    )
}

fn dsp_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_dft, mut worst_parseval) = (0.0f64, 0.0f64);
    let mut cases = 0;
    for n in (0..=8).map(|p| 1usize << p) {
        let fft = RealFft::new(n);
        for _ in 0..100 {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let fast = fft.spectrum(&x);
            worst_dft = worst_dft.max(max_rel(&fast, &brute_dft(&x)));
            let time: f64 = x.iter().map(|v| v * v).sum();
            let freq: f64 = fast.iter().map(|c| c.norm_sqr()).sum::<f64>() / n as f64;
            worst_parseval = worst_parseval.max((time - freq).abs() / time.max(1e-300));
            // One-sided periodogram folds back to the same energy.
            let p = fft.power(&x);
            let folded: f64 = p
                .iter()
                .enumerate()
                .map(|(k, v)| if k == 0 || 2 * k == n { *v } else { 2.0 * v })
                .sum();
            if n > 1 {
                worst_parseval = worst_parseval.max((time - folded).abs() / time.max(1e-300));
            }
            cases += 1;
        }
    }
    Outcome::check(
        worst_dft <= 1e-9 && worst_parseval <= 1e-9,
        format!("{cases} vectors, n = 1..256: DFT rel err {worst_dft:.2e}, Parseval rel err {worst_parseval:.2e}"),
    )
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng, scale: f64) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-scale..scale))
}

fn weights_for(g: &Graph, v: Var, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(g.shape(v).to_vec(), |_| rng.gen_range(-1.0..1.0))
}

const EPS: f64 = 1e-5;

fn gradient_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut results: Vec<(&str, GradCheck)> = Vec::new();

    let dense = [random(&[4, 6], &mut rng, 1.0), random(&[6, 3], &mut rng, 1.0), random(&[3], &mut rng, 1.0)];
    results.push((
        "dense",
        check_gradients(&dense, |g, v| {
            let y = g.dense(v[0], v[1], v[2])?;
            let w = weights_for(g, y, 10);
            g.weighted_sum(y, &w)
        }, EPS, None)
        .unwrap(),
    ));

    let conv = [random(&[2, 2, 5, 6], &mut rng, 1.0), random(&[3, 2, 3, 3], &mut rng, 1.0), random(&[3], &mut rng, 1.0)];
    results.push((
        "conv2d",
        check_gradients(&conv, |g, v| {
            let y = g.conv3x3(v[0], v[1], v[2])?;
            let w = weights_for(g, y, 11);
            g.weighted_sum(y, &w)
        }, EPS, None)
        .unwrap(),
    ));

    // Well-separated values keep the pooling argmax stable under perturbation.
    let mut pool_in: Vec<f64> = (0..2 * 3 * 6 * 5).map(|i| i as f64 * 0.1).collect();
    for i in (1..pool_in.len()).rev() {
        pool_in.swap(i, rng.gen_range(0..=i));
    }
    let pool = [Tensor::new([2, 3, 6, 5], pool_in).unwrap()];
    results.push((
        "maxpool",
        check_gradients(&pool, |g, v| {
            let y = g.maxpool2(v[0])?;
            let w = weights_for(g, y, 12);
            g.weighted_sum(y, &w)
        }, EPS, None)
        .unwrap(),
    ));

    let bn = [random(&[4, 3, 2, 3], &mut rng, 2.0), random(&[3], &mut rng, 1.5), random(&[3], &mut rng, 1.0)];
    for (name, mode) in [("batchnorm (train)", Mode::Train), ("batchnorm (infer)", Mode::Infer)] {
        results.push((
            name,
            check_gradients(&bn, |g, v| {
                let mut state = BatchNormState::new(3);
                state.running_mean = vec![0.2, -0.1, 0.3];
                state.running_var = vec![1.5, 0.7, 2.0];
                let y = g.batchnorm(v[0], v[1], v[2], &mut state, mode)?;
                let w = weights_for(g, y, 13);
                g.weighted_sum(y, &w)
            }, EPS, None)
            .unwrap(),
        ));
    }

    let hidden = 4;
    let lstm = [
        random(&[2, 3, 5], &mut rng, 1.0),
        random(&[5, 4 * hidden], &mut rng, 0.5),
        random(&[hidden, 4 * hidden], &mut rng, 0.5),
        random(&[4 * hidden], &mut rng, 0.5),
    ];
    for (name, reverse) in [("lstm bptt (3 steps)", false), ("lstm bptt (3 steps, reversed)", true)] {
        results.push((
            name,
            check_gradients(&lstm, |g, v| {
                let y = g.lstm(v[0], v[1], v[2], v[3], reverse)?;
                let w = weights_for(g, y, 14);
                g.weighted_sum(y, &w)
            }, EPS, None)
            .unwrap(),
        ));
    }

    let model = ModelParams::new(Topology::default(), 21).unwrap();
    let spec = random(&[3, 1, 65, 61], &mut rng, 3.0);
    let ceps = random(&[3, 398, 13], &mut rng, 2.0);
    let batch = murmur_core::model::Batch {
        spec,
        ceps,
        labels: vec![0, 1, 1],
    };
    let coords: Vec<(usize, usize)> = (0..model.tensors().len())
        .flat_map(|p| {
            let len = model.tensors()[p].len();
            let mut r = ChaCha8Rng::seed_from_u64(100 + p as u64);
            (0..2).map(move |_| (p, r.gen_range(0..len)))
        })
        .collect();
    results.push((
        "fused model (batch 3)",
        check_gradients(
            model.tensors(),
            |g, v| {
                let mut bn = model.bn.clone();
                let mut drop = ChaCha8Rng::seed_from_u64(22);
                Ok(model.loss_graph(g, v, &batch, Mode::Train, &mut bn, &mut drop)?.0)
            },
            EPS,
            Some(&coords),
        )
        .unwrap(),
    ));

    let worst = results
        .iter()
        .map(|(n, r)| (*n, r.max_rel_error))
        .fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let checked: usize = results.iter().map(|(_, r)| r.checked).sum();
    let failing: Vec<String> = results
        .iter()
        .filter(|(_, r)| r.max_rel_error > 1e-4)
        .map(|(n, r)| format!("{n} {:.2e}", r.max_rel_error))
        .collect();
    Outcome::check(
        failing.is_empty(),
        if failing.is_empty() {
            format!("{} checks, {checked} coordinates, worst {:.2e} ({})", results.len(), worst.1, worst.0)
        } else {
            format!("over 1e-4: {}", failing.join(", "))
        },
    )
}

fn segmentation_rules() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut parts = Vec::new();
    let mut ok = true;
    for (seconds, want, want_pad) in [(9.5, 2, vec![0, 0]), (7.0, 2, vec![0, 2000]), (1.9, 0, vec![])] {
        let n = (seconds * 2000.0f64).round() as usize;
        let samples: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rec = Recording::new(format!("fixture_{seconds}"), samples, Label::Normal, "", Source::External, false).unwrap();
        let raw = segment(&rec);
        let conditioned = condition_and_segment(&rec).unwrap();
        let pads: Vec<usize> = raw.iter().map(|s| s.meta.pad_len).collect();
        let lengths_ok = raw.iter().chain(&conditioned).all(|s| s.samples.len() == 8000);
        let zero_tail = raw.iter().all(|s| s.samples[8000 - s.meta.pad_len..].iter().all(|v| *v == 0.0));
        ok &= raw.len() == want && conditioned.len() == want && pads == want_pad && lengths_ok && zero_tail;
        parts.push(format!("{seconds} s -> {} (pads {pads:?})", raw.len()));
    }
    Outcome::check(ok, parts.join(", "))
}

fn fold_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut pool = Vec::new();
    for s in 0..200 {
        let label = if rng.gen_bool(0.15) { Label::Murmur } else { Label::Normal };
        for index in 0..rng.gen_range(1..=6) {
            pool.push(SegmentMeta {
                recording_id: format!("rec{s:03}"),
                index,
                label,
                subject: format!("subject{s:03}"),
                pad_len: 0,
            });
        }
    }
    let subject_of: BTreeMap<String, String> = pool.iter().map(|m| (m.id(), m.subject.clone())).collect();
    let all: BTreeSet<String> = pool.iter().map(SegmentMeta::id).collect();
    let mut problems = Vec::new();
    for seed in 0..5 {
        let plan = make_folds(&pool, 5, seed).unwrap();
        if plan != make_folds(&pool, 5, seed).unwrap() {
            problems.push(format!("seed {seed}: nondeterministic"));
        }
        let mut union = BTreeSet::new();
        for (i, fold) in plan.folds.iter().enumerate() {
            let test_subjects: BTreeSet<&String> = fold.test.iter().map(|id| &subject_of[id]).collect();
            let train_subjects: BTreeSet<&String> = fold.train.iter().map(|id| &subject_of[id]).collect();
            if test_subjects.intersection(&train_subjects).next().is_some() {
                problems.push(format!("seed {seed} fold {i}: subject leak"));
            }
            for id in &fold.test {
                if !union.insert(id.clone()) {
                    problems.push(format!("seed {seed}: {id} tested twice"));
                }
            }
            let fold_all: BTreeSet<String> = fold.train.iter().chain(&fold.test).cloned().collect();
            if fold_all != all || fold.train.len() + fold.test.len() != all.len() {
                problems.push(format!("seed {seed} fold {i}: train+test is not the pool"));
            }
        }
        if union != all {
            problems.push(format!("seed {seed}: test sets do not cover the pool"));
        }
    }

    let mut ratios = vec![(39usize, 1usize), (2440, 218)];
    while ratios.len() < 50 {
        let minority = rng.gen_range(1..60);
        ratios.push((minority * rng.gen_range(1..45) + rng.gen_range(0..minority), minority));
    }
    for (i, &(major, minor)) in ratios.iter().enumerate() {
        let mut labels = vec![Label::Normal; major];
        labels.extend(vec![Label::Murmur; minor]);
        if i % 2 == 1 {
            labels.reverse();
        }
        let items: Vec<usize> = (0..labels.len()).collect();
        let out = balance_upsample(&items, &labels, i as u64).unwrap();
        let normal = out.iter().filter(|&&j| labels[j] == Label::Normal).count();
        let murmur = out.len() - normal;
        let originals: BTreeSet<usize> = out.iter().copied().collect();
        if normal != murmur || normal != major.max(minor) || originals.len() != items.len() {
            problems.push(format!("{major}:{minor} -> {normal}/{murmur}"));
        }
    }
    Outcome::check(
        problems.is_empty(),
        if problems.is_empty() {
            format!("200 subjects / {} segments x 5 seeds; 50 ratios incl. 39:1 balanced exactly", pool.len())
        } else {
            problems.join("; ")
        },
    )
}

/// Bit-exact fingerprint of an overfit run.
fn overfit_fingerprint(run: &common::OverfitRun) -> (Option<usize>, Vec<u64>, Vec<u8>) {
    (
        run.reached_at,
        run.losses.iter().map(|l| l.to_bits()).collect(),
        run.final_params.to_archive().to_bytes(),
    )
}

type OverfitPrint = (Option<usize>, Vec<u64>, Vec<u8>);

fn overfit_smoke() -> (Outcome, OverfitPrint) {
    let examples = common::synthetic_examples(4, 4.0, 500);
    let start = Instant::now();
    let run = common::overfit(&examples, 6, 300);
    let took = start.elapsed();
    let print = overfit_fingerprint(&run);
    let outcome = match run.reached_at {
        Some(step) => Outcome::check(
            took < Duration::from_secs(300),
            format!("{} segments at 100% after {step} steps in {}", examples.len(), secs(took)),
        ),
        None => Outcome::check(false, format!("not separated after 300 steps, final loss {:?}", run.losses.last())),
    };
    (outcome, print)
}

struct EndToEnd {
    report: MetricsReport,
    checkpoints: Vec<Vec<u8>>,
}

fn run_end_to_end() -> (EndToEnd, Duration) {
    let start = Instant::now();
    let examples = common::synthetic_examples(100, 4.0, 0);
    let outcome = cross_validate(&examples, &CvConfig::default()).unwrap();
    let e2e = EndToEnd {
        checkpoints: outcome.models.iter().map(|m| m.to_archive().to_bytes()).collect(),
        report: outcome.report,
    };
    (e2e, start.elapsed())
}

fn synthetic_end_to_end() -> (Outcome, EndToEnd) {
    let (e2e, took) = run_end_to_end();
    let agg = &e2e.report.aggregate;
    let accuracy = agg.accuracy.mean.value().unwrap_or(0.0);
    let specificity = agg.specificity.mean.value().unwrap_or(0.0);
    let target = Duration::from_secs(30 * 60);
    let detail = format!(
        "accuracy {}, specificity {}, sensitivity {}; {} (runtime target 30 min {})",
        agg.accuracy,
        agg.specificity,
        agg.sensitivity,
        secs(took),
        if took < target { "met" } else { "exceeded" }
    );
    (Outcome::check(accuracy >= 0.95 && specificity >= 0.90, detail), e2e)
}

const PUBLISHED: [(&str, f64); 3] = [("sensitivity", 0.9609), ("specificity", 1.0), ("F1", 0.9801)];

fn extended() -> Outcome {
    let Some(cache) = std::env::var_os("MURMUR_DATA_CACHE").map(PathBuf::from) else {
        return Outcome::skip("dataset not available (set MURMUR_DATA_CACHE and MURMUR_EXTENDED_REPORT)");
    };
    let mut lines = Vec::new();
    match load_cache(&cache) {
        Ok(examples) => {
            let murmur = examples.iter().filter(|e| e.meta.label == Label::Murmur).count();
            lines.push(format!(
                "segments {} (published 10892, gap {:+}), murmur {murmur} (published 272, gap {:+})",
                examples.len(),
                examples.len() as i64 - 10892,
                murmur as i64 - 272
            ));
        }
        Err(e) => lines.push(format!("cache unreadable: {e}")),
    }
    match std::env::var_os("MURMUR_EXTENDED_REPORT").map(std::fs::read_to_string) {
        Some(Ok(text)) => match MetricsReport::from_json(&text) {
            Ok(r) => {
                let got = [r.aggregate.sensitivity, r.aggregate.specificity, r.aggregate.f1_normal];
                for ((name, reference), s) in PUBLISHED.iter().zip(got) {
                    match s.mean.value() {
                        Some(m) => lines.push(format!(
                            "{name} {m:.4} vs {reference:.4} (gap {:+.4}, {} 0.05)",
                            m - reference,
                            if (m - reference).abs() <= 0.05 { "within" } else { "outside" }
                        )),
                        None => lines.push(format!("{name} n/a vs {reference:.4}")),
                    }
                }
            }
            Err(e) => lines.push(format!("report unreadable: {e}")),
        },
        Some(Err(e)) => lines.push(format!("report unreadable: {e}")),
        None => lines.push("no fused-model report given".into()),
    }
    Outcome::skip(format!("informational: {}", lines.join("; ")))
}

fn main() {
    let only: Option<BTreeSet<u32>> = std::env::var("MURMUR_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|p| p.trim().parse().ok()).collect());
    let wanted = |n: u32| only.as_ref().map_or(true, |set| set.contains(&n));
    let mut failed = Vec::new();
    let mut report = |n: u32, name: &str, took: Duration, o: Outcome| {
        let tag = match o.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Skip => "SKIP",
        };
        println!("criterion {n} [{name}]: {tag} ({}) {}", secs(took), o.detail);
        if o.verdict == Verdict::Fail {
            failed.push(n);
        }
    };
    let timed = |f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = f();
        (o, start.elapsed())
    };

    let simple: [(u32, &str, fn() -> Outcome); 5] = [
        (1, "shape conformance", shape_conformance),
        (2, "DSP oracle equivalence", dsp_oracle),
        (3, "gradient suite", gradient_suite),
        (4, "segmentation rules", segmentation_rules),
        (5, "fold invariants", fold_invariants),
    ];
    for (n, name, f) in simple {
        if wanted(n) {
            let (o, took) = timed(&f);
            report(n, name, took, o);
        }
    }

    let mut overfit_first = None;
    if wanted(6) {
        let start = Instant::now();
        let (o, print) = overfit_smoke();
        report(6, "overfit smoke test", start.elapsed(), o);
        overfit_first = Some(print);
    }
    let mut e2e_first = None;
    if wanted(7) {
        let start = Instant::now();
        let (o, e2e) = synthetic_end_to_end();
        report(7, "synthetic end-to-end", start.elapsed(), o);
        e2e_first = Some(e2e);
    }
    if wanted(8) {
        let (o, took) = timed(&extended);
        report(8, "extended real-data comparison", took, o);
    }
    if wanted(9) {
        let start = Instant::now();
        let first = overfit_first.unwrap_or_else(|| overfit_smoke().1);
        let second = overfit_smoke().1;
        let overfit_same = first == second;
        let e_first = e2e_first.unwrap_or_else(|| run_end_to_end().0);
        let e_second = run_end_to_end().0;
        let report_same = e_first.report.to_json() == e_second.report.to_json();
        let ckpt_same = e_first.checkpoints == e_second.checkpoints;
        report(
            9,
            "determinism",
            start.elapsed(),
            Outcome::check(
                overfit_same && report_same && ckpt_same,
                format!(
                    "overfit run identical: {overfit_same}; end-to-end report identical: {report_same}; fold checkpoints identical: {ckpt_same}"
                ),
            ),
        );
    }

    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
