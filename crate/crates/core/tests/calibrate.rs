//! Manual calibration runs behind `--ignored`; these measure, they do not
//! assert. The learnability thresholds frozen into the acceptance gate came
//! from these numbers.
//!
//! ```sh
//! cargo test -p musgconv-core --test calibrate --release -- --ignored --nocapture
//! ```

use std::time::Instant;

use musgconv_core::note_model::{stock_classes, synth_dataset, SynthSpec};
use musgconv_core::score_graph::ScoreGraph;
use musgconv_core::tasks::{
    evaluate_composer, evaluate_links, train_composer, train_link_prediction,
};
use musgconv_core::{build_graph, MusGConvConfig, TrainConfig, Variant};

fn split(graphs: Vec<ScoreGraph>, n_train: usize, n_val: usize) -> (Vec<ScoreGraph>, Vec<ScoreGraph>, Vec<ScoreGraph>) {
    let mut it = graphs.into_iter();
    let train: Vec<_> = it.by_ref().take(n_train).collect();
    let val: Vec<_> = it.by_ref().take(n_val).collect();
    (train, val, it.collect())
}

fn voice_datasets() -> (Vec<ScoreGraph>, Vec<ScoreGraph>, Vec<ScoreGraph>) {
    let spec = SynthSpec {
        pieces: 260,
        notes_per_voice: 16,
        seed: 606,
        ..SynthSpec::default()
    };
    let graphs = synth_dataset(&spec).unwrap().iter().map(build_graph).collect();
    split(graphs, 200, 20)
}

#[test]
#[ignore]
fn calibrate_voice_separation_seeds() {
    let (train, val, test) = voice_datasets();
    for variant in [Variant::Plain, Variant::EdgeForwarding] {
        for (hidden, lr) in [(32, 3e-3), (64, 3e-3)] {
            for seed in [1u64, 2, 3] {
                let enc = MusGConvConfig {
                    hidden_dim: hidden,
                    variant,
                    ..MusGConvConfig::default()
                };
                let tcfg = TrainConfig {
                    epochs: 50,
                    k_nodes: 32,
                    lr,
                    seed,
                    ..TrainConfig::default()
                };
                let t0 = Instant::now();
                let out = train_link_prediction::<f32>(&train, &val, &enc, &tcfg).unwrap();
                let eval = evaluate_links(&out.model, &out.params, &test, &tcfg).unwrap();
                println!(
                    "\n{variant:?} h{hidden} lr{lr} seed{seed}: time={:.1?} best_epoch={} val_f1={:.4} test_f1={:.4}",
                    t0.elapsed(),
                    out.best_epoch,
                    out.best_val_f1,
                    eval.metrics.f1,
                );
            }
        }
    }
}

#[test]
#[ignore]
fn calibrate_classification() {
    let spec = SynthSpec {
        pieces: 195,
        notes_per_voice: 16,
        seed: 707,
        classes: stock_classes(3),
        ..SynthSpec::default()
    };
    let graphs = synth_dataset(&spec).unwrap().iter().map(build_graph).collect();
    let (train, val, test) = split(graphs, 150, 15);
    for seed in [1u64, 2] {
        let enc = MusGConvConfig::default();
        let tcfg = TrainConfig {
            epochs: 50,
            k_nodes: 32,
            seed,
            ..TrainConfig::default()
        };
        let t0 = Instant::now();
        let out = train_composer::<f32>(&train, &val, &enc, &tcfg, 3).unwrap();
        let eval = evaluate_composer(&out.model, &out.params, &test).unwrap();
        println!(
            "\ncls seed{seed}: time={:.1?} best_epoch={} val_acc={:.4} test_acc={:.4} majority={:.4}",
            t0.elapsed(),
            out.best_epoch,
            out.best_val_accuracy,
            eval.accuracy,
            eval.majority_accuracy,
        );
    }
}
