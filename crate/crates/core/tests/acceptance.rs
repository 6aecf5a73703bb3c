//! The release gate: all ten acceptance criteria in order, one verdict line
//! each, failures collected so a single run reports everything.
//!
//! `cargo test --test acceptance -- --nocapture` shows the lines as they
//! complete; the two learnability criteria dominate the runtime.

mod common;

use std::time::{Duration, Instant};

use musgconv_core::musgconv::{
    manual_edge_features, pcint, EncoderInput, ManualEdgeFeatures, MusGConvEncoder,
};
use musgconv_core::note_model::{
    parse_midi, stock_classes, synth_dataset, write_note_table, MidiWarnings, NoteEvent, Score,
    SynthSpec,
};
use musgconv_core::sampler::Batch;
use musgconv_core::score_graph::{build_graph, ScoreGraph, NODE_FEATURE_DIM, N_RELATIONS};
use musgconv_core::tasks::{
    evaluate_composer, evaluate_links, train_composer, train_link_prediction, TrainConfig,
};
use musgconv_core::tensor::{ParamSet, Tape, Tensor};
use musgconv_core::verify::{default_config, gradcheck_suite};
use musgconv_core::{MusGConvConfig, Variant};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type CheckResult = Result<String, String>;

struct Verdict {
    line: String,
    passed: bool,
}

fn run_criterion(
    verdicts: &mut Vec<Verdict>,
    idx: usize,
    what: &str,
    budget: Duration,
    check: impl FnOnce() -> CheckResult,
) {
    let t0 = Instant::now();
    let outcome = check();
    let elapsed = t0.elapsed();
    let (passed, detail) = match outcome {
        Ok(d) if elapsed <= budget => (true, d),
        Ok(d) => (false, format!("{d}; exceeded the {budget:?} budget")),
        Err(d) => (false, d),
    };
    let line = format!(
        "criterion {idx}: {} — {what}: {detail} ({elapsed:.1?})",
        if passed { "pass" } else { "FAIL" },
    );
    println!("{line}");
    verdicts.push(Verdict { line, passed });
}

fn transposed(score: &Score, k: i32) -> Score {
    let notes = score
        .notes
        .iter()
        .map(|n| NoteEvent {
            pitch: (n.pitch as i32 + k) as u8,
            ..*n
        })
        .collect();
    Score::new(
        score.divisions_per_quarter,
        notes,
        score.time_signatures.clone(),
        score.source_name.clone(),
        score.class_label,
    )
    .unwrap()
}

fn onset_shifted(score: &Score, delta: i64) -> Score {
    let notes = score
        .notes
        .iter()
        .map(|n| NoteEvent {
            onset: n.onset + delta,
            ..*n
        })
        .collect();
    Score::new(
        score.divisions_per_quarter,
        notes,
        score.time_signatures.clone(),
        score.source_name.clone(),
        score.class_label,
    )
    .unwrap()
}

/// Bit patterns of every edge-feature value plus the PCInt indices, relation
/// by relation, so "bit-identical" is literal.
fn feature_bits(f: &ManualEdgeFeatures<f64>) -> (Vec<u64>, Vec<u32>) {
    let mut dists = Vec::new();
    let mut pcints = Vec::new();
    for r in 0..N_RELATIONS {
        dists.extend(f.dists[r].to_f64_vec().iter().map(|x| x.to_bits()));
        pcints.extend(f.pcint[r].iter().copied());
    }
    (dists, pcints)
}

fn split_graphs(
    spec: &SynthSpec,
    n_train: usize,
    n_val: usize,
) -> (Vec<ScoreGraph>, Vec<ScoreGraph>, Vec<ScoreGraph>) {
    let graphs: Vec<ScoreGraph> = synth_dataset(spec)
        .unwrap()
        .iter()
        .map(build_graph)
        .collect();
    let mut it = graphs.into_iter();
    let train: Vec<_> = it.by_ref().take(n_train).collect();
    let val: Vec<_> = it.by_ref().take(n_val).collect();
    (train, val, it.collect())
}

/// The fixed two-voice corpus for criteria 6 and 8: disjoint registers,
/// 200/20/40 split.
fn voice_spec() -> SynthSpec {
    SynthSpec {
        pieces: 260,
        notes_per_voice: 16,
        seed: 606,
        ..SynthSpec::default()
    }
}

const NO_BUDGET: Duration = Duration::from_secs(600);

#[test]
fn acceptance() {
    let mut verdicts = Vec::new();
    let v = &mut verdicts;

    run_criterion(
        v,
        1,
        "gradient suite, every layer type and all four encoder configurations (f64)",
        Duration::from_secs(120),
        || {
            let report = gradcheck_suite::<f64>(&default_config::<f64>()).map_err(|e| e.to_string())?;
            if !report.passed() {
                return Err(format!("checks failed:\n{}", report.render()));
            }
            Ok(format!(
                "{} checks, max rel err {:.2e} < 1e-4",
                report.cases.len(),
                report.max_rel_err()
            ))
        },
    );

    run_criterion(
        v,
        2,
        "sweep-line graph builder vs quadratic predicate scan",
        Duration::from_secs(30),
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(20_240);
            let mut edge_total = 0usize;
            for i in 0..1000 {
                let score = common::random_score(&mut rng, 64, &format!("oracle-{i}"));
                let g = build_graph(&score);
                edge_total += g.n_edges();
                let want = common::sorted_edges(&common::naive_relations(&g.notes));
                if common::sorted_edges(&g.edges) != want {
                    return Err(format!(
                        "score {i} ({} notes): builders disagree",
                        g.n_nodes
                    ));
                }
            }
            Ok(format!(
                "1000 random scores (≤64 notes, {edge_total} edges), identical edge sets"
            ))
        },
    );

    run_criterion(
        v,
        3,
        "exact invariances: transposition, onset shift, octave PCInt",
        NO_BUDGET,
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(3_000);
            for i in 0..100 {
                let score = common::random_score(&mut rng, 48, &format!("inv-{i}"));
                let g = build_graph(&score);
                let base: Vec<_> = [false, true]
                    .map(|signed| {
                        feature_bits(
                            &manual_edge_features::<f64>(&g.notes, &g.edges, signed).unwrap(),
                        )
                    })
                    .into_iter()
                    .collect();
                for k in -12i32..=12 {
                    let tg = build_graph(&transposed(&score, k));
                    if tg.edges != g.edges {
                        return Err(format!("score {i}: transposition by {k} changed edges"));
                    }
                    for (b, signed) in base.iter().zip([false, true]) {
                        let f = manual_edge_features::<f64>(&tg.notes, &tg.edges, signed).unwrap();
                        if &feature_bits(&f) != b {
                            return Err(format!(
                                "score {i}: transposition by {k} changed edge features (signed={signed})"
                            ));
                        }
                    }
                }
                for delta in [1i64, 13, 480] {
                    let tg = build_graph(&onset_shifted(&score, delta));
                    if tg.edges != g.edges {
                        return Err(format!("score {i}: onset shift {delta} changed edges"));
                    }
                    let f = manual_edge_features::<f64>(&tg.notes, &tg.edges, false).unwrap();
                    if feature_bits(&f) != base[0] {
                        return Err(format!(
                            "score {i}: onset shift {delta} changed edge features"
                        ));
                    }
                }
            }
            for p in 0u8..=127 {
                let mut q = p % 12;
                while q <= 127 {
                    if pcint(p, q) != 0 || pcint(q, p) != 0 {
                        return Err(format!("pcint({p},{q}) != 0 across octaves"));
                    }
                    q = match q.checked_add(12) {
                        Some(next) => next,
                        None => break,
                    };
                }
            }
            Ok(
                "100 scores × 25 transpositions × 3 shifts bit-identical; pcint(p, p±12k) = 0"
                    .into(),
            )
        },
    );

    run_criterion(
        v,
        4,
        "disjoint-union batch matches per-graph encoding (f32, 1e-5)",
        NO_BUDGET,
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(44);
            let a = build_graph(&common::random_score(&mut rng, 24, "batch-a"));
            let b = build_graph(&common::random_score(&mut rng, 24, "batch-b"));
            let cfg = MusGConvConfig::default();
            let mut params = ParamSet::<f32>::new();
            let mut prng = ChaCha8Rng::seed_from_u64(4);
            let enc = MusGConvEncoder::new(cfg.clone(), &mut params, &mut prng)
                .map_err(|e| e.to_string())?;
            let encode = |graphs: Vec<ScoreGraph>| -> Result<Vec<f64>, String> {
                let batch = Batch::<f32>::from_graphs(graphs, &cfg).map_err(|e| e.to_string())?;
                let mut tape = Tape::new();
                let out = enc
                    .encode(&mut tape, &params, &batch.input)
                    .map_err(|e| e.to_string())?;
                Ok(tape.value(out).to_f64_vec())
            };
            let merged = encode(vec![a.clone(), b.clone()])?;
            let mut solo = encode(vec![a])?;
            solo.extend(encode(vec![b])?);
            let max_diff = merged
                .iter()
                .zip(&solo)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            if max_diff > 1e-5 {
                return Err(format!("max |batched − solo| = {max_diff:.3e} > 1e-5"));
            }
            Ok(format!("B=2 vs two B=1: max |Δ| = {max_diff:.3e} ≤ 1e-5"))
        },
    );

    run_criterion(
        v,
        5,
        "permutation equivariance of node embeddings (f64, bit-identical)",
        NO_BUDGET,
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(55);
            let g = build_graph(&common::random_score(&mut rng, 40, "perm"));
            let n = g.n_nodes;
            let cfg = MusGConvConfig::default();
            let mut params = ParamSet::<f64>::new();
            let mut prng = ChaCha8Rng::seed_from_u64(5);
            let enc = MusGConvEncoder::new(cfg.clone(), &mut params, &mut prng)
                .map_err(|e| e.to_string())?;

            let base = EncoderInput::<f64>::from_graph(&g, &cfg).map_err(|e| e.to_string())?;
            let mut tape = Tape::new();
            let out = enc.encode(&mut tape, &params, &base).map_err(|e| e.to_string())?;
            let h = tape.value(out).clone();

            // perm[i] is node i's new position; edge order is preserved, so
            // every scatter accumulates in the original order.
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let mut x2 = Tensor::<f64>::zeros(n, NODE_FEATURE_DIM);
            let mut notes2 = vec![g.notes[0]; n];
            for i in 0..n {
                x2.row_mut(perm[i]).copy_from_slice(base.x.row(i));
                notes2[perm[i]] = g.notes[i];
            }
            let edges2 = std::array::from_fn(|r| {
                g.edges[r]
                    .iter()
                    .map(|&(s, d)| (perm[s as usize] as u32, perm[d as usize] as u32))
                    .collect()
            });
            let permuted = EncoderInput::from_parts(x2, edges2, &notes2, &cfg)
                .map_err(|e| e.to_string())?;
            let mut tape2 = Tape::new();
            let out2 = enc
                .encode(&mut tape2, &params, &permuted)
                .map_err(|e| e.to_string())?;
            let h2 = tape2.value(out2).clone();
            for i in 0..n {
                for (a, b) in h.row(i).iter().zip(h2.row(perm[i])) {
                    if a.to_bits() != b.to_bits() {
                        return Err(format!("row {i} differs after relabeling"));
                    }
                }
            }
            Ok(format!("{n}-node graph relabeled: output rows permute bit-identically"))
        },
    );

    run_criterion(
        v,
        6,
        "voice-separation learnability (200/20/40 pieces, edge forwarding)",
        Duration::from_secs(600),
        || {
            let (train, val, test) = split_graphs(&voice_spec(), 200, 20);
            let enc = MusGConvConfig {
                hidden_dim: 64,
                variant: Variant::EdgeForwarding,
                ..MusGConvConfig::default()
            };
            let tcfg = TrainConfig {
                epochs: 50,
                k_nodes: 32,
                lr: 3e-3,
                seed: 1,
                ..TrainConfig::default()
            };
            let untrained_cfg = TrainConfig {
                epochs: 0,
                ..tcfg.clone()
            };
            let untrained = train_link_prediction::<f32>(&train, &val, &enc, &untrained_cfg)
                .map_err(|e| e.to_string())?;
            let u_eval = evaluate_links(&untrained.model, &untrained.params, &test, &untrained_cfg)
                .map_err(|e| e.to_string())?;
            let out = train_link_prediction::<f32>(&train, &val, &enc, &tcfg)
                .map_err(|e| e.to_string())?;
            let eval = evaluate_links(&out.model, &out.params, &test, &tcfg)
                .map_err(|e| e.to_string())?;
            let (f1, uf1) = (eval.metrics.f1, u_eval.metrics.f1);
            if f1 < 0.95 {
                return Err(format!("trained test F1 {f1:.4} < 0.95"));
            }
            if uf1 >= 0.6 {
                return Err(format!("untrained test F1 {uf1:.4} ≥ 0.6"));
            }
            Ok(format!(
                "trained test F1 {f1:.4} ≥ 0.95 (best epoch {}), untrained {uf1:.4} < 0.6",
                out.best_epoch
            ))
        },
    );

    run_criterion(
        v,
        7,
        "style-classification learnability (3 classes, 150/15/30 pieces)",
        Duration::from_secs(600),
        || {
            let spec = SynthSpec {
                pieces: 195,
                notes_per_voice: 16,
                seed: 707,
                classes: stock_classes(3),
                ..SynthSpec::default()
            };
            let (train, val, test) = split_graphs(&spec, 150, 15);
            let enc = MusGConvConfig::default();
            let tcfg = TrainConfig {
                epochs: 50,
                k_nodes: 32,
                seed: 1,
                ..TrainConfig::default()
            };
            let out = train_composer::<f32>(&train, &val, &enc, &tcfg, 3)
                .map_err(|e| e.to_string())?;
            let eval =
                evaluate_composer(&out.model, &out.params, &test).map_err(|e| e.to_string())?;
            if eval.accuracy < 0.90 {
                return Err(format!("test accuracy {:.4} < 0.90", eval.accuracy));
            }
            let majority = eval.majority_accuracy;
            if (majority - 1.0 / 3.0).abs() > 0.05 {
                return Err(format!("majority baseline {majority:.4} is not ≈ 1/3"));
            }
            Ok(format!(
                "test accuracy {:.4} ≥ 0.90 (best epoch {}), majority baseline {majority:.4}",
                eval.accuracy, out.best_epoch
            ))
        },
    );

    run_criterion(
        v,
        8,
        "PCInt ablation direction over 5 seeds (informative, non-blocking)",
        NO_BUDGET,
        || {
            let (train, val, test) = split_graphs(&voice_spec(), 200, 20);
            let full_cfg = MusGConvConfig {
                variant: Variant::EdgeForwarding,
                ..MusGConvConfig::default()
            };
            let ablated_cfg = MusGConvConfig {
                use_pcint: false,
                ..full_cfg.clone()
            };
            let f1s = |enc: &MusGConvConfig| -> Result<Vec<f64>, String> {
                (1..=5u64)
                    .map(|seed| {
                        let tcfg = TrainConfig {
                            epochs: 12,
                            k_nodes: 32,
                            lr: 3e-3,
                            seed,
                            ..TrainConfig::default()
                        };
                        let out = train_link_prediction::<f32>(&train, &val, enc, &tcfg)
                            .map_err(|e| e.to_string())?;
                        let eval = evaluate_links(&out.model, &out.params, &test, &tcfg)
                            .map_err(|e| e.to_string())?;
                        Ok(eval.metrics.f1)
                    })
                    .collect()
            };
            let median = |mut xs: Vec<f64>| {
                xs.sort_by(f64::total_cmp);
                xs[xs.len() / 2]
            };
            let full = median(f1s(&full_cfg)?);
            let ablated = median(f1s(&ablated_cfg)?);
            let direction = if ablated <= full {
                "removing PCInt does not improve"
            } else {
                "removing PCInt improved here — informative only"
            };
            Ok(format!(
                "median test F1: full {full:.4}, without PCInt {ablated:.4}; {direction}"
            ))
        },
    );

    run_criterion(
        v,
        9,
        "MIDI fixtures parse to hand-written golden note tables",
        NO_BUDGET,
        || {
            struct Fixture {
                name: &'static str,
                bytes: Vec<u8>,
                golden: &'static str,
                warnings: MidiWarnings,
            }
            let mut fixtures = Vec::new();

            // Format 0, one note, 6/8 time-signature meta event.
            let mut t = vec![0x00, 0xff, 0x58, 0x04, 6, 3, 24, 8];
            t.extend([0x00, 0x90, 60, 100]);
            t.extend([0x60, 0x80, 60, 0]);
            t.extend(common::EOT);
            fixtures.push(Fixture {
                name: "format0-timesig",
                bytes: common::smf(0, 96, &[t]),
                golden: "divisions=96\ntimesig=0:6/8\n0,96,60,0\n",
                warnings: MidiWarnings::default(),
            });

            // Overlapping same-pitch notes pair first-on/first-off.
            let mut t = vec![0x00, 0x90, 60, 100];
            t.extend([0x81, 0x70, 0x90, 60, 100]);
            t.extend([0x81, 0x70, 0x80, 60, 0]);
            t.extend([0x81, 0x70, 0x80, 60, 0]);
            t.extend(common::EOT);
            fixtures.push(Fixture {
                name: "fifo-overlap",
                bytes: common::smf(0, 480, &[t]),
                golden: "divisions=480\ntimesig=0:4/4\n0,480,60,0\n240,480,60,0\n",
                warnings: MidiWarnings::default(),
            });

            // Running status with velocity-0 note-offs.
            let mut t = vec![0x00, 0x90, 60, 100];
            t.extend([0x60, 60, 0]);
            t.extend([0x00, 64, 100]);
            t.extend([0x60, 64, 0]);
            t.extend(common::EOT);
            fixtures.push(Fixture {
                name: "running-status",
                bytes: common::smf(0, 96, &[t]),
                golden: "divisions=96\ntimesig=0:4/4\n0,96,60,0\n96,96,64,0\n",
                warnings: MidiWarnings::default(),
            });

            // Format 1: voices numbered by (track, channel) first appearance.
            let mut t0 = vec![0x00, 0x91, 70, 100];
            t0.extend([0x10, 0x81, 70, 0]);
            t0.extend([0x00, 0x90, 60, 100]);
            t0.extend([0x10, 0x80, 60, 0]);
            t0.extend(common::EOT);
            let mut t1 = vec![0x00, 0x90, 50, 100];
            t1.extend([0x10, 0x80, 50, 0]);
            t1.extend(common::EOT);
            fixtures.push(Fixture {
                name: "format1-voices",
                bytes: common::smf(1, 96, &[t0, t1]),
                golden: "divisions=96\ntimesig=0:4/4\n0,16,50,2\n0,16,70,0\n16,16,60,1\n",
                warnings: MidiWarnings::default(),
            });

            // Orphan off, zero-length clamp, and an unmatched note-on closed
            // at the end-of-track tick.
            let mut t = vec![0x00, 0x90, 60, 100];
            t.extend([0x00, 0x80, 62, 0]);
            t.extend([0x00, 0x90, 64, 100]);
            t.extend([0x00, 0x80, 64, 0]);
            t.extend([0x83, 0x60, 0xff, 0x2f, 0x00]);
            fixtures.push(Fixture {
                name: "warnings",
                bytes: common::smf(0, 480, &[t]),
                golden: "divisions=480\ntimesig=0:4/4\n0,480,60,0\n0,1,64,0\n",
                warnings: MidiWarnings {
                    unmatched_note_ons: 1,
                    clamped_zero_length: 1,
                    duplicate_note_ons: 0,
                    orphan_note_offs: 1,
                },
            });

            for f in &fixtures {
                let (score, warnings) =
                    parse_midi(&f.bytes, f.name).map_err(|e| format!("{}: {e}", f.name))?;
                let table = write_note_table(&score);
                if table != f.golden {
                    return Err(format!(
                        "{}: parsed table does not match the golden text\ngot:\n{table}\nwant:\n{}",
                        f.name, f.golden
                    ));
                }
                if warnings != f.warnings {
                    return Err(format!(
                        "{}: warnings {warnings:?} != expected {:?}",
                        f.name, f.warnings
                    ));
                }
            }
            Ok(format!("{} fixtures match their golden tables", fixtures.len()))
        },
    );

    run_criterion(
        v,
        10,
        "seeded f64 training runs are byte-identical",
        NO_BUDGET,
        || {
            let spec = SynthSpec {
                pieces: 14,
                notes_per_voice: 12,
                seed: 909,
                ..SynthSpec::default()
            };
            let (train, val, _) = split_graphs(&spec, 12, 2);
            let enc = MusGConvConfig {
                hidden_dim: 16,
                pc_embed_dim: 8,
                ..MusGConvConfig::default()
            };
            let tcfg = TrainConfig {
                epochs: 5,
                k_nodes: 24,
                batch_subgraphs: 4,
                seed: 77,
                ..TrainConfig::default()
            };
            let a = train_link_prediction::<f64>(&train, &val, &enc, &tcfg)
                .map_err(|e| e.to_string())?;
            let b = train_link_prediction::<f64>(&train, &val, &enc, &tcfg)
                .map_err(|e| e.to_string())?;
            if a.metrics_log != b.metrics_log {
                return Err("metrics logs differ between identical runs".into());
            }
            for ((_, name, ta), (_, _, tb)) in a.params.iter().zip(b.params.iter()) {
                let same = ta
                    .to_f64_vec()
                    .iter()
                    .zip(tb.to_f64_vec())
                    .all(|(x, y)| x.to_bits() == y.to_bits());
                if !same {
                    return Err(format!("parameter {name} differs between identical runs"));
                }
            }
            Ok(format!(
                "two runs: {}-byte metrics logs and all parameters bit-identical",
                a.metrics_log.len()
            ))
        },
    );

    let failures: Vec<&str> = verdicts
        .iter()
        .filter(|x| !x.passed)
        .map(|x| x.line.as_str())
        .collect();
    assert!(
        failures.is_empty(),
        "{} acceptance criterion(s) failed:\n{}",
        failures.len(),
        failures.join("\n")
    );
}
