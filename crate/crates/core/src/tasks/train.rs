//! Mini-batch training loops and full-piece evaluation for both tasks.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::heads::{ComposerModel, LinkModel};
use super::{binary_metrics, candidate_pairs, ground_truth_links, BinaryMetrics, TrainConfig};
use crate::error::{Error, Result};
use crate::musgconv::{EncoderInput, MusGConvConfig};
use crate::sampler::{sample_batch, Batch};
use crate::score_graph::ScoreGraph;
use crate::tensor::{stable_sigmoid, AdamW, Elem, ParamSet, Tape, Tensor};

/// One scored candidate pair, for prediction dumps.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub piece: String,
    pub src: u32,
    pub dst: u32,
    pub prob: f64,
    pub label: bool,
}

#[derive(Debug, Clone)]
pub struct LinkEvaluation {
    /// Mean binary cross-entropy over all candidate pairs.
    pub loss: f64,
    pub metrics: BinaryMetrics,
    pub predictions: Vec<PredictionRow>,
}

#[derive(Debug, Clone)]
pub struct ClassEvaluation {
    /// Mean cross-entropy over pieces.
    pub loss: f64,
    pub accuracy: f64,
    /// Accuracy of always answering the most frequent label.
    pub majority_accuracy: f64,
    /// (piece, predicted class, true class).
    pub predictions: Vec<(String, u32, u32)>,
}

#[derive(Debug)]
pub struct LinkTrainOutcome<E: Elem> {
    pub model: LinkModel,
    /// Parameters from the best validation epoch (final epoch when no
    /// validation set was given).
    pub params: ParamSet<E>,
    /// One `epoch,split,loss,metric` line per epoch and split.
    pub metrics_log: String,
    pub best_epoch: usize,
    pub best_val_f1: f64,
}

#[derive(Debug)]
pub struct ComposerTrainOutcome<E: Elem> {
    pub model: ComposerModel,
    pub params: ParamSet<E>,
    pub metrics_log: String,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
}

fn total_nodes(graphs: &[ScoreGraph]) -> usize {
    graphs.iter().map(|g| g.n_nodes).sum()
}

fn batches_per_epoch(graphs: &[ScoreGraph], tcfg: &TrainConfig) -> usize {
    let per_batch = tcfg.batch_subgraphs * tcfg.k_nodes;
    total_nodes(graphs).div_ceil(per_batch).max(1)
}

fn push_line(log: &mut String, epoch: usize, split: &str, loss: f64, metric: f64) {
    use std::fmt::Write;
    writeln!(log, "{epoch},{split},{loss:.6},{metric:.6}").unwrap();
}

fn check_finite(loss: f64, epoch: usize, what: &str) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!(
            "{what} loss is not finite at epoch {epoch}; aborting"
        )))
    }
}

/// Positive links plus sampled negatives for every subgraph of a batch, with
/// node ids rebased into the batch's stacked embedding matrix.
fn assemble_link_pairs<E: Elem>(
    batch: &Batch<E>,
    tcfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<(u32, u32)>, Vec<f64>)> {
    let mut pairs = Vec::new();
    let mut labels = Vec::new();
    for (gi, sub) in batch.subgraphs.iter().enumerate() {
        let base = batch.node_range(gi).start as u32;
        let positives = ground_truth_links(&sub.notes);
        let tau = tcfg.tau.unwrap_or(sub.bar_ticks);
        let positive_set: HashSet<(u32, u32)> = positives.iter().copied().collect();
        let pool: Vec<(u32, u32)> = candidate_pairs(&sub.notes, tau)?
            .into_iter()
            .filter(|p| !positive_set.contains(p))
            .collect();
        let n_neg = pool.len().min(tcfg.neg_per_pos * positives.len());
        let mut chosen = if n_neg > 0 {
            rand::seq::index::sample(rng, pool.len(), n_neg).into_vec()
        } else {
            Vec::new()
        };
        chosen.sort_unstable();
        for (u, v) in positives {
            pairs.push((base + u, base + v));
            labels.push(1.0);
        }
        for i in chosen {
            let (u, v) = pool[i];
            pairs.push((base + u, base + v));
            labels.push(0.0);
        }
    }
    Ok((pairs, labels))
}

fn count_binary(probs: &[f64], labels: &[f64], threshold: f64) -> (usize, usize, usize) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&p, &y) in probs.iter().zip(labels) {
        match (p >= threshold, y > 0.5) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    (tp, fp, fn_)
}

/// Trains encoder and link head with sampled-negative binary cross-entropy,
/// tracking validation F1 for early stopping and returning the parameters of
/// the best epoch.
pub fn train_link_prediction<E: Elem>(
    train_graphs: &[ScoreGraph],
    val_graphs: &[ScoreGraph],
    enc_cfg: &MusGConvConfig,
    tcfg: &TrainConfig,
) -> Result<LinkTrainOutcome<E>> {
    tcfg.validate()?;
    if train_graphs.is_empty() && tcfg.epochs > 0 {
        return Err(Error::Data("no training graphs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut params = ParamSet::<E>::new();
    let model = LinkModel::new(enc_cfg.clone(), &mut params, &mut rng)?;
    let mut opt = AdamW::new(&params, tcfg.lr, tcfg.weight_decay);

    let mut log = String::new();
    let mut best_params = params.clone();
    let mut best_epoch = 0;
    let mut best_f1 = f64::NEG_INFINITY;
    let mut stale_epochs = 0;
    let n_batches = if tcfg.epochs > 0 {
        batches_per_epoch(train_graphs, tcfg)
    } else {
        0
    };

    for epoch in 1..=tcfg.epochs {
        let mut loss_sum = 0.0;
        let mut loss_batches = 0usize;
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for _ in 0..n_batches {
            let batch: Batch<E> = sample_batch(
                train_graphs,
                enc_cfg,
                tcfg.k_nodes,
                tcfg.batch_subgraphs,
                &mut rng,
            )?;
            let (pairs, labels) = assemble_link_pairs(&batch, tcfg, &mut rng)?;
            if pairs.is_empty() {
                continue;
            }
            let mut tape = Tape::new();
            let h = model.encoder.encode(&mut tape, &params, &batch.input)?;
            let z = model.head.logits(&mut tape, &params, h, &pairs)?;
            let targets = tape.constant(Tensor::from_f64s(labels.len(), 1, &labels)?);
            let loss = tape.bce_with_logits(z, targets)?;
            let loss_val = tape.value(loss).scalar().as_f64();
            check_finite(loss_val, epoch, "training")?;

            let probs: Vec<f64> = tape
                .value(z)
                .data()
                .iter()
                .map(|&v| stable_sigmoid(v).as_f64())
                .collect();
            let (btp, bfp, bfn) = count_binary(&probs, &labels, tcfg.threshold);
            tp += btp;
            fp += bfp;
            fn_ += bfn;

            let grads = tape.backward_params(loss, params.len())?;
            opt.step(&mut params, &grads);
            loss_sum += loss_val;
            loss_batches += 1;
        }
        let train_loss = if loss_batches > 0 {
            loss_sum / loss_batches as f64
        } else {
            0.0
        };
        push_line(&mut log, epoch, "train", train_loss, binary_metrics(tp, fp, fn_).f1);

        if !val_graphs.is_empty() {
            let eval = evaluate_links(&model, &params, val_graphs, tcfg)?;
            check_finite(eval.loss, epoch, "validation")?;
            push_line(&mut log, epoch, "val", eval.loss, eval.metrics.f1);
            if eval.metrics.f1 > best_f1 {
                best_f1 = eval.metrics.f1;
                best_epoch = epoch;
                best_params = params.clone();
                stale_epochs = 0;
            } else {
                stale_epochs += 1;
                if tcfg.patience > 0 && stale_epochs >= tcfg.patience {
                    break;
                }
            }
        } else {
            best_epoch = epoch;
            best_params = params.clone();
        }
    }
    Ok(LinkTrainOutcome {
        model,
        params: best_params,
        metrics_log: log,
        best_epoch,
        best_val_f1: if best_f1.is_finite() { best_f1 } else { 0.0 },
    })
}

/// Scores every candidate pair of every full piece and compares against the
/// true voice links. Links beyond the candidate horizon count as misses.
pub fn evaluate_links<E: Elem>(
    model: &LinkModel,
    params: &ParamSet<E>,
    graphs: &[ScoreGraph],
    tcfg: &TrainConfig,
) -> Result<LinkEvaluation> {
    let mut predictions = Vec::new();
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let mut loss_sum = 0.0;
    let mut loss_pairs = 0usize;
    for g in graphs {
        let truth: HashSet<(u32, u32)> = ground_truth_links(&g.notes).into_iter().collect();
        let tau = tcfg.tau.unwrap_or(g.bar_ticks);
        let candidates = candidate_pairs(&g.notes, tau)?;
        let candidate_set: HashSet<(u32, u32)> = candidates.iter().copied().collect();
        fn_ += truth.iter().filter(|p| !candidate_set.contains(p)).count();
        if candidates.is_empty() {
            continue;
        }

        let input = EncoderInput::<E>::from_graph(g, &model.encoder.cfg)?;
        let mut tape = Tape::new();
        let h = model.encoder.encode(&mut tape, params, &input)?;
        let z = model.head.logits(&mut tape, params, h, &candidates)?;
        let labels: Vec<f64> = candidates
            .iter()
            .map(|p| if truth.contains(p) { 1.0 } else { 0.0 })
            .collect();
        let targets = tape.constant(Tensor::from_f64s(labels.len(), 1, &labels)?);
        let loss = tape.bce_with_logits(z, targets)?;
        loss_sum += tape.value(loss).scalar().as_f64() * labels.len() as f64;
        loss_pairs += labels.len();

        let probs: Vec<f64> = tape
            .value(z)
            .data()
            .iter()
            .map(|&v| stable_sigmoid(v).as_f64())
            .collect();
        let (gtp, gfp, gfn) = count_binary(&probs, &labels, tcfg.threshold);
        tp += gtp;
        fp += gfp;
        fn_ += gfn;
        for (i, &(u, v)) in candidates.iter().enumerate() {
            predictions.push(PredictionRow {
                piece: g.source_name.clone(),
                src: u,
                dst: v,
                prob: probs[i],
                label: labels[i] > 0.5,
            });
        }
    }
    Ok(LinkEvaluation {
        loss: if loss_pairs > 0 {
            loss_sum / loss_pairs as f64
        } else {
            0.0
        },
        metrics: binary_metrics(tp, fp, fn_),
        predictions,
    })
}

fn batch_labels<E: Elem>(batch: &Batch<E>, n_classes: usize) -> Result<Vec<u32>> {
    batch
        .subgraphs
        .iter()
        .map(|g| match g.class_label {
            Some(c) if (c as usize) < n_classes => Ok(c),
            Some(c) => Err(Error::Data(format!(
                "label {c} out of range for {n_classes} classes in '{}'",
                g.source_name
            ))),
            None => Err(Error::Data(format!("piece '{}' has no label", g.source_name))),
        })
        .collect()
}

/// Trains encoder and classification head with cross-entropy, tracking
/// validation accuracy for early stopping.
pub fn train_composer<E: Elem>(
    train_graphs: &[ScoreGraph],
    val_graphs: &[ScoreGraph],
    enc_cfg: &MusGConvConfig,
    tcfg: &TrainConfig,
    n_classes: usize,
) -> Result<ComposerTrainOutcome<E>> {
    tcfg.validate()?;
    if train_graphs.is_empty() && tcfg.epochs > 0 {
        return Err(Error::Data("no training graphs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut params = ParamSet::<E>::new();
    let model = ComposerModel::new(enc_cfg.clone(), n_classes, &mut params, &mut rng)?;
    let mut opt = AdamW::new(&params, tcfg.lr, tcfg.weight_decay);

    let mut log = String::new();
    let mut best_params = params.clone();
    let mut best_epoch = 0;
    let mut best_acc = f64::NEG_INFINITY;
    let mut stale_epochs = 0;
    let n_batches = if tcfg.epochs > 0 {
        batches_per_epoch(train_graphs, tcfg)
    } else {
        0
    };

    for epoch in 1..=tcfg.epochs {
        let mut loss_sum = 0.0;
        let mut loss_batches = 0usize;
        let mut correct = 0usize;
        let mut seen = 0usize;
        for _ in 0..n_batches {
            let batch: Batch<E> = sample_batch(
                train_graphs,
                enc_cfg,
                tcfg.k_nodes,
                tcfg.batch_subgraphs,
                &mut rng,
            )?;
            let labels = batch_labels(&batch, n_classes)?;
            let segments: Vec<_> = (0..batch.subgraphs.len())
                .map(|gi| batch.node_range(gi))
                .collect();
            let mut tape = Tape::new();
            let h = model.encoder.encode(&mut tape, &params, &batch.input)?;
            let z = model.head.logits(&mut tape, &params, h, &segments)?;
            let loss = tape.cross_entropy(z, &labels)?;
            let loss_val = tape.value(loss).scalar().as_f64();
            check_finite(loss_val, epoch, "training")?;

            for (row, &label) in labels.iter().enumerate() {
                if argmax_row(tape.value(z), row) == label {
                    correct += 1;
                }
            }
            seen += labels.len();

            let grads = tape.backward_params(loss, params.len())?;
            opt.step(&mut params, &grads);
            loss_sum += loss_val;
            loss_batches += 1;
        }
        let train_loss = if loss_batches > 0 {
            loss_sum / loss_batches as f64
        } else {
            0.0
        };
        let train_acc = if seen > 0 {
            correct as f64 / seen as f64
        } else {
            0.0
        };
        push_line(&mut log, epoch, "train", train_loss, train_acc);

        if !val_graphs.is_empty() {
            let eval = evaluate_composer(&model, &params, val_graphs)?;
            check_finite(eval.loss, epoch, "validation")?;
            push_line(&mut log, epoch, "val", eval.loss, eval.accuracy);
            if eval.accuracy > best_acc {
                best_acc = eval.accuracy;
                best_epoch = epoch;
                best_params = params.clone();
                stale_epochs = 0;
            } else {
                stale_epochs += 1;
                if tcfg.patience > 0 && stale_epochs >= tcfg.patience {
                    break;
                }
            }
        } else {
            best_epoch = epoch;
            best_params = params.clone();
        }
    }
    Ok(ComposerTrainOutcome {
        model,
        params: best_params,
        metrics_log: log,
        best_epoch,
        best_val_accuracy: if best_acc.is_finite() { best_acc } else { 0.0 },
    })
}

fn argmax_row<E: Elem>(t: &Tensor<E>, row: usize) -> u32 {
    let mut best = 0;
    for c in 1..t.cols() {
        if t.get(row, c) > t.get(row, best) {
            best = c;
        }
    }
    best as u32
}

/// Classifies every full piece and reports accuracy alongside the
/// majority-label baseline on the same pieces.
pub fn evaluate_composer<E: Elem>(
    model: &ComposerModel,
    params: &ParamSet<E>,
    graphs: &[ScoreGraph],
) -> Result<ClassEvaluation> {
    if graphs.is_empty() {
        return Err(Error::Data("no graphs to evaluate".into()));
    }
    let n_classes = model.head.n_classes;
    let mut predictions = Vec::new();
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    let mut label_counts = vec![0usize; n_classes];
    for g in graphs {
        let label = match g.class_label {
            Some(c) if (c as usize) < n_classes => c,
            Some(c) => {
                return Err(Error::Data(format!(
                    "label {c} out of range for {n_classes} classes in '{}'",
                    g.source_name
                )))
            }
            None => return Err(Error::Data(format!("piece '{}' has no label", g.source_name))),
        };
        label_counts[label as usize] += 1;

        let input = EncoderInput::<E>::from_graph(g, &model.encoder.cfg)?;
        let mut tape = Tape::new();
        let h = model.encoder.encode(&mut tape, params, &input)?;
        let z = model.head.logits(&mut tape, params, h, &[0..g.n_nodes])?;
        let loss = tape.cross_entropy(z, &[label])?;
        loss_sum += tape.value(loss).scalar().as_f64();
        let pred = argmax_row(tape.value(z), 0);
        if pred == label {
            correct += 1;
        }
        predictions.push((g.source_name.clone(), pred, label));
    }
    let total = graphs.len() as f64;
    Ok(ClassEvaluation {
        loss: loss_sum / total,
        accuracy: correct as f64 / total,
        majority_accuracy: *label_counts.iter().max().unwrap() as f64 / total,
        predictions,
    })
}
