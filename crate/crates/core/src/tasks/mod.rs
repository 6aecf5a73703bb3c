//! Training tasks on score graphs: voice-link prediction between note pairs
//! and whole-piece classification.

mod heads;
mod train;

pub use heads::{ComposerHead, ComposerModel, LinkHead, LinkModel};
pub use train::{
    evaluate_composer, evaluate_links, train_composer, train_link_prediction, ClassEvaluation,
    ComposerTrainOutcome, LinkEvaluation, LinkTrainOutcome, PredictionRow,
};

use crate::error::{Error, Result};
use crate::score_graph::GraphNote;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Subgraphs per batch.
    pub batch_subgraphs: usize,
    /// Window size in nodes.
    pub k_nodes: usize,
    /// Negatives sampled per positive link.
    pub neg_per_pos: usize,
    /// Candidate-pair horizon in ticks; `None` means one bar.
    pub tau: Option<i64>,
    /// Probability threshold for calling a pair linked.
    pub threshold: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            weight_decay: 5e-4,
            epochs: 50,
            batch_subgraphs: 8,
            k_nodes: 512,
            neg_per_pos: 5,
            tau: None,
            threshold: 0.5,
            patience: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs > 0 && (self.batch_subgraphs == 0 || self.k_nodes == 0) {
            return Err(Error::Config(
                "batch_subgraphs and k_nodes must be positive".into(),
            ));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!(
                "threshold must be in (0, 1), got {}",
                self.threshold
            )));
        }
        if let Some(tau) = self.tau {
            if tau < 0 {
                return Err(Error::Config(format!("tau must be non-negative, got {tau}")));
            }
        }
        Ok(())
    }
}

/// True voice links: consecutive notes within each voice, ordering each voice
/// by onset and then pitch so chords chain bottom note to top note before
/// moving on.
pub fn ground_truth_links(notes: &[GraphNote]) -> Vec<(u32, u32)> {
    let mut order: Vec<u32> = (0..notes.len() as u32).collect();
    order.sort_by_key(|&i| {
        let n = &notes[i as usize];
        (n.voice, n.onset, n.pitch, i)
    });
    order
        .windows(2)
        .filter(|w| notes[w[0] as usize].voice == notes[w[1] as usize].voice)
        .map(|w| (w[0], w[1]))
        .collect()
}

/// Scoreable pairs (u, v): distinct notes where v does not start before u and
/// starts at most `tau` ticks after u ends. Overlapping and simultaneous
/// notes always qualify.
pub fn candidate_pairs(notes: &[GraphNote], tau: i64) -> Result<Vec<(u32, u32)>> {
    if tau < 0 {
        return Err(Error::Config(format!("tau must be non-negative, got {tau}")));
    }
    let mut by_onset: Vec<u32> = (0..notes.len() as u32).collect();
    by_onset.sort_by_key(|&i| (notes[i as usize].onset, i));
    let onsets: Vec<i64> = by_onset.iter().map(|&i| notes[i as usize].onset).collect();

    let mut pairs = Vec::new();
    for u in 0..notes.len() as u32 {
        let nu = &notes[u as usize];
        let lo = onsets.partition_point(|&t| t < nu.onset);
        let hi = onsets.partition_point(|&t| t <= nu.offset() + tau);
        for k in lo..hi {
            let v = by_onset[k];
            if v != u {
                pairs.push((u, v));
            }
        }
    }
    Ok(pairs)
}

/// Links that no candidate pair can ever recover (gap longer than tau); they
/// count as misses during evaluation.
pub fn uncovered_links(notes: &[GraphNote], tau: i64) -> Result<Vec<(u32, u32)>> {
    let candidates: std::collections::HashSet<(u32, u32)> =
        candidate_pairs(notes, tau)?.into_iter().collect();
    Ok(ground_truth_links(notes)
        .into_iter()
        .filter(|p| !candidates.contains(p))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryMetrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision/recall/F1 from raw counts; empty denominators give zero.
pub fn binary_metrics(tp: usize, fp: usize, fn_: usize) -> BinaryMetrics {
    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let recall = if tp + fn_ > 0 {
        tp as f64 / (tp + fn_) as f64
    } else {
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    BinaryMetrics {
        tp,
        fp,
        fn_,
        precision,
        recall,
        f1,
    }
}
