//! Subgraph sampling for training: contiguous node windows, induced
//! subgraphs, and disjoint-union batches.
//!
//! Batches are built per subgraph first (edge-feature normalization included)
//! and only then merged, so a batched forward pass reproduces the unbatched
//! one node for node.

use crate::error::{Error, Result};
use crate::musgconv::{manual_edge_features, EncoderInput, ManualEdgeFeatures, MusGConvConfig};
use crate::score_graph::{ScoreGraph, N_RELATIONS};
use crate::tensor::{Elem, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A contiguous run of up to `k` nodes in the graph's canonical
/// (onset, pitch, id) order; the start offset is uniform.
pub fn sample_window(graph: &ScoreGraph, k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<u32>> {
    if k == 0 {
        return Err(Error::Config("window size must be positive".into()));
    }
    let n = graph.n_nodes;
    if n <= k {
        return Ok(graph.node_order.clone());
    }
    let start = rng.random_range(0..=n - k);
    Ok(graph.node_order[start..start + k].to_vec())
}

/// Subgraph over `node_ids`, keeping exactly the edges with both endpoints
/// inside the set. Nodes are relabeled densely in the order given; edge lists
/// keep their original relative order under the relabeling.
pub fn induce_subgraph(graph: &ScoreGraph, node_ids: &[u32]) -> Result<ScoreGraph> {
    let mut old_to_new: Vec<Option<u32>> = vec![None; graph.n_nodes];
    for (new_id, &old_id) in node_ids.iter().enumerate() {
        if old_id as usize >= graph.n_nodes {
            return Err(Error::Data(format!(
                "node id {old_id} out of range for {} nodes",
                graph.n_nodes
            )));
        }
        if old_to_new[old_id as usize].is_some() {
            return Err(Error::Data(format!("node id {old_id} repeated in window")));
        }
        old_to_new[old_id as usize] = Some(new_id as u32);
    }

    let edges: [Vec<(u32, u32)>; N_RELATIONS] = std::array::from_fn(|r| {
        graph.edges[r]
            .iter()
            .filter_map(|&(src, dst)| {
                match (old_to_new[src as usize], old_to_new[dst as usize]) {
                    (Some(s), Some(d)) => Some((s, d)),
                    _ => None,
                }
            })
            .collect()
    });

    let notes = node_ids
        .iter()
        .map(|&id| graph.notes[id as usize])
        .collect();
    let dim = crate::score_graph::NODE_FEATURE_DIM;
    let mut node_features = Vec::with_capacity(node_ids.len() * dim);
    for &id in node_ids {
        node_features.extend_from_slice(graph.feature_row(id as usize));
    }

    let mut node_order: Vec<u32> = (0..node_ids.len() as u32).collect();
    let sub_notes: &Vec<crate::score_graph::GraphNote> = &notes;
    node_order.sort_by_key(|&i| {
        let n = &sub_notes[i as usize];
        (n.onset, n.pitch, i)
    });

    Ok(ScoreGraph {
        n_nodes: node_ids.len(),
        edges,
        node_features,
        node_order,
        notes,
        bar_ticks: graph.bar_ticks,
        source_name: graph.source_name.clone(),
        class_label: graph.class_label,
    })
}

/// Disjoint union of subgraphs with per-subgraph edge features, ready for one
/// encoder pass.
#[derive(Debug, Clone)]
pub struct Batch<E> {
    pub subgraphs: Vec<ScoreGraph>,
    pub input: EncoderInput<E>,
    /// Node offsets per subgraph; length is one more than `subgraphs`.
    pub offsets: Vec<usize>,
}

impl<E: Elem> Batch<E> {
    pub fn from_graphs(subgraphs: Vec<ScoreGraph>, cfg: &MusGConvConfig) -> Result<Self> {
        if subgraphs.is_empty() {
            return Err(Error::Data("batch needs at least one subgraph".into()));
        }
        if cfg.in_dim != crate::score_graph::NODE_FEATURE_DIM {
            return Err(Error::Config(format!(
                "in_dim {} does not match graph feature width {}",
                cfg.in_dim,
                crate::score_graph::NODE_FEATURE_DIM
            )));
        }
        let mut offsets = Vec::with_capacity(subgraphs.len() + 1);
        offsets.push(0usize);
        for g in &subgraphs {
            offsets.push(offsets.last().unwrap() + g.n_nodes);
        }
        let total = *offsets.last().unwrap();

        let mut x = Tensor::<E>::zeros(total, cfg.in_dim);
        for (gi, g) in subgraphs.iter().enumerate() {
            for i in 0..g.n_nodes {
                let row = x.row_mut(offsets[gi] + i);
                for (v, &f) in row.iter_mut().zip(g.feature_row(i)) {
                    *v = E::from_f64(f);
                }
            }
        }

        let mut edges: [Vec<(u32, u32)>; N_RELATIONS] = Default::default();
        for (gi, g) in subgraphs.iter().enumerate() {
            let off = offsets[gi] as u32;
            for (r, rel_edges) in g.edges.iter().enumerate() {
                edges[r].extend(rel_edges.iter().map(|&(s, d)| (s + off, d + off)));
            }
        }

        // Edge features are normalized within each subgraph, then stacked.
        let manual = if cfg.use_manual_edge_input {
            let per_graph: Vec<ManualEdgeFeatures<E>> = subgraphs
                .iter()
                .map(|g| manual_edge_features(&g.notes, &g.edges, cfg.signed_distances))
                .collect::<Result<_>>()?;
            let dists: [Tensor<E>; N_RELATIONS] = std::array::from_fn(|r| {
                let rows: usize = per_graph.iter().map(|f| f.dists[r].rows()).sum();
                let mut out = Tensor::zeros(rows, crate::musgconv::N_DISTANCES);
                let mut at = 0;
                for f in &per_graph {
                    for i in 0..f.dists[r].rows() {
                        out.row_mut(at).copy_from_slice(f.dists[r].row(i));
                        at += 1;
                    }
                }
                out
            });
            let pcint: [Vec<u32>; N_RELATIONS] = std::array::from_fn(|r| {
                per_graph
                    .iter()
                    .flat_map(|f| f.pcint[r].iter().copied())
                    .collect()
            });
            Some(ManualEdgeFeatures { dists, pcint })
        } else {
            None
        };

        Ok(Batch {
            subgraphs,
            input: EncoderInput { x, edges, manual },
            offsets,
        })
    }

    pub fn n_nodes(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Global node indices of subgraph `gi`.
    pub fn node_range(&self, gi: usize) -> std::ops::Range<usize> {
        self.offsets[gi]..self.offsets[gi + 1]
    }
}

/// Samples `n_subgraphs` windows of up to `k` nodes, drawing source graphs
/// uniformly with replacement.
pub fn sample_batch<E: Elem>(
    graphs: &[ScoreGraph],
    cfg: &MusGConvConfig,
    k: usize,
    n_subgraphs: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Batch<E>> {
    if graphs.is_empty() {
        return Err(Error::Data("no graphs to sample from".into()));
    }
    if n_subgraphs == 0 {
        return Err(Error::Config("batch needs at least one subgraph".into()));
    }
    let mut subgraphs = Vec::with_capacity(n_subgraphs);
    for _ in 0..n_subgraphs {
        let g = &graphs[rng.random_range(0..graphs.len())];
        let window = sample_window(g, k, rng)?;
        subgraphs.push(induce_subgraph(g, &window)?);
    }
    Batch::from_graphs(subgraphs, cfg)
}
