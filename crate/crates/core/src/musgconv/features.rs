//! First-layer edge features and the encoder input bundle.

use super::{pcint, MusGConvConfig, N_DISTANCES};
use crate::error::{Error, Result};
use crate::score_graph::{GraphNote, ScoreGraph, N_RELATIONS};
use crate::tensor::{Elem, Tensor};

/// Interval distances and pitch-class interval indices per relation.
#[derive(Debug, Clone)]
pub struct ManualEdgeFeatures<E> {
    /// Per relation: (edges, 3) onset/duration/pitch distances, l2-normalized
    /// per column over every edge of the graph (all relations together).
    pub dists: [Tensor<E>; N_RELATIONS],
    /// Per relation, per edge: pitch-class interval in 0..12.
    pub pcint: [Vec<u32>; N_RELATIONS],
}

/// Distance features for every edge of a graph. The l2 normalization spans
/// all relations of this graph, so batching graphs must compute features per
/// graph before merging.
pub fn manual_edge_features<E: Elem>(
    notes: &[GraphNote],
    edges: &[Vec<(u32, u32)>; N_RELATIONS],
    signed: bool,
) -> Result<ManualEdgeFeatures<E>> {
    let n = notes.len();
    let mut dists: [Tensor<E>; N_RELATIONS] =
        std::array::from_fn(|r| Tensor::zeros(edges[r].len(), N_DISTANCES));
    let mut pcints: [Vec<u32>; N_RELATIONS] =
        std::array::from_fn(|r| Vec::with_capacity(edges[r].len()));
    for (r, rel_edges) in edges.iter().enumerate() {
        for (k, &(src, dst)) in rel_edges.iter().enumerate() {
            if src as usize >= n || dst as usize >= n {
                return Err(Error::Data(format!(
                    "edge ({src},{dst}) out of range for {n} notes"
                )));
            }
            let (a, b) = (&notes[src as usize], &notes[dst as usize]);
            let (d_on, d_dur, d_pitch) = if signed {
                (
                    (b.onset - a.onset) as f64,
                    (b.duration - a.duration) as f64,
                    b.pitch as f64 - a.pitch as f64,
                )
            } else {
                (
                    (b.onset - a.onset).abs() as f64,
                    (b.duration - a.duration).abs() as f64,
                    (b.pitch as f64 - a.pitch as f64).abs(),
                )
            };
            let row = dists[r].row_mut(k);
            row[0] = E::from_f64(d_on);
            row[1] = E::from_f64(d_dur);
            row[2] = E::from_f64(d_pitch);
            pcints[r].push(pcint(a.pitch, b.pitch));
        }
    }

    // Column norms across all relations; tiny floor avoids dividing by zero
    // when a column is identically zero.
    let mut sumsq = [E::zero(); N_DISTANCES];
    for d in &dists {
        for k in 0..d.rows() {
            for (c, s) in sumsq.iter_mut().enumerate() {
                let v = d.get(k, c);
                *s += v * v;
            }
        }
    }
    let floor = E::from_f64(1e-12);
    let norms: Vec<E> = sumsq.iter().map(|s| s.sqrt().max(floor)).collect();
    for d in &mut dists {
        for k in 0..d.rows() {
            let row = d.row_mut(k);
            for (c, norm) in norms.iter().enumerate() {
                row[c] = row[c] / *norm;
            }
        }
    }
    Ok(ManualEdgeFeatures {
        dists,
        pcint: pcints,
    })
}

/// Everything the encoder needs for one forward pass. Batches of several
/// subgraphs are expressed as one input whose node indices were offset.
#[derive(Debug, Clone)]
pub struct EncoderInput<E> {
    /// (nodes, in_dim) node features.
    pub x: Tensor<E>,
    /// Per relation (src, dst) pairs into `x`'s rows.
    pub edges: [Vec<(u32, u32)>; N_RELATIONS],
    /// Present exactly when the config uses manual edge input.
    pub manual: Option<ManualEdgeFeatures<E>>,
}

impl<E: Elem> EncoderInput<E> {
    pub fn from_parts(
        x: Tensor<E>,
        edges: [Vec<(u32, u32)>; N_RELATIONS],
        notes: &[GraphNote],
        cfg: &MusGConvConfig,
    ) -> Result<Self> {
        if notes.len() != x.rows() {
            return Err(Error::Data(format!(
                "{} notes but {} feature rows",
                notes.len(),
                x.rows()
            )));
        }
        if x.cols() != cfg.in_dim {
            return Err(Error::shape("encoder input", x.shape_string(), format!("?x{}", cfg.in_dim)));
        }
        let manual = if cfg.use_manual_edge_input {
            Some(manual_edge_features(notes, &edges, cfg.signed_distances)?)
        } else {
            for rel_edges in &edges {
                for &(src, dst) in rel_edges {
                    if src as usize >= x.rows() || dst as usize >= x.rows() {
                        return Err(Error::Data(format!(
                            "edge ({src},{dst}) out of range for {} nodes",
                            x.rows()
                        )));
                    }
                }
            }
            None
        };
        Ok(EncoderInput { x, edges, manual })
    }

    pub fn from_graph(graph: &ScoreGraph, cfg: &MusGConvConfig) -> Result<Self> {
        if cfg.in_dim != crate::score_graph::NODE_FEATURE_DIM {
            return Err(Error::Config(format!(
                "in_dim {} does not match graph feature width {}",
                cfg.in_dim,
                crate::score_graph::NODE_FEATURE_DIM
            )));
        }
        let data: Vec<E> = graph.node_features.iter().map(|&v| E::from_f64(v)).collect();
        let x = Tensor::from_vec(graph.n_nodes, cfg.in_dim, data)?;
        Self::from_parts(x, graph.edges.clone(), &graph.notes, cfg)
    }

    pub fn n_nodes(&self) -> usize {
        self.x.rows()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.iter().map(|e| e.len()).sum()
    }
}
