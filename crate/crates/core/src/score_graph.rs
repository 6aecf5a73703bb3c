//! Heterogeneous score graph: one node per note, four temporal relations plus
//! inverses, and the 20-dimensional node feature matrix.

use crate::error::{Error, Result};
use crate::note_model::Score;
use std::collections::HashMap;
use std::fmt::Write as _;

/// Edge relation types. Onset is symmetric and emitted in both directions
/// instead of having a separate inverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RelationType {
    Onset,
    During,
    Follow,
    Silence,
    DuringInv,
    FollowInv,
    SilenceInv,
}

pub const N_RELATIONS: usize = 7;

impl RelationType {
    pub const ALL: [RelationType; N_RELATIONS] = [
        RelationType::Onset,
        RelationType::During,
        RelationType::Follow,
        RelationType::Silence,
        RelationType::DuringInv,
        RelationType::FollowInv,
        RelationType::SilenceInv,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&r| r == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            RelationType::Onset => "onset",
            RelationType::During => "during",
            RelationType::Follow => "follow",
            RelationType::Silence => "silence",
            RelationType::DuringInv => "during_inv",
            RelationType::FollowInv => "follow_inv",
            RelationType::SilenceInv => "silence_inv",
        }
    }
}

/// 12 pitch classes + 7 octaves + 1 duration scalar.
pub const NODE_FEATURE_DIM: usize = 20;

/// Note attributes kept per node so induced subgraphs and edge-feature
/// computation do not need the originating Score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphNote {
    pub onset: i64,
    pub duration: i64,
    pub pitch: u8,
    pub voice: u32,
}

impl GraphNote {
    pub fn offset(&self) -> i64 {
        self.onset + self.duration
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGraph {
    pub n_nodes: usize,
    /// Directed (src, dst) pairs, indexed by `RelationType::index`.
    pub edges: [Vec<(u32, u32)>; N_RELATIONS],
    /// Row-major n_nodes x NODE_FEATURE_DIM.
    pub node_features: Vec<f64>,
    /// Node ids sorted by (onset, pitch, id); identity for graphs built here,
    /// kept explicit because samplers rely on it.
    pub node_order: Vec<u32>,
    pub notes: Vec<GraphNote>,
    /// Bar length in ticks at tick 0, carried for bar-scaled defaults.
    pub bar_ticks: i64,
    pub source_name: String,
    pub class_label: Option<u32>,
}

impl ScoreGraph {
    pub fn edges_of(&self, rel: RelationType) -> &[(u32, u32)] {
        &self.edges[rel.index()]
    }

    pub fn n_edges(&self) -> usize {
        self.edges.iter().map(|e| e.len()).sum()
    }

    pub fn feature_row(&self, node: usize) -> &[f64] {
        &self.node_features[node * NODE_FEATURE_DIM..(node + 1) * NODE_FEATURE_DIM]
    }
}

/// Per-note feature rows: one-hot pitch class, one-hot octave (clamped to
/// 1..=7), and tanh(duration / bar duration).
pub fn node_features(score: &Score) -> Vec<f64> {
    let mut rows = vec![0.0; score.notes.len() * NODE_FEATURE_DIM];
    for (i, n) in score.notes.iter().enumerate() {
        let row = &mut rows[i * NODE_FEATURE_DIM..(i + 1) * NODE_FEATURE_DIM];
        row[(n.pitch % 12) as usize] = 1.0;
        let octave = ((n.pitch / 12) as i32 - 1).clamp(1, 7);
        row[12 + (octave - 1) as usize] = 1.0;
        let bar = score.bar_duration_at(n.onset) as f64;
        row[19] = (n.duration as f64 / bar).tanh();
    }
    rows
}

/// Build the heterogeneous graph for a score with an onset-sorted sweep.
///
/// Relations over distinct notes u, v with off(u) = on(u) + dur(u):
/// onset when on(u) = on(v); during when on(u) < on(v) < off(u); follow when
/// off(u) = on(v); silence when off(u) ends at a maximal gap in the sounding
/// coverage and on(v) starts it.
pub fn build_graph(score: &Score) -> ScoreGraph {
    let n = score.notes.len();
    let mut edges: [Vec<(u32, u32)>; N_RELATIONS] = Default::default();

    // Notes arrive sorted by (onset, pitch, id); ids equal positions.
    let onsets: Vec<i64> = score.notes.iter().map(|n| n.onset).collect();
    debug_assert!(onsets.windows(2).all(|w| w[0] <= w[1]));

    // Offset index for silence sources.
    let mut by_offset: HashMap<i64, Vec<u32>> = HashMap::new();
    for note in &score.notes {
        by_offset.entry(note.offset()).or_default().push(note.id as u32);
    }

    let mut group_start = 0usize;
    let mut coverage_end = i64::MIN;
    while group_start < n {
        let onset = onsets[group_start];
        let mut group_end = group_start;
        while group_end < n && onsets[group_end] == onset {
            group_end += 1;
        }

        // Silence: a maximal gap between the sounding coverage so far and this
        // onset group connects every note ending at the gap start to every
        // note starting here.
        if coverage_end != i64::MIN && onset > coverage_end {
            if let Some(sources) = by_offset.get(&coverage_end) {
                for &u in sources {
                    for v in group_start..group_end {
                        edges[RelationType::Silence.index()].push((u, v as u32));
                        edges[RelationType::SilenceInv.index()].push((v as u32, u));
                    }
                }
            }
        }

        for u in group_start..group_end {
            // Onset: all ordered pairs inside the group.
            for v in group_start..group_end {
                if u != v {
                    edges[RelationType::Onset.index()].push((u as u32, v as u32));
                }
            }

            let off_u = score.notes[u].offset();
            // During: strict containment of v's onset in (on(u), off(u)).
            let during_end = onsets.partition_point(|&t| t < off_u);
            for v in group_end..during_end {
                edges[RelationType::During.index()].push((u as u32, v as u32));
                edges[RelationType::DuringInv.index()].push((v as u32, u as u32));
            }
            // Follow: notes starting exactly at off(u).
            let follow_end = onsets.partition_point(|&t| t <= off_u);
            for v in during_end..follow_end {
                edges[RelationType::Follow.index()].push((u as u32, v as u32));
                edges[RelationType::FollowInv.index()].push((v as u32, u as u32));
            }

            coverage_end = coverage_end.max(off_u);
        }
        group_start = group_end;
    }

    let mut node_order: Vec<u32> = (0..n as u32).collect();
    node_order.sort_by_key(|&i| {
        let note = &score.notes[i as usize];
        (note.onset, note.pitch, i)
    });

    ScoreGraph {
        n_nodes: n,
        edges,
        node_features: node_features(score),
        node_order,
        notes: score
            .notes
            .iter()
            .map(|n| GraphNote {
                onset: n.onset,
                duration: n.duration,
                pitch: n.pitch,
                voice: n.voice,
            })
            .collect(),
        bar_ticks: score.bar_duration_at(0),
        source_name: score.source_name.clone(),
        class_label: score.class_label,
    }
}

/// Text dump of a graph: node count, per-relation edge lists, then feature
/// rows with 6-decimal fixed-point values.
pub fn dump_graph(graph: &ScoreGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "nodes={}", graph.n_nodes);
    for rel in RelationType::ALL {
        let _ = writeln!(out, "rel={}", rel.name());
        for &(src, dst) in graph.edges_of(rel) {
            let _ = writeln!(out, "{src},{dst}");
        }
    }
    let _ = writeln!(out, "features");
    for i in 0..graph.n_nodes {
        let row: Vec<String> = graph
            .feature_row(i)
            .iter()
            .map(|x| format!("{x:.6}"))
            .collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

/// Parse the dump format back into edge lists and features, for tooling and
/// round-trip tests. Note attributes are not part of the dump.
pub fn parse_graph_dump(text: &str) -> Result<(usize, [Vec<(u32, u32)>; N_RELATIONS], Vec<f64>)> {
    let mut lines = text.lines();
    let first = lines.next().ok_or_else(|| Error::Data("empty graph dump".into()))?;
    let n: usize = first
        .strip_prefix("nodes=")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Data(format!("bad first line {first:?}")))?;

    let mut edges: [Vec<(u32, u32)>; N_RELATIONS] = Default::default();
    let mut features = Vec::new();
    let mut current: Option<usize> = None;
    let mut in_features = false;
    for line in lines {
        if let Some(name) = line.strip_prefix("rel=") {
            let rel = RelationType::ALL
                .iter()
                .find(|r| r.name() == name)
                .ok_or_else(|| Error::Data(format!("unknown relation {name:?}")))?;
            current = Some(rel.index());
            continue;
        }
        if line == "features" {
            in_features = true;
            continue;
        }
        if line.is_empty() {
            continue;
        }
        if in_features {
            for field in line.split(',') {
                features.push(
                    field
                        .parse::<f64>()
                        .map_err(|_| Error::Data(format!("bad feature value {field:?}")))?,
                );
            }
        } else {
            let idx = current.ok_or_else(|| Error::Data("edge before rel header".into()))?;
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| Error::Data(format!("bad edge line {line:?}")))?;
            let src = a.parse().map_err(|_| Error::Data(format!("bad edge src {a:?}")))?;
            let dst = b.parse().map_err(|_| Error::Data(format!("bad edge dst {b:?}")))?;
            edges[idx].push((src, dst));
        }
    }
    if features.len() != n * NODE_FEATURE_DIM {
        return Err(Error::Data(format!(
            "expected {} feature values, got {}",
            n * NODE_FEATURE_DIM,
            features.len()
        )));
    }
    Ok((n, edges, features))
}
