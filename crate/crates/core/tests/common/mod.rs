//! Helpers shared by the integration suites: an independent relation oracle,
//! a random score generator, and a byte-level SMF builder.
//!
//! Each test target compiles its own copy, so helpers one target skips are
//! expected to be dead there.
#![allow(dead_code)]

use musgconv_core::note_model::{NoteEvent, Score};
use musgconv_core::score_graph::{GraphNote, RelationType, N_RELATIONS};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Quadratic predicate scan over all ordered note pairs, written without any
/// of the sweep-line machinery so the two routes can disagree.
///
/// For distinct notes u, v with off = onset + duration:
/// - onset: on(u) = on(v)
/// - during: on(u) < on(v) < off(u)
/// - follow: off(u) = on(v)
/// - silence: off(u) < on(v) and no note w has on(w) < on(v) and
///   off(w) > off(u), i.e. u ends exactly where the sounding coverage before
///   v's onset stops and nothing bridges the rest.
///
/// Inverse relations mirror the forward pair. Edge order is unspecified;
/// compare as sets.
pub fn naive_relations(notes: &[GraphNote]) -> [Vec<(u32, u32)>; N_RELATIONS] {
    let mut edges: [Vec<(u32, u32)>; N_RELATIONS] = Default::default();
    for (u, a) in notes.iter().enumerate() {
        for (v, b) in notes.iter().enumerate() {
            if u == v {
                continue;
            }
            let (ui, vi) = (u as u32, v as u32);
            if a.onset == b.onset {
                edges[RelationType::Onset.index()].push((ui, vi));
            }
            if a.onset < b.onset && b.onset < a.offset() {
                edges[RelationType::During.index()].push((ui, vi));
                edges[RelationType::DuringInv.index()].push((vi, ui));
            }
            if a.offset() == b.onset {
                edges[RelationType::Follow.index()].push((ui, vi));
                edges[RelationType::FollowInv.index()].push((vi, ui));
            }
            if a.offset() < b.onset
                && !notes
                    .iter()
                    .any(|w| w.onset < b.onset && w.offset() > a.offset())
            {
                edges[RelationType::Silence.index()].push((ui, vi));
                edges[RelationType::SilenceInv.index()].push((vi, ui));
            }
        }
    }
    edges
}

/// Sorted copies of the edge lists, for set comparison.
pub fn sorted_edges(edges: &[Vec<(u32, u32)>; N_RELATIONS]) -> [Vec<(u32, u32)>; N_RELATIONS] {
    std::array::from_fn(|r| {
        let mut e = edges[r].clone();
        e.sort_unstable();
        e
    })
}

/// Random score biased toward the relation edge cases: onset clusters, small
/// steps that land exactly on offsets, and jumps wide enough to leave rests.
/// Pitches stay in 30..=100 so transposing by an octave stays in MIDI range.
pub fn random_score(rng: &mut ChaCha8Rng, max_notes: usize, name: &str) -> Score {
    let n = rng.random_range(1..=max_notes);
    let mut notes = Vec::with_capacity(n);
    let mut cursor: i64 = rng.random_range(0..4);
    for id in 0..n {
        if id > 0 {
            cursor += match rng.random_range(0..10) {
                0..=2 => 0,
                3..=7 => rng.random_range(1..=6),
                _ => rng.random_range(8..=24),
            };
        }
        notes.push(NoteEvent {
            onset: cursor,
            duration: rng.random_range(1..=16),
            pitch: rng.random_range(30..=100),
            voice: rng.random_range(0..3),
            id,
        });
    }
    Score::new(4, notes, vec![], name, None).unwrap()
}

/// Assemble a Standard MIDI File from raw track payloads.
pub fn smf(format: u16, division: u16, tracks: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&format.to_be_bytes());
    out.extend_from_slice(&(tracks.len() as u16).to_be_bytes());
    out.extend_from_slice(&division.to_be_bytes());
    for t in tracks {
        out.extend_from_slice(b"MTrk");
        out.extend_from_slice(&(t.len() as u32).to_be_bytes());
        out.extend_from_slice(t);
    }
    out
}

/// End-of-track meta event with zero delta.
pub const EOT: [u8; 4] = [0x00, 0xff, 0x2f, 0x00];
