//! Score graphs and graph convolutions for symbolic music, with a
//! self-contained reverse-mode autodiff core.
//!
//! The pipeline: parse notes ([`note_model`]), build a heterogeneous graph
//! over them ([`score_graph`]), encode nodes with edge-feature-aware message
//! passing ([`musgconv`]), and train task heads ([`tasks`]) on sampled
//! subgraph batches ([`sampler`]). All numerics run on the tape in
//! [`tensor`], generic over f32/f64.

pub mod error;
pub mod musgconv;
pub mod note_model;
pub mod sampler;
pub mod score_graph;
pub mod tasks;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
pub use musgconv::{EdgeOp, MusGConvConfig, MusGConvEncoder, Variant};
pub use note_model::{NoteEvent, Score, TimeSignatureEvent};
pub use score_graph::{build_graph, GraphNote, RelationType, ScoreGraph};
pub use tasks::{ComposerModel, LinkModel, TrainConfig};
