//! Edge-feature-aware message passing over the heterogeneous score graph.
//!
//! Each layer, for every relation, runs messages
//! `eta(u->v) = combine(W2 h_u, g(e_uv))` where `g` is a two-layer MLP with a
//! final layer norm over the edge features; node updates are
//! `W1 [h_v || sum of incoming eta]`, averaged across relations and passed
//! through a relu. First-layer edge features are interval distances (onset,
//! duration, pitch) l2-normalized per column, plus a learned pitch-class
//! interval embedding; deeper layers either recompute feature distances
//! ("plain") or forward the previous layer's edge MLP output.

mod encoder;
mod features;

pub use encoder::MusGConvEncoder;
pub use features::{manual_edge_features, EncoderInput, ManualEdgeFeatures};

use crate::error::{Error, Result};

pub const PITCH_CLASSES: usize = 12;
/// Onset, duration, pitch distances.
pub const N_DISTANCES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Recompute edge features at every layer as |h_v - h_u|.
    Plain,
    /// Reuse each layer's edge MLP output as the next layer's edge features.
    EdgeForwarding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeOp {
    /// eta = [W2 h || g(e)]
    Concat,
    /// eta = W2 h * g(e), elementwise
    Multiply,
}

#[derive(Debug, Clone)]
pub struct MusGConvConfig {
    pub in_dim: usize,
    pub hidden_dim: usize,
    pub n_layers: usize,
    pub variant: Variant,
    pub edge_op: EdgeOp,
    /// Include the pitch-class interval embedding in first-layer edge features.
    pub use_pcint: bool,
    /// Use interval distances as first-layer edge features; when off, the
    /// node-feature distance |x_v - x_u| is used instead.
    pub use_manual_edge_input: bool,
    /// Signed (destination minus source) distances instead of absolute ones.
    /// The pitch-class interval stays absolute either way.
    pub signed_distances: bool,
    pub pc_embed_dim: usize,
}

impl Default for MusGConvConfig {
    fn default() -> Self {
        MusGConvConfig {
            in_dim: crate::score_graph::NODE_FEATURE_DIM,
            hidden_dim: 32,
            n_layers: 2,
            variant: Variant::Plain,
            edge_op: EdgeOp::Concat,
            use_pcint: true,
            use_manual_edge_input: true,
            signed_distances: false,
            pc_embed_dim: 16,
        }
    }
}

impl MusGConvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.hidden_dim == 0 || self.n_layers == 0 {
            return Err(Error::Config(format!(
                "encoder dims must be positive (in={}, hidden={}, layers={})",
                self.in_dim, self.hidden_dim, self.n_layers
            )));
        }
        if self.uses_pcint_embedding() && self.pc_embed_dim == 0 {
            return Err(Error::Config(
                "pc_embed_dim must be positive when the pitch-class embedding is enabled".into(),
            ));
        }
        Ok(())
    }

    pub fn uses_pcint_embedding(&self) -> bool {
        self.use_manual_edge_input && self.use_pcint
    }

    /// Width of the edge features entering layer `layer`'s edge MLP.
    pub fn edge_input_dim(&self, layer: usize) -> usize {
        if layer > 0 {
            self.hidden_dim
        } else if !self.use_manual_edge_input {
            self.in_dim
        } else if self.use_pcint {
            N_DISTANCES + self.pc_embed_dim
        } else {
            N_DISTANCES
        }
    }

    /// Width of a per-edge message.
    pub fn message_dim(&self) -> usize {
        match self.edge_op {
            EdgeOp::Concat => 2 * self.hidden_dim,
            EdgeOp::Multiply => self.hidden_dim,
        }
    }

    /// Node feature width entering layer `layer`.
    pub fn node_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.in_dim
        } else {
            self.hidden_dim
        }
    }
}

/// Pitch-class interval between two pitches: absolute semitone distance
/// folded into an octave, so any octave multiple maps to zero.
pub fn pcint(src_pitch: u8, dst_pitch: u8) -> u32 {
    ((dst_pitch as i32 - src_pitch as i32).abs() % PITCH_CLASSES as i32) as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcint_folds_octaves() {
        assert_eq!(pcint(60, 67), 7); // perfect fifth
        assert_eq!(pcint(60, 79), 7); // octave plus fifth
        assert_eq!(pcint(60, 60), 0);
        assert_eq!(pcint(60, 72), 0); // octave up
        assert_eq!(pcint(60, 48), 0); // octave down
        assert_eq!(pcint(67, 60), 7); // direction does not matter
        for k in 0..5u8 {
            assert_eq!(pcint(30, 30 + 12 * k), 0);
        }
    }

    #[test]
    fn config_dims_follow_switches() {
        let cfg = MusGConvConfig::default();
        assert_eq!(cfg.edge_input_dim(0), 3 + 16);
        assert_eq!(cfg.edge_input_dim(1), 32);
        assert_eq!(cfg.message_dim(), 64);
        assert_eq!(cfg.node_input_dim(0), 20);
        assert_eq!(cfg.node_input_dim(1), 32);

        let no_pc = MusGConvConfig {
            use_pcint: false,
            ..MusGConvConfig::default()
        };
        assert_eq!(no_pc.edge_input_dim(0), 3);

        let no_manual = MusGConvConfig {
            use_manual_edge_input: false,
            ..MusGConvConfig::default()
        };
        assert_eq!(no_manual.edge_input_dim(0), 20);
        assert!(!no_manual.uses_pcint_embedding());

        let mul = MusGConvConfig {
            edge_op: EdgeOp::Multiply,
            ..MusGConvConfig::default()
        };
        assert_eq!(mul.message_dim(), 32);
    }

    #[test]
    fn invalid_configs_rejected() {
        let cfg = MusGConvConfig {
            hidden_dim: 0,
            ..MusGConvConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = MusGConvConfig {
            pc_embed_dim: 0,
            ..MusGConvConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = MusGConvConfig {
            pc_embed_dim: 0,
            use_pcint: false,
            ..MusGConvConfig::default()
        };
        assert!(cfg.validate().is_ok());
    }
}
