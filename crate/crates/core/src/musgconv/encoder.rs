//! The multi-layer heterogeneous encoder.

use super::features::EncoderInput;
use super::{EdgeOp, MusGConvConfig, Variant, PITCH_CLASSES};
use crate::error::{Error, Result};
use crate::score_graph::{RelationType, N_RELATIONS};
use crate::tensor::{init, Elem, ParamId, ParamSet, Tape, Var};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
struct RelParams {
    /// Node update on [h || aggregated messages].
    w1: ParamId,
    /// Neighbor transform inside messages.
    w2: ParamId,
    /// Edge MLP: linear, relu, linear, layer norm.
    e_w1: ParamId,
    e_b1: ParamId,
    e_w2: ParamId,
    e_b2: ParamId,
    e_gain: ParamId,
    e_bias: ParamId,
}

#[derive(Debug, Clone)]
struct LayerParams {
    rel: [RelParams; N_RELATIONS],
}

/// Parameter handles plus the config; tensors live in the [`ParamSet`].
#[derive(Debug, Clone)]
pub struct MusGConvEncoder {
    pub cfg: MusGConvConfig,
    pcint_embed: Option<ParamId>,
    layers: Vec<LayerParams>,
}

impl MusGConvEncoder {
    /// Registers all encoder parameters. Registration order (embedding first,
    /// then layers in order, relations in their fixed order) pins the RNG
    /// stream and the checkpoint layout.
    pub fn new<E: Elem>(
        cfg: MusGConvConfig,
        params: &mut ParamSet<E>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let pcint_embed = if cfg.uses_pcint_embedding() {
            Some(params.add(
                "enc.pcint_embed",
                init::embedding(rng, PITCH_CLASSES, cfg.pc_embed_dim),
            ))
        } else {
            None
        };
        let hidden = cfg.hidden_dim;
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            let node_in = cfg.node_input_dim(l);
            let edge_in = cfg.edge_input_dim(l);
            let rel = std::array::from_fn(|r| {
                let name = |part: &str| {
                    format!("enc.l{l}.{}.{part}", RelationType::ALL[r].name())
                };
                RelParams {
                    w1: params.add(
                        name("w1"),
                        init::linear_weight(rng, node_in + cfg.message_dim(), hidden),
                    ),
                    w2: params.add(name("w2"), init::linear_weight(rng, node_in, hidden)),
                    e_w1: params.add(name("edge.w1"), init::linear_weight(rng, edge_in, hidden)),
                    e_b1: params.add(name("edge.b1"), init::zeros(1, hidden)),
                    e_w2: params.add(name("edge.w2"), init::linear_weight(rng, hidden, hidden)),
                    e_b2: params.add(name("edge.b2"), init::zeros(1, hidden)),
                    e_gain: params.add(name("edge.ln_gain"), init::ones(1, hidden)),
                    e_bias: params.add(name("edge.ln_bias"), init::zeros(1, hidden)),
                }
            });
            layers.push(LayerParams { rel });
        }
        Ok(MusGConvEncoder {
            cfg,
            pcint_embed,
            layers,
        })
    }

    pub fn n_params(&self) -> usize {
        self.layers.len() * N_RELATIONS * 8 + usize::from(self.pcint_embed.is_some())
    }

    /// Edge MLP g(e): linear -> relu -> linear -> layer norm.
    fn edge_mlp<E: Elem>(
        &self,
        tape: &mut Tape<E>,
        params: &ParamSet<E>,
        rp: &RelParams,
        e: Var,
    ) -> Result<Var> {
        let w1 = tape.param(params, rp.e_w1);
        let b1 = tape.param(params, rp.e_b1);
        let w2 = tape.param(params, rp.e_w2);
        let b2 = tape.param(params, rp.e_b2);
        let gain = tape.param(params, rp.e_gain);
        let bias = tape.param(params, rp.e_bias);
        let a = tape.linear(e, w1, Some(b1))?;
        let a = tape.relu(a);
        let a = tape.linear(a, w2, Some(b2))?;
        tape.layer_norm(a, gain, bias)
    }

    /// Node embeddings, (nodes, hidden_dim).
    pub fn encode<E: Elem>(
        &self,
        tape: &mut Tape<E>,
        params: &ParamSet<E>,
        input: &EncoderInput<E>,
    ) -> Result<Var> {
        let cfg = &self.cfg;
        if input.x.cols() != cfg.in_dim {
            return Err(Error::shape(
                "encode",
                input.x.shape_string(),
                format!("?x{}", cfg.in_dim),
            ));
        }
        if input.manual.is_some() != cfg.use_manual_edge_input {
            return Err(Error::Config(
                "encoder input manual-feature presence does not match config".into(),
            ));
        }
        let n = input.x.rows();
        let src_idx: [Vec<u32>; N_RELATIONS] =
            std::array::from_fn(|r| input.edges[r].iter().map(|&(s, _)| s).collect());
        let dst_idx: [Vec<u32>; N_RELATIONS] =
            std::array::from_fn(|r| input.edges[r].iter().map(|&(_, d)| d).collect());

        let mut h = tape.constant(input.x.clone());

        // First-layer edge features.
        let mut edge_feats: Vec<Var> = Vec::with_capacity(N_RELATIONS);
        if let Some(manual) = &input.manual {
            let embed = self.pcint_embed.map(|id| tape.param(params, id));
            for r in 0..N_RELATIONS {
                let dists = tape.constant(manual.dists[r].clone());
                let e = match embed {
                    Some(embed) => {
                        for (k, &pc) in manual.pcint[r].iter().enumerate() {
                            if pc as usize >= PITCH_CLASSES {
                                return Err(Error::Data(format!(
                                    "pitch-class interval {pc} out of range at edge {k}"
                                )));
                            }
                        }
                        let pc_rows = tape.index_rows(embed, &manual.pcint[r])?;
                        tape.concat(&[dists, pc_rows])?
                    }
                    None => dists,
                };
                edge_feats.push(e);
            }
        } else {
            for r in 0..N_RELATIONS {
                let hs = tape.index_rows(h, &src_idx[r])?;
                let hd = tape.index_rows(h, &dst_idx[r])?;
                let diff = tape.sub(hd, hs)?;
                edge_feats.push(tape.abs(diff));
            }
        }

        for (l, layer) in self.layers.iter().enumerate() {
            let mut rel_outs = Vec::with_capacity(N_RELATIONS);
            let mut forwarded = Vec::with_capacity(N_RELATIONS);
            for r in 0..N_RELATIONS {
                let rp = &layer.rel[r];
                let ge = self.edge_mlp(tape, params, rp, edge_feats[r])?;
                let w2 = tape.param(params, rp.w2);
                let hs = tape.index_rows(h, &src_idx[r])?;
                let w2h = tape.linear(hs, w2, None)?;
                let eta = match cfg.edge_op {
                    EdgeOp::Concat => tape.concat(&[w2h, ge])?,
                    EdgeOp::Multiply => tape.mul(w2h, ge)?,
                };
                let agg = tape.scatter_sum(eta, &dst_idx[r], n)?;
                let h_and_agg = tape.concat(&[h, agg])?;
                let w1 = tape.param(params, rp.w1);
                rel_outs.push(tape.linear(h_and_agg, w1, None)?);
                forwarded.push(ge);
            }
            let mean = tape.mean_over(&rel_outs)?;
            h = tape.relu(mean);

            if l + 1 < self.layers.len() {
                edge_feats = match cfg.variant {
                    Variant::EdgeForwarding => forwarded,
                    Variant::Plain => {
                        let mut next = Vec::with_capacity(N_RELATIONS);
                        for r in 0..N_RELATIONS {
                            let hs = tape.index_rows(h, &src_idx[r])?;
                            let hd = tape.index_rows(h, &dst_idx[r])?;
                            let diff = tape.sub(hd, hs)?;
                            next.push(tape.abs(diff));
                        }
                        next
                    }
                };
            }
        }
        Ok(h)
    }
}
