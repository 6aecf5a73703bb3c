//! Prediction heads that sit on top of the encoder, and the model bundles
//! (encoder + head) the training loops operate on.

use crate::error::{Error, Result};
use crate::musgconv::{MusGConvConfig, MusGConvEncoder};
use crate::tensor::{init, Elem, ParamId, ParamSet, Tape, Tensor, Var};
use rand_chacha::ChaCha8Rng;

/// Two-layer MLP scoring an ordered node pair from the concatenated
/// embeddings of its endpoints. Produces one logit per pair.
#[derive(Debug, Clone, Copy)]
pub struct LinkHead {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl LinkHead {
    pub fn new<E: Elem>(
        hidden_dim: usize,
        params: &mut ParamSet<E>,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        LinkHead {
            w1: params.add(
                "link.w1",
                init::linear_weight(rng, 2 * hidden_dim, hidden_dim),
            ),
            b1: params.add("link.b1", init::zeros(1, hidden_dim)),
            w2: params.add("link.w2", init::linear_weight(rng, hidden_dim, 1)),
            b2: params.add("link.b2", init::zeros(1, 1)),
        }
    }

    /// Logits for the given pairs, shape (pairs, 1). `h` is the node
    /// embedding matrix; pair indices refer to its rows.
    pub fn logits<E: Elem>(
        &self,
        tape: &mut Tape<E>,
        params: &ParamSet<E>,
        h: Var,
        pairs: &[(u32, u32)],
    ) -> Result<Var> {
        let n = tape.value(h).rows() as u32;
        if let Some(&(u, v)) = pairs.iter().find(|&&(u, v)| u >= n || v >= n) {
            return Err(Error::Data(format!(
                "pair ({u}, {v}) out of range for {n} embeddings"
            )));
        }
        let srcs: Vec<u32> = pairs.iter().map(|&(u, _)| u).collect();
        let dsts: Vec<u32> = pairs.iter().map(|&(_, v)| v).collect();
        let hu = tape.index_rows(h, &srcs)?;
        let hv = tape.index_rows(h, &dsts)?;
        let cat = tape.concat(&[hu, hv])?;
        let w1 = tape.param(params, self.w1);
        let b1 = tape.param(params, self.b1);
        let w2 = tape.param(params, self.w2);
        let b2 = tape.param(params, self.b2);
        let a = tape.linear(cat, w1, Some(b1))?;
        let a = tape.relu(a);
        tape.linear(a, w2, Some(b2))
    }
}

/// Mean-pools node embeddings per piece and classifies the pooled vector
/// with a two-layer MLP. Produces one row of class logits per segment.
#[derive(Debug, Clone, Copy)]
pub struct ComposerHead {
    pub n_classes: usize,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl ComposerHead {
    pub fn new<E: Elem>(
        hidden_dim: usize,
        n_classes: usize,
        params: &mut ParamSet<E>,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        ComposerHead {
            n_classes,
            w1: params.add("cls.w1", init::linear_weight(rng, hidden_dim, hidden_dim)),
            b1: params.add("cls.b1", init::zeros(1, hidden_dim)),
            w2: params.add("cls.w2", init::linear_weight(rng, hidden_dim, n_classes)),
            b2: params.add("cls.b2", init::zeros(1, n_classes)),
        }
    }

    /// Class logits, shape (segments, n_classes). Each segment is a
    /// half-open row range of `h` holding one piece's nodes; pooling is the
    /// mean over those rows, expressed as a constant averaging matrix so
    /// gradients flow through a single matmul.
    pub fn logits<E: Elem>(
        &self,
        tape: &mut Tape<E>,
        params: &ParamSet<E>,
        h: Var,
        segments: &[std::ops::Range<usize>],
    ) -> Result<Var> {
        let n = tape.value(h).rows();
        let mut pool = Tensor::<E>::zeros(segments.len(), n);
        for (s, seg) in segments.iter().enumerate() {
            if seg.start >= seg.end || seg.end > n {
                return Err(Error::Data(format!(
                    "segment {}..{} invalid for {n} embeddings",
                    seg.start, seg.end
                )));
            }
            let inv = E::from_f64(1.0 / seg.len() as f64);
            for c in seg.clone() {
                pool.set(s, c, inv);
            }
        }
        let pool = tape.constant(pool);
        let pooled = tape.linear(pool, h, None)?;
        let w1 = tape.param(params, self.w1);
        let b1 = tape.param(params, self.b1);
        let w2 = tape.param(params, self.w2);
        let b2 = tape.param(params, self.b2);
        let a = tape.linear(pooled, w1, Some(b1))?;
        let a = tape.relu(a);
        tape.linear(a, w2, Some(b2))
    }
}

/// Encoder plus link head, registered in one parameter set.
#[derive(Debug, Clone)]
pub struct LinkModel {
    pub encoder: MusGConvEncoder,
    pub head: LinkHead,
}

impl LinkModel {
    pub fn new<E: Elem>(
        cfg: MusGConvConfig,
        params: &mut ParamSet<E>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let hidden = cfg.hidden_dim;
        let encoder = MusGConvEncoder::new(cfg, params, rng)?;
        let head = LinkHead::new(hidden, params, rng);
        Ok(LinkModel { encoder, head })
    }
}

/// Encoder plus classification head, registered in one parameter set.
#[derive(Debug, Clone)]
pub struct ComposerModel {
    pub encoder: MusGConvEncoder,
    pub head: ComposerHead,
}

impl ComposerModel {
    pub fn new<E: Elem>(
        cfg: MusGConvConfig,
        n_classes: usize,
        params: &mut ParamSet<E>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::Config(format!(
                "classification needs at least 2 classes, got {n_classes}"
            )));
        }
        let hidden = cfg.hidden_dim;
        let encoder = MusGConvEncoder::new(cfg, params, rng)?;
        let head = ComposerHead::new(hidden, n_classes, params, rng);
        Ok(ComposerModel { encoder, head })
    }
}
