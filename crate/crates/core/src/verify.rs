//! Self-verification: checks the backward pass of every differentiable
//! building block — individual ops, the edge MLP, both prediction heads, and
//! the full encoder in all four variant/edge-op combinations — against
//! central finite differences.
//!
//! Meaningful only in double precision: a step small enough to stay on one
//! side of every relu kink is already below single-precision resolution for
//! the deeper cases. Run the suite with `E = f64`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::musgconv::{EdgeOp, EncoderInput, MusGConvConfig, Variant};
use crate::note_model::{NoteEvent, Score};
use crate::score_graph::{build_graph, ScoreGraph};
use crate::tasks::{ComposerHead, LinkHead};
use crate::tensor::{
    grad_check, Elem, GradCheckConfig, GradCheckReport, ParamSet, Tape, Tensor, Var,
};

/// One named gradient check.
#[derive(Debug, Clone)]
pub struct CaseReport {
    pub name: &'static str,
    pub report: GradCheckReport,
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub cases: Vec<CaseReport>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.cases.iter().all(|c| c.report.passed())
    }

    pub fn max_rel_err(&self) -> f64 {
        self.cases
            .iter()
            .map(|c| c.report.max_rel_err)
            .fold(0.0, f64::max)
    }

    /// `name: pass/FAIL (max rel err ...)` lines, one per case.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.cases {
            use std::fmt::Write;
            writeln!(
                out,
                "{}: {} (max rel err {:.3e}, tolerance {:.1e})",
                c.name,
                if c.report.passed() { "pass" } else { "FAIL" },
                c.report.max_rel_err,
                c.report.tolerance,
            )
            .unwrap();
        }
        out
    }
}

/// Finite-difference settings that suit the element type: f32 needs a larger
/// step and a looser tolerance because the loss itself carries ~1e-7 relative
/// rounding noise.
pub fn default_config<E: Elem>() -> GradCheckConfig {
    if E::NAME == "f32" {
        GradCheckConfig {
            eps: 1e-2,
            tolerance: 2e-2,
            ..GradCheckConfig::default()
        }
    } else {
        GradCheckConfig::default()
    }
}

/// Deterministic values in roughly [-0.6, 0.6], bounded away from zero so
/// relu/abs kinks stay clear of the finite-difference step.
fn wave(k: usize, i: usize) -> f64 {
    let v = ((k * 37 + i * 13 + 5) as f64 * 0.73).sin() * 0.6;
    if v.abs() < 0.05 {
        v + 0.05f64.copysign(if v == 0.0 { 1.0 } else { v })
    } else {
        v
    }
}

fn wave_tensor<E: Elem>(k: usize, rows: usize, cols: usize) -> Tensor<E> {
    let data: Vec<f64> = (0..rows * cols).map(|i| wave(k, i)).collect();
    Tensor::from_f64s(rows, cols, &data).unwrap()
}

/// Weighted sum with a fixed mask; a plain sum would hide gradient errors
/// that cancel across elements (softmax rows, layer-norm rows).
fn masked_sum<E: Elem>(tape: &mut Tape<E>, x: Var, mask_key: usize) -> Result<Var> {
    let (rows, cols) = tape.value(x).shape();
    let mask = tape.constant(wave_tensor(mask_key, rows, cols));
    let prod = tape.mul(x, mask)?;
    Ok(tape.sum(prod))
}

fn run_case<E, F>(
    cases: &mut Vec<CaseReport>,
    name: &'static str,
    params: &mut ParamSet<E>,
    f: F,
    cfg: &GradCheckConfig,
) -> Result<()>
where
    E: Elem,
    F: Fn(&ParamSet<E>) -> Result<(Tape<E>, Var)>,
{
    let report = grad_check(params, &f, cfg)?;
    cases.push(CaseReport { name, report });
    Ok(())
}

/// Eight-note two-voice fixture with every relation type present.
fn fixture_graph() -> ScoreGraph {
    let rows: [(i64, i64, u8); 8] = [
        (0, 4, 60),
        (0, 4, 67),
        (0, 8, 43),
        (4, 4, 62),
        (4, 4, 65),
        (8, 2, 64),
        (12, 4, 59),
        (12, 4, 55),
    ];
    let notes = rows
        .iter()
        .enumerate()
        .map(|(i, &(onset, duration, pitch))| NoteEvent {
            onset,
            duration,
            pitch,
            voice: (i % 2) as u32,
            id: 0,
        })
        .collect();
    let score = Score::new(4, notes, vec![], "gradcheck-fixture", None).unwrap();
    build_graph(&score)
}

fn encoder_cfg(variant: Variant, edge_op: EdgeOp) -> MusGConvConfig {
    MusGConvConfig {
        in_dim: crate::score_graph::NODE_FEATURE_DIM,
        hidden_dim: 6,
        n_layers: 2,
        variant,
        edge_op,
        pc_embed_dim: 4,
        ..MusGConvConfig::default()
    }
}

/// Runs every gradient check and collects the per-case reports. Errors mean
/// a case could not even be built; gradient mismatches show up as failed
/// cases in the returned report.
pub fn gradcheck_suite<E: Elem>(cfg: &GradCheckConfig) -> Result<SuiteReport> {
    let mut cases = Vec::new();

    // Linear layer with bias.
    {
        let mut params = ParamSet::<E>::new();
        let w = params.add("w", wave_tensor(1, 4, 3));
        let b = params.add("b", wave_tensor(2, 1, 3));
        let f = move |p: &ParamSet<E>| {
            let mut tape = Tape::new();
            let x = tape.constant(wave_tensor(3, 5, 4));
            let (wv, bv) = (tape.param(p, w), tape.param(p, b));
            let y = tape.linear(x, wv, Some(bv))?;
            let loss = masked_sum(&mut tape, y, 4)?;
            Ok((tape, loss))
        };
        run_case(&mut cases, "linear_bias", &mut params, f, cfg)?;
    }

    // Unary activations stacked on a linear map.
    {
        let mut params = ParamSet::<E>::new();
        let w = params.add("w", wave_tensor(5, 3, 4));
        let f = move |p: &ParamSet<E>| {
            let mut tape = Tape::new();
            let x = tape.constant(wave_tensor(6, 4, 3));
            let wv = tape.param(p, w);
            let y = tape.linear(x, wv, None)?;
            let r = tape.relu(y);
            let s = tape.sigmoid(r);
            let a = tape.abs(y);
            let both = tape.add(s, a)?;
            let loss = masked_sum(&mut tape, both, 7)?;
            Ok((tape, loss))
        };
        run_case(&mut cases, "relu_sigmoid_abs", &mut params, f, cfg)?;
    }

    // Elementwise add/sub/mul and scalar scaling.
    {
        let mut params = ParamSet::<E>::new();
        let a = params.add("a", wave_tensor(8, 3, 3));
        let b = params.add("b", wave_tensor(9, 3, 3));
        let f = move |p: &ParamSet<E>| {
            let mut tape = Tape::new();
            let (av, bv) = (tape.param(p, a), tape.param(p, b));
            let prod = tape.mul(av, bv)?;
            let sum = tape.add(prod, av)?;
            let diff = tape.sub(sum, bv)?;
            let scaled = tape.scale(diff, 0.7);
            let loss = masked_sum(&mut tape, scaled, 10)?;
            Ok((tape, loss))
        };
        run_case(&mut cases, "elementwise_ops", &mut params, f, cfg)?;
    }

    // Row gather and scatter-sum, with repeated and absent indices.
    {
        let mut params = ParamSet::<E>::new();
        let x = params.add("x", wave_tensor(11, 5, 3));
        let f = move |p: &ParamSet<E>| {
            let mut tape = Tape::new();
            let xv = tape.param(p, x);
            let gathered = tape.index_rows(xv, &[4, 0, 2, 2, 1, 0])?;
            let spread = tape.scatter_sum(gathered, &[1, 3, 1, 0, 3, 3], 4)?;
            let loss = masked_sum(&mut tape, spread, 12)?;
            Ok((tape, loss))
        };
        run_case(&mut cases, "gather_scatter", &mut params, f, cfg)?;
    }

    // Column concat, elementwise mean of branches, row mean.
    {
        let mut params = ParamSet::<E>::new();
        let a = params.add("a", wave_tensor(13, 4, 2));
        let b = params.add("b", wave_tensor(14, 4, 3));
        let w = params.add("w", wave_tensor(15, 5, 5));
        let f = move |p: &ParamSet<E>| {
            let mut tape = Tape::new();
            let (av, bv, wv) = (tape.param(p, a), tape.param(p, b), tape.param(p, w));
            let cat = tape.concat(&[av, bv])?;
            let y1 = tape.linear(cat, wv, None)?;
            let mean = tape.mean_over(&[y1, cat])?;
            let pooled = tape.mean_rows(mean)?;
            let loss = masked_sum(&mut tape, pooled, 16)?;
            Ok((tape, loss))
        };
        run_case(&mut cases, "concat_mean", &mut params, f, cfg)?;
    }

    // Layer norm with learned gain and bias.
    {
        let mut params = ParamSet::<E>::new();
        let x = params.add("x", wave_tensor(17, 3, 6));
        let g = params.add("g", wave_tensor(18, 1, 6));
        let b = params.add("b", wave_tensor(19, 1, 6));
        let f = move |p: &ParamSet<E>| {
            let mut tape = Tape::new();
            let (xv, gv, bv) = (tape.param(p, x), tape.param(p, g), tape.param(p, b));
            let y = tape.layer_norm(xv, gv, bv)?;
            let loss = masked_sum(&mut tape, y, 20)?;
            Ok((tape, loss))
        };
        run_case(&mut cases, "layer_norm", &mut params, f, cfg)?;
    }

    // Softmax rows weighted by a mask (a bare sum is constant 1 per row).
    {
        let mut params = ParamSet::<E>::new();
        let w = params.add("w", wave_tensor(21, 4, 3));
        let f = move |p: &ParamSet<E>| {
            let mut tape = Tape::new();
            let x = tape.constant(wave_tensor(22, 3, 4));
            let wv = tape.param(p, w);
            let z = tape.linear(x, wv, None)?;
            let sm = tape.softmax(z);
            let loss = masked_sum(&mut tape, sm, 23)?;
            Ok((tape, loss))
        };
        run_case(&mut cases, "softmax", &mut params, f, cfg)?;
    }

    // Binary cross-entropy from logits.
    {
        let mut params = ParamSet::<E>::new();
        let w = params.add("w", wave_tensor(24, 3, 1));
        let f = move |p: &ParamSet<E>| {
            let mut tape = Tape::new();
            let x = tape.constant(wave_tensor(25, 6, 3));
            let wv = tape.param(p, w);
            let z = tape.linear(x, wv, None)?;
            let targets = tape.constant(Tensor::from_f64s(6, 1, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0])?);
            let loss = tape.bce_with_logits(z, targets)?;
            Ok((tape, loss))
        };
        run_case(&mut cases, "bce_loss", &mut params, f, cfg)?;
    }

    // Multi-class cross-entropy.
    {
        let mut params = ParamSet::<E>::new();
        let w = params.add("w", wave_tensor(26, 5, 3));
        let f = move |p: &ParamSet<E>| {
            let mut tape = Tape::new();
            let x = tape.constant(wave_tensor(27, 4, 5));
            let wv = tape.param(p, w);
            let z = tape.linear(x, wv, None)?;
            let loss = tape.cross_entropy(z, &[0, 2, 1, 1])?;
            Ok((tape, loss))
        };
        run_case(&mut cases, "cross_entropy_loss", &mut params, f, cfg)?;
    }

    // Edge MLP shape: linear -> relu -> linear -> layer norm.
    {
        let mut params = ParamSet::<E>::new();
        let w1 = params.add("w1", wave_tensor(28, 4, 5));
        let b1 = params.add("b1", wave_tensor(29, 1, 5));
        let w2 = params.add("w2", wave_tensor(30, 5, 5));
        let b2 = params.add("b2", wave_tensor(31, 1, 5));
        let g = params.add("g", wave_tensor(32, 1, 5));
        let bn = params.add("bn", wave_tensor(33, 1, 5));
        let f = move |p: &ParamSet<E>| {
            let mut tape = Tape::new();
            let x = tape.constant(wave_tensor(34, 6, 4));
            let a = {
                let (wv, bv) = (tape.param(p, w1), tape.param(p, b1));
                let y = tape.linear(x, wv, Some(bv))?;
                tape.relu(y)
            };
            let z = {
                let (wv, bv) = (tape.param(p, w2), tape.param(p, b2));
                tape.linear(a, wv, Some(bv))?
            };
            let (gv, bv) = (tape.param(p, g), tape.param(p, bn));
            let y = tape.layer_norm(z, gv, bv)?;
            let loss = masked_sum(&mut tape, y, 35)?;
            Ok((tape, loss))
        };
        run_case(&mut cases, "edge_mlp", &mut params, f, cfg)?;
    }

    // Pair-scoring head end to end, including the embedding matrix.
    {
        let mut params = ParamSet::<E>::new();
        let h = params.add("h", wave_tensor(36, 6, 4));
        let mut rng = ChaCha8Rng::seed_from_u64(901);
        let head = LinkHead::new(4, &mut params, &mut rng);
        let pairs = vec![(0u32, 3u32), (2, 2), (5, 1), (4, 0)];
        let f = move |p: &ParamSet<E>| {
            let mut tape = Tape::new();
            let hv = tape.param(p, h);
            let z = head.logits(&mut tape, p, hv, &pairs)?;
            let targets = tape.constant(Tensor::from_f64s(4, 1, &[1.0, 0.0, 1.0, 0.0])?);
            let loss = tape.bce_with_logits(z, targets)?;
            Ok((tape, loss))
        };
        run_case(&mut cases, "link_head", &mut params, f, cfg)?;
    }

    // Classification head with mean pooling over two segments.
    {
        let mut params = ParamSet::<E>::new();
        let h = params.add("h", wave_tensor(37, 7, 4));
        let mut rng = ChaCha8Rng::seed_from_u64(902);
        let head = ComposerHead::new(4, 3, &mut params, &mut rng);
        let f = move |p: &ParamSet<E>| {
            let mut tape = Tape::new();
            let hv = tape.param(p, h);
            let z = head.logits(&mut tape, p, hv, &[0..3, 3..7])?;
            let loss = tape.cross_entropy(z, &[2, 0])?;
            Ok((tape, loss))
        };
        run_case(&mut cases, "composer_head", &mut params, f, cfg)?;
    }

    // The full encoder in all four variant / edge-op combinations.
    let graph = fixture_graph();
    let combos: [(&'static str, Variant, EdgeOp); 4] = [
        ("encoder_plain_concat", Variant::Plain, EdgeOp::Concat),
        ("encoder_plain_multiply", Variant::Plain, EdgeOp::Multiply),
        (
            "encoder_forwarding_concat",
            Variant::EdgeForwarding,
            EdgeOp::Concat,
        ),
        (
            "encoder_forwarding_multiply",
            Variant::EdgeForwarding,
            EdgeOp::Multiply,
        ),
    ];
    for (name, variant, edge_op) in combos {
        let enc_cfg = encoder_cfg(variant, edge_op);
        let mut params = ParamSet::<E>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(903);
        let encoder = crate::musgconv::MusGConvEncoder::new(enc_cfg.clone(), &mut params, &mut rng)?;
        // Zero-initialized biases sit exactly on the relu kink; nudge every
        // parameter off zero so finite differences stay two-sided.
        for idx in 0..params.len() {
            let id = crate::tensor::ParamId(idx);
            for (i, v) in params.get_mut(id).data_mut().iter_mut().enumerate() {
                if v.as_f64().abs() < 0.05 {
                    *v += E::from_f64(wave(idx, i) * 0.2);
                }
            }
        }
        let input = EncoderInput::<E>::from_graph(&graph, &enc_cfg)?;
        let f = move |p: &ParamSet<E>| {
            let mut tape = Tape::new();
            let h = encoder.encode(&mut tape, p, &input)?;
            let loss = masked_sum(&mut tape, h, 38)?;
            Ok((tape, loss))
        };
        run_case(&mut cases, name, &mut params, f, cfg)?;
    }

    Ok(SuiteReport { cases })
}
