//! Implementations behind each subcommand. Numeric work is generic over the
//! element type so the same code runs in single or double precision.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use musgconv_core::note_model::{parse_midi, parse_note_table, synth_dataset, write_note_table};
use musgconv_core::score_graph::dump_graph;
use musgconv_core::tasks::{
    evaluate_composer, evaluate_links, train_composer, train_link_prediction,
};
use musgconv_core::tensor::{load_checkpoint, save_checkpoint, Elem, ParamSet};
use musgconv_core::{
    build_graph, verify, ComposerModel, Error, LinkModel, Result, Score, ScoreGraph,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::Settings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Task {
    /// Predict which candidate note pairs are consecutive in a voice.
    Link,
    /// Classify whole pieces by style.
    Composer,
}

fn source_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Reads either a standard MIDI file (sniffed by header) or a note table.
fn read_score(path: &Path) -> Result<Score> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(b"MThd") {
        let (score, warnings) = parse_midi(&bytes, &source_name(path))?;
        for (count, what) in [
            (warnings.unmatched_note_ons, "unmatched note-ons closed at track end"),
            (warnings.clamped_zero_length, "zero-length notes clamped to 1 tick"),
            (warnings.duplicate_note_ons, "duplicate note-ons dropped"),
            (warnings.orphan_note_offs, "orphan note-offs ignored"),
        ] {
            if count > 0 {
                eprintln!("warning: {}: {count} {what}", path.display());
            }
        }
        Ok(score)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| {
            Error::Data(format!(
                "{}: neither a MIDI file nor UTF-8 note-table text",
                path.display()
            ))
        })?;
        parse_note_table(&text, &source_name(path))
    }
}

fn write_output(output: Option<&Path>, content: &str) -> Result<()> {
    match output {
        Some(path) => fs::write(path, content)?,
        None => print!("{content}"),
    }
    Ok(())
}

pub fn ingest(input: &Path, output: Option<&Path>) -> Result<()> {
    let score = read_score(input)?;
    write_output(output, &write_note_table(&score))
}

pub fn build_graph_cmd(input: &Path, output: Option<&Path>) -> Result<()> {
    let score = read_score(input)?;
    let graph = build_graph(&score);
    write_output(output, &dump_graph(&graph))
}

pub fn synth(settings: &Settings, output: &Path) -> Result<()> {
    let spec = settings.synth_spec()?;
    let scores = synth_dataset(&spec)?;
    fs::create_dir_all(output)?;
    for score in &scores {
        let path = output.join(format!("{}.notes", score.source_name));
        fs::write(path, write_note_table(score))?;
    }
    eprintln!("wrote {} pieces to {}", scores.len(), output.display());
    Ok(())
}

/// All `.notes` files of a directory, sorted by file name, as score graphs.
fn load_dataset(dir: &Path) -> Result<Vec<ScoreGraph>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "notes"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Data(format!(
            "no .notes files in {}",
            dir.display()
        )));
    }
    paths
        .iter()
        .map(|p| Ok(build_graph(&read_score(p)?)))
        .collect()
}

pub fn train<E: Elem>(
    settings: &Settings,
    task: Task,
    train_dir: &Path,
    val_dir: Option<&Path>,
    checkpoint: Option<&Path>,
    metrics: Option<&Path>,
) -> Result<()> {
    let enc_cfg = settings.encoder_config()?;
    let tcfg = settings.train_config()?;
    let train_graphs = load_dataset(train_dir)?;
    let val_graphs = match val_dir {
        Some(d) => load_dataset(d)?,
        None => Vec::new(),
    };

    let (log, params, summary) = match task {
        Task::Link => {
            let out = train_link_prediction::<E>(&train_graphs, &val_graphs, &enc_cfg, &tcfg)?;
            let summary = format!(
                "task=link precision={} best_epoch={} best_val_f1={:.6}",
                E::NAME,
                out.best_epoch,
                out.best_val_f1
            );
            (out.metrics_log, out.params, summary)
        }
        Task::Composer => {
            let n_classes = settings.n_classes()?;
            let out = train_composer::<E>(&train_graphs, &val_graphs, &enc_cfg, &tcfg, n_classes)?;
            let summary = format!(
                "task=composer precision={} best_epoch={} best_val_accuracy={:.6}",
                E::NAME,
                out.best_epoch,
                out.best_val_accuracy
            );
            (out.metrics_log, out.params, summary)
        }
    };

    print!("{log}");
    if let Some(path) = metrics {
        fs::write(path, &log)?;
    }
    if let Some(path) = checkpoint {
        save_checkpoint(&params, path)?;
    }
    eprintln!("{summary}");
    Ok(())
}

pub fn evaluate<E: Elem>(
    settings: &Settings,
    task: Task,
    data_dir: &Path,
    checkpoint: &Path,
    predictions: Option<&Path>,
) -> Result<()> {
    let enc_cfg = settings.encoder_config()?;
    let tcfg = settings.train_config()?;
    let graphs = load_dataset(data_dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut params = ParamSet::<E>::new();

    match task {
        Task::Link => {
            let model = LinkModel::new(enc_cfg, &mut params, &mut rng)?;
            load_checkpoint(&mut params, checkpoint)?;
            let eval = evaluate_links(&model, &params, &graphs, &tcfg)?;
            println!(
                "pairs={} loss={:.6} precision={:.6} recall={:.6} f1={:.6}",
                eval.predictions.len(),
                eval.loss,
                eval.metrics.precision,
                eval.metrics.recall,
                eval.metrics.f1
            );
            if let Some(path) = predictions {
                let mut text = String::from("src,dst,prob,label\n");
                for row in &eval.predictions {
                    writeln!(
                        text,
                        "{},{},{:.6},{}",
                        row.src, row.dst, row.prob, row.label as u8
                    )
                    .unwrap();
                }
                fs::write(path, text)?;
            }
        }
        Task::Composer => {
            let n_classes = settings.n_classes()?;
            let model = ComposerModel::new(enc_cfg, n_classes, &mut params, &mut rng)?;
            load_checkpoint(&mut params, checkpoint)?;
            let eval = evaluate_composer(&model, &params, &graphs)?;
            println!(
                "pieces={} loss={:.6} accuracy={:.6} majority_baseline={:.6}",
                eval.predictions.len(),
                eval.loss,
                eval.accuracy,
                eval.majority_accuracy
            );
            if let Some(path) = predictions {
                let mut text = String::from("piece,predicted,label\n");
                for (piece, pred, label) in &eval.predictions {
                    writeln!(text, "{piece},{pred},{label}").unwrap();
                }
                fs::write(path, text)?;
            }
        }
    }
    Ok(())
}

/// Gradient verification always runs in double precision: finite differences
/// are meaningless at single-precision resolution.
pub fn gradcheck() -> Result<()> {
    let cfg = verify::default_config::<f64>();
    let suite = verify::gradcheck_suite::<f64>(&cfg)?;
    print!("{}", suite.render());
    if suite.passed() {
        println!("all {} gradient checks passed", suite.cases.len());
        Ok(())
    } else {
        Err(Error::Numeric(format!(
            "gradient check failed: max rel err {:.3e} exceeds tolerance {:.1e}",
            suite.max_rel_err(),
            cfg.tolerance
        )))
    }
}
