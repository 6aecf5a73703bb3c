//! End-to-end tests of the `musgconv` binary: every subcommand, the exit-code
//! contract, and the settings layering.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_musgconv"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin()
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SMALL_MODEL: &[&str] = &[
    "--set",
    "hidden_dim=8",
    "--set",
    "pc_embed_dim=4",
    "--set",
    "k_nodes=8",
    "--set",
    "batch_subgraphs=2",
    "--set",
    "epochs=2",
];

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(run(&["--version"], dir.path()).status.code(), Some(0));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(
        run(&["train", "--task", "link"], dir.path()).status.code(),
        Some(1),
        "missing required --train-dir"
    );
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["ingest", "no-such-file.notes"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_table_is_a_data_error_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.notes"), "divisions=4\n0,0,60,0\n").unwrap();
    let out = run(&["ingest", "bad.notes"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 2"));
}

#[test]
fn unknown_setting_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["--set", "bogus=1", "gradcheck"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bogus"));
}

#[test]
fn ingest_note_table_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let text = "divisions=4\nclass=1\ntimesig=0:4/4\n0,4,60,0\n4,4,64,1\n";
    fs::write(dir.path().join("p.notes"), text).unwrap();
    let out = run(&["ingest", "p.notes"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), text);
}

#[test]
fn ingest_midi_produces_the_note_table() {
    let dir = tempfile::tempdir().unwrap();
    // Minimal single-track file: one quarter note, C4 at tick 0.
    let mut track = vec![0x00, 0x90, 60, 100];
    track.extend([0x83, 0x60, 0x80, 60, 0]); // delta 480
    track.extend([0x00, 0xff, 0x2f, 0x00]); // end of track
    let mut bytes = Vec::new();
    bytes.extend_from_slice(b"MThd");
    bytes.extend_from_slice(&6u32.to_be_bytes());
    bytes.extend_from_slice(&0u16.to_be_bytes());
    bytes.extend_from_slice(&1u16.to_be_bytes());
    bytes.extend_from_slice(&480u16.to_be_bytes());
    bytes.extend_from_slice(b"MTrk");
    bytes.extend_from_slice(&(track.len() as u32).to_be_bytes());
    bytes.extend_from_slice(&track);
    fs::write(dir.path().join("p.mid"), &bytes).unwrap();

    let out = run(&["ingest", "p.mid", "-o", "p.notes"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let table = fs::read_to_string(dir.path().join("p.notes")).unwrap();
    assert_eq!(table, "divisions=480\ntimesig=0:4/4\n0,480,60,0\n");
}

#[test]
fn build_graph_dumps_every_relation() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("p.notes"),
        "divisions=4\n0,4,60,0\n0,4,67,1\n4,4,62,0\n",
    )
    .unwrap();
    let out = run(&["build-graph", "p.notes"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.starts_with("nodes=3\n"));
    for rel in [
        "onset", "during", "follow", "silence", "during_inv", "follow_inv", "silence_inv",
    ] {
        assert!(text.contains(&format!("rel={rel}\n")), "missing {rel}");
    }
    assert!(text.contains("features"));
}

#[test]
fn synth_is_deterministic_and_writes_labeled_tables() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "synth", "-o", "d1", "--set", "pieces=4", "--set", "notes_per_voice=6",
    ];
    assert_eq!(run(&args, dir.path()).status.code(), Some(0));
    let args2 = [
        "synth", "-o", "d2", "--set", "pieces=4", "--set", "notes_per_voice=6",
    ];
    assert_eq!(run(&args2, dir.path()).status.code(), Some(0));

    let names: Vec<String> = {
        let mut v: Vec<String> = fs::read_dir(dir.path().join("d1"))
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        v.sort();
        v
    };
    assert_eq!(
        names,
        ["synth-0000.notes", "synth-0001.notes", "synth-0002.notes", "synth-0003.notes"]
    );
    for name in &names {
        let a = fs::read(dir.path().join("d1").join(name)).unwrap();
        let b = fs::read(dir.path().join("d2").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
        assert!(String::from_utf8(a).unwrap().contains("class="));
    }
}

#[test]
fn settings_layering_echoes_effective_values() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg"), "epochs=7\nhidden_dim=16\n").unwrap();
    fs::write(dir.path().join("p.notes"), "divisions=4\n0,4,60,0\n").unwrap();
    let out = run(
        &[
            "--config", "cfg", "--set", "epochs=9", "--seed", "41", "ingest", "p.notes",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let err = stderr(&out);
    assert!(err.contains("settings: epochs=9"), "{err}");
    assert!(err.contains("settings: hidden_dim=16"));
    assert!(err.contains("settings: seed=41"));
}

#[test]
fn train_then_evaluate_link_task() {
    let dir = tempfile::tempdir().unwrap();
    let synth = ["synth", "-o", "data", "--set", "pieces=4", "--set", "notes_per_voice=8"];
    assert_eq!(run(&synth, dir.path()).status.code(), Some(0));

    let mut args = vec![
        "train", "--task", "link", "--train-dir", "data", "--val-dir", "data",
        "--checkpoint", "ck.bin", "--metrics", "m.csv",
    ];
    args.extend_from_slice(SMALL_MODEL);
    let out = run(&args, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let metrics = fs::read_to_string(dir.path().join("m.csv")).unwrap();
    assert_eq!(metrics, stdout(&out));
    for line in metrics.lines() {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 4, "bad metrics line {line:?}");
        fields[0].parse::<usize>().unwrap();
        assert!(fields[1] == "train" || fields[1] == "val");
        fields[2].parse::<f64>().unwrap();
        fields[3].parse::<f64>().unwrap();
    }
    assert!(dir.path().join("ck.bin").exists());

    let mut eval = vec![
        "evaluate", "--task", "link", "--data-dir", "data", "--checkpoint", "ck.bin",
        "--predictions", "p.csv",
    ];
    eval.extend_from_slice(SMALL_MODEL);
    let out = run(&eval, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("f1="));
    let preds = fs::read_to_string(dir.path().join("p.csv")).unwrap();
    let mut lines = preds.lines();
    assert_eq!(lines.next(), Some("src,dst,prob,label"));
    let first = lines.next().unwrap();
    let fields: Vec<&str> = first.split(',').collect();
    assert_eq!(fields.len(), 4);
    let prob: f64 = fields[2].parse().unwrap();
    assert!((0.0..=1.0).contains(&prob));
}

#[test]
fn evaluate_rejects_mismatched_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let synth = ["synth", "-o", "data", "--set", "pieces=2", "--set", "notes_per_voice=6"];
    assert_eq!(run(&synth, dir.path()).status.code(), Some(0));
    let mut args = vec![
        "train", "--task", "link", "--train-dir", "data", "--checkpoint", "ck.bin",
    ];
    args.extend_from_slice(SMALL_MODEL);
    assert_eq!(run(&args, dir.path()).status.code(), Some(0));
    // Default hidden_dim=32 no longer matches the checkpoint written at 8.
    let out = run(
        &["evaluate", "--task", "link", "--data-dir", "data", "--checkpoint", "ck.bin"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn double_precision_training_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let synth = ["synth", "-o", "data", "--set", "pieces=3", "--set", "notes_per_voice=6"];
    assert_eq!(run(&synth, dir.path()).status.code(), Some(0));
    let mut args = vec![
        "--f64", "train", "--task", "composer", "--train-dir", "data", "--val-dir", "data",
    ];
    args.extend_from_slice(SMALL_MODEL);
    let a = run(&args, dir.path());
    let b = run(&args, dir.path());
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(stdout(&a), stdout(&b));
    assert!(!stdout(&a).is_empty());
}

#[test]
fn gradcheck_prints_one_line_per_case_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["gradcheck"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().filter(|l| l.contains(": pass")).count(), 16);
    assert!(text.contains("all 16 gradient checks passed"));
}
