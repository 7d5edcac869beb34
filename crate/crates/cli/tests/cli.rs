//! End-to-end tests against the compiled binary: every command with real
//! files in temp directories, plus the exit-code and rerun-identity
//! contracts.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_genreshot"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("binary runs")
}

fn run_ok(args: &[&str], dir: &Path) -> String {
    let out = run(args, dir);
    assert!(
        out.status.success(),
        "command {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf8 stdout")
}

const TINY_TRAIN: &[&str] = &[
    "--epochs", "2", "--batch", "8", "-c", "5", "--model-width", "8", "--heads", "2",
    "--blocks", "1", "--seed", "7",
];

fn make_corpus(dir: &Path) {
    run_ok(
        &[
            "synth", "features", "--out", "corpus", "--count", "30", "--feature-width", "16",
            "--clips", "6,10", "--seed", "7",
        ],
        dir,
    );
    run_ok(
        &[
            "split", "--manifest", "corpus/manifest.jsonl", "--out", "splits.csv", "--folds", "2",
            "--seed", "7",
        ],
        dir,
    );
}

#[test]
fn feature_pipeline_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    make_corpus(dir);

    let stats = run_ok(
        &["stats", "--manifest", "corpus/manifest.jsonl", "--co-occurrence", "co.csv"],
        dir,
    );
    assert!(stats.contains("cardinality:"));
    assert!(stats.contains("drama"));
    assert!(std::fs::read_to_string(dir.join("co.csv")).unwrap().starts_with("genre,action,"));

    let mut train_args = vec![
        "train", "--manifest", "corpus/manifest.jsonl", "--splits", "splits.csv", "--fold", "0",
        "--out", "model.dvtm", "--history", "hist.jsonl",
    ];
    train_args.extend_from_slice(TINY_TRAIN);
    let trained = run_ok(&train_args, dir);
    assert!(trained.contains("trained 2 epochs"));
    let history = std::fs::read_to_string(dir.join("hist.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 2);
    assert!(history.lines().next().unwrap().contains("\"epoch\":1"));

    let eval_args = [
        "eval", "--manifest", "corpus/manifest.jsonl", "--splits", "splits.csv", "--fold", "0",
        "--model", "model.dvtm", "-c", "5", "--out", "report.json",
    ];
    let eval_out = run_ok(&eval_args, dir);
    assert!(eval_out.contains("micro AP"));
    assert!(eval_out.contains("per-genre AP"));
    let report = std::fs::read(dir.join("report.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_slice(&report).unwrap();
    assert!(parsed.get("micro_ap").is_some());
    assert_eq!(parsed["micro_ap"]["per_fold"].as_array().unwrap().len(), 1);

    // Byte-identical rerun.
    std::fs::rename(dir.join("report.json"), dir.join("report_first.json")).unwrap();
    run_ok(&eval_args, dir);
    let again = std::fs::read(dir.join("report.json")).unwrap();
    assert_eq!(report, again, "eval rerun must be byte-identical");
}

#[test]
fn synth_video_then_segment_recovers_planted_boundaries() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    run_ok(&["synth", "video", "--out", "vids", "--count", "6", "--seed", "11"], dir);
    run_ok(&["segment", "--manifest", "vids/manifest.jsonl", "--out", "detected.csv"], dir);
    let planted = std::fs::read(dir.join("vids/boundaries.csv")).unwrap();
    let detected = std::fs::read(dir.join("detected.csv")).unwrap();
    assert_eq!(planted, detected, "detector should reproduce the planted boundary file");
}

#[test]
fn generation_and_splitting_are_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for out in ["a", "b"] {
        run_ok(
            &[
                "synth", "features", "--out", out, "--count", "10", "--feature-width", "12",
                "--clips", "4,8", "--seed", "3",
            ],
            dir,
        );
    }
    assert_eq!(
        std::fs::read(dir.join("a/manifest.jsonl")).unwrap(),
        std::fs::read(dir.join("b/manifest.jsonl")).unwrap()
    );
    assert_eq!(
        std::fs::read(dir.join("a/t0004.dvtf")).unwrap(),
        std::fs::read(dir.join("b/t0004.dvtf")).unwrap()
    );

    for out in ["s1.csv", "s2.csv"] {
        run_ok(
            &["split", "--manifest", "a/manifest.jsonl", "--out", out, "--folds", "3", "--seed", "5"],
            dir,
        );
    }
    assert_eq!(
        std::fs::read(dir.join("s1.csv")).unwrap(),
        std::fs::read(dir.join("s2.csv")).unwrap()
    );
}

#[test]
fn exit_codes_follow_the_contract() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    make_corpus(dir);

    // 2: missing input file.
    let out = run(
        &["stats", "--manifest", "nope.jsonl"],
        dir,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.jsonl"));

    // 1: validation error from a core check.
    let out = run(
        &[
            "train", "--manifest", "corpus/manifest.jsonl", "--splits", "splits.csv", "--fold",
            "0", "--out", "m.dvtm", "--epochs", "0",
        ],
        dir,
    );
    assert_eq!(out.status.code(), Some(1));

    // 1: unparseable command line.
    let out = run(&["segment", "--not-a-flag"], dir);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());

    // 0: help and version.
    assert_eq!(run(&["--help"], dir).status.code(), Some(0));
    assert_eq!(run(&["--version"], dir).status.code(), Some(0));
}

#[test]
fn config_file_sets_defaults_and_flags_override() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    make_corpus(dir);
    std::fs::write(
        dir.join("run.toml"),
        "[train]\nepochs = 1\nbatch = 8\n\n[model]\nmodel_width = 8\nheads = 2\nblocks = 1\n\n[experiment]\nclips_per_snippet = 5\n",
    )
    .unwrap();

    let base = [
        "train", "--config", "run.toml", "--manifest", "corpus/manifest.jsonl", "--splits",
        "splits.csv", "--fold", "0", "--out", "m.dvtm", "--history", "h.jsonl", "--seed", "7",
    ];
    run_ok(&base, dir);
    let history = std::fs::read_to_string(dir.join("h.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 1, "config file should set epochs = 1");

    let mut overridden = base.to_vec();
    overridden.extend_from_slice(&["--epochs", "2"]);
    run_ok(&overridden, dir);
    let history = std::fs::read_to_string(dir.join("h.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 2, "flag should override the config file");

    // Unknown keys are rejected, not ignored.
    std::fs::write(dir.join("bad.toml"), "[train]\nepoch = 1\n").unwrap();
    let out = run(
        &["stats", "--config", "bad.toml", "--manifest", "corpus/manifest.jsonl"],
        dir,
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.toml"));
}

#[test]
fn fusing_a_model_with_itself_matches_single_stream_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    make_corpus(dir);
    let mut train_args = vec![
        "train", "--manifest", "corpus/manifest.jsonl", "--splits", "splits.csv", "--fold", "0",
        "--out", "model.dvtm",
    ];
    train_args.extend_from_slice(TINY_TRAIN);
    run_ok(&train_args, dir);

    run_ok(
        &[
            "eval", "--manifest", "corpus/manifest.jsonl", "--splits", "splits.csv", "--fold",
            "0", "--model", "model.dvtm", "-c", "5", "--out", "single.json",
        ],
        dir,
    );
    run_ok(
        &[
            "fuse-eval", "--manifest-a", "corpus/manifest.jsonl", "--model-a", "model.dvtm",
            "--manifest-b", "corpus/manifest.jsonl", "--model-b", "model.dvtm", "--splits",
            "splits.csv", "--fold", "0", "-c", "5", "--out", "fused.json",
        ],
        dir,
    );
    assert_eq!(
        std::fs::read(dir.join("single.json")).unwrap(),
        std::fs::read(dir.join("fused.json")).unwrap(),
        "averaging a model's logits with themselves must not change anything"
    );
}

#[test]
fn two_stream_fusion_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for (out, backbone) in [("a", "synth-a"), ("b", "synth-b")] {
        run_ok(
            &[
                "synth", "features", "--out", out, "--count", "30", "--feature-width", "16",
                "--clips", "6,10", "--seed", "7", "--backbone", backbone,
            ],
            dir,
        );
    }
    run_ok(
        &["split", "--manifest", "a/manifest.jsonl", "--out", "splits.csv", "--folds", "1",
          "--seed", "7"],
        dir,
    );
    for (manifest, model, stream) in
        [("a/manifest.jsonl", "ma.dvtm", "0"), ("b/manifest.jsonl", "mb.dvtm", "1")]
    {
        let mut args = vec![
            "train", "--manifest", manifest, "--splits", "splits.csv", "--fold", "0", "--out",
            model, "--stream", stream,
        ];
        args.extend_from_slice(TINY_TRAIN);
        run_ok(&args, dir);
    }
    let out = run_ok(
        &[
            "fuse-eval", "--manifest-a", "a/manifest.jsonl", "--model-a", "ma.dvtm",
            "--manifest-b", "b/manifest.jsonl", "--model-b", "mb.dvtm", "--splits", "splits.csv",
            "--fold", "0", "-c", "5",
        ],
        dir,
    );
    assert!(out.contains("micro AP"));
}

#[test]
fn sweep_writes_reports_and_a_stable_table() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let args = [
        "sweep", "--out", "grid", "--count", "16", "--feature-width", "12", "--epochs", "1",
        "--batch", "8", "-c", "5", "--model-width", "6", "--heads", "2", "--blocks", "1",
        "--folds", "1", "--seed", "3",
    ];
    let out = run_ok(&args, dir);
    assert!(out.contains("shot-24/transformer/single"));
    assert!(out.contains("seq-32/transformer/fusion"));

    let mut cells: Vec<String> = std::fs::read_dir(dir.join("grid"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    cells.sort();
    assert_eq!(cells.len(), 9, "eight cell reports plus table.txt: {cells:?}");
    assert!(cells.contains(&"table.txt".to_string()));
    assert!(cells.contains(&"shot-24_transformer_fusion.json".to_string()));

    let table = std::fs::read(dir.join("grid/table.txt")).unwrap();
    std::fs::rename(dir.join("grid"), dir.join("grid_first")).unwrap();
    run_ok(&args, dir);
    assert_eq!(
        table,
        std::fs::read(dir.join("grid/table.txt")).unwrap(),
        "sweep rerun must be byte-identical"
    );

    let report_out = run_ok(
        &[
            "report", "grid/shot-24_transformer_single.json",
            "grid/seq-24_transformer_single.json",
        ],
        dir,
    );
    assert!(report_out.contains("shot-24_transformer_single"));
    assert!(report_out.contains("seq-24_transformer_single"));
    assert!(report_out.starts_with("cell"));
}

#[test]
fn clips_axis_sweep_emits_one_report_per_length() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    run_ok(
        &[
            "sweep", "--out", "clips", "--axis", "clips", "--clips-list", "2,4", "--count", "16",
            "--feature-width", "12", "--epochs", "1", "--batch", "8", "--model-width", "6",
            "--heads", "2", "--blocks", "1", "--folds", "1", "--seed", "3",
        ],
        dir,
    );
    let table = std::fs::read_to_string(dir.join("clips/table.txt")).unwrap();
    assert!(table.contains("c=02"));
    assert!(table.contains("c=04"));
    assert!(dir.join("clips/c_02.json").is_file());
    assert!(dir.join("clips/c_04.json").is_file());
}
