use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_streamgnn"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Generates a small dataset with a built-in model and an initial checkpoint.
fn setup(dir: &Path, model: &str, layers: &str) {
    ok(&[
        "gen", "--out", p(dir), "--nodes", "60", "--avg-degree", "3", "--feature-len", "4",
        "--stream-len", "50", "--seed", "7", "--model", model, "--layers", layers, "--hidden", "5",
    ]);
    ok(&[
        "init",
        "--graph", p(&dir.join("graph.txt")),
        "--features", p(&dir.join("features.tnsr")),
        "--model", p(&dir.join("model.txt")),
        "--weights", p(&dir.join("weights/weights.txt")),
        "--out", p(&dir.join("ckpt")),
    ]);
}

fn stream_args<'a>(dir: &'a Path, stream: &'a str, extra: &[&'a str]) -> Vec<String> {
    let mut v: Vec<String> = [
        "stream",
        "--checkpoint", p(&dir.join("ckpt")),
        "--model", p(&dir.join("model.txt")),
        "--weights", p(&dir.join("weights/weights.txt")),
        "--features", p(&dir.join("features.tnsr")),
        "--stream", stream,
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn run_owned(args: &[String]) -> Output {
    bin().args(args).output().unwrap()
}

#[test]
fn empty_stream_writes_no_records() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), "gcn", "2");
    let empty = dir.path().join("empty.txt");
    fs::write(&empty, "").unwrap();
    let out = run_owned(&stream_args(dir.path(), p(&empty), &[]));
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
}

#[test]
fn every_round_verification_passes() {
    for model in ["gcn", "sage", "gin"] {
        let dir = tempfile::tempdir().unwrap();
        setup(dir.path(), model, "2");
        let stream = dir.path().join("stream.txt");
        let out = run_owned(&stream_args(
            dir.path(),
            p(&stream),
            &["--verify", "every-round", "--compare-baseline"],
        ));
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let text = String::from_utf8(out.stdout).unwrap();
        assert_eq!(text.lines().count(), 50);
        assert!(text.lines().all(|l| l.contains("baseline_fetches=")));
    }
}

#[test]
fn stats_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), "sage", "2");
    let stream = dir.path().join("stream.txt");
    let mut outputs = Vec::new();
    for name in ["a.txt", "b.txt"] {
        let stats = dir.path().join(name);
        let out = run_owned(&stream_args(
            dir.path(),
            p(&stream),
            &["--num-updates", "5", "--compare-baseline", "--stats-out", p(&stats)],
        ));
        assert!(out.status.success());
        outputs.push(fs::read(&stats).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(String::from_utf8_lossy(&outputs[0]).lines().count(), 10);

    let out = ok(&["report", p(&dir.path().join("a.txt"))]);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("covered_reset") && table.contains("reduction"));
}

#[test]
fn streamed_checkpoint_equals_fresh_init() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), "gin", "3");
    let stream = dir.path().join("stream.txt");
    let saved = dir.path().join("after");
    let out = run_owned(&stream_args(
        dir.path(),
        p(&stream),
        &["--num-updates", "10", "--verify", "final", "--save", p(&saved)],
    ));
    assert!(out.status.success());

    let fresh = dir.path().join("fresh");
    ok(&[
        "init",
        "--graph", p(&saved.join("graph.txt")),
        "--features", p(&dir.path().join("features.tnsr")),
        "--model", p(&dir.path().join("model.txt")),
        "--weights", p(&dir.path().join("weights/weights.txt")),
        "--out", p(&fresh),
    ]);
    for entry in fs::read_dir(&fresh).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            fs::read(fresh.join(&name)).unwrap(),
            fs::read(saved.join(&name)).unwrap(),
            "{name:?}"
        );
    }
    ok(&[
        "verify",
        "--checkpoint", p(&saved),
        "--features", p(&dir.path().join("features.tnsr")),
        "--model", p(&dir.path().join("model.txt")),
        "--weights", p(&dir.path().join("weights/weights.txt")),
    ]);
}

#[test]
fn corrupted_checkpoint_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), "gcn", "2");
    // Drop one edge from the stored graph so the stored values go stale.
    let graph = dir.path().join("ckpt/graph.txt");
    let text = fs::read_to_string(&graph).unwrap();
    let rest: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
    fs::write(&graph, rest).unwrap();
    let out = run(&[
        "verify",
        "--checkpoint", p(&dir.path().join("ckpt")),
        "--features", p(&dir.path().join("features.tnsr")),
        "--model", p(&dir.path().join("model.txt")),
        "--weights", p(&dir.path().join("weights/weights.txt")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("layer") && err.contains("node") && err.contains("index"), "{err}");
}

#[test]
fn bad_inputs_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), "gcn", "2");
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "* 1 2\n").unwrap();
    let out = run_owned(&stream_args(dir.path(), p(&bad), &[]));
    assert_eq!(out.status.code(), Some(1));

    let out = run(&["report", p(&dir.path().join("missing.txt"))]);
    assert_eq!(out.status.code(), Some(1));

    let stream = dir.path().join("stream.txt");
    let out = run_owned(&stream_args(dir.path(), p(&stream), &["--num-updates", "0"]));
    assert!(!out.status.success());
}
