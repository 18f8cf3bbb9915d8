use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chaptering"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
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

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/ingest")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn version_names_formats() {
    let out = ok(&["--version"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("checkpoint format 1, model format 1"), "{text}");
}

#[test]
fn bad_usage_and_missing_input_exit_one() {
    assert_eq!(run(&["train"]).status.code(), Some(1));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["stats", "--corpus", "/nonexistent/c.jsonl"]).status.code(), Some(1));
}

#[test]
fn ingest_lists_exclusions_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("corpus.jsonl");
    let res = ok(&[
        "ingest",
        "--vtt",
        s(&fixture().join("vtt")),
        "--chapters",
        s(&fixture().join("chapters")),
        "--out",
        s(&out),
    ]);
    let stderr = String::from_utf8(res.stderr).unwrap();
    assert!(stderr.contains("excluded bad"), "{stderr}");
    let want = std::fs::read_to_string(fixture().join("expected.jsonl")).unwrap();
    assert_eq!(std::fs::read_to_string(&out).unwrap(), want);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("corpus.jsonl.report.json")).unwrap()).unwrap();
    assert!(report["excluded"].as_u64().unwrap() >= 1);
    assert!(dir.path().join("corpus.jsonl.manifest.json").exists());
}

fn small_corpus(dir: &Path) -> PathBuf {
    let corpus = dir.join("synth.jsonl");
    ok(&[
        "synth",
        "--documents",
        "40",
        "--segment-len",
        "2,4",
        "--segments-per-doc",
        "2,3",
        "--channels",
        "12",
        "--seed",
        "3",
        "--out",
        s(&corpus),
    ]);
    corpus
}

#[test]
fn split_train_evaluate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    let splits = dir.path().join("splits");
    ok(&["split", "--corpus", s(&corpus), "--seed", "1", "--ratios", "0.6,0.2,0.2", "--out-dir", s(&splits)]);
    for name in ["splits.json", "train.jsonl", "validation.jsonl", "test.jsonl", "manifest.json"] {
        assert!(splits.join(name).exists(), "{name}");
    }

    let train_dir = |name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "train",
            "--train",
            s(&splits.join("train.jsonl")),
            "--val",
            s(&splits.join("validation.jsonl")),
            "--out",
            s(&out),
            "--epochs",
            "2",
            "--token-budget",
            "600",
            "--learning-rate",
            "1e-3",
            "--doc-layers",
            "2",
            "--alpha",
            "1",
        ]);
        out
    };
    let a = train_dir("run_a");
    let b = train_dir("run_b");
    assert_eq!(std::fs::read(a.join("last.json")).unwrap(), std::fs::read(b.join("last.json")).unwrap());
    assert_eq!(std::fs::read_to_string(a.join("history.jsonl")).unwrap().lines().count(), 2);

    let eval = |tag: &str| {
        let out = dir.path().join(format!("eval_{tag}.json"));
        ok(&[
            "evaluate",
            "--model",
            s(&a.join("best.json")),
            "--corpus",
            s(&splits.join("test.jsonl")),
            "--bootstrap-count",
            "20",
            "--out",
            s(&out),
        ]);
        std::fs::read(out).unwrap()
    };
    let first = eval("1");
    assert_eq!(first, eval("2"));
    let report: serde_json::Value = serde_json::from_slice(&first).unwrap();
    let f1 = report["f1"]["value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f1));

    // Streaming decisions must equal the batch labels of the same online model.
    let test_docs = std::fs::read_to_string(splits.join("test.jsonl")).unwrap();
    let first_doc: serde_json::Value = serde_json::from_str(test_docs.lines().next().unwrap()).unwrap();
    let seg = ok(&[
        "segment",
        "--model",
        s(&a.join("last.json")),
        "--input",
        s(&splits.join("test.jsonl")),
    ]);
    let seg_first: serde_json::Value =
        serde_json::from_str(String::from_utf8(seg.stdout).unwrap().lines().next().unwrap()).unwrap();
    let labels: Vec<u64> = seg_first["labels"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();

    let mut child = bin()
        .args(["stream", "--model", s(&a.join("last.json"))])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    {
        let mut stdin = child.stdin.take().unwrap();
        for sent in first_doc["sentences"].as_array().unwrap() {
            writeln!(stdin, "{}", sent["text"].as_str().unwrap()).unwrap();
            writeln!(stdin).unwrap();
        }
    }
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let streamed: Vec<(usize, u64)> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| {
            let (i, b) = l.split_once('\t').unwrap();
            (i.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert_eq!(streamed.len(), labels.len());
    for (k, (i, b)) in streamed.iter().enumerate() {
        assert_eq!(*i, k);
        assert_eq!(*b, labels[k], "sentence {k}");
    }
}

#[test]
fn offline_model_refuses_to_stream() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    let out = dir.path().join("m");
    ok(&[
        "train", "--train", s(&corpus), "--val", s(&corpus), "--out", s(&out), "--epochs", "1", "--token-budget",
        "2000", "--doc-layers", "2",
    ]);
    let res = bin()
        .args(["stream", "--model", s(&out.join("last.json"))])
        .stdin(Stdio::null())
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn rouge_averages_aligned_lines() {
    let dir = tempfile::tempdir().unwrap();
    let r = dir.path().join("ref.txt");
    let h = dir.path().join("hyp.txt");
    std::fs::write(&r, "the cat sat\nred blue\n").unwrap();
    std::fs::write(&h, "the cat sat\ngreen yellow\n").unwrap();
    let out = ok(&["rouge", "--ref", s(&r), "--hyp", s(&h)]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["pairs"], 2);
    assert_eq!(v["rouge1"]["f1"].as_f64().unwrap(), 0.5);
    std::fs::write(&h, "only one line\n").unwrap();
    assert_eq!(run(&["rouge", "--ref", s(&r), "--hyp", s(&h)]).status.code(), Some(1));
}
