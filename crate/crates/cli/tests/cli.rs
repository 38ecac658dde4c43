//! End-to-end runs of the `aldasel` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn aldasel(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aldasel"))
        .current_dir(dir)
        .args(["-q"])
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = aldasel(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    aldasel(dir, args).status.code().unwrap()
}

fn small_corpus(dir: &Path) {
    ok(
        dir,
        &["--seed", "5", "synth", "--out", ".", "--utterances", "40", "--dev-utterances", "15", "--max-frames", "150"],
    );
}

#[test]
fn run_then_rerun_is_cached() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_corpus(d);
    let first = ok(d, &["--config", "config.toml", "run"]);
    assert!(first.contains("train-lda          ran"), "{first}");
    assert!(first.contains("Total"));
    assert!(first.contains("Enrichment"));
    let sel = fs::read(d.join("work/selection.tsv")).unwrap();
    let second = ok(d, &["--config", "config.toml", "run"]);
    let statuses: Vec<&str> = second
        .lines()
        .take_while(|l| !l.is_empty())
        .map(|l| l.split_whitespace().last().unwrap())
        .collect();
    assert!(!statuses.is_empty() && statuses.iter().all(|s| *s == "cached"), "{second}");
    assert_eq!(fs::read(d.join("work/selection.tsv")).unwrap(), sel);
}

#[test]
fn stage_commands_reproduce_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_corpus(d);
    for stage in ["train-gmm", "quantize", "tfidf", "train-lda", "posteriors", "cluster", "select"] {
        ok(d, &["--config", "config.toml", "--work-dir", "stages", stage]);
    }
    ok(d, &["--config", "config.toml", "run"]);
    for f in ["gmm.bin", "pool.tokens", "pool.weighted", "lda.bin", "pool.post", "centroids.post", "acoustic.audit.tsv"] {
        assert_eq!(
            fs::read(d.join("stages").join(f)).unwrap(),
            fs::read(d.join("work").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn selections_report_compare_and_combine() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_corpus(d);
    ok(d, &["--config", "config.toml", "run"]);
    let report = ok(d, &["--config", "config.toml", "report", "work/selection.tsv", "--tsv", "r.tsv"]);
    assert!(report.starts_with("Component"));
    assert!(fs::read_to_string(d.join("r.tsv")).unwrap().starts_with("domain\t"));

    ok(d, &["--config", "config.toml", "random-select", "--match", "work/selection.audit.tsv"]);
    ok(d, &["--config", "config.toml", "combine", "work/acoustic.audit.tsv", "work/random.audit.tsv"]);
    let cmp = ok(
        d,
        &[
            "--config",
            "config.toml",
            "compare",
            "alda=work/acoustic.audit.tsv",
            "union=work/combined.audit.tsv",
            "--random",
            "2",
        ],
    );
    assert!(cmp.contains("target domain: meeting"));
    assert_eq!(cmp.lines().count(), 2 + 4);

    let sweep = ok(d, &["--config", "config.toml", "sweep-lambda", "--lambdas", "0.01,1.0"]);
    let last = sweep.lines().last().unwrap();
    assert!(last.starts_with("1\t200\t"), "{sweep}");
    assert!(d.join("work/sweep/summary.tsv").exists());
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_corpus(d);
    ok(d, &["--config", "config.toml", "--threads", "1", "--work-dir", "one", "run"]);
    ok(d, &["--config", "config.toml", "--threads", "3", "--work-dir", "three", "run"]);
    for f in ["selection.tsv", "selection.audit.tsv"] {
        assert_eq!(fs::read(d.join("one").join(f)).unwrap(), fs::read(d.join("three").join(f)).unwrap());
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(d, &["no-such-command"]), 1);
    assert_eq!(code(d, &["--config", "missing.toml", "run"]), 1);
    assert_eq!(code(d, &["run"]), 1);
    assert_eq!(code(d, &["--threads", "0", "run"]), 1);
    assert_eq!(code(d, &["--help"]), 0);

    small_corpus(d);
    assert_eq!(code(d, &["--config", "config.toml", "select", "--lambda", "0"]), 1);
    assert_eq!(code(d, &["--config", "config.toml", "sweep-lambda", "--lambdas", "0.2,1.5"]), 1);
    fs::write(d.join("bad.toml"), "[selection]\nlambda = 2.0\n").unwrap();
    assert_eq!(code(d, &["--config", "bad.toml", "run"]), 1);

    // Runtime failures: a missing model and a corrupted one.
    assert_eq!(code(d, &["--config", "config.toml", "posteriors"]), 2);
    fs::create_dir_all(d.join("work")).unwrap();
    fs::write(d.join("work/lda.bin"), b"ALDAxxxx").unwrap();
    assert_eq!(code(d, &["--config", "config.toml", "posteriors"]), 2);
}
