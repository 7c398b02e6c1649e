use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"{
  "model": {"embed_dim": 16, "n_layers": 1, "n_heads": 2, "context_len": 128, "ffn_mult": 2.0, "seed": 0},
  "pretrain": {"epochs": 2, "lr": 0.003, "batch_size": 8},
  "epochs": 1
}"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unlearn-forge"))
        .args(args)
        .env_remove("UNLEARN_FORGE_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn tiny_config(dir: &Path) -> String {
    let p = dir.join("tiny.json");
    fs::write(&p, TINY).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn missing_corpus_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    let o = run(&["prepare-data", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn help_and_unknown_flags() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
    assert_eq!(code(&run(&["gradcheck", "--bogus"])), 1);
    assert_eq!(code(&run(&[])), 1);
}

#[test]
fn gradcheck_passes_in_double_precision() {
    let o = run(&["gradcheck", "--precision", "double"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("all 17 checks"));
}

#[test]
fn unlearn_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = run(&[
            "unlearn",
            "--config",
            &cfg,
            "--method",
            "flat",
            "--divergence",
            "kl",
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in [
        "unlearned.ckpt",
        "original.ckpt",
        "unlearn_losses.csv",
        "config.json",
    ] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn unlearn_from_checkpoint_matches_fresh_training() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let fresh = dir.path().join("fresh");
    let o = run(&[
        "unlearn",
        "--config",
        &cfg,
        "--method",
        "ga",
        "--out",
        fresh.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let resumed = dir.path().join("resumed");
    let ck = fresh.join("original.ckpt");
    let o = run(&[
        "unlearn",
        "--config",
        &cfg,
        "--method",
        "ga",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--out",
        resumed.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(!resumed.join("original.ckpt").exists());
    assert_eq!(
        fs::read(fresh.join("unlearned.ckpt")).unwrap(),
        fs::read(resumed.join("unlearned.ckpt")).unwrap()
    );
}

#[test]
fn dry_run_touches_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("out");
    let o = run(&[
        "--dry-run",
        "eval",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("would write"));
    assert!(!out.exists());
    let o = run(&[
        "--dry-run",
        "prepare-data",
        "--corpus",
        "synthetic",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert!(!out.exists());
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["train", "--lr=-1", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"epochz": 3}"#).unwrap();
    let o = run(&[
        "train",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    let text = dir.path().join("book.txt");
    fs::write(&text, "some forget text ".repeat(20)).unwrap();
    let o = run(&[
        "prepare-data",
        "--corpus",
        text.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("--retain"));
    assert!(!out.exists());
}

#[test]
fn divergence_guard_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("out");
    let o = run(&[
        "unlearn",
        "--config",
        &cfg,
        "--method",
        "ga",
        "--divergence-guard",
        "1e-6",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn prepare_text_corpus_then_train_on_it() {
    let dir = tempfile::tempdir().unwrap();
    let text = dir.path().join("book.txt");
    fs::write(
        &text,
        "The lighthouse keeper counted ships every night and wrote their names in a ledger. "
            .repeat(4),
    )
    .unwrap();
    let retain = dir.path().join("retain.jsonl");
    fs::write(
        &retain,
        "{\"prompt\": \"Q: capital of Peru?\\nA: \", \"response\": \"Lima\"}\n\
         {\"prompt\": \"Q: two plus two?\\nA: \", \"response\": \"four\"}\n",
    )
    .unwrap();
    let data = dir.path().join("data");
    let o = run(&[
        "prepare-data",
        "--corpus",
        text.to_str().unwrap(),
        "--retain",
        retain.to_str().unwrap(),
        "--max-tokens",
        "64",
        "--prefix-len",
        "16",
        "--out",
        data.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let forget = fs::read_to_string(data.join("forget_text.jsonl")).unwrap();
    // 336 bytes in 64-byte chunks; the 16-byte tail has nothing after its prefix
    assert_eq!(forget.lines().count(), 5);
    assert!(stderr(&o).contains("skipped 1"));

    let cfg = tiny_config(dir.path());
    let models = dir.path().join("models");
    let o = run(&[
        "train",
        "--config",
        &cfg,
        "--data",
        data.to_str().unwrap(),
        "--out",
        models.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(models.join("original.ckpt").exists());
    assert!(models.join("retained.ckpt").exists());
}

#[test]
fn eval_checkpoints_and_render_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let models = dir.path().join("models");
    let o = run(&["train", "--config", &cfg, "--out", models.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let eval = dir.path().join("eval");
    let o = run(&[
        "eval",
        "--config",
        &cfg,
        "--model",
        models.join("original.ckpt").to_str().unwrap(),
        "--retained",
        models.join("retained.ckpt").to_str().unwrap(),
        "--out",
        eval.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = eval.join("report.csv");
    assert!(fs::read_to_string(&csv)
        .unwrap()
        .starts_with("method,divergence,metric,value\noriginal,-,bleu,"));

    let o = run(&["report", csv.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let md = stdout(&o);
    assert!(md.starts_with("| Method | bleu | rouge_l |"));
    assert!(md.contains("| original |") && md.contains("| retained |"));
    let o = run(&["report", dir.path().join("missing.csv").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn estimate_divergence_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("est");
    let o = run(&[
        "estimate-divergence",
        "--kind",
        "kl",
        "--n-grid",
        "100,400",
        "--repeats",
        "2",
        "--steps",
        "50",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert!(csv.starts_with("N,seed,estimate,oracle,abs_error\n"));
    assert_eq!(csv.lines().count(), 5);
    assert!(stdout(&o).contains("oracle 0.83178"));
}
