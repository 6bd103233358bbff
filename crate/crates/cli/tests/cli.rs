use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_wireless-dreamer");

const TINY: &str = "\
# small enough to run in seconds
grid_w: 10
grid_h: 10
n_users: 3
horizon: 12
episodes: 4
seeds: 0
warmup_steps: 30
eval_every: 2
eval_episodes: 1
batch_size: 4
seq_len: 6
latent_dim: 8
embed_dim: 8
hidden_dim: 16
";

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("experiment.cfg");
    fs::write(&path, text).unwrap();
    path
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn assert_one_line_error(out: &Output, needle: &str) {
    assert!(!out.status.success());
    let err = stderr(out);
    assert_eq!(err.trim_end().lines().count(), 1, "stderr: {err}");
    assert!(err.starts_with("error: "), "stderr: {err}");
    assert!(err.contains(needle), "stderr: {err}");
}

#[test]
fn unknown_key_fails_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "episodes: 3\nlearning_rate: 0.1\n");
    let out = run(&["train", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_one_line_error(&out, "learning_rate");
}

#[test]
fn negative_episodes_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "episodes: -1\n");
    let out = run(&["compare", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_one_line_error(&out, "episodes");
}

#[test]
fn missing_config_file_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.cfg");
    let out = run(&["train", "--config", s(&missing)]);
    assert_one_line_error(&out, "nope.cfg");
}

#[test]
fn train_then_evaluate_dreamer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out_dir = dir.path().join("train");
    let out = run(&["train", "--config", s(&cfg), "--agent", "dreamer", "--seed", "3", "5", "--out", s(&out_dir)]);
    assert!(out.status.success(), "{}", stderr(&out));
    for f in ["train.csv", "eval.csv", "returns.svg", "seed_3.ckpt", "seed_5.ckpt"] {
        assert!(out_dir.join(f).is_file(), "missing {f}");
    }
    let train = fs::read_to_string(out_dir.join("train.csv")).unwrap();
    let lines: Vec<&str> = train.lines().collect();
    assert_eq!(
        lines[0],
        "seed,episode,return,epsilon,wm_rec_loss,wm_rew_loss,wm_cons_loss,q_loss,wall_ms"
    );
    assert_eq!(lines.len(), 1 + 2 * 4);
    assert!(lines[1].starts_with("3,0,"));
    assert!(lines[5].starts_with("5,0,"));
    assert!(!train.contains('\r'));

    let eval_dir = dir.path().join("eval");
    let out = run(&[
        "evaluate",
        "--checkpoint",
        s(&out_dir.join("seed_3.ckpt")),
        "--config",
        s(&cfg),
        "--out",
        s(&eval_dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("reward prediction: MAE"), "{stdout}");
    let eval = fs::read_to_string(eval_dir.join("eval.csv")).unwrap();
    let rows: Vec<&str> = eval.lines().skip(1).collect();
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| !r.ends_with(',')), "dreamer rows carry predictions");
}

#[test]
fn evaluate_random_checkpoint_has_no_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out_dir = dir.path().join("train");
    let out = run(&["train", "--config", s(&cfg), "--agent", "random", "--out", s(&out_dir)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let eval_dir = dir.path().join("eval");
    let out = run(&[
        "evaluate",
        "--checkpoint",
        s(&out_dir.join("seed_0.ckpt")),
        "--config",
        s(&cfg),
        "--out",
        s(&eval_dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let eval = fs::read_to_string(eval_dir.join("eval.csv")).unwrap();
    assert!(eval.lines().skip(1).all(|r| r.ends_with(',')));
}

#[test]
fn corrupt_checkpoint_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let ckpt = dir.path().join("bad.ckpt");
    fs::write(&ckpt, b"not a checkpoint").unwrap();
    let out = run(&["evaluate", "--checkpoint", s(&ckpt), "--config", s(&cfg), "--out", s(dir.path())]);
    assert!(!out.status.success());
    assert_eq!(stderr(&out).trim_end().lines().count(), 1);
}

#[test]
fn compare_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{TINY}seeds: 0 1\n").replace("seeds: 0\n", ""));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out_dir in [&a, &b] {
        let out = run(&["compare", "--config", s(&cfg), "--out", s(out_dir)]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let files = [
        "returns.svg",
        "prediction.svg",
        "dreamer/train.csv",
        "dreamer/eval.csv",
        "dreamer/returns.svg",
        "dqn/train.csv",
        "dqn/eval.csv",
        "random/train.csv",
        "random/eval.csv",
    ];
    for f in files {
        let x = fs::read(a.join(f)).unwrap_or_else(|_| panic!("missing {f}"));
        assert_eq!(x, fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let overlay = fs::read_to_string(a.join("returns.svg")).unwrap();
    assert_eq!(overlay.matches("<polyline").count(), 3);
    let dqn_eval = fs::read_to_string(a.join("dqn/eval.csv")).unwrap();
    assert!(dqn_eval.lines().skip(1).all(|r| r.ends_with(',')));
}
