use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "\
name = tiny
synth_train_len = 300
synth_test_len = 200
window = 16
d_model = 8
epochs = 1
batch_size = 16
seed = 3
loss_combine = sum
threshold = quantile:0.02
";

fn dconad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dconad"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = dconad(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.display().to_string()
}

fn full_run(config: &str, out: &Path) {
    let out = out.to_str().unwrap();
    ok(&["train", "--config", config, "--out", out]);
    ok(&["score", "--config", config, "--out", out]);
    ok(&["evaluate", "--config", config, "--out", out]);
}

#[test]
fn train_score_evaluate_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "tiny.conf", TINY);
    let out = tmp.path().join("run");
    full_run(&config, &out);
    for file in [
        "config.txt",
        "checkpoint.bin",
        "trainlog.csv",
        "scores.csv",
        "metrics.txt",
        "metrics_raw.txt",
    ] {
        assert!(out.join(file).is_file(), "{file} missing");
    }
    let scores = fs::read_to_string(out.join("scores.csv")).unwrap();
    let rows = scores.lines().filter(|l| !l.starts_with('#')).count() - 1;
    assert_eq!(rows, 200);
    assert!(scores.starts_with("# name=tiny seed=3\n"));
    let log = fs::read_to_string(out.join("trainlog.csv")).unwrap();
    assert!(!log.contains("NaN") && !log.contains("inf"));
    let metrics = fs::read_to_string(out.join("metrics.txt")).unwrap();
    assert!(metrics.contains("adjusted=true"));
    let raw = fs::read_to_string(out.join("metrics_raw.txt")).unwrap();
    assert!(raw.contains("adjusted=false"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "tiny.conf", TINY);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    full_run(&config, &a);
    full_run(&config, &b);
    for file in [
        "checkpoint.bin",
        "scores.csv",
        "metrics.txt",
        "metrics_raw.txt",
    ] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file} differs"
        );
    }
}

#[test]
fn seed_flag_overrides_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "tiny.conf", TINY);
    let out = tmp.path().join("run");
    let o = out.to_str().unwrap();
    ok(&["train", "--config", &config, "--out", o, "--seed", "11"]);
    let echoed = fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(echoed.contains("seed = 11"));
}

#[test]
fn invalid_config_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "bad.conf",
        &TINY.replace("window = 16", "window = 0"),
    );
    let out = tmp.path().join("run");
    for cmd in ["train", "score", "evaluate", "synth", "gradcheck"] {
        let res = dconad(&[cmd, "--config", &config, "--out", out.to_str().unwrap()]);
        assert!(!res.status.success());
        let err = stderr(&res);
        assert!(err.starts_with("error[config]: "), "{cmd}: {err}");
        assert_eq!(err.trim_end().lines().count(), 1);
    }
    assert!(!out.exists());
}

#[test]
fn parse_errors_name_file_and_line() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "typo.conf", "window = 16\nd_modle = 8\n");
    let res = dconad(&["train", "--config", &config]);
    let err = stderr(&res);
    assert!(
        err.contains("typo.conf") && err.contains("line 2") && err.contains("d_modle"),
        "{err}"
    );
}

#[test]
fn incompatible_checkpoint_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "tiny.conf", TINY);
    let out = tmp.path().join("run");
    let o = out.to_str().unwrap();
    ok(&["train", "--config", &config, "--out", o]);
    let other = write_config(
        tmp.path(),
        "wide.conf",
        &TINY.replace("d_model = 8", "d_model = 12"),
    );
    let res = dconad(&["score", "--config", &other, "--out", o]);
    let err = stderr(&res);
    assert!(
        err.starts_with("error[checkpoint]: ") && err.contains("d_model"),
        "{err}"
    );
    assert!(!out.join("scores.csv").exists());
}

#[test]
fn synth_output_feeds_training_through_data_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "tiny.conf", TINY);
    let data = tmp.path().join("data");
    ok(&[
        "synth",
        "--config",
        &config,
        "--out",
        data.to_str().unwrap(),
    ]);
    for file in ["train.csv", "test.csv", "test_labels.csv", "injections.csv"] {
        assert!(data.join(file).is_file(), "{file} missing");
    }
    let out = tmp.path().join("run");
    let (d, o) = (data.to_str().unwrap(), out.to_str().unwrap());
    ok(&["train", "--config", &config, "--data", d, "--out", o]);
    ok(&["score", "--config", &config, "--data", d, "--out", o]);
    let text = ok(&["evaluate", "--config", &config, "--data", d, "--out", o]);
    assert!(text.contains("f1="));
}

#[test]
fn sweep_emits_one_row_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "tiny.conf", TINY);
    let out = tmp.path().join("run");
    let o = out.to_str().unwrap();
    ok(&[
        "sweep", "--config", &config, "--out", o, "--axis", "heads", "--values", "1,2,4",
    ]);
    let table = fs::read_to_string(out.join("sweep_heads.csv")).unwrap();
    let rows: Vec<&str> = table.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "heads,precision,recall,f1,status");
    assert_eq!(rows.len(), 4);
    assert!(rows[1..].iter().all(|r| r.ends_with(",ok")));
}

#[test]
fn oversized_window_in_sweep_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "tiny.conf", TINY);
    let out = tmp.path().join("run");
    let res = dconad(&[
        "sweep",
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
        "--axis",
        "window",
        "--values",
        "16,5000",
    ]);
    assert!(
        stderr(&res).starts_with("error[config]: "),
        "{}",
        stderr(&res)
    );
    assert!(!out.exists());
}

#[test]
fn gradcheck_passes_on_the_default_config() {
    let text = ok(&["gradcheck"]);
    for group in [
        "attention",
        "feed-forward",
        "layer-norm",
        "bilinear",
        "view-linear",
        "embedding",
    ] {
        assert!(text.contains(group), "{group} missing from\n{text}");
    }
    assert!(!text.contains("FAIL"));
}

#[test]
fn usage_errors_are_one_line() {
    let res = dconad(&["frobnicate"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).starts_with("error[usage]: "));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let res = dconad(&["gradcheck", "--config", path.to_str().unwrap()]);
        assert!(res.status.success(), "{}: {}", path.display(), stderr(&res));
    }
}
