use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use csiaug::dataset;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_csiaug"));
    c.env_remove("CSIAUG_OUT_DIR").env_remove("CSIAUG_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn csiaug")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "csiaug {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn shipped_config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/nlos_10x10.toml")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL_ENV: &str = r#"
room_width = 6.0
room_depth = 6.0
n_rx = 2
n_scatterers = 10
los_enabled = true
carrier_freq_hz = 5.0e9
bandwidth_hz = 40.0e6
n_subcarriers = 16
noise_variance = 1.0e-9
seed = 3

[[aps]]
x = 0.5
y = 0.5
orientation_rad = 0.78

[[aps]]
x = 5.5
y = 5.5
orientation_rad = -2.35
"#;

fn small_env(dir: &Path) -> PathBuf {
    let p = dir.join("env.toml");
    std::fs::write(&p, SMALL_ENV).unwrap();
    p
}

#[test]
fn synth_shipped_config_has_table_dims() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a.csia");
    ok(&["synth", "--config", s(&shipped_config()), "--out", s(&out), "--points", "12"]);
    let ds = dataset::load(&out).unwrap();
    let m = ds.meta();
    assert_eq!((m.n_subcarriers, m.n_ap, m.n_rx, ds.len()), (234, 3, 4, 12));
}

#[test]
fn synth_is_byte_identical_for_same_seed() {
    let dir = tempfile::tempdir().unwrap();
    let env = small_env(dir.path());
    let a = dir.path().join("a.csia");
    let b = dir.path().join("b.csia");
    ok(&["--seed", "9", "synth", "--config", s(&env), "--out", s(&a), "--points", "30"]);
    ok(&["synth", "--config", s(&env), "--out", s(&b), "--points", "30", "--seed", "9", "--threads", "3"]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let c = dir.path().join("c.csia");
    ok(&["synth", "--config", s(&env), "--out", s(&c), "--points", "30", "--seed", "10"]);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn zero_area_room_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let env = dir.path().join("env.toml");
    std::fs::write(&env, SMALL_ENV.replace("room_width = 6.0", "room_width = 0.0")).unwrap();
    let out = run(&["synth", "--config", s(&env), "--out", s(&dir.path().join("x.csia"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("room_width"));
}

#[test]
fn missing_and_corrupt_data_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = run(&["eval", "--model", "nope.csim", "--data", "nope.csia"]);
    assert_eq!(missing.status.code(), Some(3));
    let junk = dir.path().join("junk.csia");
    std::fs::write(&junk, b"not a dataset").unwrap();
    let out = run(&["augment", "--input", s(&junk), "--out", "x.csia", "--method", "pdp2"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["augment", "--input", "a", "--out", "b", "--method", "pdp9"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn out_dir_places_relative_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let env = small_env(dir.path());
    let out_dir = dir.path().join("runs");
    let o = bin()
        .args(["synth", "--config", s(&env), "--out", "d.csia", "--points", "5"])
        .env("CSIAUG_OUT_DIR", &out_dir)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(dataset::load(out_dir.join("d.csia")).unwrap().len(), 5);
}

#[test]
fn augment_train_eval_hard_select_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let env = small_env(dir.path());
    ok(&["synth", "--config", s(&env), "--out", s(&p("train.csia")), "--points", "40"]);
    ok(&["--seed", "4", "synth", "--config", s(&env), "--out", s(&p("test.csia")), "--points", "20"]);

    ok(&["augment", "--input", s(&p("train.csia")), "--out", s(&p("aug.csia")), "--method", "pdp2", "--factor", "3"]);
    let aug = dataset::load(p("aug.csia")).unwrap();
    assert_eq!(aug.len(), 160);
    assert_eq!(aug.count_origin(csiaug::Origin::Measured), 40);

    ok(&["augment", "--input", s(&p("train.csia")), "--out", s(&p("sized.csia")), "--method", "phase-ap", "--size", "55"]);
    assert_eq!(dataset::load(p("sized.csia")).unwrap().len(), 55);

    let trained = ok(&[
        "train",
        "--data",
        s(&p("aug.csia")),
        "--out",
        s(&p("m.csim")),
        "--epochs",
        "5",
        "--hidden-width",
        "16",
        "--learning-rate",
        "1e-3",
    ]);
    assert!(trained.contains("trained on 160 samples"), "{trained}");
    assert!(p("m.trace.json").exists());

    let eval = ok(&[
        "eval",
        "--model",
        s(&p("m.csim")),
        "--data",
        s(&p("test.csia")),
        "--predictions",
        s(&p("pred.csv")),
    ]);
    let rmse: f64 = eval.lines().find_map(|l| l.strip_prefix("rmse_m ")).unwrap().parse().unwrap();
    assert!(rmse.is_finite() && rmse > 0.0);
    let csv = std::fs::read_to_string(p("pred.csv")).unwrap();
    assert_eq!(csv.lines().count(), 21);

    // The trace is for the 40-sample set, so record one on that.
    ok(&["train", "--data", s(&p("train.csia")), "--out", s(&p("base.csim")), "--epochs", "3", "--hidden-width", "8"]);
    ok(&[
        "hard-select",
        "--data",
        s(&p("train.csia")),
        "--trace",
        s(&p("base.trace.json")),
        "--rho",
        "0.25",
        "--method",
        "pdp1",
        "--out",
        s(&p("hard.csia")),
    ]);
    assert_eq!(dataset::load(p("hard.csia")).unwrap().len(), 40 + 10 * 4);
    ok(&[
        "hard-select",
        "--data",
        s(&p("train.csia")),
        "--trace",
        s(&p("base.trace.json")),
        "--rho",
        "0.5",
        "--method",
        "pdp1",
        "--easy",
        "--out",
        s(&p("easy.csia")),
    ]);
    assert_eq!(dataset::load(p("easy.csia")).unwrap().len(), 40 + 20 * 2);

    // A trace from a different dataset is rejected.
    let mismatch = run(&[
        "hard-select",
        "--data",
        s(&p("aug.csia")),
        "--trace",
        s(&p("base.trace.json")),
        "--rho",
        "0.5",
        "--method",
        "pdp1",
        "--out",
        s(&p("bad.csia")),
    ]);
    assert_eq!(mismatch.status.code(), Some(3));
}

fn small_spec(dir: &Path, factors: &str) -> PathBuf {
    let env: String = SMALL_ENV
        .lines()
        .map(|l| l.replace("[[aps]]", "[[source.env.aps]]"))
        .collect::<Vec<_>>()
        .join("\n");
    let text = format!(
        r#"
name = "small"
seed = 2
trials = 2
original_size = 15
methods = ["pdp2", "amp-rx"]
factors = {factors}

[source]
kind = "synth"
train_points = 30
test_points = 20

[learner]
hidden_width = 8

[train]
epochs = 3
learning_rate = 1.0e-3

[source.env]
{env}
"#
    );
    let p = dir.join("spec.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn experiment_writes_reproducible_report() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path(), "[0, 2]");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["experiment", "--spec", s(&spec), "--out-dir", s(&a), "--threads", "1"]);
    ok(&["experiment", "--spec", s(&spec), "--out-dir", s(&b), "--threads", "2"]);
    let ra = std::fs::read_to_string(a.join("report.csv")).unwrap();
    assert_eq!(ra, std::fs::read_to_string(b.join("report.csv")).unwrap());
    // two baselines plus two methods at one factor, over two trials
    assert_eq!(ra.lines().count(), 1 + 2 + 2 * 2);
    let summary = std::fs::read_to_string(a.join("summary.txt")).unwrap();
    assert!(summary.contains("# configuration") && summary.contains("original_size = 15"));
    assert!(!a.join("cells.partial.csv").exists());
}

#[test]
fn experiment_baseline_only_and_hard_easy() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path(), "[0]");
    let out = dir.path().join("base");
    ok(&["experiment", "--spec", s(&spec), "--out-dir", s(&out)]);
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.starts_with("baseline,0,")));

    // hard-easy needs a single method
    let bad = run(&["experiment", "--spec", s(&spec), "--out-dir", s(&out), "--hard-easy", "0.5"]);
    assert_eq!(bad.status.code(), Some(2));
    let text = std::fs::read_to_string(&spec).unwrap().replace(r#"["pdp2", "amp-rx"]"#, r#"["pdp2"]"#);
    std::fs::write(&spec, text).unwrap();
    let he = dir.path().join("he");
    ok(&["experiment", "--spec", s(&spec), "--out-dir", s(&he), "--hard-easy", "0.5,0.25"]);
    let csv = std::fs::read_to_string(he.join("report.csv")).unwrap();
    for tag in ["hard-pdp2,2,", "easy-pdp2,2,", "hard-pdp2,4,", "easy-pdp2,4,"] {
        assert_eq!(csv.matches(tag).count(), 2, "{tag} in {csv}");
    }
}

#[test]
fn transfer_emits_rows_per_mode_and_factor() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let env = small_env(dir.path());
    let target_env = p("target.toml");
    std::fs::write(&target_env, SMALL_ENV.replace("seed = 3", "seed = 4")).unwrap();
    ok(&["synth", "--config", s(&env), "--out", s(&p("src.csia")), "--points", "40"]);
    ok(&["synth", "--config", s(&target_env), "--out", s(&p("tgt.csia")), "--points", "60"]);
    ok(&["train", "--data", s(&p("src.csia")), "--out", s(&p("src.csim")), "--epochs", "3", "--hidden-width", "8"]);
    let out = p("transfer");
    ok(&[
        "transfer",
        "--source-model",
        s(&p("src.csim")),
        "--target",
        s(&p("tgt.csia")),
        "--target-size",
        "20",
        "--factors",
        "0,7,31",
        "--trials",
        "2",
        "--epochs",
        "2",
        "--hidden-width",
        "8",
        "--out-dir",
        s(&out),
    ]);
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    for f in [0, 7, 31] {
        for m in ["target-only", "fine-tune", "freeze"] {
            assert_eq!(csv.matches(&format!("{m},{f},")).count(), 2, "{m} {f}");
        }
    }
    assert_eq!(csv.matches("source-only,0,").count(), 2);
}
