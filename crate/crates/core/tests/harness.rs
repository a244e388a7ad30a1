use std::path::Path;

use csiaug::augment::AugmentParams;
use csiaug::harness::{cells, run_experiment, DataSource, ExperimentSpec, LearnerSpec, Report, RunOptions};
use csiaug::learner::TrainConfig;
use csiaug::synth::EnvConfig;
use csiaug::Method;

fn spec() -> ExperimentSpec {
    let mut env = EnvConfig::with_perimeter_aps(6.0, 6.0, 2, 1);
    env.n_subcarriers = 8;
    env.n_scatterers = 6;
    env.noise_variance = 1e-10;
    ExperimentSpec {
        name: "resume".into(),
        seed: 3,
        trials: 2,
        original_size: 12,
        methods: vec![Method::Pdp2, Method::AmpAp, Method::Corr],
        factors: vec![0, 2],
        out_dir: None,
        source: DataSource::Synth {
            env,
            train_points: 30,
            val_points: 6,
            test_points: 15,
            noise: true,
        },
        learner: LearnerSpec {
            hidden_layers: 2,
            hidden_width: 8,
            dropout_p: 0.1,
            feature_extractor_depth: 1,
        },
        train: TrainConfig {
            epochs: 4,
            learning_rate: 1e-3,
            ..TrainConfig::default()
        },
        augment: AugmentParams::default(),
    }
}

fn run(spec: &ExperimentSpec, dir: &Path, threads: usize) -> Report {
    run_experiment(spec, &RunOptions::new(dir, threads)).unwrap()
}

/// Headerless partial-log lines from a report, optionally overwriting the
/// first kept value.
fn partial_lines(report: &Report, keep: impl Fn(usize) -> bool, sentinel: Option<f64>) -> String {
    let body = report.to_csv().unwrap();
    let mut out = String::new();
    for (k, line) in body.lines().skip(1).enumerate() {
        if !keep(k) {
            continue;
        }
        match (k, sentinel) {
            (0, Some(v)) => {
                let f: Vec<&str> = line.split(',').collect();
                out.push_str(&format!("{},{},{},{v},{}\n", f[0], f[1], f[2], f[4]));
            }
            _ => {
                out.push_str(line);
                out.push('\n');
            }
        }
    }
    out
}

#[test]
fn rerun_is_identical_and_counts_cells() {
    let s = spec();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = run(&s, a.path(), 1);
    let second = run(&s, b.path(), 3);
    assert_eq!(first.rows().len(), cells(&s).len());
    assert_eq!(first.rows().len(), 2 + 3 * 2);
    assert_eq!(first.to_csv().unwrap(), second.to_csv().unwrap());
    assert!(first.rows().iter().all(|r| r.is_ok()), "{:?}", first.rows());
    assert_eq!(
        std::fs::read_to_string(a.path().join("report.csv")).unwrap(),
        first.to_csv().unwrap()
    );
}

#[test]
fn resumed_run_reuses_logged_cells() {
    let s = spec();
    let full_dir = tempfile::tempdir().unwrap();
    let full = run(&s, full_dir.path(), 2);

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cells.partial.fingerprint"), s.fingerprint().unwrap()).unwrap();
    std::fs::write(dir.path().join("cells.partial.csv"), partial_lines(&full, |k| k % 2 == 0, None)).unwrap();
    let resumed = run(&s, dir.path(), 2);
    assert_eq!(resumed.to_csv().unwrap(), full.to_csv().unwrap());
    assert!(!dir.path().join("cells.partial.csv").exists());

    // A logged value is taken as is, which shows the cell was not recomputed.
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cells.partial.fingerprint"), s.fingerprint().unwrap()).unwrap();
    std::fs::write(dir.path().join("cells.partial.csv"), partial_lines(&full, |k| k < 3, Some(123.5))).unwrap();
    let resumed = run(&s, dir.path(), 1);
    assert_eq!(resumed.rows()[0].rmse_m, 123.5);
    assert_eq!(&resumed.rows()[1..], &full.rows()[1..]);
}

#[test]
fn stale_log_from_another_spec_is_discarded() {
    let s = spec();
    let full_dir = tempfile::tempdir().unwrap();
    let full = run(&s, full_dir.path(), 1);
    let mut other = s.clone();
    other.seed += 1;
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cells.partial.fingerprint"), other.fingerprint().unwrap()).unwrap();
    std::fs::write(dir.path().join("cells.partial.csv"), partial_lines(&full, |_| true, Some(123.5))).unwrap();
    let fresh = run(&s, dir.path(), 1);
    assert_eq!(fresh.to_csv().unwrap(), full.to_csv().unwrap());
}

#[test]
fn torn_final_line_is_recomputed() {
    let s = spec();
    let full_dir = tempfile::tempdir().unwrap();
    let full = run(&s, full_dir.path(), 1);
    let dir = tempfile::tempdir().unwrap();
    let mut log = partial_lines(&full, |k| k < 4, None);
    log.push_str("pdp2,2,");
    std::fs::write(dir.path().join("cells.partial.fingerprint"), s.fingerprint().unwrap()).unwrap();
    std::fs::write(dir.path().join("cells.partial.csv"), log).unwrap();
    assert_eq!(run(&s, dir.path(), 1).to_csv().unwrap(), full.to_csv().unwrap());
}
