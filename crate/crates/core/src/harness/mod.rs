//! Seeded multi-trial experiments with resumable CSV reports.
//!
//! An experiment spec is a TOML file:
//!
//! ```toml
//! name = "nlos-low-data"
//! seed = 7
//! trials = 5
//! original_size = 100          # measured training samples per trial
//! methods = ["corr", "pdp2"]
//! factors = [0, 7, 31]         # 0 is the unaugmented baseline
//!
//! [source]
//! kind = "synth"               # or "file" with `path`, optional `manifest`
//! train_points = 1000          # pool the trial subsets are drawn from
//! val_points = 0
//! test_points = 500
//! noise = true
//! [source.env]                 # environment schema of `synth`
//! # ...
//!
//! [learner]                    # hidden_layers, hidden_width, dropout_p,
//!                              # feature_extractor_depth
//! [train]                      # epochs, learning_rate, weight_decay, batch_size
//! [augment]                    # p_star_db, delta_star, cell_spacing, snr_db, pool_acf
//! ```
//!
//! Trial `t` draws everything from `seed/0/t`: the subset order from `/0`, the
//! training seed from `/1` and method `m`'s copies at factor `k` from
//! `/2/m/k`. The data pools come from `seed/1`.

mod report;
mod scenarios;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use report::{summarize, GroupSummary, Report, ReportRow, Status};
pub use scenarios::{
    hard_easy_rows, run_hard_easy, run_transfer, transfer_rows, SourceModel, TransferSetup,
};

use crate::augment::{augment_dataset, AugmentParams};
use crate::dataset::{self, split_random, Dataset, SplitManifest};
use crate::error::{Error, Result};
use crate::learner::{evaluate_rmse, train, MlpConfig, TrainConfig};
use crate::rng::RngStream;
use crate::synth::{build_environment, make_dataset, EnvConfig, Layout};
use crate::types::Method;

/// Network shape without the input dimension, which follows from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerSpec {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub dropout_p: f64,
    pub feature_extractor_depth: usize,
}

impl Default for LearnerSpec {
    fn default() -> Self {
        let d = MlpConfig::desk(1);
        Self {
            hidden_layers: d.hidden_layers,
            hidden_width: d.hidden_width,
            dropout_p: d.dropout_p,
            feature_extractor_depth: d.feature_extractor_depth,
        }
    }
}

impl LearnerSpec {
    pub fn config(&self, input_dim: usize) -> MlpConfig {
        MlpConfig {
            input_dim,
            hidden_layers: self.hidden_layers,
            hidden_width: self.hidden_width,
            dropout_p: self.dropout_p,
            feature_extractor_depth: self.feature_extractor_depth,
        }
    }
}

fn default_fractions() -> [f64; 3] {
    [0.7, 0.1, 0.2]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataSource {
    Synth {
        env: EnvConfig,
        train_points: usize,
        #[serde(default)]
        val_points: usize,
        test_points: usize,
        #[serde(default = "yes")]
        noise: bool,
    },
    File {
        path: PathBuf,
        /// Split manifest; a seeded random split by `fractions` otherwise.
        #[serde(default)]
        manifest: Option<PathBuf>,
        #[serde(default = "default_fractions")]
        fractions: [f64; 3],
        #[serde(default)]
        split_seed: u64,
    },
}

fn yes() -> bool {
    true
}

/// Train pool, validation set and test set of an experiment.
#[derive(Debug, Clone)]
pub struct DataSplits {
    pub train_pool: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl DataSource {
    pub fn load(&self, data_rng: &RngStream) -> Result<DataSplits> {
        match self {
            DataSource::Synth {
                env,
                train_points,
                val_points,
                test_points,
                noise,
            } => {
                let env = build_environment(env)?;
                let draw = |k: u64, n: usize| -> Result<Dataset> {
                    if n == 0 {
                        return Dataset::new(env.meta("empty"), Vec::new());
                    }
                    make_dataset(&env, Layout::UniformRandom { n }, *noise, &data_rng.derive(k))
                };
                Ok(DataSplits {
                    train_pool: draw(0, *train_points)?,
                    val: draw(1, *val_points)?,
                    test: draw(2, *test_points)?,
                })
            }
            DataSource::File {
                path,
                manifest,
                fractions,
                split_seed,
            } => {
                let ds = dataset::load(path)?;
                let split = match manifest {
                    Some(p) => SplitManifest::load(p)?,
                    None => split_random(&ds, *fractions, *split_seed)?,
                };
                if split.n_samples() != ds.len() {
                    return Err(Error::InvalidDimension(format!(
                        "split manifest covers {} samples, dataset has {}",
                        split.n_samples(),
                        ds.len()
                    )));
                }
                Ok(DataSplits {
                    train_pool: ds.subset(split.train())?,
                    val: ds.subset(split.val())?,
                    test: ds.subset(split.test())?,
                })
            }
        }
    }
}

fn default_trials() -> usize {
    5
}

fn default_name() -> String {
    "experiment".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub original_size: usize,
    #[serde(default)]
    pub methods: Vec<Method>,
    pub factors: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub source: DataSource,
    #[serde(default)]
    pub learner: LearnerSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub augment: AugmentParams,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.trials == 0 {
            bad.push("trials must be >= 1".to_string());
        }
        if self.original_size == 0 {
            bad.push("original_size must be >= 1".to_string());
        }
        if !self.factors.contains(&0) {
            bad.push("factors must include 0 (the unaugmented baseline)".to_string());
        }
        if self.factors.iter().any(|&f| f > 0) && self.methods.is_empty() {
            bad.push("methods must be non-empty when a factor above 0 is requested".to_string());
        }
        let mut seen = std::collections::BTreeSet::new();
        for m in &self.methods {
            if !seen.insert(*m) {
                bad.push(format!("method {m} listed twice"));
            }
        }
        if let Err(Error::Config(v)) = self.learner.config(1).validate() {
            bad.extend(v);
        }
        if let Err(Error::Config(v)) = self.train.validate() {
            bad.extend(v);
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            what: "experiment spec".into(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse {
            what: "experiment spec".into(),
            message: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// SHA-256 over the canonical TOML, ignoring the output directory.
    pub fn fingerprint(&self) -> Result<String> {
        let mut canon = self.clone();
        canon.out_dir = None;
        let digest = Sha256::digest(canon.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn trial_stream(&self, trial: usize) -> RngStream {
        RngStream::new(self.seed).derive(0).derive(trial as u64)
    }

    pub fn data_stream(&self) -> RngStream {
        RngStream::new(self.seed).derive(1)
    }

    pub fn load_data(&self) -> Result<DataSplits> {
        let data = self.source.load(&self.data_stream())?;
        if data.train_pool.len() < self.original_size {
            return Err(Error::InvalidArgument(format!(
                "original_size {} exceeds the {} available training samples",
                self.original_size,
                data.train_pool.len()
            )));
        }
        if data.test.is_empty() {
            return Err(Error::Empty("the test split is empty".into()));
        }
        Ok(data)
    }
}

/// Where and how wide to run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub threads: usize,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>, threads: usize) -> Self {
        Self {
            out_dir: out_dir.into(),
            threads: threads.max(1),
        }
    }
}

/// Run `f` on a dedicated pool of `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {threads} worker threads: {e}")))?;
    Ok(pool.install(f))
}

/// The first `n` entries of a seeded permutation of the pool. Prefixes of
/// the same permutation nest across sizes.
pub fn subsample(pool: &Dataset, n: usize, rng: &RngStream) -> Result<Dataset> {
    if n > pool.len() {
        return Err(Error::InvalidArgument(format!("cannot draw {n} samples from {}", pool.len())));
    }
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut rng.generator());
    pool.subset(&order[..n])
}

/// One experiment cell: `None` is the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub method: Option<Method>,
    pub factor: usize,
    pub trial: usize,
}

impl Cell {
    pub fn method_name(&self) -> String {
        self.method.map_or_else(|| "baseline".to_string(), |m| m.name().to_string())
    }
}

/// All cells of a spec; the baseline appears once per trial.
pub fn cells(spec: &ExperimentSpec) -> Vec<Cell> {
    let mut out = Vec::new();
    for trial in 0..spec.trials {
        if spec.factors.contains(&0) {
            out.push(Cell {
                method: None,
                factor: 0,
                trial,
            });
        }
        for &m in &spec.methods {
            for &factor in spec.factors.iter().filter(|&&f| f > 0) {
                out.push(Cell {
                    method: Some(m),
                    factor,
                    trial,
                });
            }
        }
    }
    out
}

/// Train and evaluate one cell.
pub fn run_cell(spec: &ExperimentSpec, data: &DataSplits, subset: &Dataset, cell: Cell) -> Result<f64> {
    let trial_rng = spec.trial_stream(cell.trial);
    let train_set = match cell.method {
        None => subset.clone(),
        Some(m) => augment_dataset(
            subset,
            m,
            &spec.augment,
            cell.factor,
            &trial_rng.derive(2).derive(m.tag() as u64).derive(cell.factor as u64),
        )?,
    };
    let mlp = spec.learner.config(data.train_pool.meta().feature_dim());
    let cfg = TrainConfig {
        seed: trial_rng.derive(1).seed_u64(),
        ..spec.train.clone()
    };
    let (model, _) = train(&train_set, &data.val, &mlp, &cfg)?;
    evaluate_rmse(&model, &data.test)
}

/// Run every cell not already recorded in `out_dir`, then write the sorted
/// report and summary. Cells that fail are recorded with their error.
pub fn run_experiment(spec: &ExperimentSpec, opts: &RunOptions) -> Result<Report> {
    spec.validate()?;
    let started = Instant::now();
    let data = spec.load_data()?;
    spec.augment.validate(data.train_pool.meta().n_subcarriers)?;
    let fingerprint = spec.fingerprint()?;
    let mut log = report::PartialLog::open(&opts.out_dir, &fingerprint)?;
    let done = log.completed();
    let todo: Vec<Cell> = cells(spec)
        .into_iter()
        .filter(|c| !done.iter().any(|r| r.matches(c)))
        .collect();

    let subsets = (0..spec.trials)
        .map(|t| subsample(&data.train_pool, spec.original_size, &spec.trial_stream(t).derive(0)))
        .collect::<Result<Vec<_>>>()?;
    let log_ref = std::sync::Mutex::new(&mut log);
    let fresh: Vec<ReportRow> = with_threads(opts.threads, || {
        todo.par_iter()
            .map(|&cell| {
                let row = ReportRow::from_result(&cell, run_cell(spec, &data, &subsets[cell.trial], cell));
                log_ref.lock().expect("log lock").append(&row)?;
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let mut rows = done;
    rows.extend(fresh);
    let report = Report::new(rows);
    report.write(&opts.out_dir, spec, started.elapsed(), opts.threads)?;
    log.finish()?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ExperimentSpec {
        let mut env = EnvConfig::with_perimeter_aps(6.0, 6.0, 2, 1);
        env.n_subcarriers = 8;
        env.n_scatterers = 5;
        ExperimentSpec {
            name: "t".into(),
            seed: 1,
            trials: 5,
            original_size: 10,
            methods: Method::ALL[..9].to_vec(),
            factors: vec![0, 3, 7],
            out_dir: None,
            source: DataSource::Synth {
                env,
                train_points: 20,
                val_points: 0,
                test_points: 10,
                noise: false,
            },
            learner: LearnerSpec::default(),
            train: TrainConfig::default(),
            augment: AugmentParams::default(),
        }
    }

    #[test]
    fn cell_count_dedups_baseline() {
        let s = spec();
        assert_eq!(cells(&s).len(), 5 * 9 * 2 + 5);
        let mut only_base = s.clone();
        only_base.factors = vec![0];
        assert!(cells(&only_base).iter().all(|c| c.method.is_none()));
    }

    #[test]
    fn spec_validation() {
        let mut s = spec();
        s.factors = vec![3];
        s.trials = 0;
        match s.validate() {
            Err(Error::Config(v)) => assert_eq!(v.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn spec_toml_roundtrip_and_fingerprint() {
        let s = spec();
        let back = ExperimentSpec::from_toml(&s.to_toml().unwrap()).unwrap();
        assert_eq!(back, s);
        let mut moved = s.clone();
        moved.out_dir = Some("/elsewhere".into());
        assert_eq!(moved.fingerprint().unwrap(), s.fingerprint().unwrap());
        moved.seed = 2;
        assert_ne!(moved.fingerprint().unwrap(), s.fingerprint().unwrap());
    }

    #[test]
    fn subsets_nest() {
        let s = spec();
        let data = s.load_data().unwrap();
        let rng = s.trial_stream(0).derive(0);
        let small = subsample(&data.train_pool, 5, &rng).unwrap();
        let large = subsample(&data.train_pool, 12, &rng).unwrap();
        assert_eq!(small.samples(), &large.samples()[..5]);
    }
}
