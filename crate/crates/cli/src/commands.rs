use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use csiaug::augment::{augment_dataset, augment_to_size, AugmentParams};
use csiaug::dataset::{self, split_random, SplitManifest};
use csiaug::harness::{
    run_experiment, run_hard_easy, run_transfer, with_threads, ExperimentSpec, LearnerSpec, RunOptions, SourceModel,
    TransferSetup,
};
use csiaug::learner::{self, augment_selected, easiest, evaluate_rmse, rank_difficulty, TrainConfig, TrainTrace};
use csiaug::synth::{build_environment, make_dataset, EnvConfig, Layout};
use csiaug::{Dataset, Error, Result, RngStream};

use crate::{
    AugmentArgs, EvalArgs, ExperimentArgs, Global, HardSelectArgs, LearnArgs, ParamArgs, SynthArgs, TrainArgs,
    TransferArgs,
};

/// The `--params` file.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Settings {
    learner: LearnerSpec,
    train: TrainConfig,
    augment: AugmentParams,
}

impl Settings {
    fn resolve(params: &ParamArgs, learn: Option<&LearnArgs>, seed: Option<u64>) -> Result<Self> {
        let mut s = match &params.file {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::Io {
                    path: p.clone(),
                    source: e,
                })?;
                toml::from_str(&text).map_err(|e| Error::Parse {
                    what: p.display().to_string(),
                    message: e.to_string(),
                })?
            }
            None => Settings::default(),
        };
        let a = &mut s.augment;
        a.p_star_db = params.p_star_db.unwrap_or(a.p_star_db);
        a.delta_star = params.delta_star.or(a.delta_star);
        a.cell_spacing = params.cell_spacing.unwrap_or(a.cell_spacing);
        a.snr_db = params.snr_db.unwrap_or(a.snr_db);
        a.pool_acf |= params.pool_acf;
        if let Some(l) = learn {
            let t = &mut s.train;
            t.epochs = l.epochs.unwrap_or(t.epochs);
            t.learning_rate = l.learning_rate.unwrap_or(t.learning_rate);
            t.batch_size = l.batch_size.unwrap_or(t.batch_size);
            s.learner.hidden_layers = l.hidden_layers.unwrap_or(s.learner.hidden_layers);
            s.learner.hidden_width = l.hidden_width.unwrap_or(s.learner.hidden_width);
        }
        if let Some(seed) = seed {
            s.train.seed = seed;
        }
        s.train.validate()?;
        Ok(s)
    }
}

impl Global {
    fn threads(&self) -> usize {
        self.threads
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }

    /// `path` under `--out-dir` when it is relative.
    fn place(&self, path: &Path) -> Result<PathBuf> {
        let full = match &self.out_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        };
        if let Some(parent) = full.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::Io {
                path: parent.to_path_buf(),
                source: e,
            })?;
        }
        Ok(full)
    }

    fn run<T: Send>(&self, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
        with_threads(self.threads(), f)?
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Numeric(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        what: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn synth(g: &Global, a: SynthArgs) -> Result<()> {
    let cfg = EnvConfig::load(&a.config)?;
    let layout = match a.grid {
        Some(spacing) => Layout::UniformGrid { spacing },
        None => Layout::UniformRandom {
            n: a.points.unwrap_or(1000),
        },
    };
    let out = g.place(&a.out)?;
    let seed = g.seed.unwrap_or(cfg.seed);
    let ds = g.run(|| {
        let env = build_environment(&cfg)?;
        make_dataset(&env, layout, !a.no_noise, &RngStream::new(seed))
    })?;
    dataset::save(&ds, &out)?;
    let m = ds.meta();
    println!(
        "wrote {} samples (M = {}, n_ap = {}, n_rx = {}) to {}",
        ds.len(),
        m.n_subcarriers,
        m.n_ap,
        m.n_rx,
        out.display()
    );
    Ok(())
}

pub fn augment(g: &Global, a: AugmentArgs) -> Result<()> {
    let s = Settings::resolve(&a.params, None, None)?;
    let ds = dataset::load(&a.input)?;
    s.augment.validate(ds.meta().n_subcarriers)?;
    let rng = RngStream::new(g.seed.unwrap_or(0));
    let out = g.place(&a.out)?;
    let aug = g.run(|| match a.size {
        Some(target) => augment_to_size(&ds, a.method, &s.augment, target, &rng),
        None => augment_dataset(&ds, a.method, &s.augment, a.factor, &rng),
    })?;
    dataset::save(&aug, &out)?;
    println!("wrote {} samples ({} measured) to {}", aug.len(), ds.len(), out.display());
    Ok(())
}

/// Train and validation sets from a data file and optional manifest.
fn train_val(data: &Path, split: Option<&Path>, val: Option<&Path>) -> Result<(Dataset, Dataset)> {
    let ds = dataset::load(data)?;
    match (split, val) {
        (Some(p), _) => {
            let m = checked_manifest(p, &ds)?;
            Ok((ds.subset(m.train())?, ds.subset(m.val())?))
        }
        (None, Some(v)) => {
            let val = dataset::load(v)?;
            if !val.meta().same_shape(ds.meta()) {
                return Err(Error::InvalidDimension("validation set shape differs from training set".into()));
            }
            Ok((ds, val))
        }
        (None, None) => {
            let empty = ds.with_samples(Vec::new())?;
            Ok((ds, empty))
        }
    }
}

fn checked_manifest(path: &Path, ds: &Dataset) -> Result<SplitManifest> {
    let m = SplitManifest::load(path)?;
    if m.n_samples() != ds.len() {
        return Err(Error::InvalidDimension(format!(
            "split manifest covers {} samples, dataset has {}",
            m.n_samples(),
            ds.len()
        )));
    }
    Ok(m)
}

pub fn train(g: &Global, a: TrainArgs) -> Result<()> {
    let s = Settings::resolve(&a.params, Some(&a.learn), g.seed)?;
    let (train_set, val_set) = train_val(&a.data, a.split.as_deref(), a.val.as_deref())?;
    let mlp = s.learner.config(train_set.meta().feature_dim());
    let out = g.place(&a.out)?;
    let trace_path = match &a.trace {
        Some(p) => g.place(p)?,
        None => out.with_extension("trace.json"),
    };
    let (model, trace) = g.run(|| learner::train(&train_set, &val_set, &mlp, &s.train))?;
    learner::save_model(&model, &out)?;
    write_json(&trace_path, &trace)?;
    let last = trace.epoch_train_loss.last().copied().unwrap_or(f64::NAN);
    print!("trained on {} samples, final train mse {last:.4} m^2", train_set.len());
    if let Some(best) = trace.best_epoch {
        print!(", best validation epoch {best} (mse {:.4} m^2)", trace.epoch_val_loss[best]);
    }
    println!("\nmodel: {}\ntrace: {}", out.display(), trace_path.display());
    Ok(())
}

pub fn eval(g: &Global, a: EvalArgs) -> Result<()> {
    let model = learner::load_model(&a.model)?;
    let mut ds = dataset::load(&a.data)?;
    if let Some(p) = &a.split {
        let m = checked_manifest(p, &ds)?;
        ds = ds.subset(m.test())?;
    }
    let (rmse, preds) = g.run(|| Ok((evaluate_rmse(&model, &ds)?, model.predict_all(&ds)?)))?;
    if let Some(p) = &a.predictions {
        let path = g.place(p)?;
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Parse {
            what: path.display().to_string(),
            message: e.to_string(),
        })?;
        let io = |e: csv::Error| Error::Parse {
            what: "predictions csv".into(),
            message: e.to_string(),
        };
        w.write_record(["index", "x_m", "y_m", "pred_x_m", "pred_y_m", "error_m"]).map_err(io)?;
        for (i, (s, p)) in ds.samples().iter().zip(&preds).enumerate() {
            let l = s.label();
            w.write_record([
                i.to_string(),
                l.x.to_string(),
                l.y.to_string(),
                p.x.to_string(),
                p.y.to_string(),
                l.distance(p).to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io { path, source: e })?;
    }
    println!("samples {}\nrmse_m {rmse:.6}", ds.len());
    Ok(())
}

pub fn experiment(g: &Global, a: ExperimentArgs) -> Result<()> {
    let mut spec = ExperimentSpec::load(&a.spec)?;
    if let Some(seed) = g.seed {
        spec.seed = seed;
    }
    let out_dir = g
        .out_dir
        .clone()
        .or_else(|| spec.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(&spec.name));
    let threads = g.threads();
    if a.hard_easy.is_empty() {
        let started = Instant::now();
        let report = run_experiment(&spec, &RunOptions::new(&out_dir, threads))?;
        print!("{}", report.summary_text(&spec.name, "", started.elapsed(), threads));
    } else {
        let method = match spec.methods.as_slice() {
            [m] => *m,
            _ => return Err(Error::config("hard-easy runs need exactly one method in the spec")),
        };
        let started = Instant::now();
        let report = g.run(|| run_hard_easy(&spec, &a.hard_easy, method))?;
        report.write_with_echo(&out_dir, &spec.name, &spec.to_toml()?, started.elapsed(), threads)?;
        print!("{}", report.summary_text(&spec.name, "", started.elapsed(), threads));
    }
    println!("\nreport written to {}", out_dir.display());
    Ok(())
}

pub fn hard_select(g: &Global, a: HardSelectArgs) -> Result<()> {
    let s = Settings::resolve(&a.params, None, None)?;
    let ds = dataset::load(&a.data)?;
    let trace: TrainTrace = read_json(&a.trace)?;
    if trace.per_sample_avg_loss.len() != ds.len() {
        return Err(Error::InvalidDimension(format!(
            "trace covers {} samples, dataset has {}",
            trace.per_sample_avg_loss.len(),
            ds.len()
        )));
    }
    let (hard, _) = rank_difficulty(&trace, a.rho)?;
    let picked = if a.easy { easiest(&trace, hard.len()) } else { hard };
    let rng = RngStream::new(g.seed.unwrap_or(0));
    let out = g.place(&a.out)?;
    let aug = g.run(|| augment_selected(&ds, &picked, a.method, a.rho, &s.augment, &rng))?;
    dataset::save(&aug, &out)?;
    println!(
        "augmented {} of {} samples, {} samples written to {}",
        picked.len(),
        ds.len(),
        aug.len(),
        out.display()
    );
    Ok(())
}

pub fn transfer(g: &Global, a: TransferArgs) -> Result<()> {
    let s = Settings::resolve(&a.params, Some(&a.learn), None)?;
    let seed = g.seed.unwrap_or(0);
    let target = dataset::load(&a.target)?;
    let split = match &a.split {
        Some(p) => checked_manifest(p, &target)?,
        None => split_random(&target, [0.7, 0.1, 0.2], seed)?,
    };
    let source = match (&a.source_model, &a.source_data) {
        (Some(p), _) => SourceModel::Pretrained(learner::load_model(p)?),
        (None, Some(p)) => SourceModel::TrainOn(dataset::load(p)?),
        (None, None) => return Err(Error::config("give --source-model or --source-data")),
    };
    let setup = TransferSetup {
        source,
        target_pool: target.subset(split.train())?,
        target_val: target.subset(split.val())?,
        target_test: target.subset(split.test())?,
        target_size: a.target_size,
        factors: a.factors.clone(),
        modes: a.mode.clone(),
        method: a.method,
        augment: s.augment.clone(),
        learner: s.learner.clone(),
        train: s.train.clone(),
        trials: a.trials,
        seed,
    };
    let out_dir = g.out_dir.clone().unwrap_or_else(|| PathBuf::from("runs").join("transfer"));
    let started = Instant::now();
    let report = g.run(|| run_transfer(&setup))?;
    let echo = format!(
        "target = {:?}\nmethod = \"{}\"\ntarget_size = {}\ntrials = {}\nseed = {seed}\n\n{}",
        a.target.display().to_string(),
        a.method,
        a.target_size,
        a.trials,
        toml::to_string(&s).map_err(|e| Error::Numeric(e.to_string()))?
    );
    let threads = g.threads();
    report.write_with_echo(&out_dir, "transfer", &echo, started.elapsed(), threads)?;
    print!("{}", report.summary_text("transfer", "", started.elapsed(), threads));
    println!("\nreport written to {}", out_dir.display());
    Ok(())
}
