//! Python bindings: datasets, synthesis, augmentation, training and
//! experiments.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIOError, PyValueError};
use pyo3::prelude::*;

use csiaug_core as core_lib;
use core_lib::augment::{self, AugmentParams};
use core_lib::harness::{self, ExperimentSpec, LearnerSpec, RunOptions};
use core_lib::learner::{self, TrainConfig};
use core_lib::synth::{self, EnvConfig, Layout};
use core_lib::{Error, Method, Origin, RngStream};

create_exception!(csiaug, NumericError, PyException);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::DegeneratePower(_) | Error::Numeric(_) => NumericError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn method(name: &str) -> PyResult<Method> {
    name.parse().map_err(to_py)
}

/// Ordered CSI samples with position labels.
#[pyclass(module = "csiaug", frozen)]
struct Dataset {
    inner: core_lib::Dataset,
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: core_lib::dataset::load(path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        core_lib::dataset::save(&self.inner, path).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        let m = self.inner.meta();
        format!(
            "Dataset(samples={}, n_subcarriers={}, n_ap={}, n_rx={})",
            self.inner.len(),
            m.n_subcarriers,
            m.n_ap,
            m.n_rx
        )
    }

    #[getter]
    fn n_subcarriers(&self) -> usize {
        self.inner.meta().n_subcarriers
    }

    #[getter]
    fn n_ap(&self) -> usize {
        self.inner.meta().n_ap
    }

    #[getter]
    fn n_rx(&self) -> usize {
        self.inner.meta().n_rx
    }

    #[getter]
    fn bandwidth_hz(&self) -> f64 {
        self.inner.meta().bandwidth_hz
    }

    #[getter]
    fn carrier_hz(&self) -> f64 {
        self.inner.meta().carrier_hz
    }

    fn labels(&self) -> Vec<(f64, f64)> {
        self.inner.labels().iter().map(|l| (l.x, l.y)).collect()
    }

    /// `"measured"` or the augmentation method of each sample.
    fn origins(&self) -> Vec<String> {
        self.inner
            .samples()
            .iter()
            .map(|s| match s.origin() {
                Origin::Measured => "measured".to_string(),
                Origin::Augmented(m) => m.name().to_string(),
            })
            .collect()
    }

    /// Channel of sample `index` as `[ap][rx][subcarrier]`.
    fn channel(&self, index: usize) -> PyResult<Vec<Vec<Vec<Complex64>>>> {
        let s = self
            .inner
            .samples()
            .get(index)
            .ok_or_else(|| PyValueError::new_err(format!("index {index} out of range")))?;
        let t = s.tensor();
        Ok((0..t.n_ap())
            .map(|ap| (0..t.n_rx()).map(|rx| t.link(ap, rx).as_slice().to_vec()).collect())
            .collect())
    }

    /// Real-then-imaginary feature vector of every sample.
    fn features(&self) -> Vec<Vec<f64>> {
        self.inner.samples().iter().map(learner::vectorize).collect()
    }

    fn subset(&self, indices: Vec<usize>) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.subset(&indices).map_err(to_py)?,
        })
    }

    /// The samples followed by `factor` augmented copies of each.
    #[pyo3(signature = (method_name, factor, seed=0, snr_db=None, delta_star=None, p_star_db=None, cell_spacing=None))]
    #[allow(clippy::too_many_arguments)]
    fn augment(
        &self,
        py: Python<'_>,
        method_name: &str,
        factor: usize,
        seed: u64,
        snr_db: Option<f64>,
        delta_star: Option<usize>,
        p_star_db: Option<f64>,
        cell_spacing: Option<f64>,
    ) -> PyResult<Self> {
        let m = method(method_name)?;
        let mut params = AugmentParams::default();
        params.snr_db = snr_db.unwrap_or(params.snr_db);
        params.delta_star = delta_star;
        params.p_star_db = p_star_db.unwrap_or(params.p_star_db);
        params.cell_spacing = cell_spacing.unwrap_or(params.cell_spacing);
        let ds = &self.inner;
        let out = py
            .detach(|| augment::augment_dataset(ds, m, &params, factor, &RngStream::new(seed)))
            .map_err(to_py)?;
        Ok(Self { inner: out })
    }
}

/// Sample a dataset from an environment given as TOML text.
#[pyfunction]
#[pyo3(signature = (env_toml, points=None, grid_spacing=None, seed=None, noise=true))]
fn synthesize(
    py: Python<'_>,
    env_toml: &str,
    points: Option<usize>,
    grid_spacing: Option<f64>,
    seed: Option<u64>,
    noise: bool,
) -> PyResult<Dataset> {
    let cfg = EnvConfig::from_toml(env_toml).map_err(to_py)?;
    let layout = match grid_spacing {
        Some(spacing) => Layout::UniformGrid { spacing },
        None => Layout::UniformRandom {
            n: points.unwrap_or(1000),
        },
    };
    let seed = seed.unwrap_or(cfg.seed);
    let ds = py
        .detach(|| {
            let env = synth::build_environment(&cfg)?;
            synth::make_dataset(&env, layout, noise, &RngStream::new(seed))
        })
        .map_err(to_py)?;
    Ok(Dataset { inner: ds })
}

/// Environment TOML for a room with APs spread along its walls.
#[pyfunction]
#[pyo3(signature = (width, depth, n_ap, n_rx=1, n_subcarriers=64, los=false, seed=1))]
fn perimeter_environment(
    width: f64,
    depth: f64,
    n_ap: usize,
    n_rx: usize,
    n_subcarriers: usize,
    los: bool,
    seed: u64,
) -> PyResult<String> {
    let mut cfg = EnvConfig::with_perimeter_aps(width, depth, n_ap, n_rx);
    cfg.n_subcarriers = n_subcarriers;
    cfg.los_enabled = los;
    cfg.seed = seed;
    cfg.validate().map_err(to_py)?;
    cfg.to_toml().map_err(to_py)
}

#[pyclass(module = "csiaug", frozen)]
struct Model {
    inner: learner::Model,
}

#[pymethods]
impl Model {
    /// Train a fresh network; returns the model and its per-epoch losses.
    #[staticmethod]
    #[pyo3(signature = (train, val=None, epochs=60, learning_rate=1e-4, hidden_layers=3, hidden_width=128, dropout_p=0.2, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        py: Python<'_>,
        train: &Dataset,
        val: Option<&Dataset>,
        epochs: usize,
        learning_rate: f64,
        hidden_layers: usize,
        hidden_width: usize,
        dropout_p: f64,
        seed: u64,
    ) -> PyResult<(Self, Vec<f64>)> {
        let spec = LearnerSpec {
            hidden_layers,
            hidden_width,
            dropout_p,
            feature_extractor_depth: 2.min(hidden_layers),
        };
        let cfg = TrainConfig {
            epochs,
            learning_rate,
            seed,
            ..TrainConfig::default()
        };
        let tr = &train.inner;
        let empty;
        let va = match val {
            Some(v) => &v.inner,
            None => {
                empty = tr.with_samples(Vec::new()).map_err(to_py)?;
                &empty
            }
        };
        let mlp = spec.config(tr.meta().feature_dim());
        let (model, trace) = py.detach(|| learner::train(tr, va, &mlp, &cfg)).map_err(to_py)?;
        Ok((Self { inner: model }, trace.epoch_train_loss))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: learner::load_model(path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        learner::save_model(&self.inner, path).map_err(to_py)
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.inner.params().len()
    }

    fn predict(&self, py: Python<'_>, data: &Dataset) -> PyResult<Vec<(f64, f64)>> {
        let preds = py.detach(|| self.inner.predict_all(&data.inner)).map_err(to_py)?;
        Ok(preds.iter().map(|p| (p.x, p.y)).collect())
    }

    /// Root mean squared position error in metres.
    fn rmse(&self, py: Python<'_>, data: &Dataset) -> PyResult<f64> {
        py.detach(|| learner::evaluate_rmse(&self.inner, &data.inner)).map_err(to_py)
    }
}

#[pyfunction]
fn dft_forward(h: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
    core_lib::dft::dft_forward(&h).map_err(to_py)
}

#[pyfunction]
fn dft_inverse(spectrum: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
    core_lib::dft::dft_inverse(&spectrum).map_err(to_py)
}

/// Truncated-autocorrelation covariance of one link: `(r0, recon_error)`.
#[pyfunction]
fn covariance_summary(h: Vec<Complex64>, delta_star: usize) -> PyResult<(f64, f64)> {
    let h = core_lib::ComplexVec::new(h).map_err(to_py)?;
    let acf = augment::estimate_acf(&h, delta_star).map_err(to_py)?;
    let cov = augment::build_covariance(&acf).map_err(to_py)?;
    Ok((cov.r0(), cov.recon_error()))
}

/// Run an experiment spec file; returns `(method, factor, trial, rmse_m)` rows.
#[pyfunction]
#[pyo3(signature = (spec_path, out_dir, threads=1))]
fn run_experiment(
    py: Python<'_>,
    spec_path: PathBuf,
    out_dir: PathBuf,
    threads: usize,
) -> PyResult<Vec<(String, usize, usize, f64)>> {
    let spec = ExperimentSpec::load(spec_path).map_err(to_py)?;
    let report = py
        .detach(|| harness::run_experiment(&spec, &RunOptions::new(out_dir, threads)))
        .map_err(to_py)?;
    Ok(report
        .rows()
        .iter()
        .map(|r| (r.method.clone(), r.factor, r.trial, r.rmse_m))
        .collect())
}

#[pyfunction]
fn methods() -> Vec<&'static str> {
    Method::ALL.iter().map(|m| m.name()).collect()
}

#[pymodule(name = "csiaug")]
fn csiaug_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(perimeter_environment, m)?)?;
    m.add_function(wrap_pyfunction!(dft_forward, m)?)?;
    m.add_function(wrap_pyfunction!(dft_inverse, m)?)?;
    m.add_function(wrap_pyfunction!(covariance_summary, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(methods, m)?)?;
    m.add("NumericError", m.py().get_type::<NumericError>())?;
    Ok(())
}
