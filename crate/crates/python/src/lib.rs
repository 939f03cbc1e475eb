//! Python bindings: match/mapping matrices, the core numerical operations,
//! datasets, training and the analyses of a trained model.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::Serialize;

use sepll::config::RunConfig;
use sepll::data::{self, DataFormat, SplitName, SplitSet, SynthSpec};
use sepll::encoder::featurize;
use sepll::eval;
use sepll::lf_engine;
use sepll::model::{self, checkpoint::TrainedModel};
use sepll::pipeline::Prepared;
use sepll::rng::{stream_rng, Stream};
use sepll::trainer::{self, TrainHistory};
use sepll::Error;

create_exception!(sepll_py, SepllError, PyException, "Base class for sepll errors.");
create_exception!(sepll_py, ConfigError, SepllError, "Invalid configuration or arguments.");
create_exception!(sepll_py, DataError, SepllError, "Malformed or inconsistent data.");
create_exception!(sepll_py, NumericalError, SepllError, "Non-finite values or divergence.");

fn err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Config(_) => ConfigError::new_err(msg),
        Error::Parse { .. } | Error::Data(_) | Error::Io { .. } => DataError::new_err(msg),
        Error::Numerical(_) | Error::Diverged { .. } => NumericalError::new_err(msg),
    }
}

/// Converts any serializable report into plain Python dicts and lists.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| DataError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn split_name(name: &str) -> PyResult<SplitName> {
    match name {
        "train" => Ok(SplitName::Train),
        "dev" | "valid" => Ok(SplitName::Dev),
        "test" => Ok(SplitName::Test),
        other => Err(ConfigError::new_err(format!("unknown split `{other}`"))),
    }
}

fn data_format(name: &str) -> PyResult<DataFormat> {
    name.parse().map_err(err)
}

/// Sparse binary n×m matrix of LF matches.
#[pyclass(module = "sepll_py", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
pub struct MatchMatrix {
    inner: data::MatchMatrix,
}

#[pymethods]
impl MatchMatrix {
    #[new]
    fn new(n: usize, m: usize, pairs: Vec<(usize, usize)>) -> PyResult<Self> {
        let inner = data::MatchMatrix::from_pairs(n, m, pairs).map_err(err)?;
        Ok(MatchMatrix { inner })
    }

    #[staticmethod]
    fn from_dense(rows: Vec<Vec<bool>>, m: usize) -> PyResult<Self> {
        let inner = data::MatchMatrix::from_dense(&rows, m).map_err(err)?;
        Ok(MatchMatrix { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    fn nnz(&self) -> usize {
        self.inner.nnz()
    }

    fn row(&self, i: usize) -> PyResult<Vec<usize>> {
        if i >= self.inner.n() {
            return Err(pyo3::exceptions::PyIndexError::new_err(i));
        }
        Ok(self.inner.row(i).to_vec())
    }

    fn to_dense(&self) -> Vec<Vec<bool>> {
        self.inner.to_dense()
    }

    /// Text form: an `n m` header, then one `i j` line per match.
    fn to_triplets(&self) -> String {
        self.inner.to_triplet_string()
    }

    fn __repr__(&self) -> String {
        format!("MatchMatrix(n={}, m={}, nnz={})", self.inner.n(), self.inner.m(), self.inner.nnz())
    }
}

/// One-hot assignment of each LF to a class.
#[pyclass(module = "sepll_py", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
pub struct MappingMatrix {
    inner: data::MappingMatrix,
}

#[pymethods]
impl MappingMatrix {
    #[new]
    fn new(class_of: Vec<usize>, c: usize) -> PyResult<Self> {
        let inner = data::MappingMatrix::new(class_of, c).map_err(err)?;
        Ok(MappingMatrix { inner })
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn c(&self) -> usize {
        self.inner.c()
    }

    #[getter]
    fn class_of(&self) -> Vec<usize> {
        self.inner.class_of().to_vec()
    }

    fn to_dense(&self) -> Vec<Vec<u8>> {
        self.inner.to_dense()
    }

    fn __repr__(&self) -> String {
        format!("MappingMatrix(m={}, c={})", self.inner.m(), self.inner.c())
    }
}

#[pyfunction]
fn softmax(logits: Vec<f64>) -> Vec<f64> {
    model::softmax(&logits)
}

/// `task_logits · Tᵀ + lf_logits`.
#[pyfunction]
fn combine(task_logits: Vec<f64>, lf_logits: Vec<f64>, mapping: &MappingMatrix) -> PyResult<Vec<f64>> {
    if task_logits.len() != mapping.inner.c() || lf_logits.len() != mapping.inner.m() {
        return Err(DataError::new_err("logit lengths do not match the mapping"));
    }
    Ok(model::combine(&task_logits, &lf_logits, &mapping.inner))
}

/// Row-normalized targets; unmatched rows are uniform when `include_unlabeled`.
#[pyfunction]
#[pyo3(signature = (matches, include_unlabeled = true))]
fn build_targets(matches: &MatchMatrix, include_unlabeled: bool) -> PyResult<Vec<Vec<f64>>> {
    Ok(data::build_targets(&matches.inner, include_unlabeled).map_err(err)?.rows)
}

#[pyfunction]
fn cross_entropy(q: Vec<Vec<f64>>, p: Vec<Vec<f64>>) -> PyResult<f64> {
    model::ce_loss(&q, &p).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (matches, mapping, seed = 0))]
fn majority_vote(matches: &MatchMatrix, mapping: &MappingMatrix, seed: u64) -> PyResult<Vec<usize>> {
    lf_engine::majority_vote(&matches.inner, &mapping.inner, seed).map_err(err)
}

/// Adds each unmatched same-class sibling of a matched LF with probability `noise_lambda`.
#[pyfunction]
#[pyo3(signature = (matches, mapping, noise_lambda, seed = 0))]
fn inject_noise(matches: &MatchMatrix, mapping: &MappingMatrix, noise_lambda: f64, seed: u64) -> PyResult<MatchMatrix> {
    let mut rng = stream_rng(seed, Stream::Noise);
    let inner = trainer::inject_noise(&matches.inner, &mapping.inner, noise_lambda, &mut rng).map_err(err)?;
    Ok(MatchMatrix { inner })
}

/// Predicted matches `p > k / m` per row of LF probabilities.
#[pyfunction]
fn lf_match_predict(probabilities: Vec<Vec<f64>>, k: usize) -> PyResult<MatchMatrix> {
    let inner = eval::lf_match_predict(&probabilities, k).map_err(err)?;
    Ok(MatchMatrix { inner })
}

/// Train/dev/test texts with gold labels and raw weak labels.
#[pyclass(module = "sepll_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Dataset {
    inner: SplitSet,
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    #[pyo3(signature = (path, format = "wrench-json"))]
    fn load(path: std::path::PathBuf, format: &str) -> PyResult<Self> {
        let inner = data::load_dataset(&path, data_format(format)?).map_err(err)?;
        Ok(Dataset { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (
        seed = 0, classes = 2, lfs_per_class = 3, n_train = 2000, n_dev = 500, n_test = 500,
        lf_accuracy = 0.85, lf_coverage = 0.5
    ))]
    #[allow(clippy::too_many_arguments)]
    fn synth(
        seed: u64,
        classes: usize,
        lfs_per_class: usize,
        n_train: usize,
        n_dev: usize,
        n_test: usize,
        lf_accuracy: f64,
        lf_coverage: f64,
    ) -> PyResult<Self> {
        let spec = SynthSpec {
            classes,
            lfs_per_class,
            n_train,
            n_dev,
            n_test,
            lf_accuracy,
            lf_coverage,
        };
        spec.validate().map_err(err)?;
        let inner = data::synth_dataset(&spec, seed).map_err(err)?;
        Ok(Dataset { inner })
    }

    #[pyo3(signature = (path, format = "wrench-json"))]
    fn save(&self, path: std::path::PathBuf, format: &str) -> PyResult<()> {
        std::fs::create_dir_all(&path).map_err(|e| DataError::new_err(e.to_string()))?;
        data::save_dataset(&self.inner, &path, data_format(format)?).map_err(err)
    }

    #[getter]
    fn class_names(&self) -> Vec<String> {
        self.inner.class_names.clone()
    }

    #[getter]
    fn num_lfs(&self) -> usize {
        self.inner.num_lfs
    }

    fn __len__(&self) -> usize {
        SplitName::ALL.iter().map(|&s| self.inner.split(s).len()).sum()
    }

    fn texts(&self, split: &str) -> PyResult<Vec<String>> {
        Ok(self.inner.split(split_name(split)?).samples.iter().map(|s| s.text.clone()).collect())
    }

    fn gold(&self, split: &str) -> PyResult<Vec<Option<usize>>> {
        Ok(self.inner.split(split_name(split)?).gold())
    }

    /// One-class LFs derived from the weak labels: `({split: MatchMatrix}, MappingMatrix)`.
    fn one_class_lfs<'py>(&self, py: Python<'py>) -> PyResult<(Bound<'py, pyo3::types::PyDict>, MappingMatrix)> {
        let one = data::to_one_class_lfs(&self.inner).map_err(err)?;
        let out = pyo3::types::PyDict::new(py);
        for name in SplitName::ALL {
            out.set_item(name.as_str(), MatchMatrix { inner: one.matches(name).clone() })?;
        }
        Ok((out, MappingMatrix { inner: one.mapping }))
    }

    /// Coverage, conflict and per-LF statistics of the one-class LFs on a split.
    fn stats<'py>(&self, py: Python<'py>, split: &str) -> PyResult<Bound<'py, PyAny>> {
        let name = split_name(split)?;
        let one = data::to_one_class_lfs(&self.inner).map_err(err)?;
        let gold = self.inner.split(name).gold();
        let stats = lf_engine::compute_stats(one.matches(name), &one.mapping, Some(&gold)).map_err(err)?;
        to_py(py, &stats)
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(train={}, dev={}, test={}, classes={}, lfs={})",
            self.inner.train.len(),
            self.inner.dev.len(),
            self.inner.test.len(),
            self.inner.num_classes(),
            self.inner.num_lfs
        )
    }
}

fn parse_config(config: Option<&str>) -> PyResult<RunConfig> {
    match config {
        None => Ok(RunConfig::default()),
        Some(text) if text.trim_end().ends_with(".toml") && !text.contains('\n') => {
            RunConfig::from_file(std::path::Path::new(text.trim())).map_err(err)
        }
        Some(text) => RunConfig::from_toml(text).map_err(err),
    }
}

/// A trained model with its vocabulary and the config that produced it.
#[pyclass(module = "sepll_py")]
pub struct Model {
    inner: TrainedModel,
    config: RunConfig,
    history: Option<TrainHistory>,
}

impl Model {
    fn prepare(&self, dataset: &Dataset) -> PyResult<Prepared> {
        let prepared =
            Prepared::with_vocab(&dataset.inner, &self.config.lfs, self.inner.vocab.clone()).map_err(err)?;
        if prepared.mapping.m() != self.inner.params.num_lfs() {
            return Err(DataError::new_err(format!(
                "LF dimension mismatch: model has {} LFs, data has {}",
                self.inner.params.num_lfs(),
                prepared.mapping.m()
            )));
        }
        if prepared.mapping != self.inner.params.mapping {
            return Err(DataError::new_err("LF-to-class mapping differs from the model"));
        }
        Ok(prepared)
    }
}

#[pymethods]
impl Model {
    /// Trains on `dataset`, or on the config's own data when omitted.
    /// `config` is TOML text or a path ending in `.toml`.
    #[staticmethod]
    #[pyo3(signature = (config = None, dataset = None, seed = None))]
    fn train(py: Python<'_>, config: Option<&str>, dataset: Option<&Dataset>, seed: Option<u64>) -> PyResult<Self> {
        let mut cfg = parse_config(config)?;
        if let Some(s) = seed {
            cfg.train.seed = s;
        }
        let set = match dataset {
            Some(d) => d.inner.clone(),
            None => cfg.load_data().map_err(err)?,
        };
        let run = py.detach(|| -> sepll::Result<(TrainedModel, TrainHistory)> {
            let prepared = Prepared::new(&set, &cfg.lfs, &cfg.encoder)?;
            let inputs = prepared.train_inputs()?;
            let init =
                trainer::init_params(prepared.vocab.len(), &prepared.mapping, &cfg.encoder, &cfg.model, cfg.train.seed)?;
            let (params, history) = trainer::train(&inputs, init, &cfg.train)?;
            let model = TrainedModel {
                params,
                vocab: prepared.vocab.clone(),
                class_names: prepared.class_names.clone(),
                config_echo: cfg.echo(),
            };
            Ok((model, history))
        });
        let (inner, history) = run.map_err(err)?;
        Ok(Model {
            inner,
            config: cfg,
            history: Some(history),
        })
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        let inner = TrainedModel::load(&path).map_err(err)?;
        let config: RunConfig = serde_json::from_str(&inner.config_echo)
            .map_err(|e| DataError::new_err(format!("corrupt checkpoint: config echo: {e}")))?;
        Ok(Model {
            inner,
            config,
            history: None,
        })
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[getter]
    fn class_names(&self) -> Vec<String> {
        self.inner.class_names.clone()
    }

    #[getter]
    fn num_lfs(&self) -> usize {
        self.inner.params.num_lfs()
    }

    #[getter]
    fn mapping(&self) -> MappingMatrix {
        MappingMatrix {
            inner: self.inner.params.mapping.clone(),
        }
    }

    /// Per-epoch records of the training run; `None` for loaded models.
    #[getter]
    fn history<'py>(&self, py: Python<'py>) -> PyResult<Option<Bound<'py, PyAny>>> {
        self.history.as_ref().map(|h| to_py(py, h)).transpose()
    }

    /// Class distribution from the task head for each text.
    fn predict_proba(&self, texts: Vec<String>) -> PyResult<Vec<Vec<f64>>> {
        texts
            .iter()
            .map(|t| {
                let x = featurize(t, &self.inner.vocab);
                Ok(model::forward(&self.inner.params, &x).map_err(err)?.task_probs)
            })
            .collect()
    }

    fn predict(&self, texts: Vec<String>) -> PyResult<Vec<usize>> {
        let features: Vec<_> = texts.iter().map(|t| featurize(t, &self.inner.vocab)).collect();
        trainer::predict_all(&self.inner.params, &features).map_err(err)
    }

    /// Task metrics on one split of `dataset`.
    #[pyo3(signature = (dataset, split = "test"))]
    fn evaluate<'py>(&self, py: Python<'py>, dataset: &Dataset, split: &str) -> PyResult<Bound<'py, PyAny>> {
        let name = split_name(split)?;
        let prepared = self.prepare(dataset)?;
        let s = prepared.split(name);
        let gold = s.require_gold(name).map_err(err)?;
        let preds = trainer::predict_all(&self.inner.params, &s.features).map_err(err)?;
        let t = &self.config.train;
        let mut report =
            eval::task_metrics(&preds, &gold, prepared.num_classes(), t.metric(), t.positive_class).map_err(err)?;
        report.split = name.as_str().to_string();
        to_py(py, &report)
    }

    /// How well each path reproduces the LF matches of a split.
    #[pyo3(signature = (dataset, split = "test", threshold_k = None))]
    fn memorization<'py>(
        &self,
        py: Python<'py>,
        dataset: &Dataset,
        split: &str,
        threshold_k: Option<usize>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let name = split_name(split)?;
        let prepared = self.prepare(dataset)?;
        let s = prepared.split(name);
        let k = threshold_k.unwrap_or(self.config.eval.threshold_k);
        let report = eval::memorization_report(&self.inner.params, &s.features, &s.matches, k).map_err(err)?;
        to_py(py, &report)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(classes={}, lfs={}, vocab={})",
            self.inner.params.num_classes(),
            self.inner.params.num_lfs(),
            self.inner.vocab.len()
        )
    }
}

#[pymodule]
pub fn sepll_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("SepllError", py.get_type::<SepllError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("DataError", py.get_type::<DataError>())?;
    m.add("NumericalError", py.get_type::<NumericalError>())?;
    m.add_class::<MatchMatrix>()?;
    m.add_class::<MappingMatrix>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(softmax, m)?)?;
    m.add_function(wrap_pyfunction!(combine, m)?)?;
    m.add_function(wrap_pyfunction!(build_targets, m)?)?;
    m.add_function(wrap_pyfunction!(cross_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(majority_vote, m)?)?;
    m.add_function(wrap_pyfunction!(inject_noise, m)?)?;
    m.add_function(wrap_pyfunction!(lf_match_predict, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
