//! Python bindings: `import aldasel`.

// pyo3 0.22 macro expansion trips this lint on every `PyResult` return.
#![allow(clippy::useless_conversion)]

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use aldasel_core::cluster::{self, KMeansConfig};
use aldasel_core::config::PipelineConfig;
use aldasel_core::corpus::{self, Manifest, Role};
use aldasel_core::docmodel::{TermEntry, WeightedDocument};
use aldasel_core::lda::{self, InferOptions, LdaModel, PosteriorVector};
use aldasel_core::pipeline::{self, StageStatus};
use aldasel_core::quantizer::{FrameSet, GmmConfig, GmmModel};
use aldasel_core::report::{self, ComparisonRow, CompositionReport};
use aldasel_core::selector::{self, SelectionConfig, SelectionResult};
use aldasel_core::synth::{self, SynthSpec};
use aldasel_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        e if e.is_validation() => PyValueError::new_err(e.to_string()),
        Error::InvalidInput(_) | Error::Parse { .. } => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn wrap<T>(r: aldasel_core::Result<T>) -> PyResult<T> {
    r.map_err(py_err)
}

fn to_posteriors(items: Vec<(String, Vec<f64>)>) -> Vec<PosteriorVector> {
    items
        .into_iter()
        .map(|(utt_id, gamma)| PosteriorVector { utt_id, gamma })
        .collect()
}

fn from_posteriors(p: Vec<PosteriorVector>) -> Vec<(String, Vec<f64>)> {
    p.into_iter().map(|v| (v.utt_id, v.gamma)).collect()
}

/// Utterance list with durations and domain tags.
#[pyclass(name = "Manifest", module = "aldasel")]
#[derive(Clone)]
struct PyManifest {
    inner: Manifest,
}

#[pymethods]
impl PyManifest {
    /// Reads a manifest TSV; `validate` also checks every feature header.
    #[staticmethod]
    #[pyo3(signature = (path, validate = true))]
    fn read(path: PathBuf, validate: bool) -> PyResult<Self> {
        Ok(Self { inner: wrap(corpus::read_manifest(&path, validate))? })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        wrap(corpus::write_manifest(&self.inner, &path))
    }

    #[getter]
    fn role(&self) -> String {
        self.inner.role.to_string()
    }

    #[getter]
    fn fps(&self) -> f64 {
        self.inner.fps
    }

    fn ids(&self) -> Vec<String> {
        self.inner.utterances.iter().map(|u| u.id.clone()).collect()
    }

    /// Duration in seconds per utterance.
    fn durations(&self) -> Vec<f64> {
        self.inner.utterances.iter().map(|u| u.duration_s).collect()
    }

    fn domains(&self) -> Vec<String> {
        self.inner.utterances.iter().map(|u| u.domain_tag.clone()).collect()
    }

    fn total_hours(&self) -> f64 {
        self.inner.total_hours()
    }

    /// Frames of one utterance as a list of rows.
    fn features(&self, utt_id: &str) -> PyResult<Vec<Vec<f32>>> {
        let u = self
            .inner
            .get(utt_id)
            .ok_or_else(|| PyValueError::new_err(format!("{utt_id} is not in the manifest")))?;
        let m = wrap(self.inner.read_features(u))?;
        Ok(m.rows().map(<[f32]>::to_vec).collect())
    }

    fn subset(&self, ids: Vec<String>) -> Self {
        Self { inner: self.inner.subset(ids.iter().map(String::as_str)) }
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Manifest(role={}, utterances={}, hours={:.3})",
            self.inner.role,
            self.inner.len(),
            self.inner.total_hours()
        )
    }
}

/// Diagonal-covariance GMM used as the acoustic quantizer.
#[pyclass(name = "GmmModel", module = "aldasel")]
#[derive(Clone)]
struct PyGmm {
    inner: GmmModel,
}

#[pymethods]
impl PyGmm {
    #[new]
    fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: wrap(GmmModel::new(weights, means, variances))? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: wrap(GmmModel::load(&path))? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        wrap(self.inner.save(&path))
    }

    #[getter]
    fn n_components(&self) -> usize {
        self.inner.n_components()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    #[getter]
    fn means(&self) -> Vec<Vec<f64>> {
        (0..self.inner.n_components()).map(|k| self.inner.mean(k).to_vec()).collect()
    }

    #[getter]
    fn variances(&self) -> Vec<Vec<f64>> {
        (0..self.inner.n_components()).map(|k| self.inner.variance(k).to_vec()).collect()
    }

    fn log_likelihood(&self, frame: Vec<f64>) -> PyResult<f64> {
        wrap(self.inner.log_likelihood(&frame))
    }

    fn posteriors(&self, frame: Vec<f64>) -> PyResult<Vec<f64>> {
        wrap(self.inner.posteriors(&frame))
    }

    fn most_likely(&self, frame: Vec<f64>) -> PyResult<u32> {
        wrap(self.inner.most_likely(&frame))
    }

    /// Acoustic word sequence of one feature file.
    fn quantize_file(&self, path: PathBuf) -> PyResult<Vec<u32>> {
        let m = wrap(corpus::read_feature_file(&path))?;
        Ok(wrap(self.inner.quantize(&m, ""))?.tokens)
    }

    fn __repr__(&self) -> String {
        format!("GmmModel(n_components={}, dim={})", self.inner.n_components(), self.inner.dim())
    }
}

/// Trains a GMM on frames (a list of equal-length rows).
#[pyfunction]
#[pyo3(signature = (frames, n_components, seed = 0, max_iters = 50, tol = 1e-5))]
fn train_gmm(frames: Vec<Vec<f32>>, n_components: usize, seed: u64, max_iters: usize, tol: f64) -> PyResult<(PyGmm, Vec<f64>)> {
    let dim = frames.first().map_or(0, Vec::len);
    let mut set = FrameSet::new(dim);
    for f in &frames {
        wrap(set.push(f))?;
    }
    let cfg = GmmConfig { seed, max_iters, tol, ..Default::default() };
    let fit = wrap(aldasel_core::quantizer::train_gmm(&set, n_components, &cfg))?;
    Ok((PyGmm { inner: fit.model }, fit.log_likelihoods))
}

fn weighted_doc(terms: Vec<(u32, u32, f64)>) -> PyResult<WeightedDocument> {
    wrap(WeightedDocument::from_entries(
        "",
        terms.into_iter().map(|(term, count, weight)| TermEntry { term, count, weight }).collect(),
    ))
}

/// Topic model over acoustic words.
#[pyclass(name = "LdaModel", module = "aldasel")]
#[derive(Clone)]
struct PyLda {
    inner: LdaModel,
}

#[pymethods]
impl PyLda {
    /// `topics` holds one probability row per topic.
    #[new]
    fn new(alpha: Vec<f64>, topics: Vec<Vec<f64>>) -> PyResult<Self> {
        let v = topics.first().map_or(0, Vec::len);
        let log_beta = topics.iter().flatten().map(|p| p.ln()).collect();
        Ok(Self { inner: wrap(LdaModel::new(alpha, log_beta, v))? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: wrap(LdaModel::load(&path))? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        wrap(self.inner.save(&path))
    }

    #[getter]
    fn n_topics(&self) -> usize {
        self.inner.n_topics()
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }

    #[getter]
    fn alpha(&self) -> Vec<f64> {
        self.inner.alpha().to_vec()
    }

    /// Term probabilities of topic `k`.
    fn topic(&self, k: usize) -> PyResult<Vec<f64>> {
        if k >= self.inner.n_topics() {
            return Err(PyValueError::new_err(format!("topic {k} out of range")));
        }
        Ok(self.inner.topic(k).iter().map(|l| l.exp()).collect())
    }

    /// Dirichlet posterior of a raw token sequence.
    #[pyo3(signature = (tokens, tol = 1e-4, max_iters = 100))]
    fn infer(&self, tokens: Vec<u32>, tol: f64, max_iters: usize) -> PyResult<Vec<f64>> {
        let doc = WeightedDocument::from_counts("", &tokens);
        Ok(wrap(lda::infer_document(&self.inner, &doc, InferOptions { tol, max_iters }))?.gamma)
    }

    /// Dirichlet posterior of `(term, count, weight)` entries.
    #[pyo3(signature = (terms, tol = 1e-4, max_iters = 100))]
    fn infer_weighted(&self, terms: Vec<(u32, u32, f64)>, tol: f64, max_iters: usize) -> PyResult<Vec<f64>> {
        let doc = weighted_doc(terms)?;
        Ok(wrap(lda::infer_document(&self.inner, &doc, InferOptions { tol, max_iters }))?.gamma)
    }

    fn __repr__(&self) -> String {
        format!("LdaModel(n_topics={}, vocab_size={})", self.inner.n_topics(), self.inner.vocab_size())
    }
}

/// Ordered selection with the pass and centroid that picked each utterance.
#[pyclass(name = "Selection", module = "aldasel")]
#[derive(Clone)]
struct PySelection {
    inner: SelectionResult,
}

#[pymethods]
impl PySelection {
    /// Reads an audit TSV written by `write_audit`.
    #[staticmethod]
    fn read_audit(path: PathBuf, pool: &PyManifest) -> PyResult<Self> {
        Ok(Self { inner: wrap(selector::read_audit(&path, &pool.inner))? })
    }

    fn write_audit(&self, path: PathBuf) -> PyResult<()> {
        wrap(selector::write_audit(&self.inner, &path))
    }

    fn write_manifest(&self, path: PathBuf, pool: &PyManifest) -> PyResult<()> {
        wrap(selector::write_selection_manifest(&self.inner, &pool.inner, &path))
    }

    fn ids(&self) -> Vec<String> {
        self.inner.ids().map(str::to_string).collect()
    }

    /// `(utt_id, centroid, distance, pass)` per selected utterance.
    fn entries(&self) -> Vec<(String, Option<usize>, Option<f64>, usize)> {
        self.inner
            .selected
            .iter()
            .map(|s| (s.utt_id.clone(), s.centroid, s.distance, s.pass_index))
            .collect()
    }

    #[getter]
    fn total_hours(&self) -> f64 {
        self.inner.total_hours
    }

    #[getter]
    fn passes(&self) -> usize {
        self.inner.passes
    }

    #[getter]
    fn stop(&self) -> &'static str {
        self.inner.stop.as_str()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Selection(utterances={}, hours={:.3}, passes={}, stop={})",
            self.inner.len(),
            self.inner.total_hours,
            self.inner.passes,
            self.inner.stop
        )
    }
}

/// Greedy threshold selection. `posteriors` is a list of `(utt_id, gamma)`.
#[pyfunction]
#[pyo3(signature = (posteriors, pool, centroids, lam, max_hours = None))]
fn select(
    posteriors: Vec<(String, Vec<f64>)>,
    pool: &PyManifest,
    centroids: Vec<Vec<f64>>,
    lam: f64,
    max_hours: Option<f64>,
) -> PyResult<PySelection> {
    let cfg = SelectionConfig { lambda: lam, max_hours };
    let posts = to_posteriors(posteriors);
    Ok(PySelection { inner: wrap(selector::select(&posts, &pool.inner, &centroids, &cfg))? })
}

#[pyfunction]
fn union_combine(a: &PySelection, b: &PySelection, pool: &PyManifest) -> PyResult<PySelection> {
    Ok(PySelection { inner: wrap(selector::union_combine(&a.inner, &b.inner, &pool.inner))? })
}

#[pyfunction]
fn random_select(pool: &PyManifest, budget_hours: f64, seed: u64) -> PyResult<PySelection> {
    Ok(PySelection { inner: wrap(selector::random_select(&pool.inner, budget_hours, seed))? })
}

#[pyfunction]
fn cosine_distance(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    wrap(selector::cosine_distance(&a, &b))
}

/// Returns `(centroids, assignments, inertia)`.
#[pyfunction]
#[pyo3(signature = (vectors, c, seed = 0, max_iters = 100, spherical = false))]
fn kmeans(vectors: Vec<Vec<f64>>, c: usize, seed: u64, max_iters: usize, spherical: bool) -> PyResult<(Vec<Vec<f64>>, Vec<usize>, f64)> {
    let cfg = KMeansConfig { seed, max_iters, spherical };
    let set = wrap(cluster::kmeans(&vectors, c, &cfg))?;
    Ok((set.centroids, set.assignments, set.inertia))
}

#[pyfunction]
fn read_posteriors(path: PathBuf) -> PyResult<Vec<(String, Vec<f64>)>> {
    Ok(from_posteriors(wrap(lda::read_posterior_file(&path))?))
}

#[pyfunction]
fn write_posteriors(posteriors: Vec<(String, Vec<f64>)>, path: PathBuf) -> PyResult<()> {
    wrap(lda::write_posterior_file(&to_posteriors(posteriors), &path))
}

#[pyfunction]
fn read_centroids(path: PathBuf) -> PyResult<Vec<Vec<f64>>> {
    wrap(cluster::read_centroids(&path))
}

/// Per-domain composition of a selection.
#[pyclass(name = "Report", module = "aldasel")]
#[derive(Clone)]
struct PyReport {
    inner: CompositionReport,
}

#[pymethods]
impl PyReport {
    /// `(domain, selected_hours, pool_hours, percent)`, largest first.
    #[getter]
    fn rows(&self) -> Vec<(String, f64, f64, f64)> {
        self.inner
            .rows
            .iter()
            .map(|r| (r.domain.clone(), r.selected_hours, r.pool_hours, r.percent))
            .collect()
    }

    #[getter]
    fn total_selected_hours(&self) -> f64 {
        self.inner.total_selected_hours
    }

    #[getter]
    fn total_pool_hours(&self) -> f64 {
        self.inner.total_pool_hours
    }

    fn render(&self) -> String {
        self.inner.render()
    }

    fn to_tsv(&self) -> String {
        self.inner.to_tsv()
    }

    fn __str__(&self) -> String {
        self.inner.render()
    }
}

#[pyfunction(name = "report")]
fn report_fn(selection: &PySelection, pool: &PyManifest) -> PyResult<PyReport> {
    Ok(PyReport { inner: wrap(report::report(&selection.inner, &pool.inner))? })
}

fn comparison_dict<'py>(py: Python<'py>, r: &ComparisonRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new_bound(py);
    d.set_item("name", &r.name)?;
    d.set_item("hours", r.hours)?;
    d.set_item("recall", r.recall)?;
    d.set_item("precision", r.precision)?;
    d.set_item("enrichment", r.enrichment)?;
    Ok(d)
}

/// Target-domain recall, precision and enrichment of named selections.
#[pyfunction]
fn compare<'py>(
    py: Python<'py>,
    selections: Vec<(String, PySelection)>,
    pool: &PyManifest,
    target_domain: &str,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let sels: Vec<(String, SelectionResult)> = selections.into_iter().map(|(n, s)| (n, s.inner)).collect();
    let rows = wrap(report::compare(&sels, &pool.inner, target_domain))?;
    rows.iter().map(|r| comparison_dict(py, r)).collect()
}

/// Pipeline configuration.
#[pyclass(name = "Config", module = "aldasel")]
#[derive(Clone)]
struct PyConfig {
    inner: PipelineConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    fn new() -> Self {
        Self { inner: PipelineConfig::default() }
    }

    /// Loads a TOML file; relative paths are taken relative to it.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: wrap(PipelineConfig::load(&path))? })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self { inner: wrap(PipelineConfig::from_toml(text))? })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    fn validate(&self) -> PyResult<()> {
        wrap(self.inner.validate())
    }

    #[getter]
    fn get_seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    #[getter]
    fn get_work_dir(&self) -> PathBuf {
        self.inner.paths.work_dir.clone()
    }

    #[setter]
    fn set_work_dir(&mut self, dir: PathBuf) {
        self.inner.paths.work_dir = dir;
    }

    #[getter]
    fn get_lam(&self) -> f64 {
        self.inner.selection.lambda
    }

    #[setter]
    fn set_lam(&mut self, lam: f64) {
        self.inner.selection.lambda = lam;
    }

    fn __repr__(&self) -> String {
        self.inner.to_toml()
    }
}

fn status_str(s: StageStatus) -> &'static str {
    match s {
        StageStatus::Ran => "ran",
        StageStatus::Cached => "cached",
        StageStatus::Refreshed => "refreshed",
    }
}

/// Result of a full pipeline run.
#[pyclass(name = "Outcome", module = "aldasel")]
struct PyOutcome {
    #[pyo3(get)]
    selection: PySelection,
    #[pyo3(get)]
    report: PyReport,
    /// `(stage, status)` pairs in execution order.
    #[pyo3(get)]
    stages: Vec<(String, &'static str)>,
    comparison: Option<Vec<ComparisonRow>>,
    #[pyo3(get)]
    work_dir: PathBuf,
}

#[pymethods]
impl PyOutcome {
    #[getter]
    fn comparison<'py>(&self, py: Python<'py>) -> PyResult<Option<Vec<Bound<'py, PyDict>>>> {
        self.comparison
            .as_ref()
            .map(|rows| rows.iter().map(|r| comparison_dict(py, r)).collect())
            .transpose()
    }
}

/// Runs every stage, reusing cached artifacts in the work directory.
#[pyfunction]
fn run_pipeline(py: Python<'_>, config: &PyConfig) -> PyResult<PyOutcome> {
    let cfg = config.inner.clone();
    let out = wrap(py.allow_threads(|| pipeline::run_pipeline(&cfg)))?;
    Ok(PyOutcome {
        selection: PySelection { inner: out.selection },
        report: PyReport { inner: out.report },
        stages: out.stages.into_iter().map(|s| (s.name, status_str(s.status))).collect(),
        comparison: out.comparison,
        work_dir: cfg.paths.work_dir,
    })
}

/// Selection and report for each threshold against cached posteriors.
#[pyfunction]
fn sweep_lambda(py: Python<'_>, config: &PyConfig, lambdas: Vec<f64>) -> PyResult<Vec<(f64, PySelection, PyReport)>> {
    let cfg = config.inner.clone();
    let points = wrap(py.allow_threads(|| pipeline::sweep_lambda(&cfg, &lambdas)))?;
    Ok(points
        .into_iter()
        .map(|p| (p.lambda, PySelection { inner: p.selection }, PyReport { inner: p.report }))
        .collect())
}

/// Writes a synthetic corpus of random domain mixtures under `out_dir`.
#[pyfunction]
#[pyo3(signature = (
    out_dir, domains, utterances = 100, components = 4, dim = 13,
    min_frames = 100, max_frames = 300, spread = 1.0, role = "pool",
    id_prefix = "", spec_seed = 0, seed = 0,
))]
#[allow(clippy::too_many_arguments)]
fn synthesize(
    py: Python<'_>,
    out_dir: PathBuf,
    domains: Vec<String>,
    utterances: usize,
    components: usize,
    dim: usize,
    min_frames: usize,
    max_frames: usize,
    spread: f64,
    role: &str,
    id_prefix: &str,
    spec_seed: u64,
    seed: u64,
) -> PyResult<PyManifest> {
    let role: Role = wrap(role.parse())?;
    let names: Vec<&str> = domains.iter().map(String::as_str).collect();
    let mut spec = SynthSpec::preset(&names, utterances, components, dim, (min_frames, max_frames), spread, spec_seed);
    spec.id_prefix = id_prefix.to_string();
    let m = wrap(py.allow_threads(|| synth::generate_synthetic_corpus(&spec, seed, &out_dir, role)))?;
    Ok(PyManifest { inner: m })
}

#[pymodule]
fn aldasel(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyManifest>()?;
    m.add_class::<PyGmm>()?;
    m.add_class::<PyLda>()?;
    m.add_class::<PySelection>()?;
    m.add_class::<PyReport>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyOutcome>()?;
    m.add_function(wrap_pyfunction!(train_gmm, m)?)?;
    m.add_function(wrap_pyfunction!(select, m)?)?;
    m.add_function(wrap_pyfunction!(union_combine, m)?)?;
    m.add_function(wrap_pyfunction!(random_select, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_distance, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(read_posteriors, m)?)?;
    m.add_function(wrap_pyfunction!(write_posteriors, m)?)?;
    m.add_function(wrap_pyfunction!(read_centroids, m)?)?;
    m.add_function(wrap_pyfunction!(report_fn, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    Ok(())
}
