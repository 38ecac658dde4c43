//! Pipeline configuration, read from a sectioned TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cluster::{self, KMeansConfig};
use crate::docmodel::{self, TfMode};
use crate::error::{Error, Result};
use crate::lda::{self, InferOptions, LdaConfig};
use crate::quantizer::{self, GmmConfig};
use crate::selector::{self, SelectionConfig};
use crate::util;

/// Which utterances a stage learns from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Dev,
    Pool,
    All,
}

impl DataSource {
    pub fn uses_dev(self) -> bool {
        matches!(self, DataSource::Dev | DataSource::All)
    }

    pub fn uses_pool(self) -> bool {
        matches!(self, DataSource::Pool | DataSource::All)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub pool_manifest: PathBuf,
    pub dev_manifest: PathBuf,
    pub work_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            pool_manifest: "pool.tsv".into(),
            dev_manifest: "dev.tsv".into(),
            work_dir: "work".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantizerSection {
    /// Acoustic vocabulary size N.
    pub n_components: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub init_subsample: usize,
    pub var_floor_ratio: f64,
    /// Frames sampled uniformly for GMM training.
    pub max_frames: usize,
    pub train_on: DataSource,
}

impl Default for QuantizerSection {
    fn default() -> Self {
        let g = GmmConfig::default();
        Self {
            n_components: quantizer::DEFAULT_COMPONENTS,
            max_iters: g.max_iters,
            tol: g.tol,
            init_subsample: g.init_subsample,
            var_floor_ratio: g.var_floor_ratio,
            max_frames: 1_000_000,
            train_on: DataSource::All,
        }
    }
}

impl QuantizerSection {
    pub fn gmm_config(&self, seed: u64) -> GmmConfig {
        GmmConfig {
            max_iters: self.max_iters,
            tol: self.tol,
            seed,
            init_subsample: self.init_subsample,
            var_floor_ratio: self.var_floor_ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DocmodelSection {
    /// Documents whose frequencies define idf.
    pub idf_source: DataSource,
    pub tf: TfMode,
    pub text_vocab_cap: usize,
}

impl Default for DocmodelSection {
    fn default() -> Self {
        Self {
            idf_source: DataSource::All,
            tf: TfMode::Raw,
            text_vocab_cap: docmodel::DEFAULT_TEXT_VOCAB_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdaSection {
    /// Number of latent domains K.
    pub n_topics: usize,
    /// Symmetric Dirichlet prior; unset means `50 / K`.
    pub alpha: Option<f64>,
    pub eta: f64,
    pub init_jitter: f64,
    pub em_tol: f64,
    pub em_max_iters: usize,
    pub doc_tol: f64,
    pub doc_max_iters: usize,
    pub train_on: DataSource,
}

impl Default for LdaSection {
    fn default() -> Self {
        let l = LdaConfig::default();
        Self {
            n_topics: lda::DEFAULT_TOPICS,
            alpha: l.alpha,
            eta: l.eta,
            init_jitter: l.init_jitter,
            em_tol: l.em_tol,
            em_max_iters: l.em_max_iters,
            doc_tol: l.doc.tol,
            doc_max_iters: l.doc.max_iters,
            train_on: DataSource::Dev,
        }
    }
}

impl LdaSection {
    pub fn lda_config(&self, seed: u64) -> LdaConfig {
        LdaConfig {
            alpha: self.alpha,
            eta: self.eta,
            init_jitter: self.init_jitter,
            em_tol: self.em_tol,
            em_max_iters: self.em_max_iters,
            doc: self.infer_options(),
            seed,
        }
    }

    pub fn infer_options(&self) -> InferOptions {
        InferOptions {
            tol: self.doc_tol,
            max_iters: self.doc_max_iters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    /// Number of dev-set centroids C.
    pub n_clusters: usize,
    pub max_iters: usize,
    pub spherical: bool,
}

impl Default for ClusterSection {
    fn default() -> Self {
        let k = KMeansConfig::default();
        Self {
            n_clusters: cluster::DEFAULT_CLUSTERS,
            max_iters: k.max_iters,
            spherical: k.spherical,
        }
    }
}

impl ClusterSection {
    pub fn kmeans_config(&self, seed: u64) -> KMeansConfig {
        KMeansConfig {
            seed,
            max_iters: self.max_iters,
            spherical: self.spherical,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionSection {
    pub lambda: f64,
    /// Optional hour budget.
    pub max_hours: Option<f64>,
}

impl Default for SelectionSection {
    fn default() -> Self {
        Self {
            lambda: selector::DEFAULT_LAMBDA,
            max_hours: None,
        }
    }
}

impl SelectionSection {
    pub fn selection_config(&self) -> SelectionConfig {
        SelectionConfig {
            lambda: self.lambda,
            max_hours: self.max_hours,
        }
    }
}

/// Transcript-based path whose selection is merged with the acoustic one.
/// Unset fields fall back to the acoustic settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextSection {
    pub enabled: bool,
    pub n_topics: Option<usize>,
    pub n_clusters: Option<usize>,
    pub lambda: Option<f64>,
    /// Transcripts the text vocabulary and topic model are built from. A
    /// dev-only text model has no vocabulary for other domains, which leaves
    /// their posteriors at the prior.
    pub train_on: DataSource,
}

impl Default for TextSection {
    fn default() -> Self {
        Self {
            enabled: false,
            n_topics: None,
            n_clusters: None,
            lambda: None,
            train_on: DataSource::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    /// When set, a comparison against random selection at the same budget is
    /// written alongside the composition report.
    pub target_domain: Option<String>,
    pub random_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub quantizer: QuantizerSection,
    pub docmodel: DocmodelSection,
    pub lda: LdaSection,
    pub cluster: ClusterSection,
    pub selection: SelectionSection,
    pub text: TextSection,
    pub report: ReportSection,
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {x}")))
    }
}

fn at_least_one(name: &str, n: usize) -> Result<()> {
    if n >= 1 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be at least 1")))
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&util::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.paths.pool_manifest,
            &mut cfg.paths.dev_manifest,
            &mut cfg.paths.work_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn text_topics(&self) -> usize {
        self.text.n_topics.unwrap_or(self.lda.n_topics)
    }

    pub fn text_clusters(&self) -> usize {
        self.text.n_clusters.unwrap_or(self.cluster.n_clusters)
    }

    pub fn text_lambda(&self) -> f64 {
        self.text.lambda.unwrap_or(self.selection.lambda)
    }

    /// Range checks on every parameter and existence of the input manifests.
    pub fn validate(&self) -> Result<()> {
        self.validate_params()?;
        for (name, p) in [
            ("pool manifest", &self.paths.pool_manifest),
            ("dev manifest", &self.paths.dev_manifest),
        ] {
            if !p.is_file() {
                return Err(Error::Config(format!("{name} {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// Range checks without touching the file system.
    pub fn validate_params(&self) -> Result<()> {
        let q = &self.quantizer;
        at_least_one("quantizer.n_components", q.n_components)?;
        at_least_one("quantizer.max_iters", q.max_iters)?;
        at_least_one("quantizer.init_subsample", q.init_subsample)?;
        at_least_one("quantizer.max_frames", q.max_frames)?;
        if !(q.tol.is_finite() && q.tol >= 0.0) {
            return Err(Error::Config("quantizer.tol must be non-negative".into()));
        }
        positive("quantizer.var_floor_ratio", q.var_floor_ratio)?;
        if q.n_components > u32::MAX as usize {
            return Err(Error::Config("quantizer.n_components is too large".into()));
        }
        at_least_one("docmodel.text_vocab_cap", self.docmodel.text_vocab_cap)?;
        let l = &self.lda;
        at_least_one("lda.n_topics", l.n_topics)?;
        at_least_one("lda.doc_max_iters", l.doc_max_iters)?;
        l.lda_config(self.seed).validate()?;
        at_least_one("cluster.n_clusters", self.cluster.n_clusters)?;
        at_least_one("cluster.max_iters", self.cluster.max_iters)?;
        self.selection.selection_config().validate()?;
        if self.text.enabled {
            at_least_one("text.n_topics", self.text_topics())?;
            at_least_one("text.n_clusters", self.text_clusters())?;
            SelectionConfig {
                lambda: self.text_lambda(),
                max_hours: self.selection.max_hours,
            }
            .validate()?;
        }
        Ok(())
    }
}
