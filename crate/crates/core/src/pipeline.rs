//! End-to-end selection: train-gmm, quantize, tfidf, train-lda, posteriors,
//! cluster and select, optionally followed by the transcript path and a
//! union of both selections.
//!
//! Every stage reads its inputs from and writes its outputs to the work
//! directory. A stage is skipped when a key derived from the content of its
//! inputs and its parameters matches the one recorded when its outputs were
//! written and the outputs are unchanged.

use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cluster;
use crate::config::{DataSource, PipelineConfig};
use crate::corpus::{self, Manifest};
use crate::docmodel::{self, TfMode, WeightedDocument};
use crate::error::{Error, Result};
use crate::lda::{self, LdaModel};
use crate::quantizer::{self, AcousticDocument, FrameSet, GmmModel};
use crate::report::{self, ComparisonRow, CompositionReport};
use crate::selector::{self, SelectionConfig, SelectionResult};
use crate::util;

/// Bumped whenever an artifact format or stage semantics change, so stale
/// caches are not reused.
const CACHE_VERSION: &str = "1";

/// File locations inside a work directory.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub root: PathBuf,
}

impl Artifacts {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn gmm(&self) -> PathBuf {
        self.path("gmm.bin")
    }

    pub fn tokens(&self, set: &str) -> PathBuf {
        self.path(&format!("{set}.tokens"))
    }

    pub fn weighted(&self, set: &str) -> PathBuf {
        self.path(&format!("{set}.weighted"))
    }

    pub fn lda(&self) -> PathBuf {
        self.path("lda.bin")
    }

    pub fn posteriors(&self, set: &str) -> PathBuf {
        self.path(&format!("{set}.post"))
    }

    pub fn centroids(&self) -> PathBuf {
        self.path("centroids.post")
    }

    pub fn selection(&self, name: &str) -> PathBuf {
        self.path(&format!("{name}.selected.tsv"))
    }

    pub fn audit(&self, name: &str) -> PathBuf {
        self.path(&format!("{name}.audit.tsv"))
    }

    pub fn text_vocab(&self) -> PathBuf {
        self.path("text.vocab")
    }

    pub fn text_weighted(&self, set: &str) -> PathBuf {
        self.path(&format!("{set}.text.weighted"))
    }

    pub fn text_lda(&self) -> PathBuf {
        self.path("text_lda.bin")
    }

    pub fn text_posteriors(&self, set: &str) -> PathBuf {
        self.path(&format!("{set}.text.post"))
    }

    pub fn text_centroids(&self) -> PathBuf {
        self.path("text_centroids.post")
    }

    pub fn report_text(&self) -> PathBuf {
        self.path("report.txt")
    }

    pub fn report_tsv(&self) -> PathBuf {
        self.path("report.tsv")
    }

    pub fn comparison(&self) -> PathBuf {
        self.path("comparison.txt")
    }

    fn cache_dir(&self) -> PathBuf {
        self.path("cache")
    }

    fn lock(&self) -> PathBuf {
        self.path(".lock")
    }
}

/// Exclusive ownership of a work directory, released on drop.
#[derive(Debug)]
pub struct WorkDirLock {
    path: PathBuf,
}

impl WorkDirLock {
    pub fn acquire(work_dir: &Path) -> Result<Self> {
        fs::create_dir_all(work_dir).map_err(|e| Error::io(work_dir, e))?;
        let path = Artifacts::new(work_dir).lock();
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(work_dir.to_path_buf())),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for WorkDirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    /// Inputs and outputs unchanged; nothing recomputed.
    Cached,
    /// Outputs existed but no longer matched their recorded hashes or
    /// inputs; recomputed.
    Refreshed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

struct Runner {
    art: Artifacts,
    memo: HashMap<PathBuf, String>,
    records: Vec<StageRecord>,
}

impl Runner {
    fn new(art: Artifacts) -> Result<Self> {
        let dir = art.cache_dir();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self {
            art,
            memo: HashMap::new(),
            records: Vec::new(),
        })
    }

    fn file_hash(&mut self, path: &Path) -> Result<String> {
        if let Some(h) = self.memo.get(path) {
            return Ok(h.clone());
        }
        let h = sha256_hex(&util::read_bytes(path)?);
        self.memo.insert(path.to_path_buf(), h.clone());
        Ok(h)
    }

    fn input_key(&mut self, name: &str, params: &str, inputs: &[PathBuf]) -> Result<String> {
        let mut h = Sha256::new();
        for part in [CACHE_VERSION, name, params] {
            h.update(part.as_bytes());
            h.update([0]);
        }
        for p in inputs {
            let fh = self.file_hash(p)?;
            h.update(fh.as_bytes());
            h.update([0]);
        }
        Ok(format!("{:x}", h.finalize()))
    }

    fn record(&self, key: &str, outputs: &[PathBuf]) -> Result<String> {
        let mut s = format!("inputs {key}\n");
        for o in outputs {
            s.push_str(&format!("{} {}\n", sha256_hex(&util::read_bytes(o)?), o.display()));
        }
        Ok(s)
    }

    /// Runs `body` unless the recorded key for `name` matches and every
    /// output is intact.
    fn stage<F>(&mut self, name: &str, params: &impl Serialize, inputs: Vec<PathBuf>, outputs: Vec<PathBuf>, body: F) -> Result<()>
    where
        F: FnOnce() -> Result<()>,
    {
        let wrap = |e: Error| Error::Stage {
            stage: name.to_string(),
            source: Box::new(e),
        };
        let params = serde_json::to_string(params).expect("stage parameters serialize");
        let key = self.input_key(name, &params, &inputs).map_err(wrap)?;
        let key_path = self.art.cache_dir().join(format!("{name}.key"));
        let previous = fs::read_to_string(&key_path).ok();
        let status = match &previous {
            None => StageStatus::Ran,
            Some(prev) => {
                let current = outputs
                    .iter()
                    .all(|o| o.is_file())
                    .then(|| self.record(&key, &outputs).ok())
                    .flatten();
                if current.as_deref() == Some(prev.as_str()) {
                    log::info!("stage {name}: up to date");
                    self.records.push(StageRecord {
                        name: name.to_string(),
                        status: StageStatus::Cached,
                    });
                    return Ok(());
                }
                if prev.lines().next() == Some(format!("inputs {key}").as_str()) {
                    log::warn!("stage {name}: artifact hash mismatch, recomputing");
                } else {
                    log::info!("stage {name}: inputs changed, recomputing");
                }
                StageStatus::Refreshed
            }
        };
        log::info!("stage {name}: running");
        let _ = fs::remove_file(&key_path);
        body().map_err(wrap)?;
        for o in &outputs {
            self.memo.remove(o);
        }
        let rec = self.record(&key, &outputs).map_err(wrap)?;
        util::write_all(&key_path, rec.as_bytes()).map_err(wrap)?;
        self.records.push(StageRecord {
            name: name.to_string(),
            status,
        });
        Ok(())
    }
}

/// Manifest file followed by every feature file it references.
fn feature_inputs(manifest_path: &Path, m: &Manifest) -> Vec<PathBuf> {
    std::iter::once(manifest_path.to_path_buf())
        .chain(m.utterances.iter().map(|u| m.feature_path(u)))
        .collect()
}

/// Manifest file followed by every transcript it references.
fn transcript_inputs(manifest_path: &Path, m: &Manifest) -> Vec<PathBuf> {
    std::iter::once(manifest_path.to_path_buf())
        .chain(
            m.utterances
                .iter()
                .filter_map(|u| u.transcript_path.as_deref().map(|p| m.resolve(p))),
        )
        .collect()
}

/// Uniform sample of at most `max_frames` frames across the manifests, kept
/// in corpus order. All frames are used when there are few enough.
pub fn sample_frames(manifests: &[&Manifest], max_frames: usize, seed: u64) -> Result<FrameSet> {
    let dim = manifests
        .iter()
        .flat_map(|m| m.utterances.first())
        .map(|u| u.frame_dim as usize)
        .next()
        .ok_or_else(|| Error::InvalidInput("no utterances to sample frames from".into()))?;
    let total: u64 = manifests
        .iter()
        .flat_map(|m| &m.utterances)
        .map(|u| u.num_frames)
        .sum();
    let keep: Option<Vec<u64>> = (total > max_frames as u64).then(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx: Vec<u64> = rand::seq::index::sample(&mut rng, total as usize, max_frames)
            .into_iter()
            .map(|i| i as u64)
            .collect();
        idx.sort_unstable();
        idx
    });
    let mut frames = FrameSet::new(dim);
    let mut offset = 0u64;
    let mut next = 0usize;
    for m in manifests {
        for u in &m.utterances {
            let end = offset + u.num_frames;
            match &keep {
                None => frames.extend_from_matrix(&m.read_features(u)?)?,
                Some(idx) => {
                    if next < idx.len() && idx[next] < end {
                        let mat = m.read_features(u)?;
                        while next < idx.len() && idx[next] < end {
                            frames.push(mat.row((idx[next] - offset) as usize))?;
                            next += 1;
                        }
                    }
                }
            }
            offset = end;
        }
    }
    Ok(frames)
}

/// Acoustic documents of every utterance, in manifest order.
pub fn quantize_manifest(gmm: &GmmModel, manifest: &Manifest) -> Result<Vec<AcousticDocument>> {
    manifest
        .utterances
        .par_iter()
        .map(|u| gmm.quantize(&manifest.read_features(u)?, &u.id))
        .collect()
}

/// tf-idf weighting of both document sets, with document frequencies taken
/// from the sets named by `idf_source`.
pub fn weigh_sets(
    pool: &[AcousticDocument],
    dev: &[AcousticDocument],
    vocab_size: usize,
    idf_source: DataSource,
    tf: TfMode,
) -> Result<(Vec<WeightedDocument>, Vec<WeightedDocument>)> {
    let mut basis: Vec<&[u32]> = Vec::new();
    if idf_source.uses_pool() {
        basis.extend(pool.iter().map(|d| d.tokens.as_slice()));
    }
    if idf_source.uses_dev() {
        basis.extend(dev.iter().map(|d| d.tokens.as_slice()));
    }
    let stats = docmodel::compute_stats(basis, vocab_size)?;
    let weigh = |docs: &[AcousticDocument]| -> Result<Vec<WeightedDocument>> {
        docs.iter()
            .map(|d| docmodel::weigh_document_with(&d.utt_id, &d.tokens, &stats, tf))
            .collect()
    };
    Ok((weigh(pool)?, weigh(dev)?))
}

/// Transcript tokens of every utterance; utterances without a transcript
/// become empty documents.
pub fn text_documents(manifest: &Manifest, vocab: &docmodel::TextVocab) -> Result<Vec<AcousticDocument>> {
    manifest
        .utterances
        .iter()
        .map(|u| {
            let tokens = manifest
                .read_transcript(u)?
                .map(|t| docmodel::tokenize_transcript(&t, vocab))
                .unwrap_or_default();
            Ok(AcousticDocument {
                utt_id: u.id.clone(),
                tokens,
            })
        })
        .collect()
}

fn training_docs(source: DataSource, pool: Vec<WeightedDocument>, dev: Vec<WeightedDocument>) -> Vec<WeightedDocument> {
    let mut docs = Vec::new();
    if source.uses_dev() {
        docs.extend(dev);
    }
    if source.uses_pool() {
        docs.extend(pool);
    }
    docs
}

/// Distinct seeds per stage derived from the run seed.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    stage
        .bytes()
        .fold(util::mix64(seed), |h, b| util::mix64(h ^ b as u64))
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub selection: SelectionResult,
    pub report: CompositionReport,
    pub comparison: Option<Vec<ComparisonRow>>,
    pub stages: Vec<StageRecord>,
    pub artifacts: Artifacts,
}

struct Inputs {
    pool: Manifest,
    dev: Manifest,
}

fn load_inputs(config: &PipelineConfig) -> Result<Inputs> {
    let pool = corpus::read_manifest(&config.paths.pool_manifest, true)?;
    let dev = corpus::read_manifest(&config.paths.dev_manifest, true)?;
    if pool.is_empty() || dev.is_empty() {
        return Err(Error::InvalidInput("pool and dev manifests must be non-empty".into()));
    }
    let pool_dim = pool.utterances[0].frame_dim;
    if let Some(u) = pool.utterances.iter().chain(&dev.utterances).find(|u| u.frame_dim != pool_dim) {
        return Err(Error::DimensionMismatch {
            expected: pool_dim as usize,
            got: u.frame_dim as usize,
        });
    }
    Ok(Inputs { pool, dev })
}

/// Acoustic stages through clustering. Returns nothing: every result is on
/// disk.
fn acoustic_stages(run: &mut Runner, config: &PipelineConfig, inputs: &Inputs) -> Result<()> {
    let art = run.art.clone();
    let pool_path = &config.paths.pool_manifest;
    let dev_path = &config.paths.dev_manifest;
    let q = &config.quantizer;

    let mut gmm_inputs = Vec::new();
    let mut sources: Vec<&Manifest> = Vec::new();
    if q.train_on.uses_dev() {
        gmm_inputs.extend(feature_inputs(dev_path, &inputs.dev));
        sources.push(&inputs.dev);
    }
    if q.train_on.uses_pool() {
        gmm_inputs.extend(feature_inputs(pool_path, &inputs.pool));
        sources.push(&inputs.pool);
    }
    let gmm_seed = stage_seed(config.seed, "train-gmm");
    run.stage("train-gmm", &(q, gmm_seed), gmm_inputs, vec![art.gmm()], || {
        let frames = sample_frames(&sources, q.max_frames, gmm_seed)?;
        log::info!("training a {}-component GMM on {} frames", q.n_components, frames.len());
        let fit = quantizer::train_gmm(&frames, q.n_components, &q.gmm_config(gmm_seed))?;
        if fit.floored > 0 {
            log::warn!("{} variances held at the floor", fit.floored);
        }
        fit.model.save(&art.gmm())
    })?;

    let mut q_inputs = vec![art.gmm()];
    q_inputs.extend(feature_inputs(pool_path, &inputs.pool));
    q_inputs.extend(feature_inputs(dev_path, &inputs.dev));
    run.stage("quantize", &(), q_inputs, vec![art.tokens("pool"), art.tokens("dev")], || {
        let gmm = GmmModel::load(&art.gmm())?;
        quantizer::write_token_file(&quantize_manifest(&gmm, &inputs.pool)?, &art.tokens("pool"))?;
        quantizer::write_token_file(&quantize_manifest(&gmm, &inputs.dev)?, &art.tokens("dev"))
    })?;

    run.stage(
        "tfidf",
        &(config.docmodel.idf_source, config.docmodel.tf, q.n_components),
        vec![art.tokens("pool"), art.tokens("dev")],
        vec![art.weighted("pool"), art.weighted("dev")],
        || {
            let pool = quantizer::read_token_file(&art.tokens("pool"))?;
            let dev = quantizer::read_token_file(&art.tokens("dev"))?;
            let (wp, wd) = weigh_sets(&pool, &dev, q.n_components, config.docmodel.idf_source, config.docmodel.tf)?;
            docmodel::write_weighted_file(&wp, &art.weighted("pool"))?;
            docmodel::write_weighted_file(&wd, &art.weighted("dev"))
        },
    )?;

    let lda_seed = stage_seed(config.seed, "train-lda");
    train_lda_stage(
        run,
        "train-lda",
        config,
        config.lda.train_on,
        config.lda.n_topics,
        q.n_components,
        lda_seed,
        [art.weighted("pool"), art.weighted("dev")],
        art.lda(),
    )?;
    posteriors_stage(
        run,
        "posteriors",
        config,
        art.lda(),
        [art.weighted("pool"), art.weighted("dev")],
        [art.posteriors("pool"), art.posteriors("dev")],
    )?;
    cluster_stage(
        run,
        "cluster",
        config,
        config.cluster.n_clusters,
        stage_seed(config.seed, "cluster"),
        art.posteriors("dev"),
        art.centroids(),
    )
}

#[allow(clippy::too_many_arguments)]
fn train_lda_stage(
    run: &mut Runner,
    name: &str,
    config: &PipelineConfig,
    source: DataSource,
    n_topics: usize,
    vocab_size: usize,
    seed: u64,
    weighted: [PathBuf; 2],
    out: PathBuf,
) -> Result<()> {
    let lda_cfg = config.lda.lda_config(seed);
    let params = (&config.lda, source, n_topics, vocab_size, seed);
    run.stage(name, &params, weighted.to_vec(), vec![out.clone()], || {
        let pool = docmodel::read_weighted_file(&weighted[0])?;
        let dev = docmodel::read_weighted_file(&weighted[1])?;
        let docs = training_docs(source, pool, dev);
        log::info!("training a {n_topics}-topic LDA on {} documents", docs.len());
        let mass = docs.iter().map(WeightedDocument::total_weight).sum::<f64>() / docs.len().max(1) as f64;
        let prior = lda_cfg.alpha_for(n_topics) * n_topics as f64;
        if mass < prior {
            log::warn!(
                "documents carry {mass:.2} units of weight on average against a prior mass of {prior:.2}; \
                 posteriors will stay close to the prior"
            );
        }
        let fit = lda::train_lda(&docs, vocab_size, n_topics, &lda_cfg)?;
        if !fit.converged {
            log::warn!("LDA stopped after {} iterations without converging", fit.objective.len());
        }
        fit.model.save(&out)
    })
}

fn posteriors_stage(
    run: &mut Runner,
    name: &str,
    config: &PipelineConfig,
    model: PathBuf,
    weighted: [PathBuf; 2],
    out: [PathBuf; 2],
) -> Result<()> {
    let opts = config.lda.infer_options();
    let mut ins = vec![model.clone()];
    ins.extend(weighted.iter().cloned());
    run.stage(name, &(opts.tol, opts.max_iters), ins, out.to_vec(), || {
        let lda = LdaModel::load(&model)?;
        for (w, o) in weighted.iter().zip(&out) {
            let docs = docmodel::read_weighted_file(w)?;
            lda::write_posterior_file(&lda::extract_posteriors(&lda, &docs, opts)?, o)?;
        }
        Ok(())
    })
}

fn cluster_stage(
    run: &mut Runner,
    name: &str,
    config: &PipelineConfig,
    n_clusters: usize,
    seed: u64,
    dev_post: PathBuf,
    out: PathBuf,
) -> Result<()> {
    let km = config.cluster.kmeans_config(seed);
    let outputs = vec![out.clone(), cluster::sidecar_path(&out)];
    run.stage(name, &(&config.cluster, n_clusters, seed), vec![dev_post.clone()], outputs, || {
        let vectors: Vec<Vec<f64>> = lda::read_posterior_file(&dev_post)?
            .into_iter()
            .map(|p| p.gamma)
            .collect();
        let set = cluster::kmeans(&vectors, n_clusters, &km)?;
        cluster::write_centroids(&set, &out)
    })
}

fn select_stage(
    run: &mut Runner,
    name: &str,
    config: &PipelineConfig,
    pool: &Manifest,
    sel: SelectionConfig,
    post: PathBuf,
    centroids: PathBuf,
) -> Result<()> {
    let art = run.art.clone();
    let (sel_path, audit_path) = (art.selection(name), art.audit(name));
    let ins = vec![config.paths.pool_manifest.clone(), post.clone(), centroids.clone()];
    let stage = format!("select-{name}");
    run.stage(&stage, &(sel.lambda, sel.max_hours), ins, vec![sel_path.clone(), audit_path.clone()], || {
        let posts = lda::read_posterior_file(&post)?;
        let cents = cluster::read_centroids(&centroids)?;
        let result = selector::select(&posts, pool, &cents, &sel)?;
        log::info!(
            "{name}: selected {} utterances, {:.3} h in {} passes ({})",
            result.len(),
            result.total_hours,
            result.passes,
            result.stop
        );
        selector::write_selection_manifest(&result, pool, &sel_path)?;
        selector::write_audit(&result, &audit_path)
    })
}

fn text_stages(run: &mut Runner, config: &PipelineConfig, inputs: &Inputs) -> Result<()> {
    let art = run.art.clone();
    let mut ins = transcript_inputs(&config.paths.pool_manifest, &inputs.pool);
    ins.extend(transcript_inputs(&config.paths.dev_manifest, &inputs.dev));
    let cap = config.docmodel.text_vocab_cap;
    let outputs = vec![art.text_vocab(), art.text_weighted("pool"), art.text_weighted("dev")];
    let params = (cap, config.docmodel.idf_source, config.docmodel.tf, config.text.train_on);
    run.stage("text-tfidf", &params, ins, outputs, || {
        // Words the topic model never trains on would get the same smoothed
        // probability under every topic and only pull posteriors toward the
        // prior, so the vocabulary comes from the LDA training transcripts.
        let source = config.text.train_on;
        let mut transcripts = Vec::new();
        let sets = [(source.uses_dev(), &inputs.dev), (source.uses_pool(), &inputs.pool)];
        for m in sets.into_iter().filter(|(used, _)| *used).map(|(_, m)| m) {
            for u in &m.utterances {
                if let Some(t) = m.read_transcript(u)? {
                    transcripts.push(t);
                }
            }
        }
        let vocab = docmodel::build_text_vocab(transcripts.iter().map(String::as_str), cap)?;
        if vocab.is_empty() {
            return Err(Error::InvalidInput("no transcript words to build a vocabulary from".into()));
        }
        vocab.save(&art.text_vocab())?;
        let pool = text_documents(&inputs.pool, &vocab)?;
        let dev = text_documents(&inputs.dev, &vocab)?;
        let (wp, wd) = weigh_sets(&pool, &dev, vocab.len(), config.docmodel.idf_source, config.docmodel.tf)?;
        docmodel::write_weighted_file(&wp, &art.text_weighted("pool"))?;
        docmodel::write_weighted_file(&wd, &art.text_weighted("dev"))
    })?;

    let vocab_size = docmodel::TextVocab::load(&art.text_vocab())?.len();
    train_lda_stage(
        run,
        "text-train-lda",
        config,
        config.text.train_on,
        config.text_topics(),
        vocab_size,
        stage_seed(config.seed, "text-train-lda"),
        [art.text_weighted("pool"), art.text_weighted("dev")],
        art.text_lda(),
    )?;
    posteriors_stage(
        run,
        "text-posteriors",
        config,
        art.text_lda(),
        [art.text_weighted("pool"), art.text_weighted("dev")],
        [art.text_posteriors("pool"), art.text_posteriors("dev")],
    )?;
    cluster_stage(
        run,
        "text-cluster",
        config,
        config.text_clusters(),
        stage_seed(config.seed, "text-cluster"),
        art.text_posteriors("dev"),
        art.text_centroids(),
    )?;
    select_stage(
        run,
        "text",
        config,
        &inputs.pool,
        SelectionConfig {
            lambda: config.text_lambda(),
            max_hours: config.selection.max_hours,
        },
        art.text_posteriors("pool"),
        art.text_centroids(),
    )?;
    let ins = vec![config.paths.pool_manifest.clone(), art.audit("acoustic"), art.audit("text")];
    let outputs = vec![art.selection("combined"), art.audit("combined")];
    run.stage("combine", &(), ins, outputs, || {
        let a = selector::read_audit(&art.audit("acoustic"), &inputs.pool)?;
        let t = selector::read_audit(&art.audit("text"), &inputs.pool)?;
        let u = selector::union_combine(&a, &t, &inputs.pool)?;
        selector::write_selection_manifest(&u, &inputs.pool, &art.selection("combined"))?;
        selector::write_audit(&u, &art.audit("combined"))
    })
}

/// Target-domain comparison of the named selections against random
/// selections of the same size.
fn comparison(
    config: &PipelineConfig,
    pool: &Manifest,
    named: Vec<(String, SelectionResult)>,
    budget: f64,
) -> Result<Option<Vec<ComparisonRow>>> {
    let Some(target) = &config.report.target_domain else {
        return Ok(None);
    };
    let mut named = named;
    if budget > 0.0 {
        let seeds = if config.report.random_seeds.is_empty() {
            vec![config.seed]
        } else {
            config.report.random_seeds.clone()
        };
        for s in seeds {
            named.push((format!("random-{s}"), selector::random_select(pool, budget, s)?));
        }
    }
    report::compare(&named, pool, target).map(Some)
}

/// Runs every stage, reusing cached artifacts, and writes the final
/// selection (`selection.tsv`, `selection.audit.tsv`) and reports.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutcome> {
    config.validate()?;
    let art = Artifacts::new(&config.paths.work_dir);
    let _lock = WorkDirLock::acquire(&art.root)?;
    let inputs = load_inputs(config)?;
    let mut run = Runner::new(art.clone())?;

    acoustic_stages(&mut run, config, &inputs)?;
    select_stage(
        &mut run,
        "acoustic",
        config,
        &inputs.pool,
        config.selection.selection_config(),
        art.posteriors("pool"),
        art.centroids(),
    )?;
    let final_name = if config.text.enabled {
        text_stages(&mut run, config, &inputs)?;
        "combined"
    } else {
        "acoustic"
    };

    let final_audit = art.audit(final_name);
    let selection = selector::read_audit(&final_audit, &inputs.pool)?;
    let report = report::report(&selection, &inputs.pool)?;
    let mut named = vec![(final_name.to_string(), selection.clone())];
    if config.text.enabled {
        for n in ["acoustic", "text"] {
            named.push((n.to_string(), selector::read_audit(&art.audit(n), &inputs.pool)?));
        }
    }
    let comparison = comparison(config, &inputs.pool, named, selection.total_hours)?;

    let ins = vec![config.paths.pool_manifest.clone(), art.selection(final_name), final_audit.clone()];
    let mut outputs = vec![
        art.path("selection.tsv"),
        art.path("selection.audit.tsv"),
        art.report_text(),
        art.report_tsv(),
    ];
    if comparison.is_some() {
        outputs.push(art.comparison());
    }
    let params = (&config.report, config.seed);
    run.stage("report", &params, ins, outputs, || {
        let copy = |from: PathBuf, to: PathBuf| util::write_all(&to, &util::read_bytes(&from)?);
        copy(art.selection(final_name), art.path("selection.tsv"))?;
        copy(final_audit.clone(), art.path("selection.audit.tsv"))?;
        report.write(&art.report_text(), &art.report_tsv())?;
        if let (Some(rows), Some(target)) = (&comparison, &config.report.target_domain) {
            util::write_all(&art.comparison(), report::render_comparison(rows, target).as_bytes())?;
        }
        Ok(())
    })?;

    Ok(PipelineOutcome {
        selection,
        report,
        comparison,
        stages: run.records,
        artifacts: art,
    })
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub lambda: f64,
    pub selection: SelectionResult,
    pub report: CompositionReport,
    pub comparison: Option<Vec<ComparisonRow>>,
}

fn lambda_label(lambda: f64) -> String {
    format!("lambda_{lambda}")
}

/// Acoustic selection and report for each λ against the cached posteriors
/// and centroids. Outputs go to `sweep/lambda_<λ>/` in the work directory.
pub fn sweep_lambda(config: &PipelineConfig, lambdas: &[f64]) -> Result<Vec<SweepPoint>> {
    config.validate()?;
    if lambdas.is_empty() {
        return Err(Error::Config("no lambda values to sweep".into()));
    }
    for &l in lambdas {
        SelectionConfig {
            lambda: l,
            max_hours: config.selection.max_hours,
        }
        .validate()?;
    }
    let art = Artifacts::new(&config.paths.work_dir);
    let _lock = WorkDirLock::acquire(&art.root)?;
    let inputs = load_inputs(config)?;
    let mut run = Runner::new(art.clone())?;
    acoustic_stages(&mut run, config, &inputs)?;

    let posts = lda::read_posterior_file(&art.posteriors("pool"))?;
    let cents = cluster::read_centroids(&art.centroids())?;
    let mut points = Vec::new();
    for &lambda in lambdas {
        let sel_cfg = SelectionConfig {
            lambda,
            max_hours: config.selection.max_hours,
        };
        let selection = selector::select(&posts, &inputs.pool, &cents, &sel_cfg)?;
        let report = report::report(&selection, &inputs.pool)?;
        let comparison = comparison(
            config,
            &inputs.pool,
            vec![(lambda_label(lambda), selection.clone())],
            selection.total_hours,
        )?;
        let dir = art.path("sweep").join(lambda_label(lambda));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        selector::write_selection_manifest(&selection, &inputs.pool, &dir.join("selection.tsv"))?;
        selector::write_audit(&selection, &dir.join("selection.audit.tsv"))?;
        report.write(&dir.join("report.txt"), &dir.join("report.tsv"))?;
        if let (Some(rows), Some(target)) = (&comparison, &config.report.target_domain) {
            util::write_all(&dir.join("comparison.txt"), report::render_comparison(rows, target).as_bytes())?;
        }
        points.push(SweepPoint {
            lambda,
            selection,
            report,
            comparison,
        });
    }
    util::write_all(&art.path("sweep").join("summary.tsv"), render_sweep(&points).as_bytes())?;
    Ok(points)
}

/// `lambda \t utterances \t hours \t passes [\t enrichment]` per sweep point.
pub fn render_sweep(points: &[SweepPoint]) -> String {
    let mut s = String::from("lambda\tutterances\thours\tpasses\tenrichment\n");
    for p in points {
        let enrichment = p
            .comparison
            .as_ref()
            .and_then(|rows| rows.first())
            .map_or("-".to_string(), |r| util::fmt_sig9(r.enrichment));
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            p.lambda,
            p.selection.len(),
            util::fmt_sig9(p.selection.total_hours),
            p.selection.passes,
            enrichment
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Role;
    use crate::synth::{self, SynthSpec};

    fn small_corpus(dir: &Path) -> PipelineConfig {
        let spec = SynthSpec::preset(&["near", "far"], 12, 2, 3, (20, 40), 4.0, 5);
        synth::generate_synthetic_corpus(&spec, 1, &dir.join("pool"), Role::Pool).unwrap();
        let dev = SynthSpec::preset(&["near", "far"], 12, 2, 3, (20, 40), 4.0, 5);
        let mut dev = dev;
        dev.domains.truncate(1);
        dev.domains[0].utterances = 6;
        dev.id_prefix = "dev_".into();
        synth::generate_synthetic_corpus(&dev, 2, &dir.join("dev"), Role::Dev).unwrap();
        let mut c = PipelineConfig::default();
        c.paths.pool_manifest = dir.join("pool/manifest.tsv");
        c.paths.dev_manifest = dir.join("dev/manifest.tsv");
        c.paths.work_dir = dir.join("work");
        c.quantizer.n_components = 8;
        c.lda.n_topics = 3;
        c.lda.em_max_iters = 10;
        c.cluster.n_clusters = 2;
        c.selection.lambda = 0.3;
        c
    }

    #[test]
    fn frame_sampling_is_seeded_and_bounded() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_corpus(dir.path());
        let pool = corpus::read_manifest(&cfg.paths.pool_manifest, true).unwrap();
        let total: u64 = pool.utterances.iter().map(|u| u.num_frames).sum();
        let all = sample_frames(&[&pool], usize::MAX, 0).unwrap();
        assert_eq!(all.len() as u64, total);
        let a = sample_frames(&[&pool], 50, 3).unwrap();
        let b = sample_frames(&[&pool], 50, 3).unwrap();
        assert_eq!(a.len(), 50);
        assert_eq!((0..50).map(|i| a.row(i).to_vec()).collect::<Vec<_>>(), (0..50).map(|i| b.row(i).to_vec()).collect::<Vec<_>>());
    }

    #[test]
    fn second_run_is_fully_cached() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_corpus(dir.path());
        let first = run_pipeline(&cfg).unwrap();
        assert!(first.stages.iter().all(|s| s.status == StageStatus::Ran));
        let sel1 = fs::read(first.artifacts.path("selection.tsv")).unwrap();
        let second = run_pipeline(&cfg).unwrap();
        assert!(second.stages.iter().all(|s| s.status == StageStatus::Cached), "{:?}", second.stages);
        assert_eq!(fs::read(second.artifacts.path("selection.tsv")).unwrap(), sel1);
        assert_eq!(first.selection, second.selection);

        // A new lambda reruns selection; everything upstream is reused.
        let mut changed = cfg.clone();
        changed.selection.lambda = 0.5;
        let third = run_pipeline(&changed).unwrap();
        for s in &third.stages {
            match s.name.as_str() {
                "select-acoustic" => assert_eq!(s.status, StageStatus::Refreshed),
                "report" => {}
                _ => assert_eq!(s.status, StageStatus::Cached, "{s:?}"),
            }
        }

        // A modified artifact is detected and rebuilt.
        fs::write(first.artifacts.lda(), b"garbage").unwrap();
        let fourth = run_pipeline(&changed).unwrap();
        let lda_stage = fourth.stages.iter().find(|s| s.name == "train-lda").unwrap();
        assert_eq!(lda_stage.status, StageStatus::Refreshed);
    }

    #[test]
    fn invalid_lambda_fails_before_any_stage() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_corpus(dir.path());
        cfg.selection.lambda = 0.0;
        let e = run_pipeline(&cfg).unwrap_err();
        assert!(e.is_validation());
        assert!(!cfg.paths.work_dir.exists());
    }

    #[test]
    fn lock_excludes_concurrent_runs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_corpus(dir.path());
        let lock = WorkDirLock::acquire(&cfg.paths.work_dir).unwrap();
        assert!(matches!(run_pipeline(&cfg), Err(Error::Locked(_))));
        drop(lock);
        assert!(run_pipeline(&cfg).is_ok());
    }

    #[test]
    fn sweep_reuses_cached_posteriors() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_corpus(dir.path());
        run_pipeline(&cfg).unwrap();
        let points = sweep_lambda(&cfg, &[0.05, 0.3, 1.0]).unwrap();
        assert_eq!(points.len(), 3);
        assert_eq!(points[2].selection.len(), 24);
        assert!(cfg.paths.work_dir.join("sweep/summary.tsv").is_file());
        assert!(sweep_lambda(&cfg, &[0.0]).unwrap_err().is_validation());
    }
}
