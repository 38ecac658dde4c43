//! Latent Dirichlet allocation trained by variational EM over weighted
//! documents.
//!
//! Term weights act as fractional pseudo-counts: they scale a term's
//! contribution to both the per-document Dirichlet update and the topic-term
//! sufficient statistics. Per-document inference is the usual mean-field
//! coordinate ascent
//!
//! ```text
//! phi[t, k] ∝ exp(digamma(gamma[k])) * beta[k, term_t]
//! gamma[k]  = alpha[k] + sum_t weight_t * phi[t, k]
//! ```
//!
//! and the M-step sets `beta[k, v] ∝ eta + sum weight * phi[., k]`.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::docmodel::WeightedDocument;
use crate::error::{Error, Result};
use crate::special::{digamma, ln_gamma};
use crate::util::{self, LeReader};

pub const LDA_MAGIC: &[u8; 4] = b"ALDA";
pub const LDA_VERSION: u32 = 1;
pub const DEFAULT_TOPICS: usize = 2048;

const SHARD_DOCS: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    n_topics: usize,
    vocab_size: usize,
    alpha: Vec<f64>,
    /// K x V, row-major.
    log_beta: Vec<f64>,
    /// V x K transpose of `log_beta`, for per-term access during inference.
    by_term: Vec<f64>,
}

impl LdaModel {
    pub fn new(alpha: Vec<f64>, log_beta: Vec<f64>, vocab_size: usize) -> Result<Self> {
        let k = alpha.len();
        if k == 0 || vocab_size == 0 {
            return Err(Error::InvalidModel("LDA needs K >= 1 and V >= 1".into()));
        }
        if log_beta.len() != k * vocab_size {
            return Err(Error::InvalidModel(format!(
                "log_beta has {} entries, expected {}",
                log_beta.len(),
                k * vocab_size
            )));
        }
        if alpha.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::InvalidModel("alpha must be positive".into()));
        }
        if log_beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidModel("log_beta must be finite".into()));
        }
        for (t, row) in log_beta.chunks_exact(vocab_size).enumerate() {
            let s: f64 = row.iter().map(|b| b.exp()).sum();
            if (s - 1.0).abs() > 1e-8 {
                return Err(Error::InvalidModel(format!(
                    "topic {t} probabilities sum to {s}"
                )));
            }
        }
        Ok(Self::build(alpha, log_beta, vocab_size))
    }

    fn build(alpha: Vec<f64>, log_beta: Vec<f64>, vocab_size: usize) -> Self {
        let k = alpha.len();
        let mut by_term = vec![0.0; k * vocab_size];
        for t in 0..k {
            for v in 0..vocab_size {
                by_term[v * k + t] = log_beta[t * vocab_size + v];
            }
        }
        Self {
            n_topics: k,
            vocab_size,
            alpha,
            log_beta,
            by_term,
        }
    }

    pub fn n_topics(&self) -> usize {
        self.n_topics
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn log_beta(&self) -> &[f64] {
        &self.log_beta
    }

    pub fn topic(&self, k: usize) -> &[f64] {
        &self.log_beta[k * self.vocab_size..(k + 1) * self.vocab_size]
    }

    fn term_column(&self, v: u32) -> &[f64] {
        let v = v as usize;
        &self.by_term[v * self.n_topics..(v + 1) * self.n_topics]
    }

    fn check_doc(&self, doc: &WeightedDocument) -> Result<()> {
        if let Some(e) = doc.entries.iter().find(|e| e.term as usize >= self.vocab_size) {
            return Err(Error::InvalidInput(format!(
                "document {}: term {} out of range for vocabulary of size {}",
                doc.utt_id, e.term, self.vocab_size
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * (self.alpha.len() + self.log_beta.len()));
        out.extend_from_slice(LDA_MAGIC);
        out.extend_from_slice(&LDA_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n_topics as u32).to_le_bytes());
        out.extend_from_slice(&(self.vocab_size as u32).to_le_bytes());
        util::push_f64s(&mut out, &self.alpha);
        util::push_f64s(&mut out, &self.log_beta);
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = LeReader::new(bytes, path);
        r.magic(LDA_MAGIC)?;
        let version = r.u32()?;
        if version != LDA_VERSION {
            return Err(Error::UnsupportedVersion {
                path: path.to_path_buf(),
                version,
            });
        }
        let k = r.u32()? as usize;
        let v = r.u32()? as usize;
        r.require(8 * (k as u64 + k as u64 * v as u64))?;
        let alpha = r.f64_vec(k)?;
        let log_beta = r.f64_vec(k * v)?;
        r.finish()?;
        Self::new(alpha, log_beta, v)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        util::write_all(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&util::read_bytes(path)?, path)
    }
}

/// Variational parameters of one document.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceState {
    pub gamma: Vec<f64>,
    /// One K-row per document entry, in entry order.
    pub phi: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl InferenceState {
    pub fn phi_row(&self, t: usize) -> &[f64] {
        let k = self.gamma.len();
        &self.phi[t * k..(t + 1) * k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferOptions {
    /// Stop when the mean absolute change of gamma falls below this.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for InferOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iters: 100,
        }
    }
}

/// Mean-field inference from the standard start `gamma = alpha + W / K`.
pub fn infer_document(model: &LdaModel, doc: &WeightedDocument, opts: InferOptions) -> Result<InferenceState> {
    model.check_doc(doc)?;
    Ok(infer_from(model, doc, None, opts, None))
}

/// Like [`infer_document`], also returning the ELBO before the first update
/// and after every iteration.
pub fn infer_document_traced(
    model: &LdaModel,
    doc: &WeightedDocument,
    opts: InferOptions,
) -> Result<(InferenceState, Vec<f64>)> {
    model.check_doc(doc)?;
    let mut trace = Vec::new();
    let state = infer_from(model, doc, None, opts, Some(&mut trace));
    Ok((state, trace))
}

fn infer_from(
    model: &LdaModel,
    doc: &WeightedDocument,
    warm_gamma: Option<&[f64]>,
    opts: InferOptions,
    mut trace: Option<&mut Vec<f64>>,
) -> InferenceState {
    let k = model.n_topics;
    let n = doc.entries.len();
    if n == 0 {
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(0.0);
        }
        return InferenceState {
            gamma: model.alpha.clone(),
            phi: Vec::new(),
            iterations: 0,
            converged: true,
        };
    }
    let total: f64 = doc.total_weight();
    let mut gamma: Vec<f64> = match warm_gamma {
        Some(g) => g.to_vec(),
        None => model.alpha.iter().map(|a| a + total / k as f64).collect(),
    };
    let mut phi = vec![1.0 / k as f64; n * k];
    if let Some(tr) = trace.as_deref_mut() {
        if warm_gamma.is_none() {
            let state = InferenceState {
                gamma: gamma.clone(),
                phi: phi.clone(),
                iterations: 0,
                converged: false,
            };
            tr.push(elbo(model, doc, &state));
        }
    }

    let mut dig = vec![0.0; k];
    let mut next = vec![0.0; k];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        iterations += 1;
        for (d, g) in dig.iter_mut().zip(&gamma) {
            *d = digamma(*g);
        }
        next.copy_from_slice(&model.alpha);
        for (t, e) in doc.entries.iter().enumerate() {
            let row = &mut phi[t * k..(t + 1) * k];
            let col = model.term_column(e.term);
            for j in 0..k {
                row[j] = dig[j] + col[j];
            }
            let lse = util::log_sum_exp(row);
            for j in 0..k {
                row[j] = (row[j] - lse).exp();
                next[j] += e.weight * row[j];
            }
        }
        let change: f64 = gamma
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / k as f64;
        std::mem::swap(&mut gamma, &mut next);
        if let Some(tr) = trace.as_deref_mut() {
            let state = InferenceState {
                gamma: gamma.clone(),
                phi: phi.clone(),
                iterations,
                converged: false,
            };
            tr.push(elbo(model, doc, &state));
        }
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    InferenceState {
        gamma,
        phi,
        iterations,
        converged,
    }
}

/// Per-document evidence lower bound at the given variational parameters.
pub fn elbo(model: &LdaModel, doc: &WeightedDocument, state: &InferenceState) -> f64 {
    let k = model.n_topics;
    let alpha = &model.alpha;
    let gamma = &state.gamma;
    let gsum: f64 = gamma.iter().sum();
    let dsum = digamma(gsum);
    let elog: Vec<f64> = gamma.iter().map(|g| digamma(*g) - dsum).collect();

    let asum: f64 = alpha.iter().sum();
    let mut bound = ln_gamma(asum) - ln_gamma(gsum);
    for j in 0..k {
        bound += ln_gamma(gamma[j]) - ln_gamma(alpha[j]) + (alpha[j] - gamma[j]) * elog[j];
    }
    for (t, e) in doc.entries.iter().enumerate() {
        let row = &state.phi[t * k..(t + 1) * k];
        let col = model.term_column(e.term);
        let mut s = 0.0;
        for j in 0..k {
            if row[j] > 0.0 {
                s += row[j] * (elog[j] + col[j] - row[j].ln());
            }
        }
        bound += e.weight * s;
    }
    bound
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdaConfig {
    /// Symmetric Dirichlet prior; `None` means `50 / K`.
    pub alpha: Option<f64>,
    /// Additive smoothing of the topic-term statistics.
    pub eta: f64,
    /// Relative size of the seeded uniform perturbation of the initial
    /// topics.
    pub init_jitter: f64,
    pub em_tol: f64,
    pub em_max_iters: usize,
    pub doc: InferOptions,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self {
            alpha: None,
            eta: 1e-2,
            init_jitter: 1.0,
            em_tol: 1e-5,
            em_max_iters: 60,
            doc: InferOptions::default(),
            seed: 0,
        }
    }
}

impl LdaConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(a) = self.alpha {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::Config("lda alpha must be positive".into()));
            }
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::Config("lda eta must be positive".into()));
        }
        if !(self.init_jitter.is_finite() && self.init_jitter >= 0.0) {
            return Err(Error::Config("lda init_jitter must be non-negative".into()));
        }
        if !(self.em_tol >= 0.0 && self.doc.tol >= 0.0) {
            return Err(Error::Config("lda tolerances must be non-negative".into()));
        }
        Ok(())
    }

    pub fn alpha_for(&self, k: usize) -> f64 {
        self.alpha.unwrap_or(50.0 / k as f64)
    }
}

/// Seeded initial model: `beta[k, v] ∝ eta * (1 + jitter * u)` with `u`
/// uniform in [0, 1).
pub fn init_model(vocab_size: usize, n_topics: usize, config: &LdaConfig) -> Result<LdaModel> {
    config.validate()?;
    if n_topics == 0 || vocab_size == 0 {
        return Err(Error::Config("LDA needs K >= 1 and V >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut log_beta = Vec::with_capacity(n_topics * vocab_size);
    for _ in 0..n_topics {
        let row: Vec<f64> = (0..vocab_size)
            .map(|_| config.eta * (1.0 + config.init_jitter * rng.gen::<f64>()))
            .collect();
        let s: f64 = row.iter().sum();
        log_beta.extend(row.iter().map(|x| (x / s).ln()));
    }
    let alpha = vec![config.alpha_for(n_topics); n_topics];
    Ok(LdaModel::build(alpha, log_beta, vocab_size))
}

#[derive(Debug, Clone)]
pub struct LdaFit {
    pub model: LdaModel,
    /// Corpus bound `sum_d ELBO_d + eta * sum_kv ln beta_kv` after each
    /// E-step.
    pub objective: Vec<f64>,
    pub converged: bool,
}

struct EStepShard {
    stats: Vec<f64>,
    bound: f64,
    gammas: Vec<Vec<f64>>,
}

fn e_step(model: &LdaModel, docs: &[WeightedDocument], gammas: &[Vec<f64>], opts: InferOptions) -> (Vec<f64>, f64, Vec<Vec<f64>>) {
    let (k, v) = (model.n_topics, model.vocab_size);
    let shards: Vec<usize> = (0..docs.len().div_ceil(SHARD_DOCS)).collect();
    let wave = rayon::current_num_threads().max(1);
    let mut stats = vec![0.0; k * v];
    let mut bound = 0.0;
    let mut new_gammas = Vec::with_capacity(docs.len());
    for chunk in shards.chunks(wave) {
        let parts: Vec<EStepShard> = chunk
            .par_iter()
            .map(|&s| {
                let range = s * SHARD_DOCS..((s + 1) * SHARD_DOCS).min(docs.len());
                let mut part = EStepShard {
                    stats: vec![0.0; k * v],
                    bound: 0.0,
                    gammas: Vec::with_capacity(range.len()),
                };
                for i in range {
                    let doc = &docs[i];
                    let warm = (!gammas.is_empty()).then(|| gammas[i].as_slice());
                    let state = infer_from(model, doc, warm, opts, None);
                    part.bound += elbo(model, doc, &state);
                    for (t, e) in doc.entries.iter().enumerate() {
                        let row = state.phi_row(t);
                        for j in 0..k {
                            part.stats[j * v + e.term as usize] += e.weight * row[j];
                        }
                    }
                    part.gammas.push(state.gamma);
                }
                part
            })
            .collect();
        for p in parts {
            for (a, b) in stats.iter_mut().zip(&p.stats) {
                *a += b;
            }
            bound += p.bound;
            new_gammas.extend(p.gammas);
        }
    }
    (stats, bound, new_gammas)
}

fn m_step(model: &LdaModel, stats: &[f64], eta: f64) -> LdaModel {
    let v = model.vocab_size;
    let mut log_beta = Vec::with_capacity(stats.len());
    for row in stats.chunks_exact(v) {
        let s: f64 = row.iter().map(|x| x + eta).sum();
        let ls = s.ln();
        log_beta.extend(row.iter().map(|x| (x + eta).ln() - ls));
    }
    LdaModel::build(model.alpha.clone(), log_beta, v)
}

fn prior_term(model: &LdaModel, eta: f64) -> f64 {
    eta * model.log_beta.iter().sum::<f64>()
}

/// Trains a K-topic model from the seeded initialization.
pub fn train_lda(
    docs: &[WeightedDocument],
    vocab_size: usize,
    n_topics: usize,
    config: &LdaConfig,
) -> Result<LdaFit> {
    let init = init_model(vocab_size, n_topics, config)?;
    train_lda_from(docs, init, config)
}

/// Variational EM starting from `init`. Each E-step warm-starts every
/// document from its previous gamma, so the tracked bound never decreases.
pub fn train_lda_from(docs: &[WeightedDocument], init: LdaModel, config: &LdaConfig) -> Result<LdaFit> {
    config.validate()?;
    if docs.iter().all(WeightedDocument::is_empty) {
        return Err(Error::InvalidInput(
            "LDA training corpus has no non-empty documents".into(),
        ));
    }
    for d in docs {
        init.check_doc(d)?;
    }
    let mut model = init;
    let mut gammas: Vec<Vec<f64>> = Vec::new();
    let mut objective: Vec<f64> = Vec::new();
    let mut converged = false;
    for it in 0..=config.em_max_iters {
        let (stats, bound, new_gammas) = e_step(&model, docs, &gammas, config.doc);
        gammas = new_gammas;
        let obj = bound + prior_term(&model, config.eta);
        log::debug!("lda iter {it}: bound {obj:.6}");
        let prev = objective.last().copied();
        objective.push(obj);
        if let Some(prev) = prev {
            if (obj - prev) / prev.abs().max(f64::MIN_POSITIVE) < config.em_tol {
                converged = true;
                break;
            }
        }
        if it == config.em_max_iters {
            break;
        }
        model = m_step(&model, &stats, config.eta);
    }
    Ok(LdaFit {
        model,
        objective,
        converged,
    })
}

/// Variational Dirichlet parameter of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorVector {
    pub utt_id: String,
    pub gamma: Vec<f64>,
}

/// One posterior per document, in input order.
pub fn extract_posteriors(
    model: &LdaModel,
    docs: &[WeightedDocument],
    opts: InferOptions,
) -> Result<Vec<PosteriorVector>> {
    docs.par_iter()
        .map(|d| {
            infer_document(model, d, opts).map(|s| PosteriorVector {
                utt_id: d.utt_id.clone(),
                gamma: s.gamma,
            })
        })
        .collect()
}

/// `id \t g1 g2 ... gK`, 9 significant digits.
pub fn write_posterior_file(posteriors: &[PosteriorVector], path: &Path) -> Result<()> {
    let mut w = util::create_writer(path)?;
    let io = |e| Error::io(path, e);
    for p in posteriors {
        write!(w, "{}\t", p.utt_id).map_err(io)?;
        for (i, g) in p.gamma.iter().enumerate() {
            if i > 0 {
                w.write_all(b" ").map_err(io)?;
            }
            w.write_all(util::fmt_sig9(*g).as_bytes()).map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_posterior_file(path: &Path) -> Result<Vec<PosteriorVector>> {
    let text = util::read_to_string(path)?;
    let mut out: Vec<PosteriorVector> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (id, rest) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, i + 1, "missing tab after id"))?;
        let gamma = rest
            .split_ascii_whitespace()
            .map(|x| x.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(path, i + 1, format!("bad value: {e}")))?;
        if gamma.iter().any(|g| !g.is_finite()) {
            return Err(Error::parse(path, i + 1, "non-finite value"));
        }
        if let Some(first) = out.first() {
            if first.gamma.len() != gamma.len() {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("expected {} values, found {}", first.gamma.len(), gamma.len()),
                ));
            }
        }
        out.push(PosteriorVector {
            utt_id: id.to_string(),
            gamma,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::docmodel::TermEntry;

    fn doc(entries: &[(u32, f64)]) -> WeightedDocument {
        WeightedDocument::from_entries(
            "d",
            entries
                .iter()
                .map(|&(term, weight)| TermEntry {
                    term,
                    count: 1,
                    weight,
                })
                .collect(),
        )
        .unwrap()
    }

    fn model_2x3() -> LdaModel {
        let b = [[0.7f64, 0.2, 0.1], [0.1, 0.3, 0.6]];
        let log_beta = b.iter().flatten().map(|x| x.ln()).collect();
        LdaModel::new(vec![0.5, 0.8], log_beta, 3).unwrap()
    }

    #[test]
    fn empty_document_keeps_prior() {
        let m = model_2x3();
        let s = infer_document(&m, &doc(&[]), InferOptions::default()).unwrap();
        assert_eq!(s.gamma, m.alpha());
        assert!(s.phi.is_empty());
        assert_eq!(elbo(&m, &doc(&[]), &s), 0.0);
    }

    #[test]
    fn single_topic_is_forced() {
        let m = LdaModel::new(vec![0.3], vec![(0.5f64).ln(), (0.5f64).ln()], 2).unwrap();
        let d = doc(&[(0, 1.5), (1, 0.25)]);
        let s = infer_document(&m, &d, InferOptions::default()).unwrap();
        assert!((s.gamma[0] - (0.3 + 1.75)).abs() < 1e-12);
        assert!(s.phi.iter().all(|p| *p == 1.0));
    }

    #[test]
    fn fixed_point_and_monotone_trace() {
        let m = model_2x3();
        let d = doc(&[(0, 2.0), (1, 0.5), (2, 1.25)]);
        let opts = InferOptions {
            tol: 1e-12,
            max_iters: 500,
        };
        let (s, trace) = infer_document_traced(&m, &d, opts).unwrap();
        for j in 0..2 {
            let implied: f64 = m.alpha()[j]
                + d.entries
                    .iter()
                    .enumerate()
                    .map(|(t, e)| e.weight * s.phi_row(t)[j])
                    .sum::<f64>();
            assert!((s.gamma[j] - implied).abs() < 1e-9);
        }
        for t in 0..3 {
            assert!((s.phi_row(t).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        for w in trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-8, "{w:?}");
        }
    }

    #[test]
    fn out_of_range_term_rejected() {
        let m = model_2x3();
        assert!(infer_document(&m, &doc(&[(3, 1.0)]), InferOptions::default()).is_err());
    }

    #[test]
    fn single_topic_training_is_closed_form() {
        let docs = vec![
            WeightedDocument::from_counts("a", &[0, 0, 1]),
            WeightedDocument::from_counts("b", &[2, 1]),
        ];
        let cfg = LdaConfig::default();
        let fit = train_lda(&docs, 4, 1, &cfg).unwrap();
        let counts = [2.0, 2.0, 1.0, 0.0];
        let total: f64 = counts.iter().map(|c| c + cfg.eta).sum();
        for (v, c) in counts.iter().enumerate() {
            let want = ((c + cfg.eta) / total).ln();
            assert!((fit.model.topic(0)[v] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn all_empty_corpus_rejected() {
        let docs = vec![doc(&[]), doc(&[])];
        assert!(matches!(
            train_lda(&docs, 3, 2, &LdaConfig::default()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let docs: Vec<_> = (0..40u32)
            .map(|i| WeightedDocument::from_counts(format!("d{i}"), &[i % 7, (i * 3) % 7, 6, i % 2]))
            .collect();
        let cfg = LdaConfig {
            seed: 5,
            ..Default::default()
        };
        let a = train_lda(&docs, 7, 3, &cfg).unwrap();
        let b = train_lda(&docs, 7, 3, &cfg).unwrap();
        assert_eq!(a.model.to_bytes(), b.model.to_bytes());
        for w in a.objective.windows(2) {
            assert!(w[1] >= w[0] - 1e-6 * w[0].abs());
        }
    }

    #[test]
    fn posteriors_are_per_document() {
        let m = model_2x3();
        let d1 = doc(&[(0, 2.0), (2, 1.0)]);
        let mut d2 = d1.clone();
        d2.utt_id = "copy".into();
        let docs = vec![d1, doc(&[]), d2];
        let post = extract_posteriors(&m, &docs, InferOptions::default()).unwrap();
        assert_eq!(post.len(), 3);
        assert_eq!(post[0].gamma, post[2].gamma);
        assert_eq!(post[1].gamma, m.alpha());
        assert_eq!(post[2].utt_id, "copy");
        for p in &post {
            assert!(p.gamma.iter().sum::<f64>() >= m.alpha().iter().sum::<f64>());
        }
    }

    #[test]
    fn model_file_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.lda");
        let m = model_2x3();
        m.save(&p).unwrap();
        assert_eq!(LdaModel::load(&p).unwrap(), m);
        let bytes = m.to_bytes();
        assert_eq!(bytes.len(), 16 + 8 * (2 + 6));
        let mut bad = bytes.clone();
        bad[16..24].copy_from_slice(&(-1.0f64).to_le_bytes());
        assert!(matches!(LdaModel::from_bytes(&bad, &p), Err(Error::InvalidModel(_))));
        let mut bad = bytes.clone();
        bad[32..40].copy_from_slice(&0.0f64.to_le_bytes());
        assert!(matches!(LdaModel::from_bytes(&bad, &p), Err(Error::InvalidModel(_))));
        assert!(matches!(
            LdaModel::from_bytes(&bytes[..bytes.len() - 1], &p),
            Err(Error::Truncated { .. })
        ));
    }

    #[test]
    fn posterior_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.txt");
        let post = vec![
            PosteriorVector {
                utt_id: "a".into(),
                gamma: vec![6.25, 1.0 / 3.0],
            },
            PosteriorVector {
                utt_id: "b".into(),
                gamma: vec![1e-7, 12345.6789],
            },
        ];
        write_posterior_file(&post, &p).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "a\t6.25 0.333333333\nb\t1e-7 12345.6789\n"
        );
        let back = read_posterior_file(&p).unwrap();
        assert_eq!(back[1].gamma, post[1].gamma);
        std::fs::write(&p, "a\t1 2\nb\t1\n").unwrap();
        assert!(read_posterior_file(&p).is_err());
    }
}
