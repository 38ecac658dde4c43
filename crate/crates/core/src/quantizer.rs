//! Diagonal-covariance GMM codebook and frame quantization into acoustic
//! words.

use std::io::Write;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::FeatureMatrix;
use crate::error::{Error, Result};
use crate::util::{self, LeReader};

pub const GMM_MAGIC: &[u8; 4] = b"AGMM";
pub const GMM_VERSION: u32 = 1;
pub const DEFAULT_COMPONENTS: usize = 1024;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const SHARD: usize = 4096;
const WAVE: usize = 64;

/// A pool of frames for codebook training, row-major.
#[derive(Debug, Clone, Default)]
pub struct FrameSet {
    dim: usize,
    data: Vec<f32>,
}

impl FrameSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
        }
    }

    pub fn from_rows(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::ShapeMismatch {
                what: "frame set".into(),
                expected: format!("a multiple of {dim} values"),
                found: format!("{} values", data.len()),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("frame set contains non-finite values".into()));
        }
        Ok(Self { dim, data })
    }

    pub fn push(&mut self, row: &[f32]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn extend_from_matrix(&mut self, m: &FeatureMatrix) -> Result<()> {
        if m.frame_dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: m.frame_dim(),
            });
        }
        self.data.extend_from_slice(m.data());
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    n_components: usize,
    dim: usize,
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
    // log w_k - 0.5 * sum_j ln(2 pi var_kj)
    log_norm: Vec<f64>,
    inv_var: Vec<f64>,
}

impl GmmModel {
    /// Builds a model, checking that weights are positive and sum to one and
    /// that every variance is positive.
    pub fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        let n = weights.len();
        if n == 0 {
            return Err(Error::InvalidModel("GMM needs at least one component".into()));
        }
        if !means.len().is_multiple_of(n) || means.is_empty() || variances.len() != means.len() {
            return Err(Error::InvalidModel(format!(
                "inconsistent shapes: {} weights, {} means, {} variances",
                n,
                means.len(),
                variances.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidModel("weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidModel(format!("weights sum to {total}, not 1")));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidModel("non-finite mean".into()));
        }
        if variances.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidModel("variances must be positive".into()));
        }
        Ok(Self::build(weights, means, variances))
    }

    fn build(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Self {
        let n = weights.len();
        let dim = means.len() / n;
        let log_norm = (0..n)
            .map(|k| {
                let v = &variances[k * dim..(k + 1) * dim];
                weights[k].ln() - 0.5 * v.iter().map(|x| LN_2PI + x.ln()).sum::<f64>()
            })
            .collect();
        let inv_var = variances.iter().map(|v| 1.0 / v).collect();
        Self {
            n_components: n,
            dim,
            weights,
            means,
            variances,
            log_norm,
            inv_var,
        }
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        &self.means[k * self.dim..(k + 1) * self.dim]
    }

    pub fn variance(&self, k: usize) -> &[f64] {
        &self.variances[k * self.dim..(k + 1) * self.dim]
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got,
            });
        }
        Ok(())
    }

    /// ln(w_k N(x | mu_k, var_k)) for every component.
    fn log_joint<T: Copy + Into<f64>>(&self, x: &[T], out: &mut [f64]) {
        let d = self.dim;
        for (k, o) in out.iter_mut().enumerate() {
            let mu = &self.means[k * d..(k + 1) * d];
            let iv = &self.inv_var[k * d..(k + 1) * d];
            let mut q = 0.0;
            for j in 0..d {
                let diff = x[j].into() - mu[j];
                q += diff * diff * iv[j];
            }
            *o = self.log_norm[k] - 0.5 * q;
        }
    }

    /// Log density of one frame under the mixture.
    pub fn log_likelihood(&self, frame: &[f64]) -> Result<f64> {
        self.check_dim(frame.len())?;
        let mut lj = vec![0.0; self.n_components];
        self.log_joint(frame, &mut lj);
        Ok(util::log_sum_exp(&lj))
    }

    /// Component posteriors P(G_n | x), computed in log space.
    pub fn posteriors(&self, frame: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(frame.len())?;
        let mut lj = vec![0.0; self.n_components];
        self.log_joint(frame, &mut lj);
        let lse = util::log_sum_exp(&lj);
        Ok(lj.iter().map(|l| (l - lse).exp()).collect())
    }

    fn argmax<T: Copy + Into<f64>>(&self, x: &[T], scratch: &mut [f64]) -> u32 {
        self.log_joint(x, scratch);
        let mut best = 0;
        for k in 1..scratch.len() {
            if scratch[k] > scratch[best] {
                best = k;
            }
        }
        best as u32
    }

    /// Index of the most probable component; ties go to the lowest index.
    pub fn most_likely(&self, frame: &[f64]) -> Result<u32> {
        self.check_dim(frame.len())?;
        let mut scratch = vec![0.0; self.n_components];
        Ok(self.argmax(frame, &mut scratch))
    }

    /// Maps every frame of `matrix` to its acoustic word.
    pub fn quantize(&self, matrix: &FeatureMatrix, utt_id: &str) -> Result<AcousticDocument> {
        self.check_dim(matrix.frame_dim())?;
        let mut scratch = vec![0.0; self.n_components];
        let tokens = matrix
            .rows()
            .map(|row| self.argmax(row, &mut scratch))
            .collect();
        Ok(AcousticDocument {
            utt_id: utt_id.to_string(),
            tokens,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(GMM_MAGIC);
        out.extend_from_slice(&GMM_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n_components as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        util::push_f64s(&mut out, &self.weights);
        util::push_f64s(&mut out, &self.means);
        util::push_f64s(&mut out, &self.variances);
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = LeReader::new(bytes, path);
        r.magic(GMM_MAGIC)?;
        let version = r.u32()?;
        if version != GMM_VERSION {
            return Err(Error::UnsupportedVersion {
                path: path.to_path_buf(),
                version,
            });
        }
        let n = r.u32()? as usize;
        let dim = r.u32()? as usize;
        r.require(8 * (n as u64 + 2 * n as u64 * dim as u64))?;
        let weights = r.f64_vec(n)?;
        let means = r.f64_vec(n * dim)?;
        let variances = r.f64_vec(n * dim)?;
        r.finish()?;
        if dim == 0 {
            return Err(Error::InvalidModel("GMM dimension is zero".into()));
        }
        Self::new(weights, means, variances)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        util::write_all(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&util::read_bytes(path)?, path)
    }
}

/// An utterance as a sequence of acoustic words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcousticDocument {
    pub utt_id: String,
    pub tokens: Vec<u32>,
}

pub fn write_token_file(docs: &[AcousticDocument], path: &Path) -> Result<()> {
    let mut w = util::create_writer(path)?;
    let io = |e| Error::io(path, e);
    for d in docs {
        write!(w, "{}\t", d.utt_id).map_err(io)?;
        for (i, t) in d.tokens.iter().enumerate() {
            if i > 0 {
                w.write_all(b" ").map_err(io)?;
            }
            write!(w, "{t}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_token_file(path: &Path) -> Result<Vec<AcousticDocument>> {
    let text = util::read_to_string(path)?;
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (id, rest) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, i + 1, "missing tab after id"))?;
        let tokens = rest
            .split_ascii_whitespace()
            .map(|t| t.parse::<u32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(path, i + 1, format!("bad token: {e}")))?;
        docs.push(AcousticDocument {
            utt_id: id.to_string(),
            tokens,
        });
    }
    Ok(docs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmConfig {
    pub max_iters: usize,
    /// Relative log-likelihood improvement below which EM stops.
    pub tol: f64,
    pub seed: u64,
    /// Frames used for k-means++ seeding.
    pub init_subsample: usize,
    /// Variance floor as a fraction of the global per-dimension variance.
    pub var_floor_ratio: f64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tol: 1e-5,
            seed: 0,
            init_subsample: 200_000,
            var_floor_ratio: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Total log-likelihood of the training frames, one entry per
    /// evaluated parameter set, starting with the initialization.
    pub log_likelihoods: Vec<f64>,
    pub converged: bool,
    /// Number of (component, dimension) variances held at the floor after
    /// the final M-step.
    pub floored: usize,
}

struct Accum {
    nk: Vec<f64>,
    sx: Vec<f64>,
    sxx: Vec<f64>,
    ll: f64,
}

impl Accum {
    fn zeros(n: usize, d: usize) -> Self {
        Self {
            nk: vec![0.0; n],
            sx: vec![0.0; n * d],
            sxx: vec![0.0; n * d],
            ll: 0.0,
        }
    }

    fn add(&mut self, other: &Accum) {
        for (a, b) in self.nk.iter_mut().zip(&other.nk) {
            *a += b;
        }
        for (a, b) in self.sx.iter_mut().zip(&other.sx) {
            *a += b;
        }
        for (a, b) in self.sxx.iter_mut().zip(&other.sxx) {
            *a += b;
        }
        self.ll += other.ll;
    }
}

/// Maps fixed-size shards in parallel and folds the results in shard order,
/// so the outcome does not depend on the thread count.
fn ordered_shard_fold<T: Send>(
    n: usize,
    init: T,
    map: impl Fn(std::ops::Range<usize>) -> T + Sync,
    fold: impl Fn(&mut T, T),
) -> T {
    let shards: Vec<_> = (0..n.div_ceil(SHARD))
        .map(|s| s * SHARD..((s + 1) * SHARD).min(n))
        .collect();
    let mut acc = init;
    for wave in shards.chunks(WAVE) {
        let parts: Vec<T> = wave.par_iter().map(|r| map(r.clone())).collect();
        for p in parts {
            fold(&mut acc, p);
        }
    }
    acc
}

fn e_step(model: &GmmModel, frames: &FrameSet) -> Accum {
    let (n, d) = (model.n_components, model.dim);
    ordered_shard_fold(
        frames.len(),
        Accum::zeros(n, d),
        |range| {
            let mut acc = Accum::zeros(n, d);
            let mut lj = vec![0.0; n];
            for i in range {
                let x = frames.row(i);
                model.log_joint(x, &mut lj);
                let lse = util::log_sum_exp(&lj);
                acc.ll += lse;
                for k in 0..n {
                    let r = (lj[k] - lse).exp();
                    if r == 0.0 {
                        continue;
                    }
                    acc.nk[k] += r;
                    for j in 0..d {
                        let xj = x[j] as f64;
                        acc.sx[k * d + j] += r * xj;
                        acc.sxx[k * d + j] += r * xj * xj;
                    }
                }
            }
            acc
        },
        |a, b| a.add(&b),
    )
}

fn m_step(prev: &GmmModel, acc: &Accum, floor: &[f64], total: f64) -> (GmmModel, usize) {
    let (n, d) = (prev.n_components, prev.dim);
    let mut weights = Vec::with_capacity(n);
    let mut means = prev.means.clone();
    let mut variances = prev.variances.clone();
    let mut floored = 0;
    for k in 0..n {
        let nk = acc.nk[k];
        if nk <= f64::MIN_POSITIVE * total {
            // Component received no mass; keep its Gaussian, shrink its weight.
            weights.push(f64::MIN_POSITIVE);
            continue;
        }
        weights.push(nk / total);
        for j in 0..d {
            let mu = acc.sx[k * d + j] / nk;
            let var = acc.sxx[k * d + j] / nk - mu * mu;
            means[k * d + j] = mu;
            variances[k * d + j] = if var < floor[j] {
                floored += 1;
                floor[j]
            } else {
                var
            };
        }
    }
    let s: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= s;
    }
    (GmmModel::build(weights, means, variances), floored)
}

fn global_moments(frames: &FrameSet) -> (Vec<f64>, Vec<f64>) {
    let d = frames.dim();
    let n = frames.len() as f64;
    let mut mean = vec![0.0; d];
    for i in 0..frames.len() {
        for (m, x) in mean.iter_mut().zip(frames.row(i)) {
            *m += *x as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for i in 0..frames.len() {
        for ((v, x), m) in var.iter_mut().zip(frames.row(i)).zip(&mean) {
            let diff = *x as f64 - m;
            *v += diff * diff;
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    (mean, var)
}

fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum()
}

/// k-means++ seeding over a uniform subsample of the frames.
fn kmeanspp_seeds(frames: &FrameSet, n: usize, subsample: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let total = frames.len();
    let m = subsample.max(n).min(total);
    let mut picks = index::sample(rng, total, m).into_vec();
    picks.sort_unstable();
    let rows: Vec<&[f32]> = picks.iter().map(|&i| frames.row(i)).collect();

    let mut centers: Vec<&[f32]> = Vec::with_capacity(n);
    centers.push(rows[rng.gen_range(0..rows.len())]);
    let mut dist: Vec<f64> = rows.par_iter().map(|r| sq_dist(r, centers[0])).collect();
    while centers.len() < n {
        let next = match WeightedIndex::new(&dist) {
            Ok(w) => w.sample(rng),
            // All remaining mass is zero: duplicate points only.
            Err(_) => rng.gen_range(0..rows.len()),
        };
        let c = rows[next];
        centers.push(c);
        dist.par_iter_mut().zip(&rows).for_each(|(d, r)| {
            let nd = sq_dist(r, c);
            if nd < *d {
                *d = nd;
            }
        });
    }
    centers
        .iter()
        .flat_map(|c| c.iter().map(|x| *x as f64))
        .collect()
}

/// Fits a diagonal GMM by EM from k-means++ seeds.
pub fn train_gmm(frames: &FrameSet, n_components: usize, config: &GmmConfig) -> Result<GmmFit> {
    if n_components == 0 {
        return Err(Error::Config("n_components must be positive".into()));
    }
    if frames.len() < n_components {
        return Err(Error::InvalidInput(format!(
            "{} frames are too few for {} components",
            frames.len(),
            n_components
        )));
    }
    let first = frames.row(0);
    if (1..frames.len()).all(|i| frames.row(i) == first) {
        return Err(Error::Degenerate(
            "all training frames are identical; every component would collapse".into(),
        ));
    }
    let d = frames.dim();
    let (_, gvar) = global_moments(frames);
    let floor: Vec<f64> = gvar
        .iter()
        .map(|v| (config.var_floor_ratio * v).max(1e-10))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let means = kmeanspp_seeds(frames, n_components, config.init_subsample, &mut rng);
    let variances: Vec<f64> = (0..n_components)
        .flat_map(|_| gvar.iter().zip(&floor).map(|(v, f)| v.max(*f)))
        .collect();
    let weights = vec![1.0 / n_components as f64; n_components];
    let mut model = GmmModel::build(weights, means, variances);
    debug_assert_eq!(model.dim, d);

    let total = frames.len() as f64;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut floored = 0;
    for it in 0..=config.max_iters {
        let acc = e_step(&model, frames);
        let ll = acc.ll;
        if let Some(&prev) = trace.last() {
            let rel = (ll - prev) / f64::abs(prev).max(f64::MIN_POSITIVE);
            trace.push(ll);
            if rel < config.tol {
                converged = true;
                break;
            }
        } else {
            trace.push(ll);
        }
        if it == config.max_iters {
            break;
        }
        let (next, f) = m_step(&model, &acc, &floor, total);
        model = next;
        floored = f;
        log::debug!("gmm iter {it}: loglik {ll:.6}, floored {f}");
    }
    if floored > 0 {
        log::warn!("{floored} GMM variances held at the floor");
    }
    Ok(GmmFit {
        model,
        log_likelihoods: trace,
        converged,
        floored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn two_clusters(per: usize, seed: u64) -> FrameSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fs = FrameSet::new(2);
        for c in [-10.0f32, 10.0] {
            for _ in 0..per {
                let row: Vec<f32> = (0..2)
                    .map(|_| c + rng.sample::<f64, _>(StandardNormal) as f32)
                    .collect();
                fs.push(&row).unwrap();
            }
        }
        fs
    }

    #[test]
    fn single_component_matches_sample_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut fs = FrameSet::new(3);
        for _ in 0..2000 {
            let row: Vec<f32> = [1.0, -2.0, 5.0]
                .iter()
                .map(|m| (m + 2.0 * rng.sample::<f64, _>(StandardNormal)) as f32)
                .collect();
            fs.push(&row).unwrap();
        }
        let fit = train_gmm(&fs, 1, &GmmConfig::default()).unwrap();
        let (mean, var) = global_moments(&fs);
        assert!((fit.model.weights()[0] - 1.0).abs() < 1e-12);
        for j in 0..3 {
            let se = (var[j] / 2000.0).sqrt();
            assert!((fit.model.mean(0)[j] - mean[j]).abs() < 3.0 * se);
            assert!((fit.model.variance(0)[j] - var[j]).abs() < 1e-6 * var[j]);
        }
    }

    #[test]
    fn recovers_two_separated_clusters() {
        let fs = two_clusters(500, 11);
        let fit = train_gmm(&fs, 2, &GmmConfig::default()).unwrap();
        let m = &fit.model;
        let (lo, hi) = if m.mean(0)[0] < m.mean(1)[0] { (0, 1) } else { (1, 0) };
        for j in 0..2 {
            assert!((m.mean(lo)[j] + 10.0).abs() < 0.5);
            assert!((m.mean(hi)[j] - 10.0).abs() < 0.5);
        }
        for w in m.weights() {
            assert!((w - 0.5).abs() < 0.1);
        }
        for pair in fit.log_likelihoods.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-8, "{pair:?}");
        }
    }

    #[test]
    fn training_is_bit_deterministic() {
        let fs = two_clusters(300, 5);
        let cfg = GmmConfig {
            seed: 17,
            ..Default::default()
        };
        let a = train_gmm(&fs, 4, &cfg).unwrap();
        let b = train_gmm(&fs, 4, &cfg).unwrap();
        assert_eq!(a.model.to_bytes(), b.model.to_bytes());
    }

    #[test]
    fn too_few_and_degenerate_frames() {
        let mut fs = FrameSet::new(1);
        fs.push(&[1.0]).unwrap();
        assert!(matches!(
            train_gmm(&fs, 2, &GmmConfig::default()),
            Err(Error::InvalidInput(_))
        ));
        fs.push(&[1.0]).unwrap();
        fs.push(&[1.0]).unwrap();
        assert!(matches!(
            train_gmm(&fs, 2, &GmmConfig::default()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn single_component_posterior_is_one() {
        let m = GmmModel::new(vec![1.0], vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        assert_eq!(m.posteriors(&[123.0, -4.0]).unwrap(), vec![1.0]);
        let fm = FeatureMatrix::new(5, 2, (0..10).map(|x| x as f32).collect()).unwrap();
        assert_eq!(m.quantize(&fm, "u").unwrap().tokens, vec![0; 5]);
    }

    #[test]
    fn frame_at_mean_of_far_component() {
        let m = GmmModel::new(vec![0.5, 0.5], vec![-100.0, 100.0], vec![1.0, 1.0]).unwrap();
        let p = m.posteriors(&[100.0]).unwrap();
        assert!(p[1] > 0.99);
        // ln p0 - ln p1 = -(200^2)/2 exactly
        let lp = m.posteriors(&[-100.0]).unwrap();
        assert!(lp[0] > 0.99);
    }

    #[test]
    fn equidistant_frame_is_split_evenly() {
        let m = GmmModel::new(vec![0.5, 0.5], vec![-3.0, 1.0, 3.0, 1.0], vec![2.0, 2.0, 2.0, 2.0])
            .unwrap();
        let p = m.posteriors(&[0.0, 7.0]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-9 && (p[1] - 0.5).abs() < 1e-9);
        assert_eq!(m.most_likely(&[0.0, 7.0]).unwrap(), 0);
    }

    #[test]
    fn alternating_frames_alternate_tokens() {
        let m = GmmModel::new(vec![0.5, 0.5], vec![-50.0, 50.0], vec![1.0, 1.0]).unwrap();
        let rows: Vec<f32> = vec![-49.0, 51.0, -50.5, 49.5, -50.0, 50.0];
        let fm = FeatureMatrix::new(6, 1, rows.clone()).unwrap();
        let doc = m.quantize(&fm, "alt").unwrap();
        let direct: Vec<u32> = rows
            .iter()
            .map(|x| {
                let p = m.posteriors(&[*x as f64]).unwrap();
                if p[1] > p[0] { 1 } else { 0 }
            })
            .collect();
        assert_eq!(doc.tokens, vec![0, 1, 0, 1, 0, 1]);
        assert_eq!(doc.tokens, direct);
    }

    #[test]
    fn empty_matrix_gives_empty_tokens() {
        let m = GmmModel::new(vec![0.5, 0.5], vec![-1.0, 1.0], vec![1.0, 1.0]).unwrap();
        let fm = FeatureMatrix::new(0, 1, vec![]).unwrap();
        assert!(m.quantize(&fm, "e").unwrap().tokens.is_empty());
    }

    #[test]
    fn dimension_mismatch() {
        let m = GmmModel::new(vec![1.0], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            m.posteriors(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
        let fm = FeatureMatrix::new(1, 3, vec![0.0; 3]).unwrap();
        assert!(m.quantize(&fm, "x").is_err());
    }

    #[test]
    fn model_file_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.bin");
        let m = GmmModel::new(vec![0.25, 0.75], vec![1.0, 2.0, 3.0, 4.0], vec![0.5, 1.5, 2.5, 3.5])
            .unwrap();
        m.save(&p).unwrap();
        assert_eq!(GmmModel::load(&p).unwrap(), m);

        let mut bytes = m.to_bytes();
        // first weight -> 0.5, sum no longer 1
        bytes[16..24].copy_from_slice(&0.5f64.to_le_bytes());
        assert!(matches!(
            GmmModel::from_bytes(&bytes, &p),
            Err(Error::InvalidModel(_))
        ));
        let mut bytes = m.to_bytes();
        let last = bytes.len() - 8;
        bytes[last..].copy_from_slice(&(-1.0f64).to_le_bytes());
        assert!(matches!(
            GmmModel::from_bytes(&bytes, &p),
            Err(Error::InvalidModel(_))
        ));
        let bytes = m.to_bytes();
        assert!(matches!(
            GmmModel::from_bytes(&bytes[..bytes.len() - 3], &p),
            Err(Error::Truncated { .. })
        ));
        assert!(matches!(
            GmmModel::from_bytes(b"XGMM\x01\0\0\0", &p),
            Err(Error::BadMagic { .. })
        ));
    }

    #[test]
    fn token_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.txt");
        let docs = vec![
            AcousticDocument {
                utt_id: "a".into(),
                tokens: vec![3, 1, 4],
            },
            AcousticDocument {
                utt_id: "b".into(),
                tokens: vec![],
            },
        ];
        write_token_file(&docs, &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "a\t3 1 4\nb\t\n");
        assert_eq!(read_token_file(&p).unwrap(), docs);
    }
}
