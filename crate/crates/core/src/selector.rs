//! Threshold-gated greedy selection of pool utterances nearest to target
//! centroids under cosine distance.
//!
//! Passes repeat over the centroids in ascending id order. Each centroid
//! takes the nearest remaining pool utterance (ties to the smaller utterance
//! id) when its distance is below `lambda`, and that utterance leaves the
//! pool immediately. Selection ends after a pass that takes nothing, when the
//! pool is empty, or when the next pick would exceed the hour budget.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::{self, Manifest};
use crate::error::{Error, Result};
use crate::lda::PosteriorVector;
use crate::util;

pub const DEFAULT_LAMBDA: f64 = 0.2;

/// Slack on hour-budget comparisons so a budget equal to a sum of durations
/// is not rejected by rounding.
const HOURS_EPS: f64 = 1e-9;

/// Nearest candidates kept per centroid between full rescans of the pool.
const BUFFER: usize = 64;

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn distance_with_norms(a: &[f64], na: f64, b: &[f64], nb: f64) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
}

/// `1 - a.b / (|a| |b|)`. Errors on a zero vector or mismatched lengths.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::InvalidInput(
            "cosine distance is undefined for a zero vector".into(),
        ));
    }
    Ok(distance_with_norms(a, na, b, nb))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig {
    pub lambda: f64,
    pub max_hours: Option<f64>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            max_hours: None,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::Config(format!(
                "lambda must lie in (0, 1], got {}",
                self.lambda
            )));
        }
        if let Some(h) = self.max_hours {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::Config(format!("max_hours must be positive, got {h}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectedUtterance {
    pub utt_id: String,
    /// Centroid that picked the utterance; `None` for random selections.
    pub centroid: Option<usize>,
    pub distance: Option<f64>,
    /// 1-based pass number.
    pub pass_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// A full pass selected nothing.
    NoProgress,
    PoolExhausted,
    Budget,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::NoProgress => "no-progress",
            StopReason::PoolExhausted => "pool-exhausted",
            StopReason::Budget => "budget",
        }
    }
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StopReason {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "no-progress" => Ok(StopReason::NoProgress),
            "pool-exhausted" => Ok(StopReason::PoolExhausted),
            "budget" => Ok(StopReason::Budget),
            _ => Err(format!("unknown stop reason {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub selected: Vec<SelectedUtterance>,
    pub total_hours: f64,
    pub passes: usize,
    pub stop: StopReason,
}

impl SelectionResult {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.selected.iter().map(|s| s.utt_id.as_str())
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }
}

/// Pool vectors in a fixed order together with their ids and durations.
struct Pool<'a> {
    vectors: Vec<&'a [f64]>,
    norms: Vec<f64>,
    ids: Vec<&'a str>,
    hours: Vec<f64>,
}

fn prepare_pool<'a>(posteriors: &'a [PosteriorVector], manifest: &'a Manifest) -> Result<Pool<'a>> {
    let by_id: HashMap<&str, &PosteriorVector> =
        posteriors.iter().map(|p| (p.utt_id.as_str(), p)).collect();
    if by_id.len() != posteriors.len() {
        return Err(Error::InvalidInput("duplicate ids among pool posteriors".into()));
    }
    if posteriors.len() != manifest.len() {
        return Err(Error::InvalidInput(format!(
            "{} pool posteriors for {} manifest utterances",
            posteriors.len(),
            manifest.len()
        )));
    }
    // Sorted by id so that index order is the tie-break order.
    let mut utts: Vec<_> = manifest.utterances.iter().collect();
    utts.sort_by(|a, b| a.id.cmp(&b.id));
    let mut pool = Pool {
        vectors: Vec::with_capacity(utts.len()),
        norms: Vec::with_capacity(utts.len()),
        ids: Vec::with_capacity(utts.len()),
        hours: Vec::with_capacity(utts.len()),
    };
    let dim = posteriors.first().map_or(0, |p| p.gamma.len());
    for u in utts {
        let p = by_id.get(u.id.as_str()).ok_or_else(|| {
            Error::InvalidInput(format!("manifest utterance {} has no posterior", u.id))
        })?;
        if p.gamma.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.gamma.len(),
            });
        }
        let n = l2_norm(&p.gamma);
        if n == 0.0 {
            return Err(Error::InvalidInput(format!("posterior of {} is zero", u.id)));
        }
        pool.vectors.push(&p.gamma);
        pool.norms.push(n);
        pool.ids.push(&u.id);
        pool.hours.push(u.hours());
    }
    Ok(pool)
}

fn check_centroids(centroids: &[Vec<f64>], dim: usize) -> Result<Vec<f64>> {
    centroids
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if c.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: c.len(),
                });
            }
            let n = l2_norm(c);
            if n == 0.0 || !n.is_finite() {
                return Err(Error::InvalidInput(format!("centroid {i} is zero or non-finite")));
            }
            Ok(n)
        })
        .collect()
}

/// Per-centroid buffer of the nearest live candidates, smallest last.
struct Nearest {
    items: Vec<(f64, usize)>,
    complete: bool,
}

fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

impl Nearest {
    fn new() -> Self {
        Self {
            items: Vec::new(),
            complete: false,
        }
    }

    /// Nearest live pool index and its distance. Entries outside the buffer
    /// were at least as far as every buffered entry when it was filled, and
    /// the pool only shrinks, so a live buffered entry is the global minimum.
    fn min(&mut self, centroid: &[f64], norm: f64, pool: &Pool<'_>, alive: &[bool], remaining: usize) -> Option<(f64, usize)> {
        loop {
            while let Some(&(d, i)) = self.items.last() {
                if alive[i] {
                    return Some((d, i));
                }
                self.items.pop();
            }
            if self.complete || remaining == 0 {
                return None;
            }
            let mut all: Vec<(f64, usize)> = (0..pool.vectors.len())
                .into_par_iter()
                .filter(|&i| alive[i])
                .map(|i| (distance_with_norms(centroid, norm, pool.vectors[i], pool.norms[i]), i))
                .collect();
            if all.len() > BUFFER {
                all.select_nth_unstable_by(BUFFER - 1, by_distance_then_index);
                all.truncate(BUFFER);
            } else {
                self.complete = true;
            }
            all.sort_unstable_by(|a, b| by_distance_then_index(b, a));
            self.items = all;
        }
    }
}

/// Greedy threshold selection of pool utterances; see the module docs.
pub fn select(
    pool_posteriors: &[PosteriorVector],
    pool_manifest: &Manifest,
    centroids: &[Vec<f64>],
    config: &SelectionConfig,
) -> Result<SelectionResult> {
    config.validate()?;
    let pool = prepare_pool(pool_posteriors, pool_manifest)?;
    let dim = pool.vectors.first().map_or(0, |v| v.len());
    let cnorms = if pool.vectors.is_empty() {
        centroids.iter().map(|c| l2_norm(c)).collect()
    } else {
        check_centroids(centroids, dim)?
    };

    let mut alive = vec![true; pool.vectors.len()];
    let mut remaining = pool.vectors.len();
    let mut nearest: Vec<Nearest> = centroids.iter().map(|_| Nearest::new()).collect();
    let mut selected = Vec::new();
    let mut total_hours = 0.0;
    let mut passes = 0;
    let budget = config.max_hours;

    let stop = loop {
        if remaining == 0 {
            break StopReason::PoolExhausted;
        }
        passes += 1;
        let mut count = 0;
        for (c, centroid) in centroids.iter().enumerate() {
            let Some((d, i)) = nearest[c].min(centroid, cnorms[c], &pool, &alive, remaining) else {
                continue;
            };
            if d < config.lambda {
                if let Some(max) = budget {
                    if total_hours + pool.hours[i] > max + HOURS_EPS {
                        return Ok(SelectionResult {
                            selected,
                            total_hours,
                            passes,
                            stop: StopReason::Budget,
                        });
                    }
                }
                alive[i] = false;
                remaining -= 1;
                total_hours += pool.hours[i];
                selected.push(SelectedUtterance {
                    utt_id: pool.ids[i].to_string(),
                    centroid: Some(c),
                    distance: Some(d),
                    pass_index: passes,
                });
                count += 1;
            }
        }
        if count == 0 {
            break StopReason::NoProgress;
        }
    };
    Ok(SelectionResult {
        selected,
        total_hours,
        passes,
        stop,
    })
}

/// Replays `result` step by step against the pool snapshot it was drawn
/// from and reports the first step that the selection rule would not have
/// produced.
pub fn verify_selection(
    pool_posteriors: &[PosteriorVector],
    pool_manifest: &Manifest,
    centroids: &[Vec<f64>],
    config: &SelectionConfig,
    result: &SelectionResult,
) -> Result<()> {
    let pool = prepare_pool(pool_posteriors, pool_manifest)?;
    let index: HashMap<&str, usize> = pool.ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut alive = vec![true; pool.vectors.len()];
    let fail = |msg: String| Err(Error::InvalidInput(format!("selection replay: {msg}")));

    let nearest = |c: usize, alive: &[bool]| -> Option<(f64, usize)> {
        (0..pool.vectors.len())
            .filter(|&i| alive[i])
            .map(|i| (cosine_distance(&centroids[c], pool.vectors[i]).unwrap(), i))
            .min_by(by_distance_then_index)
    };
    // Every centroid in `from..to` of `pass` must have had nothing below lambda.
    let check_skipped = |from: usize, to: usize, alive: &[bool]| -> bool {
        (from..to).all(|c| nearest(c, alive).is_none_or(|(d, _)| d >= config.lambda))
    };

    let mut cursor = (1usize, 0usize); // (pass, next centroid)
    let mut seen = HashSet::new();
    for (n, s) in result.selected.iter().enumerate() {
        let Some(c) = s.centroid else {
            return fail(format!("entry {n} has no centroid"));
        };
        if !seen.insert(s.utt_id.as_str()) {
            return fail(format!("{} selected twice", s.utt_id));
        }
        if (s.pass_index, c) < cursor || c >= centroids.len() {
            return fail(format!("entry {n} is out of pass/centroid order"));
        }
        // Finish the current pass and skip whole passes as needed.
        while cursor.0 < s.pass_index {
            if !check_skipped(cursor.1, centroids.len(), &alive) {
                return fail(format!("pass {} skipped a selectable centroid", cursor.0));
            }
            cursor = (cursor.0 + 1, 0);
        }
        if !check_skipped(cursor.1, c, &alive) {
            return fail(format!("pass {} skipped a selectable centroid before {c}", cursor.0));
        }
        let Some(&i) = index.get(s.utt_id.as_str()) else {
            return fail(format!("{} is not in the pool", s.utt_id));
        };
        match nearest(c, &alive) {
            Some((d, j)) if j == i && d < config.lambda => {
                if s.distance != Some(d) {
                    return fail(format!("recorded distance of {} differs", s.utt_id));
                }
            }
            _ => return fail(format!("{} was not the nearest candidate of centroid {c}", s.utt_id)),
        }
        alive[i] = false;
        cursor = (s.pass_index, c + 1);
    }
    if result.stop == StopReason::NoProgress {
        // The rest of the last productive pass and the closing pass select
        // nothing.
        if !check_skipped(cursor.1, centroids.len(), &alive) || !check_skipped(0, centroids.len(), &alive) {
            return fail("selection stopped while a centroid could still select".into());
        }
        let closing = if result.selected.is_empty() { 1 } else { cursor.0 + 1 };
        if result.passes != closing {
            return fail(format!("expected {closing} passes, found {}", result.passes));
        }
    }
    Ok(())
}

/// Union by utterance id. Entries of `a` keep their provenance; entries only
/// in `b` are merged in by pass number.
pub fn union_combine(a: &SelectionResult, b: &SelectionResult, pool_manifest: &Manifest) -> Result<SelectionResult> {
    let hours: HashMap<&str, f64> = pool_manifest
        .utterances
        .iter()
        .map(|u| (u.id.as_str(), u.hours()))
        .collect();
    for s in a.selected.iter().chain(&b.selected) {
        if !hours.contains_key(s.utt_id.as_str()) {
            return Err(Error::InvalidInput(format!(
                "selected utterance {} is not in the pool manifest",
                s.utt_id
            )));
        }
    }
    let in_a: HashSet<&str> = a.ids().collect();
    let extra: Vec<&SelectedUtterance> = b
        .selected
        .iter()
        .filter(|s| !in_a.contains(s.utt_id.as_str()))
        .collect();

    let mut merged = Vec::with_capacity(a.len() + extra.len());
    let (mut i, mut j) = (0, 0);
    while i < a.selected.len() || j < extra.len() {
        let take_a = j >= extra.len()
            || (i < a.selected.len() && a.selected[i].pass_index <= extra[j].pass_index);
        if take_a {
            merged.push(a.selected[i].clone());
            i += 1;
        } else {
            merged.push(extra[j].clone());
            j += 1;
        }
    }
    let total_hours = merged.iter().map(|s| hours[s.utt_id.as_str()]).sum();
    Ok(SelectionResult {
        selected: merged,
        total_hours,
        passes: a.passes.max(b.passes),
        stop: a.stop,
    })
}

/// Seeded uniform shuffle of the pool, taken in order until the next
/// utterance would exceed `budget_hours`.
pub fn random_select(pool_manifest: &Manifest, budget_hours: f64, seed: u64) -> Result<SelectionResult> {
    if !(budget_hours.is_finite() && budget_hours > 0.0) {
        return Err(Error::Config(format!("budget must be positive, got {budget_hours}")));
    }
    let total = pool_manifest.total_hours();
    if budget_hours > total + HOURS_EPS {
        return Err(Error::InvalidInput(format!(
            "budget {budget_hours} h exceeds the pool's {total} h"
        )));
    }
    let mut order: Vec<usize> = (0..pool_manifest.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut selected = Vec::new();
    let mut hours = 0.0;
    let mut stop = StopReason::PoolExhausted;
    for i in order {
        let u = &pool_manifest.utterances[i];
        if hours + u.hours() > budget_hours + HOURS_EPS {
            stop = StopReason::Budget;
            break;
        }
        hours += u.hours();
        selected.push(SelectedUtterance {
            utt_id: u.id.clone(),
            centroid: None,
            distance: None,
            pass_index: 1,
        });
    }
    Ok(SelectionResult {
        selected,
        total_hours: hours,
        passes: 1,
        stop,
    })
}

/// Selected utterances as a manifest, in selection order.
pub fn selection_manifest(result: &SelectionResult, pool_manifest: &Manifest) -> Result<Manifest> {
    let index = pool_manifest.index();
    let utterances = result
        .ids()
        .map(|id| {
            index
                .get(id)
                .map(|&i| pool_manifest.utterances[i].clone())
                .ok_or_else(|| Error::InvalidInput(format!("{id} is not in the pool manifest")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Manifest {
        role: pool_manifest.role,
        fps: pool_manifest.fps,
        utterances,
        base_dir: pool_manifest.base_dir.clone(),
    })
}

/// Writes the selected utterances as a manifest at `path`, with relative
/// paths rewritten to stay valid from the new location.
pub fn write_selection_manifest(result: &SelectionResult, pool_manifest: &Manifest, path: &Path) -> Result<()> {
    let m = selection_manifest(result, pool_manifest)?;
    let base = path.parent().unwrap_or(Path::new(""));
    let m = if std::path::absolute(base).ok() == std::path::absolute(&pool_manifest.base_dir).ok() {
        m
    } else {
        m.rebased(base)
    };
    corpus::write_manifest(&m, path)
}

/// `utt_id \t centroid \t distance \t pass`, `-` where not applicable,
/// after a `# passes=N stop=REASON` header.
pub fn write_audit(result: &SelectionResult, path: &Path) -> Result<()> {
    let mut w = util::create_writer(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "# passes={} stop={}", result.passes, result.stop).map_err(io)?;
    for s in &result.selected {
        let c = s.centroid.map_or("-".to_string(), |c| c.to_string());
        let d = s.distance.map_or("-".to_string(), util::fmt_sig9);
        writeln!(w, "{}\t{}\t{}\t{}", s.utt_id, c, d, s.pass_index).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Rebuilds a selection from an audit file, taking durations from the pool
/// manifest.
pub fn read_audit(path: &Path, pool_manifest: &Manifest) -> Result<SelectionResult> {
    let text = util::read_to_string(path)?;
    let index = pool_manifest.index();
    let mut selected = Vec::new();
    let mut total_hours = 0.0;
    let mut header: Option<(usize, StopReason)> = None;
    for (n, line) in text.lines().enumerate() {
        let bad = |msg: String| Error::parse(path, n + 1, msg);
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let mut passes = None;
            let mut stop = None;
            for kv in rest.split_whitespace() {
                match kv.split_once('=') {
                    Some(("passes", v)) => passes = v.parse().ok(),
                    Some(("stop", v)) => stop = v.parse().ok(),
                    _ => {}
                }
            }
            if let (Some(p), Some(s)) = (passes, stop) {
                header = Some((p, s));
            }
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", f.len())));
        }
        let &i = index
            .get(f[0])
            .ok_or_else(|| bad(format!("{} is not in the pool manifest", f[0])))?;
        let centroid = match f[1] {
            "-" => None,
            s => Some(s.parse().map_err(|_| bad(format!("bad centroid {s:?}")))?),
        };
        let distance = match f[2] {
            "-" => None,
            s => Some(s.parse().map_err(|_| bad(format!("bad distance {s:?}")))?),
        };
        let pass_index = f[3].parse().map_err(|_| bad(format!("bad pass {:?}", f[3])))?;
        total_hours += pool_manifest.utterances[i].hours();
        selected.push(SelectedUtterance {
            utt_id: f[0].to_string(),
            centroid,
            distance,
            pass_index,
        });
    }
    let (passes, stop) = header.unwrap_or_else(|| {
        (
            selected.iter().map(|s| s.pass_index).max().unwrap_or(1),
            StopReason::NoProgress,
        )
    });
    Ok(SelectionResult {
        selected,
        total_hours,
        passes,
        stop,
    })
}
