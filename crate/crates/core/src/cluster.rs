//! Lloyd's k-means over posterior vectors with order-independent k-means++
//! seeding.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lda::{self, PosteriorVector};
use crate::util;

pub const DEFAULT_CLUSTERS: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansConfig {
    pub seed: u64,
    pub max_iters: usize,
    /// Cluster directions: inputs are L2-normalized and centroids are
    /// renormalized after every update.
    pub spherical: bool,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            max_iters: 100,
            spherical: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentroidSet {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    /// Inertia after each assignment step.
    pub inertia_trace: Vec<f64>,
    pub converged: bool,
}

impl CentroidSet {
    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.len()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Centroids with their file ids, `centroid_0000` onwards.
    pub fn as_posteriors(&self) -> Vec<PosteriorVector> {
        self.centroids
            .iter()
            .enumerate()
            .map(|(i, c)| PosteriorVector {
                utt_id: centroid_id(i),
                gamma: c.clone(),
            })
            .collect()
    }
}

pub fn centroid_id(i: usize) -> String {
    format!("centroid_{i:04}")
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter().map(|x| x / n).collect()
    } else {
        v.to_vec()
    }
}

/// Uniform in (0, 1] derived from a content hash and a round number.
fn hash_uniform(h: u64, round: u64) -> f64 {
    let x = util::mix64(h ^ util::mix64(round.wrapping_add(0x5eed)));
    ((x >> 11) + 1) as f64 / (1u64 << 53) as f64
}

/// k-means++ where every random choice is keyed by vector contents, so
/// reordering the input does not change the chosen centers. D^2-weighted
/// draws use exponential keys `ln(u) / w` and take the maximum.
fn seed_centers(points: &[Vec<f64>], c: usize, seed: u64) -> Vec<Vec<f64>> {
    let hashes: Vec<u64> = points.iter().map(|p| util::hash_f64s(seed, p)).collect();
    let pick = |keys: &[f64]| -> usize {
        let mut best = 0;
        for i in 1..keys.len() {
            if keys[i] > keys[best] {
                best = i;
            }
        }
        best
    };
    let first_keys: Vec<f64> = hashes.iter().map(|h| hash_uniform(*h, 0)).collect();
    let mut centers = vec![points[pick(&first_keys)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    for round in 1..c {
        let keys: Vec<f64> = hashes
            .iter()
            .zip(&d2)
            .map(|(h, w)| {
                if *w > 0.0 {
                    hash_uniform(*h, round as u64).ln() / w
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let chosen = if keys.iter().all(|k| *k == f64::NEG_INFINITY) {
            // fewer distinct points than clusters
            pick(&hashes.iter().map(|h| hash_uniform(*h, round as u64)).collect::<Vec<_>>())
        } else {
            pick(&keys)
        };
        let center = points[chosen].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &center));
        }
        centers.push(center);
    }
    centers
}

fn assign(points: &[Vec<f64>], centers: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    points
        .par_iter()
        .map(|p| {
            let mut best = 0;
            let mut best_d = sq_dist(p, &centers[0]);
            for (j, c) in centers.iter().enumerate().skip(1) {
                let d = sq_dist(p, c);
                if d < best_d {
                    best = j;
                    best_d = d;
                }
            }
            (best, best_d)
        })
        .unzip()
}

/// Clusters `vectors` into `c` groups. `c` is clamped to the number of
/// vectors.
pub fn kmeans(vectors: &[Vec<f64>], c: usize, config: &KMeansConfig) -> Result<CentroidSet> {
    if vectors.is_empty() {
        return Err(Error::InvalidInput("k-means needs at least one vector".into()));
    }
    if c == 0 {
        return Err(Error::Config("number of clusters must be at least 1".into()));
    }
    let dim = vectors[0].len();
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: v.len(),
        });
    }
    if vectors.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("k-means input has non-finite values".into()));
    }
    let c = if c > vectors.len() {
        log::warn!("clamping {c} clusters to {} vectors", vectors.len());
        vectors.len()
    } else {
        c
    };
    let owned;
    let points: &[Vec<f64>] = if config.spherical {
        owned = vectors.iter().map(|v| normalized(v)).collect::<Vec<_>>();
        &owned
    } else {
        vectors
    };

    let mut centers = seed_centers(points, c, config.seed);
    let mut assignments: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut inertia = 0.0;
    for _ in 0..config.max_iters.max(1) {
        let (next, dists) = assign(points, &centers);
        inertia = dists.iter().sum();
        trace.push(inertia);
        if next == assignments {
            converged = true;
            break;
        }
        assignments = next;
        update(points, &assignments, &dists, &mut centers, config.spherical);
    }
    Ok(CentroidSet {
        centroids: centers,
        assignments,
        inertia,
        inertia_trace: trace,
        converged,
    })
}

fn update(points: &[Vec<f64>], assignments: &[usize], dists: &[f64], centers: &mut [Vec<f64>], spherical: bool) {
    let c = centers.len();
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; c];
    let mut counts = vec![0usize; c];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(p) {
            *s += x;
        }
    }
    for j in 0..c {
        if counts[j] > 0 {
            let mean: Vec<f64> = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            centers[j] = if spherical { normalized(&mean) } else { mean };
        }
    }
    // Re-seed each empty cluster at the member of the largest cluster that is
    // farthest from its centroid.
    let mut taken = vec![false; points.len()];
    for j in 0..c {
        if counts[j] > 0 {
            continue;
        }
        let largest = (0..c).max_by_key(|&i| (counts[i], std::cmp::Reverse(i))).unwrap();
        let far = (0..points.len())
            .filter(|&i| assignments[i] == largest && !taken[i])
            .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
        if let Some(i) = far {
            taken[i] = true;
            centers[j] = points[i].clone();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidSidecar {
    pub inertia: f64,
    pub sizes: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn sidecar_path(centroid_file: &Path) -> PathBuf {
    let mut s = centroid_file.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the centroid file and its `.json` sidecar.
pub fn write_centroids(set: &CentroidSet, path: &Path) -> Result<()> {
    lda::write_posterior_file(&set.as_posteriors(), path)?;
    let side = CentroidSidecar {
        inertia: set.inertia,
        sizes: set.sizes(),
        iterations: set.inertia_trace.len(),
        converged: set.converged,
    };
    let json = serde_json::to_string_pretty(&side).expect("sidecar serializes");
    util::write_all(&sidecar_path(path), json.as_bytes())
}

/// Reads centroid vectors, in file order.
pub fn read_centroids(path: &Path) -> Result<Vec<Vec<f64>>> {
    Ok(lda::read_posterior_file(path)?
        .into_iter()
        .map(|p| p.gamma)
        .collect())
}
