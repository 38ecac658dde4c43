//! Labeled synthetic corpora drawn from per-domain diagonal Gaussian mixtures.

use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{self, FeatureMatrix, Manifest, Role, Utterance, DEFAULT_FPS};
use crate::error::{Error, Result};
use crate::util;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthText {
    pub words: Vec<String>,
    /// Relative word frequencies; uniform when absent.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    pub min_words: usize,
    pub max_words: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDomain {
    pub name: String,
    pub utterances: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    pub components: Vec<SynthComponent>,
    /// When set, each utterance draws its own mixture weights from a
    /// Dirichlet with this concentration times the domain weights.
    #[serde(default)]
    pub weight_concentration: Option<f64>,
    #[serde(default)]
    pub text: Option<SynthText>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub frame_dim: usize,
    #[serde(default = "default_fps")]
    pub fps: f64,
    #[serde(default)]
    pub id_prefix: String,
    pub domains: Vec<SynthDomain>,
}

fn default_fps() -> f64 {
    DEFAULT_FPS
}

impl SynthSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("synthetic spec: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.frame_dim == 0 {
            return bad("frame_dim must be positive".into());
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad("fps must be positive".into());
        }
        if self.domains.is_empty() {
            return bad("at least one domain is required".into());
        }
        for d in &self.domains {
            if d.components.is_empty() {
                return bad(format!("domain {}: zero components", d.name));
            }
            if d.min_frames > d.max_frames {
                return bad(format!("domain {}: min_frames > max_frames", d.name));
            }
            if d.name.is_empty() || d.name.contains(['\t', '\n']) {
                return bad(format!("domain name {:?} is not a valid tag", d.name));
            }
            for (k, c) in d.components.iter().enumerate() {
                if !(c.weight.is_finite() && c.weight > 0.0) {
                    return bad(format!("domain {} component {k}: weight must be positive", d.name));
                }
                if c.mean.len() != self.frame_dim || c.variance.len() != self.frame_dim {
                    return bad(format!(
                        "domain {} component {k}: mean/variance must have {} entries",
                        d.name, self.frame_dim
                    ));
                }
                if c.mean.iter().any(|m| !m.is_finite()) {
                    return bad(format!("domain {} component {k}: non-finite mean", d.name));
                }
                if c.variance.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return bad(format!(
                        "domain {} component {k}: variances must be positive",
                        d.name
                    ));
                }
            }
            if let Some(a) = d.weight_concentration {
                if !(a.is_finite() && a > 0.0) {
                    return bad(format!("domain {}: weight_concentration must be positive", d.name));
                }
            }
            if let Some(t) = &d.text {
                if t.words.is_empty() || t.min_words > t.max_words {
                    return bad(format!("domain {}: invalid text spec", d.name));
                }
                if let Some(w) = &t.weights {
                    if w.len() != t.words.len() || w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                        return bad(format!("domain {}: invalid word weights", d.name));
                    }
                }
            }
        }
        Ok(())
    }

    /// Random, distinct domain mixtures: component means uniform in
    /// `[-spread, spread]` per dimension and variances in `[0.5, 1.5]`.
    /// Every domain also gets a transcript model mixing domain-specific and
    /// shared words.
    pub fn preset(
        names: &[&str],
        utterances: usize,
        components: usize,
        frame_dim: usize,
        frames: (usize, usize),
        spread: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shared: Vec<String> = (0..30).map(|i| format!("common{i}")).collect();
        let domains = names
            .iter()
            .map(|name| {
                let comps = (0..components)
                    .map(|_| SynthComponent {
                        weight: rng.gen_range(0.5..1.5),
                        mean: (0..frame_dim).map(|_| rng.gen_range(-spread..spread)).collect(),
                        variance: (0..frame_dim).map(|_| rng.gen_range(0.5..1.5)).collect(),
                    })
                    .collect();
                let mut words: Vec<String> = (0..20).map(|i| format!("{name}word{i}")).collect();
                let mut weights = vec![1.0; words.len()];
                words.extend(shared.iter().cloned());
                weights.extend(std::iter::repeat_n(20.0 / 30.0, shared.len()));
                SynthDomain {
                    name: name.to_string(),
                    utterances,
                    min_frames: frames.0,
                    max_frames: frames.1,
                    components: comps,
                    weight_concentration: None,
                    text: Some(SynthText {
                        words,
                        weights: Some(weights),
                        min_words: 5,
                        max_words: 25,
                    }),
                }
            })
            .collect();
        SynthSpec {
            frame_dim,
            fps: DEFAULT_FPS,
            id_prefix: String::new(),
            domains,
        }
    }
}

struct Planned {
    domain: usize,
    id: String,
    seed: u64,
}

/// Generates the corpus under `out_dir`: feature files in `feats/`,
/// transcripts in `text/` and the manifest at `manifest.tsv`. Output is a
/// pure function of `(spec, seed)`.
pub fn generate_synthetic_corpus(
    spec: &SynthSpec,
    seed: u64,
    out_dir: &Path,
    role: Role,
) -> Result<Manifest> {
    spec.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut plan = Vec::new();
    for (d, dom) in spec.domains.iter().enumerate() {
        for i in 0..dom.utterances {
            plan.push(Planned {
                domain: d,
                id: format!("{}{}_{:05}", spec.id_prefix, dom.name, i),
                seed: master.gen(),
            });
        }
    }

    let utterances = plan
        .par_iter()
        .map(|p| generate_one(spec, p, out_dir))
        .collect::<Result<Vec<_>>>()?;

    let manifest = Manifest {
        role,
        fps: spec.fps,
        utterances,
        base_dir: out_dir.to_path_buf(),
    };
    corpus::write_manifest(&manifest, &out_dir.join("manifest.tsv"))?;
    Ok(manifest)
}

fn generate_one(spec: &SynthSpec, p: &Planned, out_dir: &Path) -> Result<Utterance> {
    let dom = &spec.domains[p.domain];
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let n_frames = rng.gen_range(dom.min_frames..=dom.max_frames);
    let base: Vec<f64> = dom.components.iter().map(|c| c.weight).collect();
    let weights = match dom.weight_concentration {
        Some(a) => {
            let total: f64 = base.iter().sum();
            let alpha: Vec<f64> = base.iter().map(|w| a * w / total).collect();
            if alpha.len() == 1 {
                alpha
            } else {
                Dirichlet::new(&alpha)
                    .map_err(|e| Error::Config(format!("domain {}: {e}", dom.name)))?
                    .sample(&mut rng)
            }
        }
        None => base,
    };
    let picker = WeightedIndex::new(&weights)
        .map_err(|e| Error::Config(format!("domain {}: {e}", dom.name)))?;

    let dim = spec.frame_dim;
    let mut data = Vec::with_capacity(n_frames * dim);
    for _ in 0..n_frames {
        let c = &dom.components[picker.sample(&mut rng)];
        for j in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            data.push((c.mean[j] + c.variance[j].sqrt() * z) as f32);
        }
    }
    let matrix = FeatureMatrix::new(n_frames, dim, data)?;
    let feature_path = PathBuf::from("feats").join(format!("{}.aldf", p.id));
    corpus::write_features(&matrix, &out_dir.join(&feature_path))?;

    let transcript_path = match &dom.text {
        Some(t) => {
            let n_words = rng.gen_range(t.min_words..=t.max_words);
            let words: Vec<&str> = match &t.weights {
                Some(w) => {
                    let pick = WeightedIndex::new(w)
                        .map_err(|e| Error::Config(format!("domain {}: {e}", dom.name)))?;
                    (0..n_words).map(|_| t.words[pick.sample(&mut rng)].as_str()).collect()
                }
                None => (0..n_words)
                    .map(|_| t.words[rng.gen_range(0..t.words.len())].as_str())
                    .collect(),
            };
            let rel = PathBuf::from("text").join(format!("{}.txt", p.id));
            util::write_all(&out_dir.join(&rel), words.join(" ").as_bytes())?;
            Some(rel)
        }
        None => None,
    };

    Ok(Utterance {
        id: p.id.clone(),
        feature_path,
        num_frames: n_frames as u64,
        frame_dim: dim as u32,
        duration_s: n_frames as f64 / spec.fps,
        domain_tag: dom.name.clone(),
        transcript_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::read_manifest;

    fn single(dim: usize, mean: f64) -> SynthDomain {
        SynthDomain {
            name: format!("d{mean}"),
            utterances: 3,
            min_frames: 10,
            max_frames: 10,
            components: vec![SynthComponent {
                weight: 1.0,
                mean: vec![mean; dim],
                variance: vec![1.0; dim],
            }],
            weight_concentration: None,
            text: None,
        }
    }

    #[test]
    fn shape_check() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            frame_dim: 2,
            fps: 100.0,
            id_prefix: String::new(),
            domains: vec![single(2, 0.0)],
        };
        let m = generate_synthetic_corpus(&spec, 1, dir.path(), Role::Pool).unwrap();
        assert_eq!(m.len(), 3);
        for u in &m.utterances {
            let f = m.read_features(u).unwrap();
            assert_eq!((f.num_frames(), f.frame_dim()), (10, 2));
        }
        let back = read_manifest(&dir.path().join("manifest.tsv"), true).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn byte_identical_for_same_seed() {
        let spec = SynthSpec::preset(&["a", "b"], 4, 2, 3, (5, 20), 4.0, 9);
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let m1 = generate_synthetic_corpus(&spec, 42, d1.path(), Role::Pool).unwrap();
        generate_synthetic_corpus(&spec, 42, d2.path(), Role::Pool).unwrap();
        let read = |d: &Path, rel: &Path| std::fs::read(d.join(rel)).unwrap();
        assert_eq!(
            read(d1.path(), Path::new("manifest.tsv")),
            read(d2.path(), Path::new("manifest.tsv"))
        );
        for u in &m1.utterances {
            assert_eq!(read(d1.path(), &u.feature_path), read(d2.path(), &u.feature_path));
            let t = u.transcript_path.as_ref().unwrap();
            assert_eq!(read(d1.path(), t), read(d2.path(), t));
        }
    }

    #[test]
    fn separated_domains_match_generating_means() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = single(2, -10.0);
        let mut b = single(2, 10.0);
        a.utterances = 100;
        b.utterances = 100;
        let spec = SynthSpec {
            frame_dim: 2,
            fps: 100.0,
            id_prefix: String::new(),
            domains: vec![a, b],
        };
        let m = generate_synthetic_corpus(&spec, 7, dir.path(), Role::Pool).unwrap();
        for (tag, truth) in [("d-10", -10.0), ("d10", 10.0)] {
            let mut sum = [0.0f64; 2];
            let mut n = 0usize;
            for u in m.utterances.iter().filter(|u| u.domain_tag == tag) {
                for row in m.read_features(u).unwrap().rows() {
                    sum[0] += row[0] as f64;
                    sum[1] += row[1] as f64;
                    n += 1;
                }
            }
            for s in sum {
                assert!((s / n as f64 - truth).abs() < 0.5, "{tag}: {}", s / n as f64);
            }
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = SynthSpec {
            frame_dim: 2,
            fps: 100.0,
            id_prefix: String::new(),
            domains: vec![single(2, 0.0)],
        };
        spec.domains[0].components.clear();
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
        spec.domains[0] = single(2, 0.0);
        spec.domains[0].components[0].variance[1] = 0.0;
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
        spec.domains.clear();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn toml_spec_parses() {
        let text = r#"
            frame_dim = 2
            [[domains]]
            name = "meeting"
            utterances = 2
            min_frames = 3
            max_frames = 4
            [[domains.components]]
            weight = 1.0
            mean = [0.0, 1.0]
            variance = [1.0, 1.0]
        "#;
        let spec = SynthSpec::from_toml(text).unwrap();
        assert_eq!(spec.fps, 100.0);
        spec.validate().unwrap();
    }
}
