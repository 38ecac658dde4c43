//! Corpus manifests and binary feature files.
//!
//! A manifest is a tab-separated text file, one utterance per line:
//!
//! ```text
//! # role=pool
//! # fps=100
//! id <TAB> feature_path <TAB> num_frames <TAB> frame_dim <TAB> duration_s <TAB> domain_tag [<TAB> transcript_path]
//! ```
//!
//! Relative paths are resolved against the manifest's directory. A duration
//! of `-` is derived from `num_frames / fps`.
//!
//! Feature files are little-endian: magic `ALDF`, version `u32 = 1`,
//! `num_frames: u64`, `frame_dim: u32`, then row-major `f32` frames.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::util::{self, LeReader};

pub const FEATURE_MAGIC: &[u8; 4] = b"ALDF";
pub const FEATURE_VERSION: u32 = 1;
pub const FEATURE_HEADER_LEN: usize = 20;
pub const DEFAULT_FPS: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Role {
    #[default]
    Pool,
    Dev,
    Test,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Pool => "pool",
            Role::Dev => "dev",
            Role::Test => "test",
        })
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pool" => Ok(Role::Pool),
            "dev" => Ok(Role::Dev),
            "test" => Ok(Role::Test),
            other => Err(Error::InvalidInput(format!("unknown manifest role {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    /// Path as written in the manifest.
    pub feature_path: PathBuf,
    pub num_frames: u64,
    pub frame_dim: u32,
    pub duration_s: f64,
    pub domain_tag: String,
    pub transcript_path: Option<PathBuf>,
}

impl Utterance {
    pub fn hours(&self) -> f64 {
        self.duration_s / 3600.0
    }
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub role: Role,
    pub fps: f64,
    pub utterances: Vec<Utterance>,
    /// Directory relative paths are resolved against. Not serialized.
    pub base_dir: PathBuf,
}

impl PartialEq for Manifest {
    fn eq(&self, other: &Self) -> bool {
        self.role == other.role && self.fps == other.fps && self.utterances == other.utterances
    }
}

impl Manifest {
    pub fn new(role: Role, utterances: Vec<Utterance>) -> Self {
        Self {
            role,
            fps: DEFAULT_FPS,
            utterances,
            base_dir: PathBuf::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn feature_path(&self, utt: &Utterance) -> PathBuf {
        self.resolve(&utt.feature_path)
    }

    pub fn total_hours(&self) -> f64 {
        self.utterances.iter().map(Utterance::hours).sum()
    }

    /// Map from utterance id to its position.
    pub fn index(&self) -> HashMap<&str, usize> {
        self.utterances
            .iter()
            .enumerate()
            .map(|(i, u)| (u.id.as_str(), i))
            .collect()
    }

    pub fn get(&self, id: &str) -> Option<&Utterance> {
        self.utterances.iter().find(|u| u.id == id)
    }

    pub fn read_features(&self, utt: &Utterance) -> Result<FeatureMatrix> {
        read_features(&self.feature_path(utt), utt)
    }

    /// Reads the transcript of `utt`, if it has one.
    pub fn read_transcript(&self, utt: &Utterance) -> Result<Option<String>> {
        utt.transcript_path
            .as_ref()
            .map(|p| util::read_to_string(&self.resolve(p)))
            .transpose()
    }

    /// Checks that every feature file exists and that its header agrees with
    /// the manifest.
    pub fn validate_features(&self) -> Result<()> {
        for utt in &self.utterances {
            let path = self.feature_path(utt);
            let (frames, dim) = read_feature_header(&path)?;
            check_shape(utt, frames, dim)?;
        }
        Ok(())
    }

    /// A sub-manifest holding the utterances whose ids are in `ids`, in
    /// manifest order.
    pub fn subset<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Manifest {
        let keep: std::collections::HashSet<&str> = ids.into_iter().collect();
        Manifest {
            role: self.role,
            fps: self.fps,
            utterances: self
                .utterances
                .iter()
                .filter(|u| keep.contains(u.id.as_str()))
                .cloned()
                .collect(),
            base_dir: self.base_dir.clone(),
        }
    }

    /// Same utterances with every relative path rewritten to resolve from
    /// `new_base`.
    pub fn rebased(&self, new_base: &Path) -> Manifest {
        let abs = |p: &Path| {
            let resolved = self.resolve(p);
            std::path::absolute(&resolved).unwrap_or(resolved)
        };
        let utterances = self
            .utterances
            .iter()
            .map(|u| Utterance {
                feature_path: abs(&u.feature_path),
                transcript_path: u.transcript_path.as_deref().map(abs),
                ..u.clone()
            })
            .collect();
        Manifest {
            role: self.role,
            fps: self.fps,
            utterances,
            base_dir: new_base.to_path_buf(),
        }
    }
}

/// Reads a manifest. With `validate`, every feature file is opened and its
/// header checked against the line that references it.
pub fn read_manifest(path: &Path, validate: bool) -> Result<Manifest> {
    let text = util::read_to_string(path)?;
    let mut manifest = parse_manifest(&text, path)?;
    manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    if validate {
        manifest.validate_features()?;
    }
    Ok(manifest)
}

fn parse_manifest(text: &str, path: &Path) -> Result<Manifest> {
    let mut role = Role::Pool;
    let mut fps = DEFAULT_FPS;
    let mut pending: Vec<(usize, Vec<&str>)> = Vec::new();
    let mut seen: HashMap<&str, usize> = HashMap::new();

    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.trim().split_once('=') {
                match key.trim() {
                    "fps" => {
                        fps = value
                            .trim()
                            .parse()
                            .ok()
                            .filter(|f: &f64| f.is_finite() && *f > 0.0)
                            .ok_or_else(|| Error::parse(path, lineno, "bad fps header"))?;
                    }
                    "role" => {
                        role = value
                            .trim()
                            .parse()
                            .map_err(|e: Error| Error::parse(path, lineno, e.to_string()))?;
                    }
                    _ => {}
                }
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !(6..=7).contains(&fields.len()) {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected 6 or 7 tab-separated fields, found {}", fields.len()),
            ));
        }
        if fields[0].is_empty() {
            return Err(Error::parse(path, lineno, "empty utterance id"));
        }
        if let Some(&first) = seen.get(fields[0]) {
            return Err(Error::DuplicateId {
                path: path.to_path_buf(),
                id: fields[0].to_string(),
                first,
                second: lineno,
            });
        }
        seen.insert(fields[0], lineno);
        pending.push((lineno, fields));
    }

    // Durations may depend on an fps header that appears after data lines.
    let mut utterances = Vec::with_capacity(pending.len());
    for (lineno, f) in pending {
        let num_frames: u64 = f[2]
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad num_frames {:?}", f[2])))?;
        let frame_dim: u32 = f[3]
            .parse()
            .ok()
            .filter(|d| *d > 0)
            .ok_or_else(|| Error::parse(path, lineno, format!("bad frame_dim {:?}", f[3])))?;
        let duration_s = match f[4] {
            "-" | "" => num_frames as f64 / fps,
            s => s
                .parse::<f64>()
                .ok()
                .filter(|d| d.is_finite() && *d >= 0.0)
                .ok_or_else(|| Error::parse(path, lineno, format!("bad duration {s:?}")))?,
        };
        if f[5].is_empty() {
            return Err(Error::parse(path, lineno, "empty domain tag"));
        }
        utterances.push(Utterance {
            id: f[0].to_string(),
            feature_path: PathBuf::from(f[1]),
            num_frames,
            frame_dim,
            duration_s,
            domain_tag: f[5].to_string(),
            transcript_path: f.get(6).filter(|s| !s.is_empty()).map(PathBuf::from),
        });
    }
    Ok(Manifest {
        role,
        fps,
        utterances,
        base_dir: PathBuf::new(),
    })
}

pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let mut w = util::create_writer(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "# role={}", manifest.role).map_err(io)?;
    writeln!(w, "# fps={}", manifest.fps).map_err(io)?;
    for u in &manifest.utterances {
        write!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}",
            u.id,
            u.feature_path.display(),
            u.num_frames,
            u.frame_dim,
            u.duration_s,
            u.domain_tag
        )
        .map_err(io)?;
        if let Some(t) = &u.transcript_path {
            write!(w, "\t{}", t.display()).map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Frames of one utterance, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    num_frames: usize,
    frame_dim: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(num_frames: usize, frame_dim: usize, data: Vec<f32>) -> Result<Self> {
        if frame_dim == 0 {
            return Err(Error::InvalidInput("frame_dim must be positive".into()));
        }
        if data.len() != num_frames * frame_dim {
            return Err(Error::ShapeMismatch {
                what: "feature matrix data".into(),
                expected: format!("{} values", num_frames * frame_dim),
                found: format!("{} values", data.len()),
            });
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value at frame {}, dim {}",
                i / frame_dim,
                i % frame_dim
            )));
        }
        Ok(Self {
            num_frames,
            frame_dim,
            data,
        })
    }

    pub fn from_rows(rows: &[Vec<f32>], frame_dim: usize) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| r.len() != frame_dim) {
            return Err(Error::DimensionMismatch {
                expected: frame_dim,
                got: r.len(),
            });
        }
        Self::new(rows.len(), frame_dim, rows.concat())
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn frame_dim(&self) -> usize {
        self.frame_dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.frame_dim..(t + 1) * self.frame_dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.frame_dim)
    }
}

fn check_shape(utt: &Utterance, frames: u64, dim: u32) -> Result<()> {
    if frames != utt.num_frames || dim != utt.frame_dim {
        return Err(Error::ShapeMismatch {
            what: format!("utterance {}", utt.id),
            expected: format!("{}x{} (manifest)", utt.num_frames, utt.frame_dim),
            found: format!("{frames}x{dim} (feature file)"),
        });
    }
    Ok(())
}

/// Reads a feature file and checks its shape against the manifest entry.
pub fn read_features(path: &Path, utt: &Utterance) -> Result<FeatureMatrix> {
    let m = read_feature_file(path)?;
    check_shape(utt, m.num_frames as u64, m.frame_dim as u32)?;
    Ok(m)
}

pub fn read_feature_header(path: &Path) -> Result<(u64, u32)> {
    use std::io::Read;
    let mut header = Vec::with_capacity(FEATURE_HEADER_LEN);
    std::fs::File::open(path)
        .and_then(|f| f.take(FEATURE_HEADER_LEN as u64).read_to_end(&mut header))
        .map_err(|e| Error::io(path, e))?;
    let mut r = LeReader::new(&header, path);
    parse_header(&mut r, path)
}

fn parse_header(r: &mut LeReader<'_>, path: &Path) -> Result<(u64, u32)> {
    r.magic(FEATURE_MAGIC)?;
    let version = r.u32()?;
    if version != FEATURE_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.to_path_buf(),
            version,
        });
    }
    let frames = r.u64()?;
    let dim = r.u32()?;
    if dim == 0 {
        return Err(Error::InvalidInput(format!(
            "{}: frame_dim is zero",
            path.display()
        )));
    }
    Ok((frames, dim))
}

/// Reads a feature file without a manifest entry to check against.
pub fn read_feature_file(path: &Path) -> Result<FeatureMatrix> {
    let bytes = util::read_bytes(path)?;
    let mut r = LeReader::new(&bytes, path);
    let (frames, dim) = parse_header(&mut r, path)?;
    let count = frames
        .checked_mul(dim as u64)
        .ok_or_else(|| Error::InvalidInput(format!("{}: shape overflows", path.display())))?;
    r.require(count.saturating_mul(4))?;
    let payload = r.take(count as usize * 4)?;
    r.finish()?;
    let mut data = Vec::with_capacity(count as usize);
    for (i, c) in payload.chunks_exact(4).enumerate() {
        let x = f32::from_le_bytes(c.try_into().unwrap());
        if !x.is_finite() {
            return Err(Error::NonFinite {
                path: path.to_path_buf(),
                frame: i as u64 / dim as u64,
                dim: (i as u64 % dim as u64) as u32,
            });
        }
        data.push(x);
    }
    Ok(FeatureMatrix {
        num_frames: frames as usize,
        frame_dim: dim as usize,
        data,
    })
}

pub fn encode_features(matrix: &FeatureMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(FEATURE_HEADER_LEN + matrix.data.len() * 4);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&(matrix.num_frames as u64).to_le_bytes());
    out.extend_from_slice(&(matrix.frame_dim as u32).to_le_bytes());
    for x in &matrix.data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn write_features(matrix: &FeatureMatrix, path: &Path) -> Result<()> {
    util::write_all(path, &encode_features(matrix))
}
