//! tf-idf weighted bag-of-words documents over acoustic words or transcript
//! tokens.
//!
//! `tf = count / document length` (or the raw count, see [`TfMode`]) and
//! `idf = ln((1 + D) / (1 + df)) + 1`, so every present term gets a strictly
//! positive weight.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

pub const DEFAULT_TEXT_VOCAB_CAP: usize = 2048;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusStats {
    pub vocab_size: usize,
    pub doc_count: u64,
    pub doc_freq: Vec<u64>,
}

impl CorpusStats {
    pub fn idf(&self, term: u32) -> f64 {
        let d = self.doc_count as f64;
        let df = self.doc_freq[term as usize] as f64;
        ((1.0 + d) / (1.0 + df)).ln() + 1.0
    }
}

fn check_tokens(tokens: &[u32], vocab_size: usize) -> Result<()> {
    if let Some(t) = tokens.iter().find(|t| **t as usize >= vocab_size) {
        return Err(Error::InvalidInput(format!(
            "token {t} out of range for vocabulary of size {vocab_size}"
        )));
    }
    Ok(())
}

/// Document frequencies over `docs`.
pub fn compute_stats<'a, I>(docs: I, vocab_size: usize) -> Result<CorpusStats>
where
    I: IntoIterator<Item = &'a [u32]>,
{
    let mut doc_freq = vec![0u64; vocab_size];
    let mut last_seen = vec![u64::MAX; vocab_size];
    let mut doc_count = 0u64;
    for doc in docs {
        check_tokens(doc, vocab_size)?;
        for &t in doc {
            let t = t as usize;
            if last_seen[t] != doc_count {
                last_seen[t] = doc_count;
                doc_freq[t] += 1;
            }
        }
        doc_count += 1;
    }
    Ok(CorpusStats {
        vocab_size,
        doc_count,
        doc_freq,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermEntry {
    pub term: u32,
    pub count: u32,
    pub weight: f64,
}

/// Sparse document; entries are sorted by strictly increasing term.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDocument {
    pub utt_id: String,
    pub entries: Vec<TermEntry>,
}

impl WeightedDocument {
    /// Builds a document from explicit entries, sorting them and rejecting
    /// duplicate terms or negative weights.
    pub fn from_entries(utt_id: impl Into<String>, mut entries: Vec<TermEntry>) -> Result<Self> {
        entries.sort_by_key(|e| e.term);
        if entries.windows(2).any(|w| w[0].term == w[1].term) {
            return Err(Error::InvalidInput("duplicate term in document".into()));
        }
        if entries.iter().any(|e| !(e.weight.is_finite() && e.weight >= 0.0)) {
            return Err(Error::InvalidInput("weights must be finite and non-negative".into()));
        }
        Ok(Self {
            utt_id: utt_id.into(),
            entries,
        })
    }

    /// Document whose weights are the raw term counts.
    pub fn from_counts(utt_id: impl Into<String>, tokens: &[u32]) -> Self {
        let mut counts = BTreeMap::new();
        for &t in tokens {
            *counts.entry(t).or_insert(0u32) += 1;
        }
        Self {
            utt_id: utt_id.into(),
            entries: counts
                .into_iter()
                .map(|(term, count)| TermEntry {
                    term,
                    count,
                    weight: count as f64,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.entries.iter().map(|e| e.weight).sum()
    }

    pub fn total_count(&self) -> u64 {
        self.entries.iter().map(|e| e.count as u64).sum()
    }
}

/// Term-frequency variant used in the tf-idf product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TfMode {
    /// Count divided by document length.
    #[default]
    Normalized,
    /// Raw count, so a document's total weight grows with its length.
    Raw,
}

/// tf-idf weights for one token sequence, with length-normalized tf.
pub fn weigh_document(utt_id: &str, doc: &[u32], stats: &CorpusStats) -> Result<WeightedDocument> {
    weigh_document_with(utt_id, doc, stats, TfMode::Normalized)
}

pub fn weigh_document_with(utt_id: &str, doc: &[u32], stats: &CorpusStats, tf: TfMode) -> Result<WeightedDocument> {
    if stats.doc_count == 0 {
        return Err(Error::InvalidInput(
            "corpus statistics cover no documents".into(),
        ));
    }
    check_tokens(doc, stats.vocab_size)?;
    let mut counts = BTreeMap::new();
    for &t in doc {
        *counts.entry(t).or_insert(0u32) += 1;
    }
    let len = match tf {
        TfMode::Normalized => doc.len() as f64,
        TfMode::Raw => 1.0,
    };
    let entries = counts
        .into_iter()
        .map(|(term, count)| TermEntry {
            term,
            count,
            weight: count as f64 / len * stats.idf(term),
        })
        .collect();
    Ok(WeightedDocument {
        utt_id: utt_id.to_string(),
        entries,
    })
}

/// Transcript vocabulary with dense ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TextVocab {
    ids: HashMap<String, u32>,
    tokens: Vec<String>,
}

impl TextVocab {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i as u32).is_some() {
                return Err(Error::InvalidInput(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self { ids, tokens })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line, in id order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        util::write_all(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = util::read_to_string(path)?;
        Self::from_tokens(text.lines().filter(|l| !l.is_empty()).map(String::from).collect())
    }
}

/// Lowercased, whitespace-split words with leading and trailing punctuation
/// removed; words that end up empty are dropped.
pub fn normalize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| c.is_ascii_punctuation()).to_lowercase())
        .filter(|w| !w.is_empty())
}

pub fn tokenize_transcript(text: &str, vocab: &TextVocab) -> Vec<u32> {
    normalize(text).filter_map(|w| vocab.id(&w)).collect()
}

/// The `cap` most frequent normalized tokens; ids follow
/// (frequency desc, token asc).
pub fn build_text_vocab<'a, I>(transcripts: I, cap: usize) -> Result<TextVocab>
where
    I: IntoIterator<Item = &'a str>,
{
    if cap == 0 {
        return Err(Error::Config("text vocabulary cap must be at least 1".into()));
    }
    let mut freq: HashMap<String, u64> = HashMap::new();
    for t in transcripts {
        for w in normalize(t) {
            *freq.entry(w).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(String, u64)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(cap);
    TextVocab::from_tokens(ranked.into_iter().map(|(w, _)| w).collect())
}

pub fn write_weighted_file(docs: &[WeightedDocument], path: &Path) -> Result<()> {
    let mut w = util::create_writer(path)?;
    let io = |e| Error::io(path, e);
    for d in docs {
        write!(w, "{}\t", d.utt_id).map_err(io)?;
        for (i, e) in d.entries.iter().enumerate() {
            if i > 0 {
                w.write_all(b",").map_err(io)?;
            }
            write!(w, "{}:{}:{}", e.term, e.count, util::fmt_sig9(e.weight)).map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_weighted_file(path: &Path) -> Result<Vec<WeightedDocument>> {
    let text = util::read_to_string(path)?;
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| Error::parse(path, i + 1, msg);
        let (id, rest) = line
            .split_once('\t')
            .ok_or_else(|| bad("missing tab after id".into()))?;
        let mut entries = Vec::new();
        for item in rest.split(',').filter(|s| !s.is_empty()) {
            let mut parts = item.split(':');
            let (Some(t), Some(c), Some(w), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(bad(format!("bad entry {item:?}")));
            };
            entries.push(TermEntry {
                term: t.parse().map_err(|_| bad(format!("bad term {t:?}")))?,
                count: c.parse().map_err(|_| bad(format!("bad count {c:?}")))?,
                weight: w.parse().map_err(|_| bad(format!("bad weight {w:?}")))?,
            });
        }
        if entries.windows(2).any(|w| w[0].term >= w[1].term) {
            return Err(bad("terms must be strictly increasing".into()));
        }
        docs.push(WeightedDocument {
            utt_id: id.to_string(),
            entries,
        });
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn stats_direct_count() {
        let docs: Vec<Vec<u32>> = vec![vec![5, 1], vec![5, 5], vec![2, 5]];
        let s = compute_stats(docs.iter().map(Vec::as_slice), 8).unwrap();
        assert_eq!(s.doc_freq[5], 3);
        assert_eq!(s.doc_freq[1], 1);
        assert_eq!(s.doc_count, 3);
    }

    #[test]
    fn stats_empty_corpus() {
        let s = compute_stats(std::iter::empty(), 4).unwrap();
        assert_eq!(s.doc_count, 0);
        assert_eq!(s.doc_freq, vec![0; 4]);
    }

    #[test]
    fn stats_reject_out_of_range() {
        let d = [3u32, 4];
        assert!(compute_stats([&d[..]], 4).is_err());
    }

    #[test]
    fn uniform_presence_has_unit_idf() {
        let docs: Vec<Vec<u32>> = vec![vec![0, 1], vec![0], vec![0, 0, 2]];
        let s = compute_stats(docs.iter().map(Vec::as_slice), 3).unwrap();
        let d = weigh_document("x", &docs[2], &s).unwrap();
        assert_eq!(d.entries[0].term, 0);
        assert!((d.entries[0].weight - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_document() {
        let s = compute_stats([&[0u32][..]], 2).unwrap();
        assert!(weigh_document("e", &[], &s).unwrap().entries.is_empty());
    }

    #[test]
    fn needs_nonempty_stats() {
        let s = compute_stats(std::iter::empty(), 2).unwrap();
        assert!(weigh_document("e", &[0], &s).is_err());
    }

    #[test]
    fn hand_computed_weights() {
        let s = CorpusStats {
            vocab_size: 8,
            doc_count: 2,
            doc_freq: vec![0, 0, 1, 0, 0, 0, 0, 2],
        };
        let d = weigh_document("h", &[2, 2, 7], &s).unwrap();
        // term 2: tf 2/3, idf ln(3/2) + 1; term 7: tf 1/3, idf 1
        let w2 = 2.0 / 3.0 * (1.5f64.ln() + 1.0);
        let w7 = 1.0 / 3.0;
        assert_eq!(d.entries.len(), 2);
        assert_eq!((d.entries[0].term, d.entries[0].count), (2, 2));
        assert_eq!((d.entries[1].term, d.entries[1].count), (7, 1));
        assert!((d.entries[0].weight - w2).abs() < 1e-15);
        assert!((d.entries[1].weight - w7).abs() < 1e-15);
    }

    #[test]
    fn raw_tf_keeps_counts() {
        let s = CorpusStats {
            vocab_size: 8,
            doc_count: 2,
            doc_freq: vec![0, 0, 1, 0, 0, 0, 0, 2],
        };
        let raw = weigh_document_with("h", &[2, 2, 7], &s, TfMode::Raw).unwrap();
        let norm = weigh_document_with("h", &[2, 2, 7], &s, TfMode::Normalized).unwrap();
        assert!((raw.entries[0].weight - 2.0 * (1.5f64.ln() + 1.0)).abs() < 1e-15);
        assert!((raw.entries[1].weight - 1.0).abs() < 1e-15);
        for (r, n) in raw.entries.iter().zip(&norm.entries) {
            assert!((r.weight - 3.0 * n.weight).abs() < 1e-14);
        }
    }

    #[test]
    fn transcript_normalization() {
        let vocab = TextVocab::from_tokens(vec!["hello".into(), "world".into()]).unwrap();
        assert_eq!(tokenize_transcript("Hello, hello WORLD", &vocab), vec![0, 0, 1]);
        assert!(tokenize_transcript("", &vocab).is_empty());
        assert!(tokenize_transcript("foo bar!", &vocab).is_empty());
        assert_eq!(tokenize_transcript("...world?! --", &vocab), vec![1]);
    }

    #[test]
    fn vocab_tie_rule() {
        let v = build_text_vocab(["a a b", "b c"], 2).unwrap();
        assert_eq!(v.tokens(), ["a", "b"]);
        assert_eq!(v.id("a"), Some(0));
        assert_eq!(v.id("c"), None);
        let all = build_text_vocab(["a a b", "b c"], 10).unwrap();
        assert_eq!(all.tokens(), ["a", "b", "c"]);
        assert!(build_text_vocab(["a"], 0).is_err());
    }

    #[test]
    fn vocab_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.txt");
        let v = build_text_vocab(["x y y z z z"], 5).unwrap();
        v.save(&p).unwrap();
        assert_eq!(TextVocab::load(&p).unwrap(), v);
    }

    #[test]
    fn weighted_file_format() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.txt");
        let docs = vec![
            WeightedDocument {
                utt_id: "a".into(),
                entries: vec![
                    TermEntry {
                        term: 1,
                        count: 2,
                        weight: 1.0 / 3.0,
                    },
                    TermEntry {
                        term: 4,
                        count: 1,
                        weight: 2.0,
                    },
                ],
            },
            WeightedDocument {
                utt_id: "b".into(),
                entries: vec![],
            },
        ];
        write_weighted_file(&docs, &p).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "a\t1:2:0.333333333,4:1:2\nb\t\n"
        );
        let back = read_weighted_file(&p).unwrap();
        assert_eq!(back.len(), 2);
        assert!((back[0].entries[0].weight - 1.0 / 3.0).abs() < 1e-9);
        std::fs::write(&p, "a\t4:1:2,1:2:0.5\n").unwrap();
        assert!(read_weighted_file(&p).is_err());
    }

    fn brute_doc_freq(docs: &[Vec<u32>], v: usize) -> Vec<u64> {
        (0..v as u32)
            .map(|t| docs.iter().filter(|d| d.contains(&t)).count() as u64)
            .collect()
    }

    fn brute_top(transcripts: &[String], cap: usize) -> Vec<String> {
        let mut words: Vec<String> = transcripts.iter().flat_map(|t| normalize(t)).collect();
        words.sort();
        words.dedup();
        let count = |w: &String| {
            transcripts
                .iter()
                .flat_map(|t| normalize(t))
                .filter(|x| x == w)
                .count()
        };
        let mut scored: Vec<(usize, String)> = words.into_iter().map(|w| (count(&w), w)).collect();
        scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        scored.into_iter().take(cap).map(|(_, w)| w).collect()
    }

    proptest! {
        #[test]
        fn doc_freq_matches_brute_force(
            docs in proptest::collection::vec(proptest::collection::vec(0u32..12, 0..15), 0..20)
        ) {
            let s = compute_stats(docs.iter().map(Vec::as_slice), 12).unwrap();
            prop_assert_eq!(s.doc_count, docs.len() as u64);
            prop_assert_eq!(s.doc_freq, brute_doc_freq(&docs, 12));
        }

        #[test]
        fn vocab_matches_brute_force(
            transcripts in proptest::collection::vec("[a-e]{1,2}( [a-eA-E,.]{1,3}){0,6}", 0..8),
            cap in 1usize..8,
        ) {
            let v = build_text_vocab(transcripts.iter().map(String::as_str), cap).unwrap();
            prop_assert_eq!(v.tokens().to_vec(), brute_top(&transcripts, cap));
        }

        #[test]
        fn weights_positive_and_counts_sum(
            doc in proptest::collection::vec(0u32..10, 1..40),
            others in proptest::collection::vec(proptest::collection::vec(0u32..10, 0..10), 0..6),
            k in 1usize..4,
        ) {
            let mut corpus = others.clone();
            corpus.push(doc.clone());
            let s = compute_stats(corpus.iter().map(Vec::as_slice), 10).unwrap();
            let d = weigh_document("p", &doc, &s).unwrap();
            prop_assert_eq!(d.total_count(), doc.len() as u64);
            prop_assert!(d.entries.iter().all(|e| e.weight > 0.0));
            prop_assert!(d.entries.windows(2).all(|w| w[0].term < w[1].term));

            let repeated: Vec<u32> = std::iter::repeat(doc.clone()).take(k).flatten().collect();
            let r = weigh_document("p", &repeated, &s).unwrap();
            for (a, b) in d.entries.iter().zip(&r.entries) {
                prop_assert_eq!(b.count, a.count * k as u32);
                prop_assert!((a.weight - b.weight).abs() <= 1e-12 * a.weight);
            }
        }
    }
}
