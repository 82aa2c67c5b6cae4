//! Sentence–gloss pairs, corpus file formats, deduplication and seeded splits.
//!
//! JSONL is the canonical on-disk format: one object per line with the keys
//! `id`, `sentence`, `gloss`, `provenance`, `tense`, `source_pair_id` and
//! `meta`. TSV (`id<TAB>sentence<TAB>gloss`) is supported for interchange and
//! only carries the first three fields.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

/// NFC-normalize `text`.
pub fn nfc(text: &str) -> String {
    text.nfc().collect()
}

/// Where a pair came from.
/// Sentence-final punctuation: ASCII marks, the danda forms, curly quotes
/// and the ellipsis.
pub fn is_trailing_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c, '।' | '॥' | '\u{2018}'..='\u{201F}' | '\u{2026}')
}

/// Split a token into its body and any trailing punctuation.
pub fn split_trailing_punct(token: &str) -> (&str, &str) {
    let end = token
        .char_indices()
        .rev()
        .find(|(_, c)| !is_trailing_punct(*c))
        .map_or(0, |(i, c)| i + c.len_utf8());
    token.split_at(end)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Manual,
    RuleTense,
    MaskSubst,
    Rag,
}

impl Provenance {
    pub const ALL: [Provenance; 4] = [
        Provenance::Manual,
        Provenance::RuleTense,
        Provenance::MaskSubst,
        Provenance::Rag,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Manual => "manual",
            Provenance::RuleTense => "rule_tense",
            Provenance::MaskSubst => "mask_subst",
            Provenance::Rag => "rag",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Grammatical tense of a sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tense {
    Present,
    Past,
    Future,
    PresentContinuous,
    PastContinuous,
    Unknown,
}

impl Tense {
    /// Every tense that can be the target of a transformation.
    pub const KNOWN: [Tense; 5] = [
        Tense::Present,
        Tense::Past,
        Tense::Future,
        Tense::PresentContinuous,
        Tense::PastContinuous,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Tense::Present => "present",
            Tense::Past => "past",
            Tense::Future => "future",
            Tense::PresentContinuous => "present_continuous",
            Tense::PastContinuous => "past_continuous",
            Tense::Unknown => "unknown",
        }
    }

    pub fn is_known(self) -> bool {
        self != Tense::Unknown
    }
}

impl fmt::Display for Tense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tense {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "present" => Ok(Tense::Present),
            "past" => Ok(Tense::Past),
            "future" => Ok(Tense::Future),
            "present_continuous" => Ok(Tense::PresentContinuous),
            "past_continuous" => Ok(Tense::PastContinuous),
            "unknown" => Ok(Tense::Unknown),
            other => Err(format!("unknown tense {other:?}")),
        }
    }
}

/// Split class of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

fn manual() -> Provenance {
    Provenance::Manual
}

/// One sentence and its gloss token sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SentenceGlossPair {
    pub id: String,
    pub sentence: String,
    pub gloss: Vec<String>,
    #[serde(default = "manual")]
    pub provenance: Provenance,
    #[serde(default)]
    pub tense: Option<Tense>,
    #[serde(default)]
    pub source_pair_id: Option<String>,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl SentenceGlossPair {
    /// A manually annotated pair with NFC-normalized text.
    pub fn manual(id: impl Into<String>, sentence: &str, gloss: &[&str]) -> Self {
        SentenceGlossPair {
            id: id.into(),
            sentence: nfc(sentence),
            gloss: gloss.iter().map(|g| nfc(g)).collect(),
            provenance: Provenance::Manual,
            tense: None,
            source_pair_id: None,
            meta: BTreeMap::new(),
        }
    }

    /// Gloss tokens joined by single spaces.
    pub fn gloss_text(&self) -> String {
        self.gloss.join(" ")
    }

    fn normalize(&mut self) {
        self.sentence = nfc(&self.sentence);
        for token in &mut self.gloss {
            *token = nfc(token);
        }
    }

    /// Check the per-pair invariants. Cross-pair references are checked by
    /// [`Corpus::validate_provenance`].
    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("id is empty".into());
        }
        if self.sentence.trim().is_empty() {
            return Err("sentence is empty".into());
        }
        if self.gloss.is_empty() {
            return Err("gloss is empty".into());
        }
        for (pos, token) in self.gloss.iter().enumerate() {
            if token.is_empty() {
                return Err(format!("gloss token {pos} is empty"));
            }
            if token.chars().any(char::is_whitespace) {
                return Err(format!("gloss token {pos} ({token:?}) contains whitespace"));
            }
        }
        match (self.provenance, &self.source_pair_id) {
            (Provenance::Manual, Some(src)) => {
                Err(format!("manual pair must not have source_pair_id (found {src:?})"))
            }
            (Provenance::RuleTense | Provenance::MaskSubst, None) => Err(format!(
                "{} pair requires a source_pair_id",
                self.provenance
            )),
            _ => Ok(()),
        }
    }
}

/// Ordered pairs plus an optional split assignment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub pairs: Vec<SentenceGlossPair>,
    pub split: Option<BTreeMap<String, Split>>,
}

impl Corpus {
    pub fn new(pairs: Vec<SentenceGlossPair>) -> Self {
        Corpus { pairs, split: None }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&SentenceGlossPair> {
        self.pairs.iter().find(|p| p.id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(|p| p.id.as_str())
    }

    /// Pairs assigned to `split`, in corpus order. Empty when no split is set.
    pub fn partition(&self, split: Split) -> Corpus {
        let Some(map) = &self.split else {
            return Corpus::default();
        };
        let pairs = self
            .pairs
            .iter()
            .filter(|p| map.get(&p.id) == Some(&split))
            .cloned()
            .collect();
        Corpus::new(pairs)
    }

    /// Count of pairs per provenance tag.
    pub fn provenance_counts(&self) -> BTreeMap<Provenance, usize> {
        let mut counts = BTreeMap::new();
        for p in &self.pairs {
            *counts.entry(p.provenance).or_insert(0) += 1;
        }
        counts
    }

    /// Checks id uniqueness, per-pair invariants, and that every derived
    /// `source_pair_id` names a manual pair of this corpus.
    pub fn validate_provenance(&self) -> Result<(), CorpusError> {
        let mut by_id: HashMap<&str, &SentenceGlossPair> = HashMap::new();
        for p in &self.pairs {
            if by_id.insert(&p.id, p).is_some() {
                return Err(CorpusError::Invariant {
                    id: p.id.clone(),
                    reason: "duplicate id".into(),
                });
            }
            p.validate().map_err(|reason| CorpusError::Invariant {
                id: p.id.clone(),
                reason,
            })?;
        }
        for p in &self.pairs {
            if let Some(src) = &p.source_pair_id {
                match by_id.get(src.as_str()) {
                    Some(s) if s.provenance == Provenance::Manual => {}
                    Some(_) => {
                        return Err(CorpusError::Invariant {
                            id: p.id.clone(),
                            reason: format!("source {src:?} is not a manual pair"),
                        })
                    }
                    None => {
                        return Err(CorpusError::Invariant {
                            id: p.id.clone(),
                            reason: format!("source {src:?} is not in the corpus"),
                        })
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    Jsonl,
    Tsv,
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "tsv" => Ok(CorpusFormat::Tsv),
            other => Err(format!("unknown corpus format {other:?} (expected jsonl or tsv)")),
        }
    }
}

impl CorpusFormat {
    /// Infer the format from a file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") => CorpusFormat::Tsv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: malformed record: {reason}", path.display())]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{}: duplicate id {id:?} on lines {first} and {second}", path.display())]
    DuplicateId {
        path: PathBuf,
        id: String,
        first: usize,
        second: usize,
    },
    #[error("{}:{line}: invalid pair: {reason}", path.display())]
    InvalidPair {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("pair {id:?}: {reason}")]
    Invariant { id: String, reason: String },
    #[error("pair {id:?} cannot be written as TSV: {reason}")]
    TsvUnencodable { id: String, reason: String },
    #[error("invalid split ratios: {0}")]
    BadRatios(String),
    #[error("corpus is empty")]
    Empty,
    #[error("corpus already carries a split; overwrite was not requested")]
    SplitExists,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Load a corpus. Sentences and gloss tokens are NFC-normalized.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus, CorpusError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut pairs = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let lines = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l));

    let mut records = lines.enumerate().map(|(i, l)| (i + 1, l));
    if format == CorpusFormat::Tsv {
        match records.next() {
            Some((_, "id\tsentence\tgloss")) => {}
            Some((line, other)) => {
                return Err(CorpusError::Malformed {
                    path: path.to_path_buf(),
                    line,
                    reason: format!("expected header \"id\\tsentence\\tgloss\", found {other:?}"),
                })
            }
            None => unreachable!("split always yields at least one item"),
        }
    }

    for (line, raw) in records {
        if raw.trim().is_empty() {
            continue;
        }
        let mut pair = match format {
            CorpusFormat::Jsonl => serde_json::from_str::<SentenceGlossPair>(raw).map_err(|e| {
                CorpusError::Malformed {
                    path: path.to_path_buf(),
                    line,
                    reason: e.to_string(),
                }
            })?,
            CorpusFormat::Tsv => parse_tsv_row(raw).map_err(|reason| CorpusError::Malformed {
                path: path.to_path_buf(),
                line,
                reason,
            })?,
        };
        pair.normalize();
        pair.validate().map_err(|reason| CorpusError::InvalidPair {
            path: path.to_path_buf(),
            line,
            reason,
        })?;
        if let Some(&first) = seen.get(&pair.id) {
            return Err(CorpusError::DuplicateId {
                path: path.to_path_buf(),
                id: pair.id,
                first,
                second: line,
            });
        }
        seen.insert(pair.id.clone(), line);
        pairs.push(pair);
    }
    Ok(Corpus::new(pairs))
}

fn parse_tsv_row(raw: &str) -> Result<SentenceGlossPair, String> {
    let fields: Vec<&str> = raw.split('\t').collect();
    if fields.len() != 3 {
        return Err(format!("expected 3 tab-separated fields, found {}", fields.len()));
    }
    Ok(SentenceGlossPair {
        id: fields[0].to_string(),
        sentence: fields[1].to_string(),
        gloss: fields[2].split(' ').map(str::to_string).collect(),
        provenance: Provenance::Manual,
        tense: None,
        source_pair_id: None,
        meta: BTreeMap::new(),
    })
}

/// Serialize a corpus. TSV output keeps only `id`, `sentence` and `gloss`
/// and rejects values containing tabs or line breaks.
pub fn encode_corpus(corpus: &Corpus, format: CorpusFormat) -> Result<String, CorpusError> {
    let mut body = String::new();
    match format {
        CorpusFormat::Jsonl => {
            for p in &corpus.pairs {
                let line = serde_json::to_string(p).expect("pair serialization is infallible");
                body.push_str(&line);
                body.push('\n');
            }
        }
        CorpusFormat::Tsv => {
            body.push_str("id\tsentence\tgloss\n");
            for p in &corpus.pairs {
                let gloss = p.gloss_text();
                for (field, value) in [("id", &p.id), ("sentence", &p.sentence), ("gloss", &gloss)] {
                    if value.contains(['\t', '\n', '\r']) {
                        return Err(CorpusError::TsvUnencodable {
                            id: p.id.clone(),
                            reason: format!("{field} contains a tab or line break"),
                        });
                    }
                }
                body.push_str(&format!("{}\t{}\t{}\n", p.id, p.sentence, gloss));
            }
        }
    }
    Ok(body)
}

/// Write a corpus in `format`; see [`encode_corpus`].
pub fn write_corpus(corpus: &Corpus, path: &Path, format: CorpusFormat) -> Result<(), CorpusError> {
    let body = encode_corpus(corpus, format)?;
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    out.write_all(body.as_bytes()).map_err(io_err(path))?;
    out.flush().map_err(io_err(path))
}

/// Train/dev/test fractions and the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            dev: 0.1,
            test: 0.1,
            seed: 42,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, dev: f64, test: f64, seed: u64) -> Result<Self, CorpusError> {
        let r = SplitRatios {
            train,
            dev,
            test,
            seed,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        for (name, v) in [("train", self.train), ("dev", self.dev), ("test", self.test)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(CorpusError::BadRatios(format!("{name}={v} is not in (0, 1)")));
            }
        }
        let sum = self.train + self.dev + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::BadRatios(format!("fractions sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Sizes of (train, dev, test) for `n` pairs: floors for train and dev, the
/// remainder to test.
pub fn split_sizes(n: usize, ratios: &SplitRatios) -> (usize, usize, usize) {
    // The epsilon absorbs products like 0.29 * 100 = 28.999999999999996.
    let floor = |f: f64| ((n as f64) * f + 1e-9).floor() as usize;
    let train = floor(ratios.train).min(n);
    let dev = floor(ratios.dev).min(n - train);
    (train, dev, n - train - dev)
}

/// Assign every pair to train/dev/test. The assignment depends only on the
/// set of ids, the ratios and the seed: ids are sorted, shuffled with a
/// seeded ChaCha8 Fisher–Yates shuffle and sliced contiguously.
pub fn split_corpus(
    corpus: &Corpus,
    ratios: &SplitRatios,
    overwrite: bool,
) -> Result<Corpus, CorpusError> {
    ratios.validate()?;
    if corpus.is_empty() {
        return Err(CorpusError::Empty);
    }
    if corpus.split.is_some() && !overwrite {
        return Err(CorpusError::SplitExists);
    }
    let mut ids: Vec<&str> = corpus.ids().collect();
    ids.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(ratios.seed);
    ids.shuffle(&mut rng);

    let (train, dev, _) = split_sizes(ids.len(), ratios);
    let mut map = BTreeMap::new();
    for (pos, id) in ids.into_iter().enumerate() {
        let class = if pos < train {
            Split::Train
        } else if pos < train + dev {
            Split::Dev
        } else {
            Split::Test
        };
        map.insert(id.to_string(), class);
    }
    Ok(Corpus {
        pairs: corpus.pairs.clone(),
        split: Some(map),
    })
}

/// Collapse pairs with identical (NFC sentence, gloss). The first occurrence
/// is kept; returns the deduplicated corpus and the number of removed pairs.
pub fn dedupe(corpus: &Corpus) -> (Corpus, usize) {
    let mut seen: HashSet<(String, Vec<String>)> = HashSet::new();
    let mut pairs = Vec::with_capacity(corpus.len());
    for p in &corpus.pairs {
        let key = (nfc(&p.sentence), p.gloss.iter().map(|g| nfc(g)).collect());
        if seen.insert(key) {
            pairs.push(p.clone());
        }
    }
    let removed = corpus.len() - pairs.len();
    let split = corpus.split.as_ref().map(|map| {
        pairs
            .iter()
            .filter_map(|p| map.get(&p.id).map(|s| (p.id.clone(), *s)))
            .collect()
    });
    (Corpus { pairs, split }, removed)
}

/// Write the split assignment as `id<TAB>split` lines in corpus order.
pub fn write_split_map(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let map = corpus.split.as_ref().ok_or_else(|| CorpusError::Invariant {
        id: String::new(),
        reason: "corpus has no split to write".into(),
    })?;
    let mut body = String::from("id\tsplit\n");
    for p in &corpus.pairs {
        if let Some(s) = map.get(&p.id) {
            body.push_str(&format!("{}\t{}\n", p.id, s));
        }
    }
    fs::write(path, body).map_err(io_err(path))
}

/// Read a file written by [`write_split_map`].
pub fn load_split_map(path: &Path) -> Result<BTreeMap<String, Split>, CorpusError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let malformed = |reason: String| CorpusError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let (id, split) = line
            .split_once('\t')
            .ok_or_else(|| malformed("expected id<TAB>split".into()))?;
        let split = split.parse().map_err(malformed)?;
        if map.insert(id.to_string(), split).is_some() {
            return Err(malformed(format!("id {id:?} assigned twice")));
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn jsonl(lines: &[&str]) -> (tempfile::TempDir, PathBuf) {
        let dir = tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        fs::write(&path, lines.join("\n") + "\n").unwrap();
        (dir, path)
    }

    #[test]
    fn loads_two_records_in_file_order() {
        let (_d, path) = jsonl(&[
            r#"{"id":"b","sentence":"আমি বই পড়ি।","gloss":["আমি","বই","পড়"]}"#,
            r#"{"id":"a","sentence":"আমি গান শুনি।","gloss":["আমি","গান","শুন"]}"#,
        ]);
        let c = load_corpus(&path, CorpusFormat::Jsonl).unwrap();
        assert_eq!(c.ids().collect::<Vec<_>>(), ["b", "a"]);
        assert_eq!(c.pairs[0].provenance, Provenance::Manual);
    }

    #[test]
    fn duplicate_id_names_both_lines() {
        let (_d, path) = jsonl(&[
            r#"{"id":"a","sentence":"x","gloss":["X"]}"#,
            r#"{"id":"b","sentence":"y","gloss":["Y"]}"#,
            r#"{"id":"a","sentence":"z","gloss":["Z"]}"#,
        ]);
        match load_corpus(&path, CorpusFormat::Jsonl) {
            Err(CorpusError::DuplicateId { first, second, id, .. }) => {
                assert_eq!((first, second), (1, 3));
                assert_eq!(id, "a");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line_carries_line_number() {
        let (_d, path) = jsonl(&[r#"{"id":"a","sentence":"x","gloss":["X"]}"#, "{not json"]);
        let err = load_corpus(&path, CorpusFormat::Jsonl).unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 2, .. }), "{err}");
    }

    #[test]
    fn empty_sentence_or_gloss_is_rejected() {
        let (_d, path) = jsonl(&[r#"{"id":"a","sentence":"  ","gloss":["X"]}"#]);
        assert!(matches!(
            load_corpus(&path, CorpusFormat::Jsonl),
            Err(CorpusError::InvalidPair { line: 1, .. })
        ));
        let (_d, path) = jsonl(&[r#"{"id":"a","sentence":"x","gloss":[]}"#]);
        assert!(matches!(
            load_corpus(&path, CorpusFormat::Jsonl),
            Err(CorpusError::InvalidPair { line: 1, .. })
        ));
    }

    #[test]
    fn manual_pair_with_source_is_invalid() {
        let (_d, path) =
            jsonl(&[r#"{"id":"a","sentence":"x","gloss":["X"],"source_pair_id":"z"}"#]);
        assert!(load_corpus(&path, CorpusFormat::Jsonl).is_err());
    }

    #[test]
    fn nfd_input_is_normalized_on_load() {
        // U+09CB (ো) decomposes canonically to U+09C7 U+09BE.
        let nfd = "\u{09AD}\u{09BE}\u{09B2}\u{09C7}\u{09BE}";
        let (_d, path) = jsonl(&[&format!(r#"{{"id":"a","sentence":"{nfd}","gloss":["{nfd}"]}}"#)]);
        let c = load_corpus(&path, CorpusFormat::Jsonl).unwrap();
        assert_eq!(c.pairs[0].sentence, "\u{09AD}\u{09BE}\u{09B2}\u{09CB}");
        assert_eq!(c.pairs[0].gloss[0], "\u{09AD}\u{09BE}\u{09B2}\u{09CB}");
    }

    #[test]
    fn tsv_round_trip_and_header_check() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("c.tsv");
        let c = Corpus::new(vec![
            SentenceGlossPair::manual("a", "আমি বই পড়ি।", &["আমি", "বই", "পড়"]),
            SentenceGlossPair::manual("b", "আমি গান শুনব।", &["আমি", "গান", "শুন", "হবে"]),
        ]);
        write_corpus(&c, &path, CorpusFormat::Tsv).unwrap();
        assert_eq!(load_corpus(&path, CorpusFormat::Tsv).unwrap(), c);

        fs::write(&path, "id\tsentence\n").unwrap();
        assert!(matches!(
            load_corpus(&path, CorpusFormat::Tsv),
            Err(CorpusError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn tsv_double_space_in_gloss_is_an_empty_token() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("c.tsv");
        fs::write(&path, "id\tsentence\tgloss\na\tx\tA  B\n").unwrap();
        assert!(matches!(
            load_corpus(&path, CorpusFormat::Tsv),
            Err(CorpusError::InvalidPair { line: 2, .. })
        ));
    }

    #[test]
    fn tsv_rejects_tab_in_sentence() {
        let dir = tempdir().unwrap();
        let c = Corpus::new(vec![SentenceGlossPair::manual("a", "x\ty", &["X"])]);
        let err = write_corpus(&c, &dir.path().join("c.tsv"), CorpusFormat::Tsv).unwrap_err();
        assert!(matches!(err, CorpusError::TsvUnencodable { .. }));
    }

    #[test]
    fn write_to_missing_directory_names_path() {
        let c = Corpus::new(vec![SentenceGlossPair::manual("a", "x", &["X"])]);
        let err = write_corpus(&c, Path::new("/nonexistent/dir/c.jsonl"), CorpusFormat::Jsonl)
            .unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/c.jsonl"));
    }

    #[test]
    fn split_sizes_use_floors() {
        let r = SplitRatios::default();
        assert_eq!(split_sizes(1000, &r), (800, 100, 100));
        assert_eq!(split_sizes(10, &r), (8, 1, 1));
        assert_eq!(split_sizes(7, &r), (5, 0, 2));
        let r = SplitRatios::new(0.29, 0.01, 0.7, 0).unwrap();
        assert_eq!(split_sizes(100, &r), (29, 1, 70));
    }

    #[test]
    fn bad_ratios_are_rejected() {
        assert!(SplitRatios::new(0.8, 0.1, 0.2, 0).is_err());
        assert!(SplitRatios::new(1.0, 0.0, 0.0, 0).is_err());
        assert!(SplitRatios::new(0.5, 0.25, 0.25, 0).is_ok());
    }

    #[test]
    fn split_refuses_to_overwrite_without_flag() {
        let c = Corpus::new(vec![SentenceGlossPair::manual("a", "x", &["X"])]);
        let s = split_corpus(&c, &SplitRatios::default(), false).unwrap();
        assert!(matches!(
            split_corpus(&s, &SplitRatios::default(), false),
            Err(CorpusError::SplitExists)
        ));
        assert!(split_corpus(&s, &SplitRatios::default(), true).is_ok());
        assert!(matches!(
            split_corpus(&Corpus::default(), &SplitRatios::default(), false),
            Err(CorpusError::Empty)
        ));
    }

    #[test]
    fn dedupe_keeps_first_and_distinguishes_gloss() {
        let c = Corpus::new(vec![
            SentenceGlossPair::manual("a", "x", &["X"]),
            SentenceGlossPair::manual("b", "x", &["X"]),
            SentenceGlossPair::manual("c", "x", &["Y"]),
        ]);
        let (d, removed) = dedupe(&c);
        assert_eq!(removed, 1);
        assert_eq!(d.ids().collect::<Vec<_>>(), ["a", "c"]);
    }

    #[test]
    fn validate_provenance_checks_sources() {
        let mut derived = SentenceGlossPair::manual("d", "y", &["Y"]);
        derived.provenance = Provenance::RuleTense;
        derived.source_pair_id = Some("a".into());
        let c = Corpus::new(vec![SentenceGlossPair::manual("a", "x", &["X"]), derived.clone()]);
        c.validate_provenance().unwrap();

        derived.source_pair_id = Some("missing".into());
        let c = Corpus::new(vec![SentenceGlossPair::manual("a", "x", &["X"]), derived]);
        assert!(c.validate_provenance().is_err());
    }
}
