//! Exact cosine-similarity retrieval over embedded training pairs.
//!
//! The index is a flat list of unit vectors. Queries score every entry, keep
//! those at or above the similarity threshold, order them by descending score
//! (ascending id on ties) and truncate to the cap. A result with fewer than
//! `min_examples` matches is flagged for the rule-based fallback.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::hash::Hasher;
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, RetryPolicy};
use crate::corpus::{nfc, SentenceGlossPair};
use crate::pool::map_bounded;

/// Turns texts into fixed-dimension vectors. Implementations must be
/// deterministic per text.
pub trait EmbedderBackend: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, BackendError>;
}

impl<E: EmbedderBackend + ?Sized> EmbedderBackend for &E {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        (**self).embed(texts)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("vector dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("cannot build an index from an empty training set")]
    EmptyTrainingSet,
    #[error("index is empty")]
    EmptyIndex,
    #[error("duplicate pair id {0:?} in index")]
    DuplicateId(String),
    #[error("embedding for {id:?} is the zero vector")]
    ZeroEmbedding { id: String },
    #[error("embedding dimension drifted from {expected} to {found} (batch {batch})")]
    DimensionDrift {
        expected: usize,
        found: usize,
        batch: usize,
    },
    #[error("backend returned {found} vectors for {expected} texts")]
    CountMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: unsupported index version {found:?}", path.display())]
    VersionMismatch { path: PathBuf, found: String },
    #[error("{}: checksum mismatch or truncated file: {reason}", path.display())]
    CorruptChecksum { path: PathBuf, reason: String },
    #[error("{}:{line}: {reason}", path.display())]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("invalid retrieval config: {0}")]
    BadConfig(String),
}

/// Cosine of the angle between `a` and `b`, computed in f64.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f64, RetrievalError> {
    if a.len() != b.len() {
        return Err(RetrievalError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(RetrievalError::ZeroVector);
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

/// L2 norm computed in f64.
pub fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

fn normalize(v: &[f32]) -> Option<Vec<f32>> {
    let norm = l2_norm(v);
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    Some(v.iter().map(|&x| (x as f64 / norm) as f32).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    #[serde(rename = "vec")]
    pub vector: Vec<f32>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    pub entries: Vec<IndexEntry>,
    pub dimension: usize,
    pub backend_name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub threshold: f64,
    pub cap: usize,
    pub min_examples: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            threshold: 0.5,
            cap: 20,
            min_examples: 3,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if !(-1.0..=1.0).contains(&self.threshold) {
            return Err(RetrievalError::BadConfig(format!(
                "threshold {} outside [-1, 1]",
                self.threshold
            )));
        }
        if self.cap == 0 {
            return Err(RetrievalError::BadConfig("cap must be positive".into()));
        }
        if self.min_examples > self.cap {
            return Err(RetrievalError::BadConfig(format!(
                "min_examples {} exceeds cap {}",
                self.min_examples, self.cap
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub pair_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub matches: Vec<Match>,
    pub fallback_needed: bool,
}

/// Apply the threshold / ordering / cap / fallback policy to scored candidates.
pub fn select_matches(mut scored: Vec<Match>, cfg: &RetrievalConfig) -> RetrievalResult {
    scored.retain(|m| m.score >= cfg.threshold);
    scored.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.pair_id.cmp(&b.pair_id))
    });
    scored.truncate(cfg.cap);
    let fallback_needed = scored.len() < cfg.min_examples;
    RetrievalResult {
        matches: scored,
        fallback_needed,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    pub batch_size: usize,
    pub concurrency: usize,
    pub retry: RetryPolicy,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            batch_size: 64,
            concurrency: 1,
            retry: RetryPolicy::default(),
        }
    }
}

/// Embed every training pair and store its unit vector.
pub fn build_index(
    train: &[SentenceGlossPair],
    backend: &dyn EmbedderBackend,
    opts: &BuildOptions,
) -> Result<EmbeddingIndex, RetrievalError> {
    if train.is_empty() {
        return Err(RetrievalError::EmptyTrainingSet);
    }
    let mut ids = HashSet::new();
    for p in train {
        if !ids.insert(p.id.as_str()) {
            return Err(RetrievalError::DuplicateId(p.id.clone()));
        }
    }
    let batches: Vec<&[SentenceGlossPair]> = train.chunks(opts.batch_size.max(1)).collect();
    let embedded = map_bounded(&batches, opts.concurrency, |b, batch| {
        let texts: Vec<String> = batch.iter().map(|p| nfc(&p.sentence)).collect();
        opts.retry
            .run(backend.name(), |_| backend.embed(&texts))
            .map(|vectors| (b, vectors))
    });

    let expected = backend.dimension();
    let mut entries = Vec::with_capacity(train.len());
    for (batch, result) in batches.iter().zip(embedded) {
        let (b, vectors) = result?;
        if vectors.len() != batch.len() {
            return Err(RetrievalError::CountMismatch {
                expected: batch.len(),
                found: vectors.len(),
            });
        }
        for (pair, v) in batch.iter().zip(vectors) {
            if v.len() != expected {
                return Err(RetrievalError::DimensionDrift {
                    expected,
                    found: v.len(),
                    batch: b,
                });
            }
            let unit = normalize(&v).ok_or_else(|| RetrievalError::ZeroEmbedding {
                id: pair.id.clone(),
            })?;
            entries.push(IndexEntry {
                id: pair.id.clone(),
                vector: unit,
                text: nfc(&pair.sentence),
            });
        }
    }
    tracing::info!(entries = entries.len(), backend = backend.name(), "built embedding index");
    Ok(EmbeddingIndex {
        entries,
        dimension: expected,
        backend_name: backend.name().to_string(),
    })
}

impl EmbeddingIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Warns when the index was built by a different backend. Returns whether
    /// the names matched.
    pub fn check_backend(&self, backend_name: &str) -> bool {
        if self.backend_name != backend_name {
            tracing::warn!(
                index_backend = %self.backend_name,
                query_backend = %backend_name,
                "index was built with a different embedder; scores may be meaningless"
            );
            return false;
        }
        true
    }

    /// Cosine scores of a unit query vector against every entry, optionally
    /// skipping entries whose text equals `exclude_text`.
    pub fn score_all(&self, unit_query: &[f32], exclude_text: Option<&str>) -> Vec<Match> {
        self.entries
            .iter()
            .filter(|e| exclude_text != Some(e.text.as_str()))
            .map(|e| Match {
                pair_id: e.id.clone(),
                score: e
                    .vector
                    .iter()
                    .zip(unit_query)
                    .map(|(&a, &b)| a as f64 * b as f64)
                    .sum(),
            })
            .collect()
    }

    /// Serialized index bytes, including the trailing checksum line.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!(
            "glossforge-index v1 dim={} backend={}\n",
            self.dimension, self.backend_name
        );
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entry serialization is infallible"));
            out.push('\n');
        }
        let sum = fnv1a64(out.as_bytes());
        let _ = writeln!(out, "checksum={sum:016x}");
        out.into_bytes()
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

fn embed_query(
    sentence: &str,
    dimension: usize,
    backend: &dyn EmbedderBackend,
) -> Result<Vec<f32>, RetrievalError> {
    let mut vectors = backend.embed(&[nfc(sentence)])?;
    let v = vectors.pop().ok_or(RetrievalError::CountMismatch {
        expected: 1,
        found: 0,
    })?;
    if v.len() != dimension {
        return Err(RetrievalError::DimensionMismatch {
            left: dimension,
            right: v.len(),
        });
    }
    normalize(&v).ok_or(RetrievalError::ZeroVector)
}

/// Embed `sentence` and return the matches allowed by `cfg`.
pub fn query_index(
    idx: &EmbeddingIndex,
    sentence: &str,
    cfg: &RetrievalConfig,
    backend: &dyn EmbedderBackend,
) -> Result<RetrievalResult, RetrievalError> {
    query_with(idx, sentence, cfg, backend, false)
}

/// As [`query_index`], but entries whose text equals the query are never
/// returned, so a sentence cannot retrieve itself as an example.
pub fn query_index_excluding_self(
    idx: &EmbeddingIndex,
    sentence: &str,
    cfg: &RetrievalConfig,
    backend: &dyn EmbedderBackend,
) -> Result<RetrievalResult, RetrievalError> {
    query_with(idx, sentence, cfg, backend, true)
}

fn query_with(
    idx: &EmbeddingIndex,
    sentence: &str,
    cfg: &RetrievalConfig,
    backend: &dyn EmbedderBackend,
    exclude_self: bool,
) -> Result<RetrievalResult, RetrievalError> {
    if idx.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    cfg.validate()?;
    let query = embed_query(sentence, idx.dimension, backend)?;
    let target = nfc(sentence);
    let exclude = exclude_self.then_some(target.as_str());
    Ok(select_matches(idx.score_all(&query, exclude), cfg))
}

/// Write the index file.
pub fn save_index(idx: &EmbeddingIndex, path: &Path) -> Result<(), RetrievalError> {
    fs::write(path, idx.to_bytes()).map_err(|source| RetrievalError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Read and verify an index file.
pub fn load_index(path: &Path) -> Result<EmbeddingIndex, RetrievalError> {
    let bytes = fs::read(path).map_err(|source| RetrievalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_index(&bytes, path)
}

fn parse_index(bytes: &[u8], path: &Path) -> Result<EmbeddingIndex, RetrievalError> {
    let corrupt = |reason: &str| RetrievalError::CorruptChecksum {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let text = std::str::from_utf8(bytes).map_err(|_| corrupt("file is not UTF-8"))?;
    let body_end = text
        .trim_end_matches('\n')
        .rfind('\n')
        .map(|i| i + 1)
        .ok_or_else(|| corrupt("no checksum line"))?;
    let (body, trailer) = text.split_at(body_end);
    let stated = trailer
        .trim_end_matches('\n')
        .strip_prefix("checksum=")
        .ok_or_else(|| corrupt("no checksum line"))?;
    let stated = u64::from_str_radix(stated, 16).map_err(|_| corrupt("checksum is not hex"))?;
    if stated != fnv1a64(body.as_bytes()) {
        return Err(corrupt("checksum does not match contents"));
    }

    let mut lines = body.lines();
    let header = lines.next().unwrap_or_default();
    let malformed = |line: usize, reason: String| RetrievalError::Malformed {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let rest = header
        .strip_prefix("glossforge-index ")
        .ok_or_else(|| malformed(1, "missing glossforge-index header".into()))?;
    let (version, rest) = rest.split_once(' ').unwrap_or((rest, ""));
    if version != "v1" {
        return Err(RetrievalError::VersionMismatch {
            path: path.to_path_buf(),
            found: version.to_string(),
        });
    }
    let (dim, backend) = rest
        .strip_prefix("dim=")
        .and_then(|r| r.split_once(" backend="))
        .ok_or_else(|| malformed(1, "expected `dim=<D> backend=<name>`".into()))?;
    let dimension: usize = dim
        .parse()
        .map_err(|_| malformed(1, format!("bad dimension {dim:?}")))?;

    let mut entries = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let entry: IndexEntry =
            serde_json::from_str(line).map_err(|e| malformed(lineno, e.to_string()))?;
        if entry.vector.len() != dimension {
            return Err(malformed(
                lineno,
                format!("vector has dimension {}, header says {dimension}", entry.vector.len()),
            ));
        }
        let norm = l2_norm(&entry.vector);
        if (norm - 1.0).abs() > 1e-6 {
            return Err(malformed(lineno, format!("vector norm {norm} is not 1")));
        }
        if !ids.insert(entry.id.clone()) {
            return Err(RetrievalError::DuplicateId(entry.id));
        }
        entries.push(entry);
    }
    Ok(EmbeddingIndex {
        entries,
        dimension,
        backend_name: backend.to_string(),
    })
}

/// Offline embedder: each whitespace token maps to a seeded pseudo-random
/// vector, a text is the normalized sum of its token vectors. Texts sharing
/// most tokens therefore land close together.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dimension: usize,
    seed: u64,
    name: String,
}

impl HashEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Self {
        HashEmbedder {
            dimension,
            seed,
            name: format!("hash-bow-d{dimension}-s{seed}"),
        }
    }

    fn token_vector(&self, token: &str, out: &mut [f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(token.as_bytes()) ^ self.seed);
        for x in out.iter_mut() {
            *x += rng.random_range(-1.0..1.0);
        }
    }

    pub fn embed_one(&self, text: &str) -> Vec<f32> {
        let text = nfc(text);
        let mut acc = vec![0.0f64; self.dimension];
        let mut any = false;
        for token in text.split_whitespace() {
            let token = token.trim_end_matches(|c: char| c.is_ascii_punctuation() || c == '।');
            if token.is_empty() {
                continue;
            }
            self.token_vector(token, &mut acc);
            any = true;
        }
        if !any {
            self.token_vector(&text, &mut acc);
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        acc.iter().map(|x| (x / norm) as f32).collect()
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder::new(256, 0)
    }
}

impl EmbedderBackend for HashEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use tempfile::tempdir;

    fn pairs(sentences: &[&str]) -> Vec<SentenceGlossPair> {
        sentences
            .iter()
            .enumerate()
            .map(|(i, s)| SentenceGlossPair::manual(format!("p{i:02}"), s, &["G"]))
            .collect()
    }

    #[test]
    fn cosine_examples() {
        assert_abs_diff_eq!(cosine_similarity(&[3.0, -4.0], &[3.0, -4.0]).unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        // 1/sqrt(2)
        assert_abs_diff_eq!(
            cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap(),
            0.7071,
            epsilon = 1e-4
        );
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine_similarity(&[1.0], &[1.0, 2.0]),
            Err(RetrievalError::DimensionMismatch { left: 1, right: 2 })
        ));
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 2.0]),
            Err(RetrievalError::ZeroVector)
        ));
    }

    #[test]
    fn hash_embedder_is_deterministic_and_unit() {
        let e = HashEmbedder::default();
        let a = e.embed_one("আমি বই পড়ি।");
        assert_eq!(a, e.embed_one("আমি বই পড়ি।"));
        assert_abs_diff_eq!(l2_norm(&a), 1.0, epsilon = 1e-6);
        let b = e.embed_one("আমি খাতা পড়ি।");
        let c = e.embed_one("তারা মাঠে ফুটবল খেলে।");
        // Two shared tokens out of three, versus none.
        assert!(cosine_similarity(&a, &b).unwrap() > 0.5);
        assert!(cosine_similarity(&a, &c).unwrap() < 0.5);
    }

    #[test]
    fn empty_training_set_is_rejected() {
        let e = HashEmbedder::default();
        assert!(matches!(
            build_index(&[], &e, &BuildOptions::default()),
            Err(RetrievalError::EmptyTrainingSet)
        ));
    }

    #[test]
    fn stored_vectors_are_unit_length() {
        let e = HashEmbedder::new(32, 7);
        let idx = build_index(&pairs(&["a b c", "d e", "f"]), &e, &BuildOptions::default()).unwrap();
        for entry in &idx.entries {
            assert_abs_diff_eq!(
                cosine_similarity(&entry.vector, &entry.vector).unwrap(),
                1.0,
                epsilon = 1e-6
            );
        }
    }

    struct Drifting {
        calls: AtomicUsize,
    }

    impl EmbedderBackend for Drifting {
        fn name(&self) -> &str {
            "drift"
        }
        fn dimension(&self) -> usize {
            2
        }
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
            let call = self.calls.fetch_add(1, Ordering::SeqCst);
            let dim = if call == 0 { 2 } else { 3 };
            Ok(texts.iter().map(|_| vec![1.0; dim]).collect())
        }
    }

    #[test]
    fn dimension_drift_across_batches_is_an_error() {
        let backend = Drifting {
            calls: AtomicUsize::new(0),
        };
        let opts = BuildOptions {
            batch_size: 1,
            ..Default::default()
        };
        let err = build_index(&pairs(&["a", "b"]), &backend, &opts).unwrap_err();
        assert!(matches!(err, RetrievalError::DimensionDrift { batch: 1, .. }), "{err}");
    }

    struct AlwaysDown {
        calls: AtomicUsize,
    }

    impl EmbedderBackend for AlwaysDown {
        fn name(&self) -> &str {
            "down"
        }
        fn dimension(&self) -> usize {
            2
        }
        fn embed(&self, _: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Err(BackendError::Failed {
                backend: "down".into(),
                message: "unreachable".into(),
            })
        }
    }

    #[test]
    fn backend_failure_is_retried_three_times() {
        let backend = AlwaysDown {
            calls: AtomicUsize::new(0),
        };
        let opts = BuildOptions {
            retry: RetryPolicy::immediate(),
            ..Default::default()
        };
        let err = build_index(&pairs(&["a"]), &backend, &opts).unwrap_err();
        assert!(matches!(
            err,
            RetrievalError::Backend(BackendError::Exhausted { attempts: 3, .. })
        ));
        assert_eq!(backend.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn concurrent_batches_give_the_same_index() {
        let e = HashEmbedder::new(16, 1);
        let ps = pairs(&["a", "b c", "d", "e f g", "h", "i", "j k"]);
        let serial = build_index(&ps, &e, &BuildOptions { batch_size: 2, ..Default::default() }).unwrap();
        let parallel = build_index(
            &ps,
            &e,
            &BuildOptions {
                batch_size: 2,
                concurrency: 4,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn query_on_stored_sentence_returns_it_first() {
        let e = HashEmbedder::default();
        let ps = pairs(&["আমি বই পড়ি।", "আমি খাতা পড়ি।", "তারা মাঠে ফুটবল খেলে।"]);
        let idx = build_index(&ps, &e, &BuildOptions::default()).unwrap();
        let rr = query_index(&idx, "আমি বই পড়ি।", &RetrievalConfig::default(), &e).unwrap();
        assert_eq!(rr.matches[0].pair_id, "p00");
        assert_abs_diff_eq!(rr.matches[0].score, 1.0, epsilon = 1e-6);

        let rr = query_index_excluding_self(&idx, "আমি বই পড়ি।", &RetrievalConfig::default(), &e)
            .unwrap();
        assert!(rr.matches.iter().all(|m| m.pair_id != "p00"));
    }

    #[test]
    fn select_applies_threshold_ties_and_cap() {
        let cfg = RetrievalConfig {
            threshold: 0.5,
            cap: 3,
            min_examples: 2,
        };
        let m = |id: &str, score| Match {
            pair_id: id.into(),
            score,
        };
        let rr = select_matches(
            vec![m("d", 0.9), m("b", 0.7), m("a", 0.7), m("c", 0.49), m("e", 0.5)],
            &cfg,
        );
        let ids: Vec<_> = rr.matches.iter().map(|m| m.pair_id.as_str()).collect();
        assert_eq!(ids, ["d", "a", "b"]);
        assert!(!rr.fallback_needed);

        let rr = select_matches(vec![m("a", 0.2), m("b", 0.1)], &cfg);
        assert!(rr.matches.is_empty());
        assert!(rr.fallback_needed);
    }

    #[test]
    fn save_load_round_trip_and_corruption() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("train.idx");
        let e = HashEmbedder::new(8, 3);
        let idx = build_index(&pairs(&["a", "b", "c d", "e", "f g h"]), &e, &BuildOptions::default())
            .unwrap();
        save_index(&idx, &path).unwrap();
        let loaded = load_index(&path).unwrap();
        assert_eq!(loaded, idx);
        assert_eq!(loaded.to_bytes(), fs::read(&path).unwrap());

        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_index(&path), Err(RetrievalError::CorruptChecksum { .. })));

        let bumped = String::from_utf8(bytes).unwrap().replacen(" v1 ", " v2 ", 1);
        let body_end = bumped.trim_end().rfind('\n').unwrap() + 1;
        let body = &bumped[..body_end];
        fs::write(&path, format!("{body}checksum={:016x}\n", fnv1a64(body.as_bytes()))).unwrap();
        assert!(matches!(load_index(&path), Err(RetrievalError::VersionMismatch { .. })));
    }

    #[test]
    fn fnv1a_reference_values() {
        // Published FNV-1a 64-bit test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn backend_mismatch_warns_but_loads() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("x.idx");
        let e = HashEmbedder::new(8, 3);
        let idx = build_index(&pairs(&["a"]), &e, &BuildOptions::default()).unwrap();
        save_index(&idx, &path).unwrap();
        let loaded = load_index(&path).unwrap();
        assert!(!loaded.check_backend("some-other-model"));
        assert!(loaded.check_backend(e.name()));
        let rr = query_index(&loaded, "a", &RetrievalConfig::default(), &HashEmbedder::new(8, 9));
        assert!(rr.is_ok());
    }
}
