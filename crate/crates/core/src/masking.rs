//! Masked-token substitution: hide one content word, ask a fill-mask model
//! for replacements, and write each replacement into both the sentence and
//! the aligned gloss positions.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::hash::Hasher;
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, RetryPolicy};
use crate::corpus::{nfc, split_trailing_punct, Corpus, Provenance, SentenceGlossPair, Tense};
use crate::pool::map_bounded;

pub const MASK: &str = "[MASK]";

/// A masked-language model.
pub trait FillMaskBackend: Send + Sync {
    /// Up to `k` `(token, score)` candidates for the `[MASK]` slot, best first.
    fn candidates(&self, text_with_mask: &str, k: usize) -> Result<Vec<(String, f64)>, BackendError>;
}

impl<B: FillMaskBackend + ?Sized> FillMaskBackend for &B {
    fn candidates(&self, text_with_mask: &str, k: usize) -> Result<Vec<(String, f64)>, BackendError> {
        (**self).candidates(text_with_mask, k)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MaskError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{id}: token index {index} out of range ({len} tokens)")]
    OutOfRange { id: String, index: usize, len: usize },
    #[error("{id}: token {token:?} does not occur in the gloss")]
    NotAlignable { id: String, token: String },
    #[error("{id}: token {token:?} is in the stop-list")]
    NotMaskable { id: String, token: String },
    #[error("candidate {candidate:?} is the original token")]
    Degenerate { candidate: String },
    #[error("candidate {candidate:?} is empty or contains whitespace")]
    InvalidCandidate { candidate: String },
    #[error("per_pair_k must be at least 1")]
    BadK,
}

/// Function words that are never masked. One token per line; `#` starts a comment.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StopList {
    words: HashSet<String>,
}

impl StopList {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        StopList {
            words: words.into_iter().map(|w| nfc(w.as_ref().trim())).collect(),
        }
    }

    pub fn parse(text: &str) -> Self {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn load(path: &Path) -> Result<Self, MaskError> {
        let text = fs::read_to_string(path).map_err(|source| MaskError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// A pair with one sentence token replaced by `[MASK]`. Punctuation attached
/// to the masked token stays in place after the placeholder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskTemplate {
    pub source_pair_id: String,
    pub sentence_tokens: Vec<String>,
    pub mask_index: usize,
    pub gloss_tokens: Vec<String>,
    pub gloss_mask_positions: Vec<usize>,
    pub original_token: String,
    pub tense: Option<Tense>,
}

impl MaskTemplate {
    /// The sentence as sent to the fill-mask model.
    pub fn masked_text(&self) -> String {
        self.sentence_tokens.join(" ")
    }
}

/// Mask sentence token `index` of `p`.
pub fn make_template(
    p: &SentenceGlossPair,
    index: usize,
    stop_list: &StopList,
) -> Result<MaskTemplate, MaskError> {
    let mut tokens: Vec<String> = p.sentence.split_whitespace().map(str::to_string).collect();
    let len = tokens.len();
    let token = tokens.get(index).ok_or(MaskError::OutOfRange {
        id: p.id.clone(),
        index,
        len,
    })?;
    let (body, punct) = split_trailing_punct(token);
    if stop_list.contains(body) {
        return Err(MaskError::NotMaskable {
            id: p.id.clone(),
            token: body.to_string(),
        });
    }
    let positions: Vec<usize> = p
        .gloss
        .iter()
        .enumerate()
        .filter(|(_, g)| !body.is_empty() && g.as_str() == body)
        .map(|(i, _)| i)
        .collect();
    if positions.is_empty() {
        return Err(MaskError::NotAlignable {
            id: p.id.clone(),
            token: body.to_string(),
        });
    }
    let original = body.to_string();
    tokens[index] = format!("{MASK}{punct}");
    Ok(MaskTemplate {
        source_pair_id: p.id.clone(),
        sentence_tokens: tokens,
        mask_index: index,
        gloss_tokens: p.gloss.clone(),
        gloss_mask_positions: positions,
        original_token: original,
        tense: p.tense,
    })
}

/// Fill the template with `candidate`, producing a `mask_subst` pair.
pub fn substitute(t: &MaskTemplate, candidate: &str) -> Result<SentenceGlossPair, MaskError> {
    let candidate = nfc(candidate);
    if candidate.is_empty() || candidate.chars().any(char::is_whitespace) || candidate.contains(MASK)
    {
        return Err(MaskError::InvalidCandidate { candidate });
    }
    if candidate == t.original_token {
        return Err(MaskError::Degenerate { candidate });
    }
    let mut sentence = t.sentence_tokens.clone();
    sentence[t.mask_index] = sentence[t.mask_index].replacen(MASK, &candidate, 1);
    let mut gloss = t.gloss_tokens.clone();
    for &i in &t.gloss_mask_positions {
        gloss[i] = candidate.clone();
    }
    let mut meta = BTreeMap::new();
    meta.insert("mask_index".into(), t.mask_index.to_string());
    meta.insert("original_token".into(), t.original_token.clone());
    Ok(SentenceGlossPair {
        id: format!("{}.m{}.{}", t.source_pair_id, t.mask_index, candidate),
        sentence: sentence.join(" "),
        gloss,
        provenance: Provenance::MaskSubst,
        tense: t.tense,
        source_pair_id: Some(t.source_pair_id.clone()),
        meta,
    })
}

/// Token indices in masking order: longest token body first, then position.
pub fn candidate_positions(sentence: &str) -> Vec<usize> {
    let lens: Vec<usize> = sentence
        .split_whitespace()
        .map(|t| split_trailing_punct(t).0.chars().count())
        .collect();
    let mut idx: Vec<usize> = (0..lens.len()).collect();
    idx.sort_by(|&a, &b| lens[b].cmp(&lens[a]).then(a.cmp(&b)));
    idx
}

/// The best-ranked maskable template for `p`, if any.
pub fn best_template(p: &SentenceGlossPair, stop_list: &StopList) -> Option<MaskTemplate> {
    candidate_positions(&p.sentence)
        .into_iter()
        .find_map(|i| make_template(p, i, stop_list).ok())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskConfig {
    pub per_pair_k: usize,
    pub concurrency: usize,
    pub retry: RetryPolicy,
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig {
            per_pair_k: 2,
            concurrency: 1,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MaskReport {
    pub eligible_pairs: usize,
    pub produced: usize,
    /// Manual pairs without any alignable, non-stop-listed token.
    pub no_template: Vec<String>,
    /// Pairs whose backend call failed, with the reason.
    pub backend_failures: Vec<(String, String)>,
    /// Variants dropped because their sentence already exists.
    pub duplicates_dropped: usize,
    /// Candidates rejected as the original token or malformed.
    pub candidates_rejected: usize,
}

/// Produce up to `per_pair_k` variants for every manual pair in `c`.
///
/// Each pair is masked at its best-ranked position and the backend is asked
/// for `per_pair_k + 1` candidates, so that one returned copy of the original
/// token does not use up the budget.
pub fn batch_mask_augment(
    c: &Corpus,
    backend: &dyn FillMaskBackend,
    cfg: &MaskConfig,
    stop_list: &StopList,
) -> Result<(Corpus, MaskReport), MaskError> {
    if cfg.per_pair_k == 0 {
        return Err(MaskError::BadK);
    }
    let mut report = MaskReport::default();
    let mut templates = Vec::new();
    for p in c.pairs.iter().filter(|p| p.provenance == Provenance::Manual) {
        report.eligible_pairs += 1;
        match best_template(p, stop_list) {
            Some(t) => templates.push(t),
            None => {
                tracing::info!(id = %p.id, action = "mask", outcome = "no_template");
                report.no_template.push(p.id.clone());
            }
        }
    }

    let k = cfg.per_pair_k;
    let responses = map_bounded(&templates, cfg.concurrency, |_, t| {
        let text = t.masked_text();
        cfg.retry.run("fill-mask", |_| backend.candidates(&text, k + 1))
    });

    let mut seen: HashSet<String> = c.pairs.iter().map(|p| p.sentence.clone()).collect();
    let mut out = Vec::new();
    for (t, response) in templates.iter().zip(responses) {
        let candidates = match response {
            Ok(cands) => cands,
            Err(e) => {
                tracing::warn!(id = %t.source_pair_id, action = "mask", outcome = "error", error = %e);
                report.backend_failures.push((t.source_pair_id.clone(), e.to_string()));
                continue;
            }
        };
        let mut made = 0;
        for (candidate, _) in candidates {
            if made == k {
                break;
            }
            let pair = match substitute(t, &candidate) {
                Ok(p) => p,
                Err(_) => {
                    report.candidates_rejected += 1;
                    continue;
                }
            };
            if !seen.insert(pair.sentence.clone()) {
                report.duplicates_dropped += 1;
                continue;
            }
            made += 1;
            out.push(pair);
        }
        tracing::info!(id = %t.source_pair_id, action = "mask", outcome = "ok", variants = made);
    }
    report.produced = out.len();
    Ok((Corpus::new(out), report))
}

/// Fill-mask mock answering from a fixed table keyed by masked text.
/// Unknown contexts get no candidates.
#[derive(Debug, Clone, Default)]
pub struct TableFillMask {
    table: HashMap<String, Vec<(String, f64)>>,
}

impl TableFillMask {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, masked_text: &str, candidates: &[(&str, f64)]) {
        self.table.insert(
            masked_text.to_string(),
            candidates.iter().map(|(t, s)| (t.to_string(), *s)).collect(),
        );
    }
}

impl FillMaskBackend for TableFillMask {
    fn candidates(&self, text_with_mask: &str, k: usize) -> Result<Vec<(String, f64)>, BackendError> {
        let mut c = self.table.get(text_with_mask).cloned().unwrap_or_default();
        c.sort_by(|a, b| b.1.total_cmp(&a.1));
        c.truncate(k);
        Ok(c)
    }
}

/// Fill-mask mock that ranks a fixed vocabulary by a hash of
/// `(masked text, token)`, so every context gets a deterministic ordering.
#[derive(Debug, Clone)]
pub struct VocabularyFillMask {
    vocabulary: Vec<String>,
}

impl VocabularyFillMask {
    pub fn new<I, S>(vocabulary: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v: Vec<String> = vocabulary.into_iter().map(|s| nfc(s.as_ref())).collect();
        v.sort();
        v.dedup();
        VocabularyFillMask { vocabulary: v }
    }

    /// Sentence tokens of manual pairs that also occur in their gloss and are
    /// not stop-listed.
    pub fn from_corpus(c: &Corpus, stop_list: &StopList) -> Self {
        let mut words = Vec::new();
        for p in c.pairs.iter().filter(|p| p.provenance == Provenance::Manual) {
            for t in p.sentence.split_whitespace() {
                let body = split_trailing_punct(t).0;
                if !body.is_empty() && !stop_list.contains(body) && p.gloss.iter().any(|g| g == body) {
                    words.push(body.to_string());
                }
            }
        }
        Self::new(words)
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }
}

impl FillMaskBackend for VocabularyFillMask {
    fn candidates(&self, text_with_mask: &str, k: usize) -> Result<Vec<(String, f64)>, BackendError> {
        let mut scored: Vec<(String, f64)> = self
            .vocabulary
            .iter()
            .map(|w| {
                let mut h = FnvHasher::default();
                h.write(text_with_mask.as_bytes());
                h.write_u8(0);
                h.write(w.as_bytes());
                (w.clone(), (h.finish() >> 11) as f64 / (1u64 << 53) as f64)
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k);
        Ok(scored)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> SentenceGlossPair {
        SentenceGlossPair::manual("p1", "আমি আজ বই পড়ি।", &["আমি", "আজ", "বই", "পড়"])
    }

    fn stop() -> StopList {
        StopList::new(["আমি", "আজ"])
    }

    #[test]
    fn template_records_aligned_position() {
        let t = make_template(&pair(), 2, &stop()).unwrap();
        assert_eq!(t.gloss_mask_positions, [2]);
        assert_eq!(t.original_token, "বই");
        assert_eq!(t.masked_text(), "আমি আজ [MASK] পড়ি।");
        assert_eq!(t.sentence_tokens.iter().filter(|s| s.contains(MASK)).count(), 1);
    }

    #[test]
    fn token_at_gloss_position_zero() {
        let p = SentenceGlossPair::manual("p", "কাল আমি বই পড়ব।", &["বই", "কাল", "আমি", "পড়", "হবে"]);
        let t = make_template(&p, 2, &StopList::default()).unwrap();
        assert_eq!(t.gloss_mask_positions, [0]);
    }

    #[test]
    fn repeated_gloss_token_records_every_position() {
        let p = SentenceGlossPair::manual("p", "বই আর বই", &["বই", "বই"]);
        let t = make_template(&p, 0, &StopList::default()).unwrap();
        assert_eq!(t.gloss_mask_positions, [0, 1]);
    }

    #[test]
    fn template_errors() {
        let p = pair();
        assert!(matches!(make_template(&p, 3, &stop()), Err(MaskError::NotAlignable { .. })));
        assert!(matches!(make_template(&p, 0, &stop()), Err(MaskError::NotMaskable { .. })));
        assert!(matches!(make_template(&p, 9, &stop()), Err(MaskError::OutOfRange { .. })));
    }

    #[test]
    fn substitution_rewrites_both_sides() {
        let t = make_template(&pair(), 2, &stop()).unwrap();
        let q = substitute(&t, "খাতা").unwrap();
        assert_eq!(q.sentence, "আমি আজ খাতা পড়ি।");
        assert_eq!(q.gloss, ["আমি", "আজ", "খাতা", "পড়"]);
        assert_eq!(q.provenance, Provenance::MaskSubst);
        assert_eq!(q.source_pair_id.as_deref(), Some("p1"));
        q.validate().unwrap();
        assert!(matches!(substitute(&t, "বই"), Err(MaskError::Degenerate { .. })));
        assert!(matches!(substitute(&t, "দুই শব্দ"), Err(MaskError::InvalidCandidate { .. })));
        assert!(matches!(substitute(&t, ""), Err(MaskError::InvalidCandidate { .. })));
    }

    #[test]
    fn punctuation_stays_after_substituted_token() {
        let p = SentenceGlossPair::manual("p", "আমি বই।", &["আমি", "বই"]);
        let t = make_template(&p, 1, &StopList::default()).unwrap();
        assert_eq!(t.original_token, "বই");
        assert_eq!(substitute(&t, "খাতা").unwrap().sentence, "আমি খাতা।");
    }

    #[test]
    fn two_candidates_differ_only_at_masked_positions() {
        let t = make_template(&pair(), 2, &stop()).unwrap();
        let a = substitute(&t, "খাতা").unwrap();
        let b = substitute(&t, "চিঠি").unwrap();
        assert_ne!(a.id, b.id);
        let sa: Vec<_> = a.sentence.split_whitespace().collect();
        let sb: Vec<_> = b.sentence.split_whitespace().collect();
        let diff: Vec<usize> = (0..sa.len()).filter(|&i| sa[i] != sb[i]).collect();
        assert_eq!(diff, [t.mask_index]);
        let gdiff: Vec<usize> = (0..a.gloss.len()).filter(|&i| a.gloss[i] != b.gloss[i]).collect();
        assert_eq!(gdiff, t.gloss_mask_positions);
    }

    #[test]
    fn positions_rank_longer_tokens_first() {
        assert_eq!(candidate_positions("ab abcd x abcd।"), [1, 3, 0, 2]);
    }

    #[test]
    fn backend_echoing_original_yields_nothing() {
        let p = pair();
        let mut fm = TableFillMask::new();
        fm.insert("আমি আজ [MASK] পড়ি।", &[("বই", 0.9)]);
        let (out, report) = batch_mask_augment(
            &Corpus::new(vec![p]),
            &fm,
            &MaskConfig { retry: RetryPolicy::immediate(), ..Default::default() },
            &stop(),
        )
        .unwrap();
        assert!(out.is_empty());
        assert_eq!(report.candidates_rejected, 1);
    }

    #[test]
    fn variants_matching_existing_sentences_are_dropped() {
        let a = pair();
        let b = SentenceGlossPair::manual("p2", "আমি আজ খাতা পড়ি।", &["আমি", "আজ", "খাতা", "পড়"]);
        let mut fm = TableFillMask::new();
        fm.insert("আমি আজ [MASK] পড়ি।", &[("খাতা", 0.9), ("চিঠি", 0.5)]);
        let cfg = MaskConfig { retry: RetryPolicy::immediate(), ..Default::default() };
        let (out, report) =
            batch_mask_augment(&Corpus::new(vec![a, b]), &fm, &cfg, &stop()).unwrap();
        let sentences: Vec<_> = out.pairs.iter().map(|p| p.sentence.as_str()).collect();
        assert_eq!(sentences, ["আমি আজ চিঠি পড়ি।"]);
        // p1 -> খাতা collides with p2; p2 -> চিঠি collides with p1's variant.
        assert_eq!(report.duplicates_dropped, 2);
    }

    #[test]
    fn backend_failure_is_reported_per_pair() {
        struct Down;
        impl FillMaskBackend for Down {
            fn candidates(&self, _: &str, _: usize) -> Result<Vec<(String, f64)>, BackendError> {
                Err(BackendError::Failed { backend: "down".into(), message: "offline".into() })
            }
        }
        let cfg = MaskConfig { retry: RetryPolicy::immediate(), ..Default::default() };
        let (out, report) = batch_mask_augment(&Corpus::new(vec![pair()]), &Down, &cfg, &stop()).unwrap();
        assert!(out.is_empty());
        assert_eq!(report.backend_failures.len(), 1);
    }

    #[test]
    fn zero_k_is_rejected() {
        let cfg = MaskConfig { per_pair_k: 0, ..Default::default() };
        assert!(matches!(
            batch_mask_augment(&Corpus::default(), &TableFillMask::new(), &cfg, &stop()),
            Err(MaskError::BadK)
        ));
    }

    #[test]
    fn stop_list_file_format() {
        let s = StopList::parse("# function words\nআমি\n\n  এবং \n");
        assert_eq!(s.len(), 2);
        assert!(s.contains("এবং"));
    }
}
