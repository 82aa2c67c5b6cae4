//! Two-stage prompting for gloss generation.
//!
//! Stage one asks the model for the sentence's tense. Stage two asks for the
//! gloss, grounded either in retrieved example pairs (few-shot) or, when
//! retrieval finds too few matches, in the tense rules relevant to the
//! detected tense (rule fallback).

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, RetryPolicy};
use crate::corpus::{nfc, split_trailing_punct, Corpus, Provenance, SentenceGlossPair, Tense};
use crate::pool::for_each_bounded;
use crate::retrieval::{
    query_index_excluding_self, EmbedderBackend, EmbeddingIndex, RetrievalConfig, RetrievalError,
    RetrievalResult,
};
use crate::rules::{detect_tense, RuleSet};

/// A chat-completion model.
pub trait LlmBackend: Send + Sync {
    fn complete(
        &self,
        system: &str,
        user: &str,
        params: &GenerationParams,
    ) -> Result<String, BackendError>;
}

impl<F> LlmBackend for F
where
    F: Fn(&str, &str, &GenerationParams) -> Result<String, BackendError> + Send + Sync,
{
    fn complete(
        &self,
        system: &str,
        user: &str,
        params: &GenerationParams,
    ) -> Result<String, BackendError> {
        self(system, user, params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub timeout_secs: u64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            model_id: "gpt-4.1-nano".into(),
            temperature: 0.0,
            max_output_tokens: 256,
            timeout_secs: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    TenseId,
    GlossGen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    FewShot,
    RuleFallback,
}

impl PromptMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptMode::FewShot => "few_shot",
            PromptMode::RuleFallback => "rule_fallback",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub stage: Stage,
    /// `None` for the tense stage.
    pub mode: Option<PromptMode>,
    pub system: String,
    pub user: String,
    pub included_example_ids: Vec<String>,
    pub included_rule_ids: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("template {name}: {reason}")]
    Template { name: String, reason: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("model returned no gloss tokens for {id:?}")]
    EmptyGeneration { id: String },
}

const PLACEHOLDERS: [&str; 4] = ["sentence", "examples", "rules", "tense"];

/// Prompt texts with `{{sentence}}`, `{{examples}}`, `{{rules}}` and
/// `{{tense}}` placeholders.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplates {
    pub tense_system: String,
    pub tense_user: String,
    pub gloss_system: String,
    pub gloss_few_shot: String,
    pub gloss_fallback: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            tense_system: include_str!("../templates/tense_system.txt").into(),
            tense_user: include_str!("../templates/tense_user.txt").into(),
            gloss_system: include_str!("../templates/gloss_system.txt").into(),
            gloss_few_shot: include_str!("../templates/gloss_few_shot.txt").into(),
            gloss_fallback: include_str!("../templates/gloss_fallback.txt").into(),
        }
    }
}

impl PromptTemplates {
    /// Load templates from `dir`. Files that are absent keep the built-in text.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut t = PromptTemplates::default();
        for (name, slot) in [
            ("tense_system.txt", &mut t.tense_system),
            ("tense_user.txt", &mut t.tense_user),
            ("gloss_system.txt", &mut t.gloss_system),
            ("gloss_few_shot.txt", &mut t.gloss_few_shot),
            ("gloss_fallback.txt", &mut t.gloss_fallback),
        ] {
            let path = dir.join(name);
            if path.exists() {
                *slot = fs::read_to_string(&path).map_err(|source| PromptError::Io { path, source })?;
            }
        }
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let checks: [(&str, &str, &[&str]); 5] = [
            ("tense_system", &self.tense_system, &[]),
            ("tense_user", &self.tense_user, &["sentence"]),
            ("gloss_system", &self.gloss_system, &[]),
            ("gloss_few_shot", &self.gloss_few_shot, &["sentence", "examples"]),
            ("gloss_fallback", &self.gloss_fallback, &["sentence", "rules"]),
        ];
        for (name, text, required) in checks {
            let err = |reason: String| PromptError::Template {
                name: name.to_string(),
                reason,
            };
            for found in placeholders_in(text) {
                if !PLACEHOLDERS.contains(&found.as_str()) {
                    return Err(err(format!("unknown placeholder {{{{{found}}}}}")));
                }
            }
            for req in required {
                let n = text.matches(&format!("{{{{{req}}}}}")).count();
                if n != 1 {
                    return Err(err(format!("{{{{{req}}}}} must appear exactly once, found {n}")));
                }
            }
        }
        Ok(())
    }
}

fn placeholders_in(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                out.push(after[..end].to_string());
                rest = &after[end + 2..];
            }
            None => break,
        }
    }
    out
}

/// Substitute placeholders in one pass; substituted values are not rescanned.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let Some(end) = after.find("}}") else {
            out.push_str(&rest[start..]);
            return out;
        };
        let name = &after[..end];
        match vars.iter().find(|(k, _)| *k == name) {
            Some((_, v)) => out.push_str(v),
            None => out.push_str(&rest[start..start + 2 + end + 2]),
        }
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    out
}

/// Stage one: ask for the sentence's tense.
pub fn build_tense_prompt(templates: &PromptTemplates, sentence: &str) -> PromptBundle {
    let sentence = nfc(sentence);
    PromptBundle {
        stage: Stage::TenseId,
        mode: None,
        system: templates.tense_system.clone(),
        user: render(&templates.tense_user, &[("sentence", &sentence)]),
        included_example_ids: Vec::new(),
        included_rule_ids: Vec::new(),
    }
}

/// First tense keyword in the response, case-insensitively; `Unknown` if none.
pub fn parse_tense_response(text: &str) -> Tense {
    let lowered = text.to_lowercase();
    let words: Vec<&str> = lowered
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect();
    for (i, w) in words.iter().enumerate() {
        let continuous = words.get(i + 1) == Some(&"continuous");
        let tense = match *w {
            "present" if continuous => Tense::PresentContinuous,
            "past" if continuous => Tense::PastContinuous,
            "present" => Tense::Present,
            "past" => Tense::Past,
            "future" => Tense::Future,
            _ => continue,
        };
        return tense;
    }
    Tense::Unknown
}

/// Gloss tokens from a stage-two response: the last non-empty line, with an
/// optional `Gloss:` label removed, split on whitespace.
pub fn parse_gloss_response(text: &str) -> Vec<String> {
    let Some(line) = text.lines().rev().map(str::trim).find(|l| !l.is_empty()) else {
        return Vec::new();
    };
    let line = match line.get(..6) {
        Some(label) if label.eq_ignore_ascii_case("gloss:") => &line[6..],
        _ => line,
    };
    nfc(line).split_whitespace().map(str::to_string).collect()
}

/// Training pairs addressable by id, used to render few-shot examples.
#[derive(Debug, Clone, Default)]
pub struct ExampleBank {
    pairs: HashMap<String, SentenceGlossPair>,
}

impl ExampleBank {
    pub fn new(pairs: &[SentenceGlossPair]) -> Self {
        ExampleBank {
            pairs: pairs.iter().map(|p| (p.id.clone(), p.clone())).collect(),
        }
    }

    pub fn get(&self, id: &str) -> Option<&SentenceGlossPair> {
        self.pairs.get(id)
    }
}

/// Stage two: few-shot prompt from the retrieved examples, or the rule
/// fallback when retrieval flagged too few matches.
pub fn build_gloss_prompt(
    templates: &PromptTemplates,
    sentence: &str,
    retrieved: &RetrievalResult,
    bank: &ExampleBank,
    rules: &RuleSet,
    tense: Tense,
) -> PromptBundle {
    let sentence = nfc(sentence);
    if !retrieved.fallback_needed {
        let mut ids = Vec::new();
        let mut lines = Vec::new();
        for m in &retrieved.matches {
            let Some(p) = bank.get(&m.pair_id) else {
                tracing::warn!(pair_id = %m.pair_id, "retrieved id missing from example bank");
                continue;
            };
            if p.sentence == sentence {
                continue;
            }
            ids.push(p.id.clone());
            lines.push(format!("{} => {}", p.sentence, p.gloss_text()));
        }
        let examples = lines.join("\n");
        return PromptBundle {
            stage: Stage::GlossGen,
            mode: Some(PromptMode::FewShot),
            system: templates.gloss_system.clone(),
            user: render(
                &templates.gloss_few_shot,
                &[
                    ("examples", &examples),
                    ("tense", tense.as_str()),
                    ("sentence", &sentence),
                ],
            ),
            included_example_ids: ids,
            included_rule_ids: Vec::new(),
        };
    }
    let selected = rules.rules_for_tense(tense);
    let text = selected
        .iter()
        .map(|r| r.describe())
        .collect::<Vec<_>>()
        .join("\n");
    PromptBundle {
        stage: Stage::GlossGen,
        mode: Some(PromptMode::RuleFallback),
        system: templates.gloss_system.clone(),
        user: render(
            &templates.gloss_fallback,
            &[("rules", &text), ("tense", tense.as_str()), ("sentence", &sentence)],
        ),
        included_example_ids: Vec::new(),
        included_rule_ids: selected.iter().map(|r| r.rule_id.clone()).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RagConfig {
    pub retrieval: RetrievalConfig,
    pub retry: RetryPolicy,
}

impl Default for RagConfig {
    fn default() -> Self {
        RagConfig {
            retrieval: RetrievalConfig::default(),
            retry: RetryPolicy::default(),
        }
    }
}

/// Everything one generation needs.
pub struct RagGenerator<'a> {
    pub index: &'a EmbeddingIndex,
    pub embedder: &'a dyn EmbedderBackend,
    pub examples: &'a ExampleBank,
    pub rules: &'a RuleSet,
    pub templates: &'a PromptTemplates,
    pub llm: &'a dyn LlmBackend,
    pub params: GenerationParams,
    pub config: RagConfig,
}

/// A generated pair plus the intermediate artefacts that produced it.
#[derive(Debug, Clone)]
pub struct Generation {
    pub pair: SentenceGlossPair,
    pub tense_prompt: PromptBundle,
    pub gloss_prompt: PromptBundle,
    pub retrieval: RetrievalResult,
}

impl RagGenerator<'_> {
    fn complete(&self, bundle: &PromptBundle) -> Result<String, BackendError> {
        self.config.retry.run("llm", |_| {
            self.llm.complete(&bundle.system, &bundle.user, &self.params)
        })
    }

    /// Run both stages for one sentence.
    pub fn generate_gloss(&self, id: &str, sentence: &str) -> Result<Generation, PromptError> {
        let sentence = nfc(sentence);
        let tense_prompt = build_tense_prompt(self.templates, &sentence);
        let tense = parse_tense_response(&self.complete(&tense_prompt)?);

        let retrieval = self.config.retry.run("embedder", |_| {
            match query_index_excluding_self(
                self.index,
                &sentence,
                &self.config.retrieval,
                self.embedder,
            ) {
                Ok(r) => Ok(Ok(r)),
                Err(RetrievalError::Backend(e)) => Err(e),
                Err(other) => Ok(Err(other)),
            }
        })??;

        let gloss_prompt = build_gloss_prompt(
            self.templates,
            &sentence,
            &retrieval,
            self.examples,
            self.rules,
            tense,
        );
        let gloss = parse_gloss_response(&self.complete(&gloss_prompt)?);
        if gloss.is_empty() {
            return Err(PromptError::EmptyGeneration { id: id.to_string() });
        }
        let mode = gloss_prompt.mode.expect("stage two always has a mode");
        let mut meta = BTreeMap::new();
        meta.insert("mode".into(), mode.as_str().into());
        meta.insert("match_count".into(), retrieval.matches.len().to_string());
        meta.insert("model_id".into(), self.params.model_id.clone());
        Ok(Generation {
            pair: SentenceGlossPair {
                id: id.to_string(),
                sentence,
                gloss,
                provenance: Provenance::Rag,
                tense: Some(tense),
                source_pair_id: None,
                meta,
            },
            tense_prompt,
            gloss_prompt,
            retrieval,
        })
    }
}

/// Id given to the generated pair for the source sentence at `position`.
pub fn rag_pair_id(position: usize) -> String {
    format!("rag-{:06}", position + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchFailure {
    pub position: usize,
    pub id: String,
    pub sentence: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct BatchOutcome {
    /// Generated pairs in source order.
    pub corpus: Corpus,
    pub failures: Vec<BatchFailure>,
    /// Items restored from the journal instead of being generated again.
    pub resumed: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
enum JournalEntry {
    Ok {
        position: usize,
        sentence: String,
        pair: SentenceGlossPair,
    },
    Error {
        position: usize,
        id: String,
        sentence: String,
        reason: String,
    },
}

fn read_journal(path: &Path) -> Result<HashMap<usize, (String, SentenceGlossPair)>, PromptError> {
    let mut done = HashMap::new();
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(done),
        Err(source) => {
            return Err(PromptError::Io {
                path: path.to_path_buf(),
                source,
            })
        }
    };
    for line in text.lines() {
        // A torn final line from an interrupted run is simply skipped.
        match serde_json::from_str::<JournalEntry>(line) {
            Ok(JournalEntry::Ok {
                position,
                sentence,
                pair,
            }) => {
                done.insert(position, (sentence, pair));
            }
            Ok(JournalEntry::Error { position, .. }) => {
                done.remove(&position);
            }
            Err(_) => {}
        }
    }
    Ok(done)
}

/// Generate glosses for every source sentence on a bounded worker pool.
///
/// With a journal path, each finished item is appended to the journal as it
/// completes and a later run skips items already recorded as successful.
pub fn batch_augment(
    generator: &RagGenerator<'_>,
    sources: &[String],
    concurrency: usize,
    journal: Option<&Path>,
) -> Result<BatchOutcome, PromptError> {
    let sources: Vec<String> = sources.iter().map(|s| nfc(s)).collect();
    let mut results: Vec<Option<Result<SentenceGlossPair, String>>> = vec![None; sources.len()];
    let mut resumed = 0;

    let mut writer = match journal {
        Some(path) => {
            for (position, (sentence, pair)) in read_journal(path)? {
                if sources.get(position) == Some(&sentence) && pair.id == rag_pair_id(position) {
                    results[position] = Some(Ok(pair));
                    resumed += 1;
                }
            }
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|source| PromptError::Io {
                    path: path.to_path_buf(),
                    source,
                })?;
            Some((path, file))
        }
        None => None,
    };

    let pending: Vec<usize> = (0..sources.len()).filter(|&i| results[i].is_none()).collect();
    let mut io_error = None;
    for_each_bounded(
        &pending,
        concurrency,
        |_, &position| {
            generator
                .generate_gloss(&rag_pair_id(position), &sources[position])
                .map(|g| g.pair)
                .map_err(|e| e.to_string())
        },
        |slot, result| {
            let position = pending[slot];
            let id = rag_pair_id(position);
            let entry = match &result {
                Ok(pair) => {
                    tracing::info!(id = %id, action = "rag", outcome = "ok", mode = %pair.meta["mode"]);
                    JournalEntry::Ok {
                        position,
                        sentence: sources[position].clone(),
                        pair: pair.clone(),
                    }
                }
                Err(reason) => {
                    tracing::warn!(id = %id, action = "rag", outcome = "error", %reason);
                    JournalEntry::Error {
                        position,
                        id: id.clone(),
                        sentence: sources[position].clone(),
                        reason: reason.clone(),
                    }
                }
            };
            if let Some((path, file)) = writer.as_mut() {
                let mut line = serde_json::to_string(&entry).expect("journal entry serializes");
                line.push('\n');
                if let Err(source) = file.write_all(line.as_bytes()) {
                    io_error.get_or_insert(PromptError::Io {
                        path: path.to_path_buf(),
                        source,
                    });
                }
            }
            results[position] = Some(result);
        },
    );
    if let Some(e) = io_error {
        return Err(e);
    }

    let mut outcome = BatchOutcome {
        resumed,
        ..Default::default()
    };
    for (position, result) in results.into_iter().enumerate() {
        match result.expect("every position was processed") {
            Ok(pair) => outcome.corpus.pairs.push(pair),
            Err(reason) => outcome.failures.push(BatchFailure {
                position,
                id: rag_pair_id(position),
                sentence: sources[position].clone(),
                reason,
            }),
        }
    }
    Ok(outcome)
}

/// Offline stand-in for a chat model, written against the built-in templates.
///
/// Stage one answers with the rule-detected tense of the `Sentence:` line.
/// Stage two echoes the gloss of the first few-shot example, or, when the
/// prompt carries rules instead, the punctuation-stripped sentence tokens.
#[derive(Debug, Clone)]
pub struct MockLlm {
    rules: RuleSet,
}

impl MockLlm {
    pub fn new(rules: RuleSet) -> Self {
        MockLlm { rules }
    }
}

impl LlmBackend for MockLlm {
    fn complete(&self, _system: &str, user: &str, _: &GenerationParams) -> Result<String, BackendError> {
        let sentence = user
            .lines()
            .rev()
            .find_map(|l| l.strip_prefix("Sentence: "))
            .unwrap_or_default();
        let is_gloss_stage = user.lines().rev().find(|l| !l.trim().is_empty()) == Some("Gloss:");
        if !is_gloss_stage {
            return Ok(detect_tense(sentence, &self.rules).as_str().to_string());
        }
        let example = user
            .lines()
            .filter(|l| !l.trim_end().ends_with(':'))
            .find_map(|l| l.split_once(" => ").map(|(_, g)| g));
        if let Some(gloss) = example {
            return Ok(gloss.to_string());
        }
        Ok(sentence
            .split_whitespace()
            .map(|t| split_trailing_punct(t).0)
            .filter(|t| !t.is_empty())
            .collect::<Vec<_>>()
            .join(" "))
    }
}
