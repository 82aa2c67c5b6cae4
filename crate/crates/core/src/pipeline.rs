//! End-to-end augmentation run: split, the three augmentation branches,
//! merge, and a manifest describing what was produced.
//!
//! Augmentation draws only on the training partition, and every augmented
//! pair is assigned to train. The dev and test files written after the split
//! are re-derived from the merged corpus at the end and must be identical.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::hash::Hasher;
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    dedupe, encode_corpus, split_corpus, write_corpus, write_split_map, Corpus, CorpusError, CorpusFormat,
    Provenance, SentenceGlossPair, Split, SplitRatios,
};
use crate::masking::{batch_mask_augment, FillMaskBackend, MaskConfig, MaskError, StopList};
use crate::prompt::{batch_augment, ExampleBank, GenerationParams, LlmBackend, PromptError, PromptTemplates, RagConfig, RagGenerator};
use crate::retrieval::{build_index, save_index, BuildOptions, EmbedderBackend, RetrievalError};
use crate::rules::{expand_pair, RuleError, RuleSet};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Rules(#[from] RuleError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("input pair {id} has provenance {provenance}; the pipeline starts from manual pairs")]
    NotManual { id: String, provenance: String },
    #[error("{0} changed during the run")]
    HeldOutChanged(String),
}

/// Augmented-pair targets as multiples of the manual pair count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quotas {
    pub rule_ratio: f64,
    pub mask_ratio: f64,
    pub rag_ratio: f64,
}

impl Default for Quotas {
    fn default() -> Self {
        Quotas {
            rule_ratio: 0.5,
            mask_ratio: 0.5,
            rag_ratio: 2.0,
        }
    }
}

impl Quotas {
    fn target(ratio: f64, manual: usize) -> usize {
        (ratio * manual as f64).round() as usize
    }
}

#[derive(Debug, Clone)]
pub struct PipelineSettings {
    pub split: SplitRatios,
    pub quotas: Quotas,
    pub mask: MaskConfig,
    pub rag: RagConfig,
    pub params: GenerationParams,
    pub build: BuildOptions,
    pub concurrency: usize,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings {
            split: SplitRatios::default(),
            quotas: Quotas::default(),
            mask: MaskConfig::default(),
            rag: RagConfig::default(),
            params: GenerationParams::default(),
            build: BuildOptions::default(),
            concurrency: 4,
        }
    }
}

/// The external models a run talks to.
pub struct Backends<'a> {
    pub embedder: &'a dyn EmbedderBackend,
    pub llm: &'a dyn LlmBackend,
    pub fill_mask: &'a dyn FillMaskBackend,
}

pub struct PipelineInputs<'a> {
    pub manual: Corpus,
    /// External sentences for retrieval-augmented generation.
    pub sources: Vec<String>,
    pub rules: &'a RuleSet,
    pub stop_list: &'a StopList,
    pub templates: &'a PromptTemplates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOutCheck {
    pub file: String,
    pub pairs: usize,
    pub hash_before: String,
    pub hash_after: String,
    pub unchanged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSummary {
    pub target: usize,
    pub produced: usize,
    pub kept: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manual_pairs: usize,
    pub manual_duplicates_removed: usize,
    pub split_sizes: BTreeMap<String, usize>,
    pub provenance_counts: BTreeMap<String, usize>,
    pub augmented_pairs: usize,
    pub total_pairs: usize,
    /// Augmented pairs per manual pair.
    pub augmented_per_manual: f64,
    pub branches: BTreeMap<String, BranchSummary>,
    pub held_out: Vec<HeldOutCheck>,
    pub seed: u64,
    pub model_id: String,
    pub embedder: String,
}

fn fnv_hex(bytes: &[u8]) -> String {
    let mut h = FnvHasher::default();
    h.write(bytes);
    format!("{:016x}", h.finish())
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Keeps augmented pairs whose sentence is new and whose id is unused.
struct Admission {
    sentences: HashSet<String>,
    ids: HashSet<String>,
}

impl Admission {
    fn admit(&mut self, p: &SentenceGlossPair) -> bool {
        if self.sentences.contains(&p.sentence) || self.ids.contains(&p.id) {
            return false;
        }
        self.sentences.insert(p.sentence.clone());
        self.ids.insert(p.id.clone());
        true
    }

    /// Take up to `quota` admissible pairs, visiting groups round-robin so
    /// the quota spreads across sources instead of exhausting the first ones.
    fn take_round_robin(&mut self, groups: Vec<Vec<SentenceGlossPair>>, quota: usize) -> Vec<SentenceGlossPair> {
        let mut iters: Vec<_> = groups.into_iter().map(Vec::into_iter).collect();
        let mut out = Vec::new();
        loop {
            let mut progressed = false;
            for it in iters.iter_mut() {
                if out.len() == quota {
                    return out;
                }
                if let Some(p) = it.next() {
                    progressed = true;
                    if self.admit(&p) {
                        out.push(p);
                    }
                }
            }
            if !progressed {
                return out;
            }
        }
    }
}

fn group_by_source(pairs: Vec<SentenceGlossPair>) -> Vec<Vec<SentenceGlossPair>> {
    let mut groups: Vec<Vec<SentenceGlossPair>> = Vec::new();
    for p in pairs {
        match groups.last_mut() {
            Some(g) if g[0].source_pair_id == p.source_pair_id => g.push(p),
            _ => groups.push(vec![p]),
        }
    }
    groups
}

/// Run every stage and write the results under `out_dir`:
/// `train.jsonl`, `dev.jsonl`, `test.jsonl`, `split.tsv`, `index.gfi`,
/// `rag_journal.jsonl`, `merged.jsonl`, `merged_split.tsv` and `manifest.json`.
pub fn run_pipeline(
    inputs: PipelineInputs<'_>,
    backends: &Backends<'_>,
    settings: &PipelineSettings,
    out_dir: &Path,
) -> Result<Manifest, PipelineError> {
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    if let Some(p) = inputs.manual.pairs.iter().find(|p| p.provenance != Provenance::Manual) {
        return Err(PipelineError::NotManual {
            id: p.id.clone(),
            provenance: p.provenance.as_str().to_string(),
        });
    }
    let (manual, removed) = dedupe(&inputs.manual);
    manual.validate_provenance()?;
    let manual = match manual.split {
        Some(_) => manual,
        None => split_corpus(&manual, &settings.split, false)?,
    };
    let train = manual.partition(Split::Train);

    let mut held_out = Vec::new();
    for (split, name) in [(Split::Dev, "dev.jsonl"), (Split::Test, "test.jsonl")] {
        let part = manual.partition(split);
        let path = out_dir.join(name);
        write_corpus(&part, &path, CorpusFormat::Jsonl)?;
        let bytes = fs::read(&path).map_err(io(&path))?;
        held_out.push(HeldOutCheck {
            file: name.to_string(),
            pairs: part.len(),
            hash_before: fnv_hex(&bytes),
            hash_after: String::new(),
            unchanged: false,
        });
    }
    write_corpus(&train, &out_dir.join("train.jsonl"), CorpusFormat::Jsonl)?;
    write_split_map(&manual, &out_dir.join("split.tsv"))?;

    let n = manual.len();
    let mut admission = Admission {
        sentences: manual.pairs.iter().map(|p| p.sentence.clone()).collect(),
        ids: manual.pairs.iter().map(|p| p.id.clone()).collect(),
    };
    let mut branches = BTreeMap::new();

    // Rule-based tense rewriting.
    let rule_target = Quotas::target(settings.quotas.rule_ratio, n);
    let mut rule_groups = Vec::new();
    let mut rule_failures = 0;
    for p in &train.pairs {
        match expand_pair(p, inputs.rules) {
            Ok(v) => {
                tracing::info!(id = %p.id, action = "rules", outcome = "ok", variants = v.len());
                rule_groups.push(v);
            }
            Err(RuleError::UnknownTense { .. }) => {
                tracing::info!(id = %p.id, action = "rules", outcome = "unknown_tense");
            }
            Err(e) => {
                tracing::warn!(id = %p.id, action = "rules", outcome = "error", error = %e);
                rule_failures += 1;
            }
        }
    }
    let rule_produced = rule_groups.iter().map(Vec::len).sum();
    let rule_pairs = admission.take_round_robin(rule_groups, rule_target);
    branches.insert(
        "rule_tense".to_string(),
        BranchSummary {
            target: rule_target,
            produced: rule_produced,
            kept: rule_pairs.len(),
            failures: rule_failures,
        },
    );

    // Masked-token substitution.
    let mask_target = Quotas::target(settings.quotas.mask_ratio, n);
    let mask_cfg = MaskConfig {
        concurrency: settings.concurrency,
        ..settings.mask
    };
    let (masked, mask_report) = batch_mask_augment(&train, backends.fill_mask, &mask_cfg, inputs.stop_list)?;
    let mask_produced = masked.len();
    let mask_pairs = admission.take_round_robin(group_by_source(masked.pairs), mask_target);
    branches.insert(
        "mask_subst".to_string(),
        BranchSummary {
            target: mask_target,
            produced: mask_produced,
            kept: mask_pairs.len(),
            failures: mask_report.backend_failures.len(),
        },
    );

    // Retrieval-augmented generation over external sentences.
    let rag_target = Quotas::target(settings.quotas.rag_ratio, n);
    let build = BuildOptions {
        concurrency: settings.concurrency,
        ..settings.build
    };
    let index = build_index(&train.pairs, backends.embedder, &build)?;
    save_index(&index, &out_dir.join("index.gfi"))?;
    let bank = ExampleBank::new(&train.pairs);
    let generator = RagGenerator {
        index: &index,
        embedder: backends.embedder,
        examples: &bank,
        rules: inputs.rules,
        templates: inputs.templates,
        llm: backends.llm,
        params: settings.params.clone(),
        config: settings.rag,
    };
    let sources: Vec<String> = inputs.sources.iter().take(rag_target).cloned().collect();
    let outcome = batch_augment(
        &generator,
        &sources,
        settings.concurrency,
        Some(&out_dir.join("rag_journal.jsonl")),
    )?;
    let rag_produced = outcome.corpus.len();
    let rag_pairs = admission.take_round_robin(vec![outcome.corpus.pairs], rag_target);
    branches.insert(
        "rag".to_string(),
        BranchSummary {
            target: rag_target,
            produced: rag_produced,
            kept: rag_pairs.len(),
            failures: outcome.failures.len(),
        },
    );

    // Merge: manual pairs keep their split, augmented pairs go to train.
    let mut split_map = manual.split.clone().expect("manual corpus is split");
    let mut pairs = manual.pairs.clone();
    for p in rule_pairs.into_iter().chain(mask_pairs).chain(rag_pairs) {
        split_map.insert(p.id.clone(), Split::Train);
        pairs.push(p);
    }
    let merged = Corpus {
        pairs,
        split: Some(split_map),
    };
    merged.validate_provenance()?;
    write_corpus(&merged, &out_dir.join("merged.jsonl"), CorpusFormat::Jsonl)?;
    write_split_map(&merged, &out_dir.join("merged_split.tsv"))?;

    for (check, split) in held_out.iter_mut().zip([Split::Dev, Split::Test]) {
        let path = out_dir.join(&check.file);
        let on_disk = fs::read(&path).map_err(io(&path))?;
        let rederived = encode_corpus(&merged.partition(split), CorpusFormat::Jsonl)?;
        check.hash_after = fnv_hex(rederived.as_bytes());
        check.unchanged = on_disk == rederived.as_bytes() && check.hash_after == check.hash_before;
        if !check.unchanged {
            return Err(PipelineError::HeldOutChanged(check.file.clone()));
        }
    }

    let counts = merged.provenance_counts();
    let manual_count = counts.get(&Provenance::Manual).copied().unwrap_or(0);
    let augmented = merged.len() - manual_count;
    let split_sizes = [Split::Train, Split::Dev, Split::Test]
        .into_iter()
        .map(|s| (s.as_str().to_string(), merged.partition(s).len()))
        .collect();
    let manifest = Manifest {
        manual_pairs: manual_count,
        manual_duplicates_removed: removed,
        split_sizes,
        provenance_counts: counts.iter().map(|(k, v)| (k.as_str().to_string(), *v)).collect(),
        augmented_pairs: augmented,
        total_pairs: merged.len(),
        augmented_per_manual: if manual_count == 0 { 0.0 } else { augmented as f64 / manual_count as f64 },
        branches,
        held_out,
        seed: settings.split.seed,
        model_id: settings.params.model_id.clone(),
        embedder: backends.embedder.name().to_string(),
    };
    let path = out_dir.join("manifest.json");
    let mut body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    body.push('\n');
    fs::write(&path, body).map_err(io(&path))?;
    Ok(manifest)
}
