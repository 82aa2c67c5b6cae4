use std::fs;
use std::path::{Path, PathBuf};

use glossforge::corpus::{load_corpus, CorpusFormat};
use glossforge::masking::{StopList, VocabularyFillMask};
use glossforge::pipeline::{run_pipeline, Backends, Manifest, PipelineInputs, PipelineSettings};
use glossforge::prompt::{MockLlm, PromptTemplates};
use glossforge::retrieval::HashEmbedder;
use glossforge::rules::load_rules;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn run(corpus: &str, sources: &str, out: &Path, concurrency: usize) -> Manifest {
    let manual = load_corpus(&fixture(corpus), CorpusFormat::Jsonl).unwrap();
    let sources: Vec<String> = fs::read_to_string(fixture(sources))
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect();
    let rules = load_rules(&fixture("tense.rules")).unwrap();
    let stop = StopList::load(&fixture("stoplist.txt")).unwrap();
    let templates = PromptTemplates::default();
    let embedder = HashEmbedder::default();
    let llm = MockLlm::new(rules.clone());
    let fill = VocabularyFillMask::from_corpus(&manual, &stop);
    let backends = Backends {
        embedder: &embedder,
        llm: &llm,
        fill_mask: &fill,
    };
    let mut settings = PipelineSettings {
        concurrency,
        ..Default::default()
    };
    settings.rag.retry = glossforge::backend::RetryPolicy::immediate();
    settings.mask.retry = glossforge::backend::RetryPolicy::immediate();
    let inputs = PipelineInputs {
        manual,
        sources,
        rules: &rules,
        stop_list: &stop,
        templates: &templates,
    };
    run_pipeline(inputs, &backends, &settings, out).unwrap()
}

#[test]
fn hundred_pair_run_reaches_one_to_three() {
    let dir = tempfile::tempdir().unwrap();
    let m = run("corpus_100.jsonl", "sources_200.txt", dir.path(), 4);
    assert_eq!(m.manual_pairs, 100);
    assert!((m.augmented_per_manual - 3.0).abs() <= 0.3, "{m:#?}");
    assert!(m.held_out.iter().all(|h| h.unchanged));
    for name in ["merged.jsonl", "manifest.json", "index.gfi", "dev.jsonl", "test.jsonl"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn reruns_and_pool_width_do_not_change_output() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = run("corpus_100.jsonl", "sources_200.txt", a.path(), 1);
    let mb = run("corpus_100.jsonl", "sources_200.txt", b.path(), 4);
    assert_eq!(ma, mb);
    let read = |d: &Path| fs::read(d.join("merged.jsonl")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    // Second run in the same directory resumes from the journal.
    let again = run("corpus_100.jsonl", "sources_200.txt", a.path(), 2);
    assert_eq!(again, ma);
    assert_eq!(read(a.path()), read(b.path()));
}
