use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use glossforge::config::Config;
use glossforge::corpus::{
    load_corpus, split_corpus, write_corpus, write_split_map, Corpus, CorpusFormat, Split,
};
use glossforge::evaluation::{evaluate_files, render_bleu_table, EvalFormat, ExternalScorer};
use glossforge::masking::batch_mask_augment;
use glossforge::pipeline::{run_pipeline, PipelineInputs};
use glossforge::prompt::{batch_augment, ExampleBank, RagGenerator};
use glossforge::retrieval::{build_index, load_index, save_index};
use glossforge::rules::{expand_pair, RuleError};
use glossforge::validation::{build_report, read_journal, sample_for_review, Weighting};
use glossforge_review::ReviewState;

mod error;
mod setup;

use error::CliError;
use setup::Setup;

#[derive(Parser)]
#[command(name = "glossforge", version, about = "Augment, review and evaluate sentence-gloss corpora")]
struct Cli {
    /// Config file of `section.key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assign pairs to train/dev/test and write one file per split.
    Split {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Rewrite each pair into every other tense the rules reach.
    RulesExpand {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Masked-token substitution variants of each manual pair.
    MaskAugment {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        stop_list: Option<PathBuf>,
        /// Where to write the JSON run report.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Embed training pairs into an index file.
    IndexBuild {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Generate glosses for external sentences with retrieval and two-stage prompting.
    RagAugment {
        /// One sentence per line.
        #[arg(long)]
        sources: PathBuf,
        #[arg(long)]
        index: PathBuf,
        /// Training pairs the index was built from.
        #[arg(long)]
        examples: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Resume journal; defaults to `<output>.journal`.
        #[arg(long)]
        journal: Option<PathBuf>,
        #[arg(long)]
        failures: Option<PathBuf>,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Draw the review sample from an augmented corpus.
    ReviewSample {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Serve the review API for the sampled pairs.
    ReviewServe {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        journal: PathBuf,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        weighting: Option<String>,
    },
    /// Agreement report from an annotation journal.
    KappaReport {
        #[arg(long)]
        journal: PathBuf,
        #[arg(long)]
        weighting: Option<String>,
        /// Print the report as JSON instead of tables.
        #[arg(long)]
        json: bool,
    },
    /// Corpus BLEU-1..4 of hypotheses against references.
    Eval {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// `lines` or `jsonl`; inferred from the extension by default.
        #[arg(long)]
        format: Option<String>,
        #[arg(long, default_value = "system")]
        name: String,
        /// Write smoothed per-example BLEU-4 as JSONL.
        #[arg(long)]
        per_example: Option<PathBuf>,
        /// External scorer command, run as `<cmd> <hyp> <ref>`.
        #[arg(long)]
        external: Option<String>,
    },
    /// Split, run all three augmentations, merge and write a manifest.
    Pipeline {
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn load(path: &Path) -> Result<Corpus, CliError> {
    Ok(load_corpus(path, CorpusFormat::from_path(path))?)
}

fn write(c: &Corpus, path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(write_corpus(c, path, CorpusFormat::from_path(path))?)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut body = serde_json::to_string_pretty(value).expect("value serializes");
    body.push('\n');
    Ok(fs::write(path, body)?)
}

fn weighting(setup: &Setup, flag: Option<String>) -> Result<Weighting, CliError> {
    let raw = match flag {
        Some(w) => w,
        None => setup.config.require("review.weighting")?.to_string(),
    };
    raw.parse().map_err(CliError::Config)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::from_env(),
    };
    let mut setup = Setup::new(config);
    match cli.command {
        Command::Split { input, out_dir, seed } => {
            if let Some(p) = input {
                setup.config.set("corpus.manual", p.display().to_string());
            }
            if let Some(s) = seed {
                setup.config.set("split.seed", s.to_string());
            }
            let corpus = load(&setup.config.existing_path("corpus.manual")?)?;
            let out = match out_dir {
                Some(d) => d,
                None => setup.config.path("output.dir")?,
            };
            let split = split_corpus(&corpus, &setup.split_ratios()?, true)?;
            fs::create_dir_all(&out)?;
            for s in [Split::Train, Split::Dev, Split::Test] {
                let part = split.partition(s);
                tracing::info!(split = %s, pairs = part.len(), "wrote split");
                write(&part, &out.join(format!("{s}.jsonl")))?;
            }
            write_split_map(&split, &out.join("split.tsv"))?;
        }
        Command::RulesExpand { input, output, rules } => {
            let rules = setup.rules(rules)?;
            let corpus = load(&input)?;
            let mut out = Vec::new();
            for p in &corpus.pairs {
                match expand_pair(p, &rules) {
                    Ok(v) => {
                        tracing::info!(id = %p.id, action = "rules", outcome = "ok", variants = v.len());
                        out.extend(v);
                    }
                    Err(RuleError::UnknownTense { .. }) => {
                        tracing::info!(id = %p.id, action = "rules", outcome = "unknown_tense");
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            write(&Corpus::new(out), &output)?;
        }
        Command::MaskAugment {
            input,
            output,
            k,
            stop_list,
            report,
        } => {
            if let Some(k) = k {
                setup.config.set("masking.k", k.to_string());
            }
            let corpus = load(&input)?;
            let stop = setup.stop_list(stop_list)?;
            let backend = setup.fill_mask(&corpus, &stop)?;
            let (variants, rep) = batch_mask_augment(&corpus, backend.as_ref(), &setup.mask_config()?, &stop)?;
            write(&variants, &output)?;
            if let Some(path) = report {
                write_json(&path, &rep)?;
            }
            tracing::info!(produced = rep.produced, failures = rep.backend_failures.len(), "mask augmentation done");
        }
        Command::IndexBuild { input, output } => {
            let corpus = load(&input)?;
            let embedder = setup.embedder()?;
            let index = build_index(&corpus.pairs, embedder.as_ref(), &setup.build_options()?)?;
            save_index(&index, &output)?;
            tracing::info!(entries = index.len(), backend = %index.backend_name, "index written");
        }
        Command::RagAugment {
            sources,
            index,
            examples,
            output,
            rules,
            journal,
            failures,
            limit,
        } => {
            let rules = setup.rules(rules)?;
            let index = load_index(&index)?;
            let embedder = setup.embedder()?;
            index.check_backend(embedder.name());
            let train = load(&examples)?;
            let bank = ExampleBank::new(&train.pairs);
            let templates = setup.templates()?;
            let llm = setup.llm(&rules)?;
            let mut lines: Vec<String> = fs::read_to_string(&sources)?
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(str::to_string)
                .collect();
            if let Some(n) = limit {
                lines.truncate(n);
            }
            let generator = RagGenerator {
                index: &index,
                embedder: embedder.as_ref(),
                examples: &bank,
                rules: &rules,
                templates: &templates,
                llm: llm.as_ref(),
                params: setup.generation_params()?,
                config: setup.rag_config()?,
            };
            let journal = journal.unwrap_or_else(|| {
                let mut p = output.clone().into_os_string();
                p.push(".journal");
                PathBuf::from(p)
            });
            let outcome = batch_augment(&generator, &lines, setup.concurrency()?, Some(&journal))?;
            write(&outcome.corpus, &output)?;
            if let Some(path) = failures {
                write_json(&path, &outcome.failures)?;
            }
            tracing::info!(
                generated = outcome.corpus.len(),
                failed = outcome.failures.len(),
                resumed = outcome.resumed,
                "rag augmentation done"
            );
            if outcome.corpus.is_empty() && !outcome.failures.is_empty() {
                return Err(CliError::Backend(format!(
                    "every generation failed; first error: {}",
                    outcome.failures[0].reason
                )));
            }
        }
        Command::ReviewSample {
            input,
            output,
            fraction,
            seed,
        } => {
            let corpus = load(&input)?;
            let fraction = match fraction {
                Some(f) => f,
                None => setup.config.parse_value("review.fraction")?,
            };
            let seed = match seed {
                Some(s) => s,
                None => setup.config.parse_value("review.seed")?,
            };
            let ids = sample_for_review(&corpus, fraction, seed)?;
            let sample = Corpus::new(
                ids.iter()
                    .map(|id| corpus.get(id).expect("sampled id exists").clone())
                    .collect(),
            );
            write(&sample, &output)?;
        }
        Command::ReviewServe {
            samples,
            journal,
            port,
            weighting: w,
        } => {
            let weighting = weighting(&setup, w)?;
            let port = match port {
                Some(p) => p,
                None => setup.config.parse_value("review.port")?,
            };
            let state = ReviewState::open(&samples, &journal, weighting).map_err(|e| CliError::Data(e.to_string()))?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(glossforge_review::serve(
                Arc::new(state),
                SocketAddr::from(([127, 0, 0, 1], port)),
            ))
            .map_err(|e| CliError::Data(e.to_string()))?;
        }
        Command::KappaReport { journal, weighting: w, json } => {
            let weighting = weighting(&setup, w)?;
            let report = build_report(&read_journal(&journal)?, weighting)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            } else {
                print!("{}", report.render());
            }
        }
        Command::Eval {
            hyp,
            reference,
            format,
            name,
            per_example,
            external,
        } => {
            let format = match format {
                Some(f) => f.parse().map_err(CliError::Config)?,
                None => EvalFormat::from_path(&reference),
            };
            let outcome = evaluate_files(&hyp, &reference, format)?;
            print!("{}", render_bleu_table(&[(&name, &outcome.components)]));
            if let Some(path) = per_example {
                let mut body = String::new();
                for (e, score) in outcome.examples.iter().zip(&outcome.sentence_bleu) {
                    body.push_str(&serde_json::json!({"id": e.id, "bleu4_smoothed": score}).to_string());
                    body.push('\n');
                }
                fs::write(&path, body)?;
            }
            if let Some(cmd) = external {
                let scores = ExternalScorer::new(cmd).run(&hyp, &reference)?;
                println!("external system score: {}", scores.system);
            }
        }
        Command::Pipeline { out_dir } => {
            setup.config.validate_paths()?;
            let out = match out_dir {
                Some(d) => d,
                None => setup.config.path("output.dir")?,
            };
            let manual = load(&setup.config.existing_path("corpus.manual")?)?;
            let sources: Vec<String> = fs::read_to_string(setup.config.existing_path("corpus.sources")?)?
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(str::to_string)
                .collect();
            let rules = setup.rules(None)?;
            let stop = setup.stop_list(None)?;
            let templates = setup.templates()?;
            let embedder = setup.embedder()?;
            let llm = setup.llm(&rules)?;
            let fill = setup.fill_mask(&manual, &stop)?;
            let backends = glossforge::pipeline::Backends {
                embedder: embedder.as_ref(),
                llm: llm.as_ref(),
                fill_mask: fill.as_ref(),
            };
            let inputs = PipelineInputs {
                manual,
                sources,
                rules: &rules,
                stop_list: &stop,
                templates: &templates,
            };
            let manifest = run_pipeline(inputs, &backends, &setup.pipeline_settings()?, &out)?;
            println!("{}", serde_json::to_string_pretty(&manifest).expect("manifest serializes"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet {
        tracing::Level::WARN
    } else {
        tracing::Level::INFO
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .with_target(false)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.summary());
            ExitCode::from(e.exit_code())
        }
    }
}
