//! Builds backends and typed settings from the resolved config.

use std::path::PathBuf;
use std::time::Duration;

use glossforge::backend::{HttpChatClient, HttpEmbedder, HttpFillMask, RetryPolicy};
use glossforge::config::Config;
use glossforge::corpus::{Corpus, SplitRatios};
use glossforge::masking::{FillMaskBackend, MaskConfig, StopList, VocabularyFillMask};
use glossforge::pipeline::{PipelineSettings, Quotas};
use glossforge::prompt::{GenerationParams, LlmBackend, MockLlm, PromptTemplates, RagConfig};
use glossforge::retrieval::{BuildOptions, EmbedderBackend, HashEmbedder, RetrievalConfig};
use glossforge::rules::{load_rules, RuleSet};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    /// Deterministic offline stand-ins for every model.
    Mock,
    Http,
}

pub struct Setup {
    pub config: Config,
}

impl Setup {
    pub fn new(config: Config) -> Self {
        Setup { config }
    }

    fn mode(&self) -> Result<Mode, CliError> {
        match self.config.require("backend.mode")? {
            "mock" => Ok(Mode::Mock),
            "http" => Ok(Mode::Http),
            other => Err(CliError::Config(format!(
                "config key `backend.mode`: expected `mock` or `http`, got {other:?}"
            ))),
        }
    }

    pub fn split_ratios(&self) -> Result<SplitRatios, CliError> {
        Ok(SplitRatios::new(
            self.config.parse_value("split.train")?,
            self.config.parse_value("split.dev")?,
            self.config.parse_value("split.test")?,
            self.config.parse_value("split.seed")?,
        )?)
    }

    pub fn rules(&self, flag: Option<PathBuf>) -> Result<RuleSet, CliError> {
        let path = match flag {
            Some(p) => p,
            None => self.config.existing_path("rules.path")?,
        };
        Ok(load_rules(&path)?)
    }

    /// Configured stop-list, or an empty one when none is set.
    pub fn stop_list(&self, flag: Option<PathBuf>) -> Result<StopList, CliError> {
        let path = match flag {
            Some(p) => p,
            None if self.config.get("masking.stop_list").is_some() => self.config.existing_path("masking.stop_list")?,
            None => return Ok(StopList::default()),
        };
        Ok(StopList::load(&path)?)
    }

    pub fn templates(&self) -> Result<PromptTemplates, CliError> {
        if self.config.get("prompts.dir").is_none() {
            return Ok(PromptTemplates::default());
        }
        Ok(PromptTemplates::load_dir(&self.config.existing_path("prompts.dir")?)?)
    }

    pub fn concurrency(&self) -> Result<usize, CliError> {
        Ok(self.config.parse_value::<usize>("backend.concurrency")?.max(1))
    }

    fn retry(&self) -> Result<RetryPolicy, CliError> {
        Ok(match self.mode()? {
            Mode::Mock => RetryPolicy::immediate(),
            Mode::Http => RetryPolicy::default(),
        })
    }

    pub fn retrieval_config(&self) -> Result<RetrievalConfig, CliError> {
        let cfg = RetrievalConfig {
            threshold: self.config.parse_value("retrieval.threshold")?,
            cap: self.config.parse_value("retrieval.cap")?,
            min_examples: self.config.parse_value("retrieval.min_examples")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn rag_config(&self) -> Result<RagConfig, CliError> {
        Ok(RagConfig {
            retrieval: self.retrieval_config()?,
            retry: self.retry()?,
        })
    }

    pub fn generation_params(&self) -> Result<GenerationParams, CliError> {
        let temperature: f64 = self.config.parse_value("backend.temperature")?;
        if !(temperature >= 0.0) {
            return Err(CliError::Config("config key `backend.temperature` must be ≥ 0".into()));
        }
        Ok(GenerationParams {
            model_id: self.config.require("backend.llm_model")?.to_string(),
            temperature,
            max_output_tokens: self.config.parse_value("backend.max_output_tokens")?,
            timeout_secs: self.config.parse_value("backend.timeout_secs")?,
        })
    }

    pub fn build_options(&self) -> Result<BuildOptions, CliError> {
        Ok(BuildOptions {
            concurrency: self.concurrency()?,
            retry: self.retry()?,
            ..BuildOptions::default()
        })
    }

    pub fn mask_config(&self) -> Result<MaskConfig, CliError> {
        Ok(MaskConfig {
            per_pair_k: self.config.parse_value("masking.k")?,
            concurrency: self.concurrency()?,
            retry: self.retry()?,
        })
    }

    pub fn pipeline_settings(&self) -> Result<PipelineSettings, CliError> {
        Ok(PipelineSettings {
            split: self.split_ratios()?,
            quotas: Quotas {
                rule_ratio: self.config.parse_value("augment.rule_ratio")?,
                mask_ratio: self.config.parse_value("augment.mask_ratio")?,
                rag_ratio: self.config.parse_value("augment.rag_ratio")?,
            },
            mask: self.mask_config()?,
            rag: self.rag_config()?,
            params: self.generation_params()?,
            build: self.build_options()?,
            concurrency: self.concurrency()?,
        })
    }

    fn url(&self, key: &str) -> Result<String, CliError> {
        Ok(self.config.require(key)?.to_string())
    }

    pub fn embedder(&self) -> Result<Box<dyn EmbedderBackend>, CliError> {
        let dimension: usize = self.config.parse_value("backend.embed_dimension")?;
        Ok(match self.mode()? {
            Mode::Mock => Box::new(HashEmbedder::new(dimension, 0)),
            Mode::Http => Box::new(
                HttpEmbedder::new(
                    self.url("backend.embed_url")?,
                    std::env::var("GLOSSFORGE_EMBED_KEY").ok(),
                    self.config.require("backend.embed_model")?,
                    dimension,
                )
                .with_timeout(Duration::from_secs(self.config.parse_value("backend.timeout_secs")?)),
            ),
        })
    }

    pub fn llm(&self, rules: &RuleSet) -> Result<Box<dyn LlmBackend>, CliError> {
        Ok(match self.mode()? {
            Mode::Mock => Box::new(MockLlm::new(rules.clone())),
            Mode::Http => Box::new(HttpChatClient::new(
                self.url("backend.llm_url")?,
                std::env::var("GLOSSFORGE_LLM_KEY").ok(),
            )),
        })
    }

    /// The mock draws its vocabulary from `corpus`.
    pub fn fill_mask(&self, corpus: &Corpus, stop: &StopList) -> Result<Box<dyn FillMaskBackend>, CliError> {
        Ok(match self.mode()? {
            Mode::Mock => Box::new(VocabularyFillMask::from_corpus(corpus, stop)),
            Mode::Http => Box::new(HttpFillMask::new(self.url("backend.fillmask_url")?, None)),
        })
    }
}

