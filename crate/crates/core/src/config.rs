//! Pipeline configuration.
//!
//! The file is flat `section.key = value` text. Blank lines and lines starting
//! with `#` are ignored, values run to the end of the line, and relative paths
//! are resolved against the file's directory. Every key can be overridden by
//! an environment variable named `GLOSSFORGE_` plus the key upper-cased with
//! `.` replaced by `_` (so `retrieval.min_examples` becomes
//! `GLOSSFORGE_RETRIEVAL_MIN_EXAMPLES`). The backend URLs also answer to the
//! short names `GLOSSFORGE_LLM_URL`, `GLOSSFORGE_EMBED_URL` and
//! `GLOSSFORGE_FILLMASK_URL`. Credentials are read from the environment only
//! and are rejected if they appear in the file.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::backend::http::{EMBED_URL_VAR, FILLMASK_URL_VAR, LLM_URL_VAR};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}` looks like a credential; set it in the environment instead")]
    SecretInFile { line: usize, key: String },
    #[error("missing config key `{0}`")]
    MissingKey(String),
    #[error("config key `{key}`: cannot parse {value:?}: {message}")]
    BadValue {
        key: String,
        value: String,
        message: String,
    },
    #[error("config key `{key}`: path {} does not exist", path.display())]
    MissingPath { key: String, path: PathBuf },
}

/// Every key the file may set, with its default when it has one.
pub const KEYS: &[(&str, Option<&str>)] = &[
    ("corpus.manual", None),
    ("corpus.sources", None),
    ("split.train", Some("0.8")),
    ("split.dev", Some("0.1")),
    ("split.test", Some("0.1")),
    ("split.seed", Some("42")),
    ("rules.path", None),
    ("retrieval.threshold", Some("0.5")),
    ("retrieval.cap", Some("20")),
    ("retrieval.min_examples", Some("3")),
    ("backend.mode", Some("mock")),
    ("backend.llm_url", None),
    ("backend.llm_model", Some("gpt-4.1-nano")),
    ("backend.temperature", Some("0")),
    ("backend.max_output_tokens", Some("256")),
    ("backend.timeout_secs", Some("60")),
    ("backend.embed_url", None),
    ("backend.embed_model", Some("hash-bow")),
    ("backend.embed_dimension", Some("256")),
    ("backend.fillmask_url", None),
    ("backend.concurrency", Some("4")),
    ("prompts.dir", None),
    ("masking.k", Some("2")),
    ("masking.stop_list", None),
    ("augment.rule_ratio", Some("0.5")),
    ("augment.mask_ratio", Some("0.5")),
    ("augment.rag_ratio", Some("2.0")),
    ("review.port", Some("8080")),
    ("review.fraction", Some("0.15")),
    ("review.seed", Some("7")),
    ("review.weighting", Some("none")),
    ("output.dir", None),
];

const PATH_KEYS: &[&str] = &[
    "corpus.manual",
    "corpus.sources",
    "rules.path",
    "prompts.dir",
    "masking.stop_list",
    "output.dir",
];

fn looks_secret(key: &str) -> bool {
    let last = key.rsplit('.').next().unwrap_or(key);
    ["key", "token", "secret", "password", "api_key"]
        .iter()
        .any(|s| last == *s || last.ends_with(&format!("_{s}")))
}

pub fn env_name(key: &str) -> String {
    format!("GLOSSFORGE_{}", key.replace('.', "_").to_uppercase())
}

fn short_env_name(key: &str) -> Option<&'static str> {
    match key {
        "backend.llm_url" => Some(LLM_URL_VAR),
        "backend.embed_url" => Some(EMBED_URL_VAR),
        "backend.fillmask_url" => Some(FILLMASK_URL_VAR),
        _ => None,
    }
}

/// Resolved key/value settings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
    base_dir: PathBuf,
}

impl Config {
    /// Parse config text; `env` supplies overrides.
    pub fn parse(text: &str, base_dir: &Path, env: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or(ConfigError::Syntax {
                line,
                message: "expected `section.key = value`".into(),
            })?;
            let key = key.trim();
            if !key.contains('.') {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("key `{key}` has no section prefix"),
                });
            }
            if looks_secret(key) {
                return Err(ConfigError::SecretInFile {
                    line,
                    key: key.to_string(),
                });
            }
            if !KEYS.iter().any(|(k, _)| *k == key) {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        for (key, default) in KEYS {
            let over = env(&env_name(key)).or_else(|| short_env_name(key).and_then(&env));
            if let Some(v) = over.filter(|v| !v.trim().is_empty()) {
                values.insert(key.to_string(), v.trim().to_string());
            } else if let Some(d) = default {
                values.entry(key.to_string()).or_insert_with(|| d.to_string());
            }
        }
        Ok(Config {
            values,
            base_dir: base_dir.to_path_buf(),
        })
    }

    /// Load from a file with overrides from the process environment.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, |k| std::env::var(k).ok())
    }

    /// Defaults plus environment overrides, for runs without a file.
    pub fn from_env() -> Self {
        Self::parse("", Path::new("."), |k| std::env::var(k).ok()).expect("empty config parses")
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str, ConfigError> {
        self.get(key).ok_or_else(|| ConfigError::MissingKey(key.to_string()))
    }

    pub fn parse_value<T>(&self, key: &str) -> Result<T, ConfigError>
    where
        T: FromStr,
        T::Err: Display,
    {
        let raw = self.require(key)?;
        raw.parse().map_err(|e: T::Err| ConfigError::BadValue {
            key: key.to_string(),
            value: raw.to_string(),
            message: e.to_string(),
        })
    }

    /// A path value resolved against the config file's directory.
    pub fn path(&self, key: &str) -> Result<PathBuf, ConfigError> {
        let p = PathBuf::from(self.require(key)?);
        Ok(if p.is_absolute() { p } else { self.base_dir.join(p) })
    }

    /// Like [`Config::path`] but the path must exist.
    pub fn existing_path(&self, key: &str) -> Result<PathBuf, ConfigError> {
        let p = self.path(key)?;
        if !p.exists() {
            return Err(ConfigError::MissingPath { key: key.to_string(), path: p });
        }
        Ok(p)
    }

    /// Check that every configured input path exists. `output.dir` may be created later.
    pub fn validate_paths(&self) -> Result<(), ConfigError> {
        for key in PATH_KEYS.iter().filter(|k| **k != "output.dir") {
            if self.get(key).is_some() {
                self.existing_path(key)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_env(_: &str) -> Option<String> {
        None
    }

    #[test]
    fn defaults_and_file_values() {
        let c = Config::parse("# c\nretrieval.cap = 5\n\ncorpus.manual = data/m.jsonl\n", Path::new("/base"), no_env).unwrap();
        assert_eq!(c.parse_value::<usize>("retrieval.cap").unwrap(), 5);
        assert_eq!(c.parse_value::<f64>("split.train").unwrap(), 0.8);
        assert_eq!(c.path("corpus.manual").unwrap(), PathBuf::from("/base/data/m.jsonl"));
    }

    #[test]
    fn environment_overrides_file() {
        let env = |k: &str| match k {
            "GLOSSFORGE_RETRIEVAL_MIN_EXAMPLES" => Some("7".to_string()),
            "GLOSSFORGE_LLM_URL" => Some("http://llm".to_string()),
            _ => None,
        };
        let c = Config::parse("retrieval.min_examples = 2\n", Path::new("."), env).unwrap();
        assert_eq!(c.get("retrieval.min_examples"), Some("7"));
        assert_eq!(c.get("backend.llm_url"), Some("http://llm"));
    }

    #[test]
    fn missing_key_is_named() {
        let c = Config::parse("", Path::new("."), no_env).unwrap();
        let err = c.require("corpus.manual").unwrap_err();
        assert_eq!(err.to_string(), "missing config key `corpus.manual`");
    }

    #[test]
    fn secrets_are_refused() {
        for line in ["backend.llm_key = abc", "backend.api_key = x", "backend.token = t"] {
            assert!(matches!(
                Config::parse(line, Path::new("."), no_env),
                Err(ConfigError::SecretInFile { line: 1, .. })
            ));
        }
    }

    #[test]
    fn syntax_and_unknown_keys() {
        assert!(matches!(Config::parse("nonsense", Path::new("."), no_env), Err(ConfigError::Syntax { .. })));
        assert!(matches!(Config::parse("cap = 3", Path::new("."), no_env), Err(ConfigError::Syntax { .. })));
        assert!(matches!(
            Config::parse("retrieval.kap = 3", Path::new("."), no_env),
            Err(ConfigError::UnknownKey { .. })
        ));
    }

    #[test]
    fn bad_values_are_reported_with_key() {
        let c = Config::parse("retrieval.cap = many", Path::new("."), no_env).unwrap();
        let err = c.parse_value::<usize>("retrieval.cap").unwrap_err();
        assert!(err.to_string().contains("retrieval.cap"));
    }

    #[test]
    fn missing_input_paths_fail_validation() {
        let c = Config::parse("rules.path = /definitely/not/here.rules", Path::new("."), no_env).unwrap();
        assert!(matches!(c.validate_paths(), Err(ConfigError::MissingPath { .. })));
    }
}
