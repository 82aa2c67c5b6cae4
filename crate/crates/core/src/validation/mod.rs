//! Expert review of augmented pairs: sampling, the annotation journal,
//! agreement statistics and the summary report.

use std::path::PathBuf;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;

pub mod journal;
pub mod kappa;
pub mod report;

pub use journal::{read_journal, AnnotationJournal};
pub use kappa::{cohen_kappa_nominal, cohen_kappa_weighted, interpret_kappa, AgreementStats, KappaError, Weighting};
pub use report::{build_report, KappaSummary, RaterSummary, ReportError, ValidationReport};

/// One rater's judgment of one sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRecord {
    pub sample_id: String,
    pub rater_id: String,
    pub understandable: bool,
    pub quality: u8,
    pub created_at: DateTime<Utc>,
}

impl AnnotationRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.sample_id.trim().is_empty() {
            return Err("sample_id is empty".into());
        }
        if self.rater_id.trim().is_empty() {
            return Err("rater_id is empty".into());
        }
        if !(1..=5).contains(&self.quality) {
            return Err(format!("quality {} outside 1..=5", self.quality));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ValidationError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid annotation: {0}")]
    InvalidRecord(String),
    #[error("review fraction {0} outside (0, 1]")]
    BadFraction(f64),
    #[error("cannot sample from an empty corpus")]
    EmptyCorpus,
}

/// `round(n * fraction)` pair ids drawn uniformly without replacement, in
/// the order they should be reviewed. Deterministic for a given seed.
pub fn sample_for_review(c: &Corpus, fraction: f64, seed: u64) -> Result<Vec<String>, ValidationError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(ValidationError::BadFraction(fraction));
    }
    if c.is_empty() {
        return Err(ValidationError::EmptyCorpus);
    }
    let mut ids: Vec<String> = c.ids().map(str::to_string).collect();
    ids.sort();
    let k = (ids.len() as f64 * fraction).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    ids.truncate(k);
    Ok(ids)
}
