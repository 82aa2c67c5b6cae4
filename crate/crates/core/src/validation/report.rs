//! The dual-rater summary table: validation rates, mean quality, quality
//! buckets and the two agreement coefficients.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::kappa::{cohen_kappa_nominal, cohen_kappa_weighted, interpret_kappa, AgreementStats, KappaError, Weighting};
use super::AnnotationRecord;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReportError {
    #[error("a report needs exactly two raters, found {}: {found:?}", found.len())]
    RaterCount { found: Vec<String> },
    #[error("raters did not review the same samples; missing for {rater}: {missing:?}")]
    Unmatched { rater: String, missing: Vec<String> },
    #[error("{sample_id}/{rater_id}: {message}")]
    InvalidRecord {
        sample_id: String,
        rater_id: String,
        message: String,
    },
    #[error(transparent)]
    Kappa(#[from] KappaError),
}

/// Rates and bucket shares are percentages with one decimal; quality means
/// have two decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterSummary {
    pub validation_rate: f64,
    pub avg_quality: f64,
    pub high: f64,
    pub acceptable: f64,
    pub low: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaSummary {
    /// Rounded to four decimals.
    pub stats: AgreementStats,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub samples: usize,
    /// Rater ids in sorted order; `per_rater` follows the same order.
    pub raters: [String; 2],
    pub per_rater: [RaterSummary; 2],
    pub combined: RaterSummary,
    pub kappa_binary: KappaSummary,
    pub kappa_quality: KappaSummary,
    pub quality_weighting: Weighting,
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (x * f).round() / f
}

fn summarize(records: &[&AnnotationRecord]) -> RaterSummary {
    let n = records.len() as f64;
    let count = |pred: &dyn Fn(&AnnotationRecord) -> bool| records.iter().filter(|r| pred(r)).count() as f64;
    let pct = |c: f64| round_to(100.0 * c / n, 1);
    let quality_sum: f64 = records.iter().map(|r| f64::from(r.quality)).sum();
    RaterSummary {
        validation_rate: pct(count(&|r| r.understandable)),
        avg_quality: round_to(quality_sum / n, 2),
        high: pct(count(&|r| r.quality >= 4)),
        acceptable: pct(count(&|r| r.quality == 3)),
        low: pct(count(&|r| r.quality <= 2)),
    }
}

fn kappa_summary(stats: AgreementStats) -> KappaSummary {
    let stats = AgreementStats {
        p_o: round_to(stats.p_o, 4),
        p_e: round_to(stats.p_e, 4),
        kappa: round_to(stats.kappa, 4),
    };
    KappaSummary {
        label: interpret_kappa(stats.kappa).to_string(),
        stats,
    }
}

/// Build the report from annotation records. Later records for the same
/// `(sample_id, rater_id)` replace earlier ones.
pub fn build_report(records: &[AnnotationRecord], weighting: Weighting) -> Result<ValidationReport, ReportError> {
    let mut latest: BTreeMap<(&str, &str), &AnnotationRecord> = BTreeMap::new();
    for r in records {
        r.validate().map_err(|message| ReportError::InvalidRecord {
            sample_id: r.sample_id.clone(),
            rater_id: r.rater_id.clone(),
            message,
        })?;
        latest.insert((&r.rater_id, &r.sample_id), r);
    }
    let raters: BTreeSet<&str> = latest.keys().map(|(rater, _)| *rater).collect();
    let [a, b] = raters.iter().copied().collect::<Vec<_>>()[..] else {
        return Err(ReportError::RaterCount {
            found: raters.iter().map(|r| r.to_string()).collect(),
        });
    };
    let samples_of = |rater: &str| -> BTreeSet<&str> {
        latest.keys().filter(|(r, _)| *r == rater).map(|(_, s)| *s).collect()
    };
    let (sa, sb) = (samples_of(a), samples_of(b));
    for (rater, mine, other) in [(a, &sa, &sb), (b, &sb, &sa)] {
        let missing: Vec<String> = other.difference(mine).map(|s| s.to_string()).collect();
        if !missing.is_empty() {
            return Err(ReportError::Unmatched {
                rater: rater.to_string(),
                missing,
            });
        }
    }
    let ra: Vec<&AnnotationRecord> = sa.iter().map(|s| latest[&(a, *s)]).collect();
    let rb: Vec<&AnnotationRecord> = sa.iter().map(|s| latest[&(b, *s)]).collect();
    let both: Vec<&AnnotationRecord> = ra.iter().chain(&rb).copied().collect();

    let ua: Vec<bool> = ra.iter().map(|r| r.understandable).collect();
    let ub: Vec<bool> = rb.iter().map(|r| r.understandable).collect();
    let qa: Vec<u8> = ra.iter().map(|r| r.quality).collect();
    let qb: Vec<u8> = rb.iter().map(|r| r.quality).collect();

    Ok(ValidationReport {
        samples: sa.len(),
        raters: [a.to_string(), b.to_string()],
        per_rater: [summarize(&ra), summarize(&rb)],
        combined: summarize(&both),
        kappa_binary: kappa_summary(cohen_kappa_nominal(&ua, &ub)?),
        kappa_quality: kappa_summary(cohen_kappa_weighted(&qa, &qb, weighting)?),
        quality_weighting: weighting,
    })
}

impl ValidationReport {
    /// Summary rows as a pipe table, one line per row.
    pub fn summary_rows(&self) -> Vec<String> {
        let [a, b] = &self.per_rater;
        let c = &self.combined;
        let row = |name: &str, f: fn(&RaterSummary) -> f64, decimals: usize| {
            format!(
                "| {name} | {:.*} | {:.*} | {:.*} |",
                decimals,
                f(a),
                decimals,
                f(b),
                decimals,
                f(c)
            )
        };
        vec![
            format!("| Metric | {} | {} | Combined |", self.raters[0], self.raters[1]),
            "|---|---|---|---|".to_string(),
            row("Validation rate (%)", |s| s.validation_rate, 1),
            row("Average quality (1-5)", |s| s.avg_quality, 2),
            row("High quality, 4-5 (%)", |s| s.high, 1),
            row("Acceptable, 3 (%)", |s| s.acceptable, 1),
            row("Low quality, 1-2 (%)", |s| s.low, 1),
        ]
    }

    pub fn kappa_rows(&self) -> Vec<String> {
        let quality = match self.quality_weighting {
            Weighting::None => "Quality agreement (unweighted)".to_string(),
            w => format!("Quality agreement ({w} weights)"),
        };
        vec![
            "| Agreement | Cohen's kappa | Interpretation |".to_string(),
            "|---|---|---|".to_string(),
            format!(
                "| Understandability agreement | {:.4} | {} |",
                self.kappa_binary.stats.kappa, self.kappa_binary.label
            ),
            format!(
                "| {quality} | {:.4} | {} |",
                self.kappa_quality.stats.kappa, self.kappa_quality.label
            ),
        ]
    }

    /// The full plain-text report.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Samples reviewed: {}", self.samples);
        out.push('\n');
        for line in self.summary_rows() {
            out.push_str(&line);
            out.push('\n');
        }
        out.push('\n');
        for line in self.kappa_rows() {
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}
