//! Corpus-level BLEU over gloss token sequences, plus a hook for external
//! scorers whose metrics are not computed here.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::nfc;

/// NFC-normalize and split on Unicode whitespace.
pub fn tokenize_gloss(text: &str) -> Vec<String> {
    nfc(text).split_whitespace().map(str::to_string).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalExample {
    pub id: String,
    pub reference: Vec<String>,
    pub hypothesis: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    #[default]
    None,
    /// `(matches + 1) / (total + 1)` for n ≥ 2.
    AddOneClipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuComponents {
    /// Modified precision for each order, index 0 is unigrams.
    pub p_n: Vec<f64>,
    pub matches: Vec<u64>,
    pub totals: Vec<u64>,
    pub c: u64,
    pub r: u64,
    pub bp: f64,
    /// Cumulative BLEU-1..max_n, scaled to 0..100.
    pub bleu_n: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("hypothesis file has {hyp} entries but reference file has {reference}")]
    CountMismatch { hyp: usize, reference: usize },
    #[error("{}:{line}: {message}", path.display())]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("reference for {id:?} is empty")]
    EmptyReference { id: String },
    #[error("hypotheses missing for ids {0:?}")]
    MissingIds(Vec<String>),
    #[error("max_n must be in 1..=4, got {0}")]
    BadMaxN(usize),
    #[error("no examples to score")]
    NoExamples,
    #[error("external scorer `{command}`: {message}")]
    Scorer { command: String, message: String },
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

fn clipped_matches(hyp: &[String], reference: &[String], n: usize) -> (u64, u64) {
    let h = ngram_counts(hyp, n);
    let r = ngram_counts(reference, n);
    let matched = h
        .iter()
        .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
        .sum();
    (matched, hyp.len().saturating_sub(n - 1) as u64)
}

/// Corpus BLEU with a single reference per example. Counts are summed over
/// the corpus before dividing.
pub fn bleu_corpus(examples: &[EvalExample], max_n: usize, smoothing: Smoothing) -> Result<BleuComponents, EvalError> {
    if !(1..=4).contains(&max_n) {
        return Err(EvalError::BadMaxN(max_n));
    }
    if examples.is_empty() {
        return Err(EvalError::NoExamples);
    }
    if let Some(e) = examples.iter().find(|e| e.reference.is_empty()) {
        return Err(EvalError::EmptyReference { id: e.id.clone() });
    }
    let mut matches = vec![0u64; max_n];
    let mut totals = vec![0u64; max_n];
    let (mut c, mut r) = (0u64, 0u64);
    for e in examples {
        c += e.hypothesis.len() as u64;
        r += e.reference.len() as u64;
        for n in 1..=max_n {
            let (m, t) = clipped_matches(&e.hypothesis, &e.reference, n);
            matches[n - 1] += m;
            totals[n - 1] += t;
        }
    }
    Ok(components(matches, totals, c, r, smoothing))
}

fn components(matches: Vec<u64>, totals: Vec<u64>, c: u64, r: u64, smoothing: Smoothing) -> BleuComponents {
    let p_n: Vec<f64> = matches
        .iter()
        .zip(&totals)
        .enumerate()
        .map(|(i, (&m, &t))| match smoothing {
            Smoothing::AddOneClipped if i > 0 => (m + 1) as f64 / (t + 1) as f64,
            _ if t == 0 => 0.0,
            _ => m as f64 / t as f64,
        })
        .collect();
    let bp = if c == 0 {
        0.0
    } else if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    if c == 0 {
        tracing::warn!("all hypotheses are empty; BLEU is 0");
    }
    let mut bleu_n = Vec::with_capacity(p_n.len());
    let mut log_sum = 0.0;
    let mut all_positive = true;
    for (i, &p) in p_n.iter().enumerate() {
        all_positive &= p > 0.0;
        if all_positive {
            log_sum += p.ln();
        }
        let n = (i + 1) as f64;
        bleu_n.push(if all_positive && bp > 0.0 {
            100.0 * bp * (log_sum / n).exp()
        } else {
            0.0
        });
    }
    BleuComponents {
        p_n,
        matches,
        totals,
        c,
        r,
        bp,
        bleu_n,
    }
}

/// Smoothed BLEU-`max_n` for one example, for per-example error analysis.
pub fn bleu_sentence(e: &EvalExample, max_n: usize) -> f64 {
    let (mut matches, mut totals) = (Vec::new(), Vec::new());
    for n in 1..=max_n {
        let (m, t) = clipped_matches(&e.hypothesis, &e.reference, n);
        matches.push(m);
        totals.push(t);
    }
    let comps = components(
        matches,
        totals,
        e.hypothesis.len() as u64,
        e.reference.len() as u64,
        Smoothing::AddOneClipped,
    );
    comps.bleu_n.last().copied().unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalFormat {
    /// One gloss per line, aligned by line number.
    Lines,
    /// Objects with `id` and `gloss` (token array or string), aligned by id.
    Jsonl,
}

impl FromStr for EvalFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lines" | "txt" | "plain" => Ok(EvalFormat::Lines),
            "jsonl" => Ok(EvalFormat::Jsonl),
            other => Err(format!("unknown evaluation format {other:?}")),
        }
    }
}

impl EvalFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") => EvalFormat::Jsonl,
            _ => EvalFormat::Lines,
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GlossField {
    Tokens(Vec<String>),
    Text(String),
}

#[derive(Deserialize)]
struct GlossLine {
    id: String,
    gloss: GlossField,
}

fn read_text(path: &Path) -> Result<String, EvalError> {
    fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_lines(path: &Path) -> Result<Vec<(String, Vec<String>)>, EvalError> {
    let text = read_text(path)?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| ((i + 1).to_string(), tokenize_gloss(l)))
        .collect())
}

fn read_jsonl(path: &Path) -> Result<Vec<(String, Vec<String>)>, EvalError> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: GlossLine = serde_json::from_str(line).map_err(|e| EvalError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        let tokens = match row.gloss {
            GlossField::Tokens(t) => t.iter().flat_map(|t| tokenize_gloss(t)).collect(),
            GlossField::Text(t) => tokenize_gloss(&t),
        };
        out.push((row.id, tokens));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub components: BleuComponents,
    pub examples: Vec<EvalExample>,
    /// Smoothed sentence-level BLEU-4 per example, same order as `examples`.
    pub sentence_bleu: Vec<f64>,
}

/// Score a hypothesis file against a reference file.
pub fn evaluate_files(hyp_path: &Path, ref_path: &Path, format: EvalFormat) -> Result<EvalOutcome, EvalError> {
    let read = match format {
        EvalFormat::Lines => read_lines,
        EvalFormat::Jsonl => read_jsonl,
    };
    let hyps = read(hyp_path)?;
    let refs = read(ref_path)?;
    if hyps.len() != refs.len() {
        return Err(EvalError::CountMismatch {
            hyp: hyps.len(),
            reference: refs.len(),
        });
    }
    let mut by_id: HashMap<String, Vec<String>> = hyps.into_iter().collect();
    let mut missing = Vec::new();
    let mut examples = Vec::with_capacity(refs.len());
    for (id, reference) in refs {
        match by_id.remove(&id) {
            Some(hypothesis) => examples.push(EvalExample {
                id,
                reference,
                hypothesis,
            }),
            None => missing.push(id),
        }
    }
    if !missing.is_empty() {
        return Err(EvalError::MissingIds(missing));
    }
    let components = bleu_corpus(&examples, 4, Smoothing::None)?;
    let sentence_bleu = examples.iter().map(|e| bleu_sentence(e, 4)).collect();
    Ok(EvalOutcome {
        components,
        examples,
        sentence_bleu,
    })
}

/// Pipe table with one row per system and BLEU-1..4 columns.
pub fn render_bleu_table(rows: &[(&str, &BleuComponents)]) -> String {
    let mut out = String::from("| System | BLEU-1 | BLEU-2 | BLEU-3 | BLEU-4 |\n|---|---|---|---|---|\n");
    for (name, comps) in rows {
        out.push_str(&format!("| {name} |"));
        for n in 0..4 {
            match comps.bleu_n.get(n) {
                Some(v) => out.push_str(&format!(" {v:.2} |")),
                None => out.push_str(" - |"),
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalScores {
    pub per_line: Vec<f64>,
    pub system: f64,
}

/// A metric computed by another program, run as `<command> <hyp> <ref>`. It
/// must print one float per line followed by a final `system: <float>` line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalScorer {
    pub command: String,
}

impl ExternalScorer {
    pub fn new(command: impl Into<String>) -> Self {
        ExternalScorer { command: command.into() }
    }

    pub fn run(&self, hyp_path: &Path, ref_path: &Path) -> Result<ExternalScores, EvalError> {
        let err = |message: String| EvalError::Scorer {
            command: self.command.clone(),
            message,
        };
        let mut parts = self.command.split_whitespace();
        let program = parts.next().ok_or_else(|| err("empty command".into()))?;
        let output = Command::new(program)
            .args(parts)
            .arg(hyp_path)
            .arg(ref_path)
            .output()
            .map_err(|e| err(e.to_string()))?;
        if !output.status.success() {
            return Err(err(format!(
                "exited with {}: {}",
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        parse_scorer_output(&String::from_utf8_lossy(&output.stdout)).map_err(err)
    }
}

pub fn parse_scorer_output(text: &str) -> Result<ExternalScores, String> {
    let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let (last, body) = lines.split_last().ok_or("no output")?;
    let system = last
        .strip_prefix("system:")
        .ok_or_else(|| format!("last line {last:?} is not `system: <float>`"))?
        .trim()
        .parse::<f64>()
        .map_err(|e| format!("system score: {e}"))?;
    let per_line = body
        .iter()
        .map(|l| l.parse::<f64>().map_err(|e| format!("line {l:?}: {e}")))
        .collect::<Result<_, _>>()?;
    Ok(ExternalScores { per_line, system })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ex(reference: &str, hypothesis: &str) -> EvalExample {
        EvalExample {
            id: String::new(),
            reference: tokenize_gloss(reference),
            hypothesis: tokenize_gloss(hypothesis),
        }
    }

    #[test]
    fn tokenizer() {
        assert_eq!(tokenize_gloss("A  B"), ["A", "B"]);
        assert!(tokenize_gloss("").is_empty());
        assert_eq!(tokenize_gloss("A\u{3000}B\t C\u{a0}D"), tokenize_gloss("A B C D"));
    }

    #[test]
    fn identity_scores_exactly_100() {
        let exs = vec![ex("a b c d e", "a b c d e"), ex("x y z w", "x y z w")];
        let b = bleu_corpus(&exs, 4, Smoothing::None).unwrap();
        assert_eq!(b.bleu_n, [100.0; 4]);
    }

    #[test]
    fn bigram_hand_case() {
        // p1 = 2/3, p2 = 1/2, c = r = 3 so bp = 1.
        let b = bleu_corpus(&[ex("a b d", "a b c")], 2, Smoothing::None).unwrap();
        assert_eq!(b.p_n, [2.0 / 3.0, 0.5]);
        assert_eq!(b.bp, 1.0);
        assert_abs_diff_eq!(b.bleu_n[1], 100.0 * (1.0f64 / 3.0).sqrt(), epsilon = 1e-9);
        assert_abs_diff_eq!(b.bleu_n[1], 57.74, epsilon = 0.01);
    }

    #[test]
    fn short_hypothesis_brevity_penalty() {
        let b = bleu_corpus(&[ex("a b c", "a b")], 2, Smoothing::None).unwrap();
        assert_eq!(b.bp, (1.0f64 - 1.5).exp());
        assert_abs_diff_eq!(b.bleu_n[1], 100.0 * (-0.5f64).exp(), epsilon = 1e-9);
    }

    #[test]
    fn clipping_limits_repeated_tokens() {
        let b = bleu_corpus(&[ex("the cat", "the the the")], 1, Smoothing::None).unwrap();
        assert_eq!(b.matches[0], 1);
        assert_eq!(b.totals[0], 3);
    }

    #[test]
    fn all_empty_hypotheses_score_zero() {
        let b = bleu_corpus(&[ex("a b", "")], 4, Smoothing::None).unwrap();
        assert_eq!(b.bleu_n, [0.0; 4]);
    }

    #[test]
    fn empty_reference_is_an_error() {
        assert!(matches!(
            bleu_corpus(&[ex("", "a")], 4, Smoothing::None),
            Err(EvalError::EmptyReference { .. })
        ));
        assert!(matches!(bleu_corpus(&[ex("a", "a")], 5, Smoothing::None), Err(EvalError::BadMaxN(5))));
    }

    #[test]
    fn smoothing_rescues_missing_higher_orders() {
        let e = ex("a b c d", "a x c y");
        assert_eq!(bleu_corpus(&[e.clone()], 4, Smoothing::None).unwrap().bleu_n[3], 0.0);
        // p1 = 2/4, p2..p4 = 1/4, 1/3, 1/2 after add-one; bp = 1.
        let expected = 100.0 * (0.5f64 * 0.25 * (1.0 / 3.0) * 0.5).powf(0.25);
        assert_abs_diff_eq!(bleu_sentence(&e, 4), expected, epsilon = 1e-9);
    }

    #[test]
    fn scorer_output_contract() {
        let s = parse_scorer_output("0.5\n0.25\nsystem: 0.375\n").unwrap();
        assert_eq!(s.per_line, [0.5, 0.25]);
        assert_eq!(s.system, 0.375);
        assert!(parse_scorer_output("0.5\n").is_err());
        assert!(parse_scorer_output("").is_err());
    }
}
