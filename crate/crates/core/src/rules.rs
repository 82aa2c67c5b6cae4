//! Declarative tense rules and the suffix-rewriting engine that applies them.
//!
//! Rule files are line oriented:
//!
//! ```text
//! # comment
//! version 2025.1
//! detect লাম -> past
//! rule past-fut past -> future : verb "লাম" => "ROOTব" ; gloss => "ROOT হবে"
//! ```
//!
//! The verb is taken to be the final sentence token (trailing punctuation is
//! set aside and restored). `ROOT` in a template stands for the verb with the
//! matched suffix removed.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::corpus::{is_trailing_punct, nfc, Provenance, SentenceGlossPair, Tense};

pub const ROOT: &str = "ROOT";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionRule {
    pub suffix: String,
    pub tense: Tense,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TenseRule {
    pub rule_id: String,
    pub source_tense: Tense,
    pub target_tense: Tense,
    /// Suffix matched against the final verb token of the sentence.
    pub verb_suffix: String,
    /// Replacement for the verb token, e.g. `ROOTব`.
    pub sentence_rewrite: String,
    /// Replacement for the gloss verb segment, e.g. `ROOT হবে`.
    pub gloss_rewrite: String,
}

impl TenseRule {
    /// A one-line, human readable rendering used inside prompts.
    pub fn describe(&self) -> String {
        format!(
            "[{}] {} -> {}: a verb ending in \"{}\" becomes \"{}\"; its gloss becomes \"{}\"",
            self.rule_id,
            self.source_tense,
            self.target_tense,
            self.verb_suffix,
            self.sentence_rewrite,
            self.gloss_rewrite
        )
    }

    fn gloss_tokens(&self, root: &str) -> Vec<String> {
        self.gloss_rewrite
            .split_whitespace()
            .map(|t| t.replace(ROOT, root))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RuleSet {
    pub version: String,
    pub detection_rules: Vec<DetectionRule>,
    pub rules: Vec<TenseRule>,
}

#[derive(Debug, thiserror::Error)]
pub enum RuleError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: duplicate rule id {rule_id:?}")]
    DuplicateRule { line: usize, rule_id: String },
    #[error("line {line}: invalid rule: {message}")]
    Invalid { line: usize, message: String },
    #[error("pair {id:?}: tense could not be detected")]
    UnknownTense { id: String },
    #[error("no rule rewrites {from} -> {to}")]
    NoRule { from: Tense, to: Tense },
    #[error("pair {id:?}: gloss has no token equal to the verb root {root:?}")]
    GlossVerbNotFound { id: String, root: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Word(String),
    Quoted(String),
}

fn tokenize(line: &str, lineno: usize) -> Result<Vec<Token>, RuleError> {
    let mut tokens = Vec::new();
    let mut chars = line.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '"' {
            chars.next();
            let mut s = String::new();
            loop {
                match chars.next() {
                    Some('"') => break,
                    Some(ch) => s.push(ch),
                    None => {
                        return Err(RuleError::Syntax {
                            line: lineno,
                            message: "unterminated quoted string".into(),
                        })
                    }
                }
            }
            tokens.push(Token::Quoted(s));
        } else if c == ';' || c == ':' {
            chars.next();
            tokens.push(Token::Word(c.to_string()));
        } else {
            let mut s = String::new();
            while let Some(&ch) = chars.peek() {
                if ch.is_whitespace() || ch == '"' || ch == ';' || ch == ':' {
                    break;
                }
                s.push(ch);
                chars.next();
            }
            tokens.push(Token::Word(s));
        }
    }
    Ok(tokens)
}

fn parse_tense(word: &str, line: usize) -> Result<Tense, RuleError> {
    word.parse()
        .map_err(|message| RuleError::Syntax { line, message })
}

impl RuleSet {
    /// Parse and validate rule-file text.
    pub fn parse(text: &str) -> Result<RuleSet, RuleError> {
        let mut rs = RuleSet {
            version: "0".into(),
            ..Default::default()
        };
        let mut rule_ids = HashSet::new();
        let mut detect_suffixes = HashSet::new();

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let tokens = tokenize(&nfc(trimmed), line)?;
            let syntax = |message: &str| RuleError::Syntax {
                line,
                message: message.to_string(),
            };
            let head = match tokens.first() {
                Some(Token::Word(w)) => Some(w.as_str()),
                _ => None,
            };
            match head {
                Some("version") => match tokens.as_slice() {
                    [_, Token::Word(v) | Token::Quoted(v)] => rs.version = v.clone(),
                    _ => return Err(syntax("expected `version <string>`")),
                },
                Some("detect") => {
                    let [_, Token::Word(suffix) | Token::Quoted(suffix), Token::Word(arrow), Token::Word(tense)] =
                        tokens.as_slice()
                    else {
                        return Err(syntax("expected `detect <suffix> -> <tense>`"));
                    };
                    if arrow != "->" {
                        return Err(syntax("expected `->` after the detection suffix"));
                    }
                    if suffix.is_empty() {
                        return Err(RuleError::Invalid {
                            line,
                            message: "detection suffix is empty".into(),
                        });
                    }
                    let tense = parse_tense(tense, line)?;
                    if !tense.is_known() {
                        return Err(RuleError::Invalid {
                            line,
                            message: "detection rules must name a known tense".into(),
                        });
                    }
                    if !detect_suffixes.insert(suffix.clone()) {
                        return Err(RuleError::Invalid {
                            line,
                            message: format!("detection suffix {suffix:?} appears twice"),
                        });
                    }
                    rs.detection_rules.push(DetectionRule {
                        suffix: suffix.clone(),
                        tense,
                    });
                }
                Some("rule") => {
                    let rule = parse_rule(&tokens, line)?;
                    if !rule_ids.insert(rule.rule_id.clone()) {
                        return Err(RuleError::DuplicateRule {
                            line,
                            rule_id: rule.rule_id,
                        });
                    }
                    rs.rules.push(rule);
                }
                _ => return Err(syntax("expected a `version`, `detect` or `rule` line")),
            }
        }
        Ok(rs)
    }

    /// Detection rules whose suffix matches `verb`, longest suffix first,
    /// file order among equal lengths.
    fn best_detection(&self, verb: &str) -> Option<&DetectionRule> {
        let mut best: Option<&DetectionRule> = None;
        for rule in &self.detection_rules {
            if !suffix_matches(verb, &rule.suffix) {
                continue;
            }
            let longer = best.is_none_or(|b| {
                rule.suffix.chars().count() > b.suffix.chars().count()
            });
            if longer {
                best = Some(rule);
            }
        }
        best
    }

    /// The rule applied for `source -> target` on `verb`, if any.
    pub fn applicable_rule(&self, source: Tense, target: Tense, verb: &str) -> Option<&TenseRule> {
        let mut best: Option<&TenseRule> = None;
        for rule in &self.rules {
            if rule.source_tense != source
                || rule.target_tense != target
                || !suffix_matches(verb, &rule.verb_suffix)
            {
                continue;
            }
            if best.is_none_or(|b| {
                rule.verb_suffix.chars().count() > b.verb_suffix.chars().count()
            }) {
                best = Some(rule);
            }
        }
        best
    }

    /// Rules whose source or target tense is `tense`; every rule when the
    /// tense is unknown.
    pub fn rules_for_tense(&self, tense: Tense) -> Vec<&TenseRule> {
        if !tense.is_known() {
            return self.rules.iter().collect();
        }
        self.rules
            .iter()
            .filter(|r| r.source_tense == tense || r.target_tense == tense)
            .collect()
    }

    /// Target tenses reachable in one step from `source` in the rule graph.
    pub fn reachable_targets(&self, source: Tense) -> Vec<Tense> {
        Tense::KNOWN
            .into_iter()
            .filter(|&t| {
                t != source
                    && self
                        .rules
                        .iter()
                        .any(|r| r.source_tense == source && r.target_tense == t)
            })
            .collect()
    }
}

fn parse_rule(tokens: &[Token], line: usize) -> Result<TenseRule, RuleError> {
    use Token::{Quoted, Word};
    let shape = "expected `rule <id> <src> -> <dst> : verb \"<suffix>\" => \"<template>\" ; gloss => \"<template>\"`";
    let [_, Word(id), Word(src), Word(a1), Word(dst), Word(colon), Word(verb_kw), Quoted(suffix), Word(a2), Quoted(sentence_tpl), Word(semi), Word(gloss_kw), Word(a3), Quoted(gloss_tpl)] =
        tokens
    else {
        return Err(RuleError::Syntax {
            line,
            message: shape.into(),
        });
    };
    let punct_ok = a1 == "->"
        && colon == ":"
        && verb_kw == "verb"
        && a2 == "=>"
        && semi == ";"
        && gloss_kw == "gloss"
        && a3 == "=>";
    if !punct_ok {
        return Err(RuleError::Syntax {
            line,
            message: shape.into(),
        });
    }
    let invalid = |message: String| RuleError::Invalid { line, message };
    let source_tense = parse_tense(src, line)?;
    let target_tense = parse_tense(dst, line)?;
    if !source_tense.is_known() || !target_tense.is_known() {
        return Err(invalid("rules must name known tenses".into()));
    }
    if source_tense == target_tense {
        return Err(invalid(format!("rule {id:?} maps {source_tense} onto itself")));
    }
    if suffix.is_empty() {
        return Err(invalid(format!("rule {id:?} has an empty verb suffix")));
    }
    if sentence_tpl.is_empty() || sentence_tpl.chars().any(char::is_whitespace) {
        return Err(invalid(format!(
            "rule {id:?}: the verb template must be a single non-empty token"
        )));
    }
    if gloss_tpl.split_whitespace().next().is_none() {
        return Err(invalid(format!("rule {id:?} has an empty gloss template")));
    }
    for (name, tpl) in [("verb", sentence_tpl), ("gloss", gloss_tpl)] {
        if tpl.matches(ROOT).count() > 1 {
            return Err(invalid(format!(
                "rule {id:?}: the {name} template uses ROOT more than once"
            )));
        }
    }
    Ok(TenseRule {
        rule_id: id.clone(),
        source_tense,
        target_tense,
        verb_suffix: suffix.clone(),
        sentence_rewrite: sentence_tpl.clone(),
        gloss_rewrite: gloss_tpl.split_whitespace().collect::<Vec<_>>().join(" "),
    })
}

impl fmt::Display for RuleSet {
    /// Canonical rule-file rendering; comments are not preserved.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "version {}", self.version)?;
        if !self.detection_rules.is_empty() {
            writeln!(f)?;
        }
        for d in &self.detection_rules {
            writeln!(f, "detect {} -> {}", d.suffix, d.tense)?;
        }
        if !self.rules.is_empty() {
            writeln!(f)?;
        }
        for r in &self.rules {
            writeln!(
                f,
                "rule {} {} -> {} : verb \"{}\" => \"{}\" ; gloss => \"{}\"",
                r.rule_id,
                r.source_tense,
                r.target_tense,
                r.verb_suffix,
                r.sentence_rewrite,
                r.gloss_rewrite
            )?;
        }
        Ok(())
    }
}

/// Load a rule file.
pub fn load_rules(path: &Path) -> Result<RuleSet, RuleError> {
    let text = fs::read_to_string(path).map_err(|source| RuleError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let rs = RuleSet::parse(&text)?;
    tracing::debug!(
        path = %path.display(),
        rules = rs.rules.len(),
        detection_rules = rs.detection_rules.len(),
        "loaded rule file"
    );
    Ok(rs)
}

fn suffix_matches(verb: &str, suffix: &str) -> bool {
    verb.len() > suffix.len() && verb.ends_with(suffix)
}


/// Split an NFC sentence into (text before the verb, verb, trailing punctuation).
fn split_verb(sentence: &str) -> Option<(&str, &str, &str)> {
    let trimmed = sentence.trim_end();
    let start = trimmed
        .char_indices()
        .rev()
        .find(|(_, c)| c.is_whitespace())
        .map(|(i, c)| i + c.len_utf8())
        .unwrap_or(0);
    let last = &trimmed[start..];
    let verb_end = last
        .char_indices()
        .rev()
        .find(|(_, c)| !is_trailing_punct(*c))
        .map(|(i, c)| i + c.len_utf8())?;
    Some((&sentence[..start], &last[..verb_end], &last[verb_end..]))
}

/// The tense signalled by the sentence's final token, or `Unknown`.
pub fn detect_tense(sentence: &str, rules: &RuleSet) -> Tense {
    let sentence = nfc(sentence);
    split_verb(&sentence)
        .and_then(|(_, verb, _)| rules.best_detection(verb))
        .map_or(Tense::Unknown, |d| d.tense)
}

/// Rewrite `pair` into `target` tense. Asking for the detected tense returns
/// the pair unchanged.
pub fn transform_tense(
    pair: &SentenceGlossPair,
    target: Tense,
    rules: &RuleSet,
) -> Result<SentenceGlossPair, RuleError> {
    let sentence = nfc(&pair.sentence);
    let detected = detect_tense(&sentence, rules);
    if !detected.is_known() {
        return Err(RuleError::UnknownTense {
            id: pair.id.clone(),
        });
    }
    if target == detected {
        return Ok(pair.clone());
    }
    let (head, verb, punct) = split_verb(&sentence).expect("a detected tense implies a verb");
    let rule = rules
        .applicable_rule(detected, target, verb)
        .ok_or(RuleError::NoRule {
            from: detected,
            to: target,
        })?;
    let root = &verb[..verb.len() - rule.verb_suffix.len()];
    let new_verb = rule.sentence_rewrite.replace(ROOT, root);

    let locus = pair
        .gloss
        .iter()
        .rposition(|g| g == root)
        .ok_or_else(|| RuleError::GlossVerbNotFound {
            id: pair.id.clone(),
            root: root.to_string(),
        })?;
    let mut gloss: Vec<String> = pair.gloss[..locus].to_vec();
    gloss.extend(rule.gloss_tokens(root));

    let mut meta = std::collections::BTreeMap::new();
    meta.insert("rule_id".to_string(), rule.rule_id.clone());
    Ok(SentenceGlossPair {
        id: format!("{}.{}", pair.id, target),
        sentence: format!("{head}{new_verb}{punct}"),
        gloss,
        provenance: Provenance::RuleTense,
        tense: Some(target),
        source_pair_id: Some(pair.id.clone()),
        meta,
    })
}

/// One transformed pair per reachable target tense other than the detected one.
pub fn expand_pair(
    pair: &SentenceGlossPair,
    rules: &RuleSet,
) -> Result<Vec<SentenceGlossPair>, RuleError> {
    if rules.rules.is_empty() {
        return Ok(Vec::new());
    }
    let detected = detect_tense(&pair.sentence, rules);
    if !detected.is_known() {
        return Err(RuleError::UnknownTense {
            id: pair.id.clone(),
        });
    }
    let mut out = Vec::new();
    for target in Tense::KNOWN {
        if target == detected {
            continue;
        }
        match transform_tense(pair, target, rules) {
            Ok(p) => out.push(p),
            Err(RuleError::NoRule { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
