//! Sentence–gloss corpus augmentation: rule-based tense rewriting, masked-token
//! substitution, retrieval-augmented two-stage prompting, dual-rater review
//! statistics and BLEU evaluation.

pub mod backend;
pub mod config;
pub mod corpus;
pub mod evaluation;
pub mod masking;
pub mod pipeline;
pub mod pool;
pub mod prompt;
pub mod retrieval;
pub mod rules;
pub mod validation;
