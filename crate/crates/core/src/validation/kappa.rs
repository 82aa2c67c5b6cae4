//! Cohen's kappa, unweighted and weighted, and the Landis–Koch labels.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub p_o: f64,
    pub p_e: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KappaError {
    #[error("label lists differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("no labels to compare")]
    Empty,
    #[error("label {label} outside 1..=5")]
    LabelOutOfRange { label: u8 },
}

/// Disagreement weights for ordinal kappa on the 1..=5 scale.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    None,
    Linear,
    Quadratic,
}

impl Weighting {
    pub fn as_str(self) -> &'static str {
        match self {
            Weighting::None => "none",
            Weighting::Linear => "linear",
            Weighting::Quadratic => "quadratic",
        }
    }

    fn weight(self, i: u8, j: u8) -> f64 {
        let d = (i as f64 - j as f64).abs();
        match self {
            Weighting::None => f64::from(u8::from(i != j)),
            Weighting::Linear => d / 4.0,
            Weighting::Quadratic => d * d / 16.0,
        }
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Weighting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" | "unweighted" => Ok(Weighting::None),
            "linear" => Ok(Weighting::Linear),
            "quadratic" => Ok(Weighting::Quadratic),
            other => Err(format!("unknown weighting {other:?}")),
        }
    }
}

fn check_lengths<T>(a: &[T], b: &[T]) -> Result<usize, KappaError> {
    if a.len() != b.len() {
        return Err(KappaError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(KappaError::Empty);
    }
    Ok(a.len())
}

/// Unweighted kappa over any label type. When both raters used one and the
/// same label throughout (`p_e = 1`) the result is 1.
pub fn cohen_kappa_nominal<L: Ord>(a: &[L], b: &[L]) -> Result<AgreementStats, KappaError> {
    let n = check_lengths(a, b)?;
    let mut marginals: BTreeMap<&L, (u64, u64)> = BTreeMap::new();
    let mut agree = 0u64;
    for (x, y) in a.iter().zip(b) {
        marginals.entry(x).or_default().0 += 1;
        marginals.entry(y).or_default().1 += 1;
        agree += u64::from(x == y);
    }
    let n = n as u64;
    let expected: u64 = marginals.values().map(|(ca, cb)| ca * cb).sum();
    let p_o = agree as f64 / n as f64;
    let p_e = expected as f64 / (n * n) as f64;
    let kappa = if expected == n * n {
        1.0
    } else {
        (p_o - p_e) / (1.0 - p_e)
    };
    Ok(AgreementStats { p_o, p_e, kappa })
}

/// Kappa on 1..=5 ratings. `Weighting::None` is exactly
/// [`cohen_kappa_nominal`]; otherwise `p_o` and `p_e` are the weighted
/// agreement fractions `1 - Σw·O` and `1 - Σw·E`.
pub fn cohen_kappa_weighted(a: &[u8], b: &[u8], weighting: Weighting) -> Result<AgreementStats, KappaError> {
    let n = check_lengths(a, b)?;
    if let Some(&label) = a.iter().chain(b).find(|l| !(1..=5).contains(*l)) {
        return Err(KappaError::LabelOutOfRange { label });
    }
    if weighting == Weighting::None {
        return cohen_kappa_nominal(a, b);
    }
    let mut ma = [0u64; 5];
    let mut mb = [0u64; 5];
    let mut observed = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        ma[x as usize - 1] += 1;
        mb[y as usize - 1] += 1;
        observed += weighting.weight(x, y);
    }
    let n = n as f64;
    let observed = observed / n;
    let mut expected = 0.0;
    for i in 1..=5u8 {
        for j in 1..=5u8 {
            expected += weighting.weight(i, j) * (ma[i as usize - 1] as f64 / n) * (mb[j as usize - 1] as f64 / n);
        }
    }
    let kappa = if expected == 0.0 { 1.0 } else { 1.0 - observed / expected };
    Ok(AgreementStats {
        p_o: 1.0 - observed,
        p_e: 1.0 - expected,
        kappa,
    })
}

/// Landis–Koch strength-of-agreement label.
pub fn interpret_kappa(k: f64) -> &'static str {
    if k < 0.0 {
        "Poor"
    } else if k <= 0.20 {
        "Slight"
    } else if k <= 0.40 {
        "Fair"
    } else if k <= 0.60 {
        "Moderate"
    } else if k <= 0.80 {
        "Substantial"
    } else {
        "Almost Perfect"
    }
}
