//! Quantile-based classification policies that turn risk scores into
//! predicted classes.
//!
//! Selection is exact-count by default: a policy asking for the top `k` rows
//! selects exactly `k`, breaking score ties by lowest row index.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyRule {
    /// The `q` fraction of rows with the highest scores.
    TopFraction { q: f64 },
    /// Rows below the top `upper_q` fraction but within the top `lower_q` fraction.
    MiddleBand { upper_q: f64, lower_q: f64 },
}

/// How ties at a cut-off are handled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieMode {
    /// Exactly `ceil(q·n)` rows, ties broken by lowest row index.
    #[default]
    ExactCount,
    /// Every row with `score >= threshold`; the count may exceed `ceil(q·n)`.
    Threshold,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub name: String,
    pub rule: PolicyRule,
}

impl Policy {
    pub fn top_fraction(name: &str, q: f64) -> Self {
        Policy {
            name: name.into(),
            rule: PolicyRule::TopFraction { q },
        }
    }

    pub fn middle_band(name: &str, upper_q: f64, lower_q: f64) -> Self {
        Policy {
            name: name.into(),
            rule: PolicyRule::MiddleBand { upper_q, lower_q },
        }
    }

    /// Top 10%.
    pub fn p1a() -> Self {
        Policy::top_fraction("P1a", 0.10)
    }

    /// Top 25%.
    pub fn p1b() -> Self {
        Policy::top_fraction("P1b", 0.25)
    }

    /// Middle 50%: below the top 25%, within the top 75%.
    pub fn p2() -> Self {
        Policy::middle_band("P2", 0.25, 0.75)
    }

    pub fn standard() -> Vec<Policy> {
        vec![Policy::p1a(), Policy::p1b(), Policy::p2()]
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |q: f64| q > 0.0 && q < 1.0;
        match self.rule {
            PolicyRule::TopFraction { q } if ok(q) => Ok(()),
            PolicyRule::MiddleBand { upper_q, lower_q }
                if ok(upper_q) && ok(lower_q) && upper_q < lower_q =>
            {
                Ok(())
            }
            _ => Err(Error::Config(format!(
                "invalid policy {}: {:?}",
                self.name, self.rule
            ))),
        }
    }

    /// Number of positives under exact-count selection.
    pub fn positives(&self, n: usize) -> usize {
        match self.rule {
            PolicyRule::TopFraction { q } => top_count(q, n),
            PolicyRule::MiddleBand { upper_q, lower_q } => {
                top_count(lower_q, n) - top_count(upper_q, n)
            }
        }
    }
}

/// `ceil(fraction × n)`, tolerant of the rounding error in products such as
/// `0.07 × 100`.
pub fn top_count(fraction: f64, n: usize) -> usize {
    let k = (fraction * n as f64 - 1e-9).ceil();
    (k.max(0.0) as usize).min(n)
}

/// Row indices by descending score, ties by ascending index.
pub fn rank_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// The `k`-th largest score with `k = ceil(fraction × n)`, at least 1.
pub fn quantile_threshold(scores: &[f64], fraction: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Invalid("quantile of an empty score vector".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Invalid(format!(
            "fraction {fraction} outside (0, 1]"
        )));
    }
    let k = top_count(fraction, scores.len()).max(1);
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(sorted[k - 1])
}

/// Marks the top `k` rows of `order` (or the rows between two ranks).
fn mark(order: &[usize], from: usize, to: usize, n: usize) -> Vec<bool> {
    let mut out = vec![false; n];
    for &i in &order[from..to] {
        out[i] = true;
    }
    out
}

pub fn classify(scores: &[f64], policy: &Policy) -> Result<Vec<bool>> {
    classify_with(scores, policy, TieMode::ExactCount)
}

pub fn classify_with(scores: &[f64], policy: &Policy, mode: TieMode) -> Result<Vec<bool>> {
    policy.validate()?;
    let n = scores.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    match mode {
        TieMode::ExactCount => {
            let order = rank_order(scores);
            Ok(match policy.rule {
                PolicyRule::TopFraction { q } => mark(&order, 0, top_count(q, n), n),
                PolicyRule::MiddleBand { upper_q, lower_q } => {
                    mark(&order, top_count(upper_q, n), top_count(lower_q, n), n)
                }
            })
        }
        TieMode::Threshold => Ok(match policy.rule {
            PolicyRule::TopFraction { q } => {
                let t = quantile_threshold(scores, q)?;
                scores.iter().map(|&s| s >= t).collect()
            }
            PolicyRule::MiddleBand { upper_q, lower_q } => {
                let hi = quantile_threshold(scores, upper_q)?;
                let lo = quantile_threshold(scores, lower_q)?;
                scores.iter().map(|&s| s < hi && s >= lo).collect()
            }
        }),
    }
}

pub const CLASSIFICATION_HEADER: [&str; 4] = ["spell_id", "score", "policy", "y_hat"];

/// Writes `spell_id,score,policy,y_hat` rows.
pub fn write_classifications<W: Write>(
    output: W,
    spell_ids: &[String],
    scores: &[f64],
    policy: &Policy,
    y_hat: &[bool],
) -> Result<()> {
    if spell_ids.len() != scores.len() || scores.len() != y_hat.len() {
        return Err(Error::Invalid(
            "classification columns differ in length".into(),
        ));
    }
    let mut w = csv::Writer::from_writer(output);
    w.write_record(CLASSIFICATION_HEADER)?;
    for ((id, s), y) in spell_ids.iter().zip(scores).zip(y_hat) {
        w.write_record([
            id.as_str(),
            &s.to_string(),
            &policy.name,
            if *y { "1" } else { "0" },
        ])?;
    }
    w.flush()
        .map_err(|e| Error::io("<classification output>", e))?;
    Ok(())
}
