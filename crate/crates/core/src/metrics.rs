//! Classification and ranking metrics, and threshold sweeps over selection
//! fractions.
//!
//! Metrics that are undefined for the given input (no positives, one class only,
//! an empty group) return [`Metric::Undefined`] rather than a number.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fairness::{spd, ProtectedGroup};
use crate::features::ProtectedAttributes;
use crate::policy::{rank_order, top_count};

/// A metric value, or the reason it cannot be computed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Metric {
    Value(f64),
    Undefined(&'static str),
}

impl Metric {
    pub fn value(self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(v),
            Metric::Undefined(_) => None,
        }
    }

    pub fn is_defined(self) -> bool {
        matches!(self, Metric::Value(_))
    }

    /// The value; panics with the undefined reason otherwise.
    pub fn unwrap(self) -> f64 {
        match self {
            Metric::Value(v) => v,
            Metric::Undefined(why) => panic!("metric undefined: {why}"),
        }
    }

    fn ratio(num: f64, den: f64, why: &'static str) -> Metric {
        if den > 0.0 {
            Metric::Value(num / den)
        } else {
            Metric::Undefined(why)
        }
    }
}

/// Values print as numbers, undefined metrics as `NA`.
impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Value(v) => write!(f, "{v}"),
            Metric::Undefined(_) => f.write_str("NA"),
        }
    }
}

/// Values serialize as numbers, undefined metrics as `null`.
impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Metric::Value(v) => s.serialize_f64(*v),
            Metric::Undefined(_) => s.serialize_none(),
        }
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Invalid(format!("length mismatch: {a} vs {b}")));
    }
    if a == 0 {
        return Err(Error::Invalid("metric of an empty vector".into()));
    }
    Ok(())
}

fn count(v: &[bool]) -> usize {
    v.iter().filter(|&&b| b).count()
}

pub fn accuracy(y_hat: &[bool], y: &[bool]) -> Result<f64> {
    check_lengths(y_hat.len(), y.len())?;
    let hits = y_hat.iter().zip(y).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y.len() as f64)
}

/// True positives among the exact top `k` by score (ties by lowest index).
fn top_k_hits(scores: &[f64], y: &[bool], k: usize) -> Result<usize> {
    check_lengths(scores.len(), y.len())?;
    if k == 0 || k > scores.len() {
        return Err(Error::Invalid(format!(
            "k = {k} outside 1..={}",
            scores.len()
        )));
    }
    Ok(rank_order(scores)[..k].iter().filter(|&&i| y[i]).count())
}

pub fn precision_at_k(scores: &[f64], y: &[bool], k: usize) -> Result<f64> {
    Ok(top_k_hits(scores, y, k)? as f64 / k as f64)
}

pub fn recall_at_k(scores: &[f64], y: &[bool], k: usize) -> Result<Metric> {
    let hits = top_k_hits(scores, y, k)?;
    Ok(Metric::ratio(
        hits as f64,
        count(y) as f64,
        "no positive labels",
    ))
}

pub fn f1(precision: Metric, recall: Metric) -> Metric {
    match (precision, recall) {
        (Metric::Value(p), Metric::Value(r)) => Metric::Value(if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }),
        (Metric::Undefined(why), _) | (_, Metric::Undefined(why)) => Metric::Undefined(why),
    }
}

/// Probability that a random positive outranks a random negative, ties counting
/// one half; computed from mid-ranks.
pub fn roc_auc(scores: &[f64], y: &[bool]) -> Result<Metric> {
    check_lengths(scores.len(), y.len())?;
    let n_pos = count(y) as f64;
    let n_neg = y.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return Ok(Metric::Undefined("only one class present"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; the group shares the mean of ranks i+1..=j+1.
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| y[k]).count() as f64;
        i = j + 1;
    }
    Ok(Metric::Value(
        (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg),
    ))
}

/// Average precision: `Σ (R_t − R_{t−1}) · P_t` over distinct score thresholds in
/// descending order. Without ties this is the mean, over positives, of the
/// precision at each positive's rank.
pub fn pr_auc(scores: &[f64], y: &[bool]) -> Result<Metric> {
    check_lengths(scores.len(), y.len())?;
    let n_pos = count(y);
    if n_pos == 0 || n_pos == y.len() {
        return Ok(Metric::Undefined("only one class present"));
    }
    let order = rank_order(scores);
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            tp += usize::from(y[order[j]]);
            seen += 1;
            j += 1;
        }
        let recall = tp as f64 / n_pos as f64;
        ap += (recall - prev_recall) * tp as f64 / seen as f64;
        prev_recall = recall;
        i = j;
    }
    Ok(Metric::Value(ap))
}

/// Performance of one set of class predictions and the scores behind them.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerfReport {
    pub n: usize,
    /// Number of predicted positives.
    pub k: usize,
    pub accuracy: f64,
    pub precision: Metric,
    pub recall: Metric,
    pub f1: Metric,
    pub roc_auc: Metric,
    pub pr_auc: Metric,
}

impl PerfReport {
    pub fn compute(scores: &[f64], y: &[bool], y_hat: &[bool]) -> Result<Self> {
        check_lengths(scores.len(), y.len())?;
        check_lengths(y_hat.len(), y.len())?;
        let k = count(y_hat);
        let tp = y_hat.iter().zip(y).filter(|(a, b)| **a && **b).count() as f64;
        let precision = Metric::ratio(tp, k as f64, "no predicted positives");
        let recall = Metric::ratio(tp, count(y) as f64, "no positive labels");
        Ok(PerfReport {
            n: y.len(),
            k,
            accuracy: accuracy(y_hat, y)?,
            precision,
            recall,
            f1: f1(precision, recall),
            roc_auc: roc_auc(scores, y)?,
            pr_auc: pr_auc(scores, y)?,
        })
    }
}

/// One point of a threshold sweep: selecting the top `fraction` of rows.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub fraction: f64,
    /// Lowest selected score.
    pub threshold: f64,
    pub precision: f64,
    pub recall: Metric,
    pub f1: Metric,
    /// SPD per group, in [`ProtectedGroup::ALL`] order.
    pub spd: [Metric; 4],
}

/// Precision, recall, F1 and group SPDs when the top `fraction` of rows are
/// selected, for each fraction in `fractions` (each in `(0, 1]`).
pub fn threshold_sweep(
    scores: &[f64],
    y: &[bool],
    s: &[ProtectedAttributes],
    fractions: &[f64],
) -> Result<Vec<SweepRow>> {
    check_lengths(scores.len(), y.len())?;
    check_lengths(s.len(), y.len())?;
    if let Some(f) = fractions.iter().find(|&&f| !(f > 0.0 && f <= 1.0)) {
        return Err(Error::Invalid(format!("sweep fraction {f} outside (0, 1]")));
    }
    let n = scores.len();
    let order = rank_order(scores);
    let n_pos = count(y) as f64;
    let members: Vec<Vec<bool>> = ProtectedGroup::ALL
        .iter()
        .map(|g| s.iter().map(|a| g.contains(a)).collect())
        .collect();
    fractions
        .par_iter()
        .map(|&fraction| {
            let k = top_count(fraction, n).max(1);
            let mut y_hat = vec![false; n];
            for &i in &order[..k] {
                y_hat[i] = true;
            }
            let tp = order[..k].iter().filter(|&&i| y[i]).count() as f64;
            let precision = tp / k as f64;
            let recall = Metric::ratio(tp, n_pos, "no positive labels");
            let mut spds = [Metric::Undefined("not computed"); 4];
            for (slot, m) in spds.iter_mut().zip(&members) {
                *slot = spd(&y_hat, m)?;
            }
            Ok(SweepRow {
                fraction,
                threshold: scores[order[k - 1]],
                precision,
                recall,
                f1: f1(Metric::Value(precision), recall),
                spd: spds,
            })
        })
        .collect()
}

/// Evenly spaced fractions `step, 2·step, …, 1`.
pub fn fraction_grid(step: f64) -> Vec<f64> {
    let n = (1.0 / step).round() as usize;
    (1..=n).map(|i| i as f64 / n as f64).collect()
}

pub const SWEEP_HEADER: [&str; 9] = [
    "fraction",
    "threshold",
    "precision",
    "recall",
    "f1",
    "spd_female",
    "spd_nonger",
    "spd_nonger_m",
    "spd_nonger_f",
];

pub fn write_sweep<W: Write>(output: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        let mut rec = vec![
            r.fraction.to_string(),
            r.threshold.to_string(),
            r.precision.to_string(),
            r.recall.to_string(),
            r.f1.to_string(),
        ];
        rec.extend(r.spd.iter().map(Metric::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<sweep output>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        let y = [true, false, true, false];
        assert_eq!(accuracy(&y, &y).unwrap(), 1.0);
        let c: Vec<bool> = y.iter().map(|v| !v).collect();
        assert_eq!(accuracy(&c, &y).unwrap(), 0.0);
        assert_eq!(accuracy(&[true, true, true, false], &y).unwrap(), 0.75);
        assert!(accuracy(&[true], &y).is_err());
    }

    #[test]
    fn at_k_examples() {
        let s = [0.9, 0.8, 0.7, 0.6];
        let y = [true, false, true, false];
        assert_eq!(precision_at_k(&s, &y, 2).unwrap(), 0.5);
        assert_eq!(recall_at_k(&s, &y, 2).unwrap(), Metric::Value(0.5));
        assert_eq!(recall_at_k(&s, &y, 4).unwrap(), Metric::Value(1.0));
        assert!(!recall_at_k(&s, &[false; 4], 2).unwrap().is_defined());
    }

    #[test]
    fn auc_examples() {
        let y = [true, true, false, false];
        assert_eq!(
            roc_auc(&[0.9, 0.8, 0.2, 0.1], &y).unwrap(),
            Metric::Value(1.0)
        );
        assert_eq!(roc_auc(&[0.5; 4], &y).unwrap(), Metric::Value(0.5));
        assert!(!roc_auc(&[0.5; 2], &[true, true]).unwrap().is_defined());
    }

    #[test]
    fn average_precision_examples() {
        let y = [true, true, false, false];
        assert_eq!(
            pr_auc(&[0.9, 0.8, 0.2, 0.1], &y).unwrap(),
            Metric::Value(1.0)
        );
        let mut y = [false; 10];
        y[9] = true;
        let s: Vec<f64> = (0..10).map(|i| 1.0 - i as f64 / 10.0).collect();
        assert!((pr_auc(&s, &y).unwrap().unwrap() - 0.1).abs() < 1e-12);
        // Ranks 1 and 3: (1/1 + 2/3) / 2.
        let y = [true, false, true, false];
        let v = pr_auc(&[0.9, 0.8, 0.7, 0.6], &y).unwrap().unwrap();
        assert!((v - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn f1_cases() {
        assert_eq!(
            f1(Metric::Value(0.5), Metric::Value(0.5)),
            Metric::Value(0.5)
        );
        assert_eq!(
            f1(Metric::Value(0.0), Metric::Value(0.0)),
            Metric::Value(0.0)
        );
        assert!(!f1(Metric::Value(0.5), Metric::Undefined("x")).is_defined());
    }

    #[test]
    fn metric_rendering() {
        assert_eq!(Metric::Undefined("x").to_string(), "NA");
        assert_eq!(
            serde_json::to_string(&Metric::Undefined("x")).unwrap(),
            "null"
        );
        assert_eq!(serde_json::to_string(&Metric::Value(0.5)).unwrap(), "0.5");
    }

    #[test]
    fn fraction_grid_ends_at_one() {
        let g = fraction_grid(0.05);
        assert_eq!(g.len(), 20);
        assert_eq!(*g.last().unwrap(), 1.0);
    }
}
