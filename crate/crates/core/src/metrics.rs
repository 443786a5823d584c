//! Confusion-matrix metrics, majority voting, paired permutation testing and
//! run aggregation.

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::SeededRng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
}

/// Counts indexed `[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self, MetricsError> {
        let k = counts.len();
        if let Some(row) = counts.iter().find(|r| r.len() != k) {
            return Err(MetricsError::LengthMismatch(row.len(), k));
        }
        Ok(Self { counts })
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn predicted(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum()
    }
}

pub fn confusion(y_true: &[usize], y_pred: &[usize], classes: usize) -> Result<ConfusionMatrix, MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    let mut counts = vec![vec![0u64; classes]; classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if let Some(&label) = [t, p].iter().find(|&&l| l >= classes) {
            return Err(MetricsError::Label { label, classes });
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

fn class_metrics(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    (0..cm.classes())
        .map(|c| {
            let tp = cm.counts[c][c];
            let precision = ratio(tp, cm.predicted(c));
            let recall = ratio(tp, cm.support(c));
            let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            ClassMetrics { precision, recall, f1, support: cm.support(c) }
        })
        .collect()
}

/// Support-weighted mean of per-class F1.
pub fn weighted_f1(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    let n = cm.total();
    if n == 0 {
        return Err(MetricsError::Empty("confusion matrix"));
    }
    Ok(class_metrics(cm).iter().map(|m| m.support as f64 / n as f64 * m.f1).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub wf1: f64,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
}

impl MetricsReport {
    pub fn from_confusion(cm: ConfusionMatrix) -> Result<Self, MetricsError> {
        let wf1 = weighted_f1(&cm)?;
        let correct: u64 = (0..cm.classes()).map(|c| cm.counts[c][c]).sum();
        Ok(Self { wf1, accuracy: correct as f64 / cm.total() as f64, per_class: class_metrics(&cm), confusion: cm })
    }

    pub fn compute(y_true: &[usize], y_pred: &[usize], classes: usize) -> Result<Self, MetricsError> {
        Self::from_confusion(confusion(y_true, y_pred, classes)?)
    }

    /// Fixed-width per-class table followed by the summary line.
    pub fn table(&self, class_names: &[String]) -> String {
        let mut out = format!("{:<16} {:>9} {:>9} {:>9} {:>8}\n", "class", "precision", "recall", "f1", "support");
        for (c, m) in self.per_class.iter().enumerate() {
            let name = class_names.get(c).cloned().unwrap_or_else(|| c.to_string());
            out.push_str(&format!(
                "{:<16} {:>9.4} {:>9.4} {:>9.4} {:>8}\n",
                name, m.precision, m.recall, m.f1, m.support
            ));
        }
        out.push_str(&format!("wF1[%] {:.2}  accuracy[%] {:.2}\n", 100.0 * self.wf1, 100.0 * self.accuracy));
        out
    }
}

/// Modal prediction per group, keyed in first-appearance order. Ties go to
/// the smallest class index.
pub fn majority_vote<K: std::hash::Hash + Eq + Clone>(
    groups: &[K],
    predictions: &[usize],
) -> Result<IndexMap<K, usize>, MetricsError> {
    if groups.len() != predictions.len() {
        return Err(MetricsError::LengthMismatch(groups.len(), predictions.len()));
    }
    let mut votes: IndexMap<K, Vec<u64>> = IndexMap::new();
    for (g, &p) in groups.iter().zip(predictions) {
        let tally = votes.entry(g.clone()).or_default();
        if tally.len() <= p {
            tally.resize(p + 1, 0);
        }
        tally[p] += 1;
    }
    Ok(votes
        .into_iter()
        .map(|(g, tally)| {
            let best = tally.iter().enumerate().fold(0, |best, (c, &n)| if n > tally[best] { c } else { best });
            (g, best)
        })
        .collect())
}

pub const DEFAULT_PERMUTATIONS: usize = 9999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermTestResult {
    pub observed_diff: f64,
    pub p_value: f64,
    pub n_permutations: usize,
    pub seed: u64,
}

/// Two-sided paired sign-flip test on per-window correctness.
///
/// Concordant pairs contribute nothing to any permuted difference, so only
/// discordant pairs are flipped. Each flip is one fair coin from the seeded
/// stream.
pub fn permutation_test(a: &[bool], b: &[bool], n_perm: usize, seed: u64) -> Result<PermTestResult, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricsError::Empty("correctness vectors"));
    }
    let n = a.len() as f64;
    // +1 where only a is correct, -1 where only b is
    let signs: Vec<i64> = a.iter().zip(b).filter(|(x, y)| x != y).map(|(&x, _)| if x { 1 } else { -1 }).collect();
    let observed: i64 = signs.iter().sum();
    let mut rng = SeededRng::seed_from_u64(seed);
    let mut extreme = 0usize;
    for _ in 0..n_perm {
        let s: i64 = signs.iter().map(|&d| if rng.random::<bool>() { -d } else { d }).sum();
        if s.abs() >= observed.abs() {
            extreme += 1;
        }
    }
    Ok(PermTestResult {
        observed_diff: observed as f64 / n,
        p_value: (1 + extreme) as f64 / (n_perm + 1) as f64,
        n_permutations: n_perm,
        seed,
    })
}

/// Mean and population standard deviation.
pub fn aggregate_runs(values: &[f64]) -> Result<(f64, f64), MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty("run values"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_confusion_and_wf1() {
        let cm = confusion(&[0, 0, 1, 1, 1], &[0, 1, 1, 1, 0], 2).unwrap();
        assert_eq!(cm.counts(), &[vec![1, 1], vec![1, 2]]);
        assert_eq!(weighted_f1(&cm).unwrap(), 0.6);
    }

    #[test]
    fn perfect_is_one() {
        let y = [0, 1, 2, 2, 1];
        let r = MetricsReport::compute(&y, &y, 3).unwrap();
        assert_eq!(r.wf1, 1.0);
        assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn absent_class_contributes_nothing() {
        let r = MetricsReport::compute(&[0, 1], &[0, 1], 4).unwrap();
        assert_eq!(r.wf1, 1.0);
        assert!(r.per_class.iter().all(|m| m.f1.is_finite()));
    }

    #[test]
    fn empty_inputs() {
        let cm = confusion(&[], &[], 3).unwrap();
        assert_eq!(cm.total(), 0);
        assert!(weighted_f1(&cm).is_err());
    }

    #[test]
    fn confusion_errors() {
        assert!(matches!(confusion(&[0], &[0, 1], 2), Err(MetricsError::LengthMismatch(1, 2))));
        assert!(matches!(confusion(&[0], &[2], 2), Err(MetricsError::Label { label: 2, classes: 2 })));
    }

    #[test]
    fn majority_vote_rules() {
        let v = majority_vote(&["a", "b", "b", "b", "c", "c"], &[3, 2, 2, 1, 1, 0]).unwrap();
        assert_eq!(v.into_iter().collect::<Vec<_>>(), vec![("a", 3), ("b", 2), ("c", 0)]);
        for x in 0..4 {
            for y in 0..4 {
                assert_eq!(majority_vote(&[0, 0], &[x, y]).unwrap()[&0], x.min(y));
            }
        }
    }

    #[test]
    fn identical_sequences_give_p_one() {
        let a = [true, false, true, true];
        let r = permutation_test(&a, &a, 999, 1).unwrap();
        assert_eq!(r.observed_diff, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn permutation_is_seeded() {
        let a = [true, true, false, true, true, false, true];
        let b = [false, true, true, false, false, false, true];
        assert_eq!(permutation_test(&a, &b, 500, 3).unwrap(), permutation_test(&a, &b, 500, 3).unwrap());
        assert!(permutation_test(&a, &b[..3], 10, 0).is_err());
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate_runs(&[0.8]).unwrap(), (0.8, 0.0));
        assert_eq!(aggregate_runs(&[0.0, 1.0]).unwrap(), (0.5, 0.5));
        assert!(aggregate_runs(&[]).is_err());
    }
}
