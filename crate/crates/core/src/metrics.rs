//! Scores computed from persisted sample records.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::MetricsError;
use crate::harness::SampleRecord;

/// Fraction of records whose prediction equals the truth. Unparsed
/// predictions count as wrong.
pub fn accuracy(records: &[SampleRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(records.iter().filter(|r| r.is_correct()).count() as f64 / records.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of records whose true label is this class.
    pub support: usize,
}

/// Per-class precision, recall and F1 in `classes` order.
///
/// An undefined ratio (no predictions or no support) is 0. Unparsed
/// predictions match no class.
pub fn per_class_scores(records: &[SampleRecord], classes: &[String]) -> Vec<ClassScore> {
    classes
        .iter()
        .map(|c| {
            let tp = records.iter().filter(|r| &r.true_label == c && r.predicted.as_ref() == Some(c)).count();
            let predicted = records.iter().filter(|r| r.predicted.as_ref() == Some(c)).count();
            let support = records.iter().filter(|r| &r.true_label == c).count();
            let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
            // 2tp / (2tp + fp + fn) avoids dividing by a zero precision.
            let f1 = ratio(2 * tp, predicted + support);
            ClassScore { class: c.clone(), precision: ratio(tp, predicted), recall: ratio(tp, support), f1, support }
        })
        .collect()
}

/// Unweighted mean of per-class F1 over `classes`; a class absent from both
/// truth and predictions contributes 0.
pub fn macro_f1(records: &[SampleRecord], classes: &[String]) -> Result<f64, MetricsError> {
    if records.is_empty() || classes.is_empty() {
        return Err(MetricsError::Empty);
    }
    let scores = per_class_scores(records, classes);
    Ok(scores.iter().map(|s| s.f1).sum::<f64>() / scores.len() as f64)
}

/// Agreement with the nearest neighbor's label crossed with correctness.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConsistencyTable {
    pub agree_correct: usize,
    pub agree_incorrect: usize,
    pub disagree_correct: usize,
    pub disagree_incorrect: usize,
}

impl ConsistencyTable {
    pub fn total(&self) -> usize {
        self.agree_correct + self.agree_incorrect + self.disagree_correct + self.disagree_incorrect
    }

    /// Share of correct predictions among those agreeing with the neighbor.
    pub fn agree_accuracy(&self) -> Option<f64> {
        row_rate(self.agree_correct, self.agree_incorrect)
    }

    pub fn disagree_accuracy(&self) -> Option<f64> {
        row_rate(self.disagree_correct, self.disagree_incorrect)
    }
}

fn row_rate(correct: usize, incorrect: usize) -> Option<f64> {
    let n = correct + incorrect;
    (n > 0).then(|| correct as f64 / n as f64)
}

/// Unparsed predictions land in the disagree/incorrect cell.
pub fn consistency_breakdown(records: &[SampleRecord]) -> ConsistencyTable {
    let mut t = ConsistencyTable::default();
    for r in records {
        let agree = r.predicted.as_deref() == Some(r.nn_label.as_str());
        match (agree, r.is_correct()) {
            (true, true) => t.agree_correct += 1,
            (true, false) => t.agree_incorrect += 1,
            (false, true) => t.disagree_correct += 1,
            (false, false) => t.disagree_incorrect += 1,
        }
    }
    t
}

/// Mean rank of each method across datasets, rank 1 being the highest
/// accuracy. Tied methods share the average of the ranks they span.
pub fn mean_ranks(accuracies: &BTreeMap<String, Vec<f64>>) -> Result<BTreeMap<String, f64>, MetricsError> {
    let n_datasets = accuracies.values().next().map(Vec::len).ok_or(MetricsError::Empty)?;
    if n_datasets == 0 {
        return Err(MetricsError::Empty);
    }
    for (method, accs) in accuracies {
        if accs.len() != n_datasets {
            return Err(MetricsError::RaggedCoverage { method: method.clone(), got: accs.len(), expected: n_datasets });
        }
    }
    let methods: Vec<&String> = accuracies.keys().collect();
    let mut sums = vec![0.0; methods.len()];
    for d in 0..n_datasets {
        let accs: Vec<f64> = methods.iter().map(|m| accuracies[*m][d]).collect();
        for (i, a) in accs.iter().enumerate() {
            let better = accs.iter().filter(|b| *b > a).count();
            let tied = accs.iter().filter(|b| *b == a).count();
            // Ranks better+1 ..= better+tied, averaged.
            sums[i] += better as f64 + (tied as f64 + 1.0) / 2.0;
        }
    }
    Ok(methods.into_iter().zip(sums).map(|(m, s)| (m.clone(), s / n_datasets as f64)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(truth: &str, pred: Option<&str>, nn: &str) -> SampleRecord {
        SampleRecord::bare(0, truth, pred, nn)
    }

    fn classes() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    #[test]
    fn all_one_class_macro_f1() {
        let mut records: Vec<_> = (0..50).map(|_| rec("a", Some("a"), "a")).collect();
        records.extend((0..50).map(|_| rec("b", Some("a"), "a")));
        let f1 = macro_f1(&records, &classes()).unwrap();
        assert!((f1 - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(accuracy(&records).unwrap(), 0.5);
    }

    #[test]
    fn perfect_and_unparsed() {
        let perfect = vec![rec("a", Some("a"), "a"), rec("b", Some("b"), "b")];
        assert_eq!(macro_f1(&perfect, &classes()).unwrap(), 1.0);
        let with_unparsed = vec![rec("a", None, "a"), rec("b", Some("b"), "b")];
        assert_eq!(accuracy(&with_unparsed).unwrap(), 0.5);
        let s = per_class_scores(&with_unparsed, &classes());
        assert_eq!((s[0].precision, s[0].recall, s[0].f1), (0.0, 0.0, 0.0));
        assert_eq!(accuracy(&[]), Err(MetricsError::Empty));
    }

    #[test]
    fn consistency_fixture() {
        let mut records: Vec<_> = (0..3).map(|_| rec("a", Some("a"), "a")).collect();
        records.push(rec("a", Some("a"), "b"));
        records.push(rec("a", Some("b"), "a"));
        let t = consistency_breakdown(&records);
        assert_eq!((t.agree_correct, t.agree_incorrect), (3, 0));
        assert_eq!((t.disagree_correct, t.disagree_incorrect), (1, 1));
        assert_eq!(t.total(), 5);
        assert_eq!(t.disagree_accuracy(), Some(0.5));
    }

    #[test]
    fn ranks_with_ties() {
        let two = BTreeMap::from([("x".to_string(), vec![0.9]), ("y".to_string(), vec![0.8])]);
        assert_eq!(mean_ranks(&two).unwrap(), BTreeMap::from([("x".to_string(), 1.0), ("y".to_string(), 2.0)]));
        let tie = BTreeMap::from([("x".to_string(), vec![0.7]), ("y".to_string(), vec![0.7])]);
        assert_eq!(mean_ranks(&tie).unwrap()["x"], 1.5);
        let ragged = BTreeMap::from([("x".to_string(), vec![0.7, 0.1]), ("y".to_string(), vec![0.7])]);
        assert!(matches!(mean_ranks(&ragged), Err(MetricsError::RaggedCoverage { .. })));
    }
}
