use serde::{Deserialize, Serialize};

use super::LearnError;

/// Precision, recall and F1 for one class. `None` when a denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub support: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

impl ClassMetrics {
    fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        ClassMetrics { support: tp + fn_, precision, recall, f1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub threshold: f64,
    pub positive: ClassMetrics,
    pub negative: ClassMetrics,
    pub accuracy: f64,
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`, one point per distinct score.
    pub roc_points: Vec<(f64, f64)>,
    /// Undefined when only one class is present.
    pub auc: Option<f64>,
}

impl EvalReport {
    /// Mean of the two class F1 scores, `None` if either is undefined.
    pub fn macro_f1(&self) -> Option<f64> {
        Some((self.positive.f1? + self.negative.f1?) / 2.0)
    }
}

/// Scores at or above `threshold` predict the positive class.
pub fn evaluate(scores: &[f64], y: &[bool], threshold: f64) -> Result<EvalReport, LearnError> {
    if scores.len() != y.len() {
        return Err(LearnError::LengthMismatch { features: scores.len(), labels: y.len() });
    }
    if scores.is_empty() {
        return Err(LearnError::TooFewSamples { required: 1, got: 0 });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(LearnError::InvalidParams("NaN score".into()));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&s, &label) in scores.iter().zip(y) {
        match (s >= threshold, label) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(EvalReport {
        threshold,
        positive: ClassMetrics::from_counts(tp, fp, fn_),
        negative: ClassMetrics::from_counts(tn, fn_, fp),
        accuracy: (tp + tn) as f64 / scores.len() as f64,
        roc_points: roc_points(scores, y),
        auc: auc(scores, y),
    })
}

fn roc_points(scores: &[f64], y: &[bool]) -> Vec<(f64, f64)> {
    let pos = y.iter().filter(|b| **b).count();
    let neg = y.len() - pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let rate = |c: usize, total: usize| if total == 0 { 0.0 } else { c as f64 / total as f64 };
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if y[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((rate(fp, neg), rate(tp, pos)));
    }
    if points.last() != Some(&(1.0, 1.0)) {
        points.push((1.0, 1.0));
    }
    points
}

/// Mann-Whitney statistic from midranks: the probability that a random
/// positive outscores a random negative, ties counting one half.
fn auc(scores: &[f64], y: &[bool]) -> Option<f64> {
    let pos = y.iter().filter(|b| **b).count();
    let neg = y.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j share the midrank.
        let midrank = (i + 1 + j) as f64 / 2.0;
        rank_sum += midrank * order[i..j].iter().filter(|&&k| y[k]).count() as f64;
        i = j;
    }
    let (p, n) = (pos as f64, neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_auc(s: &[f64], y: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if y[i] && !y[j] {
                    den += 1.0;
                    num += if s[i] > s[j] {
                        1.0
                    } else if s[i] == s[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn counts_fixture() {
        // tp=3, fp=1, fn=2, tn=2
        let s = [0.9, 0.8, 0.7, 0.6, 0.4, 0.3, 0.2, 0.1];
        let y = [true, true, true, false, true, true, false, false];
        let r = evaluate(&s, &y, 0.5).unwrap();
        assert_eq!(r.positive.precision, Some(0.75));
        assert_eq!(r.positive.recall, Some(0.6));
        assert!((r.positive.f1.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.accuracy, 5.0 / 8.0);
        assert_eq!(r.positive.support, 5);
    }

    #[test]
    fn undefined_metrics_are_absent() {
        let r = evaluate(&[0.1, 0.2], &[true, false], 0.5).unwrap();
        assert_eq!(r.positive.precision, None);
        assert_eq!(r.positive.recall, Some(0.0));
        assert_eq!(r.positive.f1, None);
        assert_eq!(r.macro_f1(), None);
        let one_class = evaluate(&[0.1, 0.9], &[true, true], 0.5).unwrap();
        assert_eq!(one_class.auc, None);
        assert_eq!(one_class.negative.recall, None);
        assert!(evaluate(&[], &[], 0.5).is_err());
    }

    #[test]
    fn separated_scores() {
        let r = evaluate(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false], 0.5).unwrap();
        assert_eq!(r.auc, Some(1.0));
        assert_eq!(r.roc_points, vec![(0.0, 0.0), (0.0, 0.5), (0.0, 1.0), (0.5, 1.0), (1.0, 1.0)]);
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise(pairs in prop::collection::vec((0u8..6, any::<bool>()), 2..60)) {
            let s: Vec<f64> = pairs.iter().map(|p| p.0 as f64 / 5.0).collect();
            let y: Vec<bool> = pairs.iter().map(|p| p.1).collect();
            let r = evaluate(&s, &y, 0.5).unwrap();
            if y.iter().any(|b| *b) && y.iter().any(|b| !*b) {
                prop_assert!((r.auc.unwrap() - brute_auc(&s, &y)).abs() < 1e-12);
                let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
                prop_assert_eq!(evaluate(&t, &y, 0.5).unwrap().auc, r.auc);
            }
            prop_assert_eq!(r.roc_points[0], (0.0, 0.0));
            prop_assert_eq!(*r.roc_points.last().unwrap(), (1.0, 1.0));
            for w in r.roc_points.windows(2) {
                prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
            }
        }
    }
}
