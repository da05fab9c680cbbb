//! Accuracy, F-measure, detection rate and rank-based AUC.

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// `tp / (tp + fn)`, 0 when there are no positives.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 { 0.0 } else { num as f64 / den as f64 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// `None` when only one class is present.
    #[serde(serialize_with = "serialize_auc")]
    pub auc: Option<f64>,
    pub f_measure: f64,
    pub detection_rate: f64,
    pub confusion: Confusion,
}

fn serialize_auc<S: Serializer>(auc: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match auc {
        Some(v) => s.serialize_f64(*v),
        None => s.serialize_str("undefined"),
    }
}

pub fn compute_metrics(truth: &[bool], predicted: &[bool], scores: &[f64]) -> Result<Metrics> {
    if truth.len() != predicted.len() || truth.len() != scores.len() {
        return Err(Error::Metric(format!(
            "length mismatch: {} truths, {} predictions, {} scores",
            truth.len(),
            predicted.len(),
            scores.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Metric("metrics need at least one sample".into()));
    }
    let mut c = Confusion::default();
    for (&t, &p) in truth.iter().zip(predicted) {
        match (t, p) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    let precision = c.precision();
    let recall = c.recall();
    let f_measure = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(Metrics {
        accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
        auc: auc(truth, scores)?,
        f_measure,
        detection_rate: recall,
        confusion: c,
    })
}

/// AUC as the exact fraction `numerator / denominator`, from the
/// Mann-Whitney statistic with average ranks for ties. Both terms are
/// doubled so that half-ranks stay integral: `denominator = 2 * n_pos * n_neg`.
pub fn auc_fraction(truth: &[bool], scores: &[f64]) -> Result<Option<(u64, u64)>> {
    if truth.len() != scores.len() {
        return Err(Error::Metric(format!("{} truths but {} scores", truth.len(), scores.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Metric("AUC is undefined for NaN scores".into()));
    }
    let n_pos = truth.iter().filter(|&&t| t).count() as u64;
    let n_neg = truth.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of doubled 1-based ranks of the positives.
    let mut doubled_rank_sum = 0u64;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // Positions start+1 ..= end share the rank (start + 1 + end) / 2.
        let doubled_rank = (start + 1 + end) as u64;
        let positives_in_run = order[start..end].iter().filter(|&&i| truth[i]).count() as u64;
        doubled_rank_sum += doubled_rank * positives_in_run;
        start = end;
    }
    let numerator = doubled_rank_sum - n_pos * (n_pos + 1);
    Ok(Some((numerator, 2 * n_pos * n_neg)))
}

pub fn auc(truth: &[bool], scores: &[f64]) -> Result<Option<f64>> {
    Ok(auc_fraction(truth, scores)?.map(|(num, den)| num as f64 / den as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Counts, over all (positive, negative) pairs, 2 per win and 1 per tie.
    fn pairwise_oracle(truth: &[bool], scores: &[f64]) -> Option<(u64, u64)> {
        let mut num = 0u64;
        let mut pairs = 0u64;
        for (i, &ti) in truth.iter().enumerate() {
            for (j, &tj) in truth.iter().enumerate() {
                if ti && !tj {
                    pairs += 1;
                    num += match scores[i].partial_cmp(&scores[j]).unwrap() {
                        std::cmp::Ordering::Greater => 2,
                        std::cmp::Ordering::Equal => 1,
                        std::cmp::Ordering::Less => 0,
                    };
                }
            }
        }
        (pairs > 0).then_some((num, 2 * pairs))
    }

    #[test]
    fn auc_examples() {
        let t = [true, true, false, false];
        assert_eq!(auc(&t, &[0.9, 0.8, 0.2, 0.1]).unwrap(), Some(1.0));
        assert_eq!(auc(&[true, false], &[0.3, 0.7]).unwrap(), Some(0.0));
        assert_eq!(auc(&t, &[0.5; 4]).unwrap(), Some(0.5));
        assert_eq!(auc(&[true, true], &[0.1, 0.2]).unwrap(), None);
    }

    #[test]
    fn auc_matches_pairwise_with_ties() {
        let t = [true, false, true, false, false, true];
        let s = [0.4, 0.4, 0.9, 0.1, 0.9, 0.2];
        assert_eq!(auc_fraction(&t, &s).unwrap(), pairwise_oracle(&t, &s));
    }

    #[test]
    fn metric_definitions() {
        let truth = [true, true, false, false, true];
        let pred = [true, false, false, true, true];
        let m = compute_metrics(&truth, &pred, &[0.9, 0.3, 0.2, 0.6, 0.7]).unwrap();
        assert_eq!(m.confusion, Confusion { tp: 2, fp: 1, tn: 1, fn_: 1 });
        assert!((m.accuracy - 0.6).abs() < 1e-12);
        assert!((m.detection_rate - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.f_measure - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn f_measure_zero_when_nothing_predicted() {
        let m = compute_metrics(&[true, false], &[false, false], &[0.1, 0.2]).unwrap();
        assert_eq!(m.f_measure, 0.0);
        assert_eq!(m.detection_rate, 0.0);
    }

    #[test]
    fn errors() {
        assert!(compute_metrics(&[true], &[true, false], &[0.1]).is_err());
        assert!(compute_metrics(&[], &[], &[]).is_err());
        let m = compute_metrics(&[true, true], &[true, false], &[0.9, 0.1]).unwrap();
        assert_eq!(m.auc, None);
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"auc\":\"undefined\""));
    }
}
