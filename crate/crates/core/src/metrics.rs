use serde::{Deserialize, Serialize};

use crate::error::MetricError;

/// Default decision threshold on the positive-class probability.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

fn check(scores: &[f64], labels: &[u8]) -> Result<(u64, u64), MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::Length(scores.len(), labels.len()));
    }
    if scores.is_empty() {
        return Err(MetricError::Empty);
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    if let Some(&l) = labels.iter().find(|&&l| l > 1) {
        return Err(MetricError::Label(l));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricError::SingleClass);
    }
    Ok((pos, neg))
}

/// Mann–Whitney AUC from integer pair counts: `(2·concordant + tied) / (2·P·N)`.
pub fn auc_from_counts(concordant: u64, tied: u64, pos: u64, neg: u64) -> f64 {
    (2 * concordant + tied) as f64 / (2 * pos * neg) as f64
}

/// Area under the ROC curve, counting ties as half. O(n log n).
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64, MetricError> {
    let (pos, neg) = check(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut concordant, mut tied, mut neg_below) = (0u64, 0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut p, mut n) = (0u64, 0u64);
        // -0.0 and 0.0 compare equal as scores
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            match labels[order[j]] {
                1 => p += 1,
                _ => n += 1,
            }
            j += 1;
        }
        concordant += p * neg_below;
        tied += p * n;
        neg_below += n;
        i = j;
    }
    Ok(auc_from_counts(concordant, tied, pos, neg))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn from_preds(preds: &[u8], labels: &[u8]) -> Result<Self, MetricError> {
        if preds.len() != labels.len() {
            return Err(MetricError::Length(preds.len(), labels.len()));
        }
        let mut c = Self::default();
        for (&p, &l) in preds.iter().zip(labels) {
            match (p, l) {
                (1, 1) => c.tp += 1,
                (1, 0) => c.fp += 1,
                (0, 1) => c.fn_ += 1,
                (0, 0) => c.tn += 1,
                (p, l) => return Err(MetricError::Label(p.max(l))),
            }
        }
        Ok(c)
    }

    pub fn n(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// 2PR/(P+R) for the positive class; 0 when there are no true positives.
    pub fn f1(&self) -> f64 {
        if self.tp == 0 {
            return 0.0;
        }
        2.0 * self.tp as f64 / (2 * self.tp + self.fp + self.fn_) as f64
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.n().max(1) as f64
    }
}

pub fn f1_binary(preds: &[u8], labels: &[u8]) -> Result<f64, MetricError> {
    if preds.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(Confusion::from_preds(preds, labels)?.f1())
}

pub fn threshold(scores: &[f64], at: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s >= at)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub roc_auc: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub counts: Confusion,
    pub n: u64,
}

impl EvalResult {
    /// Score positive-class probabilities against labels.
    pub fn compute(scores: &[f64], labels: &[u8], at: f64) -> Result<Self, MetricError> {
        let roc_auc = roc_auc(scores, labels)?;
        let counts = Confusion::from_preds(&threshold(scores, at), labels)?;
        Ok(Self {
            roc_auc,
            f1: counts.f1(),
            accuracy: counts.accuracy(),
            counts,
            n: counts.n(),
        })
    }
}
