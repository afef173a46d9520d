//! Accuracy, ROC curves, AUC and stratified cross-validation folds.
//!
//! Labels are `+1` (positive, malware) and `-1` (negative, benign), and a
//! higher score always means "more positive". Scores may be `-inf` (the
//! sentinel for a zero-probability sequence); such scores rank below every
//! finite score. `NaN` scores are rejected.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Counts of a binary confusion matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn accuracy(&self) -> Result<f64> {
        accuracy(self.tp, self.tn, self.fp, self.fn_)
    }

    pub fn tpr(&self) -> Option<f64> {
        let p = self.tp + self.fn_;
        (p > 0).then(|| self.tp as f64 / p as f64)
    }

    pub fn fpr(&self) -> Option<f64> {
        let n = self.fp + self.tn;
        (n > 0).then(|| self.fp as f64 / n as f64)
    }
}

/// `(TP + TN) / (TP + TN + FP + FN)`.
pub fn accuracy(tp: u64, tn: u64, fp: u64, fn_: u64) -> Result<f64> {
    let total = tp + tn + fp + fn_;
    if total == 0 {
        return Err(Error::invalid("accuracy of an empty confusion matrix"));
    }
    Ok((tp + tn) as f64 / total as f64)
}

/// Scores paired with `±1` labels.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LabeledScores {
    scores: Vec<f64>,
    labels: Vec<i8>,
}

impl LabeledScores {
    pub fn new(scores: Vec<f64>, labels: Vec<i8>) -> Result<Self> {
        check_labels(&scores, &labels)?;
        Ok(LabeledScores { scores, labels })
    }

    /// Convenience constructor from separate positive and negative scores.
    pub fn from_classes(positive: &[f64], negative: &[f64]) -> Result<Self> {
        let scores = positive.iter().chain(negative).copied().collect();
        let labels = std::iter::repeat(1)
            .take(positive.len())
            .chain(std::iter::repeat(-1).take(negative.len()))
            .collect();
        LabeledScores::new(scores, labels)
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    /// Confusion matrix of the rule "positive iff score >= threshold".
    pub fn confusion_at(&self, threshold: f64) -> Confusion {
        let mut c = Confusion::default();
        for (&s, &l) in self.scores.iter().zip(&self.labels) {
            match (s >= threshold, l == 1) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    /// Indices sorted by descending score.
    fn descending(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        idx
    }
}

pub(crate) fn check_labels(scores: &[f64], labels: &[i8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(l) = labels.iter().find(|&&l| l != 1 && l != -1) {
        return Err(Error::invalid(format!("label {l} is not +1 or -1")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores must not be NaN"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Samples scoring at or above this value are classified positive.
    #[serde(with = "float_or_inf")]
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// From `threshold = +inf` at `(0, 0)` down to the lowest score at `(1, 1)`.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// JSON has no infinities, so `±inf` thresholds travel as the strings
/// `"inf"` and `"-inf"`.
mod float_or_inf {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_infinite() {
            s.serialize_str(if *x > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*x)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                _ => Err(de::Error::custom(format!("bad threshold {t:?}"))),
            },
        }
    }
}

/// ROC curve over every distinct score, with trapezoidal AUC.
///
/// Samples with equal scores switch class together, which draws a diagonal
/// segment; the trapezoid over that segment counts each tied
/// positive/negative pair as one half, so the area equals the Mann-Whitney
/// statistic exactly. The area is accumulated in integers and divided once.
pub fn roc(data: &LabeledScores) -> Result<RocCurve> {
    let (n_pos, n_neg) = (data.positives() as u64, data.negatives() as u64);
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::invalid(
            "ROC needs at least one positive and one negative sample",
        ));
    }
    let order = data.descending();
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut twice_area: u128 = 0;
    let mut k = 0;
    while k < order.len() {
        let score = data.scores[order[k]];
        let (tp0, fp0) = (tp, fp);
        while k < order.len() && data.scores[order[k]] == score {
            if data.labels[order[k]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        twice_area += u128::from(fp - fp0) * u128::from(tp + tp0);
        points.push(RocPoint {
            threshold: score,
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
        });
    }
    let auc = twice_area as f64 / (2 * u128::from(n_pos) * u128::from(n_neg)) as f64;
    Ok(RocCurve { points, auc })
}

/// Area under the ROC curve of `data`.
pub fn auc(data: &LabeledScores) -> Result<f64> {
    roc(data).map(|c| c.auc)
}

/// AUC after flipping the classifier's decision: `1 - auc`.
pub fn auc_reverse(auc: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&auc) {
        return Err(Error::invalid(format!("AUC {auc} is outside [0, 1]")));
    }
    Ok(1.0 - auc)
}

/// A value strictly between two distinct ordered scores, finite whenever
/// `hi` is finite.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    debug_assert!(lo < hi);
    if lo == f64::NEG_INFINITY {
        hi - 1.0 - hi.abs()
    } else {
        let m = lo / 2.0 + hi / 2.0;
        if m > lo && m < hi {
            m
        } else {
            hi
        }
    }
}

/// Threshold maximizing the accuracy of "positive iff score >= threshold".
///
/// Candidates are `-inf`, the midpoints between consecutive distinct scores
/// and `+inf`; the smallest maximizing threshold wins ties.
pub fn best_threshold(data: &LabeledScores) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("cannot pick a threshold without samples"));
    }
    let mut order = data.descending();
    order.reverse();
    // Everything positive at -inf: correct = positives.
    let mut correct = data.positives() as i64;
    let mut best = (correct, f64::NEG_INFINITY);
    let mut k = 0;
    while k < order.len() {
        let score = data.scores[order[k]];
        while k < order.len() && data.scores[order[k]] == score {
            // Moving this sample below the threshold flips its prediction.
            correct += if data.labels[order[k]] == 1 { -1 } else { 1 };
            k += 1;
        }
        let threshold = match order.get(k) {
            Some(&next) => midpoint(score, data.scores[next]),
            None => f64::INFINITY,
        };
        if correct > best.0 {
            best = (correct, threshold);
        }
    }
    Ok(best.1)
}

/// Stratified assignment of samples to `k` folds.
///
/// Positive sample `i` belongs to fold `positive[i]`, likewise for negatives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
}

impl FoldPlan {
    pub fn test_positive(&self, fold: usize) -> Vec<usize> {
        members(&self.positive, |f| f == fold)
    }

    pub fn train_positive(&self, fold: usize) -> Vec<usize> {
        members(&self.positive, |f| f != fold)
    }

    pub fn test_negative(&self, fold: usize) -> Vec<usize> {
        members(&self.negative, |f| f == fold)
    }

    pub fn train_negative(&self, fold: usize) -> Vec<usize> {
        members(&self.negative, |f| f != fold)
    }
}

fn members(assign: &[usize], keep: impl Fn(usize) -> bool) -> Vec<usize> {
    assign
        .iter()
        .enumerate()
        .filter(|(_, &f)| keep(f))
        .map(|(i, _)| i)
        .collect()
}

/// Stratified `k`-fold plan: each class is shuffled and dealt round-robin.
pub fn make_folds(n_pos: usize, n_neg: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::invalid(format!("fold count must be at least 2, got {k}")));
    }
    for (name, n) in [("positive", n_pos), ("negative", n_neg)] {
        if n < k {
            return Err(Error::invalid(format!(
                "{name} class has {n} samples, fewer than the {k} folds"
            )));
        }
    }
    let deal = |n: usize, tag: &str| {
        let mut rng = seed::rng(seed::derive_named(seed, tag));
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let mut assign = vec![0; n];
        for (pos, &i) in idx.iter().enumerate() {
            assign[i] = pos % k;
        }
        assign
    };
    Ok(FoldPlan {
        k,
        seed,
        positive: deal(n_pos, "positive"),
        negative: deal(n_neg, "negative"),
    })
}
