//! AdaBoost over threshold classifiers built on per-model scores.
//!
//! Every model in a pool contributes one candidate weak classifier: a
//! threshold ("stump") on that model's LLPO score, re-fitted against the
//! current sample weights each round. A model is used at most once. Round
//! `t` picks the unused model whose best stump has the lowest weighted error
//! `eps_t`, gives it weight `alpha_t = ln((1 - eps_t) / eps_t) / 2`, and
//! re-weights the samples so that the chosen classifier is exactly a coin
//! flip under the new weights.
//!
//! AdaBoost is greedy but not a hill climb: training accuracy of the partial
//! ensemble can drop from one round to the next. The ensemble therefore
//! remembers the most accurate prefix and scores with that.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{check_labels, midpoint};

/// Smallest error used when computing `alpha`.
pub const EPSILON_FLOOR: f64 = 1e-10;

/// Errors closer than this count as tied. Weighted errors are differences
/// of cumulative sums, so exact ties can come out a few ulps apart.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// A thresholded score.
///
/// Predicts `+1` iff `polarity * (score - threshold) >= 0`, i.e.
/// `score >= threshold` for polarity `+1` and `score <= threshold` for `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakClassifier {
    pub model_index: usize,
    pub threshold: f64,
    pub polarity: i8,
}

impl WeakClassifier {
    #[inline]
    pub fn predict(&self, score: f64) -> i8 {
        let positive = if self.polarity >= 0 {
            score >= self.threshold
        } else {
            score <= self.threshold
        };
        if positive {
            1
        } else {
            -1
        }
    }
}

/// Non-negative sample weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleWeights(Vec<f64>);

impl SampleWeights {
    pub fn uniform(n: usize) -> Self {
        SampleWeights(vec![1.0 / n as f64; n])
    }

    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("sample weights must be finite and non-negative"));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("sample weights sum to {s}, not 1")));
        }
        Ok(SampleWeights(weights))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn renormalize(&mut self) {
        let s: f64 = self.0.iter().sum();
        self.0.iter_mut().for_each(|w| *w /= s);
    }
}

/// Best threshold/polarity for one score vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub threshold: f64,
    pub polarity: i8,
    pub error: f64,
}

/// Minimum weighted 0-1 error stump over all candidate cuts.
///
/// Candidate thresholds are `-inf`, the midpoints between consecutive
/// distinct scores, and `+inf`, each with both polarities. Ties go to the
/// smaller threshold, then to polarity `+1`.
pub fn fit_stump(scores: &[f64], labels: &[i8], weights: &SampleWeights) -> Result<Stump> {
    check_labels(scores, labels)?;
    if scores.is_empty() {
        return Err(Error::invalid("cannot fit a stump to zero samples"));
    }
    if weights.len() != scores.len() {
        return Err(Error::invalid("weights and scores differ in length"));
    }
    Ok(SortedScores::new(scores).fit(labels, weights.as_slice()))
}

/// Score vector sorted once so each refit is linear in the sample count.
struct SortedScores {
    order: Vec<usize>,
    /// Distinct values, ascending, with the exclusive end of each group in `order`.
    groups: Vec<(f64, usize)>,
}

impl SortedScores {
    fn new(scores: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
        let mut groups: Vec<(f64, usize)> = Vec::new();
        for (k, &i) in order.iter().enumerate() {
            match groups.last_mut() {
                Some((v, end)) if *v == scores[i] => *end = k + 1,
                _ => groups.push((scores[i], k + 1)),
            }
        }
        SortedScores { order, groups }
    }

    fn fit(&self, labels: &[i8], weights: &[f64]) -> Stump {
        let (mut pos_total, mut neg_total) = (0.0, 0.0);
        for (&l, &w) in labels.iter().zip(weights) {
            if l == 1 {
                pos_total += w;
            } else {
                neg_total += w;
            }
        }
        // Positive and negative weight at or below each group.
        let mut cum = Vec::with_capacity(self.groups.len());
        let (mut p, mut q, mut start) = (0.0, 0.0, 0);
        for &(_, end) in &self.groups {
            for &i in &self.order[start..end] {
                if labels[i] == 1 {
                    p += weights[i];
                } else {
                    q += weights[i];
                }
            }
            cum.push((p, q));
            start = end;
        }
        // Errors when the "at or above" set starts after `below` = (pos, neg) weight.
        let err_upper = |below: (f64, f64)| below.0 + (neg_total - below.1);
        let err_lower = |below: (f64, f64)| below.1 + (pos_total - below.0);

        let first = self.groups[0].0;
        let last = self.groups[self.groups.len() - 1].0;
        let mut best = Stump {
            threshold: f64::NEG_INFINITY,
            polarity: 1,
            error: err_upper((0.0, 0.0)),
        };
        let mut consider = |threshold: f64, polarity: i8, error: f64| {
            if error < best.error - TIE_TOLERANCE {
                best = Stump {
                    threshold,
                    polarity,
                    error,
                };
            }
        };
        // -inf with polarity -1 selects only -inf scores.
        let sentinel = if first == f64::NEG_INFINITY { cum[0] } else { (0.0, 0.0) };
        consider(f64::NEG_INFINITY, -1, err_lower(sentinel));
        for g in 0..self.groups.len() - 1 {
            let threshold = midpoint(self.groups[g].0, self.groups[g + 1].0);
            consider(threshold, 1, err_upper(cum[g]));
            consider(threshold, -1, err_lower(cum[g]));
        }
        let top = if last == f64::INFINITY && self.groups.len() > 1 {
            cum[cum.len() - 2]
        } else if last == f64::INFINITY {
            (0.0, 0.0)
        } else {
            (pos_total, neg_total)
        };
        consider(f64::INFINITY, 1, err_upper(top));
        consider(f64::INFINITY, -1, err_lower((pos_total, neg_total)));
        best
    }
}

/// One round of boosting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub alpha: f64,
    /// Weighted error of the classifier when it was selected (unclamped).
    pub epsilon: f64,
    pub classifier: WeakClassifier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedEnsemble {
    pub stages: Vec<Stage>,
    /// Training accuracy of the first `t + 1` stages.
    pub accuracy_history: Vec<f64>,
    /// Number of leading stages used for scoring; the earliest prefix with
    /// the highest training accuracy, or 0 when no stage was selected.
    pub best_prefix: usize,
    /// Training accuracy of the empty ensemble, which labels everything `+1`.
    pub base_accuracy: f64,
}

impl BoostedEnsemble {
    /// Training accuracy of the selected prefix.
    pub fn best_accuracy(&self) -> f64 {
        match self.best_prefix {
            0 => self.base_accuracy,
            p => self.accuracy_history[p - 1],
        }
    }

    /// Models the selected prefix reads scores from.
    pub fn models_used(&self) -> Vec<usize> {
        self.stages[..self.best_prefix]
            .iter()
            .map(|s| s.classifier.model_index)
            .collect()
    }

    /// `sum alpha_t * h_t` over the first `prefix` stages.
    pub fn margin_with_prefix(&self, scores: &[f64], prefix: usize) -> Result<f64> {
        let stages = self
            .stages
            .get(..prefix)
            .ok_or_else(|| Error::invalid("prefix longer than the ensemble"))?;
        stages.iter().try_fold(0.0, |acc, s| {
            let score = scores.get(s.classifier.model_index).ok_or_else(|| {
                Error::invalid(format!(
                    "no score for model {} (got {} scores)",
                    s.classifier.model_index,
                    scores.len()
                ))
            })?;
            Ok(acc + s.alpha * f64::from(s.classifier.predict(*score)))
        })
    }

    pub fn predict(&self, scores: &[f64]) -> Result<i8> {
        boosted_margin(self, scores).map(sign)
    }
}

/// Ensemble margin of one sample given its score under every pool model.
/// Positive margins classify as `+1`; the value itself ranks samples for ROC.
pub fn boosted_margin(ensemble: &BoostedEnsemble, scores: &[f64]) -> Result<f64> {
    ensemble.margin_with_prefix(scores, ensemble.best_prefix)
}

#[inline]
fn sign(margin: f64) -> i8 {
    if margin >= 0.0 {
        1
    } else {
        -1
    }
}

/// Runs AdaBoost on `pool_scores[model][sample]`.
pub fn adaboost_train(
    pool_scores: &[Vec<f64>],
    labels: &[i8],
    max_rounds: usize,
) -> Result<BoostedEnsemble> {
    adaboost_observe(pool_scores, labels, max_rounds, |_, _| {})
}

/// As [`adaboost_train`], calling `observer(stage, weights)` with the sample
/// weights right after each re-weighting.
pub fn adaboost_observe(
    pool_scores: &[Vec<f64>],
    labels: &[i8],
    max_rounds: usize,
    mut observer: impl FnMut(&Stage, &SampleWeights),
) -> Result<BoostedEnsemble> {
    if pool_scores.is_empty() {
        return Err(Error::invalid("boosting needs at least one model"));
    }
    if max_rounds == 0 {
        return Err(Error::invalid("max_rounds must be at least 1"));
    }
    let n = labels.len();
    for row in pool_scores {
        check_labels(row, labels)?;
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    if n_pos == 0 || n_pos == n {
        return Err(Error::invalid("boosting needs both positive and negative labels"));
    }

    let sorted: Vec<SortedScores> = pool_scores.par_iter().map(|s| SortedScores::new(s)).collect();
    let mut weights = SampleWeights::uniform(n);
    let mut used = vec![false; pool_scores.len()];
    let mut margins = vec![0.0; n];
    let mut ensemble = BoostedEnsemble {
        stages: Vec::new(),
        accuracy_history: Vec::new(),
        best_prefix: 0,
        base_accuracy: n_pos as f64 / n as f64,
    };

    for _ in 0..max_rounds {
        let w = weights.as_slice();
        let fits: Vec<(usize, Stump)> = (0..pool_scores.len())
            .into_par_iter()
            .filter(|&r| !used[r])
            .map(|r| (r, sorted[r].fit(labels, w)))
            .collect();
        // Sequential scan keeps the lowest model index on ties.
        let Some(&(model, stump)) = fits
            .iter()
            .reduce(|best, c| if c.1.error < best.1.error - TIE_TOLERANCE { c } else { best })
        else {
            break;
        };
        let classifier = WeakClassifier {
            model_index: model,
            threshold: stump.threshold,
            polarity: stump.polarity,
        };
        let predictions: Vec<i8> = pool_scores[model]
            .iter()
            .map(|&s| classifier.predict(s))
            .collect();
        let epsilon: f64 = predictions
            .iter()
            .zip(labels)
            .zip(w)
            .filter(|((h, y), _)| h != y)
            .map(|(_, w)| w)
            .sum();
        if epsilon >= 0.5 {
            break;
        }
        let clamped = epsilon.clamp(EPSILON_FLOOR, 1.0 - EPSILON_FLOOR);
        let alpha = 0.5 * ((1.0 - clamped) / clamped).ln();

        for ((wi, &h), &y) in weights.0.iter_mut().zip(&predictions).zip(labels) {
            *wi *= (-alpha * f64::from(h) * f64::from(y)).exp();
        }
        weights.renormalize();

        let mut correct = 0;
        for ((m, &h), &y) in margins.iter_mut().zip(&predictions).zip(labels) {
            *m += alpha * f64::from(h);
            if sign(*m) == y {
                correct += 1;
            }
        }
        let stage = Stage {
            alpha,
            epsilon,
            classifier,
        };
        used[model] = true;
        ensemble.stages.push(stage);
        ensemble.accuracy_history.push(correct as f64 / n as f64);
        observer(&stage, &weights);
        if epsilon < EPSILON_FLOOR {
            // A perfect classifier dominates every later stage.
            break;
        }
    }

    ensemble.best_prefix = ensemble
        .accuracy_history
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &a)| match best {
            Some((_, b)) if a <= b => best,
            _ => Some((i, a)),
        })
        .map_or(0, |(i, _)| i + 1);
    Ok(ensemble)
}
