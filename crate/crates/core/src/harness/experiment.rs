use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::report::{CellRecord, EvaluationReport, FoldRecord, FoldTiming};
use crate::boosting::adaboost_train;
use crate::error::{Error, Result};
use crate::features::{build_vocabulary, coverage_stats, encode, Dataset, OpcodeListing, BENIGN};
use crate::hmm::{score_llpo, ObservationSequence};
use crate::metrics::{auc, best_threshold, make_folds, roc, FoldPlan, LabeledScores};
use crate::morphing::{morph, MorphConfig};
use crate::restarts::{average_case_metric, best_index, train_pool, ModelPool};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Baseline,
    Morph,
    Coldstart,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Baseline => "baseline",
            ExperimentKind::Morph => "morph",
            ExperimentKind::Coldstart => "coldstart",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(ExperimentKind::Baseline),
            "morph" => Ok(ExperimentKind::Morph),
            "coldstart" => Ok(ExperimentKind::Coldstart),
            _ => Err(Error::Config(format!("unknown experiment {s:?}"))),
        }
    }
}

/// One train/test partition of a family and the benign class.
#[derive(Debug, Clone, Default)]
pub struct Split {
    pub train_malware: Vec<OpcodeListing>,
    pub test_malware: Vec<OpcodeListing>,
    pub train_benign: Vec<OpcodeListing>,
    pub test_benign: Vec<OpcodeListing>,
}

impl Split {
    fn from_indices(
        malware: &[OpcodeListing],
        benign: &[OpcodeListing],
        train_mal: &[usize],
        test_mal: &[usize],
        train_ben: &[usize],
        test_ben: &[usize],
    ) -> Self {
        let pick = |src: &[OpcodeListing], idx: &[usize]| idx.iter().map(|&i| src[i].clone()).collect();
        Split {
            train_malware: pick(malware, train_mal),
            test_malware: pick(malware, test_mal),
            train_benign: pick(benign, train_ben),
            test_benign: pick(benign, test_ben),
        }
    }

    /// Fails if any sample appears on both sides of the split.
    ///
    /// Everything that shapes a model (vocabulary, Baum-Welch, thresholds,
    /// boosting weights, morph donors) is drawn from the training side only,
    /// so disjoint ids are enough to rule out test leakage.
    pub fn audit(&self) -> Result<()> {
        let test: HashSet<(&str, &str)> = self
            .test_malware
            .iter()
            .chain(&self.test_benign)
            .map(|l| (l.family.as_str(), l.sample_id.as_str()))
            .collect();
        let leaked = self
            .train_malware
            .iter()
            .chain(&self.train_benign)
            .find(|l| test.contains(&(l.family.as_str(), l.sample_id.as_str())));
        match leaked {
            Some(l) => Err(Error::invalid(format!(
                "sample {}/{} is in both the training and test sets",
                l.family, l.sample_id
            ))),
            None => Ok(()),
        }
    }
}

/// Scores of every sample under every pool model, `[model][sample]`.
fn score_matrix(pool: &ModelPool, samples: &[ObservationSequence]) -> Result<Vec<Vec<f64>>> {
    pool.models
        .par_iter()
        .map(|m| samples.iter().map(|s| score_llpo(&m.params, s)).collect())
        .collect()
}

fn column(matrix: &[Vec<f64>], sample: usize) -> Vec<f64> {
    matrix.iter().map(|row| row[sample]).collect()
}

fn labels(n_pos: usize, n_neg: usize) -> Vec<i8> {
    let mut l = vec![1i8; n_pos];
    l.resize(n_pos + n_neg, -1);
    l
}

/// AUC on the test side and accuracy at the threshold that maximizes
/// training accuracy.
fn evaluate_scores(
    train: &[f64],
    train_labels: &[i8],
    test: &[f64],
    test_labels: &[i8],
) -> Result<(f64, f64)> {
    let theta = best_threshold(&LabeledScores::new(train.to_vec(), train_labels.to_vec())?)?;
    let test = LabeledScores::new(test.to_vec(), test_labels.to_vec())?;
    Ok((auc(&test)?, test.confusion_at(theta).accuracy()?))
}

/// Runs vocabulary, restart pool, scoring and boosting on one split.
pub fn evaluate_split(
    family: &str,
    split: &Split,
    cfg: &ExperimentConfig,
    index: usize,
    train_seed: u64,
) -> Result<(FoldRecord, FoldTiming)> {
    split.audit()?;
    for (name, side) in [
        ("training malware", &split.train_malware),
        ("test malware", &split.test_malware),
        ("training benign", &split.train_benign),
        ("test benign", &split.test_benign),
    ] {
        if side.is_empty() {
            return Err(Error::Dataset(format!("family {family}: empty {name} set")));
        }
    }

    let train_mal: Vec<&OpcodeListing> = split.train_malware.iter().collect();
    let vocab = build_vocabulary(family, &train_mal, cfg.top_k)?;
    let coverage = coverage_stats(&train_mal, &vocab)?;
    let enc = |side: &[OpcodeListing]| side.iter().map(|l| encode(l, &vocab)).collect::<Vec<_>>();
    let mut train_set = enc(&split.train_malware);
    let obs = ObservationSequence::concat(&train_set);
    train_set.extend(enc(&split.train_benign));
    let mut test_set = enc(&split.test_malware);
    test_set.extend(enc(&split.test_benign));
    let train_labels = labels(split.train_malware.len(), split.train_benign.len());
    let test_labels = labels(split.test_malware.len(), split.test_benign.len());

    let clock = Instant::now();
    let pool = train_pool(&obs, cfg.states, vocab.n_symbols(), cfg.restarts, &cfg.training(train_seed))?;
    let train_seconds = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let train_scores = score_matrix(&pool, &train_set)?;
    let test_scores = score_matrix(&pool, &test_set)?;
    let per_model = (0..pool.restart_count())
        .into_par_iter()
        .map(|r| evaluate_scores(&train_scores[r], &train_labels, &test_scores[r], &test_labels))
        .collect::<Result<Vec<_>>>()?;
    let score_seconds = clock.elapsed().as_secs_f64();
    let model_aucs: Vec<f64> = per_model.iter().map(|p| p.0).collect();
    let model_accs: Vec<f64> = per_model.iter().map(|p| p.1).collect();
    let best = best_index(&pool)?;

    let clock = Instant::now();
    let rounds = if cfg.boost_rounds == 0 { cfg.restarts } else { cfg.boost_rounds };
    let ensemble = adaboost_train(&train_scores, &train_labels, rounds)?;
    let margins = |matrix: &[Vec<f64>], n: usize| {
        (0..n)
            .map(|j| ensemble.margin_with_prefix(&column(matrix, j), ensemble.best_prefix))
            .collect::<Result<Vec<f64>>>()
    };
    let train_margins = margins(&train_scores, train_set.len())?;
    let test_margins = margins(&test_scores, test_set.len())?;
    let (boosted_auc, boosted_accuracy) =
        evaluate_scores(&train_margins, &train_labels, &test_margins, &test_labels)?;
    let boost_seconds = clock.elapsed().as_secs_f64();

    let roc_best = roc(&LabeledScores::new(test_scores[best].clone(), test_labels.clone())?)?;
    let roc_boosted = roc(&LabeledScores::new(test_margins, test_labels)?)?;

    let record = FoldRecord {
        index,
        train_seed,
        n_train_malware: split.train_malware.len(),
        n_test_malware: split.test_malware.len(),
        n_train_benign: split.train_benign.len(),
        n_test_benign: split.test_benign.len(),
        vocabulary: vocab.top_opcodes().to_vec(),
        vocabulary_short: vocab.is_short(),
        coverage_percent: coverage,
        avg_hmm_auc: average_case_metric(&model_aucs)?,
        best_restart_auc: model_aucs[best],
        boosted_auc,
        avg_hmm_accuracy: average_case_metric(&model_accs)?,
        best_restart_accuracy: model_accs[best],
        boosted_accuracy,
        best_restart_index: best,
        best_restart_log_likelihood: pool.models[best].train_log_likelihood,
        max_model_auc: model_aucs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        boosted_rounds: ensemble.stages.len(),
        boosted_prefix: ensemble.best_prefix,
        roc_best_restart: roc_best,
        roc_boosted,
    };
    log::info!(
        "{family} split {index}: avg {:.4} best {:.4} boosted {:.4}",
        record.avg_hmm_auc,
        record.best_restart_auc,
        record.boosted_auc
    );
    let timing = FoldTiming {
        train_seconds,
        score_seconds,
        boost_seconds,
    };
    Ok((record, timing))
}

fn family_seed(cfg: &ExperimentConfig, family: &str) -> u64 {
    seed::derive_named(cfg.seed, family)
}

/// Families named by the config: one family, or every malware family for `all`.
pub fn families(cfg: &ExperimentConfig, ds: &Dataset) -> Result<Vec<String>> {
    if cfg.family == BENIGN {
        return Err(Error::Config("the benign class cannot be the target family".into()));
    }
    ds.benign()?;
    if cfg.family == "all" {
        let all: Vec<String> = ds.malware_families().into_iter().map(String::from).collect();
        if all.is_empty() {
            return Err(Error::Dataset(format!("no malware families under {}", ds.root.display())));
        }
        Ok(all)
    } else {
        ds.family(&cfg.family)?;
        Ok(vec![cfg.family.clone()])
    }
}

fn fold_plan(cfg: &ExperimentConfig, ds: &Dataset, family: &str) -> Result<FoldPlan> {
    let n_mal = ds.family(family)?.len();
    let n_ben = ds.benign()?.len();
    make_folds(n_mal, n_ben, cfg.folds, seed::derive_named(family_seed(cfg, family), "folds"))
        .map_err(|e| Error::Dataset(format!("family {family}: {e}")))
}

fn fold_train_seed(cfg: &ExperimentConfig, family: &str, fold: usize) -> u64 {
    seed::derive(seed::derive_named(family_seed(cfg, family), "train"), fold as u64)
}

fn fold_split(ds: &Dataset, family: &str, plan: &FoldPlan, fold: usize) -> Result<Split> {
    Ok(Split::from_indices(
        ds.family(family)?,
        ds.benign()?,
        &plan.train_positive(fold),
        &plan.test_positive(fold),
        &plan.train_negative(fold),
        &plan.test_negative(fold),
    ))
}

fn run_folds(
    family: &str,
    cfg: &ExperimentConfig,
    splits: impl Iterator<Item = Result<(Split, u64)>>,
) -> Result<(Vec<FoldRecord>, Vec<FoldTiming>)> {
    let mut records = Vec::new();
    let mut timings = Vec::new();
    for (i, split) in splits.enumerate() {
        let (split, train_seed) = split?;
        let (r, t) = evaluate_split(family, &split, cfg, i, train_seed)?;
        records.push(r);
        timings.push(t);
    }
    Ok((records, timings))
}

fn new_report(kind: ExperimentKind, cfg: &ExperimentConfig, ds: &Dataset) -> EvaluationReport {
    let unusable = ds
        .unusable
        .iter()
        .map(|p| p.strip_prefix(&ds.root).unwrap_or(p).display().to_string())
        .collect();
    EvaluationReport::new(kind, cfg.clone(), unusable)
}

pub fn run_baseline(cfg: &ExperimentConfig) -> Result<EvaluationReport> {
    cfg.validate()?;
    run_baseline_on(cfg, &Dataset::load(&cfg.dataset)?)
}

/// k-fold cross validation of each family against benign.
pub fn run_baseline_on(cfg: &ExperimentConfig, ds: &Dataset) -> Result<EvaluationReport> {
    cfg.validate()?;
    let mut report = new_report(ExperimentKind::Baseline, cfg, ds);
    for family in families(cfg, ds)? {
        let plan = fold_plan(cfg, ds, &family)?;
        let splits = (0..cfg.folds)
            .map(|f| Ok((fold_split(ds, &family, &plan, f)?, fold_train_seed(cfg, &family, f))));
        let (folds, timings) = run_folds(&family, cfg, splits)?;
        report.push(CellRecord::aggregate(ExperimentKind::Baseline, &family, None, None, folds)?, timings);
    }
    Ok(report)
}

pub fn run_morphing(cfg: &ExperimentConfig) -> Result<EvaluationReport> {
    cfg.validate()?;
    run_morphing_on(cfg, &Dataset::load(&cfg.dataset)?)
}

/// The baseline protocol once per morph rate. Malware is morphed with code
/// from the fold's training benign samples; fold plans and training seeds
/// match the baseline, so rate 0 reproduces it fold for fold.
pub fn run_morphing_on(cfg: &ExperimentConfig, ds: &Dataset) -> Result<EvaluationReport> {
    cfg.validate()?;
    if cfg.morph_rates.is_empty() {
        return Err(Error::Config("morph experiment needs at least one rate".into()));
    }
    let mut report = new_report(ExperimentKind::Morph, cfg, ds);
    for family in families(cfg, ds)? {
        let plan = fold_plan(cfg, ds, &family)?;
        let morph_root = seed::derive_named(family_seed(cfg, &family), "morph");
        for &rate in &cfg.morph_rates {
            let rate_seed = seed::derive(morph_root, rate.to_bits());
            let splits = (0..cfg.folds).map(|f| {
                let mut split = fold_split(ds, &family, &plan, f)?;
                let morph_side = |side: &mut Vec<OpcodeListing>, idx: &[usize], donors: &[&OpcodeListing]| {
                    for (l, &i) in side.iter_mut().zip(idx) {
                        let mcfg = MorphConfig {
                            rate,
                            block_length: cfg.morph_block_length,
                            seed: seed::derive(rate_seed, i as u64),
                        };
                        l.mnemonics = morph(&l.mnemonics, donors, &mcfg)?;
                    }
                    Ok::<_, Error>(())
                };
                let donor_set = split.train_benign.clone();
                let donors: Vec<&OpcodeListing> = donor_set.iter().collect();
                morph_side(&mut split.test_malware, &plan.test_positive(f), &donors)?;
                if !cfg.morph_test_only {
                    morph_side(&mut split.train_malware, &plan.train_positive(f), &donors)?;
                }
                Ok((split, fold_train_seed(cfg, &family, f)))
            });
            let (folds, timings) = run_folds(&family, cfg, splits)?;
            report.push(
                CellRecord::aggregate(ExperimentKind::Morph, &family, Some(rate), None, folds)?,
                timings,
            );
        }
    }
    Ok(report)
}

pub fn run_cold_start(cfg: &ExperimentConfig) -> Result<EvaluationReport> {
    cfg.validate()?;
    run_cold_start_on(cfg, &Dataset::load(&cfg.dataset)?)
}

/// Repeated random draws of `s` training malware per size. Test malware is
/// the rest of the family, capped at `test_cap`; benign samples are split
/// once per draw into a fixed training share and a test remainder.
pub fn run_cold_start_on(cfg: &ExperimentConfig, ds: &Dataset) -> Result<EvaluationReport> {
    cfg.validate()?;
    if cfg.coldstart_sizes.is_empty() {
        return Err(Error::Config("cold-start experiment needs at least one size".into()));
    }
    let benign = ds.benign()?;
    if benign.len() <= cfg.coldstart_benign_train {
        return Err(Error::Dataset(format!(
            "{} benign samples leave none for testing after {} for training",
            benign.len(),
            cfg.coldstart_benign_train
        )));
    }
    let names = families(cfg, ds)?;
    let mut too_small = Vec::new();
    for family in &names {
        let n = ds.family(family)?.len();
        for &s in cfg.coldstart_sizes.iter().filter(|&&s| n < s + 1) {
            too_small.push(format!("{family} has {n} samples, size {s} needs at least {}", s + 1));
        }
    }
    if !too_small.is_empty() {
        return Err(Error::Dataset(too_small.join("; ")));
    }

    let mut report = new_report(ExperimentKind::Coldstart, cfg, ds);
    for family in names {
        let malware = ds.family(&family)?;
        let root = seed::derive_named(family_seed(cfg, &family), "coldstart");
        for &size in &cfg.coldstart_sizes {
            let splits = (0..cfg.coldstart_draws).map(|d| {
                let draw_seed = seed::derive(seed::derive(root, size as u64), d as u64);
                let mut rng = seed::rng(draw_seed);
                let mut mal: Vec<usize> = (0..malware.len()).collect();
                let mut ben: Vec<usize> = (0..benign.len()).collect();
                mal.shuffle(&mut rng);
                ben.shuffle(&mut rng);
                let test_end = (size + cfg.test_cap).min(mal.len());
                let split = Split::from_indices(
                    malware,
                    benign,
                    &mal[..size],
                    &mal[size..test_end],
                    &ben[..cfg.coldstart_benign_train],
                    &ben[cfg.coldstart_benign_train..],
                );
                Ok((split, seed::derive_named(draw_seed, "train")))
            });
            let (folds, timings) = run_folds(&family, cfg, splits)?;
            report.push(
                CellRecord::aggregate(ExperimentKind::Coldstart, &family, None, Some(size), folds)?,
                timings,
            );
        }
    }
    Ok(report)
}

/// Dispatches on `kind`, loading the dataset named by the config.
pub fn run(kind: ExperimentKind, cfg: &ExperimentConfig) -> Result<EvaluationReport> {
    cfg.validate()?;
    run_on(kind, cfg, &Dataset::load(&cfg.dataset)?)
}

pub fn run_on(kind: ExperimentKind, cfg: &ExperimentConfig, ds: &Dataset) -> Result<EvaluationReport> {
    match kind {
        ExperimentKind::Baseline => run_baseline_on(cfg, ds),
        ExperimentKind::Morph => run_morphing_on(cfg, ds),
        ExperimentKind::Coldstart => run_cold_start_on(cfg, ds),
    }
}
