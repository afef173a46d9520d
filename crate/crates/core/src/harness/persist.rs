use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::boosting::{adaboost_train, BoostedEnsemble};
use crate::error::{Error, Result};
use crate::features::{build_vocabulary, encode, Dataset, OpcodeListing, Vocabulary};
use crate::hmm::{score_llpo, HmmParams, ObservationSequence};
use crate::restarts::{best_index, train_pool};
use crate::seed;

/// A detector for one family, trained on all of its samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyModel {
    pub family: String,
    pub vocabulary: Vocabulary,
    pub master_seed: u64,
    pub restarts: usize,
    /// Training log-likelihood of every restart, in restart order.
    pub pool_log_likelihoods: Vec<f64>,
    pub best_index: usize,
    pub best: HmmParams,
    /// Ensemble cut to its selected prefix; `model_index` points into
    /// `ensemble_models`.
    pub ensemble: BoostedEnsemble,
    pub ensemble_models: Vec<HmmParams>,
}

/// Scores of one listing under a [`FamilyModel`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub llpo: f64,
    pub boosted_margin: f64,
}

/// Trains the restart pool on every sample of `family` and boosts it against
/// every benign sample.
pub fn train_family(cfg: &ExperimentConfig, ds: &Dataset, family: &str) -> Result<FamilyModel> {
    cfg.validate()?;
    let malware = ds.family(family)?;
    let benign = ds.benign()?;
    let refs: Vec<&OpcodeListing> = malware.iter().collect();
    let vocabulary = build_vocabulary(family, &refs, cfg.top_k)?;
    let mut samples: Vec<ObservationSequence> = malware.iter().map(|l| encode(l, &vocabulary)).collect();
    let obs = ObservationSequence::concat(&samples);
    samples.extend(benign.iter().map(|l| encode(l, &vocabulary)));
    let mut labels = vec![1i8; malware.len()];
    labels.resize(samples.len(), -1);

    let master_seed = seed::derive_named(seed::derive_named(cfg.seed, family), "final");
    let pool = train_pool(&obs, cfg.states, vocabulary.n_symbols(), cfg.restarts, &cfg.training(master_seed))?;
    let scores = pool
        .models
        .iter()
        .map(|m| samples.iter().map(|s| score_llpo(&m.params, s)).collect())
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let rounds = if cfg.boost_rounds == 0 { cfg.restarts } else { cfg.boost_rounds };
    let full = adaboost_train(&scores, &labels, rounds)?;

    let mut ensemble_models = Vec::new();
    let mut used: Vec<usize> = Vec::new();
    let mut stages = full.stages[..full.best_prefix].to_vec();
    for stage in &mut stages {
        let original = stage.classifier.model_index;
        let slot = used.iter().position(|&u| u == original).unwrap_or_else(|| {
            used.push(original);
            ensemble_models.push(pool.models[original].params.clone());
            used.len() - 1
        });
        stage.classifier.model_index = slot;
    }
    let ensemble = BoostedEnsemble {
        accuracy_history: full.accuracy_history[..full.best_prefix].to_vec(),
        best_prefix: stages.len(),
        stages,
        base_accuracy: full.base_accuracy,
    };

    let best = best_index(&pool)?;
    Ok(FamilyModel {
        family: family.to_string(),
        vocabulary,
        master_seed,
        restarts: cfg.restarts,
        pool_log_likelihoods: pool.log_likelihoods(),
        best_index: best,
        best: pool.models[best].params.clone(),
        ensemble,
        ensemble_models,
    })
}

impl FamilyModel {
    pub fn score(&self, mnemonics: &[String]) -> Result<Scores> {
        if mnemonics.is_empty() {
            return Err(Error::EmptySequence);
        }
        let obs = self.vocabulary.encode_mnemonics(mnemonics);
        let pool_scores = self
            .ensemble_models
            .iter()
            .map(|m| score_llpo(m, &obs))
            .collect::<Result<Vec<_>>>()?;
        Ok(Scores {
            llpo: score_llpo(&self.best, &obs)?,
            boosted_margin: self.ensemble.margin_with_prefix(&pool_scores, self.ensemble.best_prefix)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
