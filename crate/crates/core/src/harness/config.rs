use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::TrainingConfig;

/// Settings shared by every experiment protocol.
///
/// Defaults follow the published protocol: 1000 restarts, a top-30
/// vocabulary, 5 folds, morphing at 10/50/100%, cold-start training sizes
/// 5 to 25 and at most 200 malware test samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    /// A malware family, or `all` for every non-benign family.
    pub family: String,
    pub restarts: usize,
    pub states: usize,
    pub top_k: usize,
    pub folds: usize,
    pub morph_rates: Vec<f64>,
    pub coldstart_sizes: Vec<usize>,
    pub test_cap: usize,
    pub seed: u64,
    pub max_iterations: usize,
    pub min_relative_ll_improvement: f64,
    pub init_perturbation: f64,
    pub morph_block_length: usize,
    /// Morph only test-fold malware instead of every malware sample.
    pub morph_test_only: bool,
    /// Random training-set draws per cold-start size.
    pub coldstart_draws: usize,
    /// Benign samples held out for thresholds and boosting labels in cold start.
    pub coldstart_benign_train: usize,
    /// Boosting rounds; 0 means one per pool model.
    pub boost_rounds: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: PathBuf::from("dataset"),
            family: "all".into(),
            restarts: 1000,
            states: 2,
            top_k: 30,
            folds: 5,
            morph_rates: vec![0.1, 0.5, 1.0],
            coldstart_sizes: vec![5, 10, 15, 20, 25],
            test_cap: 200,
            seed: 0,
            max_iterations: 200,
            min_relative_ll_improvement: 0.0,
            init_perturbation: 0.1,
            morph_block_length: 10,
            morph_test_only: false,
            coldstart_draws: 5,
            coldstart_benign_train: 25,
            boost_rounds: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("restarts", self.restarts),
            ("states", self.states),
            ("top_k", self.top_k),
            ("test_cap", self.test_cap),
            ("max_iterations", self.max_iterations),
            ("morph_block_length", self.morph_block_length),
            ("coldstart_draws", self.coldstart_draws),
            ("coldstart_benign_train", self.coldstart_benign_train),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        if let Some(r) = self.morph_rates.iter().find(|r| !(**r >= 0.0) || !r.is_finite()) {
            return Err(Error::Config(format!("morph rate {r} must be >= 0")));
        }
        if self.coldstart_sizes.contains(&0) {
            return Err(Error::Config("cold-start sizes must be positive".into()));
        }
        if self.family.is_empty() {
            return Err(Error::Config("family must not be empty".into()));
        }
        self.training(0)
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// Baum-Welch settings with `seed` as the pool's master seed.
    pub fn training(&self, seed: u64) -> TrainingConfig {
        TrainingConfig {
            max_iterations: self.max_iterations,
            min_relative_ll_improvement: self.min_relative_ll_improvement,
            seed,
            init_perturbation: self.init_perturbation,
        }
    }
}
