//! Many independently initialized HMMs trained on the same data.
//!
//! Restart `i` of a pool uses seed `seed::derive(master_seed, i)`, so a pool
//! of size `R` is always a prefix of a larger pool with the same master seed,
//! and its contents do not depend on how restarts are scheduled across
//! threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{train_from_seed, ObservationSequence, TrainedModel, TrainingConfig};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPool {
    pub master_seed: u64,
    pub models: Vec<TrainedModel>,
}

impl ModelPool {
    pub fn restart_count(&self) -> usize {
        self.models.len()
    }

    pub fn log_likelihoods(&self) -> Vec<f64> {
        self.models.iter().map(|m| m.train_log_likelihood).collect()
    }
}

/// Seed used for restart `index` under `master_seed`.
pub fn restart_seed(master_seed: u64, index: usize) -> u64 {
    seed::derive(master_seed, index as u64)
}

/// Trains `restarts` models on `obs`, fanning out over the current rayon
/// pool. `cfg.seed` is the master seed; each model's config carries its own
/// derived seed.
pub fn train_pool(
    obs: &ObservationSequence,
    n_states: usize,
    n_symbols: usize,
    restarts: usize,
    cfg: &TrainingConfig,
) -> Result<ModelPool> {
    if restarts == 0 {
        return Err(Error::invalid("restart count must be at least 1"));
    }
    cfg.validate()?;
    obs.check(n_symbols)?;
    let models = (0..restarts)
        .into_par_iter()
        .map(|i| {
            let cfg = TrainingConfig {
                seed: restart_seed(cfg.seed, i),
                ..cfg.clone()
            };
            train_from_seed(n_states, n_symbols, obs, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelPool {
        master_seed: cfg.seed,
        models,
    })
}

/// Index of the model with the highest training log-likelihood; the lowest
/// index wins ties.
pub fn best_index(pool: &ModelPool) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, m) in pool.models.iter().enumerate() {
        let ll = m.train_log_likelihood;
        match best {
            Some((_, b)) if ll.total_cmp(&b).is_le() => {}
            _ => best = Some((i, ll)),
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::invalid("cannot select from an empty pool"))
}

/// The model with maximal training log-likelihood (see [`best_index`]).
pub fn select_best(pool: &ModelPool) -> Result<&TrainedModel> {
    best_index(pool).map(|i| &pool.models[i])
}

/// Mean of a per-model metric: the expected outcome of training a single
/// model.
pub fn average_case_metric(per_model: &[f64]) -> Result<f64> {
    if per_model.is_empty() {
        return Err(Error::invalid("cannot average an empty metric list"));
    }
    Ok(per_model.iter().sum::<f64>() / per_model.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::HmmParams;

    fn pool_with_lls(lls: &[f64]) -> ModelPool {
        let params = HmmParams::init_random(1, 2, 0, 0.1).unwrap();
        ModelPool {
            master_seed: 0,
            models: lls
                .iter()
                .enumerate()
                .map(|(i, &ll)| TrainedModel {
                    params: params.clone(),
                    train_log_likelihood: ll,
                    ll_history: vec![ll],
                    iterations_run: 0,
                    seed: i as u64,
                })
                .collect(),
        }
    }

    #[test]
    fn argmax_and_tie_break() {
        assert_eq!(best_index(&pool_with_lls(&[-1000.0, -950.0, -975.0])).unwrap(), 1);
        let mut lls = vec![-10.0; 9];
        lls[3] = -1.0;
        lls[7] = -1.0;
        assert_eq!(best_index(&pool_with_lls(&lls)).unwrap(), 3);
        assert!(best_index(&pool_with_lls(&[])).is_err());
    }

    #[test]
    fn averages() {
        assert!((average_case_metric(&[0.8, 0.9, 1.0]).unwrap() - 0.9).abs() < 1e-15);
        assert_eq!(average_case_metric(&[0.42]).unwrap(), 0.42);
        assert!(average_case_metric(&[]).is_err());
    }

    fn data() -> ObservationSequence {
        ObservationSequence::new((0..600u32).map(|i| (i * i / 3 + i / 11) % 5).collect())
    }

    #[test]
    fn single_restart_equals_direct_training() {
        let cfg = TrainingConfig { seed: 77, ..Default::default() };
        let pool = train_pool(&data(), 2, 5, 1, &cfg).unwrap();
        let direct = train_from_seed(
            2,
            5,
            &data(),
            &TrainingConfig { seed: restart_seed(77, 0), ..cfg },
        )
        .unwrap();
        assert_eq!(pool.models[0], direct);
    }

    #[test]
    fn pools_are_deterministic_and_nested() {
        let cfg = TrainingConfig { seed: 5, ..Default::default() };
        let a = train_pool(&data(), 2, 5, 5, &cfg).unwrap();
        let b = train_pool(&data(), 2, 5, 5, &cfg).unwrap();
        assert_eq!(a.log_likelihoods(), b.log_likelihoods());
        let big = train_pool(&data(), 2, 5, 8, &cfg).unwrap();
        assert_eq!(&big.models[..5], &a.models[..]);
        assert!(train_pool(&data(), 2, 5, 0, &cfg).is_err());
    }
}
