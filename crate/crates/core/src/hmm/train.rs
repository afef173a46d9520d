use serde::{Deserialize, Serialize};

use super::params::{normalize, HmmParams, ObservationSequence};
use super::scaled::forward_into;
use crate::error::{Error, Result};

/// Baum-Welch stopping rule and initialization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub max_iterations: usize,
    /// Training stops once `(ll_new - ll_old) / |ll_old|` drops below this.
    /// The default 0 climbs until the likelihood stops rising: starts near
    /// uniform sit by a saddle where gains of 1e-8 per step are normal for
    /// the first hundred or so iterations.
    pub min_relative_ll_improvement: f64,
    pub seed: u64,
    pub init_perturbation: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            max_iterations: 200,
            min_relative_ll_improvement: 0.0,
            seed: 0,
            init_perturbation: 0.1,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if !(self.min_relative_ll_improvement >= 0.0) {
            return Err(Error::invalid("min_relative_ll_improvement must be non-negative"));
        }
        if !(self.init_perturbation > 0.0 && self.init_perturbation < 1.0) {
            return Err(Error::invalid("init_perturbation must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Result of one Baum-Welch run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub params: HmmParams,
    /// `ln P(O | params)` of the returned parameters.
    pub train_log_likelihood: f64,
    /// Log-likelihood before each re-estimation step and of the final model;
    /// always `iterations_run + 1` entries.
    pub ll_history: Vec<f64>,
    pub iterations_run: usize,
    pub seed: u64,
}

/// Draws a near-uniform model from `cfg.seed` and trains it on `obs`.
pub fn train_from_seed(
    n_states: usize,
    n_symbols: usize,
    obs: &ObservationSequence,
    cfg: &TrainingConfig,
) -> Result<TrainedModel> {
    let init = HmmParams::init_random(n_states, n_symbols, cfg.seed, cfg.init_perturbation)?;
    baum_welch_train(init, obs, cfg)
}

/// Baum-Welch re-estimation starting from `init`.
///
/// Runs until `cfg.max_iterations` re-estimation steps have been taken or
/// the relative log-likelihood gain falls below
/// `cfg.min_relative_ll_improvement`. Symbols absent from `obs` end up with
/// zero emission probability.
pub fn baum_welch_train(
    init: HmmParams,
    obs: &ObservationSequence,
    cfg: &TrainingConfig,
) -> Result<TrainedModel> {
    baum_welch_observe(init, obs, cfg, |_, _| {})
}

/// As [`baum_welch_train`], calling `observer(iteration, params)` after each
/// re-estimation step.
pub fn baum_welch_observe(
    init: HmmParams,
    obs: &ObservationSequence,
    cfg: &TrainingConfig,
    mut observer: impl FnMut(usize, &HmmParams),
) -> Result<TrainedModel> {
    cfg.validate()?;
    init.validate(1e-9)?;
    obs.check(init.n_symbols())?;

    let n = init.n_states();
    let m = init.n_symbols();
    let symbols = obs.symbols();
    let big_t = symbols.len();

    let mut params = init;
    let mut alpha = vec![0.0; big_t * n];
    let mut beta = vec![0.0; n];
    let mut inv_scales = vec![0.0; big_t];
    let mut history = Vec::with_capacity(cfg.max_iterations + 1);

    let mut xi = vec![0.0; n * n];
    let mut emit = vec![0.0; n * m];
    let mut start = vec![0.0; n];
    let mut weighted = vec![0.0; n];

    let mut iterations = 0;
    loop {
        let ll = forward_into(&params, symbols, &mut alpha, &mut inv_scales);
        if ll == f64::NEG_INFINITY {
            return Err(Error::ZeroLikelihood);
        }
        let stop = match history.last() {
            Some(&prev) => relative_gain(prev, ll) < cfg.min_relative_ll_improvement,
            None => false,
        };
        history.push(ll);
        if stop || iterations == cfg.max_iterations {
            break;
        }

        // Backward recursion fused with the expected counts, walking t down
        // from T - 1 so only beta_hat[t + 1] is kept. With w_j =
        // b[j][O_{t+1}] * beta_hat[t+1][j] and r_i = sum_j a[i][j] * w_j,
        // xi_t(i, j) = alpha_hat[t][i] * a[i][j] * w_j and
        // gamma_t(i) = alpha_hat[t][i] * r_i, while beta_hat[t][i] = c_t * r_i.
        xi.iter_mut().for_each(|x| *x = 0.0);
        emit.iter_mut().for_each(|x| *x = 0.0);
        let last = &alpha[(big_t - 1) * n..];
        for i in 0..n {
            emit[i * m + symbols[big_t - 1] as usize] += last[i];
        }
        beta.iter_mut().for_each(|x| *x = inv_scales[big_t - 1]);
        if big_t == 1 {
            start.copy_from_slice(last);
        }
        for t in (0..big_t - 1).rev() {
            let next_sym = symbols[t + 1] as usize;
            let sym = symbols[t] as usize;
            let a_t = &alpha[t * n..(t + 1) * n];
            for (j, w) in weighted.iter_mut().enumerate() {
                *w = params.b(j, next_sym) * beta[j];
            }
            let c = inv_scales[t];
            for i in 0..n {
                let row = params.transition_row(i);
                let xi_row = &mut xi[i * n..(i + 1) * n];
                let mut r = 0.0;
                for j in 0..n {
                    let x = row[j] * weighted[j];
                    xi_row[j] += a_t[i] * x;
                    r += x;
                }
                let gamma = a_t[i] * r;
                emit[i * m + sym] += gamma;
                beta[i] = c * r;
                if t == 0 {
                    start[i] = gamma;
                }
            }
        }

        params = reestimate(&params, &start, &xi, &emit);
        iterations += 1;
        observer(iterations, &params);
    }

    Ok(TrainedModel {
        train_log_likelihood: *history.last().expect("history has at least one entry"),
        params,
        ll_history: history,
        iterations_run: iterations,
        seed: cfg.seed,
    })
}

fn relative_gain(prev: f64, cur: f64) -> f64 {
    if cur == prev {
        0.0
    } else {
        (cur - prev) / prev.abs().max(f64::MIN_POSITIVE)
    }
}

/// Normalizes the expected counts into a new model. Rows with no expected
/// mass (a state never occupied) keep their previous values.
fn reestimate(old: &HmmParams, start: &[f64], xi: &[f64], emit: &[f64]) -> HmmParams {
    let n = old.n_states();
    let m = old.n_symbols();
    let renorm = |counts: &[f64], previous: &[f64]| -> Vec<f64> {
        let mut row = counts.to_vec();
        if row.iter().sum::<f64>() > 0.0 {
            normalize(&mut row);
            row
        } else {
            previous.to_vec()
        }
    };
    let initial = renorm(start, old.initial());
    let transition = (0..n)
        .flat_map(|i| renorm(&xi[i * n..(i + 1) * n], old.transition_row(i)))
        .collect();
    let emission = (0..n)
        .flat_map(|i| renorm(&emit[i * m..(i + 1) * m], old.emission_row(i)))
        .collect();
    HmmParams::from_parts(n, m, transition, emission, initial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::forward_scaled;

    fn cfg(max_iterations: usize) -> TrainingConfig {
        TrainingConfig {
            max_iterations,
            min_relative_ll_improvement: 0.0,
            ..TrainingConfig::default()
        }
    }

    #[test]
    fn history_is_monotone_and_rows_stay_stochastic() {
        let obs = ObservationSequence::new(
            (0..400u32).map(|i| (i * i + 3 * i) % 5).collect(),
        );
        let init = HmmParams::init_random(3, 5, 9, 0.2).unwrap();
        let mut worst = 0.0f64;
        let trained = baum_welch_observe(init, &obs, &cfg(50), |_, p| {
            worst = worst.max(p.max_row_sum_error());
        })
        .unwrap();
        assert!(worst < 1e-12);
        assert_eq!(trained.iterations_run, 50);
        assert_eq!(trained.ll_history.len(), 51);
        for w in trained.ll_history.windows(2) {
            assert!(w[1] >= w[0] - 1e-10, "{} -> {}", w[0], w[1]);
        }
        let recomputed = forward_scaled(&trained.params, &obs).unwrap();
        assert_eq!(recomputed, trained.train_log_likelihood);
    }

    #[test]
    fn unseen_symbol_gets_zero_emission() {
        let obs = ObservationSequence::new(vec![0, 1, 0, 1, 1, 0, 0]);
        let init = HmmParams::init_random(2, 3, 1, 0.1).unwrap();
        let trained = baum_welch_train(init, &obs, &cfg(5)).unwrap();
        for i in 0..2 {
            assert_eq!(trained.params.b(i, 2), 0.0);
        }
        let with_unseen = ObservationSequence::new(vec![0, 2]);
        assert_eq!(
            forward_scaled(&trained.params, &with_unseen).unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn relative_tolerance_stops_early() {
        let obs = ObservationSequence::new((0..300u32).map(|i| i % 4).collect());
        let init = HmmParams::init_random(2, 4, 3, 0.1).unwrap();
        let loose = TrainingConfig {
            min_relative_ll_improvement: 1e-2,
            ..TrainingConfig::default()
        };
        let trained = baum_welch_train(init, &obs, &loose).unwrap();
        assert!(trained.iterations_run < 200);
    }

    #[test]
    fn single_observation_sequence_trains() {
        let obs = ObservationSequence::new(vec![1]);
        let init = HmmParams::init_random(2, 2, 4, 0.1).unwrap();
        let trained = baum_welch_train(init.clone(), &obs, &cfg(3)).unwrap();
        assert!(trained.params.max_row_sum_error() < 1e-12);
        // No transitions observed: A is carried over unchanged.
        assert_eq!(trained.params.transition_row(0), init.transition_row(0));
        assert!(trained.train_log_likelihood > -1e-9);
    }

    #[test]
    fn rejects_invalid_config() {
        let obs = ObservationSequence::new(vec![0, 1]);
        let init = HmmParams::init_random(2, 2, 4, 0.1).unwrap();
        assert!(baum_welch_train(init.clone(), &obs, &cfg(0)).is_err());
        let bad = TrainingConfig {
            min_relative_ll_improvement: -1.0,
            ..TrainingConfig::default()
        };
        assert!(baum_welch_train(init, &obs, &bad).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let obs = ObservationSequence::new((0..500u32).map(|i| (i * 31 + i / 7) % 6).collect());
        let a = train_from_seed(2, 6, &obs, &TrainingConfig { seed: 5, ..Default::default() }).unwrap();
        let b = train_from_seed(2, 6, &obs, &TrainingConfig { seed: 5, ..Default::default() }).unwrap();
        assert_eq!(a, b);
    }
}
