//! Scaled forward and backward passes.
//!
//! The forward variables are normalized to sum to one at every step. With
//! `s_t` the pre-normalization sum at step `t` and `c_t = 1 / s_t`:
//!
//! * `alpha_hat[t][i] = alpha[t][i] / (s_0 * ... * s_t)`
//! * `ln P(O | model) = ln s_0 + ... + ln s_{T-1}`
//! * `beta_hat[T-1][i] = c_{T-1}` and
//!   `beta_hat[t][i] = c_t * sum_j a[i][j] * b[j][O_{t+1}] * beta_hat[t+1][j]`
//!
//! With these conventions `sum_i alpha_hat[t][i] * beta_hat[t][i] = c_t` for
//! every `t`, and the di-gamma terms
//! `alpha_hat[t][i] * a[i][j] * b[j][O_{t+1}] * beta_hat[t+1][j]` sum to one
//! without further normalization.

use super::params::{HmmParams, ObservationSequence};
use crate::error::{Error, Result};

/// Scaled forward variables for one sequence.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    n_states: usize,
    alpha: Vec<f64>,
    log_scales: Vec<f64>,
    inv_scales: Vec<f64>,
    log_likelihood: f64,
}

impl ForwardPass {
    pub fn run(model: &HmmParams, obs: &ObservationSequence) -> Result<Self> {
        obs.check(model.n_symbols())?;
        let mut pass = ForwardPass {
            n_states: model.n_states(),
            alpha: vec![0.0; obs.len() * model.n_states()],
            log_scales: vec![0.0; obs.len()],
            inv_scales: vec![0.0; obs.len()],
            log_likelihood: 0.0,
        };
        pass.log_likelihood = forward_into(model, obs.symbols(), &mut pass.alpha, &mut pass.inv_scales);
        if pass.log_likelihood > f64::NEG_INFINITY {
            pass.log_scales = pass.inv_scales.iter().map(|c| -c.ln()).collect();
        }
        Ok(pass)
    }

    /// Normalized forward variables at step `t`.
    pub fn alpha(&self, t: usize) -> &[f64] {
        &self.alpha[t * self.n_states..(t + 1) * self.n_states]
    }

    /// `ln s_t` for every step. Entries after a zero-probability step are
    /// meaningless.
    pub fn log_scales(&self) -> &[f64] {
        &self.log_scales
    }

    /// `ln P(O | model)`, or `-inf` when the sequence is impossible.
    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }
}

/// Scaled backward variables, sharing the forward pass's scale factors.
#[derive(Debug, Clone)]
pub struct BackwardPass {
    n_states: usize,
    beta: Vec<f64>,
}

impl BackwardPass {
    pub fn run(
        model: &HmmParams,
        obs: &ObservationSequence,
        forward: &ForwardPass,
    ) -> Result<Self> {
        obs.check(model.n_symbols())?;
        if forward.log_scales.len() != obs.len() || forward.n_states != model.n_states() {
            return Err(Error::invalid("forward pass does not belong to this model and sequence"));
        }
        if forward.log_likelihood == f64::NEG_INFINITY {
            return Err(Error::ZeroLikelihood);
        }
        let mut beta = vec![0.0; obs.len() * model.n_states()];
        backward_into(model, obs.symbols(), &forward.inv_scales, &mut beta);
        Ok(BackwardPass {
            n_states: model.n_states(),
            beta,
        })
    }

    pub fn beta(&self, t: usize) -> &[f64] {
        &self.beta[t * self.n_states..(t + 1) * self.n_states]
    }

    /// Recovers `ln P(O | model)` from the forward and backward variables at
    /// a single step `t`, undoing the scaling on both sides.
    pub fn log_likelihood_at(&self, forward: &ForwardPass, t: usize) -> f64 {
        let dot: f64 = forward
            .alpha(t)
            .iter()
            .zip(self.beta(t))
            .map(|(a, b)| a * b)
            .sum();
        let scales = &forward.log_scales;
        let head: f64 = scales[..=t].iter().sum();
        let tail: f64 = scales[t..].iter().sum();
        dot.ln() + head + tail
    }
}

/// `ln P(O | model)` via the scaled forward recursion.
///
/// Returns `f64::NEG_INFINITY` when the sequence has probability zero.
pub fn forward_scaled(model: &HmmParams, obs: &ObservationSequence) -> Result<f64> {
    obs.check(model.n_symbols())?;
    let mut steps = ForwardSteps::new(model.n_states());
    for (t, &o) in obs.symbols().iter().enumerate() {
        if steps.step(model, t, o as usize).is_none() {
            return Ok(f64::NEG_INFINITY);
        }
    }
    Ok(steps.log_likelihood())
}

/// Backward variables for `obs` using the forward pass's scales.
pub fn backward_scaled(
    model: &HmmParams,
    obs: &ObservationSequence,
    forward: &ForwardPass,
) -> Result<BackwardPass> {
    BackwardPass::run(model, obs, forward)
}

/// Posterior state probabilities `P(x_t = i | O, model)`, one row per step.
pub fn posteriors(model: &HmmParams, obs: &ObservationSequence) -> Result<Vec<Vec<f64>>> {
    let fwd = ForwardPass::run(model, obs)?;
    let bwd = BackwardPass::run(model, obs, &fwd)?;
    Ok((0..obs.len())
        .map(|t| {
            let mut g: Vec<f64> = fwd
                .alpha(t)
                .iter()
                .zip(bwd.beta(t))
                .map(|(a, b)| a * b)
                .collect();
            super::params::normalize(&mut g);
            g
        })
        .collect())
}

/// Log-likelihood per observation: `ln P(O | model) / T`.
///
/// Makes scores comparable across sequences of different lengths. A
/// zero-probability sequence scores `-inf`.
pub fn score_llpo(model: &HmmParams, obs: &ObservationSequence) -> Result<f64> {
    let ll = forward_scaled(model, obs)?;
    Ok(ll / obs.len() as f64)
}

/// Forward recursion into caller-owned buffers. Returns the log-likelihood,
/// `-inf` if some step has zero mass (later rows are then left untouched).
pub(crate) fn forward_into(
    model: &HmmParams,
    obs: &[u32],
    alpha: &mut [f64],
    inv_scales: &mut [f64],
) -> f64 {
    let n = model.n_states();
    let mut steps = ForwardSteps::new(n);
    for (t, &o) in obs.iter().enumerate() {
        let Some((c, inv_sum)) = steps.step(model, t, o as usize) else {
            return f64::NEG_INFINITY;
        };
        for (a, v) in alpha[t * n..(t + 1) * n].iter_mut().zip(&steps.cur) {
            *a = v * inv_sum;
        }
        inv_scales[t] = c;
    }
    steps.log_likelihood()
}

/// One forward step at a time.
///
/// The running row `v_t` is rescaled by a power of two instead of being
/// normalized, so no division sits on the step-to-step dependency chain:
/// `v_t = (v_{t-1} A * b(O_t)) * 2^{-k_{t-1}}` with `k_t` the binary exponent
/// of `sum v_t`. With `m_t = sum v_t * 2^{-k_t}` in `[1, 2)`, the true step
/// sum is `s_t = sum v_t / m_{t-1}`, so `c_t = m_{t-1} / sum v_t`,
/// `alpha_hat[t] = v_t / sum v_t`, and the log-likelihood telescopes to
/// `ln m_{T-1} + ln 2 * sum_t k_t`.
struct ForwardSteps {
    cur: Vec<f64>,
    prev: Vec<f64>,
    /// `2^{-k_{t-1}}`
    scale: f64,
    /// `m_{t-1}`
    mantissa: f64,
    exponent: i64,
}

impl ForwardSteps {
    const EXPONENT_MASK: u64 = 0x7ff << 52;

    fn new(n: usize) -> Self {
        ForwardSteps {
            cur: vec![0.0; n],
            prev: vec![0.0; n],
            scale: 1.0,
            mantissa: 1.0,
            exponent: 0,
        }
    }

    /// Advances to step `t` emitting `o`. Returns `(c_t, 1 / sum v_t)`, or
    /// `None` when the step has zero mass.
    #[inline]
    fn step(&mut self, model: &HmmParams, t: usize, o: usize) -> Option<(f64, f64)> {
        let n = self.cur.len();
        std::mem::swap(&mut self.cur, &mut self.prev);
        if t == 0 {
            for i in 0..n {
                self.cur[i] = model.pi(i) * model.b(i, o);
            }
        } else {
            for j in 0..n {
                let mut s = 0.0;
                for i in 0..n {
                    s += self.prev[i] * model.a(i, j);
                }
                self.cur[j] = s * self.scale * model.b(j, o);
            }
        }
        let mut sum: f64 = self.cur.iter().sum();
        if !(sum > 0.0) {
            return None;
        }
        if sum < f64::MIN_POSITIVE {
            // subnormal: lift back into range so the exponent bits are valid
            let lift = 2f64.powi(600);
            self.cur.iter_mut().for_each(|x| *x *= lift);
            sum *= lift;
            self.exponent -= 600;
        }
        let previous = self.mantissa;
        let bits = sum.to_bits();
        let k = ((bits & Self::EXPONENT_MASK) >> 52) as i64 - 1023;
        self.exponent += k;
        self.mantissa = f64::from_bits((bits & !Self::EXPONENT_MASK) | (1023 << 52));
        self.scale = f64::from_bits(((1023 - k) as u64) << 52);
        let inv_sum = 1.0 / sum;
        Some((previous * inv_sum, inv_sum))
    }

    fn log_likelihood(&self) -> f64 {
        self.mantissa.ln() + self.exponent as f64 * std::f64::consts::LN_2
    }
}

/// Backward recursion given the forward pass's `c_t = 1 / s_t`.
pub(crate) fn backward_into(model: &HmmParams, obs: &[u32], inv_scales: &[f64], beta: &mut [f64]) {
    let n = model.n_states();
    let big_t = obs.len();
    let last = inv_scales[big_t - 1];
    beta[(big_t - 1) * n..].iter_mut().for_each(|x| *x = last);
    for t in (0..big_t - 1).rev() {
        let c = inv_scales[t];
        let o = obs[t + 1] as usize;
        let (row, next) = beta[t * n..].split_at_mut(n);
        let next = &next[..n];
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += model.a(i, j) * model.b(j, o) * next[j];
            }
            row[i] = c * s;
        }
    }
}
