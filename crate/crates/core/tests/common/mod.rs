//! Reference implementations used as test oracles. Everything here is
//! written from the textbook definitions and shares no code with the crate.
#![allow(dead_code)]

use hmmboost::hmm::HmmParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random stochastic row; with `zeros` some entries are exactly 0 (never all).
pub fn random_row(rng: &mut ChaCha8Rng, len: usize, zeros: bool) -> Vec<f64> {
    let mut row: Vec<f64> = (0..len)
        .map(|_| if zeros && rng.gen_bool(0.25) { 0.0 } else { rng.gen_range(0.01..1.0) })
        .collect();
    if row.iter().all(|&x| x == 0.0) {
        row[rng.gen_range(0..len)] = 1.0;
    }
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= s);
    row
}

pub fn random_model(rng: &mut ChaCha8Rng, n: usize, m: usize, zeros: bool) -> HmmParams {
    let a = (0..n).map(|_| random_row(rng, n, zeros)).collect();
    let b = (0..n).map(|_| random_row(rng, m, zeros)).collect();
    let pi = random_row(rng, n, zeros);
    HmmParams::new(a, b, pi).expect("random rows are stochastic")
}

pub fn random_symbols(rng: &mut ChaCha8Rng, m: usize, len: usize) -> Vec<u32> {
    (0..len).map(|_| rng.gen_range(0..m as u32)).collect()
}

/// Every hidden path of length `T` over `n` states, as a flat odometer.
fn for_each_path(n: usize, t: usize, mut f: impl FnMut(&[usize])) {
    let mut path = vec![0; t];
    loop {
        f(&path);
        let mut k = t;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            path[k] += 1;
            if path[k] < n {
                break;
            }
            path[k] = 0;
        }
    }
}

fn path_probability(model: &HmmParams, obs: &[u32], path: &[usize]) -> f64 {
    let mut p = model.pi(path[0]) * model.b(path[0], obs[0] as usize);
    for t in 1..obs.len() {
        p *= model.a(path[t - 1], path[t]) * model.b(path[t], obs[t] as usize);
    }
    p
}

/// `P(O | model)` summed over all `N^T` state paths.
pub fn brute_force_likelihood(model: &HmmParams, obs: &[u32]) -> f64 {
    let mut total = 0.0;
    for_each_path(model.n_states(), obs.len(), |path| total += path_probability(model, obs, path));
    total
}

/// `P(x_t = i | O)` by path enumeration.
pub fn brute_force_posteriors(model: &HmmParams, obs: &[u32]) -> Vec<Vec<f64>> {
    let n = model.n_states();
    let mut post = vec![vec![0.0; n]; obs.len()];
    let mut total = 0.0;
    for_each_path(n, obs.len(), |path| {
        let p = path_probability(model, obs, path);
        total += p;
        for (t, &s) in path.iter().enumerate() {
            post[t][s] += p;
        }
    });
    for row in &mut post {
        row.iter_mut().for_each(|x| *x /= total);
    }
    post
}

/// Fraction of (positive, negative) pairs ranked correctly, ties counting 1/2.
pub fn mann_whitney(pos: &[f64], neg: &[f64]) -> f64 {
    let mut wins = 0.0;
    for p in pos {
        for q in neg {
            if p > q {
                wins += 1.0;
            } else if p == q {
                wins += 0.5;
            }
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Weighted 0-1 error of "predict +1 iff polarity * (score - theta) >= 0".
pub fn stump_error(scores: &[f64], labels: &[i8], weights: &[f64], theta: f64, polarity: i8) -> f64 {
    scores
        .iter()
        .zip(labels)
        .zip(weights)
        .filter(|((&s, &y), _)| {
            let positive = if polarity == 1 { s >= theta } else { s <= theta };
            (if positive { 1 } else { -1 }) != y
        })
        .map(|(_, w)| w)
        .sum()
}

fn distinct(scores: &[f64]) -> Vec<f64> {
    let mut d = scores.to_vec();
    d.sort_by(f64::total_cmp);
    d.dedup();
    d
}

/// `-inf`, a cut between each pair of consecutive distinct scores, `+inf`,
/// ascending. The cut above a `-inf` score is any finite value below the
/// next score.
pub fn candidate_cuts(scores: &[f64]) -> Vec<f64> {
    let mut cuts = vec![f64::NEG_INFINITY];
    cuts.extend(distinct(scores).windows(2).map(|w| {
        if w[0] == f64::NEG_INFINITY {
            w[1] - 1.0
        } else {
            (w[0] + w[1]) / 2.0
        }
    }));
    cuts.push(f64::INFINITY);
    cuts
}

/// Exhaustive stump search: lowest error, then smaller threshold, then
/// polarity +1.
pub fn exhaustive_stump(scores: &[f64], labels: &[i8], weights: &[f64]) -> (f64, i8, f64) {
    let mut best: Option<(f64, i8, f64)> = None;
    for theta in candidate_cuts(scores) {
        for polarity in [1i8, -1] {
            let e = stump_error(scores, labels, weights, theta, polarity);
            match best {
                Some((_, _, be)) if e >= be - 1e-12 => {}
                _ => best = Some((theta, polarity, e)),
            }
        }
    }
    best.unwrap()
}

/// Number of distinct scores strictly below `threshold`: identifies a cut
/// independently of where exactly it sits between two scores.
pub fn cut_rank(scores: &[f64], threshold: f64) -> usize {
    distinct(scores).iter().filter(|&&v| v < threshold).count()
}

/// A dial corpus held in memory, laid out as if loaded from disk.
pub fn dial_dataset(cfg: &hmmboost::synth::DialConfig, families: &[&str]) -> hmmboost::features::Dataset {
    let mut ds = hmmboost::features::Dataset::default();
    for spec in hmmboost::synth::dial_corpus(cfg, families).unwrap() {
        ds.families.insert(spec.family.clone(), spec.generate().unwrap());
    }
    ds
}

/// Experiment settings small enough for a unit-test budget.
pub fn quick_config() -> hmmboost::harness::ExperimentConfig {
    hmmboost::harness::ExperimentConfig {
        restarts: 3,
        top_k: 10,
        folds: 3,
        max_iterations: 20,
        coldstart_draws: 1,
        ..Default::default()
    }
}
