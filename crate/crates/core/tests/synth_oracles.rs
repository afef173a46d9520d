use hmmboost::features::{build_vocabulary, coverage_stats, OpcodeListing};
use hmmboost::hmm::HmmParams;
use hmmboost::synth::{dial_benign, dial_malware, sample_sequence, separability_dial, DialConfig};

/// Stationary distribution of `A` by power iteration.
fn stationary(model: &HmmParams) -> Vec<f64> {
    let n = model.n_states();
    let mut p = vec![1.0 / n as f64; n];
    for _ in 0..10_000 {
        p = (0..n).map(|j| (0..n).map(|i| p[i] * model.a(i, j)).sum()).collect();
    }
    p
}

/// Long-run symbol distribution `sum_i pi_i * B[i][k]`.
fn symbol_marginal(model: &HmmParams) -> Vec<f64> {
    let pi = stationary(model);
    (0..model.n_symbols())
        .map(|k| (0..model.n_states()).map(|i| pi[i] * model.b(i, k)).sum())
        .collect()
}

fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[test]
fn long_samples_match_the_stationary_symbol_distribution() {
    let (mal, ben) = separability_dial(0.5).unwrap();
    for (spec, seed) in [(mal, 1), (ben, 2)] {
        let model = &spec.generator;
        let draws = sample_sequence(model, 400_000, seed);
        let mut freq = vec![0.0; model.n_symbols()];
        draws.iter().for_each(|&s| freq[s] += 1.0 / draws.len() as f64);
        let tv = total_variation(&freq, &symbol_marginal(model));
        assert!(tv < 0.01, "{}: TV {tv}", spec.family);
    }
}

#[test]
fn dial_sets_the_class_distance() {
    for delta in [0.0, 0.1, 0.35, 0.5, 0.8, 1.0] {
        let (mal, ben) = separability_dial(delta).unwrap();
        let tv = total_variation(&symbol_marginal(&mal.generator), &symbol_marginal(&ben.generator));
        assert!((tv - delta).abs() < 1e-9, "delta {delta}: TV {tv}");
    }
}

#[test]
fn top_k_coverage_matches_zipf_mass() {
    let cfg = DialConfig { delta: 1.0, malware_samples: 200, ..DialConfig::default() };
    let samples = dial_malware(&cfg, "fam", 0).unwrap().generate().unwrap();
    let refs: Vec<&OpcodeListing> = samples.iter().collect();
    let vocab = build_vocabulary("fam", &refs, 30).unwrap();
    let coverage = coverage_stats(&refs, &vocab).unwrap();
    // the ten-rank cyclic shift between states keeps the same top-30 set
    let weight = |r: usize| (r as f64).powf(-cfg.zipf_exponent);
    let expected = 100.0 * (1..=30).map(weight).sum::<f64>() / (1..=40).map(weight).sum::<f64>();
    assert!((coverage - expected).abs() < 0.02 * expected, "{coverage} vs {expected}");
}

#[test]
fn samples_respect_counts_and_lengths() {
    let cfg = DialConfig { min_len: 40, max_len: 45, benign_samples: 17, ..DialConfig::default() };
    let benign = dial_benign(&cfg).unwrap().generate().unwrap();
    assert_eq!(benign.len(), 17);
    assert!(benign.iter().all(|s| (40..=45).contains(&s.len())));
    let ids: std::collections::HashSet<&str> = benign.iter().map(|s| s.sample_id.as_str()).collect();
    assert_eq!(ids.len(), 17);
}
