//! Planted-ground-truth corpora.
//!
//! Samples are drawn by running a generator HMM over a synthetic mnemonic
//! alphabet and written in the dataset layout read by
//! [`crate::features::Dataset`]. [`separability_dial`] produces a
//! malware/benign source pair whose difficulty is set by a single number
//! `delta`:
//!
//! * the alphabet has two halves; "pure" malware rows put Zipf-shaped mass
//!   on the first half only and pure benign rows on the second half only;
//! * a shared row `S_j` is the average of malware variant 0's and the benign
//!   pure row for state `j`;
//! * malware emits `(1 - delta) * S_j + delta * M_j` and benign
//!   `(1 - delta) * S_j + delta * B_j`;
//! * malware states are sticky (each stays put with `stay_probability`),
//!   while benign transitions are `(1 - delta) * sticky + delta * uniform`,
//!   so benign code also loses its state structure as `delta` grows.
//!
//! At `delta = 0` the two sources are identical; at `delta = 1` their
//! emissions have disjoint support. Generator states differ by a cyclic
//! shift of the ten most frequent mnemonics, and the default generator has
//! three states so that the usual two-state model is misspecified.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{write_listing, OpcodeListing, BENIGN};
use crate::hmm::HmmParams;
use crate::seed;

/// Generator for one family's samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub family: String,
    pub generator: HmmParams,
    /// Mnemonic emitted for each generator symbol.
    pub alphabet: Vec<String>,
    pub sample_count: usize,
    /// Sample lengths are uniform on `min_len..=max_len`.
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl SourceSpec {
    pub fn validate(&self) -> Result<()> {
        self.generator
            .validate(1e-9)
            .map_err(|e| Error::invalid(format!("generator for {}: {e}", self.family)))?;
        if self.alphabet.len() != self.generator.n_symbols() {
            return Err(Error::invalid(format!(
                "alphabet has {} entries but the generator emits {} symbols",
                self.alphabet.len(),
                self.generator.n_symbols()
            )));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::invalid(format!(
                "bad length range {}..={}",
                self.min_len, self.max_len
            )));
        }
        if self.family.is_empty() {
            return Err(Error::invalid("family name must not be empty"));
        }
        Ok(())
    }

    /// Draws every sample of this source. Sample `i` uses seed
    /// `seed::derive(self.seed, i)`.
    pub fn generate(&self) -> Result<Vec<OpcodeListing>> {
        self.validate()?;
        let sampler = Sampler::new(&self.generator);
        Ok((0..self.sample_count)
            .into_par_iter()
            .map(|i| {
                let mut rng = seed::rng(seed::derive(self.seed, i as u64));
                let len = rng.gen_range(self.min_len..=self.max_len);
                let mnemonics = sampler
                    .sample(len, &mut rng)
                    .into_iter()
                    .map(|s| self.alphabet[s].clone())
                    .collect();
                OpcodeListing {
                    sample_id: format!("{}_{i:04}", self.family),
                    family: self.family.clone(),
                    mnemonics,
                }
            })
            .collect())
    }
}

/// Cumulative rows for inverse-CDF sampling.
struct Sampler {
    n_states: usize,
    initial: Vec<f64>,
    transition: Vec<Vec<f64>>,
    emission: Vec<Vec<f64>>,
}

impl Sampler {
    fn new(hmm: &HmmParams) -> Self {
        let cumulative = |row: &[f64]| -> Vec<f64> {
            row.iter()
                .scan(0.0, |acc, &p| {
                    *acc += p;
                    Some(*acc)
                })
                .collect()
        };
        let n = hmm.n_states();
        Sampler {
            n_states: n,
            initial: cumulative(hmm.initial()),
            transition: (0..n).map(|i| cumulative(hmm.transition_row(i))).collect(),
            emission: (0..n).map(|i| cumulative(hmm.emission_row(i))).collect(),
        }
    }

    fn draw(cdf: &[f64], rng: &mut ChaCha8Rng) -> usize {
        let u = rng.gen::<f64>() * cdf[cdf.len() - 1];
        cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
    }

    fn sample(&self, len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        debug_assert!(self.n_states > 0);
        let mut state = Self::draw(&self.initial, rng);
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            out.push(Self::draw(&self.emission[state], rng));
            state = Self::draw(&self.transition[state], rng);
        }
        out
    }
}

/// Draws one symbol sequence of length `len` from `hmm`.
pub fn sample_sequence(hmm: &HmmParams, len: usize, seed: u64) -> Vec<usize> {
    Sampler::new(hmm).sample(len, &mut seed::rng(seed))
}

/// Generates every spec and writes the samples under `root`, plus the specs
/// themselves as `root/synth_specs.json`. Returns the number of files written.
pub fn generate_corpus(specs: &[SourceSpec], root: &Path) -> Result<usize> {
    if specs.is_empty() {
        return Err(Error::invalid("no source specs given"));
    }
    let mut written = 0;
    for spec in specs {
        for listing in spec.generate()? {
            write_listing(root, &listing)?;
            written += 1;
        }
    }
    let path = root.join("synth_specs.json");
    fs::write(&path, serde_json::to_string_pretty(specs)?).map_err(|e| Error::io(&path, e))?;
    Ok(written)
}

/// Normalized Zipf weights `1 / (r + 1)^exponent` for ranks `0..len`.
pub fn zipf_row(len: usize, exponent: f64) -> Vec<f64> {
    let mut w: Vec<f64> = (0..len).map(|r| 1.0 / ((r + 1) as f64).powf(exponent)).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    w
}

const MNEMONICS: [&str; 40] = [
    "mov", "push", "call", "pop", "cmp", "jz", "lea", "test", "jmp", "add", "jnz", "retn", "xor",
    "and", "sub", "inc", "dec", "or", "shl", "shr", "movzx", "imul", "sbb", "adc", "nop", "jb",
    "ja", "jl", "jg", "jbe", "jge", "jle", "setz", "cdq", "div", "neg", "not", "xchg", "stosb",
    "movsx",
];

/// `size` distinct lowercase mnemonics: real x86 names first, then `op<N>`.
pub fn synthetic_alphabet(size: usize) -> Vec<String> {
    (0..size)
        .map(|i| match MNEMONICS.get(i) {
            Some(m) => m.to_string(),
            None => format!("op{i}"),
        })
        .collect()
}

/// Shape of a [`separability_dial`] source pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialConfig {
    pub delta: f64,
    /// Mnemonics per alphabet half; the full alphabet is twice this.
    pub half_alphabet: usize,
    pub zipf_exponent: f64,
    pub generator_states: usize,
    /// Self-transition probability of every generator state.
    pub stay_probability: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub malware_samples: usize,
    pub benign_samples: usize,
    pub seed: u64,
}

impl Default for DialConfig {
    fn default() -> Self {
        DialConfig {
            delta: 0.5,
            half_alphabet: 40,
            zipf_exponent: 1.2,
            generator_states: 3,
            stay_probability: 0.8,
            min_len: 100,
            max_len: 300,
            malware_samples: 60,
            benign_samples: 107,
            seed: 0,
        }
    }
}

impl DialConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::invalid(format!("delta {} outside [0, 1]", self.delta)));
        }
        if self.half_alphabet < 10 {
            return Err(Error::invalid("half_alphabet must be at least 10"));
        }
        if self.generator_states == 0 {
            return Err(Error::invalid("generator needs at least one state"));
        }
        if !(0.0..=1.0).contains(&self.stay_probability) {
            return Err(Error::invalid("stay_probability outside [0, 1]"));
        }
        Ok(())
    }
}

/// Malware (variant 0, family `"malware"`) and benign sources for `delta`
/// with the default shape.
pub fn separability_dial(delta: f64) -> Result<(SourceSpec, SourceSpec)> {
    let cfg = DialConfig {
        delta,
        ..DialConfig::default()
    };
    Ok((dial_malware(&cfg, "malware", 0)?, dial_benign(&cfg)?))
}

/// Malware source for `family`. Variants permute the malware half of the
/// alphabet so that several families can share one benign source.
pub fn dial_malware(cfg: &DialConfig, family: &str, variant: usize) -> Result<SourceSpec> {
    cfg.validate()?;
    let shared = shared_rows(cfg);
    let pure = pure_rows(cfg, 0, &variant_permutation(cfg.half_alphabet, variant));
    Ok(dial_spec(
        cfg,
        family,
        sticky_rows(cfg),
        mix(&shared, &pure, cfg.delta),
        cfg.malware_samples,
        seed::derive_named(cfg.seed, family),
    ))
}

/// The benign source of a dial.
pub fn dial_benign(cfg: &DialConfig) -> Result<SourceSpec> {
    cfg.validate()?;
    let shared = shared_rows(cfg);
    let pure = pure_rows(cfg, cfg.half_alphabet, &identity(cfg.half_alphabet));
    let n = cfg.generator_states;
    let uniform = vec![vec![1.0 / n as f64; n]; n];
    Ok(dial_spec(
        cfg,
        BENIGN,
        mix(&sticky_rows(cfg), &uniform, cfg.delta),
        mix(&shared, &pure, cfg.delta),
        cfg.benign_samples,
        seed::derive_named(cfg.seed, BENIGN),
    ))
}

/// Specs for several malware families plus the shared benign source.
pub fn dial_corpus(cfg: &DialConfig, families: &[&str]) -> Result<Vec<SourceSpec>> {
    let mut specs = families
        .iter()
        .enumerate()
        .map(|(v, f)| dial_malware(cfg, f, v))
        .collect::<Result<Vec<_>>>()?;
    specs.push(dial_benign(cfg)?);
    Ok(specs)
}

fn identity(n: usize) -> Vec<usize> {
    (0..n).collect()
}

fn variant_permutation(n: usize, variant: usize) -> Vec<usize> {
    let mut p = identity(n);
    if variant > 0 {
        p.shuffle(&mut seed::rng(seed::derive_named(variant as u64, "variant")));
    }
    p
}

/// Pure emission rows over the half starting at `offset`; `perm` maps
/// frequency ranks to tokens within that half.
fn pure_rows(cfg: &DialConfig, offset: usize, perm: &[usize]) -> Vec<Vec<f64>> {
    let half = cfg.half_alphabet;
    let zipf = zipf_row(half, cfg.zipf_exponent);
    (0..cfg.generator_states)
        .map(|state| {
            let mut row = vec![0.0; 2 * half];
            for (rank, &p) in zipf.iter().enumerate() {
                let shifted = if rank < 10 { (rank + 3 * state) % 10 } else { rank };
                row[offset + perm[shifted]] = p;
            }
            row
        })
        .collect()
}

fn shared_rows(cfg: &DialConfig) -> Vec<Vec<f64>> {
    let mal = pure_rows(cfg, 0, &identity(cfg.half_alphabet));
    let ben = pure_rows(cfg, cfg.half_alphabet, &identity(cfg.half_alphabet));
    mix(&mal, &ben, 0.5)
}

/// Row-wise `(1 - t) * a + t * b`.
fn mix(a: &[Vec<f64>], b: &[Vec<f64>], t: f64) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| {
            let mut row: Vec<f64> = ra.iter().zip(rb).map(|(x, y)| (1.0 - t) * x + t * y).collect();
            crate::hmm::normalize_row(&mut row);
            row
        })
        .collect()
}

/// Transitions that stay put with `stay_probability` and otherwise move to
/// another state uniformly.
fn sticky_rows(cfg: &DialConfig) -> Vec<Vec<f64>> {
    let n = cfg.generator_states;
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| match (n, i == j) {
                    (1, _) => 1.0,
                    (_, true) => cfg.stay_probability,
                    (_, false) => (1.0 - cfg.stay_probability) / (n - 1) as f64,
                })
                .collect()
        })
        .collect()
}

fn dial_spec(
    cfg: &DialConfig,
    family: &str,
    transition: Vec<Vec<f64>>,
    emission: Vec<Vec<f64>>,
    sample_count: usize,
    seed: u64,
) -> SourceSpec {
    let n = cfg.generator_states;
    let generator = HmmParams::new(transition, emission, vec![1.0 / n as f64; n])
        .expect("dial rows are stochastic by construction");
    SourceSpec {
        family: family.to_string(),
        generator,
        alphabet: synthetic_alphabet(2 * cfg.half_alphabet),
        sample_count,
        min_len: cfg.min_len,
        max_len: cfg.max_len,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_single_token_source() {
        let generator = HmmParams::new(vec![vec![1.0]], vec![vec![0.0, 1.0, 0.0]], vec![1.0]).unwrap();
        let spec = SourceSpec {
            family: "const".into(),
            generator,
            alphabet: synthetic_alphabet(3),
            sample_count: 5,
            min_len: 3,
            max_len: 9,
            seed: 1,
        };
        for s in spec.generate().unwrap() {
            assert!(s.mnemonics.iter().all(|m| m == "push"));
            assert!((3..=9).contains(&s.len()));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let (m, _) = separability_dial(0.3).unwrap();
        assert_eq!(m.generate().unwrap(), m.generate().unwrap());
    }

    #[test]
    fn dial_endpoints() {
        let (m0, b0) = separability_dial(0.0).unwrap();
        assert_eq!(m0.generator, b0.generator);
        let (m1, b1) = separability_dial(1.0).unwrap();
        for i in 0..3 {
            for (x, y) in m1.generator.emission_row(i).iter().zip(b1.generator.emission_row(i)) {
                assert!(*x == 0.0 || *y == 0.0);
            }
        }
        assert!(separability_dial(1.5).is_err());
    }

    #[test]
    fn variants_share_benign_at_zero() {
        let cfg = DialConfig { delta: 0.0, ..DialConfig::default() };
        let specs = dial_corpus(&cfg, &["fam_a", "fam_b"]).unwrap();
        assert_eq!(specs.len(), 3);
        assert_eq!(specs[0].generator, specs[2].generator);
        assert_eq!(specs[1].generator, specs[2].generator);
        let cfg = DialConfig { delta: 1.0, ..cfg };
        let specs = dial_corpus(&cfg, &["fam_a", "fam_b"]).unwrap();
        assert_ne!(specs[0].generator, specs[1].generator);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let (mut m, _) = separability_dial(0.5).unwrap();
        m.alphabet.pop();
        assert!(m.generate().is_err());
        let (mut m, _) = separability_dial(0.5).unwrap();
        m.min_len = 0;
        assert!(m.generate().is_err());
        assert!(generate_corpus(&[], Path::new("/nonexistent")).is_err());
    }

    #[test]
    fn corpus_files_land_in_dataset_layout() {
        let dir = tempfile::tempdir().unwrap();
        let (mut m, mut b) = separability_dial(0.5).unwrap();
        m.sample_count = 74;
        b.sample_count = 3;
        assert_eq!(generate_corpus(&[m, b], dir.path()).unwrap(), 77);
        let count = |f: &str| fs::read_dir(dir.path().join(f)).unwrap().count();
        assert_eq!(count("malware"), 74);
        assert_eq!(count("benign"), 3);
        assert!(dir.path().join("synth_specs.json").exists());
    }
}
