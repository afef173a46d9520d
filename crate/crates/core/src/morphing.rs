//! Simulated code morphing by benign-opcode injection.
//!
//! `round(rate * T)` benign mnemonics are spliced into a malware listing of
//! length `T`, in contiguous blocks of at most `block_length` copied from
//! random offsets of random benign donors. A block that would run past the
//! end of its donor is cut short and the shortfall is covered by further
//! blocks. Each block lands in one of the `T + 1` gaps of the original
//! sequence, so the malware opcodes keep their relative order.
//!
//! Morphing works on raw mnemonics, before vocabulary encoding.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::OpcodeListing;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphConfig {
    /// Injected length as a fraction of the original length.
    pub rate: f64,
    pub block_length: usize,
    pub seed: u64,
}

impl Default for MorphConfig {
    fn default() -> Self {
        MorphConfig {
            rate: 0.0,
            block_length: 10,
            seed: 0,
        }
    }
}

impl MorphConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate >= 0.0) || !self.rate.is_finite() {
            return Err(Error::invalid(format!("morph rate must be >= 0, got {}", self.rate)));
        }
        if self.block_length == 0 {
            return Err(Error::invalid("morph block length must be at least 1"));
        }
        Ok(())
    }
}

/// Number of mnemonics injected into a listing of length `len`.
pub fn injected_count(len: usize, rate: f64) -> usize {
    (rate * len as f64).round() as usize
}

/// A morphed listing with a per-position flag marking injected mnemonics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MorphTrace {
    pub mnemonics: Vec<String>,
    pub injected: Vec<bool>,
}

impl MorphTrace {
    /// The original listing, recovered by dropping injected positions.
    pub fn original(&self) -> Vec<&str> {
        self.mnemonics
            .iter()
            .zip(&self.injected)
            .filter(|(_, &inj)| !inj)
            .map(|(m, _)| m.as_str())
            .collect()
    }
}

/// Morphs `malware` with code from `benign` donors.
pub fn morph(malware: &[String], benign: &[&OpcodeListing], cfg: &MorphConfig) -> Result<Vec<String>> {
    morph_traced(malware, benign, cfg).map(|t| t.mnemonics)
}

pub fn morph_traced(
    malware: &[String],
    benign: &[&OpcodeListing],
    cfg: &MorphConfig,
) -> Result<MorphTrace> {
    cfg.validate()?;
    if malware.is_empty() {
        return Err(Error::invalid("cannot morph an empty listing"));
    }
    let donors: Vec<&OpcodeListing> = benign.iter().copied().filter(|l| !l.is_empty()).collect();
    if donors.is_empty() {
        return Err(Error::invalid("morphing needs a non-empty benign corpus"));
    }

    let len = malware.len();
    let mut rng = seed::rng(cfg.seed);
    let mut remaining = injected_count(len, cfg.rate);
    let mut blocks: Vec<(usize, &[String])> = Vec::new();
    while remaining > 0 {
        let donor = donors[rng.gen_range(0..donors.len())];
        let offset = rng.gen_range(0..donor.len());
        let take = cfg.block_length.min(remaining).min(donor.len() - offset);
        let gap = rng.gen_range(0..=len);
        blocks.push((gap, &donor.mnemonics[offset..offset + take]));
        remaining -= take;
    }
    blocks.sort_by_key(|b| b.0);

    let total = len + blocks.iter().map(|b| b.1.len()).sum::<usize>();
    let mut mnemonics = Vec::with_capacity(total);
    let mut injected = Vec::with_capacity(total);
    let mut pending = blocks.into_iter().peekable();
    for gap in 0..=len {
        while let Some((_, block)) = pending.next_if(|b| b.0 == gap) {
            mnemonics.extend(block.iter().cloned());
            injected.extend(std::iter::repeat(true).take(block.len()));
        }
        if gap < len {
            mnemonics.push(malware[gap].clone());
            injected.push(false);
        }
    }
    Ok(MorphTrace {
        mnemonics,
        injected,
    })
}
