//! Opcode listings, top-K vocabularies and symbol encoding.
//!
//! A dataset is a directory tree `<root>/<family>/<sample_id>.opcodes`; each
//! file holds one mnemonic per line. Blank lines and lines starting with `;`
//! are ignored, anything after the first whitespace-separated token (operands)
//! is dropped, and mnemonics are lowercased. The family name `benign` is
//! reserved for the negative class.
//!
//! A [`Vocabulary`] keeps the `K` most frequent mnemonics of a family's
//! training samples; every other mnemonic maps to a single catch-all symbol,
//! giving `M = K + 1` observation symbols.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::ObservationSequence;

/// Reserved family name for benign samples.
pub const BENIGN: &str = "benign";

/// File extension of opcode listings.
pub const EXTENSION: &str = "opcodes";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpcodeListing {
    pub sample_id: String,
    pub family: String,
    pub mnemonics: Vec<String>,
}

impl OpcodeListing {
    pub fn parse(sample_id: &str, family: &str, text: &str) -> Result<Self> {
        let mnemonics =
            parse_listing(text).map_err(|_| Error::UnusableSample(sample_id.to_string()))?;
        Ok(OpcodeListing {
            sample_id: sample_id.to_string(),
            family: family.to_string(),
            mnemonics,
        })
    }

    pub fn len(&self) -> usize {
        self.mnemonics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mnemonics.is_empty()
    }

    /// The listing in `.opcodes` format.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.mnemonics.len() * 5);
        for m in &self.mnemonics {
            out.push_str(m);
            out.push('\n');
        }
        out
    }
}

/// Lowercased mnemonics of a `.opcodes` text, in file order.
pub fn parse_listing(text: &str) -> Result<Vec<String>> {
    let mnemonics: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with(';'))
        .filter_map(|l| l.split_whitespace().next())
        .map(str::to_lowercase)
        .collect();
    if mnemonics.is_empty() {
        return Err(Error::UnusableSample("<text>".into()));
    }
    Ok(mnemonics)
}

/// Top-K mnemonic map for one family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabularyFile", into = "VocabularyFile")]
pub struct Vocabulary {
    family: String,
    k: usize,
    top_opcodes: Vec<String>,
    index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    family: String,
    k: usize,
    top_opcodes: Vec<String>,
}

impl From<VocabularyFile> for Vocabulary {
    fn from(f: VocabularyFile) -> Self {
        Vocabulary::from_top(f.family, f.k, f.top_opcodes)
    }
}

impl From<Vocabulary> for VocabularyFile {
    fn from(v: Vocabulary) -> Self {
        VocabularyFile {
            family: v.family,
            k: v.k,
            top_opcodes: v.top_opcodes,
        }
    }
}

impl Vocabulary {
    fn from_top(family: String, k: usize, top_opcodes: Vec<String>) -> Self {
        let index = top_opcodes
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i as u32))
            .collect();
        Vocabulary {
            family,
            k,
            top_opcodes,
            index,
        }
    }

    pub fn family(&self) -> &str {
        &self.family
    }

    /// Requested vocabulary size.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn top_opcodes(&self) -> &[String] {
        &self.top_opcodes
    }

    /// True when the training corpus had fewer than `k` distinct mnemonics.
    pub fn is_short(&self) -> bool {
        self.top_opcodes.len() < self.k
    }

    /// Index of the catch-all symbol.
    pub fn other_symbol(&self) -> u32 {
        self.top_opcodes.len() as u32
    }

    /// Observation alphabet size `M`.
    pub fn n_symbols(&self) -> usize {
        self.top_opcodes.len() + 1
    }

    pub fn symbol(&self, mnemonic: &str) -> u32 {
        self.index.get(mnemonic).copied().unwrap_or(self.other_symbol())
    }

    pub fn encode_mnemonics<S: AsRef<str>>(&self, mnemonics: &[S]) -> ObservationSequence {
        ObservationSequence::new(mnemonics.iter().map(|m| self.symbol(m.as_ref())).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Counts mnemonics over `train_samples` and keeps the `k` most frequent,
/// ties broken lexicographically.
pub fn build_vocabulary(
    family: &str,
    train_samples: &[&OpcodeListing],
    k: usize,
) -> Result<Vocabulary> {
    if k == 0 {
        return Err(Error::invalid("vocabulary size must be at least 1"));
    }
    if train_samples.is_empty() {
        return Err(Error::invalid("vocabulary needs at least one sample"));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for s in train_samples {
        for m in &s.mnemonics {
            *counts.entry(m.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let top: Vec<String> = ranked.iter().take(k).map(|(m, _)| m.to_string()).collect();
    if top.len() < k {
        log::warn!(
            "family {family}: only {} distinct mnemonics for a top-{k} vocabulary",
            top.len()
        );
    }
    Ok(Vocabulary::from_top(family.to_string(), k, top))
}

pub fn encode(listing: &OpcodeListing, vocab: &Vocabulary) -> ObservationSequence {
    vocab.encode_mnemonics(&listing.mnemonics)
}

/// Percentage of mnemonics in `samples` that fall inside the vocabulary.
pub fn coverage_stats(samples: &[&OpcodeListing], vocab: &Vocabulary) -> Result<f64> {
    let total: usize = samples.iter().map(|s| s.len()).sum();
    if total == 0 {
        return Err(Error::invalid("coverage of an empty sample set"));
    }
    let inside: usize = samples
        .iter()
        .flat_map(|s| &s.mnemonics)
        .filter(|m| vocab.index.contains_key(m.as_str()))
        .count();
    Ok(100.0 * inside as f64 / total as f64)
}

/// All usable samples under a dataset root, keyed by family.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub root: PathBuf,
    /// Samples of each family, sorted by sample id.
    pub families: BTreeMap<String, Vec<OpcodeListing>>,
    /// Files that parsed to no mnemonics.
    pub unusable: Vec<PathBuf>,
}

impl Dataset {
    pub fn load(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        let entries = fs::read_dir(root)
            .map_err(|e| Error::Dataset(format!("cannot read {}: {e}", root.display())))?;
        let mut dataset = Dataset {
            root: root.to_path_buf(),
            ..Dataset::default()
        };
        let mut dirs: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        for dir in dirs {
            let family = dir
                .file_name()
                .and_then(|n| n.to_str())
                .ok_or_else(|| Error::Dataset(format!("bad family name {}", dir.display())))?
                .to_string();
            let samples = load_family_dir(&dir, &family, &mut dataset.unusable)?;
            dataset.families.insert(family, samples);
        }
        Ok(dataset)
    }

    pub fn family(&self, name: &str) -> Result<&[OpcodeListing]> {
        self.families
            .get(name)
            .map(Vec::as_slice)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| {
                Error::Dataset(format!(
                    "family {name:?} missing or empty under {}",
                    self.root.display()
                ))
            })
    }

    pub fn benign(&self) -> Result<&[OpcodeListing]> {
        self.family(BENIGN)
    }

    /// Malware family names, i.e. everything except `benign`.
    pub fn malware_families(&self) -> Vec<&str> {
        self.families
            .keys()
            .map(String::as_str)
            .filter(|f| *f != BENIGN)
            .collect()
    }
}

fn load_family_dir(
    dir: &Path,
    family: &str,
    unusable: &mut Vec<PathBuf>,
) -> Result<Vec<OpcodeListing>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::Dataset(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some(EXTENSION))
        .collect();
    files.sort();
    let mut samples = Vec::with_capacity(files.len());
    for path in files {
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        match OpcodeListing::parse(&id, family, &text) {
            Ok(listing) => samples.push(listing),
            Err(Error::UnusableSample(_)) => {
                log::warn!("skipping unusable sample {}", path.display());
                unusable.push(path);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(samples)
}

/// Writes `listing` as `<root>/<family>/<sample_id>.opcodes`.
pub fn write_listing(root: &Path, listing: &OpcodeListing) -> Result<PathBuf> {
    let dir = root.join(&listing.family);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = dir.join(format!("{}.{EXTENSION}", listing.sample_id));
    fs::write(&path, listing.to_text()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn listing(id: &str, ops: &[&str]) -> OpcodeListing {
        OpcodeListing {
            sample_id: id.into(),
            family: "fam".into(),
            mnemonics: ops.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn parse_format() {
        assert_eq!(
            parse_listing("MOV\npush\n\n; comment\nadd").unwrap(),
            vec!["mov", "push", "add"]
        );
        assert_eq!(
            parse_listing("  Mov eax, ebx\r\n\tcall  foo\n").unwrap(),
            vec!["mov", "call"]
        );
        assert!(parse_listing("").is_err());
        assert!(matches!(
            OpcodeListing::parse("s1", "f", "; only\n\n"),
            Err(Error::UnusableSample(id)) if id == "s1"
        ));
    }

    #[test]
    fn parse_keeps_every_line() {
        let text = "nop\n".repeat(1_000_000);
        assert_eq!(parse_listing(&text).unwrap().len(), 1_000_000);
    }

    #[test]
    fn vocabulary_counts_and_ties() {
        let s = listing(
            "a",
            &["mov", "mov", "mov", "mov", "mov", "push", "push", "push", "add", "add", "xor"],
        );
        let v = build_vocabulary("fam", &[&s], 2).unwrap();
        assert_eq!(v.top_opcodes(), &["mov", "push"]);
        assert_eq!(v.n_symbols(), 3);
        assert_eq!(v.symbol("add"), 2);
        assert_eq!(v.symbol("xor"), 2);

        let tie = listing("b", &["mov", "add", "mov", "add", "add", "mov"]);
        let v = build_vocabulary("fam", &[&tie], 1).unwrap();
        assert_eq!(v.top_opcodes(), &["add"]);
    }

    #[test]
    fn short_vocabulary_is_flagged() {
        let s = listing("a", &["mov", "push"]);
        let v = build_vocabulary("fam", &[&s], 30).unwrap();
        assert!(v.is_short());
        assert_eq!(v.n_symbols(), 3);
        assert!(build_vocabulary("fam", &[], 3).is_err());
        assert!(build_vocabulary("fam", &[&s], 0).is_err());
    }

    #[test]
    fn encoding() {
        let s = listing("a", &["mov", "push", "mov"]);
        let v = build_vocabulary("fam", &[&s], 2).unwrap();
        let x = listing("x", &["mov", "xor", "push"]);
        assert_eq!(encode(&x, &v).symbols(), &[0, 2, 1]);
        let unseen = listing("u", &["ud2", "hlt"]);
        assert_eq!(encode(&unseen, &v).symbols(), &[2, 2]);
    }

    #[test]
    fn coverage_matches_other_fraction() {
        let a = listing("a", &["mov", "mov", "push", "add", "xor", "mov"]);
        let b = listing("b", &["push", "nop"]);
        let v = build_vocabulary("fam", &[&a, &b], 2).unwrap();
        let cov = coverage_stats(&[&a, &b], &v).unwrap();
        let other: usize = [&a, &b]
            .iter()
            .map(|s| encode(s, &v).symbols().iter().filter(|&&x| x == v.other_symbol()).count())
            .sum();
        assert!((cov / 100.0 - (1.0 - other as f64 / 8.0)).abs() < 1e-12);
        let full = build_vocabulary("fam", &[&a, &b], 10).unwrap();
        assert_eq!(coverage_stats(&[&a, &b], &full).unwrap(), 100.0);
    }

    #[test]
    fn vocabulary_json_round_trip() {
        let s = listing("a", &["mov", "push", "mov"]);
        let v = build_vocabulary("fam", &[&s], 30).unwrap();
        let json = v.to_json().unwrap();
        assert!(json.contains("\"top_opcodes\""));
        let back = Vocabulary::from_json(&json).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.symbol("push"), 1);
    }

    #[test]
    fn dataset_layout() {
        let dir = tempfile::tempdir().unwrap();
        write_listing(dir.path(), &listing("s2", &["push"])).unwrap();
        write_listing(dir.path(), &listing("s1", &["mov"])).unwrap();
        let mut b = listing("b1", &["ret"]);
        b.family = BENIGN.into();
        write_listing(dir.path(), &b).unwrap();
        fs::write(dir.path().join("fam").join("empty.opcodes"), "; nothing\n").unwrap();
        fs::write(dir.path().join("fam").join("notes.txt"), "ignored").unwrap();

        let ds = Dataset::load(dir.path()).unwrap();
        let fam = ds.family("fam").unwrap();
        assert_eq!(fam.len(), 2);
        assert_eq!(fam[0].sample_id, "s1");
        assert_eq!(ds.benign().unwrap().len(), 1);
        assert_eq!(ds.malware_families(), vec!["fam"]);
        assert_eq!(ds.unusable.len(), 1);
        assert!(matches!(ds.family("nope"), Err(Error::Dataset(_))));
        assert!(matches!(Dataset::load(dir.path().join("missing")), Err(Error::Dataset(_))));
    }
}
