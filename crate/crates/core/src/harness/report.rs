use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::ExperimentConfig;
use super::experiment::ExperimentKind;
use crate::error::{Error, Result};
use crate::metrics::RocCurve;

/// Column order of `results.csv`.
pub const RESULTS_HEADER: &str = "experiment,family,morph_rate,train_size,method,auc,accuracy";

/// Column order of `roc_<cell>.csv`.
pub const ROC_HEADER: &str = "method,fold,threshold,fpr,tpr";

/// The three compared methods, in report order.
pub const METHODS: [&str; 3] = ["avg_hmm", "best_restart", "boosted"];

/// Outcome of one fold (or one cold-start draw).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub index: usize,
    pub train_seed: u64,
    pub n_train_malware: usize,
    pub n_test_malware: usize,
    pub n_train_benign: usize,
    pub n_test_benign: usize,
    pub vocabulary: Vec<String>,
    /// Fewer distinct training mnemonics than the requested vocabulary size.
    pub vocabulary_short: bool,
    pub coverage_percent: f64,
    pub avg_hmm_auc: f64,
    pub best_restart_auc: f64,
    pub boosted_auc: f64,
    pub avg_hmm_accuracy: f64,
    pub best_restart_accuracy: f64,
    pub boosted_accuracy: f64,
    pub best_restart_index: usize,
    pub best_restart_log_likelihood: f64,
    /// Highest test AUC of any single model. Picking it peeks at test labels,
    /// so it is a reference ceiling, not a method.
    pub max_model_auc: f64,
    pub boosted_rounds: usize,
    pub boosted_prefix: usize,
    pub roc_best_restart: RocCurve,
    pub roc_boosted: RocCurve,
}

/// One experiment cell: a family under one morph rate or training size,
/// averaged over its folds or draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub experiment: ExperimentKind,
    pub family: String,
    pub morph_rate: Option<f64>,
    pub train_size: Option<usize>,
    pub avg_hmm_auc: f64,
    pub best_restart_auc: f64,
    pub boosted_auc: f64,
    pub avg_hmm_accuracy: f64,
    pub best_restart_accuracy: f64,
    pub boosted_accuracy: f64,
    pub folds: Vec<FoldRecord>,
}

fn mean(folds: &[FoldRecord], f: impl Fn(&FoldRecord) -> f64) -> f64 {
    folds.iter().map(f).sum::<f64>() / folds.len() as f64
}

impl CellRecord {
    pub fn aggregate(
        experiment: ExperimentKind,
        family: &str,
        morph_rate: Option<f64>,
        train_size: Option<usize>,
        folds: Vec<FoldRecord>,
    ) -> Result<Self> {
        if folds.is_empty() {
            return Err(Error::invalid("a cell needs at least one fold"));
        }
        Ok(CellRecord {
            experiment,
            family: family.to_string(),
            morph_rate,
            train_size,
            avg_hmm_auc: mean(&folds, |f| f.avg_hmm_auc),
            best_restart_auc: mean(&folds, |f| f.best_restart_auc),
            boosted_auc: mean(&folds, |f| f.boosted_auc),
            avg_hmm_accuracy: mean(&folds, |f| f.avg_hmm_accuracy),
            best_restart_accuracy: mean(&folds, |f| f.best_restart_accuracy),
            boosted_accuracy: mean(&folds, |f| f.boosted_accuracy),
            folds,
        })
    }

    /// File-name-safe cell label, e.g. `morph_zeus_r0.5`.
    pub fn name(&self) -> String {
        let mut name = format!("{}_{}", self.experiment, self.family);
        if let Some(r) = self.morph_rate {
            name.push_str(&format!("_r{r}"));
        }
        if let Some(s) = self.train_size {
            name.push_str(&format!("_s{s}"));
        }
        name.chars()
            .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
            .collect()
    }

    /// `(auc, accuracy)` for a method name from [`METHODS`].
    pub fn method(&self, method: &str) -> Option<(f64, f64)> {
        match method {
            "avg_hmm" => Some((self.avg_hmm_auc, self.avg_hmm_accuracy)),
            "best_restart" => Some((self.best_restart_auc, self.best_restart_accuracy)),
            "boosted" => Some((self.boosted_auc, self.boosted_accuracy)),
            _ => None,
        }
    }
}

/// Wall-clock time of one fold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldTiming {
    pub train_seconds: f64,
    pub score_seconds: f64,
    pub boost_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub cell: String,
    pub folds: Vec<FoldTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub version: String,
    pub experiment: ExperimentKind,
    /// Seconds since the Unix epoch at creation.
    pub timestamp: u64,
    pub config: ExperimentConfig,
    /// Dataset files skipped because they held no mnemonics.
    pub unusable_samples: Vec<String>,
    pub cells: Vec<CellRecord>,
    /// Kept out of `report.json` so reruns compare equal; written to
    /// `timings.json` instead.
    #[serde(skip)]
    pub timings: Vec<CellTiming>,
}

impl EvaluationReport {
    pub fn new(experiment: ExperimentKind, config: ExperimentConfig, unusable_samples: Vec<String>) -> Self {
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        EvaluationReport {
            version: env!("CARGO_PKG_VERSION").to_string(),
            experiment,
            timestamp,
            config,
            unusable_samples,
            cells: Vec::new(),
            timings: Vec::new(),
        }
    }

    pub fn push(&mut self, cell: CellRecord, folds: Vec<FoldTiming>) {
        self.timings.push(CellTiming {
            cell: cell.name(),
            folds,
        });
        self.cells.push(cell);
    }

    /// Checks that every AUC and accuracy lies in `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        for cell in &self.cells {
            let mut values = vec![
                cell.avg_hmm_auc,
                cell.best_restart_auc,
                cell.boosted_auc,
                cell.avg_hmm_accuracy,
                cell.best_restart_accuracy,
                cell.boosted_accuracy,
            ];
            for f in &cell.folds {
                values.extend([
                    f.avg_hmm_auc,
                    f.best_restart_auc,
                    f.boosted_auc,
                    f.avg_hmm_accuracy,
                    f.best_restart_accuracy,
                    f.boosted_accuracy,
                    f.max_model_auc,
                ]);
            }
            if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::invalid(format!("cell {}: metric {v} outside [0, 1]", cell.name())));
            }
        }
        Ok(())
    }

    /// `report.json` text with floats rounded to 9 significant digits.
    pub fn to_json(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        round_floats(&mut value);
        let mut text = serde_json::to_string_pretty(&value)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// `results.csv`: one row per cell and method.
    pub fn results_csv(&self) -> String {
        let mut out = format!("{RESULTS_HEADER}\n");
        for cell in &self.cells {
            for m in METHODS {
                let (auc, acc) = cell.method(m).expect("known method");
                let _ = writeln!(
                    out,
                    "{},{},{},{},{m},{},{}",
                    cell.experiment,
                    cell.family,
                    cell.morph_rate.map(fmt_float).unwrap_or_default(),
                    cell.train_size.map(|s| s.to_string()).unwrap_or_default(),
                    fmt_float(auc),
                    fmt_float(acc)
                );
            }
        }
        out
    }
}

/// ROC points of the best-restart model and the boosted ensemble for each fold.
pub fn roc_csv(cell: &CellRecord) -> String {
    let mut out = format!("{ROC_HEADER}\n");
    for fold in &cell.folds {
        for (method, curve) in [("best_restart", &fold.roc_best_restart), ("boosted", &fold.roc_boosted)] {
            for p in &curve.points {
                let _ = writeln!(
                    out,
                    "{method},{},{},{},{}",
                    fold.index,
                    fmt_float(p.threshold),
                    fmt_float(p.fpr),
                    fmt_float(p.tpr)
                );
            }
        }
    }
    out
}

/// Rounds to 9 significant digits and prints the shortest form that reads
/// back to the rounded value.
pub fn fmt_float(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    round9(x).to_string()
}

fn round9(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round9).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Writes `results.csv`, one `roc_<cell>.csv` per cell, `report.json` and
/// `timings.json` under `outdir`, returning the paths written.
pub fn emit_reports(report: &EvaluationReport, outdir: &Path) -> Result<Vec<PathBuf>> {
    report.validate()?;
    fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    let mut files = vec![(outdir.join("results.csv"), report.results_csv())];
    for cell in &report.cells {
        files.push((outdir.join(format!("roc_{}.csv", cell.name())), roc_csv(cell)));
    }
    files.push((outdir.join("report.json"), report.to_json()?));
    if !report.timings.is_empty() {
        files.push((outdir.join("timings.json"), serde_json::to_string_pretty(&report.timings)? + "\n"));
    }
    let mut written = Vec::with_capacity(files.len());
    for (path, text) in files {
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Plain-text table of the cell means.
pub fn summary_table(report: &EvaluationReport) -> String {
    let mut out = format!(
        "{:<36} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
        "cell", "avg_auc", "best_auc", "boost_auc", "avg_acc", "best_acc", "boost_acc"
    );
    for c in &report.cells {
        let _ = writeln!(
            out,
            "{:<36} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            c.name(),
            c.avg_hmm_auc,
            c.best_restart_auc,
            c.boosted_auc,
            c.avg_hmm_accuracy,
            c.best_restart_accuracy,
            c.boosted_accuracy
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting() {
        assert_eq!(fmt_float(0.95), "0.95");
        assert_eq!(fmt_float(1.0), "1");
        assert_eq!(fmt_float(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_float(-123456.789012345), "-123456.789");
        assert_eq!(fmt_float(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn empty_report_has_header_only_csv() {
        let r = EvaluationReport::new(ExperimentKind::Baseline, ExperimentConfig::default(), vec![]);
        assert_eq!(r.results_csv(), format!("{RESULTS_HEADER}\n"));
        let dir = tempfile::tempdir().unwrap();
        let files = emit_reports(&r, dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        let back = EvaluationReport::load(&dir.path().join("report.json")).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn json_rounding_reaches_nested_values() {
        let mut v: Value = serde_json::json!({"a": [0.1234567891234, {"b": 2.0}], "c": 7});
        round_floats(&mut v);
        assert_eq!(v, serde_json::json!({"a": [0.123456789, {"b": 2.0}], "c": 7}));
    }
}
