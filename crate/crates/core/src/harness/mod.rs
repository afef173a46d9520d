//! Experiment orchestration: configuration, the baseline, morphing and
//! cold-start protocols, and report files.
//!
//! Every random choice is seeded from the config's master seed through
//! [`crate::seed`], and parallel work is collected in index order, so a
//! report depends only on the config and dataset, not on the thread count.

mod config;
mod experiment;
mod persist;
mod report;

pub use config::ExperimentConfig;
pub use experiment::{
    evaluate_split, families, run, run_baseline, run_baseline_on, run_cold_start, run_cold_start_on,
    run_morphing, run_morphing_on, run_on, ExperimentKind, Split,
};
pub use persist::{train_family, FamilyModel, Scores};
pub use report::{
    emit_reports, fmt_float, roc_csv, summary_table, CellRecord, CellTiming, EvaluationReport,
    FoldRecord, FoldTiming, METHODS, RESULTS_HEADER, ROC_HEADER,
};

/// Runs `f` on a dedicated rayon pool with `threads` workers, or on the
/// global pool when `threads` is `None`.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> crate::Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(crate::Error::Config("threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| crate::Error::Config(format!("thread pool: {e}"))),
    }
}
