//! Hidden Markov model classifiers for opcode sequences, trained with many
//! random restarts or combined with AdaBoost, and the experiment harness that
//! compares the two.
//!
//! The crate is organised bottom-up:
//!
//! * [`hmm`]: model representation, scaled forward/backward, Baum-Welch.
//! * [`restarts`]: pools of independently initialized models.
//! * [`boosting`]: AdaBoost over threshold classifiers on per-model scores.
//! * [`metrics`]: accuracy, ROC/AUC and stratified folds.
//! * [`features`]: opcode listings, top-K vocabularies and encoding.
//! * [`morphing`]: benign-code injection into malware opcode streams.
//! * [`synth`]: planted Markov-source corpora for end-to-end checks.
//! * [`harness`]: the baseline, morphing and cold-start experiments.

pub mod boosting;
pub mod error;
pub mod features;
pub mod harness;
pub mod hmm;
pub mod metrics;
pub mod morphing;
pub mod restarts;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/hmm.md")]
    mod hmm {}
    #[doc = include_str!("../../../book/src/restarts.md")]
    mod restarts {}
    #[doc = include_str!("../../../book/src/boosting.md")]
    mod boosting {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/morphing.md")]
    mod morphing {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/synth.md")]
    mod synth {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
