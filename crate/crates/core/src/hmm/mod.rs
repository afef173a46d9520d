//! Discrete-observation hidden Markov models.
//!
//! A model is the triple `(A, B, pi)` held in [`HmmParams`]. Training is
//! Baum-Welch re-estimation from a near-uniform random start, which is a hill
//! climb on `ln P(O | model)`: different starting points can end at
//! different local optima, which is what [`crate::restarts`] exploits.
//!
//! Sequences are scored by log-likelihood per observation ([`score_llpo`]),
//! so that samples of different lengths are comparable.

mod params;
mod scaled;
mod train;

pub use params::{HmmParams, ObservationSequence};
pub(crate) use params::normalize as normalize_row;
pub use scaled::{
    backward_scaled, forward_scaled, posteriors, score_llpo, BackwardPass, ForwardPass,
};
pub use train::{baum_welch_observe, baum_welch_train, train_from_seed, TrainedModel, TrainingConfig};
