//! Factorized variational posterior, its coordinate-ascent updates, the
//! bound `L̃`, and annealed training.

mod anneal;
mod diagnostics;
mod elbo;
mod factors;
mod posterior;
mod train;
mod updates;

pub use anneal::{annealing_schedule, AnnealingMode, AnnealingSchedule};
pub use diagnostics::{finite_difference_check, FactorKind, FiniteDifferenceReport, FD_TOLERANCE};
pub use elbo::{lower_bound, lower_bound_terms, BoundTerms};
pub use factors::{ExpertFactor, GaussianFactor, PrecisionFactor};
pub(crate) use factors::quad_form;
pub use posterior::{FixedPrecisions, HmePosterior, Responsibilities, XiParams};
pub use train::{sweep, train, TrainConfig, TrainFailure, TrainingTrace};
pub use updates::{
    update_alpha, update_beta, update_hyper_factors, update_q_tau, update_q_v, update_q_w,
    update_q_w_and_tau, update_q_z, update_xi, QzOptions, XiDiagnostics,
};
