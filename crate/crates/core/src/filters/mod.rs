//! Mode-conditioned Kalman filtering and the IMM recursion.
//!
//! All routines are generic over [`Scalar`](crate::autodiff::Scalar), so a
//! filter pass over `DiffScalar`s yields parameter gradients of every
//! estimate.

mod imm;
mod kalman;

pub use imm::{
    combined_mean, imm_combine, imm_mix, imm_step, init_belief, predicted_measurement_moments, run_filter,
    ImmBelief, MeasPrediction, StepRecord, WEIGHT_FLOOR,
};
pub use kalman::{innovation_cov, kf_predict, kf_update, GaussianState};
