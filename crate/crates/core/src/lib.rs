//! Learning interacting-multiple-model (IMM) filter parameters from
//! position measurements.
//!
//! The filters run over a differentiable scalar type, so the measurement
//! negative log-likelihood of a dataset comes with its gradient with
//! respect to the process noise per mode, the mode transition
//! probabilities and the measurement noise. Training descends that
//! gradient with AMSGrad.

pub mod autodiff;
pub mod error;
pub mod experiments;
pub mod filters;
pub mod loss;
pub mod metrics;
pub mod models;
pub mod optimizer;
pub mod simulator;

pub use error::{Error, Result};
pub use models::{FreezeMask, ModelConfig, ParamName, ParamVector};
pub use simulator::{Dataset, DatasetSpec, Trajectory};
