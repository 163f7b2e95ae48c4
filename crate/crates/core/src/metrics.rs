//! Tracking and mode-estimation error metrics.
//!
//! State RMSE uses position components only, aggregated as
//! `sqrt(mean over steps and both axes of the squared error)`. Mode MAE is
//! measured on the weight of mode 1 (the maneuvering mode) against the true
//! mode indicator. Both cover steps `t >= 2`, where the filter has run.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{combined_mean, run_filter, ImmBelief};
use crate::models::{ImmModel, ModelConfig, ParamVector};
use crate::simulator::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub state_pred_rmse: f64,
    pub state_post_rmse: f64,
    pub mode_pred_mae: Option<f64>,
    pub mode_post_mae: Option<f64>,
    pub n_steps: usize,
}

/// Metric identifiers in table order.
pub const METRIC_NAMES: [&str; 4] = ["state_pred_rmse", "state_post_rmse", "mode_pred_mae", "mode_post_mae"];

impl EvalResult {
    /// Values in [`METRIC_NAMES`] order.
    pub fn metrics(&self) -> [Option<f64>; 4] {
        [
            Some(self.state_pred_rmse),
            Some(self.state_post_rmse),
            self.mode_pred_mae,
            self.mode_post_mae,
        ]
    }

    pub const CSV_HEADER: &'static str = "state_pred_rmse,state_post_rmse,mode_pred_mae,mode_post_mae,n_steps";

    /// Missing values are written as empty fields.
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            self.state_pred_rmse,
            self.state_post_rmse,
            opt(self.mode_pred_mae),
            opt(self.mode_post_mae),
            self.n_steps
        )
    }
}

/// Squared-error sums of one trajectory.
#[derive(Debug, Clone, Copy, Default)]
struct Accum {
    pred_sq: f64,
    post_sq: f64,
    pred_abs: f64,
    post_abs: f64,
    steps: usize,
}

impl Accum {
    fn merge(self, o: Accum) -> Accum {
        Accum {
            pred_sq: self.pred_sq + o.pred_sq,
            post_sq: self.post_sq + o.post_sq,
            pred_abs: self.pred_abs + o.pred_abs,
            post_abs: self.post_abs + o.post_abs,
            steps: self.steps + o.steps,
        }
    }
}

fn position_sq_error(b: &ImmBelief, truth: &[f64; 4]) -> Result<f64> {
    let x = combined_mean(b)?;
    Ok((x[(0, 0)] - truth[0]).powi(2) + (x[(2, 0)] - truth[2]).powi(2))
}

fn trajectory_errors(traj: &Trajectory, model: &ImmModel<f64>) -> Result<Accum> {
    if traj.states.len() != traj.measurements.len() || traj.modes.len() != traj.measurements.len() {
        return Err(Error::Data("trajectory lacks ground truth for every step".into()));
    }
    let two_mode = model.cfg.m >= 2;
    let mut acc = Accum::default();
    run_filter(&traj.measurements, model, |t, rec| {
        let truth = &traj.states[t];
        acc.pred_sq += position_sq_error(&rec.predicted, truth)?;
        acc.post_sq += position_sq_error(&rec.posterior, truth)?;
        if two_mode {
            let target = if traj.modes[t] == 1 { 1.0 } else { 0.0 };
            acc.pred_abs += (rec.predicted.weights[1] - target).abs();
            acc.post_abs += (rec.posterior.weights[1] - target).abs();
        }
        acc.steps += 1;
        Ok(())
    })?;
    Ok(acc)
}

/// Run the plain filter with `params` over `trajectories` and score it
/// against their ground truth.
pub fn evaluate(params: &ParamVector, cfg: &ModelConfig, trajectories: &[&Trajectory]) -> Result<EvalResult> {
    if trajectories.is_empty() {
        return Err(Error::Data("no trajectories to evaluate".into()));
    }
    let model = ImmModel::new(params, cfg)?;
    let parts: Vec<Accum> = trajectories
        .par_iter()
        .enumerate()
        .map(|(i, t)| trajectory_errors(t, &model).map_err(|e| e.in_trajectory(i)))
        .collect::<Result<_>>()?;
    let acc = parts.into_iter().fold(Accum::default(), Accum::merge);
    if acc.steps == 0 {
        return Err(Error::Data("no filtered steps to evaluate".into()));
    }
    let n = acc.steps as f64;
    let mae = |s: f64| (cfg.m >= 2).then(|| s / n);
    Ok(EvalResult {
        state_pred_rmse: (acc.pred_sq / (2.0 * n)).sqrt(),
        state_post_rmse: (acc.post_sq / (2.0 * n)).sqrt(),
        mode_pred_mae: mae(acc.pred_abs),
        mode_post_mae: mae(acc.post_abs),
        n_steps: acc.steps,
    })
}

/// Position RMSE of arbitrary estimates under the same convention as
/// [`evaluate`].
pub fn position_rmse(estimates: &[[f64; 2]], truth: &[[f64; 2]]) -> Result<f64> {
    if estimates.len() != truth.len() || estimates.is_empty() {
        return Err(Error::Data(format!(
            "{} estimates for {} truth positions",
            estimates.len(),
            truth.len()
        )));
    }
    let sq: f64 = estimates
        .iter()
        .zip(truth)
        .map(|(e, t)| (e[0] - t[0]).powi(2) + (e[1] - t[1]).powi(2))
        .sum();
    Ok((sq / (2.0 * estimates.len() as f64)).sqrt())
}

/// Percentage change of each metric of `a` relative to baseline `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeChange {
    pub state_pred_rmse: f64,
    pub state_post_rmse: f64,
    pub mode_pred_mae: Option<f64>,
    pub mode_post_mae: Option<f64>,
}

impl RelativeChange {
    pub fn metrics(&self) -> [Option<f64>; 4] {
        [
            Some(self.state_pred_rmse),
            Some(self.state_post_rmse),
            self.mode_pred_mae,
            self.mode_post_mae,
        ]
    }
}

fn pct(a: f64, b: f64, metric: &'static str) -> Result<f64> {
    if b == 0.0 || !b.is_finite() {
        return Err(Error::UndefinedBaseline { metric });
    }
    Ok(100.0 * (a - b) / b)
}

fn pct_opt(a: Option<f64>, b: Option<f64>, metric: &'static str) -> Result<Option<f64>> {
    match (a, b) {
        (Some(a), Some(b)) => pct(a, b, metric).map(Some),
        (None, None) => Ok(None),
        _ => Err(Error::Data(format!("{metric} present in only one result"))),
    }
}

pub fn relative_change(a: &EvalResult, b: &EvalResult) -> Result<RelativeChange> {
    Ok(RelativeChange {
        state_pred_rmse: pct(a.state_pred_rmse, b.state_pred_rmse, "state_pred_rmse")?,
        state_post_rmse: pct(a.state_post_rmse, b.state_post_rmse, "state_post_rmse")?,
        mode_pred_mae: pct_opt(a.mode_pred_mae, b.mode_pred_mae, "mode_pred_mae")?,
        mode_post_mae: pct_opt(a.mode_post_mae, b.mode_post_mae, "mode_post_mae")?,
    })
}

/// Percentage changes of the two state RMSEs only, for comparing filters
/// with different mode counts.
pub fn state_relative_change(a: &EvalResult, b: &EvalResult) -> Result<[f64; 2]> {
    Ok([
        pct(a.state_pred_rmse, b.state_pred_rmse, "state_pred_rmse")?,
        pct(a.state_post_rmse, b.state_post_rmse, "state_post_rmse")?,
    ])
}
