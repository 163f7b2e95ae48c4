//! AMSGrad training over unconstrained parameters.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::dataset_nll;
use crate::models::{FreezeMask, ModelConfig, ParamVector, UnconstrainedParams};
use crate::simulator::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Seed for drawing random initial parameters.
    pub seed: u64,
    /// Keep the parameters of every epoch in the report.
    pub record_params: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            learning_rate: 2.0e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            record_params: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("beta1 and beta2 must lie in [0, 1)".into()));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(Error::Config("epsilon must be non-negative".into()));
        }
        Ok(())
    }
}

/// AMSGrad moment estimates.
///
/// Both moments are bias-corrected; the running maximum is taken over the
/// raw second moment.
#[derive(Debug, Clone, PartialEq)]
pub struct AmsGrad {
    t: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    v_hat: Vec<f64>,
}

impl AmsGrad {
    pub fn new(n: usize, cfg: &TrainConfig) -> Self {
        Self {
            t: 0,
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.epsilon,
            m: vec![0.0; n],
            v: vec![0.0; n],
            v_hat: vec![0.0; n],
        }
    }

    /// One update of `u` in place; coordinates with `active[i] == false`
    /// are left untouched.
    pub fn step(&mut self, u: &mut [f64], grad: &[f64], active: &[bool]) {
        self.t = self.t.saturating_add(1);
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..u.len() {
            if !active[i] {
                continue;
            }
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            self.v_hat[i] = self.v_hat[i].max(self.v[i]);
            let denom = (self.v_hat[i] / bc2).sqrt() + self.eps;
            if denom > 0.0 {
                u[i] -= self.lr * (self.m[i] / bc1) / denom;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub model: ModelConfig,
    pub initial_params: ParamVector,
    pub final_params: ParamVector,
    pub mask: FreezeMask,
    pub config: TrainConfig,
    /// Training loss before each update.
    pub loss_history: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub param_history: Option<Vec<ParamVector>>,
    /// Seconds; not serialized so reports are reproducible byte for byte.
    #[serde(skip)]
    pub wall_time: f64,
}

impl TrainReport {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        fs::write(path, json).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// `epoch,loss` rows.
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        for (k, l) in self.loss_history.iter().enumerate() {
            out.push_str(&format!("{k},{l}\n"));
        }
        out
    }
}

/// Copy frozen groups from `from` so they stay bit-identical.
fn restore_frozen(params: &mut ParamVector, from: &ParamVector, mask: &FreezeMask) {
    if !mask.train_sigma_v {
        params.sigma_v.clone_from(&from.sigma_v);
    }
    if !mask.train_p_stay {
        params.p_stay.clone_from(&from.p_stay);
    }
    if !mask.train_sigma_r {
        params.sigma_r = from.sigma_r;
    }
}

/// Full-batch AMSGrad on the measurement NLL of `trajectories`.
pub fn train(
    trajectories: &[&Trajectory],
    initial: &ParamVector,
    mask: &FreezeMask,
    model: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    model.validate()?;
    if initial.modes() != model.m {
        return Err(Error::Config(format!(
            "initial parameters have {} modes, model has {}",
            initial.modes(),
            model.m
        )));
    }
    let start = Instant::now();
    let n = model.n_params();
    let names = model.param_names();
    let active: Vec<bool> = names.iter().map(|&p| mask.is_trainable(p)).collect();

    let mut flat = initial.to_unconstrained()?.to_flat();
    let mut opt = AmsGrad::new(n, cfg);
    let mut loss_history = Vec::with_capacity(cfg.epochs);
    let mut param_history = cfg.record_params.then(|| Vec::with_capacity(cfg.epochs));

    for epoch in 0..cfg.epochs {
        let u = UnconstrainedParams::from_flat(model.m, &flat)?;
        let loss = dataset_nll(trajectories, &u, mask, model)?;
        let grad = loss.gradient(n);
        if !loss.total.value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { epoch });
        }
        loss_history.push(loss.total.value);
        if let Some(h) = param_history.as_mut() {
            let mut p = u.to_constrained()?;
            restore_frozen(&mut p, initial, mask);
            h.push(p);
        }
        opt.step(&mut flat, &grad, &active);
    }

    let mut final_params = UnconstrainedParams::from_flat(model.m, &flat)?.to_constrained()?;
    restore_frozen(&mut final_params, initial, mask);
    Ok(TrainReport {
        model: *model,
        initial_params: initial.clone(),
        final_params,
        mask: *mask,
        config: *cfg,
        loss_history,
        param_history,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut opt = AmsGrad::new(3, &TrainConfig::default());
        let mut u = vec![0.5, -1.0, 2.0];
        for _ in 0..100 {
            opt.step(&mut u, &[0.0; 3], &[true; 3]);
        }
        assert_eq!(u, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn unit_gradient_moves_by_learning_rate() {
        let cfg = TrainConfig {
            beta1: 0.0,
            beta2: 0.0,
            epsilon: 0.0,
            ..TrainConfig::default()
        };
        let mut opt = AmsGrad::new(1, &cfg);
        let mut u = vec![1.0];
        for k in 1..=10 {
            opt.step(&mut u, &[1.0], &[true]);
            assert!((u[0] - (1.0 - cfg.learning_rate * k as f64)).abs() < 1e-15);
        }
    }

    #[test]
    fn quadratic_bowl_decreases_monotonically() {
        let cfg = TrainConfig::default();
        let mut opt = AmsGrad::new(1, &cfg);
        let mut u = vec![1.0f64];
        let mut prev = u[0].abs();
        for _ in 0..50 {
            let g = 2.0 * u[0];
            opt.step(&mut u, &[g], &[true]);
            assert!(u[0].abs() < prev);
            prev = u[0].abs();
        }
    }

    #[test]
    fn inactive_coordinates_untouched() {
        let mut opt = AmsGrad::new(2, &TrainConfig::default());
        let mut u = vec![0.1, 0.2];
        opt.step(&mut u, &[5.0, 5.0], &[false, true]);
        assert_eq!(u[0], 0.1);
        assert!(u[1] < 0.2);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { beta1: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
        let d = TrainConfig::default();
        assert_eq!((d.epochs, d.learning_rate), (1000, 0.02));
    }
}
