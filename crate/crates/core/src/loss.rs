//! Measurement negative log-likelihood.
//!
//! At each step the filter's moment-matched one-step-ahead measurement
//! density is evaluated at the incoming measurement; the loss is the
//! negative sum of those log densities. The first two measurements of every
//! trajectory initialize the filter and do not contribute.

use rayon::prelude::*;

use crate::autodiff::{Dual, Scalar};
use crate::error::{Error, Result};
use crate::filters::run_filter;
use crate::models::{FreezeMask, ImmModel, ModelConfig, ParamVector, UnconstrainedParams};
use crate::simulator::Trajectory;

#[derive(Debug, Clone)]
pub struct LossValue {
    /// `L(θ)` with its gradient in unconstrained coordinates.
    pub total: Dual,
    pub per_trajectory: Vec<Dual>,
    pub steps_counted: usize,
}

impl LossValue {
    /// Gradient restricted to the first `n` slots.
    pub fn gradient(&self, n: usize) -> Vec<f64> {
        self.total.tangent[..n].to_vec()
    }
}

/// NLL of one measurement sequence and the number of steps it covers.
pub fn trajectory_nll<S: Scalar>(
    measurements: &[[f64; 2]],
    params: &ParamVector<S>,
    cfg: &ModelConfig,
) -> Result<(S, usize)> {
    if measurements.len() < 3 {
        return Err(Error::Data(format!(
            "loss needs at least 3 measurements, got {}",
            measurements.len()
        )));
    }
    let model = ImmModel::new(params, cfg)?;
    let mut nll = S::zero();
    let mut steps = 0;
    run_filter(measurements, &model, |t, rec| {
        let ll = rec.meas_prediction.log_likelihood(&measurements[t])?;
        nll -= ll;
        steps += 1;
        Ok(())
    })?;
    Ok((nll, steps))
}

/// Full-batch loss and gradient over `trajectories`.
///
/// Trajectories are processed in parallel but reduced in index order, so
/// the result is bit-reproducible.
pub fn dataset_nll(
    trajectories: &[&Trajectory],
    u: &UnconstrainedParams,
    mask: &FreezeMask,
    cfg: &ModelConfig,
) -> Result<LossValue> {
    if trajectories.is_empty() {
        return Err(Error::Data("empty trajectory set".into()));
    }
    let params = u.lift(mask)?;
    let parts: Vec<(Dual, usize)> = trajectories
        .par_iter()
        .enumerate()
        .map(|(i, traj)| trajectory_nll(&traj.measurements, &params, cfg).map_err(|e| e.in_trajectory(i)))
        .collect::<Result<_>>()?;
    let mut total = Dual::zero();
    let mut steps_counted = 0;
    for (nll, steps) in &parts {
        total += *nll;
        steps_counted += steps;
    }
    Ok(LossValue {
        total,
        per_trajectory: parts.into_iter().map(|(nll, _)| nll).collect(),
        steps_counted,
    })
}

/// Loss value only, without derivatives.
pub fn dataset_nll_value(trajectories: &[&Trajectory], params: &ParamVector, cfg: &ModelConfig) -> Result<f64> {
    if trajectories.is_empty() {
        return Err(Error::Data("empty trajectory set".into()));
    }
    let parts: Vec<f64> = trajectories
        .par_iter()
        .enumerate()
        .map(|(i, traj)| {
            trajectory_nll(&traj.measurements, params, cfg)
                .map(|(nll, _)| nll)
                .map_err(|e| e.in_trajectory(i))
        })
        .collect::<Result<_>>()?;
    Ok(parts.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{Dataset, DatasetSpec};

    fn small_dataset(seed: u64, modes: usize, n: usize, len: usize) -> Dataset {
        Dataset::generate(
            seed,
            &DatasetSpec {
                n_trajectories: n,
                length: len,
                modes,
                tau: 1.0,
            },
        )
        .unwrap()
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn three_step_single_mode_matches_scalar_oracle() {
        // With one measurement contributing, the NLL is that of a single
        // predicted measurement; each axis decouples into a scalar KF.
        let (sv, sr) = (0.8, 2.0);
        let z = [[0.5, -1.0], [1.7, 0.4], [3.1, 2.2]];
        let cfg = ModelConfig::new(1.0, 1).unwrap();
        let p = ParamVector::single_mode(sv, sr).unwrap();
        let (nll, steps) = trajectory_nll(&z, &p, &cfg).unwrap();
        assert_eq!(steps, 1);

        let r = sr * sr;
        let q = sv * sv;
        let mut expected = 0.0;
        for axis in 0..2 {
            let (z0, z1, z2) = (z[0][axis], z[1][axis], z[2][axis]);
            let pos = z1 + (z1 - z0);
            // var(pos + vel) over the two-point covariance plus Q
            let var = r + 2.0 * r + 2.0 * r + q / 3.0 + r;
            let s = var;
            expected += 0.5 * ((2.0 * std::f64::consts::PI * s).ln() + (z2 - pos).powi(2) / s);
        }
        assert!((nll - expected).abs() <= 1e-10 * expected.abs(), "{nll} vs {expected}");
    }

    #[test]
    fn duplicated_trajectory_doubles_loss() {
        let ds = small_dataset(2, 2, 2, 30);
        let cfg = ds.config().unwrap();
        let p = ds.params().unwrap();
        let one = dataset_nll_value(&[&ds.trajectories[0]], &p, &cfg).unwrap();
        let twice = dataset_nll_value(&[&ds.trajectories[0], &ds.trajectories[0]], &p, &cfg).unwrap();
        assert_eq!(twice, 2.0 * one);
        let (single, _) = trajectory_nll(&ds.trajectories[0].measurements, &p, &cfg).unwrap();
        assert_eq!(one, single);
    }

    #[test]
    fn permutation_invariance() {
        let ds = small_dataset(4, 2, 5, 25);
        let cfg = ds.config().unwrap();
        let u = ds.params().unwrap().to_unconstrained().unwrap();
        let fwd: Vec<&Trajectory> = ds.trajectories.iter().collect();
        let rev: Vec<&Trajectory> = ds.trajectories.iter().rev().collect();
        let a = dataset_nll(&fwd, &u, &FreezeMask::ALL, &cfg).unwrap();
        let b = dataset_nll(&rev, &u, &FreezeMask::ALL, &cfg).unwrap();
        assert!((a.total.value - b.total.value).abs() <= 1e-9 * a.total.value.abs());
        let sum: f64 = a.per_trajectory.iter().map(|d| d.value).sum();
        assert!((sum - a.total.value).abs() <= 1e-9 * sum.abs());
        assert_eq!(a.steps_counted, 5 * 23);
    }

    #[test]
    fn full_size_loss_is_finite() {
        let ds = small_dataset(8, 2, 60, 120);
        let cfg = ds.config().unwrap();
        let u = ds.params().unwrap().to_unconstrained().unwrap();
        let loss = dataset_nll(&ds.train(), &u, &FreezeMask::ALL, &cfg).unwrap();
        assert!(loss.total.value.is_finite());
        assert!(loss.gradient(5).iter().all(|g| g.is_finite()));
    }

    #[test]
    fn frozen_slots_have_zero_gradient() {
        let ds = small_dataset(9, 2, 3, 20);
        let cfg = ds.config().unwrap();
        let u = ds.params().unwrap().to_unconstrained().unwrap();
        let loss = dataset_nll(&ds.train(), &u, &FreezeMask::from_groups(false, true), &cfg).unwrap();
        let g = loss.gradient(5);
        assert_eq!(&g[..4], &[0.0; 4]);
        assert_ne!(g[4], 0.0);
    }

    #[test]
    fn short_and_empty_inputs() {
        let cfg = ModelConfig::new(1.0, 1).unwrap();
        let p = ParamVector::single_mode(1.0, 1.0).unwrap();
        assert!(matches!(trajectory_nll(&[[0.0; 2]; 2], &p, &cfg), Err(Error::Data(_))));
        assert!(dataset_nll_value(&[], &p, &cfg).is_err());
    }
}
