//! Multi-dataset studies: freeze-mask ablations, IMM against a trained
//! single-mode Kalman filter, and one-parameter loss projections.

mod ablation;
mod imm_vs_kf;
mod loss_sweep;

pub use ablation::{ablation_csv, ablation_summary, run_ablation, AblationRow, AblationSpec, MetricSummary};
pub use imm_vs_kf::{imm_vs_kf_csv, run_imm_vs_kf, ComparisonSummary, ImmVsKfRow};
pub use loss_sweep::{gnuplot_script, linspace, logspace, loss_sweep, sweep_csv, SweepPoint};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{evaluate, relative_change, EvalResult, RelativeChange};
use crate::models::{FreezeMask, ModelConfig, ParamVector};
use crate::optimizer::{train, TrainConfig};
use crate::simulator::{substream, Dataset, ParamRanges};

/// RNG stream for initial parameters, disjoint from trajectory and
/// dataset-parameter streams.
pub const INIT_STREAM: u64 = u64::MAX - 1;

/// Random initial parameters drawn like dataset parameters, with frozen
/// groups set to `truth`.
pub fn initial_params(truth: &ParamVector, mask: &FreezeMask, rng: &mut impl Rng) -> Result<ParamVector> {
    let mut p = ParamRanges::default().sample(truth.modes(), rng)?;
    if !mask.train_sigma_v {
        p.sigma_v.clone_from(&truth.sigma_v);
    }
    if !mask.train_p_stay {
        p.p_stay.clone_from(&truth.p_stay);
    }
    if !mask.train_sigma_r {
        p.sigma_r = truth.sigma_r;
    }
    Ok(p)
}

/// Test-split metrics of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub seed: u64,
    pub initial: ParamVector,
    pub trained: ParamVector,
    pub eval_trained: EvalResult,
    pub eval_initial: EvalResult,
    pub eval_true: EvalResult,
    pub final_train_loss: f64,
    pub initial_train_loss: f64,
}

impl RunOutcome {
    pub fn vs_untrained(&self) -> Result<RelativeChange> {
        relative_change(&self.eval_trained, &self.eval_initial)
    }

    pub fn vs_true(&self) -> Result<RelativeChange> {
        relative_change(&self.eval_trained, &self.eval_true)
    }
}

/// Train from `initial` on the train split and score trained, initial and
/// true parameters on the test split. `cfg` may differ from the dataset's
/// own model (a single-mode filter on two-mode data); the true-parameter
/// score always uses the dataset's model.
pub fn train_and_evaluate(
    ds: &Dataset,
    cfg: &ModelConfig,
    initial: &ParamVector,
    mask: &FreezeMask,
    train_cfg: &TrainConfig,
) -> Result<RunOutcome> {
    let (truth, true_cfg) = ds.true_params.split()?;
    let train_set = ds.train();
    let test_set = ds.test();
    let report = train(&train_set, initial, mask, cfg, train_cfg)?;
    let last = *report.loss_history.last().expect("at least one epoch");
    Ok(RunOutcome {
        seed: ds.seed,
        initial: initial.clone(),
        eval_trained: evaluate(&report.final_params, cfg, &test_set)?,
        eval_initial: evaluate(initial, cfg, &test_set)?,
        eval_true: evaluate(&truth, &true_cfg, &test_set)?,
        trained: report.final_params,
        final_train_loss: last,
        initial_train_loss: report.loss_history[0],
    })
}

/// A dataset that could not be processed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFailure {
    pub seed: u64,
    pub error: String,
}

/// Run `f` on each seed inside a pool of `jobs` workers (0 = rayon
/// default). Results keep seed order.
pub(crate) fn map_seeds<T: Send>(
    seeds: &[u64],
    jobs: usize,
    f: impl Fn(u64) -> Result<T> + Sync,
) -> Result<Vec<std::result::Result<T, DatasetFailure>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                f(seed).map_err(|e| DatasetFailure {
                    seed,
                    error: e.to_string(),
                })
            })
            .collect()
    }))
}

pub(crate) fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

pub(crate) fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

pub(crate) fn init_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    substream(seed, INIT_STREAM)
}

/// [`initial_params`] drawn from the initialization stream of `seed`, as
/// used for dataset `seed` in the ablations.
pub fn seeded_initial_params(truth: &ParamVector, mask: &FreezeMask, seed: u64) -> Result<ParamVector> {
    initial_params(truth, mask, &mut init_rng(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_mean() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
        assert_eq!(mean(&[1.0, 2.0, 6.0]), Some(3.0));
    }

    #[test]
    fn frozen_groups_take_true_values() {
        let truth = ParamVector::new(vec![0.5, 20.0], vec![0.97, 0.96], 7.0).unwrap();
        let mut rng = init_rng(1);
        let p = initial_params(&truth, &FreezeMask::from_groups(false, true), &mut rng).unwrap();
        assert_eq!(p.sigma_v, truth.sigma_v);
        assert_eq!(p.p_stay, truth.p_stay);
        assert_ne!(p.sigma_r, truth.sigma_r);
        let q = initial_params(&truth, &FreezeMask::from_groups(true, false), &mut init_rng(1)).unwrap();
        assert_eq!(q.sigma_r, 7.0);
        assert_ne!(q.sigma_v, truth.sigma_v);
    }

    #[test]
    fn map_seeds_keeps_order_and_records_failures() {
        let out = map_seeds(&[1, 2, 3, 4], 2, |s| {
            if s == 3 {
                Err(Error::Data("boom".into()))
            } else {
                Ok(s * 10)
            }
        })
        .unwrap();
        assert_eq!(out[0], Ok(10));
        assert_eq!(out[3], Ok(40));
        assert_eq!(out[2].as_ref().unwrap_err().seed, 3);
    }
}
