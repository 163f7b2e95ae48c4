use serde::{Deserialize, Serialize};

use super::ablation::summarize;
use super::{
    init_rng, initial_params, map_seeds, mean, median, train_and_evaluate, AblationRow, AblationSpec, DatasetFailure,
    RunOutcome,
};
use crate::error::{Error, Result};
use crate::metrics::state_relative_change;
use crate::models::{ModelConfig, ParamVector};
use crate::simulator::Dataset;

/// IMM-vs-KF relative change of one state metric, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub metric: String,
    pub median: f64,
    pub mean: f64,
    /// Share of datasets where the IMM scores lower.
    pub imm_better_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImmVsKfRow {
    pub config: String,
    /// The IMM runs, aggregated as an ablation row.
    pub imm: AblationRow,
    pub kf_runs: Vec<RunOutcome>,
    pub comparisons: Vec<ComparisonSummary>,
    pub failures: Vec<DatasetFailure>,
    pub partial: bool,
}

impl ImmVsKfRow {
    pub fn comparison(&self, metric: &str) -> Option<&ComparisonSummary> {
        self.comparisons.iter().find(|c| c.metric == metric)
    }
}

/// The single-mode filter starts from the IMM's initial mode-0 motion
/// model and measurement noise, so with frozen motion it carries the true
/// non-maneuvering process noise.
fn kf_initial(imm_init: &ParamVector) -> Result<ParamVector> {
    ParamVector::single_mode(imm_init.sigma_v[0], imm_init.sigma_r)
}

fn run_pair(spec: &AblationSpec, seed: u64) -> Result<(RunOutcome, RunOutcome)> {
    let ds = Dataset::generate(seed, &spec.dataset_spec())?;
    let (truth, cfg) = ds.true_params.split()?;
    let mask = spec.mask();
    let init = initial_params(&truth, &mask, &mut init_rng(seed))?;
    let imm = train_and_evaluate(&ds, &cfg, &init, &mask, &spec.train_config)?;
    let kf_cfg = ModelConfig::new(cfg.tau, 1)?;
    let kf = train_and_evaluate(&ds, &kf_cfg, &kf_initial(&init)?, &mask, &spec.train_config)?;
    state_relative_change(&imm.eval_trained, &kf.eval_trained)?;
    imm.vs_untrained()?;
    imm.vs_true()?;
    Ok((imm, kf))
}

/// Train an IMM and a single-mode KF on the same two-mode datasets under
/// the freeze setting of `spec` and compare their test-split state errors.
pub fn run_imm_vs_kf(spec: &AblationSpec) -> Result<ImmVsKfRow> {
    spec.validate()?;
    if spec.modes != 2 {
        return Err(Error::Config("IMM-vs-KF comparison needs two-mode datasets".into()));
    }
    let results = map_seeds(&spec.seeds(), spec.jobs, |seed| run_pair(spec, seed))?;
    let mut imm_runs = Vec::new();
    let mut kf_runs = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok((imm, kf)) => {
                imm_runs.push(imm);
                kf_runs.push(kf);
            }
            Err(f) => failures.push(f),
        }
    }
    if imm_runs.is_empty() {
        return Err(Error::Data(format!(
            "all {} datasets failed; first error: {}",
            failures.len(),
            failures[0].error
        )));
    }

    let changes: Vec<_> = imm_runs
        .iter()
        .zip(&kf_runs)
        .map(|(i, k)| state_relative_change(&i.eval_trained, &k.eval_trained))
        .collect::<Result<_>>()?;
    let mut comparisons = Vec::new();
    for (k, metric) in ["state_pred_rmse", "state_post_rmse"].into_iter().enumerate() {
        let v: Vec<f64> = changes.iter().map(|c| c[k]).collect();
        comparisons.push(ComparisonSummary {
            metric: metric.to_string(),
            median: median(&v).unwrap_or(f64::NAN),
            mean: mean(&v).unwrap_or(f64::NAN),
            imm_better_fraction: v.iter().filter(|&&x| x < 0.0).count() as f64 / v.len() as f64,
        });
    }

    let partial = !failures.is_empty();
    let imm = AblationRow {
        config: spec.label(),
        spec: spec.clone(),
        metrics: summarize(&imm_runs)?,
        runs: imm_runs,
        failures: failures.clone(),
        partial,
    };
    Ok(ImmVsKfRow {
        config: spec.label(),
        imm,
        kf_runs,
        comparisons,
        failures,
        partial,
    })
}

pub fn imm_vs_kf_csv(rows: &[ImmVsKfRow]) -> String {
    let mut out = String::from("config,metric,imm_vs_kf_pct,imm_vs_kf_mean_pct,imm_better_fraction,n_datasets\n");
    for row in rows {
        for c in &row.comparisons {
            out.push_str(&format!(
                "{},{},{:.2},{:.2},{:.3},{}\n",
                row.config,
                c.metric,
                c.median,
                c.mean,
                c.imm_better_fraction,
                row.kf_runs.len()
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::evaluate;
    use crate::optimizer::TrainConfig;
    use crate::simulator::DatasetSpec;

    #[test]
    fn kf_takes_mode_zero_motion() {
        let p = ParamVector::new(vec![0.3, 30.0], vec![0.98, 0.97], 4.0).unwrap();
        let kf = kf_initial(&p).unwrap();
        assert_eq!((kf.sigma_v.clone(), kf.p_stay.clone(), kf.sigma_r), (vec![0.3], vec![1.0], 4.0));
    }

    #[test]
    fn identical_single_mode_filters_tie() {
        let ds = Dataset::generate(
            3,
            &DatasetSpec {
                n_trajectories: 4,
                length: 60,
                modes: 1,
                tau: 1.0,
            },
        )
        .unwrap();
        let (p, cfg) = ds.true_params.split().unwrap();
        let a = evaluate(&p, &cfg, &ds.test()).unwrap();
        let b = evaluate(&kf_initial(&p).unwrap(), &cfg, &ds.test()).unwrap();
        assert_eq!(state_relative_change(&a, &b).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn small_comparison_runs() {
        let spec = AblationSpec {
            n_datasets: 2,
            n_trajectories: 4,
            length: 40,
            train_config: TrainConfig {
                epochs: 10,
                ..TrainConfig::default()
            },
            jobs: 1,
            ..AblationSpec::default()
        };
        let row = run_imm_vs_kf(&spec).unwrap();
        assert_eq!(row.kf_runs.len(), 2);
        assert_eq!(row.imm.runs.len(), 2);
        assert!(row.kf_runs.iter().all(|r| r.trained.modes() == 1));
        let csv = imm_vs_kf_csv(&[row]);
        assert_eq!(csv.lines().count(), 3);
        let single = AblationSpec {
            modes: 1,
            ..spec
        };
        assert!(run_imm_vs_kf(&single).is_err());
    }
}
