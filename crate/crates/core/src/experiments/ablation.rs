use serde::{Deserialize, Serialize};

use super::{init_rng, initial_params, map_seeds, mean, median, train_and_evaluate, DatasetFailure, RunOutcome};
use crate::error::{Error, Result};
use crate::metrics::{RelativeChange, METRIC_NAMES};
use crate::models::FreezeMask;
use crate::optimizer::TrainConfig;
use crate::simulator::{Dataset, DatasetSpec};

/// One ablation configuration evaluated over many simulated datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationSpec {
    pub n_datasets: usize,
    pub modes: usize,
    /// Train process noise and transition probabilities.
    pub train_motion: bool,
    /// Train measurement noise.
    pub train_meas: bool,
    /// Dataset `i` uses seed `base_seed + i`.
    pub base_seed: u64,
    pub n_trajectories: usize,
    pub length: usize,
    pub train_config: TrainConfig,
    /// Worker threads; 0 picks the rayon default.
    pub jobs: usize,
}

impl Default for AblationSpec {
    fn default() -> Self {
        let ds = DatasetSpec::default();
        Self {
            n_datasets: 20,
            modes: 2,
            train_motion: true,
            train_meas: true,
            base_seed: 0,
            n_trajectories: ds.n_trajectories,
            length: ds.length,
            train_config: TrainConfig::default(),
            jobs: 0,
        }
    }
}

impl AblationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_motion || self.train_meas) {
            return Err(Error::Config("at least one of train_motion, train_meas must be set".into()));
        }
        if !(1..=2).contains(&self.modes) {
            return Err(Error::Config(format!("modes must be 1 or 2, got {}", self.modes)));
        }
        if self.n_datasets == 0 {
            return Err(Error::Config("n_datasets must be at least 1".into()));
        }
        if self.n_trajectories < 2 || self.length < 3 {
            return Err(Error::Config(
                "datasets need at least 2 trajectories of at least 3 steps for a train/test split".into(),
            ));
        }
        self.train_config.validate()
    }

    pub fn mask(&self) -> FreezeMask {
        FreezeMask::from_groups(self.train_motion, self.train_meas)
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            n_trajectories: self.n_trajectories,
            length: self.length,
            modes: self.modes,
            tau: 1.0,
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_datasets as u64).map(|i| self.base_seed.wrapping_add(i)).collect()
    }

    /// Short label such as `m2_motion_meas`.
    pub fn label(&self) -> String {
        let mut s = format!("m{}", self.modes);
        if self.train_motion {
            s.push_str("_motion");
        }
        if self.train_meas {
            s.push_str("_meas");
        }
        s
    }
}

/// Median and mean relative change of one metric, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub vs_untrained_median: f64,
    pub vs_untrained_mean: f64,
    pub vs_true_median: f64,
    pub vs_true_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub config: String,
    pub spec: AblationSpec,
    pub metrics: Vec<MetricSummary>,
    pub runs: Vec<RunOutcome>,
    pub failures: Vec<DatasetFailure>,
    /// Fewer than `n_datasets` runs completed.
    pub partial: bool,
}

impl AblationRow {
    pub fn metric(&self, name: &str) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.metric == name)
    }

    /// Fraction of completed runs whose final train loss is below the first.
    pub fn fraction_loss_decreased(&self) -> f64 {
        if self.runs.is_empty() {
            return 0.0;
        }
        let n = self.runs.iter().filter(|r| r.final_train_loss < r.initial_train_loss).count();
        n as f64 / self.runs.len() as f64
    }
}

fn run_one(spec: &AblationSpec, seed: u64) -> Result<RunOutcome> {
    let ds = Dataset::generate(seed, &spec.dataset_spec())?;
    let (truth, cfg) = ds.true_params.split()?;
    let mask = spec.mask();
    let init = initial_params(&truth, &mask, &mut init_rng(seed))?;
    let run = train_and_evaluate(&ds, &cfg, &init, &mask, &spec.train_config)?;
    // fail early on an undefined baseline rather than at aggregation
    run.vs_untrained()?;
    run.vs_true()?;
    Ok(run)
}

pub(crate) fn summarize(runs: &[RunOutcome]) -> Result<Vec<MetricSummary>> {
    let changes: Vec<(RelativeChange, RelativeChange)> = runs
        .iter()
        .map(|r| Ok((r.vs_untrained()?, r.vs_true()?)))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (k, name) in METRIC_NAMES.iter().enumerate() {
        let untrained: Vec<f64> = changes.iter().filter_map(|(u, _)| u.metrics()[k]).collect();
        let truth: Vec<f64> = changes.iter().filter_map(|(_, t)| t.metrics()[k]).collect();
        if let (Some(um), Some(tm)) = (median(&untrained), median(&truth)) {
            out.push(MetricSummary {
                metric: name.to_string(),
                vs_untrained_median: um,
                vs_untrained_mean: mean(&untrained).unwrap_or(um),
                vs_true_median: tm,
                vs_true_mean: mean(&truth).unwrap_or(tm),
            });
        }
    }
    Ok(out)
}

/// Train and evaluate on `spec.n_datasets` fresh datasets and aggregate the
/// test-split relative changes against the untrained and the true filter.
pub fn run_ablation(spec: &AblationSpec) -> Result<AblationRow> {
    spec.validate()?;
    let results = map_seeds(&spec.seeds(), spec.jobs, |seed| run_one(spec, seed))?;
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(run) => runs.push(run),
            Err(f) => failures.push(f),
        }
    }
    if runs.is_empty() {
        return Err(Error::Data(format!(
            "all {} datasets failed; first error: {}",
            failures.len(),
            failures[0].error
        )));
    }
    Ok(AblationRow {
        config: spec.label(),
        spec: spec.clone(),
        metrics: summarize(&runs)?,
        partial: !failures.is_empty(),
        runs,
        failures,
    })
}

/// One line per configuration and metric; the first two percentage
/// columns hold medians, means follow.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("config,metric,vs_untrained_pct,vs_true_pct,vs_untrained_mean_pct,vs_true_mean_pct,n_datasets\n");
    for row in rows {
        for m in &row.metrics {
            out.push_str(&format!(
                "{},{},{:.2},{:.2},{:.2},{:.2},{}\n",
                row.config,
                m.metric,
                m.vs_untrained_median,
                m.vs_true_median,
                m.vs_untrained_mean,
                m.vs_true_mean,
                row.runs.len()
            ));
        }
    }
    out
}

/// Fixed-width text table of the same content.
pub fn ablation_summary(rows: &[AblationRow]) -> String {
    let mut out = format!(
        "{:<16} {:<16} {:>14} {:>14} {:>12} {:>12}\n",
        "config", "metric", "untrained med", "untrained mean", "true med", "true mean"
    );
    for row in rows {
        for m in &row.metrics {
            out.push_str(&format!(
                "{:<16} {:<16} {:>13.2}% {:>13.2}% {:>11.2}% {:>11.2}%\n",
                row.config, m.metric, m.vs_untrained_median, m.vs_untrained_mean, m.vs_true_median, m.vs_true_mean
            ));
        }
        if row.partial {
            out.push_str(&format!(
                "{:<16} partial: {} of {} datasets failed\n",
                row.config,
                row.failures.len(),
                row.spec.n_datasets
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(modes: usize, motion: bool, meas: bool) -> AblationSpec {
        AblationSpec {
            n_datasets: 2,
            modes,
            train_motion: motion,
            train_meas: meas,
            base_seed: 40,
            n_trajectories: 4,
            length: 40,
            train_config: TrainConfig {
                epochs: 15,
                ..TrainConfig::default()
            },
            jobs: 1,
        }
    }

    #[test]
    fn spec_validation_and_labels() {
        assert!(tiny(2, false, false).validate().is_err());
        assert!(tiny(3, true, true).validate().is_err());
        assert_eq!(tiny(2, true, true).label(), "m2_motion_meas");
        assert_eq!(tiny(1, false, true).label(), "m1_meas");
        assert_eq!(AblationSpec::default().n_datasets, 20);
        assert_eq!(tiny(2, true, true).seeds(), vec![40, 41]);
    }

    #[test]
    fn small_ablation_is_deterministic() {
        let spec = tiny(2, true, true);
        let a = run_ablation(&spec).unwrap();
        let b = run_ablation(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.runs.len(), 2);
        assert!(!a.partial);
        assert_eq!(a.metrics.len(), 4);
        let csv = ablation_csv(std::slice::from_ref(&a));
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.lines().nth(1).unwrap().starts_with("m2_motion_meas,state_pred_rmse,"));
        assert!(ablation_summary(&[a]).contains("mode_post_mae"));
    }

    #[test]
    fn single_mode_rows_have_no_mode_metrics() {
        let row = run_ablation(&tiny(1, true, true)).unwrap();
        assert_eq!(row.metrics.len(), 2);
        assert!(row.metric("mode_pred_mae").is_none());
    }

    #[test]
    fn frozen_motion_keeps_true_motion_parameters() {
        let row = run_ablation(&tiny(2, false, true)).unwrap();
        for run in &row.runs {
            let ds = Dataset::generate(run.seed, &tiny(2, false, true).dataset_spec()).unwrap();
            assert_eq!(run.trained.sigma_v, ds.true_params.sigma_v);
            assert_eq!(run.trained.p_stay, ds.true_params.p_stay);
        }
    }
}
