use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::dataset_nll_value;
use crate::metrics::evaluate;
use crate::models::ParamName;
use crate::simulator::{Dataset, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub nll: f64,
    /// Posterior position RMSE.
    pub rmse: f64,
}

/// Vary one parameter over `grid` with all others at their true values and
/// record the NLL and posterior RMSE over every trajectory of `ds`.
pub fn loss_sweep(ds: &Dataset, name: ParamName, grid: &[f64]) -> Result<Vec<SweepPoint>> {
    let (truth, cfg) = ds.true_params.split()?;
    if cfg.slot_of(name).is_none() {
        return Err(Error::Config(format!("{name} is not a parameter of a {}-mode model", cfg.m)));
    }
    let all: Vec<&Trajectory> = ds.trajectories.iter().collect();
    grid.iter()
        .map(|&value| {
            let mut p = truth.clone();
            p.set(name, value)?;
            Ok(SweepPoint {
                value,
                nll: dataset_nll_value(&all, &p, &cfg)?,
                rmse: evaluate(&p, &cfg, &all)?.state_post_rmse,
            })
        })
        .collect()
}

pub fn linspace(from: f64, to: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![from],
        n => (0..n).map(|i| from + (to - from) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Geometric grid; both ends must be positive.
pub fn logspace(from: f64, to: f64, points: usize) -> Result<Vec<f64>> {
    if !(from > 0.0 && to > 0.0) {
        return Err(Error::Config("log grid needs positive bounds".into()));
    }
    Ok(linspace(from.ln(), to.ln(), points).into_iter().map(f64::exp).collect())
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("param_value,nll,rmse\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.value, p.nll, p.rmse));
    }
    out
}

/// gnuplot script plotting NLL and RMSE from `csv_file` on two y axes.
pub fn gnuplot_script(csv_file: &str, name: ParamName, true_value: f64) -> String {
    format!(
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set xlabel '{name}'\n\
         set ylabel 'NLL'\n\
         set y2label 'posterior RMSE [m]'\n\
         set ytics nomirror\n\
         set y2tics\n\
         set arrow from {true_value}, graph 0 to {true_value}, graph 1 nohead dashtype 2\n\
         set terminal pngcairo size 800,500\n\
         set output '{csv_file}.png'\n\
         plot '{csv_file}' using 1:2 with linespoints axes x1y1 title 'NLL', \\\n\
         \x20    '' using 1:3 with linespoints axes x1y2 title 'RMSE'\n"
    )
}
