use std::path::{Path, PathBuf};

use clap::Args;
use imm_learn::experiments::{
    ablation_csv, ablation_summary, gnuplot_script, imm_vs_kf_csv, linspace, logspace, loss_sweep, run_ablation,
    run_imm_vs_kf, seeded_initial_params, sweep_csv, AblationSpec,
};
use imm_learn::metrics::{evaluate as evaluate_params, EvalResult};
use imm_learn::optimizer::{train as train_params, TrainConfig};
use imm_learn::{Dataset, DatasetSpec, FreezeMask, ModelConfig, ParamName, ParamVector, Trajectory};
use serde::{Deserialize, Serialize};

use crate::io::{emit, load_params, log_resolved, read_json, sibling, write_file};
use crate::CliError;

/// Fill `None` fields of `cli` from `file`; flags win.
macro_rules! merge {
    ($cli:expr, $file:expr; $($field:ident),* ; flags $($flag:ident),*) => {{
        let mut out = $cli;
        let file = $file;
        $( if out.$field.is_none() { out.$field = file.$field; } )*
        $( out.$flag = out.$flag || file.$flag; )*
        out
    }};
}

fn file_options<T: Default + for<'de> Deserialize<'de>>(path: Option<&Path>) -> Result<T, CliError> {
    path.map(read_json).transpose().map(Option::unwrap_or_default)
}

fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    Ok(Dataset::load(path)?)
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::config(format!("missing required option --{flag}")))
}

fn parse_param(name: &str) -> Result<ParamName, CliError> {
    name.parse()
        .map_err(|_| CliError::numeric(format!("unknown parameter '{name}'; valid names: {}", ParamName::VALID)))
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateArgs {
    /// Random seed of the dataset.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output dataset file (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of trajectories [default: 60].
    #[arg(long)]
    pub trajectories: Option<usize>,
    /// Measurements per trajectory [default: 120].
    #[arg(long)]
    pub length: Option<usize>,
    /// Motion modes, 1 or 2 [default: 2].
    #[arg(long)]
    pub modes: Option<usize>,
    /// Sampling interval in seconds [default: 1].
    #[arg(long)]
    pub tau: Option<f64>,
    /// Also write per-trajectory measurement CSVs (t, zx, zy in m) here.
    #[arg(long)]
    pub csv_dir: Option<PathBuf>,
    /// JSON file with any of these options; flags override it.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let file: SimulateArgs = file_options(args.config.as_deref())?;
    let a = merge!(args, file; seed, out, trajectories, length, modes, tau, csv_dir; flags);
    let defaults = DatasetSpec::default();
    let spec = DatasetSpec {
        n_trajectories: a.trajectories.unwrap_or(defaults.n_trajectories),
        length: a.length.unwrap_or(defaults.length),
        modes: a.modes.unwrap_or(defaults.modes),
        tau: a.tau.unwrap_or(defaults.tau),
    };
    let seed = a.seed.unwrap_or(0);
    let out = required(a.out.clone(), "out")?;
    log_resolved("simulate", &serde_json::json!({ "seed": seed, "out": out, "dataset": spec, "csv_dir": a.csv_dir }));

    let ds = Dataset::generate(seed, &spec)?;
    ds.save(&out)?;
    if let Some(dir) = &a.csv_dir {
        ds.write_measurement_csvs(dir)?;
    }
    println!("{}", serde_json::to_string_pretty(&ds.true_params).map_err(|e| CliError::config(e.to_string()))?);
    Ok(())
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainArgs {
    /// Dataset file written by `simulate`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Initial parameters: `random` (drawn from the dataset ranges) or a
    /// parameter/report JSON file [default: random].
    #[arg(long)]
    pub init: Option<String>,
    /// Keep process noise and transition probabilities at their initial values.
    #[arg(long)]
    pub freeze_motion: bool,
    /// Keep measurement noise at its initial value.
    #[arg(long)]
    pub freeze_measurement: bool,
    /// Training epochs (full-batch steps) [default: 1000].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// AMSGrad step size in unconstrained (log / logit) units [default: 0.02].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Seed for random initialization [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output report file (JSON); the loss curve goes next to it as `<stem>.loss.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Record parameters of every epoch in the report.
    #[arg(long)]
    pub record_params: bool,
    /// JSON file with any of these options; flags override it.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Serialize)]
struct ResolvedTrain<'a> {
    data: &'a Path,
    init: &'a str,
    mask: FreezeMask,
    train: TrainConfig,
    out: &'a Path,
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let file: TrainArgs = file_options(args.config.as_deref())?;
    let a = merge!(args, file; data, init, epochs, lr, seed, out; flags freeze_motion, freeze_measurement, record_params);
    let data = required(a.data.clone(), "data")?;
    let out = required(a.out.clone(), "out")?;
    let init_choice = a.init.clone().unwrap_or_else(|| "random".into());
    let defaults = TrainConfig::default();
    let tc = TrainConfig {
        epochs: a.epochs.unwrap_or(defaults.epochs),
        learning_rate: a.lr.unwrap_or(defaults.learning_rate),
        seed: a.seed.unwrap_or(defaults.seed),
        record_params: a.record_params,
        ..defaults
    };
    tc.validate()?;
    let mask = FreezeMask::from_groups(!a.freeze_motion, !a.freeze_measurement);
    log_resolved(
        "train",
        &ResolvedTrain {
            data: &data,
            init: &init_choice,
            mask,
            train: tc,
            out: &out,
        },
    );

    let ds = load_dataset(&data)?;
    let (truth, true_cfg) = ds.true_params.split()?;
    let init = if init_choice == "random" {
        seeded_initial_params(&truth, &mask, tc.seed)?
    } else {
        load_params(Path::new(&init_choice))?
    };
    let cfg = ModelConfig::new(true_cfg.tau, init.modes())?;
    let report = train_params(&ds.train(), &init, &mask, &cfg, &tc)?;
    eprintln!("train: {} epochs in {:.2} s", tc.epochs, report.wall_time);

    report.save_json(&out)?;
    write_file(&sibling(&out, "loss.csv"), &report.loss_csv())?;
    let last = report.loss_history.last().copied().unwrap_or(f64::NAN);
    if !last.is_finite() {
        return Err(CliError::numeric(format!("final loss is {last}")));
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&report.final_params).map_err(|e| CliError::config(e.to_string()))?
    );
    Ok(())
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateArgs {
    /// Dataset file written by `simulate`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// `true` for the generating parameters, or a parameter/report JSON file.
    #[arg(long)]
    pub params: Option<String>,
    /// Trajectories to score: test, train or all [default: test].
    #[arg(long)]
    pub split: Option<String>,
    /// Output CSV (RMSE in m, MAE unitless); stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON file with any of these options; flags override it.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

fn select<'a>(ds: &'a Dataset, split: &str) -> Result<Vec<&'a Trajectory>, CliError> {
    match split {
        "test" => Ok(ds.test()),
        "train" => Ok(ds.train()),
        "all" => Ok(ds.trajectories.iter().collect()),
        other => Err(CliError::config(format!("unknown split '{other}'; use test, train or all"))),
    }
}

pub fn evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let file: EvaluateArgs = file_options(args.config.as_deref())?;
    let a = merge!(args, file; data, params, split, out; flags);
    let data = required(a.data.clone(), "data")?;
    let which = a.params.clone().unwrap_or_else(|| "true".into());
    let split = a.split.clone().unwrap_or_else(|| "test".into());
    log_resolved(
        "evaluate",
        &serde_json::json!({ "data": data, "params": which, "split": split, "out": a.out }),
    );

    let ds = load_dataset(&data)?;
    let (truth, true_cfg) = ds.true_params.split()?;
    let params: ParamVector = if which == "true" {
        truth
    } else {
        load_params(Path::new(&which))?
    };
    let cfg = ModelConfig::new(true_cfg.tau, params.modes())?;
    let result = evaluate_params(&params, &cfg, &select(&ds, &split)?)?;
    emit(a.out.as_deref(), &format!("{}\n{}\n", EvalResult::CSV_HEADER, result.csv_row()))
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationArgs {
    /// Ablation spec (JSON, fields of the resolved config); flags override it.
    #[arg(long)]
    #[serde(skip)]
    pub spec: Option<PathBuf>,
    /// Number of datasets per configuration [default: 20].
    #[arg(long)]
    pub datasets: Option<usize>,
    /// Motion modes of the datasets, 1 or 2 [default: 2].
    #[arg(long)]
    pub modes: Option<usize>,
    /// Keep process noise and transition probabilities at their true values.
    #[arg(long)]
    pub freeze_motion: bool,
    /// Keep measurement noise at its true value.
    #[arg(long)]
    pub freeze_measurement: bool,
    /// Run every configuration (both mode counts, each freeze setting).
    #[arg(long)]
    pub grid: bool,
    /// Compare against a trained single-mode Kalman filter instead.
    #[arg(long)]
    pub imm_vs_kf: bool,
    /// Training epochs per run [default: 1000].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// AMSGrad step size in unconstrained units [default: 0.02].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Seed of the first dataset; dataset i uses seed + i [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trajectories per dataset [default: 60].
    #[arg(long)]
    pub trajectories: Option<usize>,
    /// Measurements per trajectory [default: 120].
    #[arg(long)]
    pub length: Option<usize>,
    /// Output CSV of relative changes in percent; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write every per-dataset result as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

fn ablation_specs(a: &AblationArgs, base: AblationSpec) -> Vec<AblationSpec> {
    let single = |modes: usize, motion: bool, meas: bool| AblationSpec {
        modes,
        train_motion: motion,
        train_meas: meas,
        ..base.clone()
    };
    if !a.grid {
        return vec![base.clone()];
    }
    let settings = [(true, true), (false, true), (true, false)];
    let modes: &[usize] = if a.imm_vs_kf { &[2] } else { &[2, 1] };
    modes
        .iter()
        .flat_map(|&m| settings.iter().map(move |&(mo, me)| single(m, mo, me)))
        .collect()
}

pub fn ablation(args: AblationArgs, jobs: usize) -> Result<(), CliError> {
    let mut base: AblationSpec = file_options(args.spec.as_deref())?;
    if let Some(n) = args.datasets {
        base.n_datasets = n;
    }
    if let Some(m) = args.modes {
        base.modes = m;
    }
    if args.freeze_motion {
        base.train_motion = false;
    }
    if args.freeze_measurement {
        base.train_meas = false;
    }
    if let Some(k) = args.epochs {
        base.train_config.epochs = k;
    }
    if let Some(lr) = args.lr {
        base.train_config.learning_rate = lr;
    }
    if let Some(s) = args.seed {
        base.base_seed = s;
    }
    if let Some(n) = args.trajectories {
        base.n_trajectories = n;
    }
    if let Some(l) = args.length {
        base.length = l;
    }
    if jobs > 0 {
        base.jobs = jobs;
    }
    let specs = ablation_specs(&args, base);
    for s in &specs {
        log_resolved("ablation", s);
        s.validate()?;
    }

    if args.imm_vs_kf {
        let rows = specs.iter().map(run_imm_vs_kf).collect::<Result<Vec<_>, _>>()?;
        let imm: Vec<_> = rows.iter().map(|r| r.imm.clone()).collect();
        eprint!("{}", ablation_summary(&imm));
        if let Some(p) = &args.json {
            write_file(p, &serde_json::to_string_pretty(&rows).map_err(|e| CliError::config(e.to_string()))?)?;
        }
        emit(args.out.as_deref(), &imm_vs_kf_csv(&rows))
    } else {
        let rows = specs.iter().map(run_ablation).collect::<Result<Vec<_>, _>>()?;
        eprint!("{}", ablation_summary(&rows));
        if let Some(p) = &args.json {
            write_file(p, &serde_json::to_string_pretty(&rows).map_err(|e| CliError::config(e.to_string()))?)?;
        }
        emit(args.out.as_deref(), &ablation_csv(&rows))
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepArgs {
    /// Dataset file written by `simulate`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Parameter to vary: sigma_v0, sigma_v1 (m/s^2), p00, p11, sigma_r (m).
    #[arg(long)]
    pub param: Option<String>,
    /// First grid value, in the parameter's units.
    #[arg(long)]
    pub from: Option<f64>,
    /// Last grid value, in the parameter's units.
    #[arg(long)]
    pub to: Option<f64>,
    /// Grid points [default: 30].
    #[arg(long)]
    pub points: Option<usize>,
    /// Space the grid geometrically.
    #[arg(long)]
    pub log: bool,
    /// Output CSV (param_value, nll, rmse in m); stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a gnuplot script plotting the CSV.
    #[arg(long)]
    pub plot: Option<PathBuf>,
    /// JSON file with any of these options; flags override it.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

pub fn sweep(args: SweepArgs) -> Result<(), CliError> {
    let file: SweepArgs = file_options(args.config.as_deref())?;
    let a = merge!(args, file; data, param, from, to, points, out, plot; flags log);
    let name = parse_param(&required(a.param.clone(), "param")?)?;
    let data = required(a.data.clone(), "data")?;
    let (from, to) = (required(a.from, "from")?, required(a.to, "to")?);
    let points = a.points.unwrap_or(30);
    log_resolved("sweep", &a);
    if points == 0 {
        return Err(CliError::config("--points must be at least 1"));
    }

    let ds = load_dataset(&data)?;
    let grid = if a.log { logspace(from, to, points)? } else { linspace(from, to, points) };
    let curve = loss_sweep(&ds, name, &grid)?;
    emit(a.out.as_deref(), &sweep_csv(&curve))?;
    if let Some(script) = &a.plot {
        let csv_name = a
            .out
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| "sweep.csv".into());
        let truth = ds.params()?.get(name).unwrap_or(f64::NAN);
        write_file(script, &gnuplot_script(&csv_name, name, truth))?;
    }
    Ok(())
}
