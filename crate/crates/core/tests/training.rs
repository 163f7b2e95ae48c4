use imm_learn::loss::dataset_nll_value;
use imm_learn::optimizer::{train, TrainConfig, TrainReport};
use imm_learn::{Dataset, DatasetSpec, FreezeMask, ParamVector};

fn dataset(seed: u64, modes: usize, n: usize) -> Dataset {
    Dataset::generate(
        seed,
        &DatasetSpec {
            n_trajectories: n,
            modes,
            ..DatasetSpec::default()
        },
    )
    .unwrap()
}

fn epochs(k: usize) -> TrainConfig {
    TrainConfig {
        epochs: k,
        ..TrainConfig::default()
    }
}

#[test]
fn recovers_measurement_noise() {
    let ds = dataset(6, 1, 60);
    let (truth, cfg) = (ds.params().unwrap(), ds.config().unwrap());
    let mut init = truth.clone();
    init.sigma_r *= 2.0;
    let report = train(&ds.train(), &init, &FreezeMask::from_groups(false, true), &cfg, &epochs(1000)).unwrap();
    let learned = report.final_params.sigma_r;
    assert!((learned - truth.sigma_r).abs() <= 0.1 * truth.sigma_r, "{learned} vs {}", truth.sigma_r);
    assert_eq!(report.final_params.sigma_v, truth.sigma_v);
}

#[test]
fn all_frozen_is_a_no_op() {
    let ds = dataset(7, 2, 6);
    let cfg = ds.config().unwrap();
    let init = ParamVector::new(vec![0.4, 20.0], vec![0.97, 0.96], 9.0).unwrap();
    let report = train(&ds.train(), &init, &FreezeMask::NONE, &cfg, &epochs(5)).unwrap();
    assert_eq!(report.final_params, init);
    assert!(report.loss_history.iter().all(|&l| l == report.loss_history[0]));
}

#[test]
fn descent_improves_test_nll_and_is_reproducible() {
    let ds = dataset(8, 2, 16);
    let cfg = ds.config().unwrap();
    let init = ParamVector::new(vec![0.05, 15.0], vec![0.96, 0.96], 20.0).unwrap();
    let run = || train(&ds.train(), &init, &FreezeMask::ALL, &cfg, &epochs(120)).unwrap();
    let a = run();
    let b = run();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.loss_history.len(), 120);
    assert!(a.loss_history[119] < a.loss_history[0]);
    let before = dataset_nll_value(&ds.test(), &init, &cfg).unwrap();
    let after = dataset_nll_value(&ds.test(), &a.final_params, &cfg).unwrap();
    assert!(after <= before, "{after} > {before}");
}

#[test]
fn freeze_mask_is_bit_exact() {
    let ds = dataset(9, 2, 4);
    let cfg = ds.config().unwrap();
    let init = ParamVector::new(vec![0.123456789, 12.3456789], vec![0.971, 0.953], 3.3333).unwrap();
    let motion = train(&ds.train(), &init, &FreezeMask::from_groups(true, false), &cfg, &epochs(20)).unwrap();
    assert_eq!(motion.final_params.sigma_r.to_bits(), init.sigma_r.to_bits());
    assert_ne!(motion.final_params.sigma_v, init.sigma_v);
    let meas = train(&ds.train(), &init, &FreezeMask::from_groups(false, true), &cfg, &epochs(20)).unwrap();
    for (a, b) in meas.final_params.sigma_v.iter().zip(&init.sigma_v) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    assert_eq!(meas.final_params.p_stay, init.p_stay);
}

#[test]
fn report_serialization() {
    let ds = dataset(10, 1, 4);
    let cfg = ds.config().unwrap();
    let init = ParamVector::single_mode(0.5, 5.0).unwrap();
    let tc = TrainConfig {
        epochs: 3,
        record_params: true,
        ..TrainConfig::default()
    };
    let report = train(&ds.train(), &init, &FreezeMask::ALL, &cfg, &tc).unwrap();
    assert_eq!(report.param_history.as_ref().unwrap().len(), 3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    report.save_json(&path).unwrap();
    let back: TrainReport = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back.final_params, report.final_params);
    assert_eq!(back.loss_history, report.loss_history);
    assert!(!std::fs::read_to_string(&path).unwrap().contains("wall_time"));
    let csv = report.loss_csv();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("epoch,loss\n0,"));
}
