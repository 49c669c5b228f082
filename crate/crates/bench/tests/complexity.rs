use mlgd_bench::{report_complexity, run_experiment_sequential, ExperimentPlan};
use mlgd_core::mlgd::MlgdConfig;
use mlgd_core::{Algorithm, ScenarioConfig};

fn plan(k: usize) -> ExperimentPlan {
    ExperimentPlan {
        scenario: ScenarioConfig::new(8, 2, 2, k, 20.0).with_seed(4),
        snr_list: vec![20.0],
        n_realizations: 2,
        n_restarts: 2,
        mlgd: MlgdConfig {
            total_iters: 30,
            ..MlgdConfig::default()
        },
        wmmse_max_iters: 60,
        ..ExperimentPlan::default()
    }
}

#[test]
fn structural_counts() {
    let result = run_experiment_sequential(&plan(4)).unwrap();
    let rows = report_complexity(&result);
    let row = |a| rows.iter().find(|r| r.algorithm == a).unwrap();
    let (wmmse, mlgd) = (row(Algorithm::Wmmse), row(Algorithm::Mlgd));
    assert!(wmmse.hpd_solves_per_iter >= 4.0);
    assert!(wmmse.bisections_per_run > 0.0);
    assert_eq!(mlgd.bisections_per_run, 0.0);
    assert!(mlgd.hpd_solves_per_iter < wmmse.hpd_solves_per_iter);
    assert_eq!(mlgd.model_params, Some(32 * 50 + 50 + 50 * 50 + 50 + 50 * 32 + 32));
    assert_eq!(mlgd.model_nodes, Some(32 + 50 + 50 + 32));
    assert_eq!(wmmse.model_params, None);
    assert_eq!(mlgd.runs, 4);
    assert_eq!(mlgd.mean_iters, 30.0);
}

#[test]
fn multiply_count_scales_with_users() {
    let small = report_complexity(&run_experiment_sequential(&plan(2)).unwrap());
    let large = report_complexity(&run_experiment_sequential(&plan(4)).unwrap());
    for alg in [Algorithm::Gd, Algorithm::Adam, Algorithm::Mlgd] {
        let a = small.iter().find(|r| r.algorithm == alg).unwrap();
        let b = large.iter().find(|r| r.algorithm == alg).unwrap();
        let ratio = b.matmuls_per_iter / a.matmuls_per_iter;
        assert!((1.8..=2.6).contains(&ratio), "{alg}: {ratio}");
    }
}
