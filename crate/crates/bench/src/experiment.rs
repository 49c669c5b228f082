//! Sweep execution over SNR x realization x algorithm x restart.
//!
//! Work is split by `(snr, realization)`. Every random stream is keyed by the
//! master seed and run indices, so results do not depend on scheduling or on the
//! number of workers.

use mlgd_core::counters::OpCounts;
use mlgd_core::mlgd::run_mlgd;
use mlgd_core::optim::{run_first_order, FirstOrderConfig, FirstOrderMethod};
use mlgd_core::scenario::sample_channels;
use mlgd_core::wmmse::run_wmmse;
use mlgd_core::{Algorithm, ChannelSet, Report, Result, RunTrajectory, ScenarioConfig};

use crate::plan::ExperimentPlan;

/// Condensed outcome of one solver run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    /// WSR of the iterate selected by the report mode.
    pub wsr: f64,
    pub best_wsr: f64,
    pub final_wsr: f64,
    /// 1-based iteration of the best iterate.
    pub best_iter: usize,
    pub iters: usize,
    pub wall_ms: f64,
    pub ops: OpCounts,
    /// Largest power-constraint violation over every recorded iterate, relative to `P`.
    /// Equality is required for projected methods, `<= P` for WMMSE.
    pub max_power_violation: f64,
    pub meta_updates: usize,
}

impl RunSummary {
    pub fn from_trajectory(t: &RunTrajectory, report: Report, total_power: f64) -> Self {
        let violation = |p: &f64| match t.algorithm {
            Algorithm::Wmmse => ((p - total_power) / total_power).max(0.0),
            _ => ((p - total_power) / total_power).abs(),
        };
        Self {
            wsr: t.reported_wsr(report),
            best_wsr: t.best_wsr(),
            final_wsr: t.final_wsr(),
            best_iter: t.best_index + 1,
            iters: t.iterations(),
            wall_ms: t.wall_ms,
            ops: t.ops,
            max_power_violation: t.power.iter().map(violation).fold(0.0, f64::max),
            meta_updates: t.meta_updates,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub snr_db: f64,
    pub realization: u64,
    pub algorithm: Algorithm,
    pub restart: u64,
    /// Numerical failures are kept as messages; they never abort the sweep.
    pub outcome: std::result::Result<RunSummary, String>,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub plan: ExperimentPlan,
    /// Ordered by (snr, realization, algorithm, restart), following the plan's list orders.
    pub records: Vec<RunRecord>,
}

/// Runs one solver on one channel draw.
pub fn run_solver(
    plan: &ExperimentPlan,
    algorithm: Algorithm,
    h: &ChannelSet,
    config: &ScenarioConfig,
    realization: u64,
    restart: u64,
) -> Result<RunTrajectory> {
    let first_order = |method, lr| FirstOrderConfig {
        method,
        lr,
        iters: plan.first_order_iters(),
    };
    match algorithm {
        Algorithm::Wmmse => run_wmmse(h, config, realization, restart, plan.wmmse_max_iters).map(|r| r.trajectory),
        Algorithm::Gd => run_first_order(h, config, realization, restart, &first_order(FirstOrderMethod::Gd, plan.gd_lr)),
        Algorithm::Adam => {
            run_first_order(h, config, realization, restart, &first_order(FirstOrderMethod::Adam, plan.adam_lr))
        }
        Algorithm::Mlgd => run_mlgd(h, config, realization, restart, &plan.mlgd).map(|r| r.trajectory),
    }
}

/// Every run for one `(snr, realization)` cell, in deterministic order.
pub fn run_cell(plan: &ExperimentPlan, snr_db: f64, realization: u64) -> Vec<RunRecord> {
    let config = plan.scenario_at(snr_db);
    let h = sample_channels(&config, realization);
    let mut out = Vec::with_capacity(plan.algorithms.len() * plan.n_restarts as usize);
    for &algorithm in &plan.algorithms {
        for restart in 0..plan.n_restarts {
            let outcome = run_solver(plan, algorithm, &h, &config, realization, restart)
                .map(|t| RunSummary::from_trajectory(&t, plan.mlgd.report, config.total_power))
                .map_err(|e| e.to_string());
            out.push(RunRecord {
                snr_db,
                realization,
                algorithm,
                restart,
                outcome,
            });
        }
    }
    out
}

fn cells(plan: &ExperimentPlan) -> Vec<(f64, u64)> {
    plan.snr_list
        .iter()
        .flat_map(|&snr| (0..plan.n_realizations).map(move |r| (snr, r)))
        .collect()
}

/// Single-threaded reference execution.
pub fn run_experiment_sequential(plan: &ExperimentPlan) -> Result<ExperimentResult> {
    plan.validate()?;
    let records = cells(plan)
        .into_iter()
        .flat_map(|(snr, r)| run_cell(plan, snr, r))
        .collect();
    Ok(ExperimentResult {
        plan: plan.clone(),
        records,
    })
}

/// Executes cells on a pool of `plan.workers` threads. Output order matches the
/// sequential path exactly.
#[cfg(feature = "parallel")]
pub fn run_experiment_parallel(plan: &ExperimentPlan) -> Result<ExperimentResult> {
    use rayon::prelude::*;

    plan.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| mlgd_core::Error::Config(format!("thread pool: {e}")))?;
    let cells = cells(plan);
    let per_cell: Vec<Vec<RunRecord>> =
        pool.install(|| cells.par_iter().map(|&(snr, r)| run_cell(plan, snr, r)).collect());
    Ok(ExperimentResult {
        plan: plan.clone(),
        records: per_cell.into_iter().flatten().collect(),
    })
}

/// Runs the plan, in parallel when the `parallel` feature is on and more than one
/// worker is requested.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentResult> {
    #[cfg(feature = "parallel")]
    if plan.workers > 1 {
        return run_experiment_parallel(plan);
    }
    run_experiment_sequential(plan)
}
