//! Per-(snr, algorithm) statistics over best-restart WSR values.

use mlgd_core::Algorithm;

use crate::experiment::{ExperimentResult, RunRecord};

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub snr_db: f64,
    pub algorithm: Algorithm,
    /// Realizations with at least one successful restart.
    pub n: usize,
    pub mean_wsr: f64,
    /// Unbiased sample variance; `None` when `n < 2`.
    pub var_wsr: Option<f64>,
    pub min_wsr: f64,
    pub max_wsr: f64,
    /// Means over every successful run, restarts included.
    pub mean_iters: f64,
    pub mean_wall_ms: f64,
    /// Realizations left out because all of their restarts failed.
    pub excluded: usize,
    /// Individual failed runs.
    pub failed_runs: usize,
}

/// Best successful restart of each realization, in realization order.
pub fn best_restart_values(records: &[RunRecord], snr_db: f64, algorithm: Algorithm) -> Vec<(u64, Option<f64>)> {
    let mut out: Vec<(u64, Option<f64>)> = Vec::new();
    for r in records.iter().filter(|r| r.snr_db == snr_db && r.algorithm == algorithm) {
        let value = r.outcome.as_ref().ok().map(|s| s.wsr).filter(|w| w.is_finite());
        match out.last_mut() {
            Some((real, best)) if *real == r.realization => {
                *best = match (*best, value) {
                    (Some(a), Some(b)) => Some(a.max(b)),
                    (a, b) => a.or(b),
                };
            }
            _ => out.push((r.realization, value)),
        }
    }
    out
}

pub fn sample_mean_var(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = (n > 1).then(|| values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64);
    (mean, var)
}

pub fn summarize(result: &ExperimentResult) -> Vec<Aggregate> {
    let plan = &result.plan;
    let mut out = Vec::new();
    for &snr in &plan.snr_list {
        for &alg in &plan.algorithms {
            let per_real = best_restart_values(&result.records, snr, alg);
            let values: Vec<f64> = per_real.iter().filter_map(|(_, v)| *v).collect();
            let runs: Vec<_> = result
                .records
                .iter()
                .filter(|r| r.snr_db == snr && r.algorithm == alg)
                .collect();
            let ok: Vec<_> = runs.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
            let (mean_wsr, var_wsr) = sample_mean_var(&values);
            let mean_of = |f: &dyn Fn(&crate::experiment::RunSummary) -> f64| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|s| f(s)).sum::<f64>() / ok.len() as f64
                }
            };
            out.push(Aggregate {
                snr_db: snr,
                algorithm: alg,
                n: values.len(),
                mean_wsr,
                var_wsr,
                min_wsr: values.iter().copied().fold(f64::INFINITY, f64::min),
                max_wsr: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                mean_iters: mean_of(&|s| s.iters as f64),
                mean_wall_ms: mean_of(&|s| s.wall_ms),
                excluded: per_real.len() - values.len(),
                failed_runs: runs.len() - ok.len(),
            });
        }
    }
    out
}
