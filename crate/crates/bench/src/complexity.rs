//! Operation counts per algorithm next to the asymptotic `O(T K Nt^2 Nr + T Nr^3)` estimate.

use mlgd_core::metanet::{MetaNetParams, HIDDEN_WIDTH};
use mlgd_core::Algorithm;

use crate::experiment::ExperimentResult;

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexityRow {
    pub algorithm: Algorithm,
    pub runs: usize,
    pub mean_iters: f64,
    pub mean_wall_ms: f64,
    pub hpd_solves_per_iter: f64,
    pub matmuls_per_iter: f64,
    pub bisections_per_run: f64,
    /// `T K Nt^2 Nr + T Nr^3` with `T` the mean iteration count.
    pub asymptotic_ops: f64,
    /// Update-rule network size, MLGD only.
    pub model_params: Option<usize>,
    pub model_nodes: Option<usize>,
}

pub fn asymptotic_ops(iters: f64, k: usize, n_tx: usize, n_rx: usize) -> f64 {
    let (k, nt, nr) = (k as f64, n_tx as f64, n_rx as f64);
    iters * k * nt * nt * nr + iters * nr.powi(3)
}

/// Aggregates the per-run counters of every successful run, one row per algorithm.
pub fn report_complexity(result: &ExperimentResult) -> Vec<ComplexityRow> {
    let s = &result.plan.scenario;
    let io = 2 * s.n_tx * s.n_streams;
    result
        .plan
        .algorithms
        .iter()
        .map(|&alg| {
            let ok: Vec<_> = result
                .records
                .iter()
                .filter(|r| r.algorithm == alg)
                .filter_map(|r| r.outcome.as_ref().ok())
                .collect();
            let runs = ok.len();
            let iters: usize = ok.iter().map(|r| r.iters).sum();
            let per_iter = |total: u64| if iters == 0 { f64::NAN } else { total as f64 / iters as f64 };
            let per_run = |total: f64| if runs == 0 { f64::NAN } else { total / runs as f64 };
            let mean_iters = per_run(iters as f64);
            let net = (alg == Algorithm::Mlgd)
                .then(|| MetaNetParams::zeros([io, HIDDEN_WIDTH, HIDDEN_WIDTH, io]).expect("fixed hidden widths"));
            ComplexityRow {
                algorithm: alg,
                runs,
                mean_iters,
                mean_wall_ms: per_run(ok.iter().map(|r| r.wall_ms).sum()),
                hpd_solves_per_iter: per_iter(ok.iter().map(|r| r.ops.hpd_solves).sum()),
                matmuls_per_iter: per_iter(ok.iter().map(|r| r.ops.matmuls).sum()),
                bisections_per_run: per_run(ok.iter().map(|r| r.ops.bisections as f64).sum()),
                asymptotic_ops: asymptotic_ops(mean_iters, s.n_users, s.n_tx, s.n_rx),
                model_params: net.as_ref().map(MetaNetParams::param_count),
                model_nodes: net.as_ref().map(MetaNetParams::node_count),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_at_paper_dimensions() {
        // T=1, K=4, Nt=8, Nr=2: 4*64*2 + 8
        assert_eq!(asymptotic_ops(1.0, 4, 8, 2), 520.0);
        assert_eq!(asymptotic_ops(10.0, 4, 8, 2), 5200.0);
    }
}
