//! CSV and manifest writers.
//!
//! Floats are printed fixed-point with 9 significant digits so that identical
//! arithmetic gives byte-identical files.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use crate::aggregate::Aggregate;
use crate::complexity::ComplexityRow;
use crate::experiment::ExperimentResult;

pub const DETAIL_HEADER: &str =
    "scenario,k_users,n_tx,n_rx,d,snr_db,algorithm,realization,restart,wsr_bits,best_iter,iters,wall_ms,status";
pub const SUMMARY_HEADER: &str =
    "scenario,snr_db,algorithm,mean_wsr,var_wsr,min_wsr,max_wsr,mean_iters,mean_wall_ms,n";
pub const COMPLEXITY_HEADER: &str = "scenario,algorithm,runs,mean_iters,mean_wall_ms,hpd_solves_per_iter,\
matmuls_per_iter,bisections_per_run,asymptotic_ops,model_params,model_nodes";

/// Fixed-point rendering with 9 significant digits.
pub fn fmt_sig9(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0.00000000".into();
    }
    // The exponent of the value after rounding to 9 digits.
    let sci = format!("{x:.8e}");
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    let decimals = (8 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

fn opt_float(x: Option<f64>) -> String {
    x.map(fmt_sig9).unwrap_or_default()
}

/// Keeps free text inside a single CSV field.
fn sanitize(s: &str) -> String {
    s.chars().map(|c| if matches!(c, ',' | '\n' | '\r' | '"') { ';' } else { c }).collect()
}

pub fn write_detail<W: Write>(mut w: W, result: &ExperimentResult) -> io::Result<()> {
    let plan = &result.plan;
    let s = &plan.scenario;
    let name = sanitize(&plan.scenario_name());
    writeln!(w, "{DETAIL_HEADER}")?;
    for r in &result.records {
        let prefix = format!(
            "{name},{},{},{},{},{},{},{},{}",
            s.n_users,
            s.n_tx,
            s.n_rx,
            s.n_streams,
            fmt_sig9(r.snr_db),
            r.algorithm,
            r.realization,
            r.restart
        );
        match &r.outcome {
            Ok(run) => {
                let wall = plan.record_timing.then_some(run.wall_ms);
                writeln!(
                    w,
                    "{prefix},{},{},{},{},ok",
                    fmt_sig9(run.wsr),
                    run.best_iter,
                    run.iters,
                    opt_float(wall)
                )?;
            }
            Err(msg) => writeln!(w, "{prefix},,,,,error: {}", sanitize(msg))?,
        }
    }
    Ok(())
}

pub fn write_summary<W: Write>(mut w: W, result: &ExperimentResult, aggregates: &[Aggregate]) -> io::Result<()> {
    let name = sanitize(&result.plan.scenario_name());
    writeln!(w, "{SUMMARY_HEADER}")?;
    for a in aggregates {
        let wall = result.plan.record_timing.then_some(a.mean_wall_ms);
        let stat = |x: f64| if a.n == 0 { String::new() } else { fmt_sig9(x) };
        writeln!(
            w,
            "{name},{},{},{},{},{},{},{},{},{}",
            fmt_sig9(a.snr_db),
            a.algorithm,
            stat(a.mean_wsr),
            opt_float(a.var_wsr),
            stat(a.min_wsr),
            stat(a.max_wsr),
            if a.mean_iters.is_finite() { fmt_sig9(a.mean_iters) } else { String::new() },
            wall.filter(|x| x.is_finite()).map(fmt_sig9).unwrap_or_default(),
            a.n
        )?;
    }
    Ok(())
}

pub fn write_complexity<W: Write>(mut w: W, result: &ExperimentResult, rows: &[ComplexityRow]) -> io::Result<()> {
    let name = sanitize(&result.plan.scenario_name());
    writeln!(w, "{COMPLEXITY_HEADER}")?;
    let finite = |x: f64| if x.is_finite() { fmt_sig9(x) } else { String::new() };
    for r in rows {
        let wall = if result.plan.record_timing { finite(r.mean_wall_ms) } else { String::new() };
        writeln!(
            w,
            "{name},{},{},{},{},{},{},{},{},{},{}",
            r.algorithm,
            r.runs,
            finite(r.mean_iters),
            wall,
            finite(r.hpd_solves_per_iter),
            finite(r.matmuls_per_iter),
            finite(r.bisections_per_run),
            finite(r.asymptotic_ops),
            r.model_params.map(|p| p.to_string()).unwrap_or_default(),
            r.model_nodes.map(|p| p.to_string()).unwrap_or_default(),
        )?;
    }
    Ok(())
}

pub fn write_manifest<W: Write>(mut w: W, result: &ExperimentResult, aggregates: &[Aggregate]) -> io::Result<()> {
    writeln!(w, "# mlgd-bench {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(w, "# parallel feature: {}", cfg!(feature = "parallel"))?;
    write!(w, "{}", result.plan.to_config_string())?;
    let failed: usize = aggregates.iter().map(|a| a.failed_runs).sum();
    writeln!(w, "# failed runs: {failed}")?;
    for a in aggregates.iter().filter(|a| a.excluded > 0) {
        writeln!(
            w,
            "# excluded: snr {} {} lost {} realization(s)",
            fmt_sig9(a.snr_db),
            a.algorithm,
            a.excluded
        )?;
    }
    Ok(())
}

/// Writes `detail.csv`, `summary.csv`, `complexity.csv` and `manifest.txt` into `dir`.
pub fn write_all(
    dir: &Path,
    result: &ExperimentResult,
    aggregates: &[Aggregate],
    complexity: &[ComplexityRow],
) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let open = |name: &str| fs::File::create(dir.join(name)).map(io::BufWriter::new);
    write_detail(open("detail.csv")?, result)?;
    write_summary(open("summary.csv")?, result, aggregates)?;
    write_complexity(open("complexity.csv")?, result, complexity)?;
    write_manifest(open("manifest.txt")?, result, aggregates)?;
    Ok(())
}
