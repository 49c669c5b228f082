use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use mlgd_bench::output::{fmt_sig9, write_all, write_complexity};
use mlgd_bench::{gradcheck, report_complexity, run_experiment, summarize, ExperimentPlan};
use mlgd_core::mlgd::UpdateOrder;
use mlgd_core::{Algorithm, Report};

#[derive(Parser)]
#[command(name = "bench", version, about = "Weighted sum-rate beamforming benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep SNR x realizations x restarts for each algorithm and write CSV results.
    Run(RunArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a plan and report per-iteration operation counts.
    Complexity {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        realizations: Option<u64>,
        #[arg(long)]
        restarts: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated SNR values in dB; `a:step:b` expands to a range.
    #[arg(long)]
    snr: Option<String>,
    #[arg(long, value_delimiter = ',')]
    algorithms: Option<Vec<Algorithm>>,
    #[arg(long)]
    realizations: Option<u64>,
    #[arg(long)]
    restarts: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["jacobi", "gauss_seidel"])]
    update_order: Option<String>,
    #[arg(long, value_parser = ["best", "last"])]
    report: Option<String>,
    /// Leave wall-clock fields empty so output files are byte-stable.
    #[arg(long)]
    no_timing: bool,
}

fn load_plan(path: &PathBuf) -> Result<ExperimentPlan> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ExperimentPlan::from_config_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn apply_overrides(plan: &mut ExperimentPlan, args: RunArgs) -> Result<()> {
    if let Some(snr) = args.snr {
        plan.set("snr_list", &snr)?;
    }
    if let Some(algs) = args.algorithms {
        plan.algorithms = algs;
    }
    if let Some(n) = args.realizations {
        plan.n_realizations = n;
    }
    if let Some(n) = args.restarts {
        plan.n_restarts = n;
    }
    if let Some(s) = args.seed {
        plan.scenario.master_seed = s;
    }
    if let Some(i) = args.iters {
        plan.mlgd.total_iters = i;
    }
    if let Some(t) = args.window {
        plan.mlgd.window = t;
    }
    if let Some(w) = args.workers {
        plan.workers = w;
    }
    if let Some(out) = args.out {
        plan.out_dir = out;
    }
    if let Some(order) = args.update_order {
        plan.mlgd.update_order = order.parse::<UpdateOrder>()?;
    }
    if let Some(report) = args.report {
        plan.mlgd.report = report.parse::<Report>()?;
    }
    if args.no_timing {
        plan.record_timing = false;
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let mut plan = load_plan(&args.config)?;
    apply_overrides(&mut plan, args)?;
    plan.validate()?;
    for w in plan.scenario.warnings() {
        eprintln!("warning: {w}");
    }
    let result = run_experiment(&plan)?;
    let aggregates = summarize(&result);
    let complexity = report_complexity(&result);
    write_all(&plan.out_dir, &result, &aggregates, &complexity)
        .with_context(|| format!("writing results to {}", plan.out_dir.display()))?;
    println!("{:>8} {:>6} {:>12} {:>12} {:>6}", "snr_db", "alg", "mean_wsr", "var_wsr", "n");
    for a in &aggregates {
        let var = a.var_wsr.map(fmt_sig9).unwrap_or_default();
        println!("{:>8} {:>6} {:>12} {:>12} {:>6}", a.snr_db, a.algorithm, fmt_sig9(a.mean_wsr), var, a.n);
        if a.failed_runs > 0 {
            eprintln!(
                "warning: snr {} {}: {} failed run(s), {} realization(s) excluded",
                a.snr_db, a.algorithm, a.failed_runs, a.excluded
            );
        }
    }
    println!("results written to {}", plan.out_dir.display());
    Ok(())
}

fn gradcheck(seed: u64) -> Result<bool> {
    let mut ok = true;
    for r in gradcheck::run_all(seed)? {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        println!(
            "{status} {:<14} cases={:<3} max_rel_error={:.3e} tol={:.0e}",
            r.name, r.cases, r.max_rel_error, r.tolerance
        );
        ok &= r.passed();
    }
    Ok(ok)
}

fn complexity(config: PathBuf, realizations: Option<u64>, restarts: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let mut plan = load_plan(&config)?;
    if let Some(n) = realizations {
        plan.n_realizations = n;
    }
    if let Some(n) = restarts {
        plan.n_restarts = n;
    }
    let result = run_experiment(&plan)?;
    let rows = report_complexity(&result);
    write_complexity(std::io::stdout().lock(), &result, &rows)?;
    if let Some(dir) = out {
        fs::create_dir_all(&dir)?;
        write_complexity(fs::File::create(dir.join("complexity.csv"))?, &result, &rows)?;
    }
    Ok(())
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run(args) => run(args)?,
        Command::Gradcheck { seed } => {
            if !gradcheck(seed)? {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Complexity {
            config,
            realizations,
            restarts,
            out,
        } => complexity(config, realizations, restarts, out)?,
    }
    Ok(ExitCode::SUCCESS)
}
