//! Experiment plans and the `key = value` config format.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use mlgd_core::mlgd::{InputEncoding, MlgdConfig, UpdateOrder};
use mlgd_core::optim::{DEFAULT_ADAM_LR, DEFAULT_GD_LR};
use mlgd_core::wmmse::DEFAULT_MAX_ITERS;
use mlgd_core::{Algorithm, Error, Report, Result, ScenarioConfig};

pub const DEFAULT_REALIZATIONS: u64 = 100;
pub const DEFAULT_RESTARTS: u64 = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPlan {
    /// Label written to the `scenario` column.
    pub name: String,
    /// Dimensions, power, weights and master seed. The SNR field is overridden per sweep point.
    pub scenario: ScenarioConfig,
    pub snr_list: Vec<f64>,
    pub n_realizations: u64,
    pub n_restarts: u64,
    pub algorithms: Vec<Algorithm>,
    pub mlgd: MlgdConfig,
    pub gd_lr: f64,
    pub adam_lr: f64,
    /// Iterations for GD and Adam. Defaults to the MLGD iteration budget.
    pub first_order_iters: Option<usize>,
    pub wmmse_max_iters: usize,
    pub workers: usize,
    pub out_dir: PathBuf,
    /// Write wall-clock columns. Turning this off makes every CSV byte-stable.
    pub record_timing: bool,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        let scenario = ScenarioConfig::new(8, 2, 2, 2, 10.0);
        Self {
            name: String::new(),
            scenario,
            snr_list: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            n_realizations: DEFAULT_REALIZATIONS,
            n_restarts: DEFAULT_RESTARTS,
            algorithms: Algorithm::ALL.to_vec(),
            mlgd: MlgdConfig::default(),
            gd_lr: DEFAULT_GD_LR,
            adam_lr: DEFAULT_ADAM_LR,
            first_order_iters: None,
            wmmse_max_iters: DEFAULT_MAX_ITERS,
            workers: 1,
            out_dir: PathBuf::from("results"),
            record_timing: true,
        }
    }
}

impl ExperimentPlan {
    pub fn scenario_name(&self) -> String {
        if self.name.is_empty() {
            let s = &self.scenario;
            format!("k{}_nt{}_nr{}_d{}", s.n_users, s.n_tx, s.n_rx, s.n_streams)
        } else {
            self.name.clone()
        }
    }

    pub fn first_order_iters(&self) -> usize {
        self.first_order_iters.unwrap_or(self.mlgd.total_iters)
    }

    pub fn scenario_at(&self, snr_db: f64) -> ScenarioConfig {
        self.scenario.with_snr(snr_db)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.mlgd.validate()?;
        if self.n_realizations == 0 {
            return Err(Error::Config("n_realizations must be at least 1".into()));
        }
        if self.n_restarts == 0 {
            return Err(Error::Config("n_restarts must be at least 1".into()));
        }
        if self.snr_list.is_empty() {
            return Err(Error::Config("snr_list is empty".into()));
        }
        if self.snr_list.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("snr_list has a non-finite entry".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("no algorithms selected".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.first_order_iters() == 0 || self.wmmse_max_iters == 0 {
            return Err(Error::Config("iteration counts must be at least 1".into()));
        }
        for (key, lr) in [("gd_lr", self.gd_lr), ("adam_lr", self.adam_lr)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("{key} must be positive")));
            }
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "scenario" | "name" => self.name = value.to_string(),
            "n_tx" => self.scenario.n_tx = parse(key, value)?,
            "n_rx" => self.scenario.n_rx = parse(key, value)?,
            "n_streams" | "d" => self.scenario.n_streams = parse(key, value)?,
            "n_users" | "k" => {
                let k: usize = parse(key, value)?;
                if self.scenario.user_weights.len() != k {
                    self.scenario.user_weights = vec![1.0; k];
                }
                self.scenario.n_users = k;
            }
            "total_power" => self.scenario.total_power = parse(key, value)?,
            "user_weights" => self.scenario.user_weights = parse_list(key, value)?,
            "master_seed" | "seed" => self.scenario.master_seed = parse(key, value)?,
            "snr_db" | "snr_list" | "snr" => self.snr_list = parse_snr_list(value)?,
            "n_realizations" | "realizations" => self.n_realizations = parse(key, value)?,
            "n_restarts" | "restarts" => self.n_restarts = parse(key, value)?,
            "algorithms" => self.algorithms = parse_list(key, value)?,
            "total_iters" | "iters" => self.mlgd.total_iters = parse(key, value)?,
            "window" => self.mlgd.window = parse(key, value)?,
            "meta_lr" => self.mlgd.meta_lr = parse(key, value)?,
            "detach_inputs" => self.mlgd.detach_inputs = parse(key, value)?,
            "update_order" => self.mlgd.update_order = parse::<UpdateOrder>(key, value)?,
            "report" => self.mlgd.report = parse::<Report>(key, value)?,
            "input_encoding" => self.mlgd.input_encoding = parse::<InputEncoding>(key, value)?,
            "gd_lr" => self.gd_lr = parse(key, value)?,
            "adam_lr" => self.adam_lr = parse(key, value)?,
            "first_order_iters" => self.first_order_iters = Some(parse(key, value)?),
            "wmmse_max_iters" => self.wmmse_max_iters = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "out_dir" | "out" => self.out_dir = PathBuf::from(value),
            "record_timing" => self.record_timing = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Parses a config file body on top of the defaults.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut plan = Self::default();
        plan.apply_config_str(text)?;
        Ok(plan)
    }

    pub fn apply_config_str(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            self.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    /// Fully resolved settings, one `key = value` per line, readable by [`Self::from_config_str`].
    pub fn to_config_string(&self) -> String {
        let s = &self.scenario;
        let list = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",");
        let algs = self.algorithms.iter().map(|a| a.name()).collect::<Vec<_>>().join(",");
        let order = match self.mlgd.update_order {
            UpdateOrder::Jacobi => "jacobi",
            UpdateOrder::GaussSeidel => "gauss_seidel",
        };
        let report = match self.mlgd.report {
            Report::BestIterate => "best",
            Report::LastIterate => "last",
        };
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("scenario", self.scenario_name());
        kv("n_tx", s.n_tx.to_string());
        kv("n_rx", s.n_rx.to_string());
        kv("n_streams", s.n_streams.to_string());
        kv("n_users", s.n_users.to_string());
        kv("total_power", format!("{}", s.total_power));
        kv("user_weights", list(&s.user_weights));
        kv("master_seed", s.master_seed.to_string());
        kv("snr_list", list(&self.snr_list));
        kv("n_realizations", self.n_realizations.to_string());
        kv("n_restarts", self.n_restarts.to_string());
        kv("algorithms", algs);
        kv("total_iters", self.mlgd.total_iters.to_string());
        kv("window", self.mlgd.window.to_string());
        kv("meta_lr", format!("{}", self.mlgd.meta_lr));
        kv("detach_inputs", self.mlgd.detach_inputs.to_string());
        kv("update_order", order.to_string());
        kv("report", report.to_string());
        kv("input_encoding", self.mlgd.input_encoding.name().to_string());
        kv("gd_lr", format!("{}", self.gd_lr));
        kv("adam_lr", format!("{}", self.adam_lr));
        kv("first_order_iters", self.first_order_iters().to_string());
        kv("wmmse_max_iters", self.wmmse_max_iters.to_string());
        kv("workers", self.workers.to_string());
        kv("out_dir", self.out_dir.display().to_string());
        kv("record_timing", self.record_timing.to_string());
        out
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::Config(format!("bad value `{value}` for `{key}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

/// Comma-separated values; an entry `a:step:b` expands to `a, a+step, ..., b`.
pub fn parse_snr_list(value: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parts: Vec<&str> = item.split(':').collect();
        match parts.as_slice() {
            [single] => out.push(parse("snr", single)?),
            [a, step, b] => {
                let (a, step, b): (f64, f64, f64) = (parse("snr", a)?, parse("snr", step)?, parse("snr", b)?);
                if !(step > 0.0) || b < a {
                    return Err(Error::Config(format!("bad SNR range `{item}`")));
                }
                let n = ((b - a) / step + 1e-9).floor() as usize;
                out.extend((0..=n).map(|i| a + step * i as f64));
            }
            _ => return Err(Error::Config(format!("bad SNR entry `{item}`"))),
        }
    }
    if out.is_empty() {
        return Err(Error::Config("empty SNR list".into()));
    }
    Ok(out)
}
