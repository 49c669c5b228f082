use std::fmt;
use std::str::FromStr;

use crate::counters::OpCounts;
use crate::error::Error;
use crate::scenario::BeamformerSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Wmmse,
    Gd,
    Adam,
    Mlgd,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Self::Wmmse, Self::Gd, Self::Adam, Self::Mlgd];

    pub fn name(self) -> &'static str {
        match self {
            Self::Wmmse => "wmmse",
            Self::Gd => "gd",
            Self::Adam => "adam",
            Self::Mlgd => "mlgd",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wmmse" => Ok(Self::Wmmse),
            "gd" => Ok(Self::Gd),
            "adam" => Ok(Self::Adam),
            "mlgd" => Ok(Self::Mlgd),
            other => Err(Error::Config(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Which iterate a solver reports as its answer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Report {
    #[default]
    BestIterate,
    LastIterate,
}

impl FromStr for Report {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim() {
            "best" | "best_iterate" => Ok(Self::BestIterate),
            "last" | "last_iterate" => Ok(Self::LastIterate),
            other => Err(Error::Config(format!("unknown report mode `{other}`"))),
        }
    }
}

/// Record of a single solver run.
#[derive(Clone, Debug)]
pub struct RunTrajectory {
    pub algorithm: Algorithm,
    pub realization: u64,
    pub restart: u64,
    /// WSR in bits after every iteration.
    pub wsr: Vec<f64>,
    /// Total transmit power after every iteration.
    pub power: Vec<f64>,
    pub wall_ms: f64,
    pub best_index: usize,
    pub best_beamformers: BeamformerSet,
    pub final_beamformers: BeamformerSet,
    /// Work done by the run, from the per-thread counters.
    pub ops: OpCounts,
    /// Meta-network updates taken (MLGD only).
    pub meta_updates: usize,
}

impl RunTrajectory {
    pub(crate) fn new(algorithm: Algorithm, realization: u64, restart: u64, init: &BeamformerSet) -> Self {
        Self {
            algorithm,
            realization,
            restart,
            wsr: Vec::new(),
            power: Vec::new(),
            wall_ms: 0.0,
            best_index: 0,
            best_beamformers: init.clone(),
            final_beamformers: init.clone(),
            ops: OpCounts::default(),
            meta_updates: 0,
        }
    }

    /// Appends an iterate, tracking the best one seen so far.
    pub(crate) fn record(&mut self, wsr: f64, v: &BeamformerSet) {
        if self.wsr.is_empty() || wsr > self.wsr[self.best_index] {
            self.best_index = self.wsr.len();
            self.best_beamformers = v.clone();
        }
        self.wsr.push(wsr);
        self.power.push(v.power());
        self.final_beamformers = v.clone();
    }

    pub fn iterations(&self) -> usize {
        self.wsr.len()
    }

    pub fn final_wsr(&self) -> f64 {
        self.wsr.last().copied().unwrap_or(f64::NAN)
    }

    pub fn best_wsr(&self) -> f64 {
        self.wsr.get(self.best_index).copied().unwrap_or(f64::NAN)
    }

    pub fn reported_wsr(&self, report: Report) -> f64 {
        match report {
            Report::BestIterate => self.best_wsr(),
            Report::LastIterate => self.final_wsr(),
        }
    }
}
