//! Scenario configuration, keyed random channel draws and beamformer initialization.

use std::ops::{Deref, DerefMut};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{frob2, ComplexMatrix, C64};
use crate::optim::project_power;

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_streams: usize,
    pub n_users: usize,
    pub total_power: f64,
    pub snr_db: f64,
    pub user_weights: Vec<f64>,
    pub master_seed: u64,
}

impl ScenarioConfig {
    /// Unit-weight scenario with `P = 1`.
    pub fn new(n_tx: usize, n_rx: usize, n_streams: usize, n_users: usize, snr_db: f64) -> Self {
        Self {
            n_tx,
            n_rx,
            n_streams,
            n_users,
            total_power: 1.0,
            snr_db,
            user_weights: vec![1.0; n_users],
            master_seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_snr(&self, snr_db: f64) -> Self {
        Self {
            snr_db,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_tx == 0 || self.n_rx == 0 || self.n_streams == 0 || self.n_users == 0 {
            return Err(Error::Config("antenna, stream and user counts must be positive".into()));
        }
        if self.n_streams > self.n_tx.min(self.n_rx) {
            return Err(Error::Config(format!(
                "d = {} exceeds min(n_tx, n_rx) = {}",
                self.n_streams,
                self.n_tx.min(self.n_rx)
            )));
        }
        if !(self.total_power > 0.0 && self.total_power.is_finite()) {
            return Err(Error::Config(format!(
                "total power must be positive, got {}",
                self.total_power
            )));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::Config("snr_db must be finite".into()));
        }
        if self.user_weights.len() != self.n_users {
            return Err(Error::Config(format!(
                "{} user weights given for {} users",
                self.user_weights.len(),
                self.n_users
            )));
        }
        if self.user_weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::Config("user weights must be positive".into()));
        }
        Ok(())
    }

    /// Non-fatal oddities worth reporting to the user.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n_users * self.n_streams > self.n_tx {
            out.push(format!(
                "overloaded system: K*d = {} exceeds n_tx = {}",
                self.n_users * self.n_streams,
                self.n_tx
            ));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet(pub Vec<ComplexMatrix>);

#[derive(Clone, Debug, PartialEq)]
pub struct BeamformerSet(pub Vec<ComplexMatrix>);

macro_rules! matrix_list_newtype {
    ($ty:ident) => {
        impl Deref for $ty {
            type Target = [ComplexMatrix];

            fn deref(&self) -> &[ComplexMatrix] {
                &self.0
            }
        }

        impl DerefMut for $ty {
            fn deref_mut(&mut self) -> &mut [ComplexMatrix] {
                &mut self.0
            }
        }
    };
}

matrix_list_newtype!(ChannelSet);
matrix_list_newtype!(BeamformerSet);

impl BeamformerSet {
    pub fn zeros(config: &ScenarioConfig) -> Self {
        Self(
            (0..config.n_users)
                .map(|_| ComplexMatrix::zeros(config.n_tx, config.n_streams))
                .collect(),
        )
    }

    pub fn power(&self) -> f64 {
        frob2(&self.0)
    }
}

/// Purpose tags that separate the random streams drawn for one realization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamTag {
    Channel = 1,
    Beamformer = 2,
    Network = 3,
}

/// Counter-style keyed generator: the stream is a pure function of the keys.
pub fn keyed_rng(master_seed: u64, realization: u64, restart: u64, tag: StreamTag) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    for (chunk, word) in seed
        .chunks_exact_mut(8)
        .zip([master_seed, realization, restart, tag as u64])
    {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// One circularly-symmetric CN(0, 1) draw.
pub fn complex_gaussian<R: rand::Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn gaussian_matrix<R: rand::Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

/// Rayleigh block-fading channels `H_k` (n_rx x n_tx) for one realization.
pub fn sample_channels(config: &ScenarioConfig, realization: u64) -> ChannelSet {
    let mut rng = keyed_rng(config.master_seed, realization, 0, StreamTag::Channel);
    ChannelSet(
        (0..config.n_users)
            .map(|_| gaussian_matrix(&mut rng, config.n_rx, config.n_tx))
            .collect(),
    )
}

/// `sigma^2 = P 10^(-SNR/10)`, shared by every user.
pub fn noise_variance(config: &ScenarioConfig) -> f64 {
    config.total_power * 10f64.powf(-config.snr_db / 10.0)
}

/// Random CN(0, 1) beamformers scaled onto the power sphere.
pub fn init_beamformers(config: &ScenarioConfig, realization: u64, restart: u64) -> BeamformerSet {
    let mut rng = keyed_rng(config.master_seed, realization, restart, StreamTag::Beamformer);
    for _ in 0..2 {
        let v = BeamformerSet(
            (0..config.n_users)
                .map(|_| gaussian_matrix(&mut rng, config.n_tx, config.n_streams))
                .collect(),
        );
        if let Ok(v) = project_power(&v, config.total_power) {
            return v;
        }
    }
    unreachable!("two consecutive all-zero Gaussian draws")
}
