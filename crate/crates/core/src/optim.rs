//! Power projection and the first-order baselines (plain gradient ascent and Adam).

use std::str::FromStr;

use crate::counters;
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::objective::{wsr_with_gradient, WirtingerGradient};
use crate::scenario::{init_beamformers, noise_variance, BeamformerSet, ChannelSet, ScenarioConfig};
use crate::trajectory::{Algorithm, RunTrajectory};

pub const DEFAULT_GD_LR: f64 = 1e-1;
pub const DEFAULT_ADAM_LR: f64 = 1e-2;

/// Scale factor `sqrt(P / sum_k ||V_k||_F^2)` of the power projection.
pub fn projection_scale(v: &[ComplexMatrix], total_power: f64) -> Result<f64> {
    let power = crate::linalg::frob2(v);
    if !(power > 0.0) || !power.is_finite() {
        return Err(Error::Degenerate(format!(
            "cannot project beamformers with total power {power}"
        )));
    }
    Ok((total_power / power).sqrt())
}

/// Rescales every beamformer by one common factor so the total power equals `P`.
/// Applied unconditionally: it scales up as well as down.
pub fn project_power(v: &BeamformerSet, total_power: f64) -> Result<BeamformerSet> {
    let mut out = v.clone();
    project_power_mut(&mut out, total_power)?;
    Ok(out)
}

pub fn project_power_mut(v: &mut BeamformerSet, total_power: f64) -> Result<f64> {
    let c = projection_scale(v, total_power)?;
    v.iter_mut().for_each(|m| m.scale_mut(c));
    Ok(c)
}

/// `V_k <- V_k + lr G_k`, then project.
pub fn gd_step(
    v: &BeamformerSet,
    g: &WirtingerGradient,
    lr: f64,
    total_power: f64,
) -> Result<BeamformerSet> {
    let mut out = v.clone();
    for (vk, gk) in out.iter_mut().zip(g.iter()) {
        vk.axpy(lr, gk);
    }
    project_power_mut(&mut out, total_power)?;
    Ok(out)
}

/// Bias-corrected Adam moments over a flat real parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Advances the moments with `grad` and returns `m_hat / (sqrt(v_hat) + eps)`.
    pub fn direction(&mut self, grad: &[f64]) -> Vec<f64> {
        assert_eq!(grad.len(), self.first_moment.len(), "Adam state has the wrong length");
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        grad.iter()
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
            .map(|(&g, (m, v))| {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                (*m / bc1) / ((*v / bc2).sqrt() + self.eps)
            })
            .collect()
    }
}

fn flatten(set: &[ComplexMatrix]) -> Vec<f64> {
    set.iter().flat_map(|m| m.to_real_parts()).collect()
}

/// One Adam ascent step on the real/imaginary view of `V`, then project.
pub fn adam_step(
    v: &BeamformerSet,
    g: &WirtingerGradient,
    state: &mut AdamState,
    lr: f64,
    total_power: f64,
) -> Result<BeamformerSet> {
    let mut out = adam_step_unprojected(v, g, state, lr)?;
    project_power_mut(&mut out, total_power)?;
    Ok(out)
}

pub(crate) fn adam_step_unprojected(
    v: &BeamformerSet,
    g: &WirtingerGradient,
    state: &mut AdamState,
    lr: f64,
) -> Result<BeamformerSet> {
    let dir = state.direction(&flatten(g));
    let mut offset = 0;
    let mut out = Vec::with_capacity(v.len());
    for vk in v.iter() {
        let n = 2 * vk.as_slice().len();
        let mut parts = vk.to_real_parts();
        for (p, d) in parts.iter_mut().zip(&dir[offset..offset + n]) {
            *p += lr * d;
        }
        offset += n;
        out.push(ComplexMatrix::from_real_parts(vk.rows(), vk.cols(), &parts)?);
    }
    Ok(BeamformerSet(out))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FirstOrderMethod {
    Gd,
    Adam,
}

impl FromStr for FirstOrderMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gd" => Ok(Self::Gd),
            "adam" => Ok(Self::Adam),
            other => Err(Error::Config(format!("unknown first-order method `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FirstOrderConfig {
    pub method: FirstOrderMethod,
    /// Constant step size.
    pub lr: f64,
    pub iters: usize,
}

impl FirstOrderConfig {
    pub fn gd(iters: usize) -> Self {
        Self {
            method: FirstOrderMethod::Gd,
            lr: DEFAULT_GD_LR,
            iters,
        }
    }

    pub fn adam(iters: usize) -> Self {
        Self {
            method: FirstOrderMethod::Adam,
            lr: DEFAULT_ADAM_LR,
            iters,
        }
    }
}

/// Projected gradient ascent (plain or Adam) from a keyed random start.
pub fn run_first_order(
    h: &ChannelSet,
    config: &ScenarioConfig,
    realization: u64,
    restart: u64,
    fo: &FirstOrderConfig,
) -> Result<RunTrajectory> {
    if fo.iters == 0 {
        return Err(Error::Config("iteration count must be at least 1".into()));
    }
    let clock = std::time::Instant::now();
    let start = counters::snapshot();
    let sigma2 = noise_variance(config);
    let weights = &config.user_weights;
    let mut v = init_beamformers(config, realization, restart);
    let algorithm = match fo.method {
        FirstOrderMethod::Gd => Algorithm::Gd,
        FirstOrderMethod::Adam => Algorithm::Adam,
    };
    let mut traj = RunTrajectory::new(algorithm, realization, restart, &v);
    let n_real = 2 * v.iter().map(|m| m.as_slice().len()).sum::<usize>();
    let mut adam = AdamState::new(n_real);

    let (_, mut g) = wsr_with_gradient(h, &v, sigma2, weights)?;
    for _ in 0..fo.iters {
        v = match fo.method {
            FirstOrderMethod::Gd => gd_step(&v, &g, fo.lr, config.total_power)?,
            FirstOrderMethod::Adam => adam_step(&v, &g, &mut adam, fo.lr, config.total_power)?,
        };
        let (rates, next) = wsr_with_gradient(h, &v, sigma2, weights)?;
        traj.record(rates.wsr, &v);
        g = next;
    }
    traj.ops = counters::snapshot().since(start);
    traj.wall_ms = clock.elapsed().as_secs_f64() * 1e3;
    Ok(traj)
}
