//! Finite-difference consistency suites behind `bench gradcheck`.

use mlgd_core::metanet::MetaNetParams;
use mlgd_core::mlgd::{meta_backward, mlgd_iteration, Problem, UpdateOrder, WindowTape};
use mlgd_core::objective::{evaluate_wsr, wsr_gradient, wsr_gradient_fd};
use mlgd_core::scenario::{init_beamformers, keyed_rng, noise_variance, sample_channels, StreamTag};
use mlgd_core::{BeamformerSet, ChannelSet, ComplexMatrix, Result, ScenarioConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    /// Largest `max|analytic - fd| / max|fd|` over the cases.
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

fn rel_error(analytic: &[f64], fd: &[f64]) -> f64 {
    let scale = fd.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let err = analytic.iter().zip(fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if scale == 0.0 {
        err
    } else {
        err / scale
    }
}

fn flatten(ms: &[ComplexMatrix]) -> Vec<f64> {
    ms.iter().flat_map(ComplexMatrix::to_real_parts).collect()
}

/// WSR gradient vs central differences over users {1,2,4} x Nt {4,8} x SNR {0,10,25} dB.
pub fn wsr_gradient_suite(instances: usize, seed: u64) -> Result<SuiteReport> {
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let k = [1, 2, 4][i % 3];
        let n_tx = [4, 8][(i / 3) % 2];
        let snr = [0.0, 10.0, 25.0][(i / 6) % 3];
        let cfg = ScenarioConfig::new(n_tx, 2, 2, k, snr).with_seed(seed);
        let h = sample_channels(&cfg, i as u64);
        let v = init_beamformers(&cfg, i as u64, 0);
        let sigma2 = noise_variance(&cfg);
        let g = wsr_gradient(&h, &v, sigma2, &cfg.user_weights)?;
        let fd = wsr_gradient_fd(&h, &v, sigma2, &cfg.user_weights, 1e-6)?;
        worst = worst.max(rel_error(&flatten(&g), &flatten(&fd)));
    }
    Ok(SuiteReport {
        name: "wsr_gradient",
        cases: instances,
        max_rel_error: worst,
        tolerance: 1e-4,
    })
}

/// Network parameter and input gradients vs central differences of `c . y`.
pub fn network_suite(cases: usize, seed: u64) -> Result<SuiteReport> {
    use rand::Rng;
    let mut worst: f64 = 0.0;
    for case in 0..cases as u64 {
        let mut rng = keyed_rng(seed, case, 0, StreamTag::Network);
        let io = 4;
        let mut net = MetaNetParams::init(io, &mut rng);
        for p in net.theta_mut() {
            *p += rng.random_range(-0.3..0.3);
        }
        let x: Vec<f64> = (0..io).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..io).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, tape) = net.forward(&x)?;
        let (g_theta, g_x) = net.backward(&tape, &c)?;
        let loss = |n: &MetaNetParams, x: &[f64]| -> Result<f64> {
            Ok(n.forward(x)?.0.iter().zip(&c).map(|(a, b)| a * b).sum())
        };
        let eps = 1e-6;
        let mut fd_theta = vec![0.0; net.param_count()];
        for j in 0..fd_theta.len() {
            let orig = net.theta()[j];
            net.theta_mut()[j] = orig + eps;
            let lp = loss(&net, &x)?;
            net.theta_mut()[j] = orig - eps;
            let lm = loss(&net, &x)?;
            net.theta_mut()[j] = orig;
            fd_theta[j] = (lp - lm) / (2.0 * eps);
        }
        let mut fd_x = vec![0.0; io];
        for j in 0..io {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += eps;
            xm[j] -= eps;
            fd_x[j] = (loss(&net, &xp)? - loss(&net, &xm)?) / (2.0 * eps);
        }
        worst = worst.max(rel_error(&g_theta, &fd_theta)).max(rel_error(&g_x, &fd_x));
    }
    Ok(SuiteReport {
        name: "network",
        cases,
        max_rel_error: worst,
        tolerance: 1e-6,
    })
}

/// Window objective `sum_i F(V_i)` of the unrolled updates with the network
/// inputs held at `inputs` (the detached chain).
pub fn unrolled_window_loss(
    net: &MetaNetParams,
    h: &ChannelSet,
    cfg: &ScenarioConfig,
    v0: &BeamformerSet,
    inputs: &[Vec<Vec<f64>>],
) -> Result<f64> {
    let sigma2 = noise_variance(cfg);
    let mut v = v0.clone();
    let mut loss = 0.0;
    for xs in inputs {
        loss += evaluate_wsr(h, &v, sigma2, &cfg.user_weights)?.wsr;
        for (vk, x) in v.iter_mut().zip(xs) {
            let (y, _) = net.forward(x)?;
            *vk += &ComplexMatrix::from_real_parts(vk.rows(), vk.cols(), &y)?;
        }
        let c = (cfg.total_power / v.power()).sqrt();
        v.iter_mut().for_each(|m| m.scale_mut(c));
    }
    Ok(loss)
}

/// Meta-gradient vs differences of the unrolled window on Nt=2, Nr=1, d=1, K=1, T=2.
pub fn meta_gradient_suite(cases: usize, seed: u64) -> Result<SuiteReport> {
    use rand::Rng;
    let mut worst: f64 = 0.0;
    for case in 0..cases as u64 {
        let cfg = ScenarioConfig::new(2, 1, 1, 1, 10.0).with_seed(seed);
        let h = sample_channels(&cfg, case);
        let problem = Problem::new(&h, &cfg);
        let mut rng = keyed_rng(seed, case, 0, StreamTag::Network);
        let mut net = MetaNetParams::init(4, &mut rng);
        for p in net.theta_mut() {
            *p += rng.random_range(-0.15..0.15);
        }
        let v0 = init_beamformers(&cfg, case, 0);
        let mut tape = WindowTape::new();
        let mut v = v0.clone();
        for _ in 0..2 {
            v = mlgd_iteration(&problem, &v, &net, UpdateOrder::Jacobi, &mut tape)?;
        }
        let analytic = meta_backward(&tape, &net, &problem, true)?;
        let inputs = tape.inputs();
        let eps = 1e-5;
        let mut fd = vec![0.0; net.param_count()];
        for j in 0..fd.len() {
            let orig = net.theta()[j];
            net.theta_mut()[j] = orig + eps;
            let lp = unrolled_window_loss(&net, &h, &cfg, &v0, &inputs)?;
            net.theta_mut()[j] = orig - eps;
            let lm = unrolled_window_loss(&net, &h, &cfg, &v0, &inputs)?;
            net.theta_mut()[j] = orig;
            fd[j] = (lp - lm) / (2.0 * eps);
        }
        worst = worst.max(rel_error(&analytic, &fd));
    }
    Ok(SuiteReport {
        name: "meta_gradient",
        cases,
        max_rel_error: worst,
        tolerance: 1e-4,
    })
}

pub fn run_all(seed: u64) -> Result<Vec<SuiteReport>> {
    Ok(vec![
        wsr_gradient_suite(50, seed)?,
        network_suite(20, seed)?,
        meta_gradient_suite(4, seed)?,
    ])
}
