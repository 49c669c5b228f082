//! Weighted-MMSE alternating minimization.
//!
//! Minimizes `sum_k a_k [Tr(W_k E_k) - ln det W_k]` under the total power constraint by
//! cycling through the closed-form receiver, weight and beamformer updates. The
//! beamformer update needs the power multiplier `mu`, found by bisection.

use crate::counters;
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, HpdFactor};
use crate::objective::evaluate_wsr;
use crate::scenario::{init_beamformers, noise_variance, BeamformerSet, ChannelSet, ScenarioConfig};
use crate::trajectory::{Algorithm, RunTrajectory};

/// WSR change (bits) at or below which the iteration stops.
pub const STOP_TOLERANCE_BITS: f64 = 1e-4;
pub const DEFAULT_MAX_ITERS: usize = 500;

const MAX_BISECTION_STEPS: usize = 200;
const MAX_DOUBLINGS: usize = 60;
const POWER_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct WmmseState {
    pub receivers: Vec<ComplexMatrix>,
    pub weights: Vec<ComplexMatrix>,
    pub beamformers: BeamformerSet,
    pub mu: f64,
    pub iteration: usize,
    pub last_wsr: f64,
}

/// MMSE receivers `U_k = A_k^-1 H_k V_k`.
pub fn update_receivers(h: &ChannelSet, v: &BeamformerSet, sigma2: f64) -> Result<Vec<ComplexMatrix>> {
    let n_tx = v[0].rows();
    let mut tx_cov = ComplexMatrix::zeros(n_tx, n_tx);
    for vr in v.iter() {
        tx_cov += &vr.matmul_adjoint(vr);
    }
    h.iter()
        .zip(v.iter())
        .map(|(hk, vk)| {
            let mut a = hk.matmul(&tx_cov).matmul_adjoint(hk);
            for i in 0..a.rows() {
                a[(i, i)].re += sigma2;
            }
            a.hermitize();
            HpdFactor::new(&a)?.solve(&hk.matmul(vk))
        })
        .collect()
}

/// MSE matrix of user `k` for arbitrary (not necessarily MMSE) receivers.
pub fn mse_matrix(
    h: &ChannelSet,
    v: &BeamformerSet,
    u: &[ComplexMatrix],
    sigma2: f64,
    k: usize,
) -> ComplexMatrix {
    let d = v[k].cols();
    let uh_h = u[k].adjoint_matmul(&h[k]);
    let mut own = ComplexMatrix::identity(d);
    own -= &uh_h.matmul(&v[k]);
    let mut e = own.matmul_adjoint(&own);
    for (r, vr) in v.iter().enumerate() {
        if r != k {
            let t = uh_h.matmul(vr);
            e += &t.matmul_adjoint(&t);
        }
    }
    e.axpy(sigma2, &u[k].adjoint_matmul(&u[k]));
    e.hermitize();
    e
}

/// Optimal weights `W_k = E_k^-1`.
pub fn update_weights(
    h: &ChannelSet,
    v: &BeamformerSet,
    u: &[ComplexMatrix],
    sigma2: f64,
) -> Result<Vec<ComplexMatrix>> {
    (0..v.len())
        .map(|k| {
            let e = mse_matrix(h, v, u, sigma2, k);
            let factor = HpdFactor::new(&e).map_err(|err| {
                Error::Numerical(format!(
                    "MSE matrix of user {k} is singular ({err}); noise variance {sigma2:e} is too small"
                ))
            })?;
            let mut w = factor.solve(&ComplexMatrix::identity(e.rows()))?;
            w.hermitize();
            Ok(w)
        })
        .collect()
}

/// Surrogate objective `sum_k a_k [Tr(W_k E_k) - ln det W_k]` (natural log).
pub fn surrogate(
    h: &ChannelSet,
    v: &BeamformerSet,
    u: &[ComplexMatrix],
    w: &[ComplexMatrix],
    sigma2: f64,
    user_weights: &[f64],
) -> Result<f64> {
    let mut total = 0.0;
    for k in 0..v.len() {
        let e = mse_matrix(h, v, u, sigma2, k);
        let logdet_w = HpdFactor::new(&w[k])?.logdet2() * std::f64::consts::LN_2;
        total += user_weights[k] * (w[k].matmul(&e).trace().re - logdet_w);
    }
    Ok(total)
}

/// Relative diagonal shift used to reach the minimum-norm solution of a singular system.
const SINGULAR_SHIFT: f64 = 1e-11;

/// Pieces of `V_k(mu) = a_k (J + mu I)^-1 H_k^H U_k W_k`.
#[derive(Clone, Debug)]
struct BeamformerSystem {
    /// `sum_r a_r H_r^H U_r W_r U_r^H H_r`
    gram: ComplexMatrix,
    /// Right-hand sides `a_k H_k^H U_k W_k`, stacked column-wise.
    rhs: ComplexMatrix,
    streams: Vec<usize>,
}

impl BeamformerSystem {
    fn new(
        h: &ChannelSet,
        u: &[ComplexMatrix],
        w: &[ComplexMatrix],
        user_weights: &[f64],
    ) -> Self {
        let n_tx = h[0].cols();
        let mut gram = ComplexMatrix::zeros(n_tx, n_tx);
        let streams: Vec<usize> = u.iter().map(|m| m.cols()).collect();
        let mut rhs = ComplexMatrix::zeros(n_tx, streams.iter().sum());
        let mut col = 0;
        for (((hk, uk), wk), &a) in h.iter().zip(u).zip(w).zip(user_weights) {
            let hu = hk.adjoint_matmul(uk);
            let huw = hu.matmul(wk);
            gram.axpy(a, &huw.matmul_adjoint(&hu));
            for i in 0..n_tx {
                for j in 0..huw.cols() {
                    rhs[(i, col + j)] = huw[(i, j)] * a;
                }
            }
            col += huw.cols();
        }
        gram.hermitize();
        Self { gram, rhs, streams }
    }

    fn solve(&self, mu: f64) -> Result<ComplexMatrix> {
        let mut m = self.gram.clone();
        for i in 0..m.rows() {
            m[(i, i)].re += mu;
        }
        let f = HpdFactor::new(&m)?;
        // Treat a numerically singular J as an active constraint.
        let max_diag = (0..m.rows()).map(|i| m[(i, i)].re).fold(0.0, f64::max);
        if f.min_pivot().powi(2) <= 1e-13 * max_diag {
            return Err(Error::NotPositiveDefinite {
                index: 0,
                pivot: f.min_pivot(),
            });
        }
        f.solve(&self.rhs)
    }

    fn max_diag(&self) -> f64 {
        (0..self.gram.rows()).map(|i| self.gram[(i, i)].re).fold(0.0, f64::max)
    }

    fn split(&self, stacked: &ComplexMatrix) -> BeamformerSet {
        let mut col = 0;
        BeamformerSet(
            self.streams
                .iter()
                .map(|&d| {
                    let m = ComplexMatrix::from_fn(stacked.rows(), d, |i, j| stacked[(i, col + j)]);
                    col += d;
                    m
                })
                .collect(),
        )
    }
}

/// Power-constrained beamformer update; returns the beamformers and the multiplier.
pub fn update_beamformers(
    h: &ChannelSet,
    u: &[ComplexMatrix],
    w: &[ComplexMatrix],
    user_weights: &[f64],
    total_power: f64,
) -> Result<(BeamformerSet, f64)> {
    let sys = BeamformerSystem::new(h, u, w, user_weights);
    // For singular J the right-hand side lies in its range, so V(0) is taken as
    // the limit mu -> 0+, i.e. the minimum-norm solution.
    let unconstrained = sys
        .solve(0.0)
        .or_else(|_| sys.solve(SINGULAR_SHIFT * sys.max_diag().max(f64::MIN_POSITIVE)));
    if let Ok(x) = unconstrained {
        if x.norm_sqr() <= total_power {
            return Ok((sys.split(&x), 0.0));
        }
    }

    counters::record_bisection();
    let power = |mu: f64| sys.solve(mu).map(|x| (x.norm_sqr(), x));
    let mut hi = 1.0;
    let (mut hi_power, mut hi_x) = power(hi)?;
    let mut doublings = 0;
    while hi_power > total_power {
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(Error::Numerical(format!(
                "no power multiplier bracket found below {hi:e}"
            )));
        }
        hi *= 2.0;
        (hi_power, hi_x) = power(hi)?;
    }
    let mut lo = if doublings == 0 { 0.0 } else { hi / 2.0 };
    for _ in 0..MAX_BISECTION_STEPS {
        if (total_power - hi_power) <= 1e-13 * total_power || hi - lo <= 1e-15 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match power(mid) {
            Ok((p, x)) if p <= total_power => {
                hi = mid;
                hi_power = p;
                hi_x = x;
            }
            _ => lo = mid,
        }
    }
    debug_assert!(hi_power <= total_power);
    if (total_power - hi_power) > POWER_TOLERANCE * total_power && lo > 0.0 {
        return Err(Error::Numerical(format!(
            "bisection stalled at mu = {hi:e} with power {hi_power} (target {total_power})"
        )));
    }
    Ok((sys.split(&hi_x), hi))
}

#[derive(Clone, Debug)]
pub struct WmmseRun {
    pub trajectory: RunTrajectory,
    pub state: WmmseState,
    pub converged: bool,
}

/// One receiver / weight / beamformer sweep.
pub fn wmmse_sweep(
    h: &ChannelSet,
    v: &BeamformerSet,
    sigma2: f64,
    user_weights: &[f64],
    total_power: f64,
) -> Result<(Vec<ComplexMatrix>, Vec<ComplexMatrix>, BeamformerSet, f64)> {
    let u = update_receivers(h, v, sigma2)?;
    let w = update_weights(h, v, &u, sigma2)?;
    let (v_next, mu) = update_beamformers(h, &u, &w, user_weights, total_power)?;
    Ok((u, w, v_next, mu))
}

/// Runs WMMSE from the keyed random start until the WSR changes by at most
/// [`STOP_TOLERANCE_BITS`] between consecutive iterations, or `max_iters`.
pub fn run_wmmse(
    h: &ChannelSet,
    config: &ScenarioConfig,
    realization: u64,
    restart: u64,
    max_iters: usize,
) -> Result<WmmseRun> {
    if max_iters == 0 {
        return Err(Error::Config("iteration count must be at least 1".into()));
    }
    let clock = std::time::Instant::now();
    let start = counters::snapshot();
    let sigma2 = noise_variance(config);
    let weights = &config.user_weights;
    let mut v = init_beamformers(config, realization, restart);
    let mut traj = RunTrajectory::new(Algorithm::Wmmse, realization, restart, &v);
    let mut last = evaluate_wsr(h, &v, sigma2, weights)?.wsr;
    let mut state = None;
    let mut converged = false;
    for it in 1..=max_iters {
        let (u, w, v_next, mu) = wmmse_sweep(h, &v, sigma2, weights, config.total_power)?;
        v = v_next;
        let wsr = evaluate_wsr(h, &v, sigma2, weights)?.wsr;
        traj.record(wsr, &v);
        let delta = (wsr - last).abs();
        last = wsr;
        state = Some(WmmseState {
            receivers: u,
            weights: w,
            beamformers: v.clone(),
            mu,
            iteration: it,
            last_wsr: wsr,
        });
        if delta <= STOP_TOLERANCE_BITS {
            converged = true;
            break;
        }
    }
    traj.ops = counters::snapshot().since(start);
    traj.wall_ms = clock.elapsed().as_secs_f64() * 1e3;
    Ok(WmmseRun {
        trajectory: traj,
        state: state.expect("at least one iteration"),
        converged,
    })
}
