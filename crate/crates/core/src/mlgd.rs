//! Meta-learned gradient descent ("training while solving").
//!
//! Every iteration feeds each user's WSR gradient through the update-rule network,
//! adds the output to that user's beamformer and projects back onto the power
//! sphere. Every `window` iterations the network parameters take one Adam ascent
//! step on the sum of the WSR values seen in the window, differentiated by
//! truncated backpropagation through the unrolled updates:
//!
//! ```text
//! V_{i+1} = c_i (V_i + G_theta(x_i)),   c_i = sqrt(P / ||V_i + G_theta(x_i)||^2)
//! L_meta  = sum_{i in window} F(V_i)
//! ```
//!
//! The first iterate of a window is treated as a constant. With `detach_inputs`
//! the network inputs `x_i = grad F(V_i)` are constants as well; otherwise their
//! dependence on `V_i` is followed with Hessian-vector products of `F`, taken as
//! central differences of the analytic gradient.

use std::str::FromStr;

use crate::counters;
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::metanet::{ForwardTape, MetaNetParams, DEFAULT_META_LR};
use crate::objective::{wsr_with_gradient, WirtingerGradient};
use crate::optim::{projection_scale, AdamState};
use crate::scenario::{
    init_beamformers, keyed_rng, noise_variance, BeamformerSet, ChannelSet, ScenarioConfig, StreamTag,
};
use crate::trajectory::{Algorithm, Report, RunTrajectory};

pub const DEFAULT_TOTAL_ITERS: usize = 200;
pub const DEFAULT_WINDOW: usize = 10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum UpdateOrder {
    /// All users updated from the iteration-start state, one joint projection.
    #[default]
    Jacobi,
    /// Users updated one after another, each from the partially updated state,
    /// with a projection after every user.
    GaussSeidel,
}

impl FromStr for UpdateOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "jacobi" => Ok(Self::Jacobi),
            "gauss_seidel" | "gauss-seidel" => Ok(Self::GaussSeidel),
            other => Err(Error::Config(format!("unknown update order `{other}`"))),
        }
    }
}

/// How a user's flattened gradient is presented to the network.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum InputEncoding {
    /// Raw gradient values.
    #[default]
    Raw,
    /// Gradient scaled to unit Euclidean norm (zero stays zero).
    Normalized,
    /// Elementwise `sign(g) ln(1 + |g|)`.
    LogMagnitude,
}

impl InputEncoding {
    pub fn name(self) -> &'static str {
        match self {
            Self::Raw => "raw",
            Self::Normalized => "normalized",
            Self::LogMagnitude => "log_magnitude",
        }
    }

    pub fn encode(self, g: &[f64]) -> Vec<f64> {
        match self {
            Self::Raw => g.to_vec(),
            Self::Normalized => {
                let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n == 0.0 {
                    g.to_vec()
                } else {
                    g.iter().map(|x| x / n).collect()
                }
            }
            Self::LogMagnitude => g.iter().map(|x| x.signum() * x.abs().ln_1p()).collect(),
        }
    }

    /// Transposed Jacobian of [`Self::encode`] at `g` applied to `u`.
    pub fn pullback(self, g: &[f64], u: &[f64]) -> Vec<f64> {
        match self {
            Self::Raw => u.to_vec(),
            Self::Normalized => {
                let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n == 0.0 {
                    return u.to_vec();
                }
                let xu: f64 = g.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() / n;
                g.iter().zip(u).map(|(a, b)| (b - a / n * xu) / n).collect()
            }
            Self::LogMagnitude => g.iter().zip(u).map(|(a, b)| b / (1.0 + a.abs())).collect(),
        }
    }
}

impl FromStr for InputEncoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "raw" => Ok(Self::Raw),
            "normalized" => Ok(Self::Normalized),
            "log_magnitude" | "log-magnitude" => Ok(Self::LogMagnitude),
            other => Err(Error::Config(format!("unknown input encoding `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlgdConfig {
    pub total_iters: usize,
    pub window: usize,
    pub meta_lr: f64,
    pub detach_inputs: bool,
    pub update_order: UpdateOrder,
    pub report: Report,
    pub input_encoding: InputEncoding,
}

impl Default for MlgdConfig {
    fn default() -> Self {
        Self {
            total_iters: DEFAULT_TOTAL_ITERS,
            window: DEFAULT_WINDOW,
            meta_lr: DEFAULT_META_LR,
            detach_inputs: true,
            update_order: UpdateOrder::Jacobi,
            report: Report::BestIterate,
            input_encoding: InputEncoding::Raw,
        }
    }
}

impl MlgdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Config("window must be at least 1".into()));
        }
        if self.total_iters < self.window {
            return Err(Error::Config(format!(
                "total iterations {} shorter than the window {}",
                self.total_iters, self.window
            )));
        }
        if !(self.meta_lr >= 0.0 && self.meta_lr.is_finite()) {
            return Err(Error::Config("meta learning rate must be non-negative".into()));
        }
        Ok(())
    }
}

/// One additive update followed by a projection: `V' = c (V + sum_k E_k y_k)`.
#[derive(Clone, Debug)]
struct SubStep {
    users: Vec<usize>,
    /// State the network inputs were computed at.
    start: BeamformerSet,
    pre_projection: BeamformerSet,
    scale: f64,
    /// Unencoded flattened gradients, one per entry of `users`.
    raw_inputs: Vec<Vec<f64>>,
    tapes: Vec<ForwardTape>,
}

#[derive(Clone, Debug)]
struct IterationRecord {
    wsr: f64,
    /// Gradient of `F` at the iteration-start state.
    gradient: WirtingerGradient,
    substeps: Vec<SubStep>,
}

/// Everything recorded during the current meta window.
#[derive(Clone, Debug, Default)]
pub struct WindowTape {
    records: Vec<IterationRecord>,
    meta_loss: f64,
    encoding: InputEncoding,
}

impl WindowTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_encoding(encoding: InputEncoding) -> Self {
        Self {
            encoding,
            ..Self::default()
        }
    }

    pub fn encoding(&self) -> InputEncoding {
        self.encoding
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Accumulated `sum F(V_i)` over the window.
    pub fn meta_loss(&self) -> f64 {
        self.meta_loss
    }

    /// `F(V_i)` for each recorded iteration.
    pub fn values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.wsr).collect()
    }

    /// Per-iteration network inputs, user by user, in the order they were evaluated.
    pub fn inputs(&self) -> Vec<Vec<Vec<f64>>> {
        self.records
            .iter()
            .map(|r| {
                r.substeps
                    .iter()
                    .flat_map(|s| s.tapes.iter().map(|t| t.input().to_vec()))
                    .collect()
            })
            .collect()
    }

    /// Start-of-iteration beamformers.
    pub fn iterates(&self) -> Vec<&BeamformerSet> {
        self.records.iter().map(|r| &r.substeps[0].start).collect()
    }

    pub fn clear(&mut self) {
        self.records.clear();
        self.meta_loss = 0.0;
    }
}

/// Problem data shared by every iteration of a run.
#[derive(Clone, Copy, Debug)]
pub struct Problem<'a> {
    pub channels: &'a ChannelSet,
    pub sigma2: f64,
    pub weights: &'a [f64],
    pub total_power: f64,
}

impl<'a> Problem<'a> {
    pub fn new(channels: &'a ChannelSet, config: &'a ScenarioConfig) -> Self {
        Self {
            channels,
            sigma2: noise_variance(config),
            weights: &config.user_weights,
            total_power: config.total_power,
        }
    }

    fn value_and_gradient(&self, v: &BeamformerSet) -> Result<(f64, WirtingerGradient)> {
        let (r, g) = wsr_with_gradient(self.channels, v, self.sigma2, self.weights)?;
        Ok((r.wsr, g))
    }
}

fn apply_network(
    params: &MetaNetParams,
    v: &BeamformerSet,
    gradient: &WirtingerGradient,
    users: &[usize],
    total_power: f64,
    encoding: InputEncoding,
) -> Result<(BeamformerSet, SubStep)> {
    let mut pre = v.clone();
    let mut tapes = Vec::with_capacity(users.len());
    let mut raw_inputs = Vec::with_capacity(users.len());
    for &k in users {
        let raw = gradient[k].to_real_parts();
        let (y, tape) = params.forward(&encoding.encode(&raw))?;
        raw_inputs.push(raw);
        let step = ComplexMatrix::from_real_parts(v[k].rows(), v[k].cols(), &y)?;
        pre[k] += &step;
        tapes.push(tape);
    }
    let scale = projection_scale(&pre, total_power)?;
    let mut next = pre.clone();
    next.iter_mut().for_each(|m| m.scale_mut(scale));
    let sub = SubStep {
        users: users.to_vec(),
        start: v.clone(),
        pre_projection: pre,
        scale,
        raw_inputs,
        tapes,
    };
    Ok((next, sub))
}

/// One MLGD iteration when `F(V_i)` and its gradient are already known.
fn iterate_with_gradient(
    problem: &Problem<'_>,
    v: &BeamformerSet,
    wsr: f64,
    gradient: WirtingerGradient,
    params: &MetaNetParams,
    order: UpdateOrder,
    tape: &mut WindowTape,
) -> Result<BeamformerSet> {
    let all: Vec<usize> = (0..v.len()).collect();
    let mut substeps = Vec::new();
    let next = match order {
        UpdateOrder::Jacobi => {
            let (next, sub) = apply_network(params, v, &gradient, &all, problem.total_power, tape.encoding)?;
            substeps.push(sub);
            next
        }
        UpdateOrder::GaussSeidel => {
            let mut cur = v.clone();
            for k in all {
                let g = if k == 0 {
                    gradient.clone()
                } else {
                    problem.value_and_gradient(&cur)?.1
                };
                let (next, sub) = apply_network(params, &cur, &g, &[k], problem.total_power, tape.encoding)?;
                substeps.push(sub);
                cur = next;
            }
            cur
        }
    };
    tape.records.push(IterationRecord {
        wsr,
        gradient,
        substeps,
    });
    tape.meta_loss += wsr;
    Ok(next)
}

/// One MLGD iteration: `V_{i+1} = Omega(V_i + G_theta(grad F(V_i)))`, recorded on `tape`.
pub fn mlgd_iteration(
    problem: &Problem<'_>,
    v: &BeamformerSet,
    params: &MetaNetParams,
    order: UpdateOrder,
    tape: &mut WindowTape,
) -> Result<BeamformerSet> {
    let (wsr, gradient) = problem.value_and_gradient(v)?;
    iterate_with_gradient(problem, v, wsr, gradient, params, order, tape)
}

/// Real-coordinate adjoint of `v -> c v / ...`: `c (lambda - u (u.lambda)/||u||^2)`.
fn projection_adjoint(sub: &SubStep, lambda: &[ComplexMatrix]) -> Vec<ComplexMatrix> {
    let u = &sub.pre_projection;
    let norm2 = u.power();
    let inner: f64 = u.iter().zip(lambda).map(|(a, b)| a.real_inner(b)).sum();
    u.iter()
        .zip(lambda)
        .map(|(uk, lk)| {
            let mut out = lk.clone();
            out.axpy(-inner / norm2, uk);
            out.scale_mut(sub.scale);
            out
        })
        .collect()
}

/// `(d x / d V)^T u` for `x = flatten(grad F(V))`, by central differences of the
/// analytic gradient along `u`.
fn input_pullback(problem: &Problem<'_>, at: &BeamformerSet, u: &[ComplexMatrix]) -> Result<Vec<ComplexMatrix>> {
    let u_norm = crate::linalg::frob2(u).sqrt();
    if u_norm == 0.0 {
        return Ok(u.to_vec());
    }
    let h = 1e-6 * at.power().sqrt().max(1e-3) / u_norm;
    let shifted = |sign: f64| -> Result<WirtingerGradient> {
        let mut p = at.clone();
        for (pk, uk) in p.iter_mut().zip(u) {
            pk.axpy(sign * h, uk);
        }
        problem.value_and_gradient(&p).map(|(_, g)| g)
    };
    let plus = shifted(1.0)?;
    let minus = shifted(-1.0)?;
    Ok(plus
        .iter()
        .zip(minus.iter())
        .map(|(a, b)| (a - b).scale(0.5 / h))
        .collect())
}

/// Gradient of the window's meta loss with respect to the network parameters.
pub fn meta_backward(
    tape: &WindowTape,
    params: &MetaNetParams,
    problem: &Problem<'_>,
    detach_inputs: bool,
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; params.param_count()];
    let Some(first) = tape.records.first() else {
        return Ok(grad);
    };
    // lambda holds dL/dRe V in the real parts and dL/dIm V in the imaginary parts.
    let mut lambda: Vec<ComplexMatrix> = first
        .gradient
        .iter()
        .map(|m| ComplexMatrix::zeros(m.rows(), m.cols()))
        .collect();
    for (idx, record) in tape.records.iter().enumerate().rev() {
        for sub in record.substeps.iter().rev() {
            if sub.tapes.len() != sub.users.len() {
                return Err(Error::Dimension("tape has mismatched user records".into()));
            }
            let lambda_pre = projection_adjoint(sub, &lambda);
            let mut input_cotangent: Option<Vec<ComplexMatrix>> = None;
            for ((&k, ftape), raw) in sub.users.iter().zip(&sub.tapes).zip(&sub.raw_inputs) {
                let dl_dx = params.backward_into(ftape, &lambda_pre[k].to_real_parts(), &mut grad)?;
                if !detach_inputs {
                    let cot = input_cotangent.get_or_insert_with(|| {
                        lambda_pre
                            .iter()
                            .map(|m| ComplexMatrix::zeros(m.rows(), m.cols()))
                            .collect()
                    });
                    let dl_dg = tape.encoding.pullback(raw, &dl_dx);
                    cot[k] = ComplexMatrix::from_real_parts(cot[k].rows(), cot[k].cols(), &dl_dg)?;
                }
            }
            lambda = lambda_pre;
            if let Some(cot) = input_cotangent {
                for (l, p) in lambda.iter_mut().zip(input_pullback(problem, &sub.start, &cot)?) {
                    *l += &p;
                }
            }
        }
        if idx == 0 {
            break;
        }
        // Own term: grad of F in real coordinates is 2 G.
        for (l, g) in lambda.iter_mut().zip(record.gradient.iter()) {
            l.axpy(2.0, g);
        }
    }
    Ok(grad)
}

/// Outcome of an MLGD run, with the final network for inspection.
#[derive(Clone, Debug)]
pub struct MlgdRun {
    pub trajectory: RunTrajectory,
    pub params: MetaNetParams,
}

/// Algorithm 1 end to end from fresh keyed initial beamformers and network.
pub fn run_mlgd(
    h: &ChannelSet,
    config: &ScenarioConfig,
    realization: u64,
    restart: u64,
    mcfg: &MlgdConfig,
) -> Result<MlgdRun> {
    mcfg.validate()?;
    let clock = std::time::Instant::now();
    let start = counters::snapshot();
    let problem = Problem::new(h, config);
    let v0 = init_beamformers(config, realization, restart);
    let io_dim = 2 * config.n_tx * config.n_streams;
    let mut rng = keyed_rng(config.master_seed, realization, restart, StreamTag::Network);
    let mut params = MetaNetParams::init(io_dim, &mut rng);
    let mut adam = AdamState::new(params.param_count());
    let mut traj = RunTrajectory::new(Algorithm::Mlgd, realization, restart, &v0);
    let mut tape = WindowTape::with_encoding(mcfg.input_encoding);

    let mut v = v0;
    let (mut wsr, mut gradient) = problem.value_and_gradient(&v)?;
    for _ in 0..mcfg.total_iters {
        v = iterate_with_gradient(&problem, &v, wsr, gradient, &params, mcfg.update_order, &mut tape)?;
        (wsr, gradient) = problem.value_and_gradient(&v)?;
        traj.record(wsr, &v);
        if tape.len() == mcfg.window {
            let meta_grad = meta_backward(&tape, &params, &problem, mcfg.detach_inputs)?;
            params.adam_ascent(&meta_grad, &mut adam, mcfg.meta_lr)?;
            traj.meta_updates += 1;
            tape.clear();
        }
    }
    traj.ops = counters::snapshot().since(start);
    traj.wall_ms = clock.elapsed().as_secs_f64() * 1e3;
    Ok(MlgdRun {
        trajectory: traj,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::sample_channels;

    fn setup(k: usize, n_tx: usize, n_rx: usize, d: usize, snr: f64) -> (ScenarioConfig, ChannelSet) {
        let cfg = ScenarioConfig::new(n_tx, n_rx, d, k, snr).with_seed(21);
        let h = sample_channels(&cfg, 0);
        (cfg, h)
    }

    #[test]
    fn fresh_network_is_a_no_op() {
        let (cfg, h) = setup(2, 4, 2, 2, 10.0);
        let problem = Problem::new(&h, &cfg);
        let params = MetaNetParams::init(16, &mut rand::rng());
        let v = init_beamformers(&cfg, 0, 0);
        let mut tape = WindowTape::new();
        for order in [UpdateOrder::Jacobi, UpdateOrder::GaussSeidel] {
            let next = mlgd_iteration(&problem, &v, &params, order, &mut tape).unwrap();
            for (a, b) in next.iter().zip(v.iter()) {
                assert!(a.max_abs_diff(b) < 1e-15);
            }
        }
        assert_eq!(tape.len(), 2);
    }

    #[test]
    fn iterations_stay_on_power_sphere() {
        let (mut cfg, h) = setup(3, 4, 2, 1, 20.0);
        cfg.total_power = 3.0;
        let problem = Problem::new(&h, &cfg);
        let mut rng = rand::rng();
        let mut params = MetaNetParams::init(8, &mut rng);
        for p in params.theta_mut() {
            *p = rand::Rng::random_range(&mut rng, -0.3..0.3);
        }
        let mut v = init_beamformers(&cfg, 0, 0);
        let mut tape = WindowTape::new();
        for i in 0..6 {
            let order = if i % 2 == 0 { UpdateOrder::Jacobi } else { UpdateOrder::GaussSeidel };
            v = mlgd_iteration(&problem, &v, &params, order, &mut tape).unwrap();
            assert!((v.power() - 3.0).abs() <= 1e-9 * 3.0);
            assert_eq!(tape.len(), i + 1);
        }
    }

    #[test]
    fn silent_window_has_zero_meta_gradient() {
        let (cfg, h) = setup(2, 4, 2, 1, 10.0);
        let problem = Problem::new(&h, &cfg);
        let params = MetaNetParams::zeros([8, 50, 50, 8]).unwrap();
        // All-zero beamformer records have zero gradients everywhere.
        let zero = BeamformerSet::zeros(&cfg);
        let mut tape = WindowTape::new();
        for _ in 0..3 {
            tape.records.push(IterationRecord {
                wsr: 0.0,
                gradient: WirtingerGradient(zero.0.clone()),
                substeps: vec![SubStep {
                    users: vec![0, 1],
                    start: zero.clone(),
                    pre_projection: init_beamformers(&cfg, 0, 0),
                    scale: 1.0,
                    raw_inputs: vec![vec![0.0; 8]; 2],
                    tapes: vec![params.forward(&[0.0; 8]).unwrap().1; 2],
                }],
            });
        }
        let g = meta_backward(&tape, &params, &problem, true).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn doubled_objective_doubles_meta_gradient() {
        let (cfg, h) = setup(2, 3, 2, 1, 10.0);
        let problem = Problem::new(&h, &cfg);
        let params = perturbed_net(6, 5, 0.2);
        let mut tape = WindowTape::new();
        let mut v = init_beamformers(&cfg, 0, 0);
        for _ in 0..4 {
            v = mlgd_iteration(&problem, &v, &params, UpdateOrder::Jacobi, &mut tape).unwrap();
        }
        let g1 = meta_backward(&tape, &params, &problem, true).unwrap();
        // Same trajectory, every F term doubled.
        let mut doubled = tape.clone();
        for r in &mut doubled.records {
            r.wsr *= 2.0;
            r.gradient.0.iter_mut().for_each(|m| m.scale_mut(2.0));
        }
        let g2 = meta_backward(&doubled, &params, &problem, true).unwrap();
        assert!(g1.iter().any(|&x| x != 0.0));
        for (a, b) in g1.iter().zip(&g2) {
            assert_eq!(2.0 * a, *b);
        }
    }

    fn perturbed_net(io: usize, seed: u64, scale: f64) -> MetaNetParams {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut net = MetaNetParams::init(io, &mut rng);
        for p in net.theta_mut() {
            *p += rng.random_range(-scale..scale);
        }
        net
    }

    /// Plain forward pass over the documented flat layout: per layer, the
    /// row-major weights followed by the bias.
    fn oracle_net(theta: &[f64], dims: [usize; 4], slope: f64, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let mut off = 0;
        for l in 0..3 {
            let (n_in, n_out) = (dims[l], dims[l + 1]);
            let w = &theta[off..off + n_in * n_out];
            let b = &theta[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let mut z = vec![0.0; n_out];
            for o in 0..n_out {
                z[o] = b[o] + (0..n_in).map(|i| w[o * n_in + i] * a[i]).sum::<f64>();
                if l < 2 && z[o] < 0.0 {
                    z[o] *= slope;
                }
            }
            a = z;
        }
        a
    }

    /// Unrolled window objective. `inputs` fixes the network inputs (detached);
    /// `None` recomputes them from the current iterate.
    fn oracle_window_loss(
        theta: &[f64],
        net: &MetaNetParams,
        h: &ChannelSet,
        cfg: &ScenarioConfig,
        v0: &BeamformerSet,
        steps: usize,
        inputs: Option<&[Vec<Vec<f64>>]>,
        encoding: InputEncoding,
    ) -> f64 {
        let sigma2 = noise_variance(cfg);
        let mut v = v0.clone();
        let mut loss = 0.0;
        for i in 0..steps {
            loss += crate::objective::evaluate_wsr(h, &v, sigma2, &cfg.user_weights).unwrap().wsr;
            let grad = crate::objective::wsr_gradient(h, &v, sigma2, &cfg.user_weights).unwrap();
            let mut next = v.clone();
            for k in 0..v.len() {
                let x = match inputs {
                    Some(xs) => xs[i][k].clone(),
                    None => encoding.encode(&grad[k].to_real_parts()),
                };
                let y = oracle_net(theta, net.dims(), net.leaky_slope(), &x);
                let (r, c) = (v[k].rows(), v[k].cols());
                for a in 0..r {
                    for b in 0..c {
                        next[k][(a, b)].re += y[a * c + b];
                        next[k][(a, b)].im += y[r * c + a * c + b];
                    }
                }
            }
            let scale = (cfg.total_power / next.power()).sqrt();
            next.iter_mut().for_each(|m| m.scale_mut(scale));
            v = next;
        }
        loss
    }

    fn fd_meta_check(detach: bool, users: usize, tol: f64, encoding: InputEncoding) {
        for seed in 0..4u64 {
            let cfg = ScenarioConfig::new(2, 1, 1, users, 10.0).with_seed(seed);
            let h = sample_channels(&cfg, 0);
            let problem = Problem::new(&h, &cfg);
            let params = perturbed_net(4, seed, 0.15);
            let v0 = init_beamformers(&cfg, 0, 0);
            let steps = 2;
            let mut tape = WindowTape::with_encoding(encoding);
            let mut v = v0.clone();
            for _ in 0..steps {
                v = mlgd_iteration(&problem, &v, &params, UpdateOrder::Jacobi, &mut tape).unwrap();
            }
            let analytic = meta_backward(&tape, &params, &problem, detach).unwrap();
            let inputs = tape.inputs();
            let fixed = if detach { Some(inputs.as_slice()) } else { None };
            let eps = 1e-5;
            let mut theta = params.theta().to_vec();
            let mut max_err: f64 = 0.0;
            let mut max_ref: f64 = 0.0;
            for j in 0..theta.len() {
                let orig = theta[j];
                theta[j] = orig + eps;
                let lp = oracle_window_loss(&theta, &params, &h, &cfg, &v0, steps, fixed, encoding);
                theta[j] = orig - eps;
                let lm = oracle_window_loss(&theta, &params, &h, &cfg, &v0, steps, fixed, encoding);
                theta[j] = orig;
                let fd = (lp - lm) / (2.0 * eps);
                max_err = max_err.max((fd - analytic[j]).abs());
                max_ref = max_ref.max(fd.abs());
            }
            assert!(max_ref > 1e-3, "degenerate instance");
            assert!(max_err <= tol * max_ref, "seed {seed}: {max_err:e} vs scale {max_ref:e}");
        }
    }

    #[test]
    fn meta_gradient_matches_unrolled_differences() {
        fd_meta_check(true, 1, 1e-4, InputEncoding::Raw);
    }

    #[test]
    fn meta_gradient_with_attached_inputs_matches_unrolled_differences() {
        fd_meta_check(false, 1, 1e-4, InputEncoding::Raw);
    }

    #[test]
    fn meta_gradient_two_users() {
        fd_meta_check(true, 2, 1e-4, InputEncoding::Raw);
        fd_meta_check(false, 2, 1e-4, InputEncoding::Raw);
    }

    #[test]
    fn meta_gradient_through_input_encodings() {
        for enc in [InputEncoding::Normalized, InputEncoding::LogMagnitude] {
            fd_meta_check(true, 2, 1e-4, enc);
            fd_meta_check(false, 2, 1e-4, enc);
        }
    }

    #[test]
    fn encoding_pullback_matches_differences() {
        let g = [0.3, -1.2, 2.5, 0.0, -0.7];
        let u = [1.0, 0.5, -0.25, 2.0, 0.1];
        for enc in [InputEncoding::Raw, InputEncoding::Normalized, InputEncoding::LogMagnitude] {
            let analytic = enc.pullback(&g, &u);
            for j in 0..g.len() {
                let (mut gp, mut gm) = (g, g);
                gp[j] += 1e-6;
                gm[j] -= 1e-6;
                let dot = |x: Vec<f64>| x.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
                let fd = (dot(enc.encode(&gp)) - dot(enc.encode(&gm))) / 2e-6;
                assert!((fd - analytic[j]).abs() < 1e-5, "{enc:?} {j}");
            }
        }
        let n = InputEncoding::Normalized.encode(&g);
        assert!((n.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(InputEncoding::Normalized.encode(&[0.0; 3]), vec![0.0; 3]);
    }

    #[test]
    fn gauss_seidel_meta_gradient_matches_unrolled_differences() {
        let cfg = ScenarioConfig::new(2, 1, 1, 2, 10.0).with_seed(9);
        let h = sample_channels(&cfg, 0);
        let problem = Problem::new(&h, &cfg);
        let params = perturbed_net(4, 9, 0.15);
        let v0 = init_beamformers(&cfg, 0, 0);
        let mut tape = WindowTape::new();
        let mut v = v0.clone();
        for _ in 0..2 {
            v = mlgd_iteration(&problem, &v, &params, UpdateOrder::GaussSeidel, &mut tape).unwrap();
        }
        let analytic = meta_backward(&tape, &params, &problem, true).unwrap();
        let inputs = tape.inputs();
        let sigma2 = noise_variance(&cfg);
        let loss = |theta: &[f64]| {
            let mut v = v0.clone();
            let mut total = 0.0;
            for xs in &inputs {
                total += crate::objective::evaluate_wsr(&h, &v, sigma2, &cfg.user_weights).unwrap().wsr;
                for (k, x) in xs.iter().enumerate() {
                    let y = oracle_net(theta, params.dims(), params.leaky_slope(), x);
                    v[k] += &ComplexMatrix::from_real_parts(2, 1, &y).unwrap();
                    let c = (cfg.total_power / v.power()).sqrt();
                    v.iter_mut().for_each(|m| m.scale_mut(c));
                }
            }
            total
        };
        let mut theta = params.theta().to_vec();
        let (mut max_err, mut max_ref) = (0.0f64, 0.0f64);
        for j in 0..theta.len() {
            let orig = theta[j];
            theta[j] = orig + 1e-5;
            let lp = loss(&theta);
            theta[j] = orig - 1e-5;
            let lm = loss(&theta);
            theta[j] = orig;
            let fd = (lp - lm) / 2e-5;
            max_err = max_err.max((fd - analytic[j]).abs());
            max_ref = max_ref.max(fd.abs());
        }
        assert!(max_ref > 1e-3);
        assert!(max_err <= 1e-4 * max_ref, "{max_err:e} vs {max_ref:e}");
    }

    #[test]
    fn frozen_until_first_meta_update() {
        let (cfg, h) = setup(3, 4, 2, 1, 20.0);
        let run = run_mlgd(&h, &cfg, 2, 0, &MlgdConfig::default()).unwrap();
        let v0 = init_beamformers(&cfg, 2, 0);
        let sigma2 = noise_variance(&cfg);
        let f0 = crate::objective::evaluate_wsr(&h, &v0, sigma2, &cfg.user_weights).unwrap().wsr;
        for &w in &run.trajectory.wsr[..DEFAULT_WINDOW] {
            assert!((w - f0).abs() <= 1e-12 * f0.abs().max(1.0));
        }
        assert!(run.trajectory.power.iter().all(|p| (p - cfg.total_power).abs() <= 1e-9 * cfg.total_power));
    }

    #[test]
    fn single_user_miso_best_of_restarts_is_optimal() {
        for r in 0..5 {
            let cfg = ScenarioConfig::new(4, 1, 1, 1, 10.0).with_seed(31);
            let h = sample_channels(&cfg, r);
            let opt = (1.0 + cfg.total_power * h[0].norm_sqr() / noise_variance(&cfg)).log2();
            let best = (0..10)
                .map(|restart| run_mlgd(&h, &cfg, r, restart, &MlgdConfig::default()).unwrap())
                .map(|run| run.trajectory.best_wsr())
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(best <= opt + 1e-9);
            assert!(opt - best < 2e-2, "realization {r}: {best} vs {opt}");
        }
    }

    #[test]
    fn schedule_counts_meta_updates() {
        let (cfg, h) = setup(2, 4, 2, 1, 10.0);
        for (iters, window, expected) in [(10, 10, 1), (25, 10, 2), (12, 3, 4), (7, 1, 7)] {
            let m = MlgdConfig {
                total_iters: iters,
                window,
                ..MlgdConfig::default()
            };
            let run = run_mlgd(&h, &cfg, 0, 0, &m).unwrap();
            assert_eq!(run.trajectory.meta_updates, expected);
            assert_eq!(run.trajectory.iterations(), iters);
        }
        let bad = MlgdConfig {
            total_iters: 5,
            window: 10,
            ..MlgdConfig::default()
        };
        assert!(run_mlgd(&h, &cfg, 0, 0, &bad).is_err());
    }

    #[test]
    fn runs_are_keyed() {
        let (cfg, h) = setup(2, 4, 2, 2, 15.0);
        let m = MlgdConfig {
            total_iters: 40,
            ..MlgdConfig::default()
        };
        let a = run_mlgd(&h, &cfg, 3, 1, &m).unwrap();
        let b = run_mlgd(&h, &cfg, 3, 1, &m).unwrap();
        assert_eq!(a.trajectory.wsr, b.trajectory.wsr);
        assert_eq!(a.params, b.params);
        let c = run_mlgd(&h, &cfg, 3, 2, &m).unwrap();
        assert_ne!(a.trajectory.wsr, c.trajectory.wsr);
    }

    #[test]
    fn detaching_inputs_does_not_change_first_window() {
        let (cfg, h) = setup(1, 2, 1, 1, 10.0);
        let base = MlgdConfig {
            total_iters: 10,
            window: 10,
            ..MlgdConfig::default()
        };
        let attached = MlgdConfig {
            detach_inputs: false,
            ..base
        };
        let a = run_mlgd(&h, &cfg, 0, 0, &base).unwrap();
        let b = run_mlgd(&h, &cfg, 0, 0, &attached).unwrap();
        assert_eq!(a.trajectory.wsr, b.trajectory.wsr);
    }
}
