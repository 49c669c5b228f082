//! The update-rule network: a fully connected `n -> 50 -> 50 -> n` map with
//! leaky-rectifier hidden units and a linear output layer.
//!
//! Parameters live in one flat vector, layer by layer, each layer as its
//! row-major `out x in` weight matrix followed by its bias. Gradients use the
//! same layout so they can be fed straight into [`AdamState`].

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::optim::AdamState;

pub const HIDDEN_WIDTH: usize = 50;
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;
/// Meta learning rate for the network's Adam updates.
pub const DEFAULT_META_LR: f64 = 5e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct MetaNetParams {
    dims: [usize; 4],
    leaky_slope: f64,
    theta: Vec<f64>,
}

/// Intermediates of one forward call.
#[derive(Clone, Debug)]
pub struct ForwardTape {
    input: Vec<f64>,
    /// Pre-activations of the two hidden layers.
    pre: [Vec<f64>; 2],
    /// Activations of the two hidden layers.
    post: [Vec<f64>; 2],
}

impl ForwardTape {
    pub fn input(&self) -> &[f64] {
        &self.input
    }
}

fn param_count(dims: &[usize; 4]) -> usize {
    (0..3).map(|l| dims[l + 1] * dims[l] + dims[l + 1]).sum()
}

impl MetaNetParams {
    /// Fan-in uniform hidden weights, zero biases, and an all-zero output layer,
    /// so the untrained network maps every input to zero.
    pub fn init<R: Rng + ?Sized>(io_dim: usize, rng: &mut R) -> Self {
        let dims = [io_dim, HIDDEN_WIDTH, HIDDEN_WIDTH, io_dim];
        let mut net = Self::zeros(dims).expect("valid dims");
        for layer in 0..2 {
            let bound = (6.0 / dims[layer] as f64).sqrt();
            let (w, _) = net.layer_range(layer);
            for p in &mut net.theta[w] {
                *p = rng.random_range(-bound..=bound);
            }
        }
        net
    }

    pub fn zeros(dims: [usize; 4]) -> Result<Self> {
        if dims[1] != HIDDEN_WIDTH || dims[2] != HIDDEN_WIDTH {
            return Err(Error::Config(format!(
                "hidden layers must have {HIDDEN_WIDTH} units, got {dims:?}"
            )));
        }
        if dims[0] == 0 || dims[3] == 0 {
            return Err(Error::Config("input and output widths must be positive".into()));
        }
        Ok(Self {
            dims,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            theta: vec![0.0; param_count(&dims)],
        })
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn leaky_slope(&self) -> f64 {
        self.leaky_slope
    }

    pub fn param_count(&self) -> usize {
        self.theta.len()
    }

    /// Neuron count over all layers, input included.
    pub fn node_count(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    /// Weight and bias index ranges of a layer in the flat vector.
    pub fn layer_range(&self, layer: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let mut off = 0;
        for l in 0..layer {
            off += self.dims[l + 1] * self.dims[l] + self.dims[l + 1];
        }
        let nw = self.dims[layer + 1] * self.dims[layer];
        (off..off + nw, off + nw..off + nw + self.dims[layer + 1])
    }

    fn affine(&self, layer: usize, x: &[f64]) -> Vec<f64> {
        let (w, b) = self.layer_range(layer);
        let w = &self.theta[w];
        let n_in = self.dims[layer];
        self.theta[b]
            .iter()
            .enumerate()
            .map(|(o, bias)| {
                bias + w[o * n_in..(o + 1) * n_in]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .collect()
    }

    fn activate(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .map(|&v| if v > 0.0 { v } else { self.leaky_slope * v })
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardTape)> {
        if x.len() != self.dims[0] {
            return Err(Error::Dimension(format!(
                "network expects {} inputs, got {}",
                self.dims[0],
                x.len()
            )));
        }
        let z1 = self.affine(0, x);
        let a1 = self.activate(&z1);
        let z2 = self.affine(1, &a1);
        let a2 = self.activate(&z2);
        let y = self.affine(2, &a2);
        Ok((
            y,
            ForwardTape {
                input: x.to_vec(),
                pre: [z1, z2],
                post: [a1, a2],
            },
        ))
    }

    /// Reverse pass for the scalar `dl_dy . y`. Returns the parameter gradient
    /// (flat layout) and the input gradient.
    pub fn backward(&self, tape: &ForwardTape, dl_dy: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut grad = vec![0.0; self.theta.len()];
        let dl_dx = self.backward_into(tape, dl_dy, &mut grad)?;
        Ok((grad, dl_dx))
    }

    /// Like [`MetaNetParams::backward`] but accumulates into `grad`.
    pub fn backward_into(&self, tape: &ForwardTape, dl_dy: &[f64], grad: &mut [f64]) -> Result<Vec<f64>> {
        if dl_dy.len() != self.dims[3]
            || tape.input.len() != self.dims[0]
            || tape.pre[0].len() != self.dims[1]
            || tape.pre[1].len() != self.dims[2]
            || grad.len() != self.theta.len()
        {
            return Err(Error::Dimension("tape, gradient and network shapes disagree".into()));
        }
        let inputs: [&[f64]; 3] = [&tape.input, &tape.post[0], &tape.post[1]];
        let mut delta = dl_dy.to_vec();
        for layer in (0..3).rev() {
            let (w_range, b_range) = self.layer_range(layer);
            let n_in = self.dims[layer];
            let x = inputs[layer];
            {
                let (gw, gb) = grad.split_at_mut(b_range.start);
                let gw = &mut gw[w_range.clone()];
                for (o, &d) in delta.iter().enumerate() {
                    gb[o] += d;
                    if d != 0.0 {
                        for (g, xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                            *g += d * xi;
                        }
                    }
                }
            }
            let w = &self.theta[w_range];
            let mut upstream = vec![0.0; n_in];
            for (o, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    for (u, wi) in upstream.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *u += d * wi;
                    }
                }
            }
            if layer > 0 {
                for (u, &z) in upstream.iter_mut().zip(&tape.pre[layer - 1]) {
                    if z <= 0.0 {
                        *u *= self.leaky_slope;
                    }
                }
            }
            delta = upstream;
        }
        Ok(delta)
    }

    /// Ascent step `theta <- theta + lr * Adam(grad)`.
    pub fn adam_ascent(&mut self, grad: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
        if grad.len() != self.theta.len() || state.first_moment.len() != self.theta.len() {
            return Err(Error::Dimension("gradient or Adam state does not match parameters".into()));
        }
        let dir = state.direction(grad);
        for (p, d) in self.theta.iter_mut().zip(dir) {
            *p += lr * d;
        }
        if self.theta.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numerical("network parameters became non-finite".into()));
        }
        Ok(())
    }

    /// Text dump: a header line, the four layer widths, the leaky slope, then every
    /// parameter in flat layout, one per line.
    pub fn to_text(&self) -> String {
        let mut out = String::from("mlgd-metanet v1\n");
        let d = self.dims;
        let _ = writeln!(out, "{} {} {} {}", d[0], d[1], d[2], d[3]);
        let _ = writeln!(out, "{:e}", self.leaky_slope);
        for p in &self.theta {
            let _ = writeln!(out, "{p:e}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |what: &str| Error::Config(format!("malformed network dump: {what}"));
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        if lines.next() != Some("mlgd-metanet v1") {
            return Err(bad("missing header"));
        }
        let dims: Vec<usize> = lines
            .next()
            .ok_or_else(|| bad("missing dimensions"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad("dimension is not an integer")))
            .collect::<Result<_>>()?;
        let dims: [usize; 4] = dims.try_into().map_err(|_| bad("expected four dimensions"))?;
        let mut net = Self::zeros(dims)?;
        net.leaky_slope = lines
            .next()
            .ok_or_else(|| bad("missing slope"))?
            .parse()
            .map_err(|_| bad("slope is not a number"))?;
        let values: Vec<f64> = lines
            .map(|l| l.parse().map_err(|_| bad("parameter is not a number")))
            .collect::<Result<_>>()?;
        if values.len() != net.theta.len() {
            return Err(bad(&format!(
                "expected {} parameters, found {}",
                net.theta.len(),
                values.len()
            )));
        }
        net.theta = values;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_text())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Network with every parameter random, output layer included.
    fn random_net(seed: u64, io: usize) -> MetaNetParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = MetaNetParams::init(io, &mut rng);
        for p in net.theta_mut() {
            *p = rng.random_range(-0.5..0.5);
        }
        net
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Independent straight-line evaluation with explicit nested loops.
    fn reference_forward(net: &MetaNetParams, x: &[f64]) -> Vec<f64> {
        let d = net.dims();
        let th = net.theta();
        let mut off = 0;
        let mut h = x.to_vec();
        for layer in 0..3 {
            let (n_in, n_out) = (d[layer], d[layer + 1]);
            let mut next = vec![0.0; n_out];
            for o in 0..n_out {
                let mut s = th[off + n_out * n_in + o];
                for i in 0..n_in {
                    s += th[off + o * n_in + i] * h[i];
                }
                next[o] = if layer < 2 && s <= 0.0 { 0.01 * s } else { s };
            }
            off += n_out * n_in + n_out;
            h = next;
        }
        h
    }

    fn scalar_loss(net: &MetaNetParams, x: &[f64], dl_dy: &[f64]) -> f64 {
        let (y, _) = net.forward(x).unwrap();
        y.iter().zip(dl_dy).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn fresh_network_outputs_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = MetaNetParams::init(32, &mut rng);
        assert_eq!(net.param_count(), 32 * 50 + 50 + 50 * 50 + 50 + 50 * 32 + 32);
        assert_eq!(net.param_count(), 5832);
        for _ in 0..5 {
            let x = random_vec(&mut rng, 32);
            assert!(net.forward(&x).unwrap().0.iter().all(|&y| y == 0.0));
        }
        let zero = MetaNetParams::zeros([32, 50, 50, 32]).unwrap();
        assert!(zero.forward(&[1.0; 32]).unwrap().0.iter().all(|&y| y == 0.0));
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = MetaNetParams::init(8, &mut ChaCha8Rng::seed_from_u64(3));
        let b = MetaNetParams::init(8, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        for layer in 0..2 {
            let (w, bias) = a.layer_range(layer);
            let bound = (6.0 / a.dims()[layer] as f64).sqrt();
            assert!(a.theta()[w].iter().all(|p| p.abs() <= bound));
            assert!(a.theta()[bias].iter().all(|&p| p == 0.0));
        }
        let (w, b) = a.layer_range(2);
        assert!(a.theta()[w.start..b.end].iter().all(|&p| p == 0.0));
    }

    #[test]
    fn rejects_wrong_hidden_width_and_input() {
        assert!(MetaNetParams::zeros([4, 40, 50, 4]).is_err());
        let net = random_net(0, 4);
        assert!(net.forward(&[1.0; 3]).is_err());
        let (_, tape) = net.forward(&[1.0; 4]).unwrap();
        assert!(net.backward(&tape, &[1.0; 3]).is_err());
    }

    #[test]
    fn forward_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for seed in 0..5 {
            let net = random_net(seed, 12);
            let x = random_vec(&mut rng, 12);
            let (y, _) = net.forward(&x).unwrap();
            for (a, b) in y.iter().zip(reference_forward(&net, &x)) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let eps = 1e-6;
        for seed in 0..20 {
            let mut net = random_net(100 + seed, 6);
            let x = random_vec(&mut rng, 6);
            let dl_dy = random_vec(&mut rng, 6);
            let (_, tape) = net.forward(&x).unwrap();
            let (g_theta, g_x) = net.backward(&tape, &dl_dy).unwrap();
            for i in 0..net.param_count() {
                let orig = net.theta()[i];
                net.theta_mut()[i] = orig + eps;
                let plus = scalar_loss(&net, &x, &dl_dy);
                net.theta_mut()[i] = orig - eps;
                let minus = scalar_loss(&net, &x, &dl_dy);
                net.theta_mut()[i] = orig;
                let fd = (plus - minus) / (2.0 * eps);
                let scale = fd.abs().max(g_theta[i].abs());
                assert!(
                    scale < 1e-8 || (fd - g_theta[i]).abs() <= 1e-6 * scale.max(1e-2),
                    "param {i}: {fd} vs {}",
                    g_theta[i]
                );
            }
            for i in 0..6 {
                let mut xp = x.clone();
                xp[i] += eps;
                let mut xm = x.clone();
                xm[i] -= eps;
                let fd = (scalar_loss(&net, &xp, &dl_dy) - scalar_loss(&net, &xm, &dl_dy)) / (2.0 * eps);
                assert!((fd - g_x[i]).abs() <= 1e-6 * fd.abs().max(1e-2));
            }
        }
    }

    #[test]
    fn backward_of_zero_cotangent_is_zero() {
        let net = random_net(4, 5);
        let (_, tape) = net.forward(&[0.3; 5]).unwrap();
        let (g, gx) = net.backward(&tape, &[0.0; 5]).unwrap();
        assert!(g.iter().chain(&gx).all(|&v| v == 0.0));
    }

    #[test]
    fn adam_ascent_examples() {
        let mut net = random_net(5, 4);
        let before = net.clone();
        let mut state = AdamState::new(net.param_count());
        net.adam_ascent(&vec![0.0; net.param_count()], &mut state, 5e-4).unwrap();
        assert_eq!(net, before);

        let mut state = AdamState::new(net.param_count());
        net.adam_ascent(&vec![2.5; net.param_count()], &mut state, 5e-4).unwrap();
        for (a, b) in net.theta().iter().zip(before.theta()) {
            let step = a - b;
            assert!(step <= 5e-4 * (1.0 + 1e-12) && step >= 5e-4 * (1.0 - 1e-7));
        }
    }

    #[test]
    fn text_dump_round_trips() {
        let net = random_net(6, 8);
        assert_eq!(MetaNetParams::from_text(&net.to_text()).unwrap(), net);
        assert!(MetaNetParams::from_text("nonsense").is_err());
        let truncated: String = net.to_text().lines().take(20).collect::<Vec<_>>().join("\n");
        assert!(MetaNetParams::from_text(&truncated).is_err());
    }

    proptest! {
        #[test]
        fn backward_is_linear_in_cotangent(seed in 0u64..1000, scale in -4.0f64..4.0) {
            let net = random_net(seed, 4);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_vec(&mut rng, 4);
            let c = random_vec(&mut rng, 4);
            let (_, tape) = net.forward(&x).unwrap();
            let (g1, x1) = net.backward(&tape, &c).unwrap();
            let scaled: Vec<f64> = c.iter().map(|v| v * scale).collect();
            let (g2, x2) = net.backward(&tape, &scaled).unwrap();
            for (a, b) in g1.iter().chain(&x1).zip(g2.iter().chain(&x2)) {
                prop_assert!((a * scale - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }
}
