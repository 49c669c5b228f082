//! Weighted sum-rate objective and its Wirtinger gradient.
//!
//! With `A_k = sigma^2 I + sum_r H_k V_r V_r^H H_k^H` and `B_k = A_k - H_k V_k V_k^H H_k^H`
//! the rate of user `k` is `log2 det A_k - log2 det B_k`. The gradient is taken with
//! respect to `conj(V_j)`, so that `dF = 2 Re Tr(G^H dV)` and `G` is the ascent direction:
//!
//! ```text
//! G_j = (1/ln 2) [ sum_k a_k H_k^H A_k^-1 H_k - sum_{k != j} a_k H_k^H B_k^-1 H_k ] V_j
//! ```

use std::f64::consts::LN_2;
use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, HpdFactor};
use crate::scenario::{BeamformerSet, ChannelSet};

/// `dF/dconj(V_k)` for every user, shaped like the beamformers.
#[derive(Clone, Debug, PartialEq)]
pub struct WirtingerGradient(pub Vec<ComplexMatrix>);

impl Deref for WirtingerGradient {
    type Target = [ComplexMatrix];

    fn deref(&self) -> &[ComplexMatrix] {
        &self.0
    }
}

impl DerefMut for WirtingerGradient {
    fn deref_mut(&mut self) -> &mut [ComplexMatrix] {
        &mut self.0
    }
}

impl WirtingerGradient {
    pub fn norm(&self) -> f64 {
        crate::linalg::frob2(&self.0).sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct RateBreakdown {
    /// Per-user rates in bits.
    pub rates: Vec<f64>,
    /// `sum_k a_k R_k` in bits.
    pub wsr: f64,
    /// Full received covariances `A_k`.
    pub full_cov: Vec<ComplexMatrix>,
    /// Interference-plus-noise covariances `B_k`.
    pub interference_cov: Vec<ComplexMatrix>,
}

fn check_shapes(h: &ChannelSet, v: &BeamformerSet, sigma2: f64, weights: &[f64]) -> Result<()> {
    if h.len() != v.len() || weights.len() != v.len() || v.is_empty() {
        return Err(Error::Dimension(format!(
            "{} channels, {} beamformers, {} weights",
            h.len(),
            v.len(),
            weights.len()
        )));
    }
    let n_tx = v[0].rows();
    if let Some((k, _)) = h
        .iter()
        .zip(v.iter())
        .enumerate()
        .find(|(_, (hk, vk))| hk.cols() != n_tx || vk.rows() != n_tx)
    {
        return Err(Error::Dimension(format!("user {k} has inconsistent transmit dimension")));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::Config(format!("noise variance must be positive, got {sigma2}")));
    }
    Ok(())
}

struct Factored {
    breakdown: RateBreakdown,
    full: Vec<HpdFactor>,
    interference: Vec<HpdFactor>,
}

fn factor_rates(h: &ChannelSet, v: &BeamformerSet, sigma2: f64, weights: &[f64]) -> Result<Factored> {
    check_shapes(h, v, sigma2, weights)?;
    let n_tx = v[0].rows();
    let mut tx_cov = ComplexMatrix::zeros(n_tx, n_tx);
    for vr in v.iter() {
        tx_cov += &vr.matmul_adjoint(vr);
    }

    let k_users = v.len();
    let mut rates = Vec::with_capacity(k_users);
    let mut full_cov = Vec::with_capacity(k_users);
    let mut interference_cov = Vec::with_capacity(k_users);
    let mut full = Vec::with_capacity(k_users);
    let mut interference = Vec::with_capacity(k_users);
    for (hk, vk) in h.iter().zip(v.iter()) {
        let mut a = hk.matmul(&tx_cov).matmul_adjoint(hk);
        for i in 0..a.rows() {
            a[(i, i)].re += sigma2;
        }
        a.hermitize();
        let hv = hk.matmul(vk);
        let mut b = &a - &hv.matmul_adjoint(&hv);
        b.hermitize();
        let fa = HpdFactor::new(&a)?;
        let fb = HpdFactor::new(&b)?;
        rates.push(fa.logdet2() - fb.logdet2());
        full_cov.push(a);
        interference_cov.push(b);
        full.push(fa);
        interference.push(fb);
    }
    let wsr = rates.iter().zip(weights).map(|(r, w)| r * w).sum();
    Ok(Factored {
        breakdown: RateBreakdown {
            rates,
            wsr,
            full_cov,
            interference_cov,
        },
        full,
        interference,
    })
}

pub fn evaluate_wsr(
    h: &ChannelSet,
    v: &BeamformerSet,
    sigma2: f64,
    weights: &[f64],
) -> Result<RateBreakdown> {
    Ok(factor_rates(h, v, sigma2, weights)?.breakdown)
}

/// Objective and gradient from one set of factorizations.
pub fn wsr_with_gradient(
    h: &ChannelSet,
    v: &BeamformerSet,
    sigma2: f64,
    weights: &[f64],
) -> Result<(RateBreakdown, WirtingerGradient)> {
    let f = factor_rates(h, v, sigma2, weights)?;
    let n_tx = v[0].rows();
    // sum_k a_k H_k^H (A_k^-1 - B_k^-1) H_k, plus the per-user B terms to add back.
    let mut shared = ComplexMatrix::zeros(n_tx, n_tx);
    let mut own = Vec::with_capacity(v.len());
    for (((hk, fa), fb), &w) in h.iter().zip(&f.full).zip(&f.interference).zip(weights) {
        let qa = hk.adjoint_matmul(&fa.solve(hk)?);
        let qb = hk.adjoint_matmul(&fb.solve(hk)?);
        shared.axpy(w, &qa);
        shared.axpy(-w, &qb);
        own.push(qb.scale(w));
    }
    let grads = v
        .iter()
        .zip(own)
        .map(|(vj, mut m)| {
            m += &shared;
            m.matmul(vj).scale(1.0 / LN_2)
        })
        .collect();
    Ok((f.breakdown, WirtingerGradient(grads)))
}

pub fn wsr_gradient(
    h: &ChannelSet,
    v: &BeamformerSet,
    sigma2: f64,
    weights: &[f64],
) -> Result<WirtingerGradient> {
    Ok(wsr_with_gradient(h, v, sigma2, weights)?.1)
}

/// Central finite differences over every real and imaginary coordinate,
/// mapped onto the conjugate-gradient convention.
pub fn wsr_gradient_fd(
    h: &ChannelSet,
    v: &BeamformerSet,
    sigma2: f64,
    weights: &[f64],
    step: f64,
) -> Result<WirtingerGradient> {
    if !(1e-7..=1e-4).contains(&step) {
        return Err(Error::Config(format!("finite-difference step {step} outside [1e-7, 1e-4]")));
    }
    let eval = |vv: &BeamformerSet| evaluate_wsr(h, vv, sigma2, weights).map(|r| r.wsr);
    let mut grads = Vec::with_capacity(v.len());
    let mut work = v.clone();
    for k in 0..v.len() {
        let mut g = ComplexMatrix::zeros(v[k].rows(), v[k].cols());
        for idx in 0..v[k].as_slice().len() {
            let orig = v[k].as_slice()[idx];
            let mut partial = [0.0; 2];
            for (part, out) in partial.iter_mut().enumerate() {
                let delta = if part == 0 {
                    crate::linalg::C64::new(step, 0.0)
                } else {
                    crate::linalg::C64::new(0.0, step)
                };
                work[k].as_mut_slice()[idx] = orig + delta;
                let plus = eval(&work)?;
                work[k].as_mut_slice()[idx] = orig - delta;
                let minus = eval(&work)?;
                work[k].as_mut_slice()[idx] = orig;
                *out = (plus - minus) / (4.0 * step);
            }
            g.as_mut_slice()[idx] = crate::linalg::C64::new(partial[0], partial[1]);
        }
        grads.push(g);
    }
    Ok(WirtingerGradient(grads))
}
