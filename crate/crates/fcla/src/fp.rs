//! Fractional-programming layer: the Lagrangian-dual-transform objective,
//! the quadratic-transform objective, and the closed-form auxiliary updates.
//!
//! Values are reported in bits: the natural-log forms are scaled by 1/ln 2
//! uniformly, which preserves every maximizer and makes the tight value of
//! the transformed objectives equal the sum rate in bits.

use crate::channel::ChannelSet;
use crate::metrics::{link_power, BeamSolution};

pub const LN2: f64 = std::f64::consts::LN_2;

/// Auxiliary state of the two fractional-programming transforms.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FpState {
    /// Slack of the Lagrangian dual transform, one per user.
    pub eta: Vec<f64>,
    /// Quadratic-transform auxiliary, one per user.
    pub varpi: Vec<f64>,
}

/// Closed-form slack update: `eta_k = gamma_k` (the user SINR).
pub fn update_eta(channels: &ChannelSet, sol: &BeamSolution, sigma2_ir: &[f64]) -> Vec<f64> {
    (0..channels.n_users())
        .map(|k| {
            let lp = link_power(&channels.ir[k], sol, sigma2_ir[k], k);
            lp.signal / (lp.total - lp.signal)
        })
        .collect()
}

/// Closed-form quadratic-transform update:
/// `varpi_k = sqrt(signal_k) / total_k`, where the denominator keeps the
/// own-beam term (unlike the SINR denominator).
pub fn update_varpi(channels: &ChannelSet, sol: &BeamSolution, sigma2_ir: &[f64]) -> Vec<f64> {
    (0..channels.n_users())
        .map(|k| {
            let lp = link_power(&channels.ir[k], sol, sigma2_ir[k], k);
            lp.signal.sqrt() / lp.total
        })
        .collect()
}

/// Lagrangian-dual-transform objective in bits:
/// `sum_k [ log(1+eta_k) - eta_k + (1+eta_k) signal_k / total_k ] / ln 2`.
pub fn eval_ia(
    channels: &ChannelSet,
    sol: &BeamSolution,
    sigma2_ir: &[f64],
    eta: &[f64],
) -> f64 {
    let mut acc = 0.0;
    for k in 0..channels.n_users() {
        let lp = link_power(&channels.ir[k], sol, sigma2_ir[k], k);
        acc += (1.0 + eta[k]).ln() - eta[k] + (1.0 + eta[k]) * lp.signal / lp.total;
    }
    acc / LN2
}

/// Quadratic-transform objective in bits:
/// `sum_k [ 2(1+eta_k) varpi_k sqrt(signal_k)
///          - (1+eta_k) varpi_k^2 total_k ] / ln 2`,
/// with `total_k` including the noise term.
pub fn eval_ib(
    channels: &ChannelSet,
    sol: &BeamSolution,
    sigma2_ir: &[f64],
    eta: &[f64],
    varpi: &[f64],
) -> f64 {
    let mut acc = 0.0;
    for k in 0..channels.n_users() {
        let lp = link_power(&channels.ir[k], sol, sigma2_ir[k], k);
        acc += (1.0 + eta[k]) * varpi[k] * (2.0 * lp.signal.sqrt() - varpi[k] * lp.total);
    }
    acc / LN2
}
