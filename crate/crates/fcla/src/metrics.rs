//! SINRs, achievable rates, the sum-rate objective, and full-solution audits.

use num_complex::Complex64;

use crate::channel::{ChannelSet, CMat, CVec};
use crate::scenario::{FeasibilityReport, Placement, Scenario, ScenarioError};

/// Tolerance absorbing interior-point residuals in PSD audits.
pub const PSD_TOL: f64 = 1e-8;

/// Transmit state: beamforming columns `w_k` and the artificial-noise
/// covariance `R_e`.
#[derive(Clone, Debug)]
pub struct BeamSolution {
    /// `N_t x K`, column k serving user k.
    pub w: CMat,
    /// `N_t x N_t` Hermitian PSD.
    pub r_e: CMat,
}

impl BeamSolution {
    pub fn zeros(n_t: usize, k: usize) -> Self {
        BeamSolution {
            w: CMat::zeros(n_t, k),
            r_e: CMat::zeros(n_t, n_t),
        }
    }

    pub fn n_users(&self) -> usize {
        self.w.ncols()
    }

    pub fn n_antennas(&self) -> usize {
        self.w.nrows()
    }

    /// `tr(W^H W) + tr(R_e)`.
    pub fn power_used(&self) -> f64 {
        let beams: f64 = self.w.iter().map(|v| v.norm_sqr()).sum();
        let an: f64 = (0..self.r_e.nrows()).map(|i| self.r_e[(i, i)].re).sum();
        beams + an
    }

    /// Per-user signal covariance sum plus AN: `sum_k w_k w_k^H + R_e`.
    pub fn total_covariance(&self) -> CMat {
        let mut r = self.r_e.clone();
        for k in 0..self.n_users() {
            let wk = self.w.column(k);
            for i in 0..self.n_antennas() {
                for j in 0..self.n_antennas() {
                    r[(i, j)] += wk[i] * wk[j].conj();
                }
            }
        }
        r
    }
}

pub(crate) fn quad_form(h: &CVec, m: &CMat) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..h.len() {
        for j in 0..h.len() {
            acc += h[i].conj() * m[(i, j)] * h[j];
        }
    }
    acc.re
}

/// Signal power `|h_k^H w_k|^2` and the full received power
/// `sum_k' |h_k^H w_k'|^2 + h_k^H R_e h_k + sigma_k^2` for one user.
#[derive(Clone, Copy, Debug)]
pub struct LinkPower {
    pub signal: f64,
    pub total: f64,
}

pub(crate) fn link_power(h: &CVec, sol: &BeamSolution, sigma2: f64, own: usize) -> LinkPower {
    let mut total = quad_form(h, &sol.r_e) + sigma2;
    let mut signal = 0.0;
    for k in 0..sol.n_users() {
        let hw: Complex64 = h
            .iter()
            .zip(sol.w.column(k).iter())
            .map(|(hi, wi)| hi.conj() * wi)
            .sum();
        let p = hw.norm_sqr();
        total += p;
        if k == own {
            signal = p;
        }
    }
    LinkPower { signal, total }
}

/// Signal power `|h^H w_own|^2` and total received power (all beams, AN,
/// noise) for one receiver; the building blocks of every SINR and FP ratio.
pub fn signal_and_total(h: &CVec, sol: &BeamSolution, sigma2: f64, own: usize) -> (f64, f64) {
    let lp = link_power(h, sol, sigma2, own);
    (lp.signal, lp.total)
}

/// SINR of legitimate user `k`: own beam over interference, AN leakage, and
/// noise.
pub fn sinr_ir(k: usize, channels: &ChannelSet, sol: &BeamSolution, sigma2_ir: &[f64]) -> f64 {
    let lp = link_power(&channels.ir[k], sol, sigma2_ir[k], k);
    lp.signal / (lp.total - lp.signal)
}

/// Eve's SINR on the confidential stream (user 1): beams of the other users
/// act as interference.
pub fn sinr_eve(channels: &ChannelSet, sol: &BeamSolution, sigma2_eve: f64) -> f64 {
    let lp = link_power(&channels.eve, sol, sigma2_eve, 0);
    lp.signal / (lp.total - lp.signal)
}

/// Sum rate in bits over the legitimate users.
pub fn sum_rate(channels: &ChannelSet, sol: &BeamSolution, sigma2_ir: &[f64]) -> f64 {
    (0..channels.n_users())
        .map(|k| (1.0 + sinr_ir(k, channels, sol, sigma2_ir)).log2())
        .sum()
}

/// Full-solution audit: rates and signed residuals of every constraint.
#[derive(Clone, Debug)]
pub struct Audit {
    pub sum_rate_bits: f64,
    pub sinr_ir: Vec<f64>,
    pub sinr_eve: f64,
    pub eve_rate_bits: f64,
    pub power_used: f64,
    /// `gamma_th_e - eve_rate`; nonnegative when the secrecy cap holds.
    pub secrecy_residual: f64,
    /// `P - power_used`.
    pub power_residual: f64,
    /// Smallest eigenvalue of the AN covariance.
    pub re_min_eig: f64,
    pub placement: FeasibilityReport,
}

impl Audit {
    /// Most negative residual across all constraint families.
    pub fn worst_residual(&self) -> f64 {
        self.secrecy_residual
            .min(self.power_residual)
            .min(self.re_min_eig)
            .min(self.placement.worst_slack())
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        self.worst_residual() >= -tol
    }

    pub fn csv_header() -> &'static str {
        "sum_rate_bits,eve_rate_bits,power_used,secrecy_residual,power_residual,re_min_eig,placement_slack"
    }

    pub fn to_csv_row(&self, fmt: impl Fn(f64) -> String) -> String {
        [
            self.sum_rate_bits,
            self.eve_rate_bits,
            self.power_used,
            self.secrecy_residual,
            self.power_residual,
            self.re_min_eig,
            self.placement.worst_slack(),
        ]
        .iter()
        .map(|v| fmt(*v))
        .collect::<Vec<_>>()
        .join(",")
    }
}

/// Recomputes channels from the placement and evaluates rates, power, and
/// every constraint residual.
pub fn audit(
    scenario: &Scenario,
    placement: &Placement,
    sol: &BeamSolution,
) -> Result<Audit, ScenarioError> {
    if sol.n_users() != scenario.n_users() || sol.n_antennas() != scenario.config.n_t() {
        return Err(ScenarioError::Dimension(format!(
            "solution is {}x{}, scenario wants {}x{}",
            sol.n_antennas(),
            sol.n_users(),
            scenario.config.n_t(),
            scenario.n_users()
        )));
    }
    let channels = ChannelSet::synthesize(scenario, placement)?;
    let sinrs: Vec<f64> = (0..scenario.n_users())
        .map(|k| sinr_ir(k, &channels, sol, &scenario.sigma2_ir))
        .collect();
    let sum_rate_bits = sinrs.iter().map(|g| (1.0 + g).log2()).sum();
    let g_e = sinr_eve(&channels, sol, scenario.sigma2_eve);
    let eve_rate_bits = (1.0 + g_e).log2();
    let power_used = sol.power_used();
    let re_min_eig = conic::min_eig(&conic::HermitianMatrix::from_matrix(&sol.r_e));
    Ok(Audit {
        sum_rate_bits,
        sinr_ir: sinrs,
        sinr_eve: g_e,
        eve_rate_bits,
        power_used,
        secrecy_residual: scenario.gamma_th_e - eve_rate_bits,
        power_residual: scenario.power - power_used,
        re_min_eig,
        placement: crate::scenario::validate_placement_tol(&scenario.config, placement, 1e-9)?,
    })
}
