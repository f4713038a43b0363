//! Beamforming/AN subproblem: semidefinite relaxation with fixed placement
//! and FP variables, plus constructive rank-one recovery with certificate
//! checks.
//!
//! Decision vector layout (complex side `n_t`, `K` users, svec length
//! `L = svec_len(2 n_t)` per PSD block):
//!
//! ```text
//! [ Y_1 .. Y_K | Y_e | (u0,u1,u2)_1 .. (u0,u1,u2)_K | power slack, secrecy slack? ]
//! ```
//!
//! `Y_k` embeds the lifted beam covariance `R_k`, `Y_e` the AN covariance;
//! the total covariance is the affine sum `R = sum R_k + R_e`, which bakes
//! both `R - R_1 >= 0` and `R - sum R_k >= 0` into the geometry. Each SOC
//! triple encodes the rotated cone `s_k^2 <= h_k^H R_k h_k` through
//! `u0 - u1 = 1`, `u0 + u1 = 2 h_k^H R_k h_k`, `s_k = u2 / sqrt(2)`.

use num_complex::Complex64;
use thiserror::Error;

use conic::{Cone, ConicProblem, ConicSolution, HermitianMatrix, RMat, RVec, SolveStatus};

use crate::channel::{ChannelSet, CMat, CVec};
use crate::fp::LN2;
use crate::metrics::BeamSolution;

/// Secrecy caps at or above this linear SINR never bind; the constraint is
/// omitted from the program (and is vacuous in the placement step).
pub const GAMMA_INACTIVE: f64 = 1e12;

#[derive(Debug, Error)]
pub enum BeamformError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("conic: {0}")]
    Conic(#[from] conic::ConicError),
}

/// Fixed-placement inputs of the beamforming subproblem.
#[derive(Clone, Debug)]
pub struct SdrInputs<'a> {
    pub channels: &'a ChannelSet,
    pub eta: &'a [f64],
    pub varpi: &'a [f64],
    pub sigma2_ir: &'a [f64],
    pub sigma2_eve: f64,
    /// Linear SINR cap for Eve.
    pub gamma_lin: f64,
    pub power: f64,
}

impl<'a> SdrInputs<'a> {
    fn check(&self) -> Result<(usize, usize), BeamformError> {
        let k = self.channels.n_users();
        let nt = self.channels.n_antennas();
        if self.eta.len() != k || self.varpi.len() != k || self.sigma2_ir.len() != k {
            return Err(BeamformError::Dimension(format!(
                "FP state must have one entry per user ({k})"
            )));
        }
        if self.channels.ir.iter().any(|h| h.len() != nt) {
            return Err(BeamformError::Dimension(
                "channel vectors disagree on antenna count".into(),
            ));
        }
        Ok((nt, k))
    }

    fn secrecy_active(&self) -> bool {
        self.gamma_lin < GAMMA_INACTIVE
    }
}

/// Block offsets in the decision vector; a pure function of the dimensions.
///
/// The AN covariance block exists only while the secrecy constraint is
/// active: an inactive cap makes `R_e = 0` optimal (it consumes power and
/// penalizes every user without relaxing anything), and carrying the block
/// would leave a flat direction that pollutes low-noise denominators with
/// analytic-center mass.
#[derive(Clone, Copy, Debug)]
pub struct SdrLayout {
    pub n_t: usize,
    pub k: usize,
    pub psd_len: usize,
    pub secrecy_active: bool,
}

impl SdrLayout {
    pub fn new(n_t: usize, k: usize, secrecy_active: bool) -> Self {
        SdrLayout {
            n_t,
            k,
            psd_len: conic::svec_len(2 * n_t),
            secrecy_active,
        }
    }

    /// Number of PSD blocks: one per user plus the AN block when present.
    pub fn n_psd(&self) -> usize {
        self.k + usize::from(self.secrecy_active)
    }

    pub fn psd_offset(&self, block: usize) -> usize {
        block * self.psd_len
    }

    /// Block index of the AN covariance (only when the secrecy constraint
    /// is active).
    pub fn an_block(&self) -> Option<usize> {
        self.secrecy_active.then_some(self.k)
    }

    pub fn soc_offset(&self, user: usize) -> usize {
        self.n_psd() * self.psd_len + 3 * user
    }

    pub fn slack_offset(&self) -> usize {
        self.n_psd() * self.psd_len + 3 * self.k
    }

    pub fn dim(&self) -> usize {
        self.slack_offset() + 1 + usize::from(self.secrecy_active)
    }

    pub fn n_eq(&self) -> usize {
        2 * self.k + 1 + usize::from(self.secrecy_active)
    }

    pub fn cones(&self) -> Vec<Cone> {
        let mut cones = Vec::with_capacity(2 * self.k + 2);
        for _ in 0..self.n_psd() {
            cones.push(Cone::PsdHermitian { side: self.n_t });
        }
        for _ in 0..self.k {
            cones.push(Cone::Soc { dim: 3 });
        }
        cones.push(Cone::NonNeg {
            dim: 1 + usize::from(self.secrecy_active),
        });
        cones
    }
}

fn outer(h: &CVec) -> CMat {
    CMat::from_fn(h.len(), h.len(), |i, j| h[i] * h[j].conj())
}

/// svec coefficients of the Hermitian form `h^H X h` against an embedded
/// PSD block: `svec(embed(h h^H)) / 2`.
fn quad_coeffs(h: &CVec) -> Vec<f64> {
    conic::svec(&HermitianMatrix::from_matrix(&outer(h)).embed())
        .iter()
        .map(|v| 0.5 * v)
        .collect()
}

/// Assembles the relaxed beamforming program as a standard-form conic
/// problem (rank constraints dropped). Channels and the quadratic-transform
/// auxiliaries are jointly rescaled internally, which leaves the optimizer
/// and the objective value invariant while conditioning the data.
pub fn build_sdr(inputs: &SdrInputs) -> Result<ConicProblem, BeamformError> {
    let (nt, k) = inputs.check()?;
    let layout = SdrLayout::new(nt, k, inputs.secrecy_active());

    // joint channel/auxiliary rescaling: h -> h/g, varpi -> varpi*g,
    // sigma2 -> sigma2/g^2 keeps the problem identical
    let g = inputs
        .channels
        .ir
        .iter()
        .chain(std::iter::once(&inputs.channels.eve))
        .map(|h| h.norm())
        .fold(0.0f64, f64::max);
    let g = if g > 1e-300 { g } else { 1.0 };
    let h_ir: Vec<CVec> = inputs.channels.ir.iter().map(|h| h / Complex64::from(g)).collect();
    let h_eve = &inputs.channels.eve / Complex64::from(g);
    let varpi: Vec<f64> = inputs.varpi.iter().map(|v| v * g).collect();
    let sigma2_eve = inputs.sigma2_eve / (g * g);

    let d = layout.dim();
    let m = layout.n_eq();
    let mut c = RVec::zeros(d);
    let mut a = RMat::zeros(m, d);
    let mut b = RVec::zeros(m);

    // objective: minimize -(sum_k 2 W_k s_k - V_k h_k^H R h_k) / ln2
    // (the -V_k sigma_k^2 constant stays out of the program)
    let mut penalty = vec![0.0; layout.psd_len];
    for (uk, h) in h_ir.iter().enumerate() {
        let w_lin = (1.0 + inputs.eta[uk]) * varpi[uk] / LN2;
        let v_quad = (1.0 + inputs.eta[uk]) * varpi[uk] * varpi[uk] / LN2;
        c[layout.soc_offset(uk) + 2] = -std::f64::consts::SQRT_2 * w_lin;
        let coeffs = quad_coeffs(h);
        for (i, v) in coeffs.iter().enumerate() {
            penalty[i] += v_quad * v;
        }
    }
    for block in 0..layout.n_psd() {
        let off = layout.psd_offset(block);
        for (i, v) in penalty.iter().enumerate() {
            c[off + i] += v;
        }
    }

    // SOC linking rows per user
    for (uk, h) in h_ir.iter().enumerate() {
        let diff_row = 2 * uk;
        let link_row = 2 * uk + 1;
        let soc = layout.soc_offset(uk);
        a[(diff_row, soc)] = 1.0;
        a[(diff_row, soc + 1)] = -1.0;
        b[diff_row] = 1.0;
        a[(link_row, soc)] = 1.0;
        a[(link_row, soc + 1)] = 1.0;
        let coeffs = quad_coeffs(h);
        let off = layout.psd_offset(uk);
        for (i, v) in coeffs.iter().enumerate() {
            // u0 + u1 - 2 q_k = 0 and 2 q_k = svec(E_k) . Y_k
            a[(link_row, off + i)] = -2.0 * v;
        }
        b[link_row] = 0.0;
    }

    // power: sum of Hermitian traces + slack = P; embedded trace doubles
    let power_row = 2 * k;
    for block in 0..layout.n_psd() {
        let off = layout.psd_offset(block);
        let mut idx = 0;
        for col in 0..2 * nt {
            for row in 0..=col {
                if row == col {
                    a[(power_row, off + idx)] = 0.5;
                }
                idx += 1;
            }
        }
    }
    a[(power_row, layout.slack_offset())] = 1.0;
    b[power_row] = inputs.power;

    // secrecy: h_e^H R_1 h_e - Gamma h_e^H (R - R_1) h_e + slack = Gamma sigma_e^2
    if layout.secrecy_active {
        let row = 2 * k + 1;
        let coeffs = quad_coeffs(&h_eve);
        for block in 0..layout.n_psd() {
            let off = layout.psd_offset(block);
            let sign = if block == 0 { 1.0 } else { -inputs.gamma_lin };
            for (i, v) in coeffs.iter().enumerate() {
                a[(row, off + i)] = sign * v;
            }
        }
        a[(row, layout.slack_offset() + 1)] = 1.0;
        b[row] = inputs.gamma_lin * sigma2_eve;
    }

    Ok(ConicProblem::new(c, a, b, layout.cones())?)
}

/// Relaxed solution: lifted per-user covariances and the total covariance.
#[derive(Clone, Debug)]
pub struct SdrSolution {
    pub r_k: Vec<CMat>,
    /// Total covariance `R = sum R_k + R_e`.
    pub r_total: CMat,
    /// AN covariance of the relaxed solution, `R - sum R_k`.
    pub r_e: CMat,
    /// Objective value in bits (same convention as `fp::eval_ib`).
    pub objective: f64,
    pub status: SolveStatus,
    /// Worst of the solver's primal/dual residuals and relative gap at the
    /// returned iterate; meaningful even under `MaxIterations`.
    pub conic_score: f64,
}

/// Objective of the relaxed program at explicit matrices, in bits,
/// including the noise constant.
fn sdr_objective(inputs: &SdrInputs, r_k: &[CMat], r_total: &CMat) -> f64 {
    let mut acc = 0.0;
    for (uk, h) in inputs.channels.ir.iter().enumerate() {
        let q_own = crate::metrics::quad_form(h, &r_k[uk]).max(0.0);
        let q_tot = crate::metrics::quad_form(h, r_total);
        acc += (1.0 + inputs.eta[uk])
            * inputs.varpi[uk]
            * (2.0 * q_own.sqrt() - inputs.varpi[uk] * (q_tot + inputs.sigma2_ir[uk]));
    }
    acc / LN2
}

fn extract_block(sol: &ConicSolution, layout: &SdrLayout, block: usize) -> CMat {
    let off = layout.psd_offset(block);
    let xs: Vec<f64> = (0..layout.psd_len).map(|i| sol.x[off + i]).collect();
    HermitianMatrix::from_embedding(&conic::unsvec(&xs, 2 * layout.n_t)).to_matrix()
}

/// Builds, solves, and extracts the relaxed beamforming subproblem.
pub fn solve_sdr(inputs: &SdrInputs, tol: f64) -> Result<SdrSolution, BeamformError> {
    let (nt, k) = inputs.check()?;
    let degenerate = inputs.power <= 1e-300
        || inputs
            .channels
            .ir
            .iter()
            .all(|h| h.norm() <= 1e-300);
    if degenerate {
        let r_k = vec![CMat::zeros(nt, nt); k];
        let r_total = CMat::zeros(nt, nt);
        let objective = sdr_objective(inputs, &r_k, &r_total);
        return Ok(SdrSolution {
            r_k,
            r_e: CMat::zeros(nt, nt),
            r_total,
            objective,
            status: SolveStatus::Optimal,
            conic_score: 0.0,
        });
    }
    let problem = build_sdr(inputs)?;
    let sol = conic::solve(&problem, tol)?;
    let layout = SdrLayout::new(nt, k, inputs.secrecy_active());
    let r_k: Vec<CMat> = (0..k).map(|b| extract_block(&sol, &layout, b)).collect();
    let r_e = match layout.an_block() {
        Some(b) => extract_block(&sol, &layout, b),
        None => CMat::zeros(nt, nt),
    };
    let mut r_total = r_e.clone();
    for rk in &r_k {
        r_total += rk;
    }
    let objective = sdr_objective(inputs, &r_k, &r_total);
    let conic_score = sol
        .residual_primal
        .max(sol.residual_dual)
        .max(sol.duality_gap.abs() / (1.0 + sol.objective.abs()));
    Ok(SdrSolution {
        r_k,
        r_e,
        r_total,
        objective,
        status: sol.status,
        conic_score,
    })
}

/// Rank-one recovery `w_k = (h_k^H R_k h_k)^{-1/2} R_k h_k` with its
/// optimality certificate.
#[derive(Clone, Debug)]
pub struct RecoveredSolution {
    pub beams: BeamSolution,
    pub r_k_star: Vec<CMat>,
    /// Users whose lifted covariance carried no usable signal power; their
    /// beams are zero.
    pub unserved: Vec<usize>,
    pub certificate: Certificate,
}

#[derive(Clone, Debug)]
pub struct Certificate {
    /// Relative per-user change of `h_k^H R_k h_k` under recovery.
    pub objective_preservation: Vec<f64>,
    /// `min_eig(R_tilde_k - R_k_star)` per user.
    pub extraction_min_eig: Vec<f64>,
    /// `min_eig(R_e_star)`.
    pub re_min_eig: f64,
    /// Relative gap between relaxed and recovered objectives.
    pub objective_delta: f64,
}

pub fn recover(
    sdr: &SdrSolution,
    inputs: &SdrInputs,
) -> Result<RecoveredSolution, BeamformError> {
    let (nt, k) = inputs.check()?;
    if sdr.r_k.len() != k || sdr.r_total.nrows() != nt {
        return Err(BeamformError::Dimension(
            "relaxed solution does not match the inputs".into(),
        ));
    }
    let mut w = CMat::zeros(nt, k);
    let mut r_k_star = Vec::with_capacity(k);
    let mut unserved = Vec::new();
    let mut preservation = Vec::with_capacity(k);
    for (uk, h) in inputs.channels.ir.iter().enumerate() {
        let q = crate::metrics::quad_form(h, &sdr.r_k[uk]);
        let trace: f64 = (0..nt).map(|i| sdr.r_k[uk][(i, i)].re).sum();
        let floor = 1e-12 * (1.0 + h.norm() * h.norm() * trace.max(0.0));
        if q <= floor {
            unserved.push(uk);
            r_k_star.push(CMat::zeros(nt, nt));
            preservation.push(0.0);
            continue;
        }
        let scale = Complex64::from(1.0 / q.sqrt());
        let rh = &sdr.r_k[uk] * h;
        let wk = rh * scale;
        for i in 0..nt {
            w[(i, uk)] = wk[i];
        }
        let q_star = {
            let hw: Complex64 = h.iter().zip(wk.iter()).map(|(hi, wi)| hi.conj() * wi).sum();
            hw.norm_sqr()
        };
        preservation.push((q_star - q).abs() / (1.0 + q.abs()));
        r_k_star.push(outer(&wk));
    }
    let mut r_e_star = sdr.r_total.clone();
    for rks in &r_k_star {
        r_e_star -= rks;
    }
    // hermitize against accumulated roundoff
    let r_e_star = HermitianMatrix::from_matrix(&r_e_star).to_matrix();

    let extraction_min_eig: Vec<f64> = (0..k)
        .map(|uk| {
            let diff = &sdr.r_k[uk] - &r_k_star[uk];
            conic::min_eig(&HermitianMatrix::from_matrix(&diff))
        })
        .collect();
    let re_min_eig = conic::min_eig(&HermitianMatrix::from_matrix(&r_e_star));
    let beams = BeamSolution {
        w,
        r_e: r_e_star,
    };
    let recovered_obj = sdr_objective(inputs, &r_k_star, &sdr.r_total);
    let objective_delta = (recovered_obj - sdr.objective).abs() / (1.0 + sdr.objective.abs());
    Ok(RecoveredSolution {
        beams,
        r_k_star,
        unserved,
        certificate: Certificate {
            objective_preservation: preservation,
            extraction_min_eig,
            re_min_eig,
            objective_delta,
        },
    })
}

/// One named certificate check with its residual (negative means failed by
/// that amount).
#[derive(Clone, Debug)]
pub struct CertCheck {
    pub name: &'static str,
    pub residual: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct CertificateReport {
    pub checks: Vec<CertCheck>,
}

impl CertificateReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Executable form of the recovery-optimality argument: objective
/// preservation, `R_tilde_k - R_k_star >= 0`, `R_e_star >= 0`, the secrecy
/// constraint at the recovered point in its cleared form
/// `h_e^H R_1 h_e <= Gamma/(1+Gamma) (h_e^H R h_e + sigma_e^2)`, and power
/// preservation.
pub fn verify_appendix_a(
    sdr: &SdrSolution,
    rec: &RecoveredSolution,
    inputs: &SdrInputs,
    tol: f64,
) -> CertificateReport {
    let mut checks = Vec::new();
    let worst_pres = rec
        .certificate
        .objective_preservation
        .iter()
        .fold(0.0f64, |a, &b| a.max(b));
    checks.push(CertCheck {
        name: "objective_preservation",
        residual: tol - worst_pres,
        pass: worst_pres <= tol,
    });
    let worst_eig = rec
        .certificate
        .extraction_min_eig
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    checks.push(CertCheck {
        name: "extraction_psd",
        residual: worst_eig,
        pass: worst_eig >= -tol,
    });
    checks.push(CertCheck {
        name: "an_covariance_psd",
        residual: rec.certificate.re_min_eig,
        pass: rec.certificate.re_min_eig >= -tol,
    });
    let he = &inputs.channels.eve;
    let lhs = crate::metrics::quad_form(he, &rec.r_k_star[0]);
    let total = crate::metrics::quad_form(he, &sdr.r_total) + inputs.sigma2_eve;
    let rhs = inputs.gamma_lin / (1.0 + inputs.gamma_lin) * total;
    let scale = 1.0 + lhs.abs().max(rhs.abs());
    checks.push(CertCheck {
        name: "secrecy_at_recovered",
        residual: (rhs - lhs) / scale,
        pass: lhs <= rhs + tol * scale,
    });
    let tr_relaxed: f64 = (0..sdr.r_total.nrows()).map(|i| sdr.r_total[(i, i)].re).sum();
    let tr_rec = rec.beams.power_used();
    let p_scale = 1.0 + tr_relaxed.abs();
    checks.push(CertCheck {
        name: "power_preservation",
        residual: tol - (tr_rec - tr_relaxed).abs() / p_scale,
        pass: (tr_rec - tr_relaxed).abs() <= tol * p_scale,
    });
    checks.push(CertCheck {
        name: "objective_gap",
        residual: tol - rec.certificate.objective_delta,
        pass: rec.certificate.objective_delta <= tol,
    });
    CertificateReport { checks }
}
