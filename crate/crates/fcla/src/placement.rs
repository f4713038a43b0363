//! Antenna-position optimization: cosine expansions of the transformed
//! objective, analytic gradients and Hessians, global curvature bounds, the
//! secrecy projection subproblem, and the Nesterov-accelerated projected
//! gradient loop.
//!
//! Angle coordinates are handled in arc length `s = rho * phi`, matching the
//! `d/(rho d phi)` convention of the gradient entries; height coordinates
//! are plain meters. Each quadratic form `h^H Xi h` expands into cosine
//! terms `amp * cos(phase0 + 2pi/lambda * (chi_l(pos_i) - chi_p(pos_j)))`,
//! whose phases are linear in the heights and sinusoidal in the angles.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::channel::{flat_index, ring_of, CMat, CVec};
use crate::fp::LN2;
use crate::metrics::BeamSolution;
use crate::scenario::{ArrayConfig, PathSet, Placement, Scenario, ScenarioError, TWO_PI};

pub type RVec = DVector<f64>;
pub type RMat = DMatrix<f64>;

#[derive(Debug, Error)]
pub enum PlacementError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// Coordinate block being optimized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    /// Ring angles, in arc-length coordinates `s = rho * phi` (length M*N).
    Angles,
    /// Ring heights (length M).
    Heights,
}

/// Covariance aggregates of the placement subproblem:
/// `Xi_s = sum_k w_k w_k^H + R_e` and
/// `Xi_e = Gamma (sum_{k != 1} w_k w_k^H + R_e) - w_1 w_1^H`.
pub fn build_xi_matrices(sol: &BeamSolution, gamma_lin: f64) -> (CMat, CMat) {
    let nt = sol.n_antennas();
    let mut xi_s = sol.r_e.clone();
    let mut xi_e = sol.r_e.clone() * Complex64::from(gamma_lin);
    for k in 0..sol.n_users() {
        let wk = sol.w.column(k);
        for i in 0..nt {
            for j in 0..nt {
                let o = wk[i] * wk[j].conj();
                xi_s[(i, j)] += o;
                if k == 0 {
                    xi_e[(i, j)] -= o;
                } else {
                    xi_e[(i, j)] += o * Complex64::from(gamma_lin);
                }
            }
        }
    }
    (xi_s, xi_e)
}

/// One pair term of the quadratic-form expansion: positions `i, j` with
/// paths `l, p`; `amp` already carries the symmetry factor 2.
#[derive(Clone, Copy, Debug)]
struct CosTerm {
    i: usize,
    j: usize,
    l: usize,
    p: usize,
    amp: f64,
    phase0: f64,
}

/// One term of the linear-form expansion `Re{h^H w}`.
#[derive(Clone, Copy, Debug)]
struct LinTerm {
    i: usize,
    l: usize,
    amp: f64,
    phase0: f64,
}

/// Cosine expansion of `h_u^H Xi h_u` (and optionally `Re{h_u^H w}`) as a
/// function of the placement, for one receiver's path set.
#[derive(Clone, Debug)]
pub struct QuadExpansion {
    rings: usize,
    per_ring: usize,
    k_wave: f64,
    rho: f64,
    dirs: Vec<[f64; 3]>,
    constant: f64,
    cos_terms: Vec<CosTerm>,
    lin_terms: Vec<LinTerm>,
}

impl QuadExpansion {
    /// Expansion of `h^H Xi h` over the given path set.
    pub fn of_quadratic_form(
        paths: &PathSet,
        xi: &CMat,
        config: &ArrayConfig,
    ) -> Result<Self, PlacementError> {
        let nt = config.n_t();
        if xi.nrows() != nt || xi.ncols() != nt {
            return Err(PlacementError::Dimension(format!(
                "Xi is {}x{}, expected {nt}x{nt}",
                xi.nrows(),
                xi.ncols()
            )));
        }
        let l_paths = paths.len();
        let dirs: Vec<[f64; 3]> = (0..l_paths).map(|l| paths.direction(l)).collect();
        let mags: Vec<f64> = paths.beta.iter().map(|b| b.norm()).collect();
        let args: Vec<f64> = paths.beta.iter().map(|b| b.arg()).collect();
        let mut constant = 0.0;
        let mut cos_terms = Vec::new();
        for i in 0..nt {
            let xii = xi[(i, i)].re;
            for m in &mags {
                constant += m * m * xii;
            }
            for l in 0..l_paths {
                for p in (l + 1)..l_paths {
                    let amp = 2.0 * mags[l] * mags[p] * xi[(i, i)].norm();
                    if amp == 0.0 {
                        continue;
                    }
                    cos_terms.push(CosTerm {
                        i,
                        j: i,
                        l,
                        p,
                        amp,
                        phase0: args[l] - args[p] + xi[(i, i)].arg(),
                    });
                }
            }
        }
        for i in 0..nt {
            for j in (i + 1)..nt {
                let xij = xi[(i, j)];
                if xij.norm() == 0.0 {
                    continue;
                }
                for l in 0..l_paths {
                    for p in 0..l_paths {
                        let amp = 2.0 * mags[l] * mags[p] * xij.norm();
                        if amp == 0.0 {
                            continue;
                        }
                        cos_terms.push(CosTerm {
                            i,
                            j,
                            l,
                            p,
                            amp,
                            phase0: args[l] - args[p] + xij.arg(),
                        });
                    }
                }
            }
        }
        Ok(QuadExpansion {
            rings: config.m,
            per_ring: config.n,
            k_wave: TWO_PI / config.lambda,
            rho: config.rho,
            dirs,
            constant,
            cos_terms,
            lin_terms: Vec::new(),
        })
    }

    /// Adds the linear-form terms for `Re{h^H w}` with the same path set.
    pub fn with_linear_form(mut self, paths: &PathSet, w: &CVec) -> Result<Self, PlacementError> {
        let nt = self.rings * self.per_ring;
        if w.len() != nt {
            return Err(PlacementError::Dimension(format!(
                "beam has {} entries, expected {nt}",
                w.len()
            )));
        }
        for i in 0..nt {
            let wm = w[i].norm();
            if wm == 0.0 {
                continue;
            }
            for l in 0..paths.len() {
                let amp = paths.beta[l].norm() * wm;
                if amp == 0.0 {
                    continue;
                }
                self.lin_terms.push(LinTerm {
                    i,
                    l,
                    amp,
                    phase0: paths.beta[l].arg() + w[i].arg(),
                });
            }
        }
        Ok(self)
    }

    fn chi(&self, placement: &Placement, i: usize, l: usize) -> f64 {
        let m = ring_of(i, self.per_ring);
        let n = i % self.per_ring;
        let d = self.dirs[l];
        let phi = placement.phi(m, n);
        self.rho * phi.cos() * d[0] + self.rho * phi.sin() * d[1] + placement.z(m) * d[2]
    }

    /// Value of the quadratic form `h^H Xi h` at the placement.
    pub fn eval_quad(&self, placement: &Placement) -> f64 {
        let mut acc = self.constant;
        for t in &self.cos_terms {
            let kappa = t.phase0
                + self.k_wave * (self.chi(placement, t.i, t.l) - self.chi(placement, t.j, t.p));
            acc += t.amp * kappa.cos();
        }
        acc
    }

    /// Value of `Re{h^H w}` at the placement.
    pub fn eval_linear(&self, placement: &Placement) -> f64 {
        let mut acc = 0.0;
        for t in &self.lin_terms {
            let kappa = t.phase0 + self.k_wave * self.chi(placement, t.i, t.l);
            acc += t.amp * kappa.cos();
        }
        acc
    }

    fn block_len(&self, block: Block) -> usize {
        match block {
            Block::Angles => self.rings * self.per_ring,
            Block::Heights => self.rings,
        }
    }

    /// Signed slot entries of one pair term in the active block:
    /// `(coordinate index, combined direction data)`, merging the two
    /// positions when they share a coordinate.
    fn term_slots(
        &self,
        i: usize,
        l: usize,
        j: usize,
        p: usize,
        block: Block,
    ) -> ([(usize, f64, f64); 2], usize) {
        // entries are (idx, ex, ey) for angles or (idx, ez, 0) for heights
        let (di, dj) = (self.dirs[l], self.dirs[p]);
        match block {
            Block::Angles => {
                if i == j {
                    ([(i, di[0] - dj[0], di[1] - dj[1]), (0, 0.0, 0.0)], 1)
                } else {
                    ([(i, di[0], di[1]), (j, -dj[0], -dj[1])], 2)
                }
            }
            Block::Heights => {
                let (mi, mj) = (ring_of(i, self.per_ring), ring_of(j, self.per_ring));
                if mi == mj {
                    ([(mi, di[2] - dj[2], 0.0), (0, 0.0, 0.0)], 1)
                } else {
                    ([(mi, di[2], 0.0), (mj, -dj[2], 0.0)], 2)
                }
            }
        }
    }

    fn slot_phase_derivs(
        &self,
        placement: &Placement,
        idx: usize,
        ex: f64,
        ey: f64,
        block: Block,
    ) -> (f64, f64) {
        match block {
            Block::Angles => {
                let m = ring_of(idx, self.per_ring);
                let n = idx % self.per_ring;
                let phi = placement.phi(m, n);
                let g = self.k_wave * (-phi.sin() * ex + phi.cos() * ey);
                let h = -(self.k_wave / self.rho) * (phi.cos() * ex + phi.sin() * ey);
                (g, h)
            }
            Block::Heights => (self.k_wave * ex, 0.0),
        }
    }

    /// Gradient of the quadratic form over the active block.
    pub fn grad_quad(&self, placement: &Placement, block: Block) -> RVec {
        let mut grad = RVec::zeros(self.block_len(block));
        for t in &self.cos_terms {
            let kappa = t.phase0
                + self.k_wave * (self.chi(placement, t.i, t.l) - self.chi(placement, t.j, t.p));
            let coeff = -t.amp * kappa.sin();
            let (slots, count) = self.term_slots(t.i, t.l, t.j, t.p, block);
            for (idx, ex, ey) in slots.iter().take(count) {
                let (g, _) = self.slot_phase_derivs(placement, *idx, *ex, *ey, block);
                grad[*idx] += coeff * g;
            }
        }
        grad
    }

    /// Gradient of the linear form over the active block.
    pub fn grad_linear(&self, placement: &Placement, block: Block) -> RVec {
        let mut grad = RVec::zeros(self.block_len(block));
        for t in &self.lin_terms {
            let kappa = t.phase0 + self.k_wave * self.chi(placement, t.i, t.l);
            let coeff = -t.amp * kappa.sin();
            let d = self.dirs[t.l];
            let (idx, ex, ey) = match block {
                Block::Angles => (t.i, d[0], d[1]),
                Block::Heights => (ring_of(t.i, self.per_ring), d[2], 0.0),
            };
            let (g, _) = self.slot_phase_derivs(placement, idx, ex, ey, block);
            grad[idx] += coeff * g;
        }
        grad
    }

    /// Exact Hessian of the quadratic form over the active block.
    pub fn hessian_quad(&self, placement: &Placement, block: Block) -> RMat {
        let n = self.block_len(block);
        let mut hess = RMat::zeros(n, n);
        for t in &self.cos_terms {
            let kappa = t.phase0
                + self.k_wave * (self.chi(placement, t.i, t.l) - self.chi(placement, t.j, t.p));
            let (slots, count) = self.term_slots(t.i, t.l, t.j, t.p, block);
            let mut derivs = [(0usize, 0.0f64, 0.0f64); 2];
            for (s, (idx, ex, ey)) in slots.iter().take(count).enumerate() {
                let (g, h) = self.slot_phase_derivs(placement, *idx, *ex, *ey, block);
                derivs[s] = (*idx, g, h);
            }
            let (ck, sk) = (kappa.cos(), kappa.sin());
            for (a, ga, ha) in derivs.iter().take(count) {
                hess[(*a, *a)] += -t.amp * sk * ha;
                for (b, gb, _) in derivs.iter().take(count) {
                    hess[(*a, *b)] += -t.amp * ck * ga * gb;
                }
            }
        }
        hess
    }

    /// Global curvature bound `delta >= lambda_max(hessian_quad)` valid at
    /// every placement: per-term amplitude times squared phase-rate bounds,
    /// aggregated by Gershgorin row sums. Floors at 1e-12 so downstream
    /// reciprocals stay finite for vanishing expansions.
    pub fn spectral_bound_quad(&self, block: Block) -> f64 {
        let n = self.block_len(block);
        let mut bound = RMat::zeros(n, n);
        for t in &self.cos_terms {
            let (slots, count) = self.term_slots(t.i, t.l, t.j, t.p, block);
            let mut rates = [(0usize, 0.0f64, 0.0f64); 2]; // (idx, |g| bound, |h| bound)
            for (s, (idx, ex, ey)) in slots.iter().take(count).enumerate() {
                let mag = (ex * ex + ey * ey).sqrt();
                let gb = self.k_wave * mag;
                let hb = match block {
                    Block::Angles => gb / self.rho,
                    Block::Heights => 0.0,
                };
                rates[s] = (*idx, gb, hb);
            }
            for (a, ga, ha) in rates.iter().take(count) {
                bound[(*a, *a)] += t.amp.abs() * ha;
                for (b, gb, _) in rates.iter().take(count) {
                    bound[(*a, *b)] += t.amp.abs() * ga * gb;
                }
            }
        }
        let delta = (0..n)
            .map(|i| (0..n).map(|j| bound[(i, j)]).sum::<f64>())
            .fold(0.0f64, f64::max);
        delta.max(1e-12)
    }

    /// Curvature bound for the linear-form terms.
    pub fn spectral_bound_linear(&self, block: Block) -> f64 {
        let n = self.block_len(block);
        let mut bound = RMat::zeros(n, n);
        for t in &self.lin_terms {
            let d = self.dirs[t.l];
            let (idx, mag) = match block {
                Block::Angles => (t.i, (d[0] * d[0] + d[1] * d[1]).sqrt()),
                Block::Heights => (ring_of(t.i, self.per_ring), d[2].abs()),
            };
            let gb = self.k_wave * mag;
            let hb = match block {
                Block::Angles => gb / self.rho,
                Block::Heights => 0.0,
            };
            bound[(idx, idx)] += t.amp.abs() * (gb * gb + hb);
        }
        let delta = (0..n)
            .map(|i| (0..n).map(|j| bound[(i, j)]).sum::<f64>())
            .fold(0.0f64, f64::max);
        delta.max(1e-12)
    }
}

/// Convenience wrapper for the eavesdropper-side Hessian used by the SCA
/// surrogate.
pub fn hessian_fee(expansion: &QuadExpansion, placement: &Placement, block: Block) -> RMat {
    expansion.hessian_quad(placement, block)
}

/// Global curvature bound for the eavesdropper-side quadratic form.
pub fn spectral_bound_delta(expansion: &QuadExpansion, block: Block) -> f64 {
    expansion.spectral_bound_quad(block)
}

struct UserTerm {
    expansion: QuadExpansion,
    /// `(1 + eta_k) * varpi_k`.
    weight: f64,
    varpi: f64,
    sigma2: f64,
}

/// The placement-step objective and secrecy constraint at fixed beams and
/// FP state, expressed through expansions so no channel resynthesis is
/// needed inside the inner loop.
pub struct PlacementObjective {
    users: Vec<UserTerm>,
    eve: QuadExpansion,
    /// Constraint `F_ee(xi) >= secrecy_rhs`, with `secrecy_rhs = -Gamma
    /// sigma_e^2`.
    pub secrecy_rhs: f64,
    pub secrecy_active: bool,
}

impl PlacementObjective {
    pub fn new(
        scenario: &Scenario,
        sol: &BeamSolution,
        eta: &[f64],
        varpi: &[f64],
    ) -> Result<Self, PlacementError> {
        let k = scenario.n_users();
        if sol.n_users() != k || eta.len() != k || varpi.len() != k {
            return Err(PlacementError::Dimension(
                "beams and FP state must match the scenario".into(),
            ));
        }
        let gamma = scenario.gamma_th_e_linear();
        let secrecy_active = gamma < crate::beamform::GAMMA_INACTIVE;
        let (xi_s, xi_e) = build_xi_matrices(sol, gamma.min(crate::beamform::GAMMA_INACTIVE));
        let mut users = Vec::with_capacity(k);
        for uk in 0..k {
            let expansion =
                QuadExpansion::of_quadratic_form(&scenario.ir_paths[uk], &xi_s, &scenario.config)?
                    .with_linear_form(&scenario.ir_paths[uk], &sol.w.column(uk).into_owned())?;
            users.push(UserTerm {
                expansion,
                weight: (1.0 + eta[uk]) * varpi[uk],
                varpi: varpi[uk],
                sigma2: scenario.sigma2_ir[uk],
            });
        }
        let eve = QuadExpansion::of_quadratic_form(&scenario.eve_paths, &xi_e, &scenario.config)?;
        Ok(PlacementObjective {
            users,
            eve,
            secrecy_rhs: -gamma * scenario.sigma2_eve,
            secrecy_active,
        })
    }

    /// Transformed objective in bits at the placement (same value as
    /// `fp::eval_ib` with channels resynthesized there).
    pub fn eval_ib(&self, placement: &Placement) -> f64 {
        let mut acc = 0.0;
        for u in &self.users {
            let l = u.expansion.eval_linear(placement);
            let f = u.expansion.eval_quad(placement);
            acc += u.weight * (2.0 * l - u.varpi * (f + u.sigma2));
        }
        acc / LN2
    }

    /// Analytic objective gradient over the active block.
    pub fn grad(&self, placement: &Placement, block: Block) -> RVec {
        let n = match block {
            Block::Angles => placement.rings() * placement.per_ring(),
            Block::Heights => placement.rings(),
        };
        let mut grad = RVec::zeros(n);
        for u in &self.users {
            let gl = u.expansion.grad_linear(placement, block);
            let gf = u.expansion.grad_quad(placement, block);
            grad += (gl * 2.0 - gf * u.varpi) * (u.weight / LN2);
        }
        grad
    }

    /// Global bound on the objective-Hessian spectral norm over the block.
    pub fn curvature_bound(&self, block: Block) -> f64 {
        let mut acc = 0.0;
        for u in &self.users {
            acc += u.weight
                * (2.0 * u.expansion.spectral_bound_linear(block)
                    + u.varpi * u.expansion.spectral_bound_quad(block));
        }
        (acc / LN2).max(1e-12)
    }

    pub fn secrecy_value(&self, placement: &Placement) -> f64 {
        self.eve.eval_quad(placement)
    }

    pub fn eve_expansion(&self) -> &QuadExpansion {
        &self.eve
    }
}

/// Linear inequality system `G x <= h` of the spacing and box constraints
/// for one block, in block coordinates.
pub struct BlockConstraints {
    pub g: RMat,
    pub h: RVec,
}

pub fn block_constraints(config: &ArrayConfig, block: Block) -> BlockConstraints {
    match block {
        Block::Angles => {
            let (m, n) = (config.m, config.n);
            let dim = m * n;
            let smax = TWO_PI * config.rho;
            let gap = config.phi_th * config.rho;
            let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
            for i in 0..dim {
                rows.push((vec![(i, -1.0)], 0.0));
                rows.push((vec![(i, 1.0)], smax));
            }
            if n > 1 {
                for ring in 0..m {
                    for e in 0..n - 1 {
                        let a = flat_index(ring, e, n);
                        let b = flat_index(ring, e + 1, n);
                        rows.push((vec![(a, 1.0), (b, -1.0)], -gap));
                    }
                    let first = flat_index(ring, 0, n);
                    let last = flat_index(ring, n - 1, n);
                    rows.push((vec![(last, 1.0), (first, -1.0)], smax - gap));
                }
            }
            dense_rows(dim, &rows)
        }
        Block::Heights => {
            let m = config.m;
            let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
            for i in 0..m {
                rows.push((vec![(i, -1.0)], 0.0));
                rows.push((vec![(i, 1.0)], config.a));
            }
            for i in 0..m.saturating_sub(1) {
                rows.push((vec![(i, 1.0), (i + 1, -1.0)], -config.z_th));
            }
            dense_rows(m, &rows)
        }
    }
}

fn dense_rows(dim: usize, rows: &[(Vec<(usize, f64)>, f64)]) -> BlockConstraints {
    let mut g = RMat::zeros(rows.len(), dim);
    let mut h = RVec::zeros(rows.len());
    for (r, (coefs, rhs)) in rows.iter().enumerate() {
        for (idx, v) in coefs {
            g[(r, *idx)] = *v;
        }
        h[r] = *rhs;
    }
    BlockConstraints { g, h }
}

/// Euclidean projection onto `{x : G x <= h}` by a primal active-set method
/// starting from the feasible point `x0`. Deterministic: ties break on the
/// lowest row index.
pub fn project_polytope(y: &RVec, con: &BlockConstraints, x0: &RVec) -> RVec {
    let n = y.len();
    let rows = con.g.nrows();
    let mut x = x0.clone();
    let scale = 1.0 + y.amax().max(x0.amax());
    let tol_active = 1e-11 * scale;
    let tol_move = 1e-13 * scale;
    let mut active: Vec<usize> = (0..rows)
        .filter(|&i| (con.g.row(i).transpose().dot(&x) - con.h[i]).abs() <= tol_active)
        .collect();
    let max_iter = 30 * (rows + 1);
    for _ in 0..max_iter {
        // equality-constrained minimizer over the active rows
        let na = active.len();
        let (xt, lambda) = if na == 0 {
            (y.clone(), RVec::zeros(0))
        } else {
            let mut ga = RMat::zeros(na, n);
            let mut ha = RVec::zeros(na);
            for (r, &i) in active.iter().enumerate() {
                ga.row_mut(r).copy_from(&con.g.row(i));
                ha[r] = con.h[i];
            }
            let gram = &ga * ga.transpose();
            let rhs = &ga * y - &ha;
            let svd = nalgebra::SVD::new(gram, true, true);
            let lambda = svd
                .solve(&rhs, 1e-12)
                .unwrap_or_else(|_| RVec::zeros(na));
            let xt = y - ga.transpose() * &lambda;
            (xt, lambda)
        };
        let d = &xt - &x;
        if d.norm() <= tol_move {
            // at the constrained minimizer for this working set
            if active.is_empty() {
                return x;
            }
            let (worst_idx, worst_val) = lambda
                .iter()
                .enumerate()
                .fold((0usize, f64::INFINITY), |acc, (i, &v)| {
                    if v < acc.1 {
                        (i, v)
                    } else {
                        acc
                    }
                });
            if worst_val >= -1e-10 * scale {
                return x;
            }
            active.remove(worst_idx);
            continue;
        }
        // blocking constraint on the way to xt
        let mut alpha = 1.0;
        let mut blocker = None;
        for i in 0..rows {
            if active.contains(&i) {
                continue;
            }
            let gd = con.g.row(i).transpose().dot(&d);
            if gd > 1e-14 * scale {
                let slack = con.h[i] - con.g.row(i).transpose().dot(&x);
                let ai = (slack / gd).max(0.0);
                if ai < alpha {
                    alpha = ai;
                    blocker = Some(i);
                }
            }
        }
        x += d * alpha;
        if let Some(i) = blocker {
            let pos = active.binary_search(&i).unwrap_or_else(|e| e);
            active.insert(pos, i);
        }
        // reaching xt unblocked still requires the multiplier check of the
        // next pass before the point can be declared optimal
    }
    x
}

/// Outcome details of one SCA projection.
#[derive(Clone, Copy, Debug, Default)]
pub struct ScaInfo {
    pub rounds: usize,
    pub stalled: bool,
    /// Ball multiplier of the final projection (0 when the secrecy surrogate
    /// was inactive).
    pub ball_multiplier: f64,
}

/// Builds a placement from block coordinates (arc length for angles).
fn placement_with(
    template: &Placement,
    block: Block,
    rho: f64,
    x: &RVec,
) -> Result<Placement, ScenarioError> {
    match block {
        Block::Angles => {
            let phis: Vec<f64> = x.iter().map(|s| s / rho).collect();
            template.with_flat_phi(&phis)
        }
        Block::Heights => template.with_z(x.iter().copied().collect()),
    }
}

/// Step-2 projection: nearest feasible point to `zeta` under the spacing/box
/// polytope and the quadratic secrecy lower bound linearized at `xi_prev`.
///
/// The surrogate `F(xi_r) + g'(xi - xi_r) - (delta/2)||xi - xi_r||^2 >= rhs`
/// is a Euclidean ball; the projection runs a bisection on its multiplier
/// around the polytope projection. Each round re-linearizes at the new point
/// until the true constraint holds (by minorization one round suffices up to
/// roundoff).
#[allow(clippy::too_many_arguments)]
pub fn sca_project(
    zeta: &RVec,
    xi_prev: &RVec,
    config: &ArrayConfig,
    template: &Placement,
    con: &BlockConstraints,
    expansion: Option<&QuadExpansion>,
    secrecy_rhs: f64,
    block: Block,
    delta: f64,
    max_rounds: usize,
) -> (RVec, ScaInfo) {
    let apply = |x: &RVec| placement_with(template, block, config.rho, x);
    let expansion = match expansion {
        Some(e) => e,
        None => {
            return (
                project_polytope(zeta, con, xi_prev),
                ScaInfo {
                    rounds: 1,
                    ..ScaInfo::default()
                },
            )
        }
    };
    let tol_true = 1e-9 * (1.0 + secrecy_rhs.abs());
    let mut xi_r = xi_prev.clone();
    let mut info = ScaInfo::default();
    for round in 0..max_rounds.max(1) {
        info.rounds = round + 1;
        let pl_r = match apply(&xi_r) {
            Ok(p) => p,
            Err(_) => break,
        };
        let f_r = expansion.eval_quad(&pl_r);
        let margin = f_r - secrecy_rhs;
        if margin < -tol_true {
            break; // linearization point itself violates the true constraint
        }
        let g = expansion.grad_quad(&pl_r, block);
        let center = &xi_r + &g / delta;
        let rad2 = (2.0 / delta) * margin.max(0.0) + g.norm_squared() / (delta * delta);
        let rad = rad2.sqrt();

        let p0 = project_polytope(zeta, con, &xi_r);
        let cand = if (&p0 - &center).norm() <= rad {
            info.ball_multiplier = 0.0;
            p0
        } else {
            // bisection on the ball multiplier nu: project (zeta + nu q)/(1+nu)
            let mut lo = 0.0f64;
            let mut hi = 1.0f64;
            let dist = |nu: f64| {
                let blend = (zeta + &center * nu) / (1.0 + nu);
                let p = project_polytope(&blend, con, &xi_r);
                ((&p - &center).norm(), p)
            };
            let mut guard = 0;
            while dist(hi).0 > rad && guard < 200 {
                hi *= 2.0;
                guard += 1;
            }
            if guard >= 200 {
                break; // no multiplier brings the projection inside the ball
            }
            for _ in 0..90 {
                let mid = 0.5 * (lo + hi);
                if dist(mid).0 <= rad {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            info.ball_multiplier = hi;
            dist(hi).1
        };

        let pl_c = match apply(&cand) {
            Ok(p) => p,
            Err(_) => break,
        };
        if expansion.eval_quad(&pl_c) >= secrecy_rhs - tol_true {
            return (cand, info);
        }
        xi_r = cand;
    }
    info.stalled = true;
    (xi_prev.clone(), info)
}

/// Options of the accelerated projected-gradient loop.
#[derive(Clone, Copy, Debug)]
pub struct PgdOptions {
    pub max_iters: usize,
    /// Initial step size; `None` uses `1/delta` from the objective curvature
    /// bound.
    pub tau0: Option<f64>,
    pub shrink: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
    /// Termination threshold on the coordinate movement per iteration, in
    /// meters.
    pub stall_tol: f64,
    pub max_sca_rounds: usize,
    pub optimize_angles: bool,
    pub optimize_heights: bool,
}

impl Default for PgdOptions {
    fn default() -> Self {
        PgdOptions {
            max_iters: 50,
            tau0: None,
            shrink: 0.5,
            armijo: 1e-4,
            max_backtracks: 30,
            stall_tol: 1e-6,
            max_sca_rounds: 5,
            optimize_angles: true,
            optimize_heights: true,
        }
    }
}

impl PgdOptions {
    pub fn validate(&self) -> Result<(), PlacementError> {
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(PlacementError::Dimension("shrink must be in (0,1)".into()));
        }
        if !(self.armijo > 0.0 && self.armijo <= 0.5) {
            return Err(PlacementError::Dimension(
                "armijo coefficient must be in (0, 0.5]".into(),
            ));
        }
        if !(self.stall_tol > 0.0) || self.max_iters == 0 {
            return Err(PlacementError::Dimension(
                "positive stall tolerance and iteration budget required".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PgdTraceRow {
    pub block: Block,
    pub iter: usize,
    pub step: f64,
    pub i_b: f64,
    pub sca_rounds: usize,
    pub moved: f64,
}

fn extract_block(placement: &Placement, block: Block, rho: f64) -> RVec {
    match block {
        Block::Angles => {
            let flat = placement.flat_phi();
            RVec::from_fn(flat.len(), |i, _| rho * flat[i])
        }
        Block::Heights => RVec::from_fn(placement.rings(), |i, _| placement.z(i)),
    }
}

/// One placement-block PGD run; returns the improved coordinates, trace, and
/// whether a projection stall ended the run early.
#[allow(clippy::too_many_arguments)]
fn pgd_block(
    objective: &PlacementObjective,
    config: &ArrayConfig,
    placement: &Placement,
    block: Block,
    opts: &PgdOptions,
    trace: &mut Vec<PgdTraceRow>,
) -> Result<(Placement, bool), PlacementError> {
    let rho = config.rho;
    let apply = |x: &RVec| placement_with(placement, block, rho, x);
    let con = block_constraints(config, block);
    let delta_obj = objective.curvature_bound(block);
    let tau0 = opts.tau0.unwrap_or(1.0 / delta_obj);
    let (secrecy_exp, secrecy_delta) = if objective.secrecy_active {
        let e = objective.eve_expansion();
        (Some(e), spectral_bound_delta(e, block))
    } else {
        (None, 1.0)
    };

    let mut x_curr = extract_block(placement, block, rho);
    #[allow(unused_assignments)]
    let mut x_prev = x_curr.clone();
    let mut f_curr = objective.eval_ib(&apply(&x_curr)?);
    let mut iota = x_curr.clone();
    let mut q = 1.0f64;
    let mut stalled = false;

    // skip the block when the secrecy set is empty at the current point
    if let Some(e) = secrecy_exp {
        let margin = e.eval_quad(&apply(&x_curr)?) - objective.secrecy_rhs;
        if margin < -1e-9 * (1.0 + objective.secrecy_rhs.abs()) {
            return Ok((apply(&x_curr)?, true));
        }
    }

    for t in 0..opts.max_iters {
        let attempt = |iota_pt: &RVec| -> Result<Option<(RVec, f64, f64, usize)>, PlacementError> {
            let grad = {
                let pl = apply(iota_pt).map_err(PlacementError::from);
                match pl {
                    Ok(p) => objective.grad(&p, block),
                    Err(_) => return Ok(None), // extrapolation left the representable set
                }
            };
            let mut tau = tau0;
            for _ in 0..opts.max_backtracks {
                let zeta = iota_pt + &grad * tau;
                let (cand, info) = sca_project(
                    &zeta,
                    &x_curr,
                    config,
                    placement,
                    &con,
                    secrecy_exp,
                    objective.secrecy_rhs,
                    block,
                    secrecy_delta,
                    opts.max_sca_rounds,
                );
                if info.stalled {
                    return Ok(None);
                }
                let f_cand = objective.eval_ib(&apply(&cand)?);
                let dir_gain = grad.dot(&(&cand - iota_pt));
                let sufficient = f_curr + opts.armijo * dir_gain.max(0.0);
                if f_cand >= sufficient && f_cand >= f_curr - 1e-14 * (1.0 + f_curr.abs()) {
                    return Ok(Some((cand, f_cand, tau, info.rounds)));
                }
                tau *= opts.shrink;
            }
            Ok(None)
        };

        let mut accepted = attempt(&iota)?;
        if accepted.is_none() && (&iota - &x_curr).norm() > 0.0 {
            // momentum restart: retry as a plain projected gradient step
            q = 1.0;
            iota = x_curr.clone();
            accepted = attempt(&iota)?;
        }
        let (cand, f_cand, tau, rounds) = match accepted {
            Some(s) => s,
            None => {
                stalled = true;
                break;
            }
        };
        x_prev = std::mem::replace(&mut x_curr, cand);
        f_curr = f_cand;
        let q_next = 0.5 * (1.0 + (1.0 + 4.0 * q * q).sqrt());
        let alpha = (q_next - 1.0) / q_next;
        q = q_next;
        iota = &x_curr + (&x_curr - &x_prev) * alpha;
        let moved = (&x_curr - &x_prev).norm();
        trace.push(PgdTraceRow {
            block,
            iter: t,
            step: tau,
            i_b: f_curr,
            sca_rounds: rounds,
            moved,
        });
        if moved < opts.stall_tol {
            break;
        }
    }
    Ok((apply(&x_curr)?, stalled))
}

/// Central-finite-difference check of the analytic objective gradient over
/// one block, in the block's own coordinates. Per-entry relative error uses
/// `max(|analytic|, |fd|, 1e-8 * ||grad||_inf)` as the denominator.
pub fn fd_check(
    objective: &PlacementObjective,
    config: &ArrayConfig,
    placement: &Placement,
    block: Block,
    step: f64,
    rel_tol: f64,
) -> bool {
    let rho = config.rho;
    let x = extract_block(placement, block, rho);
    let analytic = objective.grad(placement, block);
    let scale = analytic.amax().max(1e-30);
    for i in 0..x.len() {
        let mut up = x.clone();
        up[i] += step;
        let mut dn = x.clone();
        dn[i] -= step;
        let (pu, pd) = match (
            placement_with(placement, block, rho, &up),
            placement_with(placement, block, rho, &dn),
        ) {
            (Ok(a), Ok(b)) => (a, b),
            // the perturbation broke the coordinate ordering; skip the entry
            _ => continue,
        };
        let fd = (objective.eval_ib(&pu) - objective.eval_ib(&pd)) / (2.0 * step);
        let denom = analytic[i].abs().max(fd.abs()).max(1e-8 * scale);
        if (analytic[i] - fd).abs() / denom > rel_tol {
            return false;
        }
    }
    true
}

/// Alternating placement optimization: a full accelerated-PGD run over the
/// angle block, then over the height block (each when enabled). The result
/// is feasible and its transformed objective never falls below the input's.
pub fn pgd_optimize(
    placement: &Placement,
    scenario: &Scenario,
    sol: &BeamSolution,
    eta: &[f64],
    varpi: &[f64],
    opts: &PgdOptions,
) -> Result<(Placement, Vec<PgdTraceRow>, bool), PlacementError> {
    opts.validate()?;
    let objective = PlacementObjective::new(scenario, sol, eta, varpi)?;
    let mut trace = Vec::new();
    let mut current = placement.clone();
    let mut any_stall = false;
    if opts.optimize_angles && scenario.config.n_t() > 0 {
        let (next, stalled) = pgd_block(
            &objective,
            &scenario.config,
            &current,
            Block::Angles,
            opts,
            &mut trace,
        )?;
        current = next;
        any_stall |= stalled;
    }
    if opts.optimize_heights {
        let (next, stalled) = pgd_block(
            &objective,
            &scenario.config,
            &current,
            Block::Heights,
            opts,
            &mut trace,
        )?;
        current = next;
        any_stall |= stalled;
    }
    Ok((current, trace, any_stall))
}
