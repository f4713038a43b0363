//! Homogeneous self-dual interior-point solver with Nesterov-Todd scaling
//! and Mehrotra predictor-corrector steps.
//!
//! The embedding tracks `(x, y, z, tau, kappa)` for
//!
//! ```text
//! A x - b tau          = 0
//! A'y + z - c tau      = 0
//! c'x - b'y + kappa    = 0
//! x in K, z in K, tau, kappa > 0
//! ```
//!
//! An optimal point has `tau > 0, kappa -> 0` and recovers `(x, y, z)/tau`;
//! `tau -> 0` with `kappa > 0` yields an infeasibility certificate.

use nalgebra::DMatrix;

use crate::cones::{ConeSystem, Scaling};
use crate::hermitian::{RMat, RVec};
use crate::problem::{presolve, ConicError, ConicProblem};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// Either primal or dual infeasibility was certified; see
    /// [`ConicSolution::infeasibility`].
    Infeasible,
    MaxIterations,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InfeasKind {
    Primal,
    Dual,
}

#[derive(Clone, Copy, Debug)]
pub struct IterStat {
    pub iter: usize,
    pub pobj: f64,
    pub dobj: f64,
    pub pres: f64,
    pub dres: f64,
    pub relgap: f64,
    /// Complementarity gap `<x, z>/tau^2` of the scaled iterate; nonnegative.
    pub gap: f64,
    /// Residual correction `(x'r_d - y'r_p)/tau^2` making the identity
    /// `pobj - dobj = gap - slack` exact at every iterate.
    pub duality_slack: f64,
    pub mu: f64,
    pub tau: f64,
    pub kappa: f64,
    pub step: f64,
}

#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub x: RVec,
    pub y: RVec,
    pub z: RVec,
    pub status: SolveStatus,
    pub infeasibility: Option<InfeasKind>,
    /// `c'x` at the returned point (original data scale).
    pub objective: f64,
    /// `b'y` at the returned point.
    pub dual_objective: f64,
    /// Complementarity gap `<x, z>` at the returned point.
    pub duality_gap: f64,
    pub residual_primal: f64,
    pub residual_dual: f64,
    pub iterations: usize,
    pub trace: Vec<IterStat>,
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub collect_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iters: 200,
            collect_trace: false,
        }
    }
}

/// Solves the problem to relative tolerance `tol` (`(0, 1e-2]`).
pub fn solve(problem: &ConicProblem, tol: f64) -> Result<ConicSolution, ConicError> {
    if !(tol > 0.0 && tol <= 1e-2) {
        return Err(ConicError::InvalidTolerance(tol));
    }
    solve_with(
        problem,
        &SolverOptions {
            tol,
            ..SolverOptions::default()
        },
    )
}

struct State {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    tau: f64,
    kappa: f64,
}

struct Direction {
    dx: Vec<f64>,
    dy: Vec<f64>,
    dz: Vec<f64>,
    dtau: f64,
    dkappa: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn solve_with(
    problem: &ConicProblem,
    options: &SolverOptions,
) -> Result<ConicSolution, ConicError> {
    problem.validate()?;
    if !(options.tol > 0.0 && options.tol <= 1e-2) {
        return Err(ConicError::InvalidTolerance(options.tol));
    }
    let ps = presolve(problem, 1e-10);
    if ps.inconsistent {
        let d = problem.dim();
        let m = problem.n_eq();
        return Ok(ConicSolution {
            x: RVec::zeros(d),
            y: RVec::zeros(m),
            z: RVec::zeros(d),
            status: SolveStatus::Infeasible,
            infeasibility: Some(InfeasKind::Primal),
            objective: 0.0,
            dual_objective: 0.0,
            duality_gap: 0.0,
            residual_primal: f64::INFINITY,
            residual_dual: f64::INFINITY,
            iterations: 0,
            trace: Vec::new(),
        });
    }

    let sys = ConeSystem::new(&problem.cones);
    let core = solve_core(&sys, &ps.a, &ps.b, &ps.c, options);

    // Map the presolved solution back to the original row set and scales.
    let d = problem.dim();
    let m = problem.n_eq();
    let mut y = RVec::zeros(m);
    for (k, &i) in ps.kept.iter().enumerate() {
        y[i] = ps.obj_scale * core.state.y[k] / ps.row_scale[k];
    }
    let tau = core.state.tau;
    let x = RVec::from_fn(d, |i, _| core.state.x[i] / tau);
    let z = RVec::from_fn(d, |i, _| ps.obj_scale * core.state.z[i] / tau);
    let y = y / tau;

    // Residuals and objectives reported against the original data.
    let pobj = problem.c.dot(&x);
    let dobj = problem.b.dot(&y);
    let pres_v = &problem.a * &x - &problem.b;
    let dres_v = problem.a.transpose() * &y + &z - &problem.c;
    let gap = x.dot(&z);

    Ok(ConicSolution {
        x,
        y,
        z,
        status: core.status,
        infeasibility: core.infeasibility,
        objective: pobj,
        dual_objective: dobj,
        duality_gap: gap,
        residual_primal: pres_v.norm() / (1.0 + problem.b.norm()),
        residual_dual: dres_v.norm() / (1.0 + problem.c.norm()),
        iterations: core.iterations,
        trace: core.trace,
    })
}

struct CoreResult {
    state: State,
    status: SolveStatus,
    infeasibility: Option<InfeasKind>,
    iterations: usize,
    trace: Vec<IterStat>,
}

fn solve_core(
    sys: &ConeSystem,
    a: &RMat,
    b: &RVec,
    c: &RVec,
    options: &SolverOptions,
) -> CoreResult {
    let d = sys.dim;
    let m = b.len();
    let tol = options.tol;
    let bnorm = b.norm();
    let cnorm = c.norm();
    let av = a;

    let e = sys.identity();
    let mut st = State {
        x: e.clone(),
        y: vec![0.0; m],
        z: e.clone(),
        tau: 1.0,
        kappa: 1.0,
    };
    let degree = sys.degree as f64 + 1.0;

    let mut best: Option<(f64, State)> = None;
    let mut trace = Vec::new();
    let mut status = SolveStatus::MaxIterations;
    let mut infeasibility = None;
    let mut iterations = 0;
    let mut tiny_steps = 0usize;

    let cs: Vec<f64> = c.iter().copied().collect();
    let bs: Vec<f64> = b.iter().copied().collect();

    for iter in 0..options.max_iters {
        iterations = iter;
        // residuals of the homogeneous system
        let ax = mat_vec(av, &st.x);
        let aty = mat_t_vec(av, &st.y);
        let r_y: Vec<f64> = (0..m).map(|i| ax[i] - bs[i] * st.tau).collect();
        let r_x: Vec<f64> = (0..d)
            .map(|i| aty[i] + st.z[i] - cs[i] * st.tau)
            .collect();
        let ctx = dot(&cs, &st.x);
        let bty = dot(&bs, &st.y);
        let r_tau = ctx - bty + st.kappa;
        let gap_xz = dot(&st.x, &st.z);
        let mu = (gap_xz + st.tau * st.kappa) / degree;

        // scaled-point convergence metrics
        let pobj = ctx / st.tau;
        let dobj = bty / st.tau;
        let pres = norm(&r_y) / st.tau / (1.0 + bnorm);
        let dres = norm(&r_x) / st.tau / (1.0 + cnorm);
        let gap_c = gap_xz / (st.tau * st.tau);
        let relgap = gap_c / (1.0 + pobj.abs().max(dobj.abs()));
        let objgap = (pobj - dobj).abs() / (1.0 + pobj.abs().max(dobj.abs()));

        if options.collect_trace {
            let slack = (dot(&st.x, &r_x) - dot(&st.y, &r_y)) / (st.tau * st.tau);
            trace.push(IterStat {
                iter,
                pobj,
                dobj,
                pres,
                dres,
                relgap,
                gap: gap_c,
                duality_slack: slack,
                mu,
                tau: st.tau,
                kappa: st.kappa,
                step: 0.0,
            });
        }

        let score = pres.max(dres).max(relgap);
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((
                score,
                State {
                    x: st.x.clone(),
                    y: st.y.clone(),
                    z: st.z.clone(),
                    tau: st.tau,
                    kappa: st.kappa,
                },
            ));
        }

        if pres <= tol && dres <= tol && (relgap <= tol || objgap <= tol) {
            status = SolveStatus::Optimal;
            break;
        }

        // infeasibility certificates (scale-free in (y, z) resp. x)
        let tau_vanishing = st.tau <= 1e-6 * st.kappa.max(1e-12) || st.tau <= 1e-9;
        if bty > 0.0 && tau_vanishing {
            let cert = (0..d)
                .map(|i| (aty[i] + st.z[i]) / bty)
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            if cert <= 1e-7 * (1.0 + cnorm) {
                status = SolveStatus::Infeasible;
                infeasibility = Some(InfeasKind::Primal);
                break;
            }
        }
        if ctx < 0.0 && tau_vanishing {
            let cert = norm(&ax) / (-ctx);
            if cert <= 1e-7 * (1.0 + bnorm) {
                status = SolveStatus::Infeasible;
                infeasibility = Some(InfeasKind::Dual);
                break;
            }
        }

        let scal = match sys.scaling(&st.x, &st.z) {
            Some(s) => s,
            None => break, // iterate left the interior numerically
        };

        // Schur complement M = A G^{-1} A' and the dtau column solve.
        let kkt = match KktFactors::new(sys, &scal, av, &cs) {
            Some(k) => k,
            None => break,
        };

        // predictor (affine) direction: full residuals, target 0
        let mut d_lambda = vec![0.0; d];
        sys.jordan_mul(&scal.lambda, &scal.lambda, &mut d_lambda);
        for v in d_lambda.iter_mut() {
            *v = -*v;
        }
        let d_taukappa = -st.tau * st.kappa;
        let aff = match kkt.solve(sys, &scal, &st, av, &bs, &cs, &r_x, &r_y, r_tau, 1.0, &d_lambda, d_taukappa) {
            Some(dir) => dir,
            None => break,
        };

        let alpha_aff = step_length(sys, &st, &aff, 1.0);
        let mu_aff = {
            let xa: Vec<f64> = st
                .x
                .iter()
                .zip(aff.dx.iter())
                .map(|(v, dv)| v + alpha_aff * dv)
                .collect();
            let za: Vec<f64> = st
                .z
                .iter()
                .zip(aff.dz.iter())
                .map(|(v, dv)| v + alpha_aff * dv)
                .collect();
            let ta = st.tau + alpha_aff * aff.dtau;
            let ka = st.kappa + alpha_aff * aff.dkappa;
            (dot(&xa, &za) + ta * ka) / degree
        };
        let sigma = {
            let base = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
            // over-centered iterates (complementarity far below the equality
            // residuals) wreck the scaled-system conditioning; while the
            // residuals are still above tolerance, boost the centering
            // weight so feasibility catches up first
            let feas = pres.max(dres);
            if feas > tol && gap_c < 0.5 * feas {
                base.max(0.9)
            } else {
                base
            }
        };

        // combined direction with Mehrotra correction
        let mut corr = vec![0.0; d];
        {
            let mut u = vec![0.0; d];
            let mut v = vec![0.0; d];
            sys.apply_wtinv(&scal, &aff.dx, &mut u);
            sys.apply_w(&scal, &aff.dz, &mut v);
            sys.jordan_mul(&u, &v, &mut corr);
        }
        let mut d_lambda2 = vec![0.0; d];
        sys.jordan_mul(&scal.lambda, &scal.lambda, &mut d_lambda2);
        let id = sys.identity();
        for i in 0..d {
            d_lambda2[i] = -d_lambda2[i] + sigma * mu * id[i] - corr[i];
        }
        let d_tk2 = -st.tau * st.kappa + sigma * mu - aff.dtau * aff.dkappa;
        // full feasibility weighting: the textbook (1 - sigma) factor lets
        // high-sigma steps chase complementarity while the equality
        // residuals stall, which shows up as a dual-residual floor on SDPs
        let wr = 1.0;

        let mut dir = kkt.solve(sys, &scal, &st, av, &bs, &cs, &r_x, &r_y, r_tau, wr, &d_lambda2, d_tk2);
        let finite = dir.as_ref().is_some_and(|dd| {
            dd.dx.iter().all(|v| v.is_finite())
                && dd.dz.iter().all(|v| v.is_finite())
                && dd.dy.iter().all(|v| v.is_finite())
                && dd.dtau.is_finite()
                && dd.dkappa.is_finite()
        });
        if !finite {
            // short-step fallback: pure centering, no corrector
            let sigma_fb = 0.8;
            let mut dl = vec![0.0; d];
            sys.jordan_mul(&scal.lambda, &scal.lambda, &mut dl);
            for i in 0..d {
                dl[i] = -dl[i] + sigma_fb * mu * id[i];
            }
            let dtk = -st.tau * st.kappa + sigma_fb * mu;
            dir = kkt.solve(
                sys,
                &scal,
                &st,
                av,
                &bs,
                &cs,
                &r_x,
                &r_y,
                r_tau,
                1.0 - sigma_fb,
                &dl,
                dtk,
            );
        }
        let dir = match dir {
            Some(dd) => dd,
            None => break,
        };

        let alpha = 0.99 * step_length(sys, &st, &dir, f64::INFINITY);
        let alpha = alpha.min(1.0);
        if alpha <= 1e-7 {
            tiny_steps += 1;
            if alpha <= 1e-11 || tiny_steps >= 3 {
                break; // numerically exhausted; return the best iterate
            }
        } else {
            tiny_steps = 0;
        }
        for i in 0..d {
            st.x[i] += alpha * dir.dx[i];
            st.z[i] += alpha * dir.dz[i];
        }
        for i in 0..m {
            st.y[i] += alpha * dir.dy[i];
        }
        st.tau += alpha * dir.dtau;
        st.kappa += alpha * dir.dkappa;
        // the embedding is homogeneous: renormalizing the whole iterate to
        // tau = 1 is exact and keeps the tau/kappa block well conditioned
        if st.tau > 0.0 && st.tau.is_finite() {
            let s = 1.0 / st.tau;
            for v in st.x.iter_mut().chain(st.z.iter_mut()).chain(st.y.iter_mut()) {
                *v *= s;
            }
            st.kappa *= s;
            st.tau = 1.0;
        }
        if let Some(last) = trace.last_mut() {
            last.step = alpha;
        }
    }

    let final_state = if status == SolveStatus::MaxIterations {
        best.map(|(_, s)| s).unwrap_or(st)
    } else {
        st
    };
    CoreResult {
        state: final_state,
        status,
        infeasibility,
        iterations: iterations + 1,
        trace,
    }
}

fn mat_vec(a: &RMat, x: &[f64]) -> Vec<f64> {
    let m = a.nrows();
    let n = a.ncols();
    let mut out = vec![0.0; m];
    for i in 0..m {
        let mut s = 0.0;
        for j in 0..n {
            s += a[(i, j)] * x[j];
        }
        out[i] = s;
    }
    out
}

fn mat_t_vec(a: &RMat, y: &[f64]) -> Vec<f64> {
    let m = a.nrows();
    let n = a.ncols();
    let mut out = vec![0.0; n];
    for i in 0..m {
        let yi = y[i];
        if yi == 0.0 {
            continue;
        }
        for j in 0..n {
            out[j] += a[(i, j)] * yi;
        }
    }
    out
}

fn step_length(sys: &ConeSystem, st: &State, dir: &Direction, cap: f64) -> f64 {
    let mut alpha = sys
        .max_step(&st.x, &dir.dx)
        .min(sys.max_step(&st.z, &dir.dz));
    if dir.dtau < 0.0 {
        alpha = alpha.min(-st.tau / dir.dtau);
    }
    if dir.dkappa < 0.0 {
        alpha = alpha.min(-st.kappa / dir.dkappa);
    }
    alpha.min(cap)
}

/// Factored KKT data reused by the predictor and corrector solves of one
/// iteration: the Schur complement `M = A G^{-1} A'` and the `dtau` column.
struct KktFactors {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    /// Unregularized Schur complement, for iterative refinement.
    mmat: DMatrix<f64>,
    ginv_c: Vec<f64>,
    m_dim: usize,
}

impl KktFactors {
    fn new(sys: &ConeSystem, scal: &Scaling, a: &RMat, c: &[f64]) -> Option<Self> {
        let m = a.nrows();
        let d = a.ncols();
        // columns of G^{-1} A'
        let mut ginv_at = RMat::zeros(d, m);
        let mut col = vec![0.0; d];
        let mut out = vec![0.0; d];
        for i in 0..m {
            for j in 0..d {
                col[j] = a[(i, j)];
            }
            sys.apply_ginv(scal, &col, &mut out);
            for j in 0..d {
                ginv_at[(j, i)] = out[j];
            }
        }
        let mut mmat = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            for k in 0..m {
                let mut s = 0.0;
                for j in 0..d {
                    s += a[(i, j)] * ginv_at[(j, k)];
                }
                mmat[(i, k)] = s;
            }
        }
        // symmetrize against roundoff
        for i in 0..m {
            for k in (i + 1)..m {
                let v = 0.5 * (mmat[(i, k)] + mmat[(k, i)]);
                mmat[(i, k)] = v;
                mmat[(k, i)] = v;
            }
        }
        let mut reg = 0.0;
        let base = (0..m).map(|i| mmat[(i, i)]).fold(0.0f64, f64::max);
        let chol = loop {
            let mut trial = mmat.clone();
            if reg > 0.0 {
                for i in 0..m {
                    trial[(i, i)] += reg;
                }
            }
            match nalgebra::Cholesky::new(trial) {
                Some(ch) => break ch,
                None => {
                    reg = if reg == 0.0 {
                        (base * 1e-14).max(1e-300)
                    } else {
                        reg * 100.0
                    };
                    if reg > base.max(1.0) * 1e-6 {
                        return None;
                    }
                }
            }
        };

        let mut ginv_c = vec![0.0; d];
        sys.apply_ginv(scal, c, &mut ginv_c);
        Some(KktFactors {
            chol,
            mmat,
            ginv_c,
            m_dim: m,
        })
    }

    /// Cholesky solve with iterative refinement against the unregularized
    /// Schur complement, stopping when the residual stagnates or diverges.
    fn solve_refined(&self, rhs: &RVec) -> Vec<f64> {
        let mut y = self.chol.solve(rhs);
        let mut best = y.clone();
        let mut best_res = (rhs - &self.mmat * &y).norm();
        for _ in 0..6 {
            let resid = rhs - &self.mmat * &y;
            let rn = resid.norm();
            if rn <= 1e-15 * (1.0 + rhs.norm()) {
                break;
            }
            let corr = self.chol.solve(&resid);
            y += corr;
            let rn_new = (rhs - &self.mmat * &y).norm();
            if rn_new < best_res {
                best_res = rn_new;
                best = y.clone();
            }
            if rn_new >= 0.5 * rn {
                break;
            }
        }
        best.iter().copied().collect()
    }

    /// Solves the Newton system
    ///
    /// ```text
    /// A dx - b dtau                  = -ry_eff
    /// A'dy + dz - c dtau             = -rx_eff
    /// c'dx - b'dy + dkappa           = -rt_eff
    /// W^{-T} dx + W dz               = dvec
    /// tau dkappa + kappa dtau        = dtk
    /// ```
    #[allow(clippy::too_many_arguments)]
    fn solve_raw(
        &self,
        sys: &ConeSystem,
        scal: &Scaling,
        st: &State,
        a: &RMat,
        b: &[f64],
        c: &[f64],
        rx_eff: &[f64],
        ry_eff: &[f64],
        rt_eff: f64,
        dvec: &[f64],
        dtk: f64,
    ) -> Option<Direction> {
        let d = sys.dim;
        let m = self.m_dim;

        // dtau column: (x1, y1)
        let (x1, y1) = {
            let agc = mat_vec(a, &self.ginv_c);
            let rhs1 = RVec::from_fn(m, |i, _| agc[i] + b[i]);
            let y1 = self.solve_refined(&rhs1);
            let aty1 = mat_t_vec(a, &y1);
            let mut arg = vec![0.0; d];
            for i in 0..d {
                arg[i] = aty1[i] - c[i];
            }
            let mut x1 = vec![0.0; d];
            sys.apply_ginv(scal, &arg, &mut x1);
            (x1, y1)
        };

        // u = W^{-1} dvec + rx_eff
        let mut winv_d = vec![0.0; d];
        sys.apply_winv(scal, dvec, &mut winv_d);
        let u: Vec<f64> = (0..d).map(|i| winv_d[i] + rx_eff[i]).collect();

        let mut ginv_u = vec![0.0; d];
        sys.apply_ginv(scal, &u, &mut ginv_u);
        let agu = mat_vec(a, &ginv_u);

        let rhs2 = RVec::from_fn(m, |i, _| -agu[i] - ry_eff[i]);
        let y2 = self.solve_refined(&rhs2);
        let aty2 = mat_t_vec(a, &y2);
        let mut arg2 = vec![0.0; d];
        for i in 0..d {
            arg2[i] = aty2[i] + u[i];
        }
        let mut x2 = vec![0.0; d];
        sys.apply_ginv(scal, &arg2, &mut x2);

        let denom = dot(c, &x1) - dot(b, &y1) - st.kappa / st.tau;
        if denom.abs() < 1e-300 {
            return None;
        }
        let num = -rt_eff - dot(c, &x2) + dot(b, &y2) - dtk / st.tau;
        let dtau = num / denom;

        let dx: Vec<f64> = (0..d).map(|i| x1[i] * dtau + x2[i]).collect();
        let dy: Vec<f64> = (0..m).map(|i| y1[i] * dtau + y2[i]).collect();
        // dz = W^{-1} dvec - G dx, with G = W^{-1} W^{-T}
        let mut wtinv_dx = vec![0.0; d];
        sys.apply_wtinv(scal, &dx, &mut wtinv_dx);
        let mut g_dx = vec![0.0; d];
        sys.apply_winv(scal, &wtinv_dx, &mut g_dx);
        let dz: Vec<f64> = (0..d).map(|i| winv_d[i] - g_dx[i]).collect();
        let dkappa = (dtk - st.kappa * dtau) / st.tau;

        Some(Direction {
            dx,
            dy,
            dz,
            dtau,
            dkappa,
        })
    }

    /// Newton solve with one refinement round against the full KKT system;
    /// the scaled operators lose accuracy near convergence, and refinement
    /// restores the equality residuals of the direction.
    #[allow(clippy::too_many_arguments)]
    fn solve(
        &self,
        sys: &ConeSystem,
        scal: &Scaling,
        st: &State,
        a: &RMat,
        b: &[f64],
        c: &[f64],
        r_x: &[f64],
        r_y: &[f64],
        r_tau: f64,
        wr: f64,
        d_lambda: &[f64],
        d_taukappa: f64,
    ) -> Option<Direction> {
        let d = sys.dim;
        let m = self.m_dim;
        let mut lam_div = vec![0.0; d];
        if !sys.jordan_div_lambda(scal, d_lambda, &mut lam_div) {
            return None;
        }
        let rx_eff: Vec<f64> = r_x.iter().map(|v| wr * v).collect();
        let ry_eff: Vec<f64> = r_y.iter().map(|v| wr * v).collect();
        let rt_eff = wr * r_tau;
        let mut dir = self.solve_raw(
            sys, scal, st, a, b, c, &rx_eff, &ry_eff, rt_eff, &lam_div, d_taukappa,
        )?;

        let mut prev_err = f64::INFINITY;
        for _ in 0..6 {
            // residuals of the five Newton equations at the current direction
            let adx = mat_vec(a, &dir.dx);
            let atdy = mat_t_vec(a, &dir.dy);
            let rho_y: Vec<f64> = (0..m)
                .map(|i| -ry_eff[i] - (adx[i] - b[i] * dir.dtau))
                .collect();
            let rho_x: Vec<f64> = (0..d)
                .map(|i| -rx_eff[i] - (atdy[i] + dir.dz[i] - c[i] * dir.dtau))
                .collect();
            let rho_t = -rt_eff - (dot(c, &dir.dx) - dot(b, &dir.dy) + dir.dkappa);
            let mut wtinv_dx = vec![0.0; d];
            sys.apply_wtinv(scal, &dir.dx, &mut wtinv_dx);
            let mut w_dz = vec![0.0; d];
            sys.apply_w(scal, &dir.dz, &mut w_dz);
            let rho_v: Vec<f64> = (0..d)
                .map(|i| lam_div[i] - (wtinv_dx[i] + w_dz[i]))
                .collect();
            let rho_tk = d_taukappa - (st.tau * dir.dkappa + st.kappa * dir.dtau);

            let err = norm(&rho_x).max(norm(&rho_y)).max(rho_t.abs());
            if err <= 1e-13 * (1.0 + norm(&dir.dx)) || err >= 0.5 * prev_err {
                break;
            }
            prev_err = err;
            let neg_rx: Vec<f64> = rho_x.iter().map(|v| -v).collect();
            let neg_ry: Vec<f64> = rho_y.iter().map(|v| -v).collect();
            let corr = self.solve_raw(
                sys, scal, st, a, b, c, &neg_rx, &neg_ry, -rho_t, &rho_v, rho_tk,
            )?;
            for i in 0..d {
                dir.dx[i] += corr.dx[i];
                dir.dz[i] += corr.dz[i];
            }
            for i in 0..m {
                dir.dy[i] += corr.dy[i];
            }
            dir.dtau += corr.dtau;
            dir.dkappa += corr.dkappa;
        }
        Some(dir)
    }
}
